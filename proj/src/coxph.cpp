#include "survfuse/coxph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "survfuse/errors.hpp"

namespace survfuse {

namespace {

int check_cohort(const std::vector<SurvivalRecord>& records, std::size_t dim) {
    int events = 0;
    for (const auto& r : records) {
        if (r.covariates.size() != dim) {
            throw DataError("covariate dimension mismatch: expected " + std::to_string(dim) +
                            ", got " + std::to_string(r.covariates.size()));
        }
        if (r.event) ++events;
    }
    return events;
}

// indices sorted by time descending, so a single sweep grows the risk set
std::vector<std::size_t> order_desc(const std::vector<SurvivalRecord>& records) {
    std::vector<std::size_t> idx(records.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return records[a].time > records[b].time;
    });
    return idx;
}

}  // namespace

CoxLikelihood neg_log_partial_likelihood(const std::vector<double>& beta,
                                         const std::vector<SurvivalRecord>& records) {
    const std::size_t d = beta.size();
    if (records.empty()) throw DataError("cox likelihood: empty cohort");
    int events = check_cohort(records, d);
    if (events == 0) throw DataError("cox likelihood: cohort has no events");

    std::vector<double> eta(records.size());
    double eta_max = -1e300;
    for (std::size_t i = 0; i < records.size(); ++i) {
        double e = 0.0;
        for (std::size_t k = 0; k < d; ++k) e += beta[k] * records[i].covariates[k];
        eta[i] = e;
        eta_max = std::max(eta_max, e);
    }

    // accumulate S0 = sum w, S1 = sum w x, S2 = sum w x x^T over the risk set,
    // with w = exp(eta - eta_max) for overflow safety
    CoxLikelihood out;
    out.gradient.assign(d, 0.0);
    out.hessian.assign(d * d, 0.0);

    double s0 = 0.0;
    std::vector<double> s1(d, 0.0);
    std::vector<double> s2(d * d, 0.0);

    auto idx = order_desc(records);
    std::size_t pos = 0;
    while (pos < idx.size()) {
        // all subjects tied at this time enter the risk set first (T_j >= t)
        double t = records[idx[pos]].time;
        std::size_t group_start = pos;
        while (pos < idx.size() && records[idx[pos]].time == t) {
            const auto& r = records[idx[pos]];
            double w = std::exp(eta[idx[pos]] - eta_max);
            s0 += w;
            for (std::size_t a = 0; a < d; ++a) {
                s1[a] += w * r.covariates[a];
                for (std::size_t b = 0; b < d; ++b) {
                    s2[a * d + b] += w * r.covariates[a] * r.covariates[b];
                }
            }
            ++pos;
        }
        // Breslow: every event tied at t sees the full risk set
        for (std::size_t q = group_start; q < pos; ++q) {
            const auto& r = records[idx[q]];
            if (!r.event) continue;
            out.value += -(eta[idx[q]] - eta_max) + std::log(s0);
            for (std::size_t a = 0; a < d; ++a) {
                double mean_a = s1[a] / s0;
                out.gradient[a] += -r.covariates[a] + mean_a;
                for (std::size_t b = 0; b < d; ++b) {
                    out.hessian[a * d + b] += s2[a * d + b] / s0 - mean_a * (s1[b] / s0);
                }
            }
        }
    }
    return out;
}

double CoxModel::cumhaz_at(double t) const {
    double h = 0.0;
    for (std::size_t i = 0; i < baseline_times.size(); ++i) {
        if (baseline_times[i] <= t) h = baseline_cumhaz[i];
        else break;
    }
    return h;
}

double CoxModel::baseline_survival(double t) const { return std::exp(-cumhaz_at(t)); }

namespace {

void breslow_baseline(CoxModel& model, const std::vector<SurvivalRecord>& records) {
    const std::size_t d = model.beta.size();
    std::vector<double> w(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        double e = 0.0;
        for (std::size_t k = 0; k < d; ++k) e += model.beta[k] * records[i].covariates[k];
        w[i] = std::exp(e);
    }

    auto idx = order_desc(records);
    double s0 = 0.0;
    std::vector<std::pair<double, double>> steps;  // (time, dH) newest-first
    std::size_t pos = 0;
    while (pos < idx.size()) {
        double t = records[idx[pos]].time;
        int d_events = 0;
        while (pos < idx.size() && records[idx[pos]].time == t) {
            s0 += w[idx[pos]];
            if (records[idx[pos]].event) ++d_events;
            ++pos;
        }
        if (d_events > 0) steps.push_back({t, d_events / s0});
    }
    std::reverse(steps.begin(), steps.end());
    double h = 0.0;
    for (const auto& [t, dh] : steps) {
        h += dh;
        model.baseline_times.push_back(t);
        model.baseline_cumhaz.push_back(h);
    }
}

std::string trace_to_string(const std::vector<double>& trace) {
    std::ostringstream os;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        os << (i ? ", " : "") << "it" << i + 1 << "=" << trace[i];
    }
    return os.str();
}

}  // namespace

CoxModel fit_cox(const std::vector<SurvivalRecord>& records, const CoxFitConfig& config) {
    if (records.empty()) throw DataError("fit_cox: empty cohort");
    const std::size_t d = records[0].covariates.size();
    if (d == 0) throw DataError("fit_cox: no covariates");
    int events = check_cohort(records, d);
    if (events < 2) throw DataError("fit_cox: need at least 2 events");

    for (std::size_t k = 0; k < d; ++k) {
        double v0 = records[0].covariates[k];
        bool constant = true;
        for (const auto& r : records) {
            if (r.covariates[k] != v0) { constant = false; break; }
        }
        if (constant) {
            throw DataError("fit_cox: feature " + std::to_string(k) + " is constant");
        }
    }

    CoxModel model;
    model.beta.assign(d, 0.0);

    auto penalized = [&](const std::vector<double>& beta) {
        CoxLikelihood l = neg_log_partial_likelihood(beta, records);
        if (config.ridge > 0.0) {
            for (std::size_t k = 0; k < d; ++k) {
                l.value += 0.5 * config.ridge * beta[k] * beta[k];
                l.gradient[k] += config.ridge * beta[k];
                l.hessian[k * d + k] += config.ridge;
            }
        }
        return l;
    };

    CoxLikelihood cur = penalized(model.beta);
    for (int it = 1; it <= config.max_iter; ++it) {
        double gnorm = 0.0;
        for (double g : cur.gradient) gnorm = std::max(gnorm, std::fabs(g));
        model.report.grad_norm_trace.push_back(gnorm);
        model.report.iterations = it - 1;
        model.report.final_grad_norm = gnorm;
        if (gnorm < config.tol) {
            model.report.converged = true;
            break;
        }

        Eigen::MatrixXd H(d, d);
        Eigen::VectorXd g(d);
        for (std::size_t a = 0; a < d; ++a) {
            g(a) = cur.gradient[a];
            for (std::size_t b = 0; b < d; ++b) H(a, b) = cur.hessian[a * d + b];
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        Eigen::VectorXd delta;
        bool bad = ldlt.info() != Eigen::Success;
        if (!bad) {
            delta = ldlt.solve(-g);
            bad = !delta.allFinite();
        }
        if (bad) {
            throw ConvergenceError(
                "fit_cox: singular Hessian at iteration " + std::to_string(it) +
                "; consider a small ridge (config.ridge > 0). trace: " +
                trace_to_string(model.report.grad_norm_trace));
        }

        double step = 1.0;
        std::vector<double> candidate(d);
        CoxLikelihood next;
        bool improved = false;
        for (int half = 0; half < 40; ++half) {
            for (std::size_t k = 0; k < d; ++k) candidate[k] = model.beta[k] + step * delta(k);
            double bmax = 0.0;
            for (double b : candidate) bmax = std::max(bmax, std::fabs(b));
            if (bmax < 50.0) {
                next = penalized(candidate);
                if (std::isfinite(next.value) && next.value <= cur.value + 1e-12) {
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!improved) {
            throw ConvergenceError(
                "fit_cox: no improving step at iteration " + std::to_string(it) +
                " (monotone likelihood / separation suspected; add ridge). trace: " +
                trace_to_string(model.report.grad_norm_trace));
        }
        model.beta = candidate;
        cur = next;
    }
    if (!model.report.converged) {
        throw ConvergenceError("fit_cox: not converged after " + std::to_string(config.max_iter) +
                               " iterations. trace: " + trace_to_string(model.report.grad_norm_trace));
    }

    breslow_baseline(model, records);
    model.fitted = true;
    return model;
}

std::vector<RiskScore> cox_predict_risk(const CoxModel& model,
                                        const std::vector<SurvivalRecord>& records) {
    if (!model.fitted) throw ConfigError("cox_predict_risk: model is not fitted");
    std::vector<RiskScore> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        if (r.covariates.size() != model.beta.size()) {
            throw DataError("cox_predict_risk: dimension mismatch for patient '" + r.patient_id + "'");
        }
        double e = 0.0;
        for (std::size_t k = 0; k < model.beta.size(); ++k) e += model.beta[k] * r.covariates[k];
        out.push_back({r.patient_id, e});
    }
    return out;
}

std::vector<SurvivalCurve> partial_effect_curves(const CoxModel& model,
                                                 const std::vector<SurvivalRecord>& records,
                                                 const std::string& covariate,
                                                 const std::vector<double>& values) {
    if (!model.fitted) throw ConfigError("partial_effect_curves: model is not fitted");
    const std::size_t d = model.beta.size();

    int cov_ix = -1;
    for (std::size_t k = 0; k < d; ++k) {
        std::string name = k < model.feature_names.size() ? model.feature_names[k]
                                                          : "f" + std::to_string(k);
        if (name == covariate) { cov_ix = static_cast<int>(k); break; }
    }
    if (cov_ix < 0) throw ConfigError("partial_effect_curves: unknown covariate '" + covariate + "'");

    check_cohort(records, d);
    std::vector<double> mean(d, 0.0);
    for (const auto& r : records) {
        for (std::size_t k = 0; k < d; ++k) mean[k] += r.covariates[k];
    }
    for (double& v : mean) v /= records.size();

    std::vector<SurvivalCurve> curves;
    for (double v : values) {
        double shift = model.beta[cov_ix] * (v - mean[cov_ix]);
        double scale = std::exp(shift);
        SurvivalCurve c;
        c.times.push_back(0.0);
        c.probabilities.push_back(1.0);
        for (std::size_t i = 0; i < model.baseline_times.size(); ++i) {
            c.times.push_back(model.baseline_times[i]);
            c.probabilities.push_back(std::exp(-model.baseline_cumhaz[i] * scale));
        }
        curves.push_back(std::move(c));
    }
    return curves;
}

std::string cox_model_to_json(const CoxModel& model, const std::string& encoding_json) {
    nlohmann::json j;
    j["model"] = "cox";
    j["beta"] = nlohmann::json::object();
    for (std::size_t k = 0; k < model.beta.size(); ++k) {
        std::string name = k < model.feature_names.size() ? model.feature_names[k]
                                                          : "f" + std::to_string(k);
        j["beta"][name] = model.beta[k];
    }
    j["feature_order"] = model.feature_names.empty()
                             ? [&] {
                                   std::vector<std::string> v;
                                   for (std::size_t k = 0; k < model.beta.size(); ++k)
                                       v.push_back("f" + std::to_string(k));
                                   return v;
                               }()
                             : model.feature_names;
    j["baseline"] = nlohmann::json::array();
    for (std::size_t i = 0; i < model.baseline_times.size(); ++i) {
        j["baseline"].push_back({model.baseline_times[i], model.baseline_cumhaz[i]});
    }
    j["converged"] = model.report.converged;
    j["iterations"] = model.report.iterations;
    j["final_grad_norm"] = model.report.final_grad_norm;
    if (!encoding_json.empty()) j["encoding"] = nlohmann::json::parse(encoding_json);
    return j.dump(2);
}

CoxModel cox_model_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.value("model", "") != "cox") throw ConfigError("model JSON is not a cox model");
    CoxModel model;
    model.feature_names = j.at("feature_order").get<std::vector<std::string>>();
    for (const auto& name : model.feature_names) {
        model.beta.push_back(j.at("beta").at(name).get<double>());
    }
    for (const auto& step : j.at("baseline")) {
        model.baseline_times.push_back(step.at(0).get<double>());
        model.baseline_cumhaz.push_back(step.at(1).get<double>());
    }
    model.report.converged = j.value("converged", true);
    model.report.iterations = j.value("iterations", 0);
    model.report.final_grad_norm = j.value("final_grad_norm", 0.0);
    model.fitted = true;
    return model;
}

}  // namespace survfuse

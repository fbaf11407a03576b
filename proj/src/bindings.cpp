#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <vector>

#include "survfuse/coxph.hpp"
#include "survfuse/ensemble.hpp"
#include "survfuse/errors.hpp"
#include "survfuse/mtlr.hpp"
#include "survfuse/survival.hpp"
#include "survfuse/synthetic.hpp"

namespace py = pybind11;
using namespace survfuse;

namespace {

std::vector<SurvivalRecord> make_records(const std::vector<std::vector<double>>& x,
                                         const std::vector<double>& times,
                                         const std::vector<int>& events) {
    if (times.size() != events.size() || (!x.empty() && x.size() != times.size()))
        throw DataError("x, times and events must have matching lengths");
    std::vector<SurvivalRecord> records(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        records[i].patient_id = "P" + std::to_string(i);
        if (!x.empty()) records[i].covariates = x[i];
        records[i].time = times[i];
        records[i].event = events[i] != 0;
    }
    return records;
}

std::vector<RiskScore> make_risks(const std::vector<double>& values) {
    std::vector<RiskScore> risks(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        risks[i].patient_id = "P" + std::to_string(i);
        risks[i].value = values[i];
    }
    return risks;
}

std::vector<double> risk_values(const std::vector<RiskScore>& risks) {
    std::vector<double> out(risks.size());
    for (std::size_t i = 0; i < risks.size(); ++i) out[i] = risks[i].value;
    return out;
}

RiskNormalization parse_normalization(const std::string& name) {
    if (name == "zscore") return RiskNormalization::ZScore;
    if (name == "rank") return RiskNormalization::Rank;
    if (name == "none") return RiskNormalization::None;
    throw ConfigError("normalization must be 'zscore', 'rank' or 'none'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "survival prognosis core: Cox PH, MTLR, concordance, ensembling";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);
    py::register_exception<EvalError>(m, "EvalError", PyExc_ValueError);

    m.def(
        "cindex",
        [](const std::vector<double>& risks, const std::vector<double>& times,
           const std::vector<int>& events) {
            return concordance_index(make_risks(risks), make_records({}, times, events));
        },
        py::arg("risks"), py::arg("times"), py::arg("events"),
        "Harrell's concordance index (ties credit 0.5).");

    m.def(
        "kaplan_meier",
        [](const std::vector<double>& times, const std::vector<int>& events) {
            SurvivalCurve c = kaplan_meier(make_records({}, times, events));
            return py::make_tuple(c.times, c.probabilities);
        },
        py::arg("times"), py::arg("events"), "Product-limit curve as (times, probabilities).");

    m.def(
        "time_grid",
        [](const std::vector<double>& times, const std::vector<int>& events, int m_points) {
            return make_time_grid(make_records({}, times, events), m_points).points;
        },
        py::arg("times"), py::arg("events"), py::arg("m") = 0,
        "Quantile-based MTLR time grid (m <= 0 selects ceil(sqrt(#events))).");

    m.def(
        "fit_cox",
        [](const std::vector<std::vector<double>>& x, const std::vector<double>& times,
           const std::vector<int>& events, double ridge, int max_iter, double tol) {
            CoxFitConfig cfg;
            cfg.ridge = ridge;
            cfg.max_iter = max_iter;
            cfg.tol = tol;
            return cox_model_to_json(fit_cox(make_records(x, times, events), cfg));
        },
        py::arg("x"), py::arg("times"), py::arg("events"), py::arg("ridge") = 0.0,
        py::arg("max_iter") = 100, py::arg("tol") = 1e-8,
        "Newton-Raphson Cox PH fit; returns the model as a JSON string.");

    m.def(
        "cox_risk",
        [](const std::string& model_json, const std::vector<std::vector<double>>& x) {
            CoxModel model = cox_model_from_json(model_json);
            std::vector<double> times(x.size(), 0.0);
            std::vector<int> events(x.size(), 0);
            return risk_values(cox_predict_risk(model, make_records(x, times, events)));
        },
        py::arg("model_json"), py::arg("x"), "Linear predictor per row of x.");

    m.def(
        "fit_mtlr",
        [](const std::vector<std::vector<double>>& x, const std::vector<double>& times,
           const std::vector<int>& events, int m_points, double c_reg, double lr, int epochs,
           int batch_size, std::uint64_t seed) {
            auto records = make_records(x, times, events);
            TimeGrid grid = make_time_grid(records, m_points);
            MtlrFitConfig cfg;
            cfg.c_reg = c_reg;
            cfg.lr = lr;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.seed = seed;
            MtlrFitResult fit = fit_mtlr(records, grid, cfg);
            return py::make_tuple(mtlr_model_to_json(fit.params), fit.loss_trace);
        },
        py::arg("x"), py::arg("times"), py::arg("events"), py::arg("m") = 0,
        py::arg("c_reg") = 1.0, py::arg("lr") = 0.016, py::arg("epochs") = 100,
        py::arg("batch_size") = 16, py::arg("seed") = 0,
        "Adam-trained MTLR; returns (model JSON, per-epoch loss trace).");

    m.def(
        "mtlr_risk",
        [](const std::string& model_json, const std::vector<std::vector<double>>& x) {
            MtlrParams params = mtlr_model_from_json(model_json);
            std::vector<double> out;
            for (const auto& row : x) out.push_back(mtlr_risk(params, row));
            return out;
        },
        py::arg("model_json"), py::arg("x"),
        "Cumulative incidence mass over the grid per row of x.");

    m.def(
        "mtlr_curve",
        [](const std::string& model_json, const std::vector<double>& x) {
            MtlrParams params = mtlr_model_from_json(model_json);
            SurvivalCurve c = mtlr_survival_curve(params, x);
            return py::make_tuple(c.times, c.probabilities);
        },
        py::arg("model_json"), py::arg("x"), "Predicted survival curve as (times, probabilities).");

    m.def(
        "average_risks",
        [](const std::vector<std::vector<double>>& members, const std::vector<double>& weights,
           const std::string& normalization) {
            std::vector<std::vector<RiskScore>> lists;
            for (const auto& v : members) lists.push_back(make_risks(v));
            EnsembleSpec spec;
            spec.weights = weights;
            spec.normalization = parse_normalization(normalization);
            return risk_values(average_risks(lists, spec));
        },
        py::arg("members"), py::arg("weights") = std::vector<double>{},
        py::arg("normalization") = "zscore",
        "Weighted mean of normalized member risks (aligned by position).");

    m.def(
        "simulate",
        [](int n, int d, const std::vector<double>& beta, double lambda, double c_max,
           std::uint64_t seed) {
            SyntheticSpec spec;
            spec.n = n;
            spec.d = d;
            spec.beta_true = beta;
            spec.lambda = lambda;
            spec.c_max = c_max;
            spec.seed = seed;
            spec.validate();
            SyntheticCohort cohort = generate_tabular(spec);
            std::vector<std::vector<double>> x;
            std::vector<double> times;
            std::vector<int> events;
            for (const auto& r : cohort.records) {
                x.push_back(r.covariates);
                times.push_back(r.time);
                events.push_back(r.event ? 1 : 0);
            }
            py::dict out;
            out["x"] = x;
            out["times"] = times;
            out["events"] = events;
            out["true_risk"] = cohort.true_risk;
            return out;
        },
        py::arg("n"), py::arg("d") = 3, py::arg("beta") = std::vector<double>{},
        py::arg("lambda_") = 0.1, py::arg("c_max") = 30.0, py::arg("seed") = 0,
        "Proportional-hazards synthetic cohort with exponential baseline.");

    m.attr("__version__") = "0.1.0";
}

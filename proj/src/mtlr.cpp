#include "survfuse/mtlr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "flat_adam.hpp"
#include "survfuse/errors.hpp"
#include "survfuse/rng.hpp"

namespace survfuse {

using detail::FlatAdam;

using nlohmann::json;

MtlrParams MtlrParams::zeros(const TimeGrid& grid, int dim, double c_reg) {
    grid.validate();
    if (dim <= 0) throw ConfigError("mtlr needs at least one feature");
    if (c_reg < 0.0) throw ConfigError("c_reg must be non-negative");
    MtlrParams p;
    p.grid = grid;
    p.theta.assign(static_cast<std::size_t>(grid.size()) * dim, 0.0);
    p.bias.assign(static_cast<std::size_t>(grid.size()), 0.0);
    p.c_reg = c_reg;
    return p;
}

LabelSequence LabelSequence::from_event_time(const TimeGrid& grid, double s) {
    LabelSequence seq;
    seq.m = grid.size();
    seq.k = 0;
    for (double t : grid.points)
        if (t < s) ++seq.k;
    return seq;
}

int censor_k_min(const TimeGrid& grid, double c) {
    int k = 0;
    for (double t : grid.points)
        if (t <= c) ++k;
    return k;
}

namespace {

void check_params(const MtlrParams& params) {
    params.grid.validate();
    const int m = params.m();
    if (m == 0) throw DataError("empty time grid");
    if (params.theta.size() % static_cast<std::size_t>(m) != 0 || params.theta.empty())
        throw DataError("theta size is not a multiple of the grid length");
    if (static_cast<int>(params.bias.size()) != m) throw DataError("bias length != grid length");
    for (double v : params.theta)
        if (!std::isfinite(v)) throw DataError("non-finite theta");
    for (double v : params.bias)
        if (!std::isfinite(v)) throw DataError("non-finite bias");
}

// per-grid-point scores theta_j . x + b_j
std::vector<double> point_scores(const MtlrParams& params, const std::vector<double>& x) {
    const int m = params.m(), d = params.dim();
    if (static_cast<int>(x.size()) != d) throw DataError("covariate dimension mismatch");
    std::vector<double> s(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
        const double* row = params.theta.data() + static_cast<std::size_t>(j) * d;
        double acc = params.bias[static_cast<std::size_t>(j)];
        for (int f = 0; f < d; ++f) acc += row[f] * x[static_cast<std::size_t>(f)];
        s[static_cast<std::size_t>(j)] = acc;
    }
    return s;
}

// f_k for k = 0..m, the suffix sums of the point scores
std::vector<double> suffix_scores(const std::vector<double>& s) {
    const int m = static_cast<int>(s.size());
    std::vector<double> f(static_cast<std::size_t>(m) + 1, 0.0);
    for (int k = m - 1; k >= 0; --k)
        f[static_cast<std::size_t>(k)] = f[static_cast<std::size_t>(k) + 1] + s[static_cast<std::size_t>(k)];
    return f;
}

double log_sum_exp(const std::vector<double>& f, int lo, int hi) {
    double mx = f[static_cast<std::size_t>(lo)];
    for (int k = lo + 1; k <= hi; ++k) mx = std::max(mx, f[static_cast<std::size_t>(k)]);
    double s = 0.0;
    for (int k = lo; k <= hi; ++k) s += std::exp(f[static_cast<std::size_t>(k)] - mx);
    return mx + std::log(s);
}

// softmax over f[lo..hi] normalized within that window
std::vector<double> window_softmax(const std::vector<double>& f, int lo, int hi) {
    const double lse = log_sum_exp(f, lo, hi);
    std::vector<double> p(f.size(), 0.0);
    for (int k = lo; k <= hi; ++k)
        p[static_cast<std::size_t>(k)] = std::exp(f[static_cast<std::size_t>(k)] - lse);
    return p;
}

}  // namespace

double sequence_score(const MtlrParams& params, const std::vector<double>& x, int k) {
    check_params(params);
    if (k < 0 || k > params.m()) throw DataError("sequence index out of range");
    const auto s = point_scores(params, x);
    double acc = 0.0;
    for (int j = k; j < params.m(); ++j) acc += s[static_cast<std::size_t>(j)];
    return acc;
}

MtlrLossResult mtlr_loss(const MtlrParams& params, const std::vector<SurvivalRecord>& records,
                         std::vector<double>* grad_x) {
    check_params(params);
    if (records.empty()) throw DataError("empty cohort");
    const int m = params.m(), d = params.dim();
    MtlrLossResult out;
    out.grad_theta.assign(params.theta.size(), 0.0);
    out.grad_bias.assign(params.bias.size(), 0.0);
    if (grad_x) grad_x->assign(records.size() * static_cast<std::size_t>(d), 0.0);

    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (!std::isfinite(rec.time)) throw DataError("non-finite time");
        for (double v : rec.covariates)
            if (!std::isfinite(v)) throw DataError("non-finite covariate");
        const auto s = point_scores(params, rec.covariates);
        const auto f = suffix_scores(s);
        int lo, hi;
        if (rec.event) {
            lo = hi = LabelSequence::from_event_time(params.grid, rec.time).k;
        } else {
            lo = censor_k_min(params.grid, rec.time);
            hi = m;
        }
        const double lse_all = log_sum_exp(f, 0, m);
        const double lse_set = log_sum_exp(f, lo, hi);
        out.value += lse_all - lse_set;

        // d loss / d s_j = prefix_{k<=j} softmax_all - prefix_{k<=j} softmax_set
        const auto p_all = window_softmax(f, 0, m);
        const auto p_set = window_softmax(f, lo, hi);
        double cum_all = 0.0, cum_set = 0.0;
        for (int j = 0; j < m; ++j) {
            cum_all += p_all[static_cast<std::size_t>(j)];
            cum_set += p_set[static_cast<std::size_t>(j)];
            const double du = cum_set - cum_all;  // d/ds_j of (lse_set - lse_all), negated below
            // loss contribution is lse_all - lse_set so flip sign
            const double g = -du;
            out.grad_bias[static_cast<std::size_t>(j)] += g;
            double* trow = out.grad_theta.data() + static_cast<std::size_t>(j) * d;
            for (int fidx = 0; fidx < d; ++fidx)
                trow[fidx] += g * rec.covariates[static_cast<std::size_t>(fidx)];
            if (grad_x) {
                double* xrow = grad_x->data() + i * static_cast<std::size_t>(d);
                const double* prow = params.theta.data() + static_cast<std::size_t>(j) * d;
                for (int fidx = 0; fidx < d; ++fidx) xrow[fidx] += g * prow[fidx];
            }
        }
    }

    if (params.c_reg > 0.0) {
        double sq = 0.0;
        for (std::size_t j = 0; j < params.theta.size(); ++j) {
            sq += params.theta[j] * params.theta[j];
            out.grad_theta[j] += params.c_reg * params.theta[j];
        }
        out.value += 0.5 * params.c_reg * sq;
    }
    return out;
}

SurvivalCurve mtlr_survival_curve(const MtlrParams& params, const std::vector<double>& x) {
    check_params(params);
    const int m = params.m();
    const auto f = suffix_scores(point_scores(params, x));
    const auto p = window_softmax(f, 0, m);
    SurvivalCurve curve;
    curve.times.push_back(0.0);
    curve.probabilities.push_back(1.0);
    // S(t_j) = P(k >= j), accumulated from the tail for stability
    std::vector<double> survival(static_cast<std::size_t>(m));
    double tail = 0.0;
    for (int j = m; j >= 1; --j) {
        tail += p[static_cast<std::size_t>(j)];
        survival[static_cast<std::size_t>(j) - 1] = tail;
    }
    for (int j = 0; j < m; ++j) {
        curve.times.push_back(params.grid.points[static_cast<std::size_t>(j)]);
        curve.probabilities.push_back(std::clamp(survival[static_cast<std::size_t>(j)], 0.0, 1.0));
    }
    return curve;
}

double mtlr_risk(const MtlrParams& params, const std::vector<double>& x) {
    const SurvivalCurve curve = mtlr_survival_curve(params, x);
    double risk = 0.0;
    for (std::size_t j = 1; j < curve.probabilities.size(); ++j)
        risk += 1.0 - curve.probabilities[j];
    return risk;
}

std::vector<RiskScore> mtlr_predict_risk(const MtlrParams& params,
                                         const std::vector<SurvivalRecord>& records) {
    std::vector<RiskScore> out;
    out.reserve(records.size());
    for (const auto& rec : records)
        out.push_back({rec.patient_id, mtlr_risk(params, rec.covariates)});
    return out;
}

namespace {

void check_fit_inputs(const std::vector<SurvivalRecord>& records, const TimeGrid& grid,
                      const MtlrFitConfig& config) {
    grid.validate();
    if (grid.size() == 0) throw DataError("empty time grid");
    if (records.empty()) throw DataError("empty cohort");
    const std::size_t d = records.front().covariates.size();
    if (d == 0) throw DataError("records carry no covariates");
    int events = 0;
    for (const auto& r : records) {
        if (r.covariates.size() != d) throw DataError("inconsistent covariate dimensions");
        if (r.event) ++events;
    }
    if (events == 0) throw DataError("no events in cohort");
    if (config.lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (config.epochs <= 0) throw ConfigError("epochs must be positive");
    if (config.c_reg < 0.0) throw ConfigError("c_reg must be non-negative");
}

bool params_finite(const MtlrParams& params) {
    for (double v : params.theta)
        if (!std::isfinite(v)) return false;
    for (double v : params.bias)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string trace_tail(const std::vector<double>& trace) {
    std::ostringstream os;
    const std::size_t start = trace.size() > 5 ? trace.size() - 5 : 0;
    for (std::size_t i = start; i < trace.size(); ++i) {
        if (i > start) os << ", ";
        os << trace[i];
    }
    return os.str();
}

}  // namespace

MtlrFitResult fit_mtlr(const std::vector<SurvivalRecord>& records, const TimeGrid& grid,
                       const MtlrFitConfig& config) {
    check_fit_inputs(records, grid, config);
    const int d = static_cast<int>(records.front().covariates.size());
    MtlrFitResult result;
    result.params = MtlrParams::zeros(grid, d, config.c_reg);
    MtlrParams& params = result.params;
    const std::size_t nparams = params.theta.size() + params.bias.size();
    FlatAdam adam(nparams, config.lr);
    const bool full_batch =
        config.batch_size <= 0 || config.batch_size >= static_cast<int>(records.size());
    Rng shuffler(mix_seed(config.seed, 0xB4CCULL));
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    auto apply = [&](const MtlrLossResult& loss) {
        std::vector<double> g;
        g.reserve(nparams);
        g.insert(g.end(), loss.grad_theta.begin(), loss.grad_theta.end());
        g.insert(g.end(), loss.grad_bias.begin(), loss.grad_bias.end());
        if (config.optimizer == MtlrOptimizer::Adam) {
            std::vector<double> w;
            w.reserve(nparams);
            w.insert(w.end(), params.theta.begin(), params.theta.end());
            w.insert(w.end(), params.bias.begin(), params.bias.end());
            adam.update(w, g);
            std::copy(w.begin(), w.begin() + static_cast<long>(params.theta.size()),
                      params.theta.begin());
            std::copy(w.begin() + static_cast<long>(params.theta.size()), w.end(),
                      params.bias.begin());
        } else {
            for (std::size_t i = 0; i < params.theta.size(); ++i)
                params.theta[i] -= config.lr * g[i];
            for (std::size_t i = 0; i < params.bias.size(); ++i)
                params.bias[i] -= config.lr * g[params.theta.size() + i];
        }
    };

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (full_batch) {
            apply(mtlr_loss(params, records));
        } else {
            shuffler.shuffle(order);
            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(config.batch_size)) {
                const std::size_t stop =
                    std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
                std::vector<SurvivalRecord> batch(stop - start);
                for (std::size_t i = start; i < stop; ++i) batch[i - start] = records[order[i]];
                apply(mtlr_loss(params, batch));
            }
        }
        if (!params_finite(params))
            throw ConvergenceError("mtlr training diverged at epoch " + std::to_string(epoch + 1) +
                                   "; loss trace tail: " + trace_tail(result.loss_trace));
        const double epoch_loss = mtlr_loss(params, records).value;
        result.loss_trace.push_back(epoch_loss);
        if (!std::isfinite(epoch_loss))
            throw ConvergenceError("mtlr training diverged at epoch " + std::to_string(epoch + 1) +
                                   "; loss trace tail: " + trace_tail(result.loss_trace));
    }
    return result;
}

// ---- neural variant ----

namespace {

nn::Sequential build_encoder(int input_dim, const NeuralMtlrConfig& config) {
    if (config.hidden.empty()) throw ConfigError("neural mtlr needs at least one hidden layer");
    nn::Sequential enc;
    int prev = input_dim;
    for (std::size_t i = 0; i < config.hidden.size(); ++i) {
        const int h = config.hidden[i];
        if (h <= 0) throw ConfigError("hidden layer widths must be positive");
        enc.add(nn::LayerSpec::linear(prev, h));
        if (config.relu) enc.add(nn::LayerSpec::relu());
        if (config.dropout > 0.0 && i + 1 < config.hidden.size())
            enc.add(nn::LayerSpec::dropout(config.dropout));
        prev = h;
    }
    return enc;
}

nn::Tensor records_to_tensor(const std::vector<SurvivalRecord>& records) {
    const long n = static_cast<long>(records.size());
    const long d = static_cast<long>(records.front().covariates.size());
    nn::Tensor x({n, d});
    for (long i = 0; i < n; ++i) {
        const auto& cov = records[static_cast<std::size_t>(i)].covariates;
        if (static_cast<long>(cov.size()) != d) throw DataError("inconsistent covariate dimensions");
        std::copy(cov.begin(), cov.end(), x.data.begin() + i * d);
    }
    return x;
}

std::vector<SurvivalRecord> embed_records(const std::vector<SurvivalRecord>& records,
                                          const nn::Tensor& embedded) {
    std::vector<SurvivalRecord> out(records.size());
    const long h = embedded.shape[1];
    for (std::size_t i = 0; i < records.size(); ++i) {
        out[i].patient_id = records[i].patient_id;
        out[i].time = records[i].time;
        out[i].event = records[i].event;
        out[i].covariates.assign(embedded.data.begin() + static_cast<long>(i) * h,
                                 embedded.data.begin() + static_cast<long>(i + 1) * h);
    }
    return out;
}

}  // namespace

NeuralMtlrModel build_neural_mtlr(int input_dim, const TimeGrid& grid,
                                  const NeuralMtlrConfig& config) {
    if (input_dim <= 0) throw ConfigError("input dimension must be positive");
    NeuralMtlrModel model;
    model.config = config;
    model.encoder = build_encoder(input_dim, config);
    model.encoder.init(mix_seed(config.fit.seed, 0xE2CULL));
    model.head = MtlrParams::zeros(grid, config.hidden.back(), config.fit.c_reg);
    return model;
}

double neural_mtlr_loss(NeuralMtlrModel& model, const std::vector<SurvivalRecord>& records,
                        nn::Mode mode, std::uint64_t dropout_seed) {
    if (records.empty()) throw DataError("empty cohort");
    nn::Tensor x = records_to_tensor(records);
    nn::Tensor e = model.encoder.forward(x, mode, dropout_seed, nullptr);
    return mtlr_loss(model.head, embed_records(records, e)).value;
}

SurvivalCurve NeuralMtlrModel::survival_curve(const std::vector<double>& x) {
    nn::Tensor in({1, static_cast<long>(x.size())});
    in.data = x;
    nn::Tensor e = encoder.forward(in, nn::Mode::Eval, 0, nullptr);
    return mtlr_survival_curve(head, e.data);
}

double NeuralMtlrModel::risk(const std::vector<double>& x) {
    nn::Tensor in({1, static_cast<long>(x.size())});
    in.data = x;
    nn::Tensor e = encoder.forward(in, nn::Mode::Eval, 0, nullptr);
    return mtlr_risk(head, e.data);
}

std::vector<RiskScore> NeuralMtlrModel::predict_risk(const std::vector<SurvivalRecord>& records) {
    std::vector<RiskScore> out;
    out.reserve(records.size());
    for (const auto& rec : records) out.push_back({rec.patient_id, risk(rec.covariates)});
    return out;
}

NeuralMtlrFitResult fit_neural_mtlr(const std::vector<SurvivalRecord>& records,
                                    const TimeGrid& grid, const NeuralMtlrConfig& config) {
    check_fit_inputs(records, grid, config.fit);
    const int d = static_cast<int>(records.front().covariates.size());
    NeuralMtlrFitResult result;
    result.model = build_neural_mtlr(d, grid, config);
    NeuralMtlrModel& model = result.model;
    const MtlrFitConfig& fc = config.fit;

    std::vector<nn::Tensor*> enc_params = model.encoder.learnable();
    nn::AdamState adam;
    adam.config.lr = fc.lr;
    adam.init_like(enc_params);
    FlatAdam head_adam(model.head.theta.size() + model.head.bias.size(), fc.lr);
    const bool full_batch =
        fc.batch_size <= 0 || fc.batch_size >= static_cast<int>(records.size());
    Rng shuffler(mix_seed(fc.seed, 0xB4CCULL));
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    auto train_step = [&](const std::vector<SurvivalRecord>& batch, std::uint64_t step_seed) {
        nn::Tensor x = records_to_tensor(batch);
        std::vector<nn::LayerCache> caches;
        nn::Tensor e = model.encoder.forward(x, nn::Mode::Train, step_seed, &caches);
        std::vector<double> grad_embed;
        MtlrLossResult loss = mtlr_loss(model.head, embed_records(batch, e), &grad_embed);
        nn::Tensor grad_out(e.shape);
        grad_out.data = grad_embed;
        std::vector<std::vector<nn::Tensor>> enc_grads;
        model.encoder.backward(grad_out, caches, &enc_grads);

        std::vector<const nn::Tensor*> flat_grads;
        for (std::size_t li = 0; li < enc_grads.size(); ++li)
            for (const auto& g : enc_grads[li]) flat_grads.push_back(&g);
        nn::adam_step(adam, enc_params, flat_grads);

        std::vector<double> g;
        g.reserve(head_adam.m.size());
        g.insert(g.end(), loss.grad_theta.begin(), loss.grad_theta.end());
        g.insert(g.end(), loss.grad_bias.begin(), loss.grad_bias.end());
        std::vector<double> w;
        w.reserve(head_adam.m.size());
        w.insert(w.end(), model.head.theta.begin(), model.head.theta.end());
        w.insert(w.end(), model.head.bias.begin(), model.head.bias.end());
        head_adam.update(w, g);
        std::copy(w.begin(), w.begin() + static_cast<long>(model.head.theta.size()),
                  model.head.theta.begin());
        std::copy(w.begin() + static_cast<long>(model.head.theta.size()), w.end(),
                  model.head.bias.begin());
    };

    for (int epoch = 0; epoch < fc.epochs; ++epoch) {
        if (full_batch) {
            train_step(records, mix_seed(fc.seed, 1000003ULL + static_cast<std::uint64_t>(epoch)));
        } else {
            shuffler.shuffle(order);
            std::size_t batch_no = 0;
            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(fc.batch_size), ++batch_no) {
                const std::size_t stop =
                    std::min(order.size(), start + static_cast<std::size_t>(fc.batch_size));
                std::vector<SurvivalRecord> batch(stop - start);
                for (std::size_t i = start; i < stop; ++i) batch[i - start] = records[order[i]];
                train_step(batch, mix_seed(fc.seed, (static_cast<std::uint64_t>(epoch) << 20) +
                                                        batch_no));
            }
        }
        bool finite = params_finite(model.head);
        for (const nn::Tensor* t : enc_params)
            for (double v : t->data)
                if (!std::isfinite(v)) finite = false;
        if (!finite)
            throw ConvergenceError("neural mtlr training diverged at epoch " +
                                   std::to_string(epoch + 1) +
                                   "; loss trace tail: " + trace_tail(result.loss_trace));
        const double epoch_loss = neural_mtlr_loss(model, records, nn::Mode::Eval, 0);
        result.loss_trace.push_back(epoch_loss);
        if (!std::isfinite(epoch_loss))
            throw ConvergenceError("neural mtlr training diverged at epoch " +
                                   std::to_string(epoch + 1) +
                                   "; loss trace tail: " + trace_tail(result.loss_trace));
    }
    return result;
}

// ---- serialization ----

namespace {

json grid_to_json(const TimeGrid& grid) { return json(grid.points); }

TimeGrid grid_from_json(const json& j) {
    TimeGrid grid;
    grid.points = j.get<std::vector<double>>();
    grid.validate();
    return grid;
}

json params_to_json(const MtlrParams& params) {
    json j;
    j["grid"] = grid_to_json(params.grid);
    j["dim"] = params.dim();
    j["theta"] = params.theta;
    j["bias"] = params.bias;
    j["c_reg"] = params.c_reg;
    return j;
}

MtlrParams params_from_json(const json& j) {
    MtlrParams p;
    p.grid = grid_from_json(j.at("grid"));
    p.theta = j.at("theta").get<std::vector<double>>();
    p.bias = j.at("bias").get<std::vector<double>>();
    p.c_reg = j.at("c_reg").get<double>();
    const int dim = j.at("dim").get<int>();
    if (p.dim() != dim) throw DataError("mtlr model file: theta size does not match dim");
    check_params(p);
    return p;
}

json encoder_to_json(const nn::Sequential& enc) {
    json layers = json::array();
    for (std::size_t i = 0; i < enc.specs.size(); ++i) {
        const auto& s = enc.specs[i];
        json layer;
        layer["kind"] = nn::layer_kind_name(s.kind);
        if (s.kind == nn::LayerKind::Linear) {
            layer["in_features"] = s.in_features;
            layer["out_features"] = s.out_features;
            layer["weight"] = enc.params[i].learnable[0].data;
            layer["bias"] = enc.params[i].learnable[1].data;
        } else if (s.kind == nn::LayerKind::Dropout) {
            layer["p"] = s.p;
        }
        layers.push_back(layer);
    }
    return layers;
}

nn::Sequential encoder_from_json(const json& layers) {
    nn::Sequential enc;
    for (const auto& layer : layers) {
        const std::string kind = layer.at("kind").get<std::string>();
        if (kind == "linear") {
            enc.add(nn::LayerSpec::linear(layer.at("in_features").get<int>(),
                                          layer.at("out_features").get<int>()));
            auto w = layer.at("weight").get<std::vector<double>>();
            auto b = layer.at("bias").get<std::vector<double>>();
            auto& p = enc.params.back();
            if (w.size() != p.learnable[0].data.size() || b.size() != p.learnable[1].data.size())
                throw DataError("encoder layer weights do not match declared sizes");
            p.learnable[0].data = std::move(w);
            p.learnable[1].data = std::move(b);
        } else if (kind == "relu") {
            enc.add(nn::LayerSpec::relu());
        } else if (kind == "dropout") {
            enc.add(nn::LayerSpec::dropout(layer.at("p").get<double>()));
        } else {
            throw DataError("unsupported encoder layer kind: " + kind);
        }
    }
    return enc;
}

json parse_model_json(const std::string& text, const std::string& expect_kind) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw DataError("model file is not valid JSON");
    const std::string kind = j.value("model", "");
    if (kind != expect_kind)
        throw DataError("model file holds '" + kind + "', expected '" + expect_kind + "'");
    return j;
}

void attach_encoding(json& j, const std::string& encoding_json) {
    if (encoding_json.empty()) return;
    json enc = json::parse(encoding_json, nullptr, false);
    if (enc.is_discarded()) throw DataError("encoding schema is not valid JSON");
    j["encoding"] = enc;
}

}  // namespace

std::string mtlr_model_to_json(const MtlrParams& params, const std::string& encoding_json) {
    json j = params_to_json(params);
    j["model"] = "mtlr";
    attach_encoding(j, encoding_json);
    return j.dump(2);
}

MtlrParams mtlr_model_from_json(const std::string& text) {
    return params_from_json(parse_model_json(text, "mtlr"));
}

std::string neural_mtlr_model_to_json(const NeuralMtlrModel& model,
                                      const std::string& encoding_json) {
    json j;
    j["model"] = "neural-mtlr";
    j["encoder"] = encoder_to_json(model.encoder);
    j["head"] = params_to_json(model.head);
    j["hidden"] = model.config.hidden;
    j["dropout"] = model.config.dropout;
    attach_encoding(j, encoding_json);
    return j.dump(2);
}

NeuralMtlrModel neural_mtlr_model_from_json(const std::string& text) {
    json j = parse_model_json(text, "neural-mtlr");
    NeuralMtlrModel model;
    model.encoder = encoder_from_json(j.at("encoder"));
    model.head = params_from_json(j.at("head"));
    model.config.hidden = j.value("hidden", std::vector<int>{});
    model.config.dropout = j.value("dropout", 0.0);
    return model;
}

}  // namespace survfuse

#include "survfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "flat_adam.hpp"
#include "survfuse/errors.hpp"
#include "survfuse/rng.hpp"

namespace survfuse {

using detail::FlatAdam;
using nlohmann::json;

void FusionConfig::validate() const {
    if (channels.size() != 4) throw ConfigError("fusion expects 4 conv channel counts");
    for (int c : channels)
        if (c <= 0) throw ConfigError("conv channels must be positive");
    if (feature_len <= 0) throw ConfigError("feature length must be positive");
    if (fc.size() != 2) throw ConfigError("fusion expects 2 fc widths");
    for (int w : fc)
        if (w <= 0) throw ConfigError("fc widths must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
    for (long s : input_dhw)
        if (s < 4) throw ConfigError("input shape must be at least 4 per axis (two pool halvings)");
}

FusionConfig FusionConfig::paper(FusionVariant variant) {
    FusionConfig c;
    c.variant = variant;
    c.profile = FusionProfile::Paper;
    c.input_dhw = {50, 80, 80};
    c.channels = {32, 64, 128, 256};
    c.feature_len = 256;
    c.fc = {256, 256};
    c.dropout = 0.2;
    return c;
}

FusionConfig FusionConfig::desk(FusionVariant variant) {
    FusionConfig c;
    c.variant = variant;
    c.profile = FusionProfile::Desk;
    return c;
}

void MultimodalBatch::validate(const FusionConfig& config) const {
    const long n_rows = n();
    if (n_rows == 0) throw DataError("empty batch");
    if (static_cast<int>(paths.size()) != config.paths())
        throw DataError("batch carries " + std::to_string(paths.size()) + " image paths, model needs " +
                        std::to_string(config.paths()));
    for (const auto& t : paths) {
        if (t.shape.size() != 5) throw DataError("image tensors must be (N,1,D,H,W)");
        if (t.shape[0] != n_rows) throw DataError("image batch size does not match outcomes");
        if (t.shape[1] != 1) throw DataError("image tensors must have a single channel");
        if (t.shape[2] != config.input_dhw[0] || t.shape[3] != config.input_dhw[1] ||
            t.shape[4] != config.input_dhw[2])
            throw DataError("image shape does not match the configured input shape");
    }
    if (ehr.shape.size() != 2) throw DataError("ehr features must be (N,d)");
    if (ehr.shape[0] != n_rows) throw DataError("ehr batch size does not match outcomes");
}

MultimodalBatch MultimodalBatch::rows(const std::vector<std::size_t>& index) const {
    MultimodalBatch out;
    const long k = static_cast<long>(index.size());
    for (const auto& t : paths) {
        const long stride = t.size() / t.shape[0];
        nn::Tensor s(t.shape);
        s.shape[0] = k;
        s.data.resize(static_cast<std::size_t>(k * stride));
        for (long i = 0; i < k; ++i)
            std::copy(t.data.begin() + static_cast<long>(index[static_cast<std::size_t>(i)]) * stride,
                      t.data.begin() + static_cast<long>(index[static_cast<std::size_t>(i)] + 1) * stride,
                      s.data.begin() + i * stride);
        out.paths.push_back(std::move(s));
    }
    const long d = ehr.shape[1];
    out.ehr = nn::Tensor({k, d});
    for (long i = 0; i < k; ++i)
        std::copy(ehr.data.begin() + static_cast<long>(index[static_cast<std::size_t>(i)]) * d,
                  ehr.data.begin() + static_cast<long>(index[static_cast<std::size_t>(i)] + 1) * d,
                  out.ehr.data.begin() + i * d);
    out.outcomes.reserve(index.size());
    for (std::size_t i : index) out.outcomes.push_back(outcomes[i]);
    return out;
}

namespace {

nn::Sequential build_path(const FusionConfig& c) {
    nn::Sequential s;
    s.add(nn::LayerSpec::conv3d(1, c.channels[0], 3));
    s.add(nn::LayerSpec::relu());
    s.add(nn::LayerSpec::batchnorm3d(c.channels[0]));
    s.add(nn::LayerSpec::conv3d(c.channels[0], c.channels[1], 5));
    s.add(nn::LayerSpec::relu());
    s.add(nn::LayerSpec::batchnorm3d(c.channels[1]));
    s.add(nn::LayerSpec::maxpool3d());
    s.add(nn::LayerSpec::conv3d(c.channels[1], c.channels[2], 3));
    s.add(nn::LayerSpec::relu());
    s.add(nn::LayerSpec::batchnorm3d(c.channels[2]));
    s.add(nn::LayerSpec::conv3d(c.channels[2], c.channels[3], 5));
    s.add(nn::LayerSpec::relu());
    s.add(nn::LayerSpec::batchnorm3d(c.channels[3]));
    s.add(nn::LayerSpec::maxpool3d());
    s.add(nn::LayerSpec::global_avg_pool());
    s.add(nn::LayerSpec::linear(c.channels[3], c.feature_len));
    return s;
}

nn::Sequential build_trunk(const FusionConfig& c, int concat_dim) {
    nn::Sequential s;
    s.add(nn::LayerSpec::linear(concat_dim, c.fc[0]));
    s.add(nn::LayerSpec::relu());
    if (c.dropout > 0.0) s.add(nn::LayerSpec::dropout(c.dropout));
    s.add(nn::LayerSpec::linear(c.fc[0], c.fc[1]));
    s.add(nn::LayerSpec::relu());
    return s;
}

std::vector<SurvivalRecord> embedded_records(const std::vector<SurvivalRecord>& outcomes,
                                             const nn::Tensor& embedded) {
    std::vector<SurvivalRecord> out(outcomes.size());
    const long h = embedded.shape[1];
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        out[i].patient_id = outcomes[i].patient_id;
        out[i].time = outcomes[i].time;
        out[i].event = outcomes[i].event;
        out[i].covariates.assign(embedded.data.begin() + static_cast<long>(i) * h,
                                 embedded.data.begin() + static_cast<long>(i + 1) * h);
    }
    return out;
}

struct ForwardState {
    std::vector<std::vector<nn::LayerCache>> path_caches;
    std::vector<nn::LayerCache> trunk_caches;
    nn::Tensor concat;
    nn::Tensor embedded;
};

nn::Tensor concat_features(const std::vector<nn::Tensor>& feats, const nn::Tensor& ehr) {
    const long n = feats.front().shape[0];
    long width = ehr.shape[1];
    for (const auto& f : feats) width += f.shape[1];
    nn::Tensor out({n, width});
    for (long i = 0; i < n; ++i) {
        double* row = out.data.data() + i * width;
        for (const auto& f : feats) {
            const long w = f.shape[1];
            std::copy(f.data.begin() + i * w, f.data.begin() + (i + 1) * w, row);
            row += w;
        }
        std::copy(ehr.data.begin() + i * ehr.shape[1], ehr.data.begin() + (i + 1) * ehr.shape[1],
                  row);
    }
    return out;
}

void forward_all(FusionModel& model, const MultimodalBatch& batch, nn::Mode mode,
                 std::uint64_t rng_seed, ForwardState* state) {
    std::vector<nn::Tensor> feats;
    if (state) state->path_caches.assign(model.paths.size(), {});
    for (std::size_t p = 0; p < model.paths.size(); ++p) {
        auto* caches = state ? &state->path_caches[p] : nullptr;
        feats.push_back(model.paths[p].forward(batch.paths[p], mode,
                                               mix_seed(rng_seed, 300 + static_cast<std::uint64_t>(p)),
                                               caches));
    }
    nn::Tensor concat = concat_features(feats, batch.ehr);
    auto* tcaches = state ? &state->trunk_caches : nullptr;
    nn::Tensor embedded = model.trunk.forward(concat, mode, mix_seed(rng_seed, 400), tcaches);
    if (state) {
        state->concat = std::move(concat);
        state->embedded = std::move(embedded);
    }
}

}  // namespace

FusionModel build_fusion_model(const FusionConfig& config, int ehr_dim, const TimeGrid& grid) {
    config.validate();
    if (ehr_dim < 0) throw ConfigError("ehr dimension must be non-negative");
    grid.validate();
    if (grid.size() == 0) throw ConfigError("fusion model needs a nonempty time grid");
    FusionModel model;
    model.config = config;
    model.ehr_dim = ehr_dim;
    for (int p = 0; p < config.paths(); ++p) {
        model.paths.push_back(build_path(config));
        model.paths.back().init(mix_seed(config.fit.seed, 100 + static_cast<std::uint64_t>(p)));
    }
    const int concat_dim = config.paths() * config.feature_len + ehr_dim;
    model.trunk = build_trunk(config, concat_dim);
    model.trunk.init(mix_seed(config.fit.seed, 200));
    model.head = MtlrParams::zeros(grid, config.fc[1], config.fit.c_reg);
    return model;
}

nn::Tensor FusionModel::image_features(const MultimodalBatch& batch, nn::Mode mode,
                                       std::uint64_t rng_seed) {
    batch.validate(config);
    std::vector<nn::Tensor> feats;
    for (std::size_t p = 0; p < paths.size(); ++p)
        feats.push_back(paths[p].forward(batch.paths[p], mode,
                                         mix_seed(rng_seed, 300 + static_cast<std::uint64_t>(p)),
                                         nullptr));
    nn::Tensor empty({batch.n(), 0});
    return concat_features(feats, empty);
}

std::vector<RiskScore> FusionModel::predict_risk(const MultimodalBatch& batch) {
    batch.validate(config);
    if (static_cast<int>(batch.ehr.shape[1]) != ehr_dim)
        throw DataError("ehr dimension does not match the model");
    ForwardState state;
    forward_all(*this, batch, nn::Mode::Eval, 0, &state);
    std::vector<RiskScore> out;
    out.reserve(batch.outcomes.size());
    const long h = state.embedded.shape[1];
    for (long i = 0; i < batch.n(); ++i) {
        std::vector<double> e(state.embedded.data.begin() + i * h,
                              state.embedded.data.begin() + (i + 1) * h);
        out.push_back({batch.outcomes[static_cast<std::size_t>(i)].patient_id, mtlr_risk(head, e)});
    }
    return out;
}

std::vector<nn::LayerKind> FusionModel::layer_kind_sequence() const {
    std::vector<nn::LayerKind> out = paths.front().kind_sequence();
    const auto trunk_kinds = trunk.kind_sequence();
    out.insert(out.end(), trunk_kinds.begin(), trunk_kinds.end());
    return out;
}

double fusion_loss(FusionModel& model, const MultimodalBatch& batch, nn::Mode mode,
                   std::uint64_t rng_seed) {
    batch.validate(model.config);
    ForwardState state;
    forward_all(model, batch, mode, rng_seed, &state);
    return mtlr_loss(model.head, embedded_records(batch.outcomes, state.embedded)).value;
}

std::vector<double*> fusion_parameters(FusionModel& model) {
    std::vector<double*> out;
    auto collect = [&](nn::Sequential& seq) {
        for (auto& lp : seq.params)
            for (auto& t : lp.learnable)
                for (double& v : t.data) out.push_back(&v);
    };
    for (auto& path : model.paths) collect(path);
    collect(model.trunk);
    for (double& v : model.head.theta) out.push_back(&v);
    for (double& v : model.head.bias) out.push_back(&v);
    return out;
}

FusionLossGrad fusion_loss_and_flat_grad(FusionModel& model, const MultimodalBatch& batch,
                                         nn::Mode mode, std::uint64_t rng_seed) {
    batch.validate(model.config);
    ForwardState state;
    forward_all(model, batch, mode, rng_seed, &state);
    std::vector<double> grad_embed;
    MtlrLossResult head_loss =
        mtlr_loss(model.head, embedded_records(batch.outcomes, state.embedded), &grad_embed);

    nn::Tensor grad_out(state.embedded.shape);
    grad_out.data = grad_embed;
    std::vector<std::vector<nn::Tensor>> trunk_grads;
    nn::Tensor grad_concat = model.trunk.backward(grad_out, state.trunk_caches, &trunk_grads);

    const long n = batch.n();
    const long f = model.config.feature_len;
    const long width = grad_concat.shape[1];
    std::vector<std::vector<std::vector<nn::Tensor>>> path_grads(model.paths.size());
    for (std::size_t p = 0; p < model.paths.size(); ++p) {
        nn::Tensor slice({n, f});
        for (long i = 0; i < n; ++i)
            std::copy(grad_concat.data.begin() + i * width + static_cast<long>(p) * f,
                      grad_concat.data.begin() + i * width + static_cast<long>(p + 1) * f,
                      slice.data.begin() + i * f);
        model.paths[p].backward(slice, state.path_caches[p], &path_grads[p]);
    }

    FusionLossGrad out;
    out.loss = head_loss.value;
    auto append_seq = [&](const nn::Sequential& seq, const std::vector<std::vector<nn::Tensor>>& grads) {
        for (std::size_t li = 0; li < seq.params.size(); ++li) {
            if (grads[li].empty()) {
                for (const auto& t : seq.params[li].learnable)
                    out.grad.insert(out.grad.end(), static_cast<std::size_t>(t.size()), 0.0);
            } else {
                for (const auto& g : grads[li])
                    out.grad.insert(out.grad.end(), g.data.begin(), g.data.end());
            }
        }
    };
    for (std::size_t p = 0; p < model.paths.size(); ++p) append_seq(model.paths[p], path_grads[p]);
    append_seq(model.trunk, trunk_grads);
    out.grad.insert(out.grad.end(), head_loss.grad_theta.begin(), head_loss.grad_theta.end());
    out.grad.insert(out.grad.end(), head_loss.grad_bias.begin(), head_loss.grad_bias.end());
    return out;
}

namespace {

std::vector<std::vector<double>> snapshot_state(FusionModel& model) {
    std::vector<std::vector<double>> snap;
    auto grab = [&](nn::Sequential& seq) {
        for (auto& lp : seq.params) {
            for (auto& t : lp.learnable) snap.push_back(t.data);
            for (auto& t : lp.buffers) snap.push_back(t.data);
        }
    };
    for (auto& p : model.paths) grab(p);
    grab(model.trunk);
    snap.push_back(model.head.theta);
    snap.push_back(model.head.bias);
    return snap;
}

void restore_state(FusionModel& model, const std::vector<std::vector<double>>& snap) {
    std::size_t i = 0;
    auto put = [&](nn::Sequential& seq) {
        for (auto& lp : seq.params) {
            for (auto& t : lp.learnable) t.data = snap[i++];
            for (auto& t : lp.buffers) t.data = snap[i++];
        }
    };
    for (auto& p : model.paths) put(p);
    put(model.trunk);
    model.head.theta = snap[i++];
    model.head.bias = snap[i++];
}

}  // namespace

FusionTrainResult train_fusion(FusionModel& model, const MultimodalBatch& cohort,
                               const MultimodalBatch* validation) {
    cohort.validate(model.config);
    if (static_cast<int>(cohort.ehr.shape[1]) != model.ehr_dim)
        throw DataError("ehr dimension does not match the model");
    bool any_event = false;
    for (const auto& r : cohort.outcomes) any_event |= r.event;
    if (!any_event) throw DataError("no events in cohort");

    const MtlrFitConfig& fc = model.config.fit;
    if (fc.epochs < 0) throw ConfigError("epochs must be non-negative");
    std::vector<double*> params = fusion_parameters(model);
    FlatAdam adam(params.size(), fc.lr);
    const bool full_batch = fc.batch_size <= 0 || fc.batch_size >= static_cast<int>(cohort.n());
    Rng shuffler(mix_seed(fc.seed, 0xB4CCULL));
    std::vector<std::size_t> order(static_cast<std::size_t>(cohort.n()));
    std::iota(order.begin(), order.end(), std::size_t{0});

    FusionTrainResult result;
    auto snapshot = snapshot_state(model);
    long good_epoch = 0;

    auto step = [&](const MultimodalBatch& batch, std::uint64_t seed) {
        FusionLossGrad lg = fusion_loss_and_flat_grad(model, batch, nn::Mode::Train, seed);
        std::vector<double> w(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) w[i] = *params[i];
        if (fc.optimizer == MtlrOptimizer::Adam) {
            adam.update(w, lg.grad);
        } else {
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= fc.lr * lg.grad[i];
        }
        for (std::size_t i = 0; i < params.size(); ++i) *params[i] = w[i];
    };

    for (int epoch = 0; epoch < fc.epochs; ++epoch) {
        if (full_batch) {
            step(cohort, mix_seed(fc.seed, 1000003ULL + static_cast<std::uint64_t>(epoch)));
        } else {
            shuffler.shuffle(order);
            std::size_t batch_no = 0;
            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(fc.batch_size), ++batch_no) {
                const std::size_t stop =
                    std::min(order.size(), start + static_cast<std::size_t>(fc.batch_size));
                std::vector<std::size_t> index(order.begin() + static_cast<long>(start),
                                               order.begin() + static_cast<long>(stop));
                step(cohort.rows(index),
                     mix_seed(fc.seed, (static_cast<std::uint64_t>(epoch) << 20) + batch_no));
            }
        }
        bool finite = true;
        for (double* p : params) finite &= std::isfinite(*p);
        const double epoch_loss = finite ? fusion_loss(model, cohort, nn::Mode::Eval, 0) : HUGE_VAL;
        if (!finite || !std::isfinite(epoch_loss)) {
            restore_state(model, snapshot);
            throw ConvergenceError("fusion training hit a non-finite loss at epoch " +
                                   std::to_string(epoch + 1) + "; parameters restored to epoch " +
                                   std::to_string(good_epoch));
        }
        result.loss_trace.push_back(epoch_loss);
        if (validation) {
            const auto risks = model.predict_risk(*validation);
            result.val_cindex.push_back(concordance_index(risks, validation->outcomes));
        }
        snapshot = snapshot_state(model);
        good_epoch = epoch + 1;
    }
    return result;
}

// ---- checkpoints: JSON manifest plus one blob of little-endian doubles ----

namespace {

json spec_to_json(const nn::LayerSpec& s) {
    json j;
    j["kind"] = nn::layer_kind_name(s.kind);
    switch (s.kind) {
        case nn::LayerKind::Conv3d:
            j["in_ch"] = s.in_ch;
            j["out_ch"] = s.out_ch;
            j["kernel"] = s.kernel;
            break;
        case nn::LayerKind::BatchNorm3d:
            j["channels"] = s.channels;
            j["eps"] = s.eps;
            j["momentum"] = s.momentum;
            break;
        case nn::LayerKind::Linear:
            j["in_features"] = s.in_features;
            j["out_features"] = s.out_features;
            break;
        case nn::LayerKind::Dropout:
            j["p"] = s.p;
            break;
        default:
            break;
    }
    return j;
}

json sequential_specs_to_json(const nn::Sequential& seq) {
    json out = json::array();
    for (const auto& s : seq.specs) out.push_back(spec_to_json(s));
    return out;
}

void append_tensor_entries(json& tensors, const std::string& prefix, const nn::Sequential& seq) {
    for (std::size_t li = 0; li < seq.params.size(); ++li) {
        for (std::size_t k = 0; k < seq.params[li].learnable.size(); ++k) {
            json e;
            e["name"] = prefix + ".layer" + std::to_string(li) + ".param" + std::to_string(k);
            e["shape"] = seq.params[li].learnable[k].shape;
            tensors.push_back(e);
        }
        for (std::size_t k = 0; k < seq.params[li].buffers.size(); ++k) {
            json e;
            e["name"] = prefix + ".layer" + std::to_string(li) + ".buffer" + std::to_string(k);
            e["shape"] = seq.params[li].buffers[k].shape;
            tensors.push_back(e);
        }
    }
}

void append_blob(std::vector<double>& blob, const nn::Sequential& seq) {
    for (const auto& lp : seq.params) {
        for (const auto& t : lp.learnable) blob.insert(blob.end(), t.data.begin(), t.data.end());
        for (const auto& t : lp.buffers) blob.insert(blob.end(), t.data.begin(), t.data.end());
    }
}

std::string optimizer_name(MtlrOptimizer opt) {
    return opt == MtlrOptimizer::Adam ? "adam" : "sgd";
}

MtlrOptimizer optimizer_from_name(const std::string& name) {
    if (name == "adam") return MtlrOptimizer::Adam;
    if (name == "sgd") return MtlrOptimizer::Sgd;
    throw DataError("unknown optimizer name: " + name);
}

json fit_to_json(const MtlrFitConfig& fc) {
    json j;
    j["c_reg"] = fc.c_reg;
    j["lr"] = fc.lr;
    j["epochs"] = fc.epochs;
    j["batch_size"] = fc.batch_size;
    j["optimizer"] = optimizer_name(fc.optimizer);
    j["seed"] = fc.seed;
    return j;
}

MtlrFitConfig fit_from_json(const json& j) {
    MtlrFitConfig fc;
    fc.c_reg = j.at("c_reg").get<double>();
    fc.lr = j.at("lr").get<double>();
    fc.epochs = j.at("epochs").get<int>();
    fc.batch_size = j.at("batch_size").get<int>();
    fc.optimizer = optimizer_from_name(j.at("optimizer").get<std::string>());
    fc.seed = j.at("seed").get<std::uint64_t>();
    return fc;
}

void write_le_doubles(const std::string& path, const std::vector<double>& values) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw DataError("cannot write checkpoint blob: " + path);
    std::vector<char> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &values[i], 8);
        for (int b = 0; b < 8; ++b)
            bytes[8 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
    file.write(bytes.data(), static_cast<long>(bytes.size()));
    if (!file) throw DataError("short write on checkpoint blob: " + path);
}

std::vector<double> read_le_doubles(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw DataError("cannot open checkpoint blob: " + path);
    file.seekg(0, std::ios::end);
    const long size = static_cast<long>(file.tellg());
    if (size % 8 != 0) throw DataError("checkpoint blob size is not a multiple of 8: " + path);
    file.seekg(0);
    std::vector<char> bytes(static_cast<std::size_t>(size));
    file.read(bytes.data(), size);
    if (!file) throw DataError("short read on checkpoint blob: " + path);
    std::vector<double> values(static_cast<std::size_t>(size / 8));
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 * i + b]))
                    << (8 * b);
        std::memcpy(&values[i], &bits, 8);
    }
    return values;
}

}  // namespace

void save_fusion_checkpoint(const FusionModel& model, const std::string& manifest_path,
                            const std::string& blob_path, long step,
                            const std::string& encoding_json) {
    json j;
    j["model"] = model.config.variant == FusionVariant::V1 ? "deep-fusion-v1" : "deep-fusion-v2";
    json cfg;
    cfg["variant"] = model.config.variant == FusionVariant::V1 ? "V1" : "V2";
    cfg["profile"] = model.config.profile == FusionProfile::Paper ? "paper" : "desk";
    cfg["input_dhw"] = model.config.input_dhw;
    cfg["channels"] = model.config.channels;
    cfg["feature_len"] = model.config.feature_len;
    cfg["fc"] = model.config.fc;
    cfg["dropout"] = model.config.dropout;
    cfg["fit"] = fit_to_json(model.config.fit);
    j["config"] = cfg;
    j["ehr_dim"] = model.ehr_dim;
    j["grid"] = model.head.grid.points;
    j["c_reg"] = model.head.c_reg;
    j["seed"] = model.config.fit.seed;
    j["step"] = step;

    json tensors = json::array();
    std::vector<double> blob;
    for (std::size_t p = 0; p < model.paths.size(); ++p) {
        append_tensor_entries(tensors, "path" + std::to_string(p), model.paths[p]);
        append_blob(blob, model.paths[p]);
    }
    append_tensor_entries(tensors, "trunk", model.trunk);
    append_blob(blob, model.trunk);
    {
        json e;
        e["name"] = "head.theta";
        e["shape"] = std::vector<long>{model.head.m(), model.head.dim()};
        tensors.push_back(e);
        e["name"] = "head.bias";
        e["shape"] = std::vector<long>{model.head.m()};
        tensors.push_back(e);
    }
    blob.insert(blob.end(), model.head.theta.begin(), model.head.theta.end());
    blob.insert(blob.end(), model.head.bias.begin(), model.head.bias.end());
    j["tensors"] = tensors;
    j["blob"] = std::filesystem::path(blob_path).filename().string();

    if (!encoding_json.empty()) {
        json enc = json::parse(encoding_json, nullptr, false);
        if (enc.is_discarded()) throw DataError("encoding schema is not valid JSON");
        j["encoding"] = enc;
    }

    write_le_doubles(blob_path, blob);
    std::ofstream file(manifest_path);
    if (!file) throw DataError("cannot write checkpoint manifest: " + manifest_path);
    file << j.dump(2) << "\n";
}

FusionModel load_fusion_checkpoint(const std::string& manifest_path) {
    std::ifstream file(manifest_path);
    if (!file) throw DataError("cannot open checkpoint manifest: " + manifest_path);
    json j = json::parse(file, nullptr, false);
    if (j.is_discarded()) throw DataError("checkpoint manifest is not valid JSON: " + manifest_path);

    FusionConfig config;
    try {
        const json& cfg = j.at("config");
        const std::string variant = cfg.at("variant").get<std::string>();
        if (variant == "V1")
            config.variant = FusionVariant::V1;
        else if (variant == "V2")
            config.variant = FusionVariant::V2;
        else
            throw DataError("unknown fusion variant: " + variant);
        config.profile = cfg.at("profile").get<std::string>() == "paper" ? FusionProfile::Paper
                                                                         : FusionProfile::Desk;
        auto dhw = cfg.at("input_dhw").get<std::vector<long>>();
        if (dhw.size() != 3) throw DataError("input_dhw must have 3 entries");
        std::copy(dhw.begin(), dhw.end(), config.input_dhw.begin());
        config.channels = cfg.at("channels").get<std::vector<int>>();
        config.feature_len = cfg.at("feature_len").get<int>();
        config.fc = cfg.at("fc").get<std::vector<int>>();
        config.dropout = cfg.at("dropout").get<double>();
        config.fit = fit_from_json(cfg.at("fit"));

        TimeGrid grid;
        grid.points = j.at("grid").get<std::vector<double>>();
        FusionModel model = build_fusion_model(config, j.at("ehr_dim").get<int>(), grid);
        model.head.c_reg = j.at("c_reg").get<double>();

        const std::string blob_name = j.at("blob").get<std::string>();
        const auto blob_path = std::filesystem::path(manifest_path).parent_path() / blob_name;
        std::vector<double> blob = read_le_doubles(blob_path.string());

        std::size_t offset = 0;
        auto fill = [&](nn::Sequential& seq) {
            for (auto& lp : seq.params) {
                for (auto& t : lp.learnable) {
                    if (offset + t.data.size() > blob.size())
                        throw DataError("checkpoint blob too short for declared tensors");
                    std::copy(blob.begin() + static_cast<long>(offset),
                              blob.begin() + static_cast<long>(offset + t.data.size()),
                              t.data.begin());
                    offset += t.data.size();
                }
                for (auto& t : lp.buffers) {
                    if (offset + t.data.size() > blob.size())
                        throw DataError("checkpoint blob too short for declared tensors");
                    std::copy(blob.begin() + static_cast<long>(offset),
                              blob.begin() + static_cast<long>(offset + t.data.size()),
                              t.data.begin());
                    offset += t.data.size();
                }
            }
        };
        for (auto& p : model.paths) fill(p);
        fill(model.trunk);
        if (offset + model.head.theta.size() + model.head.bias.size() != blob.size())
            throw DataError("checkpoint blob length does not match the model");
        std::copy(blob.begin() + static_cast<long>(offset),
                  blob.begin() + static_cast<long>(offset + model.head.theta.size()),
                  model.head.theta.begin());
        offset += model.head.theta.size();
        std::copy(blob.begin() + static_cast<long>(offset), blob.end(), model.head.bias.begin());
        return model;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed checkpoint manifest: ") + e.what());
    }
}

}  // namespace survfuse

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "survfuse/coxph.hpp"
#include "survfuse/ensemble.hpp"
#include "survfuse/errors.hpp"
#include "survfuse/fusion.hpp"
#include "survfuse/mtlr.hpp"
#include "survfuse/plot.hpp"
#include "survfuse/rng.hpp"
#include "survfuse/survival.hpp"
#include "survfuse/synthetic.hpp"
#include "survfuse/tabular.hpp"
#include "survfuse/volume.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace survfuse;

namespace {

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << text;
}

json load_config_file(const std::string& path) {
    json j = json::parse(read_text(path), nullptr, false);
    if (j.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
    if (!j.is_object()) throw ConfigError("config '" + path + "' must be a JSON object");
    return j;
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

void validate_config(const json& cfg) {
    check_keys(cfg,
               {"model", "seed", "out", "data", "preprocess", "train", "predict", "ensemble",
                "simulate", "sweep", "plot", "evaluate"},
               "config");
    if (cfg.contains("data"))
        check_keys(cfg["data"], {"ehr_csv", "volumes_dir", "boxes_csv", "schema", "schema_path",
                                 "policy"},
                   "config.data");
    if (cfg.contains("preprocess"))
        check_keys(cfg["preprocess"], {"crop_target", "center_crop", "normalize"},
                   "config.preprocess");
    if (cfg.contains("train"))
        check_keys(cfg["train"],
                   {"c_reg", "lr", "epochs", "batch_size", "optimizer", "ridge", "max_iter",
                    "tol", "hidden", "dropout", "grid_m", "profile", "val_fraction", "channels",
                    "feature_len", "fc"},
                   "config.train");
    if (cfg.contains("predict"))
        check_keys(cfg["predict"], {"model_path"}, "config.predict");
    if (cfg.contains("ensemble"))
        check_keys(cfg["ensemble"], {"members", "weights", "normalization"}, "config.ensemble");
    if (cfg.contains("simulate"))
        check_keys(cfg["simulate"],
                   {"n", "d", "beta_true", "lambda", "c_max", "volumes", "volume_whd", "noise_sd",
                    "contrast", "radius_min", "radius_max"},
                   "config.simulate");
    if (cfg.contains("sweep"))
        check_keys(cfg["sweep"], {"c_reg", "lr", "folds"}, "config.sweep");
    if (cfg.contains("plot"))
        check_keys(cfg["plot"], {"model_path", "patients", "covariate", "values"}, "config.plot");
    if (cfg.contains("evaluate"))
        check_keys(cfg["evaluate"], {"risks_csv", "outcomes_csv"}, "config.evaluate");
}

json section(const json& cfg, const char* name) {
    return cfg.contains(name) ? cfg.at(name) : json::object();
}

std::uint64_t config_seed(const json& cfg) { return cfg.value("seed", std::uint64_t{0}); }

std::array<long, 3> shape3_from(const json& arr, const std::string& where) {
    if (!arr.is_array() || arr.size() != 3)
        throw ConfigError(where + " must be an array of 3 integers");
    std::array<long, 3> out{};
    for (int i = 0; i < 3; ++i) {
        out[i] = arr[i].get<long>();
        if (out[i] <= 0) throw ConfigError(where + " entries must be positive");
    }
    return out;
}

enum class ModelKind { Cox, Mtlr, NeuralMtlr, FusionV1, FusionV2, Ensemble };

ModelKind parse_model_kind(const std::string& name) {
    if (name == "cox") return ModelKind::Cox;
    if (name == "mtlr") return ModelKind::Mtlr;
    if (name == "neural-mtlr") return ModelKind::NeuralMtlr;
    if (name == "deep-fusion-v1") return ModelKind::FusionV1;
    if (name == "deep-fusion-v2") return ModelKind::FusionV2;
    if (name == "ensemble") return ModelKind::Ensemble;
    throw ConfigError("unknown model kind '" + name +
                      "' (expected cox|mtlr|neural-mtlr|deep-fusion-v1|deep-fusion-v2|ensemble)");
}

// ---------- tabular loading ----------

bool has_schema(const json& cfg) {
    const json data = section(cfg, "data");
    return data.contains("schema") || data.contains("schema_path");
}

EncodingSpec schema_from_config(const json& cfg) {
    const json data = section(cfg, "data");
    if (data.contains("schema")) return schema_from_json(data["schema"].dump());
    if (data.contains("schema_path")) return load_schema(data["schema_path"].get<std::string>());
    throw ConfigError("config.data needs 'schema' or 'schema_path'");
}

std::string ehr_path(const json& cfg) {
    const json data = section(cfg, "data");
    if (!data.contains("ehr_csv")) throw ConfigError("config.data.ehr_csv is required");
    return data["ehr_csv"].get<std::string>();
}

MissingPolicy policy_from_config(const json& cfg, const EncodingSpec& spec) {
    const json data = section(cfg, "data");
    if (!data.contains("policy")) return spec.policy;
    std::string p = data["policy"].get<std::string>();
    if (p == "impute") return MissingPolicy::Impute;
    if (p == "drop") return MissingPolicy::Drop;
    throw ConfigError("config.data.policy must be 'impute' or 'drop'");
}

struct LoadedCohort {
    EhrTable table;
    std::vector<SurvivalRecord> records;
    EncodingSpec spec;  // fitted when a schema was configured
    std::vector<std::string> warnings;
};

std::vector<SurvivalRecord> outcome_records(const EhrTable& table) {
    std::vector<SurvivalRecord> out(table.rows());
    for (std::size_t i = 0; i < table.rows(); ++i) {
        out[i].patient_id = table.ids[i];
        out[i].time = table.times[i];
        out[i].event = table.events[i] != 0;
    }
    return out;
}

// fit path: encode covariates when a schema is configured, outcomes only otherwise
LoadedCohort load_and_encode(const json& cfg) {
    LoadedCohort out;
    if (has_schema(cfg)) {
        EncodingSpec spec = schema_from_config(cfg);
        out.table = parse_ehr_csv(ehr_path(cfg), spec);
        EncodeResult enc = encode(out.table, spec, policy_from_config(cfg, spec));
        out.records = std::move(enc.records);
        out.spec = std::move(enc.spec);
        out.warnings = std::move(enc.warnings);
    } else {
        out.table = parse_ehr_csv(ehr_path(cfg), EncodingSpec{});
        out.records = outcome_records(out.table);
    }
    return out;
}

// predict path: transform with an already fitted encoding pulled from the model file
std::vector<SurvivalRecord> load_and_apply(const json& cfg, const EncodingSpec& fitted) {
    EhrTable table = parse_ehr_csv(ehr_path(cfg), fitted);
    if (!fitted.fitted) return outcome_records(table);
    ApplyResult applied = apply_encoding(table, fitted);
    for (const auto& w : applied.warnings) std::cerr << "warning: " << w << "\n";
    return applied.records;
}

EncodingSpec encoding_from_model_json(const json& model_json) {
    if (!model_json.contains("encoding")) return EncodingSpec{};
    return schema_from_json(model_json["encoding"].dump());
}

// ---------- volume pipeline ----------

struct VolumePipeline {
    std::string volumes_dir;
    std::map<std::string, BoundingBox> boxes;
    bool have_boxes = false;
    std::array<long, 3> crop_target_dhw{144, 144, 144};
    std::array<long, 3> center_whd{80, 80, 50};
    NormalizeMethod method = NormalizeMethod::MinMax;
};

VolumePipeline pipeline_from_config(const json& cfg) {
    VolumePipeline pipe;
    const json data = section(cfg, "data");
    if (!data.contains("volumes_dir"))
        throw ConfigError("config.data.volumes_dir is required for image models");
    pipe.volumes_dir = data["volumes_dir"].get<std::string>();
    if (data.contains("boxes_csv")) {
        pipe.boxes = load_bounding_boxes(data["boxes_csv"].get<std::string>());
        pipe.have_boxes = true;
    }
    const json pre = section(cfg, "preprocess");
    if (pre.contains("crop_target")) {
        std::array<long, 3> whd = shape3_from(pre["crop_target"], "preprocess.crop_target");
        pipe.crop_target_dhw = {whd[2], whd[1], whd[0]};
    }
    if (pre.contains("center_crop"))
        pipe.center_whd = shape3_from(pre["center_crop"], "preprocess.center_crop");
    if (pre.contains("normalize")) {
        std::string m = pre["normalize"].get<std::string>();
        if (m == "minmax") pipe.method = NormalizeMethod::MinMax;
        else if (m == "zscore") pipe.method = NormalizeMethod::ZScore;
        else throw ConfigError("preprocess.normalize must be 'minmax' or 'zscore'");
    }
    return pipe;
}

Volume load_patient_volume(const VolumePipeline& pipe, const std::string& id,
                           const std::string& suffix) {
    fs::path base = fs::path(pipe.volumes_dir) / (id + suffix);
    std::string data_path = base.string() + ".f32";
    if (!fs::exists(data_path)) throw DataError("missing volume file '" + data_path + "'");
    std::string sidecar = (fs::path(pipe.volumes_dir) / (id + ".json")).string();
    if (!fs::exists(sidecar)) sidecar = base.string() + ".json";  // per-modality fallback
    return load_volume(data_path, sidecar);
}

// load -> (crop to box) -> normalize -> fuse -> center crop, stacked as (N,1,D,H,W) per path
MultimodalBatch build_multimodal_batch(const VolumePipeline& pipe,
                                       const std::vector<SurvivalRecord>& records, int n_paths) {
    const long N = static_cast<long>(records.size());
    const std::array<long, 3> dhw{pipe.center_whd[2], pipe.center_whd[1], pipe.center_whd[0]};
    const long voxels = dhw[0] * dhw[1] * dhw[2];

    MultimodalBatch batch;
    batch.outcomes = records;
    for (int p = 0; p < n_paths; ++p) {
        batch.paths.emplace_back(std::vector<long>{N, 1, dhw[0], dhw[1], dhw[2]});
    }

    int ehr_dim = records.empty() ? 0 : static_cast<int>(records[0].covariates.size());
    batch.ehr = nn::Tensor({N, ehr_dim});
    for (long i = 0; i < N; ++i) {
        for (int k = 0; k < ehr_dim; ++k) batch.ehr.data[i * ehr_dim + k] = records[i].covariates[k];
    }

    for (long i = 0; i < N; ++i) {
        const std::string& id = records[i].patient_id;
        Volume ct = load_patient_volume(pipe, id, "_ct");
        Volume pet = load_patient_volume(pipe, id, "_pet");
        if (pipe.have_boxes) {
            auto it = pipe.boxes.find(id);
            if (it == pipe.boxes.end()) throw DataError("no bounding box for patient '" + id + "'");
            ct = crop_to_box(ct, it->second, pipe.crop_target_dhw);
            pet = crop_to_box(pet, it->second, pipe.crop_target_dhw);
        }
        ct = normalize(ct, pipe.method);
        pet = normalize(pet, pipe.method);
        Volume fused = fuse(ct, pet);

        std::vector<const Volume*> per_path;
        if (n_paths == 3) per_path = {&ct, &pet, &fused};
        else per_path = {&fused};
        for (int p = 0; p < n_paths; ++p) {
            Volume cropped = center_crop(*per_path[p], pipe.center_whd);
            std::copy(cropped.data.begin(), cropped.data.end(),
                      batch.paths[p].data.begin() + i * voxels);
        }
    }
    return batch;
}

// ---------- csv artifacts ----------

void write_risk_csv(const std::string& path, const std::vector<RiskScore>& risks) {
    std::ostringstream out;
    out << "PatientID,Risk\n";
    for (const auto& r : risks) out << r.patient_id << "," << g17(r.value) << "\n";
    write_text(path, out.str());
}

std::vector<RiskScore> read_risk_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open risk file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty risk file '" + path + "'");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "PatientID,Risk")
        throw DataError("risk file '" + path + "' must start with header 'PatientID,Risk'");
    std::vector<RiskScore> out;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw DataError("malformed row in risk file '" + path + "': " + line);
        RiskScore r;
        r.patient_id = line.substr(0, comma);
        std::string value = line.substr(comma + 1);
        try {
            std::size_t pos = 0;
            r.value = std::stod(value, &pos);
            if (pos != value.size()) throw std::invalid_argument(value);
        } catch (const std::exception&) {
            throw DataError("bad risk value '" + value + "' in '" + path + "'");
        }
        out.push_back(std::move(r));
    }
    return out;
}

void write_loss_trace(const std::string& path, const std::vector<double>& loss,
                      const std::vector<double>& val_cindex = {}) {
    std::ostringstream out;
    out << (val_cindex.empty() ? "epoch,loss\n" : "epoch,loss,val_cindex\n");
    for (std::size_t e = 0; e < loss.size(); ++e) {
        out << (e + 1) << "," << g17(loss[e]);
        if (!val_cindex.empty()) out << "," << g17(val_cindex[e]);
        out << "\n";
    }
    write_text(path, out.str());
}

// ---------- fit configs ----------

MtlrFitConfig fit_config_from(const json& train, std::uint64_t seed) {
    MtlrFitConfig fc;
    fc.c_reg = train.value("c_reg", 1.0);
    fc.lr = train.value("lr", 0.016);
    fc.epochs = train.value("epochs", 100);
    fc.batch_size = train.value("batch_size", 16);
    std::string opt = train.value("optimizer", std::string("adam"));
    if (opt == "adam") fc.optimizer = MtlrOptimizer::Adam;
    else if (opt == "sgd") fc.optimizer = MtlrOptimizer::Sgd;
    else throw ConfigError("train.optimizer must be 'adam' or 'sgd'");
    fc.seed = seed;
    if (fc.epochs <= 0) throw ConfigError("train.epochs must be positive");
    if (fc.lr <= 0.0) throw ConfigError("train.lr must be positive");
    if (fc.c_reg < 0.0) throw ConfigError("train.c_reg must be non-negative");
    return fc;
}

CoxFitConfig cox_config_from(const json& train) {
    CoxFitConfig cc;
    cc.max_iter = train.value("max_iter", 100);
    cc.tol = train.value("tol", 1e-8);
    cc.ridge = train.value("ridge", 0.0);
    if (cc.max_iter <= 0) throw ConfigError("train.max_iter must be positive");
    if (cc.ridge < 0.0) throw ConfigError("train.ridge must be non-negative");
    return cc;
}

FusionConfig fusion_config_from(const json& cfg, ModelKind kind, std::uint64_t seed) {
    const json train = section(cfg, "train");
    FusionVariant variant = kind == ModelKind::FusionV1 ? FusionVariant::V1 : FusionVariant::V2;
    std::string profile = train.value("profile", std::string("desk"));
    FusionConfig fc;
    if (profile == "desk") fc = FusionConfig::desk(variant);
    else if (profile == "paper") fc = FusionConfig::paper(variant);
    else throw ConfigError("train.profile must be 'desk' or 'paper'");

    if (train.contains("channels")) {
        fc.channels = train["channels"].get<std::vector<int>>();
    }
    if (train.contains("feature_len")) fc.feature_len = train["feature_len"].get<int>();
    if (train.contains("fc")) fc.fc = train["fc"].get<std::vector<int>>();
    if (train.contains("dropout")) fc.dropout = train["dropout"].get<double>();
    fc.fit = fit_config_from(train, seed);

    const json pre = section(cfg, "preprocess");
    std::array<long, 3> whd{16, 16, 16};
    if (pre.contains("center_crop")) whd = shape3_from(pre["center_crop"], "preprocess.center_crop");
    else if (profile == "paper") whd = {80, 80, 50};
    fc.input_dhw = {whd[2], whd[1], whd[0]};
    fc.validate();
    return fc;
}

// deterministic shuffled split: first n_val shuffled rows go to validation
void split_train_val(std::size_t n, double val_fraction, std::uint64_t seed,
                     std::vector<std::size_t>& train_idx, std::vector<std::size_t>& val_idx) {
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw ConfigError("train.val_fraction must be in [0, 1)");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0x5917ULL));
    rng.shuffle(order);
    std::size_t n_val = static_cast<std::size_t>(std::llround(val_fraction * double(n)));
    val_idx.assign(order.begin(), order.begin() + n_val);
    train_idx.assign(order.begin() + n_val, order.end());
    if (train_idx.empty()) throw DataError("validation split leaves no training rows");
}

template <typename T>
std::vector<T> take(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(v[i]);
    return out;
}

// ---------- commands ----------

void cmd_ingest(const json& cfg, const std::string& out_dir) {
    if (!has_schema(cfg)) throw ConfigError("ingest needs config.data.schema or schema_path");
    LoadedCohort cohort = load_and_encode(cfg);

    std::vector<std::string> names = cohort.spec.feature_names();
    std::ostringstream csv;
    csv << "PatientID,Time,Event";
    for (const auto& n : names) csv << "," << n;
    csv << "\n";
    for (const auto& r : cohort.records) {
        csv << r.patient_id << "," << g17(r.time) << "," << (r.event ? 1 : 0);
        for (double v : r.covariates) csv << "," << g17(v);
        csv << "\n";
    }
    write_text(out_dir + "/encoded.csv", csv.str());
    write_text(out_dir + "/schema.json", schema_to_json(cohort.spec) + "\n");

    json report;
    report["rows_parsed"] = cohort.table.rows();
    report["rows_encoded"] = cohort.records.size();
    report["features"] = names;
    report["diagnostics"] = cohort.table.diagnostics;
    report["warnings"] = cohort.warnings;
    write_text(out_dir + "/ingest_report.json", report.dump(2) + "\n");

    for (const auto& d : cohort.table.diagnostics) std::cerr << "note: " << d << "\n";
    for (const auto& w : cohort.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "encoded " << cohort.records.size() << " patients, " << names.size()
              << " features -> " << out_dir << "/encoded.csv\n";
}

void train_cox(const json& cfg, const std::string& out_dir) {
    LoadedCohort cohort = load_and_encode(cfg);
    if (cohort.records.empty()) throw DataError("no usable rows in training data");
    CoxModel model = fit_cox(cohort.records, cox_config_from(section(cfg, "train")));
    if (!cohort.spec.feature_names().empty()) model.feature_names = cohort.spec.feature_names();

    std::string encoding = cohort.spec.fitted ? schema_to_json(cohort.spec) : "";
    write_text(out_dir + "/model.json", cox_model_to_json(model, encoding) + "\n");

    std::ostringstream trace;
    trace << "iteration,grad_norm\n";
    for (std::size_t i = 0; i < model.report.grad_norm_trace.size(); ++i) {
        trace << (i + 1) << "," << g17(model.report.grad_norm_trace[i]) << "\n";
    }
    write_text(out_dir + "/loss_trace.csv", trace.str());

    std::vector<RiskScore> risks = cox_predict_risk(model, cohort.records);
    ConcordanceReport crep = concordance_report(risks, cohort.records);

    json metrics;
    metrics["model"] = "cox";
    metrics["n"] = cohort.records.size();
    metrics["converged"] = model.report.converged;
    metrics["iterations"] = model.report.iterations;
    metrics["final_grad_norm"] = model.report.final_grad_norm;
    metrics["train_cindex"] = crep.cindex;
    write_text(out_dir + "/metrics.json", metrics.dump(2) + "\n");
    std::cout << "cox fit: converged=" << (model.report.converged ? "true" : "false")
              << " iterations=" << model.report.iterations << " train C=" << crep.cindex << "\n";
}

void train_mtlr(const json& cfg, const std::string& out_dir, bool neural) {
    LoadedCohort cohort = load_and_encode(cfg);
    if (cohort.records.empty()) throw DataError("no usable rows in training data");
    const json train = section(cfg, "train");
    TimeGrid grid = make_time_grid(cohort.records, train.value("grid_m", 0));
    std::string encoding = cohort.spec.fitted ? schema_to_json(cohort.spec) : "";

    std::vector<double> trace;
    std::vector<RiskScore> risks;
    double final_loss = 0.0;
    if (neural) {
        NeuralMtlrConfig nc;
        nc.fit = fit_config_from(train, config_seed(cfg));
        if (train.contains("hidden")) nc.hidden = train["hidden"].get<std::vector<int>>();
        nc.dropout = train.value("dropout", 0.2);
        NeuralMtlrFitResult fit = fit_neural_mtlr(cohort.records, grid, nc);
        trace = fit.loss_trace;
        risks = fit.model.predict_risk(cohort.records);
        final_loss = trace.empty() ? 0.0 : trace.back();
        write_text(out_dir + "/model.json", neural_mtlr_model_to_json(fit.model, encoding) + "\n");
    } else {
        MtlrFitResult fit = fit_mtlr(cohort.records, grid, fit_config_from(train, config_seed(cfg)));
        trace = fit.loss_trace;
        risks = mtlr_predict_risk(fit.params, cohort.records);
        final_loss = trace.empty() ? 0.0 : trace.back();
        write_text(out_dir + "/model.json", mtlr_model_to_json(fit.params, encoding) + "\n");
    }
    write_loss_trace(out_dir + "/loss_trace.csv", trace);
    ConcordanceReport crep = concordance_report(risks, cohort.records);

    json metrics;
    metrics["model"] = neural ? "neural-mtlr" : "mtlr";
    metrics["n"] = cohort.records.size();
    metrics["grid_points"] = grid.size();
    metrics["epochs"] = trace.size();
    metrics["final_loss"] = final_loss;
    metrics["train_cindex"] = crep.cindex;
    write_text(out_dir + "/metrics.json", metrics.dump(2) + "\n");
    std::cout << (neural ? "neural-mtlr" : "mtlr") << " fit: final loss=" << final_loss
              << " train C=" << crep.cindex << "\n";
}

void train_fusion_cmd(const json& cfg, const std::string& out_dir, ModelKind kind) {
    LoadedCohort cohort = load_and_encode(cfg);
    if (cohort.records.empty()) throw DataError("no usable rows in training data");
    FusionConfig fc = fusion_config_from(cfg, kind, config_seed(cfg));
    VolumePipeline pipe = pipeline_from_config(cfg);
    pipe.center_whd = {fc.input_dhw[2], fc.input_dhw[1], fc.input_dhw[0]};

    const json train = section(cfg, "train");
    double val_fraction = train.value("val_fraction", 0.0);
    std::vector<std::size_t> train_idx, val_idx;
    split_train_val(cohort.records.size(), val_fraction, config_seed(cfg), train_idx, val_idx);

    std::vector<SurvivalRecord> train_records = take(cohort.records, train_idx);
    MultimodalBatch train_batch = build_multimodal_batch(pipe, train_records, fc.paths());
    MultimodalBatch val_batch;
    if (!val_idx.empty()) {
        val_batch = build_multimodal_batch(pipe, take(cohort.records, val_idx), fc.paths());
    }

    TimeGrid grid = make_time_grid(train_records, train.value("grid_m", 0));
    int ehr_dim = static_cast<int>(train_batch.ehr.shape[1]);
    FusionModel model = build_fusion_model(fc, ehr_dim, grid);
    FusionTrainResult result =
        train_fusion(model, train_batch, val_idx.empty() ? nullptr : &val_batch);

    std::string encoding = cohort.spec.fitted ? schema_to_json(cohort.spec) : "";
    save_fusion_checkpoint(model, out_dir + "/checkpoint.json", out_dir + "/checkpoint.bin",
                           static_cast<long>(result.loss_trace.size()), encoding);
    write_loss_trace(out_dir + "/loss_trace.csv", result.loss_trace, result.val_cindex);

    std::vector<RiskScore> risks = model.predict_risk(train_batch);
    ConcordanceReport crep = concordance_report(risks, train_batch.outcomes);

    json metrics;
    metrics["model"] = kind == ModelKind::FusionV1 ? "deep-fusion-v1" : "deep-fusion-v2";
    metrics["n_train"] = train_records.size();
    metrics["n_val"] = val_idx.size();
    metrics["epochs"] = result.loss_trace.size();
    metrics["final_loss"] = result.loss_trace.empty() ? 0.0 : result.loss_trace.back();
    metrics["train_cindex"] = crep.cindex;
    if (!result.val_cindex.empty()) metrics["val_cindex"] = result.val_cindex.back();
    write_text(out_dir + "/metrics.json", metrics.dump(2) + "\n");
    std::cout << metrics["model"].get<std::string>() << " fit: final loss="
              << metrics["final_loss"].get<double>() << " train C=" << crep.cindex << "\n";
}

void cmd_train(const json& cfg, const std::string& out_dir) {
    ModelKind kind = parse_model_kind(cfg.value("model", std::string("cox")));
    switch (kind) {
        case ModelKind::Cox: train_cox(cfg, out_dir); break;
        case ModelKind::Mtlr: train_mtlr(cfg, out_dir, false); break;
        case ModelKind::NeuralMtlr: train_mtlr(cfg, out_dir, true); break;
        case ModelKind::FusionV1:
        case ModelKind::FusionV2: train_fusion_cmd(cfg, out_dir, kind); break;
        case ModelKind::Ensemble:
            throw ConfigError(
                "ensemble has no training step; run predict with ensemble member risk files");
    }
}

void predict_ensemble(const json& cfg, const std::string& out_dir) {
    const json ens = section(cfg, "ensemble");
    if (!ens.contains("members") || !ens["members"].is_array() || ens["members"].empty())
        throw ConfigError("config.ensemble.members must list at least one risk CSV");
    std::vector<std::vector<RiskScore>> member_risks;
    for (const auto& m : ens["members"]) {
        member_risks.push_back(read_risk_csv(m.get<std::string>()));
    }
    EnsembleSpec spec;
    if (ens.contains("weights")) spec.weights = ens["weights"].get<std::vector<double>>();
    std::string norm = ens.value("normalization", std::string("zscore"));
    if (norm == "zscore") spec.normalization = RiskNormalization::ZScore;
    else if (norm == "rank") spec.normalization = RiskNormalization::Rank;
    else if (norm == "none") spec.normalization = RiskNormalization::None;
    else throw ConfigError("ensemble.normalization must be 'zscore', 'rank' or 'none'");

    std::vector<RiskScore> combined = average_risks(member_risks, spec);
    write_risk_csv(out_dir + "/risks.csv", combined);
    std::cout << "ensemble of " << member_risks.size() << " members -> " << out_dir
              << "/risks.csv (" << combined.size() << " patients)\n";
}

void cmd_predict(const json& cfg, const std::string& out_dir) {
    std::string kind_name = cfg.value("model", std::string(""));
    if (kind_name == "ensemble") {
        predict_ensemble(cfg, out_dir);
        return;
    }

    const json pred = section(cfg, "predict");
    if (!pred.contains("model_path")) throw ConfigError("config.predict.model_path is required");
    std::string model_path = pred["model_path"].get<std::string>();
    json model_json = json::parse(read_text(model_path), nullptr, false);
    if (model_json.is_discarded())
        throw DataError("model file '" + model_path + "' is not valid JSON");
    std::string tag = model_json.value("model", std::string(""));
    if (!kind_name.empty() && kind_name != tag)
        throw ConfigError("config.model '" + kind_name + "' does not match model file '" + tag +
                          "'");

    std::vector<RiskScore> risks;
    if (tag == "cox") {
        CoxModel model = cox_model_from_json(model_json.dump());
        auto records = load_and_apply(cfg, encoding_from_model_json(model_json));
        risks = cox_predict_risk(model, records);
    } else if (tag == "mtlr") {
        MtlrParams params = mtlr_model_from_json(model_json.dump());
        auto records = load_and_apply(cfg, encoding_from_model_json(model_json));
        risks = mtlr_predict_risk(params, records);
    } else if (tag == "neural-mtlr") {
        NeuralMtlrModel model = neural_mtlr_model_from_json(model_json.dump());
        auto records = load_and_apply(cfg, encoding_from_model_json(model_json));
        risks = model.predict_risk(records);
    } else if (tag == "deep-fusion-v1" || tag == "deep-fusion-v2") {
        FusionModel model = load_fusion_checkpoint(model_path);
        EncodingSpec fitted = encoding_from_model_json(model_json);
        if (model.ehr_dim > 0 && !fitted.fitted)
            throw ConfigError("checkpoint expects " + std::to_string(model.ehr_dim) +
                              " EHR features but embeds no encoding");
        auto records = load_and_apply(cfg, fitted);
        VolumePipeline pipe = pipeline_from_config(cfg);
        pipe.center_whd = {model.config.input_dhw[2], model.config.input_dhw[1],
                           model.config.input_dhw[0]};
        MultimodalBatch batch = build_multimodal_batch(pipe, records, model.config.paths());
        risks = model.predict_risk(batch);
    } else {
        throw DataError("model file '" + model_path + "' has unrecognized tag '" + tag + "'");
    }

    write_risk_csv(out_dir + "/risks.csv", risks);
    std::cout << "wrote " << risks.size() << " risk scores -> " << out_dir << "/risks.csv\n";
}

void cmd_evaluate(const json& cfg, const std::string& out_dir, std::string risks_path,
                  std::string outcomes_path) {
    const json ev = section(cfg, "evaluate");
    if (risks_path.empty()) risks_path = ev.value("risks_csv", std::string(""));
    if (outcomes_path.empty()) outcomes_path = ev.value("outcomes_csv", std::string(""));
    if (risks_path.empty() || outcomes_path.empty())
        throw ConfigError("evaluate needs risks and outcomes CSV paths (flags or config.evaluate)");

    std::vector<RiskScore> risks = read_risk_csv(risks_path);
    EhrTable table = parse_ehr_csv(outcomes_path, EncodingSpec{});
    std::vector<SurvivalRecord> records = outcome_records(table);
    ConcordanceReport rep = concordance_report(risks, records);

    json out;
    out["cindex"] = rep.cindex;
    out["comparable_pairs"] = rep.comparable_pairs;
    out["n"] = records.size();
    write_text(out_dir + "/evaluation.json", out.dump(2) + "\n");
    std::cout << "C-index " << g17(rep.cindex) << " over " << rep.comparable_pairs
              << " comparable pairs (" << records.size() << " patients)\n";
}

void cmd_simulate(const json& cfg, const std::string& out_dir) {
    const json sim = section(cfg, "simulate");
    SyntheticSpec spec;
    spec.n = sim.value("n", 100);
    spec.d = sim.value("d", 3);
    if (sim.contains("beta_true")) spec.beta_true = sim["beta_true"].get<std::vector<double>>();
    spec.lambda = sim.value("lambda", 0.1);
    spec.c_max = sim.value("c_max", 30.0);
    spec.seed = config_seed(cfg);
    if (sim.contains("volume_whd"))
        spec.volume_whd = shape3_from(sim["volume_whd"], "simulate.volume_whd");
    spec.noise_sd = sim.value("noise_sd", 0.05);
    spec.contrast = sim.value("contrast", 1.0);
    spec.radius_min = sim.value("radius_min", 2.0);
    spec.radius_max = sim.value("radius_max", 6.0);
    spec.validate();

    SyntheticCohort cohort = generate_tabular(spec);

    std::ostringstream ehr;
    ehr << "PatientID,Time,Event";
    for (int k = 1; k <= spec.d; ++k) ehr << ",x" << k;
    ehr << "\n";
    int events = 0;
    for (const auto& r : cohort.records) {
        ehr << r.patient_id << "," << g17(r.time) << "," << (r.event ? 1 : 0);
        for (double v : r.covariates) ehr << "," << g17(v);
        ehr << "\n";
        events += r.event ? 1 : 0;
    }
    write_text(out_dir + "/ehr.csv", ehr.str());

    std::ostringstream truth;
    truth << "PatientID,TrueRisk\n";
    for (std::size_t i = 0; i < cohort.records.size(); ++i) {
        truth << cohort.records[i].patient_id << "," << g17(cohort.true_risk[i]) << "\n";
    }
    write_text(out_dir + "/true_risk.csv", truth.str());

    EncodingSpec schema;
    for (int k = 1; k <= spec.d; ++k) {
        ColumnEncoder enc;
        enc.column = "x" + std::to_string(k);
        enc.kind = EncoderKind::Numeric;
        schema.encoders.push_back(std::move(enc));
    }
    write_text(out_dir + "/schema.json", schema_to_json(schema) + "\n");

    if (sim.value("volumes", false)) {
        fs::create_directories(out_dir + "/volumes");
        std::vector<VolumePair> pairs = generate_volumes(cohort.records, spec);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            fs::path base = fs::path(out_dir) / "volumes" / cohort.records[i].patient_id;
            save_volume(pairs[i].ct, base.string() + "_ct.f32", base.string() + ".json");
            save_volume(pairs[i].pet, base.string() + "_pet.f32", base.string() + ".json");
        }
        std::cout << "wrote " << pairs.size() << " CT/PET pairs -> " << out_dir << "/volumes\n";
    }
    std::cout << "simulated " << spec.n << " patients (" << events << " events, "
              << g17(double(spec.n - events) / double(spec.n)) << " censored) -> " << out_dir
              << "/ehr.csv\n";
}

void cmd_sweep(const json& cfg, const std::string& out_dir) {
    ModelKind kind = parse_model_kind(cfg.value("model", std::string("cox")));
    if (kind != ModelKind::Cox && kind != ModelKind::Mtlr && kind != ModelKind::NeuralMtlr)
        throw ConfigError("sweep supports cox, mtlr and neural-mtlr models");

    const json sw = section(cfg, "sweep");
    const json train = section(cfg, "train");
    int folds = sw.value("folds", 5);
    if (folds < 2) throw ConfigError("sweep.folds must be at least 2");

    std::vector<double> c_grid{train.value("c_reg", kind == ModelKind::Cox ? 0.0 : 1.0)};
    std::vector<double> lr_grid{train.value("lr", 0.016)};
    if (sw.contains("c_reg")) c_grid = sw["c_reg"].get<std::vector<double>>();
    if (sw.contains("lr")) lr_grid = sw["lr"].get<std::vector<double>>();
    if (c_grid.empty() || lr_grid.empty()) throw ConfigError("sweep grid is empty");

    LoadedCohort cohort = load_and_encode(cfg);
    const std::size_t n = cohort.records.size();
    if (n < static_cast<std::size_t>(folds))
        throw DataError("fewer rows than sweep folds");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(config_seed(cfg), 0xF01D5ULL));
    rng.shuffle(order);
    std::vector<int> fold_of(n);
    for (std::size_t i = 0; i < n; ++i) fold_of[order[i]] = static_cast<int>(i % folds);

    struct Row {
        double c_reg, lr, mean;
    };
    std::vector<Row> rows;
    for (double c : c_grid) {
        for (double lr : lr_grid) {
            double sum = 0.0;
            for (int f = 0; f < folds; ++f) {
                std::vector<SurvivalRecord> fit_part, val_part;
                for (std::size_t i = 0; i < n; ++i) {
                    (fold_of[i] == f ? val_part : fit_part).push_back(cohort.records[i]);
                }
                std::vector<RiskScore> risks;
                if (kind == ModelKind::Cox) {
                    CoxFitConfig cc = cox_config_from(train);
                    cc.ridge = c;
                    CoxModel model = fit_cox(fit_part, cc);
                    risks = cox_predict_risk(model, val_part);
                } else {
                    TimeGrid grid = make_time_grid(fit_part, train.value("grid_m", 0));
                    MtlrFitConfig mc = fit_config_from(train, config_seed(cfg));
                    mc.c_reg = c;
                    mc.lr = lr;
                    if (kind == ModelKind::Mtlr) {
                        MtlrFitResult fit = fit_mtlr(fit_part, grid, mc);
                        risks = mtlr_predict_risk(fit.params, val_part);
                    } else {
                        NeuralMtlrConfig nc;
                        nc.fit = mc;
                        if (train.contains("hidden"))
                            nc.hidden = train["hidden"].get<std::vector<int>>();
                        nc.dropout = train.value("dropout", 0.2);
                        NeuralMtlrFitResult fit = fit_neural_mtlr(fit_part, grid, nc);
                        risks = fit.model.predict_risk(val_part);
                    }
                }
                sum += concordance_index(risks, val_part);
            }
            rows.push_back({c, lr, sum / folds});
        }
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.mean > b.mean; });

    std::ostringstream csv;
    csv << "c_reg,lr,mean_val_cindex\n";
    for (const auto& r : rows) csv << g17(r.c_reg) << "," << g17(r.lr) << "," << g17(r.mean) << "\n";
    write_text(out_dir + "/leaderboard.csv", csv.str());
    std::cout << "best: c_reg=" << g17(rows.front().c_reg) << " lr=" << g17(rows.front().lr)
              << " mean_val_cindex=" << g17(rows.front().mean) << " (" << rows.size()
              << " grid points x " << folds << " folds)\n";
}

std::string sanitize_filename(const std::string& s) {
    std::string out;
    for (char c : s) {
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    }
    return out;
}

void cmd_plot(const json& cfg, const std::string& out_dir) {
    const json pl = section(cfg, "plot");
    if (!pl.contains("model_path")) throw ConfigError("config.plot.model_path is required");
    std::string model_path = pl["model_path"].get<std::string>();
    json model_json = json::parse(read_text(model_path), nullptr, false);
    if (model_json.is_discarded())
        throw DataError("model file '" + model_path + "' is not valid JSON");
    std::string tag = model_json.value("model", std::string(""));

    EncodingSpec fitted = encoding_from_model_json(model_json);
    std::vector<SurvivalRecord> records = load_and_apply(cfg, fitted);
    if (records.empty()) throw DataError("no usable rows in plot data");

    SurvivalCurve km = kaplan_meier(records);
    write_curve_csv(out_dir + "/km.csv", km);
    write_step_svg(out_dir + "/km.svg", {{"Kaplan-Meier", km}}, "Cohort survival");

    if (tag == "cox") {
        CoxModel model = cox_model_from_json(model_json.dump());
        std::string covariate = pl.value("covariate", std::string(""));
        if (covariate.empty()) {
            if (model.feature_names.empty()) throw ConfigError("plot.covariate is required");
            covariate = model.feature_names.front();
        }
        std::vector<double> values{-1.0, 0.0, 1.0};
        if (pl.contains("values")) values = pl["values"].get<std::vector<double>>();
        std::vector<SurvivalCurve> curves =
            partial_effect_curves(model, records, covariate, values);
        std::vector<PlotCurve> labeled;
        for (std::size_t i = 0; i < curves.size(); ++i) {
            std::string label = covariate + "=" + g17(values[i]);
            write_curve_csv(out_dir + "/partial_effect_" + std::to_string(i + 1) + ".csv",
                            curves[i]);
            labeled.push_back({label, curves[i]});
        }
        write_step_svg(out_dir + "/partial_effects.svg", labeled, "Partial effect of " + covariate);
        std::cout << "wrote km + " << curves.size() << " partial-effect curves -> " << out_dir
                  << "\n";
        return;
    }

    if (tag == "mtlr" || tag == "neural-mtlr") {
        std::vector<std::string> patients;
        if (pl.contains("patients")) patients = pl["patients"].get<std::vector<std::string>>();
        if (patients.empty()) {
            for (std::size_t i = 0; i < records.size() && i < 3; ++i)
                patients.push_back(records[i].patient_id);
        }
        MtlrParams params;
        NeuralMtlrModel neural;
        bool is_neural = tag == "neural-mtlr";
        if (is_neural) neural = neural_mtlr_model_from_json(model_json.dump());
        else params = mtlr_model_from_json(model_json.dump());

        std::vector<PlotCurve> labeled;
        for (const auto& id : patients) {
            auto it = std::find_if(records.begin(), records.end(),
                                   [&](const SurvivalRecord& r) { return r.patient_id == id; });
            if (it == records.end()) throw DataError("patient '" + id + "' not found in plot data");
            SurvivalCurve curve = is_neural ? neural.survival_curve(it->covariates)
                                            : mtlr_survival_curve(params, it->covariates);
            write_curve_csv(out_dir + "/survival_" + sanitize_filename(id) + ".csv", curve);
            labeled.push_back({id, curve});
        }
        write_step_svg(out_dir + "/survival_curves.svg", labeled, "Predicted survival");
        std::cout << "wrote km + " << labeled.size() << " survival curves -> " << out_dir << "\n";
        return;
    }

    throw ConfigError("plot supports cox, mtlr and neural-mtlr model files");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"survival prognosis over tabular EHR data and fused CT/PET volumes"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_flag, risks_flag, outcomes_flag;
    std::uint64_t seed_flag = 0;
    app.add_option("--config", config_path, "JSON run configuration");
    CLI::Option* seed_opt = app.add_option("--seed", seed_flag, "override config seed");
    app.add_option("--out", out_flag, "override output directory");

    app.add_subcommand("ingest", "parse and encode an EHR CSV against a schema");
    app.add_subcommand("train", "fit the configured model and write its artifacts");
    app.add_subcommand("predict", "score patients with a fitted model or ensemble");
    CLI::App* evaluate =
        app.add_subcommand("evaluate", "concordance of a risk CSV against outcomes");
    evaluate->add_option("--risks", risks_flag, "risk CSV (PatientID,Risk)");
    evaluate->add_option("--outcomes", outcomes_flag, "outcomes CSV (PatientID,Time,Event)");
    app.add_subcommand("simulate", "generate a synthetic cohort (EHR CSV, volumes)");
    app.add_subcommand("sweep", "k-fold cross-validated hyperparameter grid");
    app.add_subcommand("plot", "survival curve CSV + SVG plots from a fitted model");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        json cfg = config_path.empty() ? json::object() : load_config_file(config_path);
        validate_config(cfg);
        if (seed_opt->count() > 0) cfg["seed"] = seed_flag;
        if (!out_flag.empty()) cfg["out"] = out_flag;

        std::string out_dir = cfg.value("out", std::string("out"));
        fs::create_directories(out_dir);
        json resolved = cfg;
        resolved["command"] = command;
        write_text(out_dir + "/resolved_config.json", resolved.dump(2) + "\n");

        if (command == "ingest") cmd_ingest(cfg, out_dir);
        else if (command == "train") cmd_train(cfg, out_dir);
        else if (command == "predict") cmd_predict(cfg, out_dir);
        else if (command == "evaluate") cmd_evaluate(cfg, out_dir, risks_flag, outcomes_flag);
        else if (command == "simulate") cmd_simulate(cfg, out_dir);
        else if (command == "sweep") cmd_sweep(cfg, out_dir);
        else if (command == "plot") cmd_plot(cfg, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help() << "\n";
        return e.exit_code();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

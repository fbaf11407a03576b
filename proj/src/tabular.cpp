#include "survfuse/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "survfuse/errors.hpp"

namespace survfuse {

namespace {

using nlohmann::json;

// minimal CSV line splitter with double-quote support
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cell);
            cell.clear();
        } else {
            cell += c;
        }
    }
    out.push_back(cell);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(s, &pos);
        return pos == s.size() && std::isfinite(out);
    } catch (...) {
        return false;
    }
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

EncoderKind kind_from_string(const std::string& s) {
    if (s == "numeric") return EncoderKind::Numeric;
    if (s == "ordinal") return EncoderKind::Ordinal;
    if (s == "one_hot" || s == "one-hot") return EncoderKind::OneHot;
    if (s == "ternary") return EncoderKind::Ternary;
    throw ConfigError("unknown encoder kind '" + s + "'");
}

std::string kind_to_string(EncoderKind k) {
    switch (k) {
        case EncoderKind::Numeric: return "numeric";
        case EncoderKind::Ordinal: return "ordinal";
        case EncoderKind::OneHot: return "one_hot";
        case EncoderKind::Ternary: return "ternary";
    }
    return "numeric";
}

}  // namespace

std::vector<std::string> EncodingSpec::feature_names() const {
    std::vector<std::string> out;
    for (const auto& f : features) out.push_back(f.name);
    return out;
}

const EhrColumn* EhrTable::find_column(const std::string& name) const {
    for (const auto& c : columns) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

EhrTable parse_ehr_csv(const std::string& path, const EncodingSpec& spec) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open EHR CSV '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw DataError("EHR CSV '" + path + "' is empty");
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = trim(h);

    auto col_index = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<int>(it - header.begin());
    };
    int id_ix = col_index("PatientID");
    int time_ix = col_index("Time");
    int event_ix = col_index("Event");
    if (id_ix < 0 || time_ix < 0 || event_ix < 0) {
        throw DataError("EHR CSV missing required column(s) PatientID,Time,Event");
    }
    for (const auto& enc : spec.encoders) {
        if (col_index(enc.column) < 0) {
            throw DataError("EHR CSV missing schema column '" + enc.column + "'");
        }
    }

    EhrTable table;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (static_cast<int>(i) == id_ix || static_cast<int>(i) == time_ix ||
            static_cast<int>(i) == event_ix) {
            continue;
        }
        table.columns.push_back({header[i], {}});
    }

    std::unordered_set<std::string> seen_ids;
    int row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        cells.resize(header.size());
        for (auto& c : cells) c = trim(c);

        const std::string& id = cells[id_ix];
        double t;
        if (!parse_double(cells[time_ix], t) || !(t > 0.0)) {
            table.diagnostics.push_back("row " + std::to_string(row_no) + " (" + id +
                                        "): unparseable Time '" + cells[time_ix] + "'");
            continue;
        }
        const std::string& ev = cells[event_ix];
        if (ev != "0" && ev != "1") {
            table.diagnostics.push_back("row " + std::to_string(row_no) + " (" + id +
                                        "): Event must be 0 or 1, got '" + ev + "'");
            continue;
        }
        if (!seen_ids.insert(id).second) {
            throw DataError("duplicate patient id '" + id + "' in '" + path + "'");
        }

        table.ids.push_back(id);
        table.times.push_back(t);
        table.events.push_back(ev == "1" ? 1 : 0);
        std::size_t ci = 0;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (static_cast<int>(i) == id_ix || static_cast<int>(i) == time_ix ||
                static_cast<int>(i) == event_ix) {
                continue;
            }
            table.columns[ci++].cells.push_back(cells[i]);
        }
    }

    // numeric columns must parse wherever non-blank
    for (const auto& enc : spec.encoders) {
        if (enc.kind != EncoderKind::Numeric) continue;
        const EhrColumn* col = table.find_column(enc.column);
        if (!col) continue;
        for (std::size_t r = 0; r < col->cells.size(); ++r) {
            double v;
            if (!col->cells[r].empty() && !parse_double(col->cells[r], v)) {
                throw DataError("malformed numeric in column '" + enc.column + "' row for patient '" +
                                table.ids[r] + "': '" + col->cells[r] + "'");
            }
        }
    }
    return table;
}

namespace {

struct FeatureBuild {
    FeatureEncoding meta;
    std::vector<double> values;
};

// expand one column into raw (pre-standardization) feature columns
std::vector<FeatureBuild> build_features(const EhrTable& table, const ColumnEncoder& enc,
                                         MissingPolicy policy, std::vector<std::string>& warnings) {
    const EhrColumn* col = table.find_column(enc.column);
    if (!col) throw DataError("schema column '" + enc.column + "' not found in table");
    const std::size_t n = table.rows();

    std::vector<FeatureBuild> out;
    switch (enc.kind) {
        case EncoderKind::Numeric:
        case EncoderKind::Ordinal: {
            FeatureBuild f;
            f.meta.name = enc.column;
            f.meta.column = enc.column;
            f.meta.kind = enc.kind;
            f.values.resize(n);
            for (std::size_t r = 0; r < n; ++r) {
                const std::string& cell = col->cells[r];
                if (cell.empty()) {
                    throw DataError("missing value in column '" + enc.column +
                                    "' under impute policy; declare it ternary or use --policy drop");
                }
                if (enc.kind == EncoderKind::Numeric) {
                    double v;
                    if (!parse_double(cell, v)) {
                        throw DataError("malformed numeric in column '" + enc.column + "': '" + cell + "'");
                    }
                    f.values[r] = v;
                } else {
                    auto it = enc.ordinal_map.find(cell);
                    if (it == enc.ordinal_map.end()) {
                        throw DataError("value '" + cell + "' not in ordinal map for column '" +
                                        enc.column + "'");
                    }
                    f.values[r] = it->second;
                }
            }
            out.push_back(std::move(f));
            break;
        }
        case EncoderKind::Ternary: {
            FeatureBuild f;
            f.meta.name = enc.column;
            f.meta.column = enc.column;
            f.meta.kind = EncoderKind::Ternary;
            f.values.resize(n);
            for (std::size_t r = 0; r < n; ++r) {
                const std::string& cell = col->cells[r];
                if (cell.empty()) {
                    f.values[r] = 0.0;  // missing
                } else if (contains(enc.positive, cell)) {
                    f.values[r] = 1.0;
                } else if (contains(enc.negative, cell)) {
                    f.values[r] = -1.0;
                } else {
                    throw DataError("value '" + cell + "' in ternary column '" + enc.column +
                                    "' matches neither positive nor negative list");
                }
            }
            out.push_back(std::move(f));
            break;
        }
        case EncoderKind::OneHot: {
            std::vector<std::string> levels = enc.levels;
            if (levels.empty()) {
                for (const auto& cell : col->cells) {
                    if (cell.empty()) {
                        throw DataError("missing value in one-hot column '" + enc.column +
                                        "' under impute policy; use --policy drop");
                    }
                    if (!contains(levels, cell)) levels.push_back(cell);
                }
            }
            // first level is the reference and gets no indicator
            for (std::size_t li = 1; li < levels.size(); ++li) {
                FeatureBuild f;
                f.meta.name = enc.column + "=" + levels[li];
                f.meta.column = enc.column;
                f.meta.kind = EncoderKind::OneHot;
                f.meta.level = levels[li];
                f.values.resize(n);
                for (std::size_t r = 0; r < n; ++r) {
                    f.values[r] = col->cells[r] == levels[li] ? 1.0 : 0.0;
                }
                out.push_back(std::move(f));
            }
            break;
        }
    }
    (void)policy;
    (void)warnings;
    return out;
}

bool column_has_missing(const EhrTable& table, const std::string& name) {
    const EhrColumn* col = table.find_column(name);
    if (!col) throw DataError("schema column '" + name + "' not found in table");
    for (const auto& cell : col->cells) {
        if (cell.empty()) return true;
    }
    return false;
}

std::vector<SurvivalRecord> to_records(const EhrTable& table,
                                       const std::vector<std::vector<double>>& feature_rows) {
    std::vector<SurvivalRecord> records(table.rows());
    for (std::size_t r = 0; r < table.rows(); ++r) {
        records[r].patient_id = table.ids[r];
        records[r].time = table.times[r];
        records[r].event = table.events[r] != 0;
        records[r].covariates = feature_rows[r];
    }
    return records;
}

}  // namespace

EncodeResult encode(const EhrTable& table, const EncodingSpec& spec, MissingPolicy policy) {
    if (table.rows() == 0) throw DataError("encode: empty table");

    // every non-outcome column must have exactly one encoder
    for (const auto& col : table.columns) {
        int n = 0;
        for (const auto& enc : spec.encoders) {
            if (enc.column == col.name) ++n;
        }
        if (n != 1) {
            throw ConfigError("column '" + col.name + "' has " + std::to_string(n) +
                              " encoders; expected exactly one");
        }
    }

    EncodeResult result;
    result.spec = spec;
    result.spec.policy = policy;
    result.spec.features.clear();

    std::vector<FeatureBuild> built;
    for (auto& enc : result.spec.encoders) {
        if (policy == MissingPolicy::Drop && column_has_missing(table, enc.column)) {
            result.warnings.push_back("column '" + enc.column + "' dropped: has missing cells");
            continue;
        }
        auto fs = build_features(table, enc, policy, result.warnings);
        // record fitted one-hot levels back into the encoder
        if (enc.kind == EncoderKind::OneHot && enc.levels.empty()) {
            const EhrColumn* col = table.find_column(enc.column);
            for (const auto& cell : col->cells) {
                if (!contains(enc.levels, cell)) enc.levels.push_back(cell);
            }
        }
        for (auto& f : fs) built.push_back(std::move(f));
    }

    const std::size_t n = table.rows();

    // drop zero-variance features, standardize numeric and ordinal ones
    std::vector<FeatureBuild> kept;
    for (auto& f : built) {
        double mean = 0.0;
        for (double v : f.values) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : f.values) var += (v - mean) * (v - mean);
        var /= n;
        if (var == 0.0) {
            result.warnings.push_back("feature '" + f.meta.name + "' dropped: zero variance");
            continue;
        }
        if (f.meta.kind == EncoderKind::Numeric || f.meta.kind == EncoderKind::Ordinal) {
            double sd = std::sqrt(var);
            f.meta.mean = mean;
            f.meta.sd = sd;
            f.meta.standardized = true;
            for (double& v : f.values) v = (v - mean) / sd;
        }
        kept.push_back(std::move(f));
    }
    if (kept.empty()) throw DataError("encode: all feature columns were dropped");

    std::vector<std::vector<double>> rows(n, std::vector<double>(kept.size()));
    for (std::size_t fi = 0; fi < kept.size(); ++fi) {
        result.spec.features.push_back(kept[fi].meta);
        for (std::size_t r = 0; r < n; ++r) rows[r][fi] = kept[fi].values[r];
    }
    result.spec.fitted = true;
    result.records = to_records(table, rows);
    return result;
}

ApplyResult apply_encoding(const EhrTable& table, const EncodingSpec& fitted) {
    if (!fitted.fitted) throw ConfigError("apply_encoding: spec has not been fitted");

    ApplyResult result;
    const std::size_t n = table.rows();
    std::vector<std::vector<double>> rows(n, std::vector<double>(fitted.features.size()));

    // count unseen one-hot values once per (column, value)
    std::set<std::pair<std::string, std::string>> unseen;

    for (std::size_t fi = 0; fi < fitted.features.size(); ++fi) {
        const FeatureEncoding& f = fitted.features[fi];
        const EhrColumn* col = table.find_column(f.column);
        if (!col) throw DataError("column '" + f.column + "' required by encoding is absent");
        const ColumnEncoder* enc = nullptr;
        for (const auto& e : fitted.encoders) {
            if (e.column == f.column) enc = &e;
        }
        if (!enc) throw ConfigError("no encoder for fitted feature column '" + f.column + "'");

        for (std::size_t r = 0; r < n; ++r) {
            const std::string& cell = col->cells[r];
            double v = 0.0;
            switch (f.kind) {
                case EncoderKind::Numeric: {
                    if (cell.empty() || !parse_double(cell, v)) {
                        throw DataError("bad numeric '" + cell + "' in column '" + f.column + "'");
                    }
                    break;
                }
                case EncoderKind::Ordinal: {
                    auto it = enc->ordinal_map.find(cell);
                    if (it == enc->ordinal_map.end()) {
                        throw DataError("value '" + cell + "' not in ordinal map for column '" +
                                        f.column + "'");
                    }
                    v = it->second;
                    break;
                }
                case EncoderKind::Ternary: {
                    if (cell.empty()) v = 0.0;
                    else if (contains(enc->positive, cell)) v = 1.0;
                    else if (contains(enc->negative, cell)) v = -1.0;
                    else {
                        throw DataError("value '" + cell + "' in ternary column '" + f.column +
                                        "' matches neither list");
                    }
                    break;
                }
                case EncoderKind::OneHot: {
                    if (!contains(enc->levels, cell)) {
                        if (unseen.insert({f.column, cell}).second) {
                            result.warnings.push_back("unseen level '" + cell + "' in column '" +
                                                      f.column + "'; encoded as all-zero block");
                        }
                        v = 0.0;
                    } else {
                        v = cell == f.level ? 1.0 : 0.0;
                    }
                    break;
                }
            }
            if (f.standardized) v = (v - f.mean) / f.sd;
            rows[r][fi] = v;
        }
    }

    result.records = to_records(table, rows);
    return result;
}

EncodingSpec schema_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    EncodingSpec spec;

    if (!j.contains("columns") || !j["columns"].is_object()) {
        throw ConfigError("schema JSON must contain a 'columns' object");
    }
    for (const auto& [name, cfg] : j["columns"].items()) {
        ColumnEncoder enc;
        enc.column = name;
        enc.kind = kind_from_string(cfg.value("encoder", "numeric"));
        if (cfg.contains("map")) {
            for (const auto& [k, v] : cfg["map"].items()) enc.ordinal_map[k] = v.get<double>();
        }
        if (cfg.contains("levels")) enc.levels = cfg["levels"].get<std::vector<std::string>>();
        if (cfg.contains("positive")) enc.positive = cfg["positive"].get<std::vector<std::string>>();
        if (cfg.contains("negative")) enc.negative = cfg["negative"].get<std::vector<std::string>>();
        spec.encoders.push_back(std::move(enc));
    }
    if (j.contains("policy")) {
        std::string p = j["policy"].get<std::string>();
        if (p == "impute") spec.policy = MissingPolicy::Impute;
        else if (p == "drop") spec.policy = MissingPolicy::Drop;
        else throw ConfigError("schema policy must be 'impute' or 'drop'");
    }
    if (j.contains("features")) {
        for (const auto& fj : j["features"]) {
            FeatureEncoding f;
            f.name = fj.at("name").get<std::string>();
            f.column = fj.at("column").get<std::string>();
            f.kind = kind_from_string(fj.at("kind").get<std::string>());
            f.level = fj.value("level", "");
            f.mean = fj.value("mean", 0.0);
            f.sd = fj.value("sd", 1.0);
            f.standardized = fj.value("standardized", false);
            spec.features.push_back(std::move(f));
        }
        spec.fitted = true;
    }
    return spec;
}

EncodingSpec load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open schema '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return schema_from_json(ss.str());
    } catch (const json::exception& e) {
        throw ConfigError("invalid schema JSON '" + path + "': " + e.what());
    }
}

std::string schema_to_json(const EncodingSpec& spec) {
    json j;
    j["columns"] = json::object();
    for (const auto& enc : spec.encoders) {
        json cfg;
        cfg["encoder"] = kind_to_string(enc.kind);
        if (!enc.ordinal_map.empty()) {
            json m = json::object();
            for (const auto& [k, v] : enc.ordinal_map) m[k] = v;
            cfg["map"] = m;
        }
        if (!enc.levels.empty()) cfg["levels"] = enc.levels;
        if (enc.kind == EncoderKind::Ternary) {
            cfg["positive"] = enc.positive;
            cfg["negative"] = enc.negative;
        }
        j["columns"][enc.column] = cfg;
    }
    j["policy"] = spec.policy == MissingPolicy::Impute ? "impute" : "drop";
    if (spec.fitted) {
        j["features"] = json::array();
        for (const auto& f : spec.features) {
            json fj;
            fj["name"] = f.name;
            fj["column"] = f.column;
            fj["kind"] = kind_to_string(f.kind);
            if (!f.level.empty()) fj["level"] = f.level;
            fj["mean"] = f.mean;
            fj["sd"] = f.sd;
            fj["standardized"] = f.standardized;
            j["features"].push_back(fj);
        }
    }
    return j.dump(2);
}

}  // namespace survfuse

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "survfuse/survival.hpp"

namespace survfuse {

enum class EncoderKind { Numeric, Ordinal, OneHot, Ternary };
enum class MissingPolicy { Impute, Drop };

// Per-column encoder declaration, read from the schema JSON.
struct ColumnEncoder {
    std::string column;
    EncoderKind kind = EncoderKind::Numeric;
    std::map<std::string, double> ordinal_map;            // ordinal only
    std::vector<std::string> levels;                      // one-hot; fitted from data when empty
    std::vector<std::string> positive{"1", "yes", "true"};   // ternary -> +1
    std::vector<std::string> negative{"0", "no", "false", "-1"};  // ternary -> -1
};

// One fitted output feature: where it came from and the train statistics
// used to standardize it (numeric and ordinal features only).
struct FeatureEncoding {
    std::string name;           // e.g. "Age" or "Gender=F"
    std::string column;
    EncoderKind kind = EncoderKind::Numeric;
    std::string level;          // one-hot level this feature indicates
    double mean = 0.0;
    double sd = 1.0;
    bool standardized = false;
};

struct EncodingSpec {
    std::vector<ColumnEncoder> encoders;
    MissingPolicy policy = MissingPolicy::Impute;
    std::vector<FeatureEncoding> features;  // present once fitted
    bool fitted = false;

    std::vector<std::string> feature_names() const;
};

struct EhrColumn {
    std::string name;
    std::vector<std::string> cells;  // raw strings; "" marks a missing cell
};

// Typed EHR table keyed by patient id, with outcome columns split out.
struct EhrTable {
    std::vector<std::string> ids;
    std::vector<double> times;
    std::vector<int> events;
    std::vector<EhrColumn> columns;
    std::vector<std::string> diagnostics;  // row-level rejections from parsing

    std::size_t rows() const { return ids.size(); }
    const EhrColumn* find_column(const std::string& name) const;
};

struct EncodeResult {
    std::vector<SurvivalRecord> records;
    EncodingSpec spec;  // fitted
    std::vector<std::string> warnings;
};

struct ApplyResult {
    std::vector<SurvivalRecord> records;
    std::vector<std::string> warnings;
};

// CSV with a header row; required columns PatientID, Time, Event. Rows whose
// outcome fields fail to parse are dropped and reported in diagnostics.
EhrTable parse_ehr_csv(const std::string& path, const EncodingSpec& spec);

// Fit the encoding on a training table and produce standardized records.
EncodeResult encode(const EhrTable& table, const EncodingSpec& spec, MissingPolicy policy);

// Transform a table with an already fitted spec (test-time path).
ApplyResult apply_encoding(const EhrTable& table, const EncodingSpec& fitted);

// Schema JSON <-> EncodingSpec
EncodingSpec load_schema(const std::string& path);
std::string schema_to_json(const EncodingSpec& spec);      // serialized fitted spec
EncodingSpec schema_from_json(const std::string& json_text);

}  // namespace survfuse

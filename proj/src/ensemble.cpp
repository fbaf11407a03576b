#include "survfuse/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "survfuse/errors.hpp"

namespace survfuse {

std::vector<RiskScore> standardize_risks(const std::vector<RiskScore>& risks,
                                         RiskNormalization method) {
    if (risks.empty()) throw DataError("empty risk list");
    std::vector<RiskScore> out = risks;
    switch (method) {
        case RiskNormalization::None:
            return out;
        case RiskNormalization::ZScore: {
            double mean = 0.0;
            for (const auto& r : risks) mean += r.value;
            mean /= static_cast<double>(risks.size());
            double var = 0.0;
            for (const auto& r : risks) var += (r.value - mean) * (r.value - mean);
            var /= static_cast<double>(risks.size());
            if (var == 0.0)
                throw DataError(
                    "constant risks: z-score normalization undefined; use rank or none");
            const double inv_sd = 1.0 / std::sqrt(var);
            for (auto& r : out) r.value = (r.value - mean) * inv_sd;
            return out;
        }
        case RiskNormalization::Rank: {
            const std::size_t n = risks.size();
            std::vector<std::size_t> idx(n);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                return risks[a].value < risks[b].value;
            });
            std::vector<double> rank(n, 0.0);
            for (std::size_t i = 0; i < n;) {
                std::size_t j = i;
                while (j < n && risks[idx[j]].value == risks[idx[i]].value) ++j;
                const double avg = 0.5 * static_cast<double>(i + j - 1) + 1.0;  // 1-based
                for (std::size_t k = i; k < j; ++k) rank[idx[k]] = avg;
                i = j;
            }
            for (std::size_t i = 0; i < n; ++i)
                out[i].value = n == 1 ? 0.5 : (rank[i] - 1.0) / static_cast<double>(n - 1);
            return out;
        }
    }
    throw ConfigError("unknown risk normalization");
}

std::vector<RiskScore> average_risks(const std::vector<std::vector<RiskScore>>& member_risks,
                                     const EnsembleSpec& spec) {
    if (member_risks.empty()) throw DataError("ensemble needs at least one member");
    const std::size_t k = member_risks.size();
    std::vector<double> weights = spec.weights;
    if (weights.empty()) weights.assign(k, 1.0 / static_cast<double>(k));
    if (weights.size() != k)
        throw ConfigError("ensemble has " + std::to_string(k) + " members but " +
                          std::to_string(weights.size()) + " weights");
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ConfigError("ensemble weights must be non-negative");
        wsum += w;
    }
    if (wsum <= 0.0) throw ConfigError("ensemble weights must not all be zero");
    for (double& w : weights) w /= wsum;

    const auto& first = member_risks.front();
    for (std::size_t mi = 1; mi < k; ++mi) {
        std::unordered_map<std::string, int> counts;
        for (const auto& r : first) counts[r.patient_id] += 1;
        for (const auto& r : member_risks[mi]) counts[r.patient_id] -= 1;
        std::vector<std::string> missing, extra;
        for (const auto& [id, c] : counts) {
            if (c > 0) missing.push_back(id);
            if (c < 0) extra.push_back(id);
        }
        if (!missing.empty() || !extra.empty()) {
            std::sort(missing.begin(), missing.end());
            std::sort(extra.begin(), extra.end());
            std::ostringstream os;
            os << "ensemble member " << mi + 1 << " patient set mismatch";
            if (!missing.empty()) {
                os << "; missing:";
                for (const auto& id : missing) os << " " << id;
            }
            if (!extra.empty()) {
                os << "; unexpected:";
                for (const auto& id : extra) os << " " << id;
            }
            throw DataError(os.str());
        }
    }

    std::vector<std::vector<RiskScore>> normalized;
    normalized.reserve(k);
    for (const auto& member : member_risks)
        normalized.push_back(standardize_risks(member, spec.normalization));

    std::vector<RiskScore> out;
    out.reserve(first.size());
    std::vector<std::unordered_map<std::string, double>> lookup(k);
    for (std::size_t mi = 1; mi < k; ++mi)
        for (const auto& r : normalized[mi]) lookup[mi][r.patient_id] = r.value;
    for (std::size_t i = 0; i < first.size(); ++i) {
        double acc = weights[0] * normalized[0][i].value;
        for (std::size_t mi = 1; mi < k; ++mi)
            acc += weights[mi] * lookup[mi].at(first[i].patient_id);
        out.push_back({first[i].patient_id, acc});
    }
    return out;
}

}  // namespace survfuse

#pragma once

#include <vector>

#include "survfuse/survival.hpp"

namespace survfuse {

enum class RiskNormalization { ZScore, Rank, None };

struct EnsembleSpec {
    std::vector<double> weights;  // empty selects equal weights
    RiskNormalization normalization = RiskNormalization::ZScore;
};

// zscore: (r - mean)/sd over the cohort; rank: average ranks scaled to [0,1];
// none: identity. Constant risks under zscore raise DataError.
std::vector<RiskScore> standardize_risks(const std::vector<RiskScore>& risks,
                                         RiskNormalization method);

// Per-patient weighted mean of the normalized member risks. Member lists must
// cover identical patient sets; the output follows the first member's order.
std::vector<RiskScore> average_risks(const std::vector<std::vector<RiskScore>>& member_risks,
                                     const EnsembleSpec& spec = {});

}  // namespace survfuse

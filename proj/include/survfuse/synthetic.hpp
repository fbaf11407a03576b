#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "survfuse/survival.hpp"
#include "survfuse/volume.hpp"

namespace survfuse {

// Proportional-hazards generator: x ~ N(0, I), event time Exponential with
// rate lambda * exp(beta . x), censoring Uniform(0, c_max). Volumes embed a
// centered spherical blob whose radius grows with the patient's true risk.
struct SyntheticSpec {
    int n = 100;
    int d = 3;
    std::vector<double> beta_true;  // resized to d with zeros when shorter
    double lambda = 0.1;
    double c_max = 30.0;
    std::uint64_t seed = 0;

    std::array<long, 3> volume_whd{24, 24, 16};  // blob volume shape as (W, H, D)
    double noise_sd = 0.05;
    double contrast = 1.0;
    double radius_min = 2.0;
    double radius_max = 6.0;

    void validate() const;  // throws ConfigError
};

struct SyntheticCohort {
    std::vector<SurvivalRecord> records;
    std::vector<double> true_risk;  // beta . x, the ground-truth linear predictor
};

SyntheticCohort generate_tabular(const SyntheticSpec& spec);

struct VolumePair {
    Volume ct;
    Volume pet;
};

// One CT/PET pair per record; the records must carry the generator's raw
// covariates so the true risk can be recomputed from spec.beta_true.
std::vector<VolumePair> generate_volumes(const std::vector<SurvivalRecord>& records,
                                         const SyntheticSpec& spec);

}  // namespace survfuse

#include "survfuse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "survfuse/errors.hpp"
#include "survfuse/rng.hpp"

namespace survfuse {

void SyntheticSpec::validate() const {
    if (n <= 0) throw ConfigError("cohort size must be positive");
    if (d <= 0) throw ConfigError("covariate dimension must be positive");
    if (!(lambda > 0.0)) throw ConfigError("baseline rate lambda must be positive");
    if (!(c_max > 0.0)) throw ConfigError("censoring bound c_max must be positive");
    for (long s : volume_whd)
        if (s <= 0) throw ConfigError("volume shape must be positive per axis");
    if (noise_sd < 0.0) throw ConfigError("noise sd must be non-negative");
    if (!(radius_min > 0.0) || radius_max < radius_min)
        throw ConfigError("blob radius range must satisfy 0 < min <= max");
}

namespace {

std::vector<double> padded_beta(const SyntheticSpec& spec) {
    std::vector<double> beta = spec.beta_true;
    beta.resize(static_cast<std::size_t>(spec.d), 0.0);
    return beta;
}

std::string patient_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "P%04d", i + 1);
    return buf;
}

}  // namespace

SyntheticCohort generate_tabular(const SyntheticSpec& spec) {
    spec.validate();
    const auto beta = padded_beta(spec);
    SyntheticCohort cohort;
    cohort.records.reserve(static_cast<std::size_t>(spec.n));
    cohort.true_risk.reserve(static_cast<std::size_t>(spec.n));
    for (int i = 0; i < spec.n; ++i) {
        Rng rng(mix_seed(spec.seed, 0x100000ULL + static_cast<std::uint64_t>(i)));
        SurvivalRecord rec;
        rec.patient_id = patient_name(i);
        rec.covariates.resize(static_cast<std::size_t>(spec.d));
        for (double& x : rec.covariates) x = rng.normal();
        double lp = 0.0;
        for (int f = 0; f < spec.d; ++f)
            lp += beta[static_cast<std::size_t>(f)] * rec.covariates[static_cast<std::size_t>(f)];
        const double rate = spec.lambda * std::exp(lp);
        const double u = rng.uniform();
        const double event_time = -std::log1p(-u) / rate;
        const double censor_time = rng.uniform(0.0, spec.c_max);
        rec.event = event_time <= censor_time;
        rec.time = rec.event ? event_time : censor_time;
        cohort.records.push_back(std::move(rec));
        cohort.true_risk.push_back(lp);
    }
    return cohort;
}

std::vector<VolumePair> generate_volumes(const std::vector<SurvivalRecord>& records,
                                         const SyntheticSpec& spec) {
    spec.validate();
    if (records.empty()) throw DataError("empty cohort");
    const auto beta = padded_beta(spec);
    std::vector<double> risk(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (static_cast<int>(records[i].covariates.size()) != spec.d)
            throw DataError("record covariates do not match the generator dimension");
        double lp = 0.0;
        for (int f = 0; f < spec.d; ++f)
            lp += beta[static_cast<std::size_t>(f)] *
                  records[i].covariates[static_cast<std::size_t>(f)];
        risk[i] = lp;
    }
    const auto [lo_it, hi_it] = std::minmax_element(risk.begin(), risk.end());
    const double lo = *lo_it, hi = *hi_it;

    const std::array<long, 3> shape{spec.volume_whd[2], spec.volume_whd[1], spec.volume_whd[0]};
    const double cd = 0.5 * static_cast<double>(shape[0] - 1);
    const double ch = 0.5 * static_cast<double>(shape[1] - 1);
    const double cw = 0.5 * static_cast<double>(shape[2] - 1);

    std::vector<VolumePair> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const double t = hi > lo ? (risk[i] - lo) / (hi - lo) : 0.5;
        const double radius = spec.radius_min + t * (spec.radius_max - spec.radius_min);
        Volume base;
        base.shape = shape;
        base.data.assign(static_cast<std::size_t>(base.size()), 0.0);
        for (long d = 0; d < shape[0]; ++d)
            for (long h = 0; h < shape[1]; ++h)
                for (long w = 0; w < shape[2]; ++w) {
                    const double dd = static_cast<double>(d) - cd;
                    const double dh = static_cast<double>(h) - ch;
                    const double dw = static_cast<double>(w) - cw;
                    if (dd * dd + dh * dh + dw * dw <= radius * radius)
                        base.at(d, h, w) = spec.contrast;
                }
        VolumePair pair{base, base};
        if (spec.noise_sd > 0.0) {
            Rng ct_rng(mix_seed(spec.seed, 0x200000ULL + static_cast<std::uint64_t>(i)));
            Rng pet_rng(mix_seed(spec.seed, 0x300000ULL + static_cast<std::uint64_t>(i)));
            for (double& v : pair.ct.data) v += spec.noise_sd * ct_rng.normal();
            for (double& v : pair.pet.data) v += spec.noise_sd * pet_rng.normal();
        }
        out.push_back(std::move(pair));
    }
    return out;
}

}  // namespace survfuse

#pragma once

#include <string>
#include <vector>

namespace survfuse {

// One patient: standardized covariates, follow-up time in days, and whether
// the event was observed (event == false means right censored).
struct SurvivalRecord {
    std::string patient_id;
    std::vector<double> covariates;
    double time = 0.0;
    bool event = false;
};

// Strictly increasing positive time points t_1 < ... < t_m discretizing
// follow-up for MTLR.
struct TimeGrid {
    std::vector<double> points;

    int size() const { return static_cast<int>(points.size()); }
    void validate() const;  // throws DataError on violation
};

// Step survival function. times[0] == 0 and probabilities[0] == 1; the curve
// is right-continuous: S(t) = probabilities[i] for the largest times[i] <= t.
struct SurvivalCurve {
    std::vector<double> times;
    std::vector<double> probabilities;

    double at(double t) const;
};

struct RiskScore {
    std::string patient_id;
    double value = 0.0;
};

// Harrell's C over pairs (i, j) with time_i < time_j and event_i observed:
// credit 1 if risk_i > risk_j, 0.5 on ties, 0 otherwise.
// Throws DataError when ids do not match, EvalError when no pair is comparable.
double concordance_index(const std::vector<RiskScore>& risks,
                         const std::vector<SurvivalRecord>& records);

struct ConcordanceReport {
    double cindex = 0.0;
    long long comparable_pairs = 0;
    double credit = 0.0;  // concordant pairs plus half credit per risk tie
};

ConcordanceReport concordance_report(const std::vector<RiskScore>& risks,
                                     const std::vector<SurvivalRecord>& records);

// Product-limit estimate. Censored subjects leave the risk set without a drop;
// curve points sit at the distinct event times.
SurvivalCurve kaplan_meier(const std::vector<SurvivalRecord>& records);

// m points at the j/(m+1) quantiles (linear interpolation) of the observed
// event times; duplicates collapse. m <= 0 selects ceil(sqrt(#events)).
TimeGrid make_time_grid(const std::vector<SurvivalRecord>& records, int m = 0);

}  // namespace survfuse

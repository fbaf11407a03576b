#include "survfuse/survival.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "survfuse/errors.hpp"

namespace survfuse {

void TimeGrid::validate() const {
    if (points.empty()) throw DataError("time grid is empty");
    double prev = 0.0;
    for (double t : points) {
        if (!(t > prev) || !std::isfinite(t)) {
            throw DataError("time grid must be strictly increasing and positive");
        }
        prev = t;
    }
}

double SurvivalCurve::at(double t) const {
    double p = 1.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] <= t) p = probabilities[i];
        else break;
    }
    return p;
}

ConcordanceReport concordance_report(const std::vector<RiskScore>& risks,
                                     const std::vector<SurvivalRecord>& records) {
    std::unordered_map<std::string, double> risk_by_id;
    for (const auto& r : risks) risk_by_id[r.patient_id] = r.value;

    std::vector<double> eta(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto it = risk_by_id.find(records[i].patient_id);
        if (it == risk_by_id.end()) {
            throw DataError("no risk score for patient '" + records[i].patient_id + "'");
        }
        eta[i] = it->second;
    }

    ConcordanceReport rep;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!records[i].event) continue;
        for (std::size_t j = 0; j < records.size(); ++j) {
            if (records[i].time < records[j].time) {
                rep.comparable_pairs += 1;
                if (eta[i] > eta[j]) rep.credit += 1.0;
                else if (eta[i] == eta[j]) rep.credit += 0.5;
            }
        }
    }
    if (rep.comparable_pairs == 0) {
        throw EvalError("undefined C-index: no comparable pairs");
    }
    rep.cindex = rep.credit / static_cast<double>(rep.comparable_pairs);
    return rep;
}

double concordance_index(const std::vector<RiskScore>& risks,
                         const std::vector<SurvivalRecord>& records) {
    return concordance_report(risks, records).cindex;
}

SurvivalCurve kaplan_meier(const std::vector<SurvivalRecord>& records) {
    if (records.empty()) throw DataError("kaplan_meier: empty cohort");

    // events per distinct event time
    std::map<double, int> events;
    for (const auto& r : records) {
        if (r.event) events[r.time] += 1;
    }

    SurvivalCurve curve;
    curve.times.push_back(0.0);
    curve.probabilities.push_back(1.0);

    double s = 1.0;
    for (const auto& [t, d] : events) {
        int at_risk = 0;
        for (const auto& r : records) {
            if (r.time >= t) ++at_risk;
        }
        s *= 1.0 - static_cast<double>(d) / at_risk;
        curve.times.push_back(t);
        curve.probabilities.push_back(s);
    }
    return curve;
}

TimeGrid make_time_grid(const std::vector<SurvivalRecord>& records, int m) {
    std::vector<double> ev;
    for (const auto& r : records) {
        if (r.event) ev.push_back(r.time);
    }
    if (ev.empty()) throw DataError("make_time_grid: cohort has no events");
    std::sort(ev.begin(), ev.end());

    const int n = static_cast<int>(ev.size());
    if (m <= 0) m = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));

    TimeGrid grid;
    for (int j = 1; j <= m; ++j) {
        double p = static_cast<double>(j) / (m + 1);
        double h = p * (n - 1);
        int lo = static_cast<int>(std::floor(h));
        int hi = std::min(lo + 1, n - 1);
        double q = ev[lo] + (h - lo) * (ev[hi] - ev[lo]);
        if (grid.points.empty() || q > grid.points.back()) {
            grid.points.push_back(q);
        }
    }
    grid.validate();
    return grid;
}

}  // namespace survfuse

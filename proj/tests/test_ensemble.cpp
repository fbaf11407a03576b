#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "survfuse/ensemble.hpp"
#include "survfuse/errors.hpp"
#include "survfuse/rng.hpp"

using namespace survfuse;

namespace {

std::vector<RiskScore> risks_of(const std::vector<double>& values) {
    std::vector<RiskScore> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out.push_back({"P" + std::to_string(i), values[i]});
    }
    return out;
}

std::vector<int> argsort(const std::vector<RiskScore>& risks) {
    std::vector<int> idx(risks.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return risks[a].value < risks[b].value; });
    return idx;
}

}  // namespace

TEST_CASE("standardize: zscore uses the population standard deviation") {
    auto out = standardize_risks(risks_of({1, 2, 3}), RiskNormalization::ZScore);
    CHECK(out[0].value == doctest::Approx(-1.2247).epsilon(1e-4));
    CHECK(out[1].value == doctest::Approx(0.0).scale(1).epsilon(1e-12));
    CHECK(out[2].value == doctest::Approx(1.2247).epsilon(1e-4));
    CHECK(out[0].patient_id == "P0");
}

TEST_CASE("standardize: none is the identity") {
    auto in = risks_of({4.5, -2.0, 0.0, 4.5});
    auto out = standardize_risks(in, RiskNormalization::None);
    for (std::size_t i = 0; i < in.size(); ++i) {
        CHECK(out[i].value == in[i].value);
        CHECK(out[i].patient_id == in[i].patient_id);
    }
}

TEST_CASE("standardize: rank averages ties onto [0,1]") {
    auto out = standardize_risks(risks_of({5, 1, 1, 9}), RiskNormalization::Rank);
    CHECK(out[0].value == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(out[1].value == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(out[2].value == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(out[3].value == doctest::Approx(1.0).epsilon(1e-12));

    auto solo = standardize_risks(risks_of({7.0}), RiskNormalization::Rank);
    CHECK(solo[0].value == 0.5);
}

TEST_CASE("standardize: zscore preserves the ordering") {
    Rng rng(60);
    std::vector<double> values;
    for (int i = 0; i < 40; ++i) values.push_back(rng.normal() * 10.0);
    auto in = risks_of(values);
    auto out = standardize_risks(in, RiskNormalization::ZScore);
    CHECK(argsort(in) == argsort(out));
}

TEST_CASE("standardize: constant input under zscore suggests alternatives") {
    CHECK_THROWS_WITH_AS(standardize_risks(risks_of({3, 3, 3}), RiskNormalization::ZScore),
                         doctest::Contains("rank or none"), DataError);
    CHECK_NOTHROW(standardize_risks(risks_of({3, 3, 3}), RiskNormalization::Rank));
    CHECK_NOTHROW(standardize_risks(risks_of({3, 3, 3}), RiskNormalization::None));
    CHECK_THROWS_AS(standardize_risks({}, RiskNormalization::None), DataError);
}

TEST_CASE("average: identical members rank like either member") {
    auto member = risks_of({0.3, 1.9, -0.4, 0.8});
    auto out = average_risks({member, member});
    CHECK(argsort(out) == argsort(member));
    REQUIRE(out.size() == member.size());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i].patient_id == member[i].patient_id);
}

TEST_CASE("average: zero weight silences a member") {
    auto a = risks_of({1, 2, 3, 4});
    auto b = risks_of({9, -9, 0, 2});
    EnsembleSpec spec;
    spec.weights = {1.0, 0.0};
    auto out = average_risks({a, b}, spec);
    auto solo = standardize_risks(a, RiskNormalization::ZScore);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].value == doctest::Approx(solo[i].value).epsilon(1e-12));
    }
}

TEST_CASE("average: complete disagreement cancels under zscore") {
    auto out = average_risks({risks_of({1, 2, 3}), risks_of({3, 2, 1})});
    for (const auto& r : out) CHECK(std::fabs(r.value) < 1e-12);
}

TEST_CASE("average: member weights normalize to sum one") {
    auto a = risks_of({1, 2, 3, 4});
    auto b = risks_of({2, 1, 4, 3});
    EnsembleSpec spec;
    spec.weights = {2.0, 6.0};
    auto weighted = average_risks({a, b}, spec);
    EnsembleSpec quarter;
    quarter.weights = {0.25, 0.75};
    auto reference = average_risks({a, b}, quarter);
    for (std::size_t i = 0; i < weighted.size(); ++i) {
        CHECK(weighted[i].value == doctest::Approx(reference[i].value).epsilon(1e-12));
    }
}

TEST_CASE("average: bad weights are configuration errors") {
    auto a = risks_of({1, 2});
    auto b = risks_of({2, 1});
    EnsembleSpec negative;
    negative.weights = {1.0, -0.5};
    CHECK_THROWS_AS(average_risks({a, b}, negative), ConfigError);
    EnsembleSpec zeros;
    zeros.weights = {0.0, 0.0};
    CHECK_THROWS_AS(average_risks({a, b}, zeros), ConfigError);
    EnsembleSpec miscounted;
    miscounted.weights = {1.0};
    CHECK_THROWS_AS(average_risks({a, b}, miscounted), ConfigError);
    CHECK_THROWS_AS(average_risks({}), DataError);
}

TEST_CASE("average: patient-set mismatch names the missing ids") {
    auto a = risks_of({1, 2, 3});
    std::vector<RiskScore> b{{"P0", 1.0}, {"P1", 2.0}, {"P9", 3.0}};
    CHECK_THROWS_WITH_AS(average_risks({a, b}), doctest::Contains("missing: P2"), DataError);
    CHECK_THROWS_WITH_AS(average_risks({a, b}), doctest::Contains("unexpected: P9"), DataError);
}

TEST_CASE("average: member order may differ when ids align") {
    auto a = risks_of({1, 2, 3});
    std::vector<RiskScore> b{{"P2", 5.0}, {"P0", 1.0}, {"P1", 3.0}};
    auto out = average_risks({a, b});
    REQUIRE(out.size() == 3);
    CHECK(out[0].patient_id == "P0");  // first member's order wins
    CHECK(out[1].patient_id == "P1");
    CHECK(out[2].patient_id == "P2");
    // P0 pairs with 1.0, P1 with 3.0, P2 with 5.0: ranking agrees with member a
    CHECK(argsort(out) == argsort(a));
}

TEST_CASE("average: zscore ensembles ignore positive affine member rescaling") {
    Rng rng(61);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> va, vb;
        for (int i = 0; i < 25; ++i) {
            va.push_back(rng.normal());
            vb.push_back(rng.normal());
        }
        auto base = average_risks({risks_of(va), risks_of(vb)});

        double scale = 0.1 + 5.0 * rng.uniform();
        double shift = rng.normal() * 20.0;
        std::vector<double> va_affine;
        for (double v : va) va_affine.push_back(scale * v + shift);
        auto rescaled = average_risks({risks_of(va_affine), risks_of(vb)});

        CHECK(argsort(base) == argsort(rescaled));
        for (std::size_t i = 0; i < base.size(); ++i) {
            CHECK(rescaled[i].value == doctest::Approx(base[i].value).epsilon(1e-9));
        }
    }
}

TEST_CASE("average: many copies of one member keep its ranking") {
    auto member = risks_of({0.9, -1.4, 2.2, 0.0, 0.4});
    auto out = average_risks({member, member, member, member});
    CHECK(argsort(out) == argsort(member));
}

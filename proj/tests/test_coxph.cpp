#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "survfuse/coxph.hpp"
#include "survfuse/errors.hpp"
#include "survfuse/rng.hpp"
#include "survfuse/survival.hpp"
#include "survfuse/synthetic.hpp"

using namespace survfuse;

namespace {

SurvivalRecord rec(const std::string& id, std::vector<double> x, double time, bool event) {
    SurvivalRecord r;
    r.patient_id = id;
    r.covariates = std::move(x);
    r.time = time;
    r.event = event;
    return r;
}

std::vector<SurvivalRecord> random_records(Rng& rng, int n, int d, double censor_prob) {
    std::vector<SurvivalRecord> records;
    for (int i = 0; i < n; ++i) {
        std::vector<double> x(d);
        for (double& v : x) v = rng.normal();
        records.push_back(rec("P" + std::to_string(i), std::move(x), 0.5 + 9.5 * rng.uniform(),
                              rng.uniform() >= censor_prob));
    }
    if (std::none_of(records.begin(), records.end(),
                     [](const SurvivalRecord& r) { return r.event; })) {
        records[0].event = true;
    }
    return records;
}

double fd_rel(double analytic, double numeric) {
    return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
}

}  // namespace

TEST_CASE("nlpl: zero beta sums log risk-set sizes") {
    std::vector<SurvivalRecord> records{
        rec("a", {1, 0}, 1, true),  rec("b", {0, 1}, 2, true),  rec("c", {1, 1}, 3, false),
        rec("d", {0, 0}, 4, true),  rec("e", {2, -1}, 5, false),
    };
    CoxLikelihood l = neg_log_partial_likelihood({0.0, 0.0}, records);
    // events at t=1,2,4 with risk sets of size 5,4,2
    CHECK(l.value == doctest::Approx(std::log(5.0) + std::log(4.0) + std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("nlpl: two-patient hand expansion") {
    std::vector<SurvivalRecord> records{rec("a", {1}, 1, true), rec("b", {0}, 2, true)};
    for (double b : {0.0, 0.7, -1.3}) {
        CoxLikelihood l = neg_log_partial_likelihood({b}, records);
        CHECK(l.value == doctest::Approx(std::log(1.0 + std::exp(-b))).epsilon(1e-12));
    }
    CHECK(neg_log_partial_likelihood({0.0}, records).value ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("nlpl: zero events rejected") {
    std::vector<SurvivalRecord> records{rec("a", {1}, 1, false), rec("b", {0}, 2, false)};
    CHECK_THROWS_AS(neg_log_partial_likelihood({0.0}, records), DataError);
}

TEST_CASE("nlpl: gradient and Hessian match central finite differences") {
    const double h = 1e-5;
    for (int seed = 0; seed < 25; ++seed) {
        Rng rng(mix_seed(30, seed));
        int n = 6 + static_cast<int>(rng.index(5));
        int d = 2;
        auto records = random_records(rng, n, d, 0.3);
        std::vector<double> beta(d);
        for (double& b : beta) b = rng.normal() * 0.8;

        CoxLikelihood l = neg_log_partial_likelihood(beta, records);
        for (int k = 0; k < d; ++k) {
            std::vector<double> plus = beta, minus = beta;
            plus[k] += h;
            minus[k] -= h;
            double fd = (neg_log_partial_likelihood(plus, records).value -
                         neg_log_partial_likelihood(minus, records).value) /
                        (2 * h);
            CHECK(fd_rel(l.gradient[k], fd) < 1e-5);

            // Hessian row k from gradient differences
            CoxLikelihood gp = neg_log_partial_likelihood(plus, records);
            CoxLikelihood gm = neg_log_partial_likelihood(minus, records);
            for (int j = 0; j < d; ++j) {
                double fd2 = (gp.gradient[j] - gm.gradient[j]) / (2 * h);
                CHECK(fd_rel(l.hessian[k * d + j], fd2) < 1e-5);
            }
        }
    }
}

TEST_CASE("fit: recovers generating coefficients on a synthetic cohort") {
    SyntheticSpec spec;
    spec.n = 800;
    spec.d = 3;
    spec.beta_true = {1.0, -0.5, 0.0};
    spec.lambda = 0.1;
    spec.c_max = 30.0;
    spec.seed = 314;
    SyntheticCohort cohort = generate_tabular(spec);

    CoxModel model = fit_cox(cohort.records);
    CHECK(model.report.converged);
    CHECK(std::fabs(model.beta[0] - 1.0) < 0.25);
    CHECK(std::fabs(model.beta[1] + 0.5) < 0.25);
    CHECK(std::fabs(model.beta[2]) < 0.25);
}

TEST_CASE("fit: well-conditioned problems converge in few Newton steps") {
    SyntheticSpec spec;
    spec.n = 200;
    spec.d = 2;
    spec.beta_true = {0.8, -0.3};
    spec.seed = 99;
    CoxModel model = fit_cox(generate_tabular(spec).records);
    CHECK(model.report.converged);
    CHECK(model.report.iterations <= 10);
    CHECK(model.report.final_grad_norm < 1e-8);
    CHECK(static_cast<int>(model.report.grad_norm_trace.size()) == model.report.iterations + 1);
}

TEST_CASE("fit: separation is tamed by ridge") {
    // group x=1 always fails first: monotone likelihood
    std::vector<SurvivalRecord> records{
        rec("a", {1}, 1, true), rec("b", {1}, 2, true), rec("c", {1}, 3, true),
        rec("d", {0}, 4, true), rec("e", {0}, 5, true), rec("f", {0}, 6, true),
    };
    CoxFitConfig config;
    config.ridge = 1.0;
    CoxModel model = fit_cox(records, config);
    CHECK(std::isfinite(model.beta[0]));
    CHECK(model.beta[0] > 0.0);
    CHECK(model.beta[0] < 10.0);
}

TEST_CASE("fit: degenerate cohorts rejected") {
    std::vector<SurvivalRecord> one_event{rec("a", {1}, 1, true), rec("b", {0}, 2, false)};
    CHECK_THROWS_AS(fit_cox(one_event), DataError);

    std::vector<SurvivalRecord> constant{rec("a", {1, 3}, 1, true), rec("b", {0, 3}, 2, true)};
    CHECK_THROWS_AS(fit_cox(constant), DataError);
}

TEST_CASE("fit: beta depends on time ranks only") {
    Rng rng(41);
    auto records = random_records(rng, 60, 2, 0.25);
    CoxModel base = fit_cox(records);

    auto cubed = records;
    for (auto& r : cubed) r.time = r.time * r.time * r.time;
    CoxModel transformed = fit_cox(cubed);
    for (int k = 0; k < 2; ++k) {
        CHECK(std::fabs(base.beta[k] - transformed.beta[k]) < 1e-8);
    }
}

TEST_CASE("fit: beta invariant under feature centering") {
    Rng rng(42);
    auto records = random_records(rng, 80, 2, 0.2);
    CoxModel base = fit_cox(records);

    auto shifted = records;
    for (auto& r : shifted) {
        r.covariates[0] += 5.0;
        r.covariates[1] -= 2.5;
    }
    CoxModel refit = fit_cox(shifted);
    for (int k = 0; k < 2; ++k) {
        CHECK(std::fabs(base.beta[k] - refit.beta[k]) < 1e-6);
    }
}

TEST_CASE("baseline: cumulative hazard non-decreasing, survival in [0,1]") {
    Rng rng(43);
    auto records = random_records(rng, 50, 2, 0.3);
    CoxModel model = fit_cox(records);
    REQUIRE(!model.baseline_times.empty());
    CHECK(model.cumhaz_at(0.0) == 0.0);
    for (std::size_t i = 0; i < model.baseline_cumhaz.size(); ++i) {
        CHECK(model.baseline_cumhaz[i] >= (i == 0 ? 0.0 : model.baseline_cumhaz[i - 1]));
    }
    for (double t : {0.0, 1.0, 5.0, 20.0}) {
        double s = model.baseline_survival(t);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
}

TEST_CASE("predict: linear predictor values and errors") {
    CoxModel model;
    model.beta = {1.0, -1.0};
    model.fitted = true;
    std::vector<SurvivalRecord> records{rec("zero", {0, 0}, 1, true),
                                        rec("one", {2, 1}, 2, true)};
    auto risks = cox_predict_risk(model, records);
    CHECK(risks[0].value == 0.0);
    CHECK(risks[1].value == 1.0);

    std::vector<SurvivalRecord> wrong{rec("w", {1, 2, 3}, 1, true)};
    CHECK_THROWS_AS(cox_predict_risk(model, wrong), DataError);
}

TEST_CASE("predict: risk ranking survives refit on shifted features") {
    Rng rng(44);
    auto records = random_records(rng, 50, 2, 0.2);
    CoxModel base = fit_cox(records);
    auto base_risks = cox_predict_risk(base, records);

    auto shifted = records;
    for (auto& r : shifted) r.covariates[0] += 3.0;
    CoxModel refit = fit_cox(shifted);
    auto shifted_risks = cox_predict_risk(refit, shifted);

    std::vector<int> order_a(records.size()), order_b(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) order_a[i] = order_b[i] = static_cast<int>(i);
    std::sort(order_a.begin(), order_a.end(),
              [&](int a, int b) { return base_risks[a].value < base_risks[b].value; });
    std::sort(order_b.begin(), order_b.end(),
              [&](int a, int b) { return shifted_risks[a].value < shifted_risks[b].value; });
    CHECK(order_a == order_b);
}

TEST_CASE("partial effects: cohort-mean value reproduces the baseline curve") {
    Rng rng(45);
    auto records = random_records(rng, 40, 2, 0.2);
    CoxModel model = fit_cox(records);

    double mean0 = 0.0;
    for (const auto& r : records) mean0 += r.covariates[0];
    mean0 /= static_cast<double>(records.size());

    auto curves = partial_effect_curves(model, records, "f0", {mean0});
    for (std::size_t i = 0; i < curves[0].times.size(); ++i) {
        CHECK(curves[0].probabilities[i] ==
              doctest::Approx(model.baseline_survival(curves[0].times[i])).epsilon(1e-12));
    }
}

TEST_CASE("partial effects: positive coefficient orders curves pointwise") {
    SyntheticSpec spec;
    spec.n = 150;
    spec.d = 2;
    spec.beta_true = {1.2, 0.3};
    spec.seed = 7;
    auto records = generate_tabular(spec).records;
    CoxModel model = fit_cox(records);
    REQUIRE(model.beta[0] > 0.0);

    auto curves = partial_effect_curves(model, records, "f0", {-1.0, 0.0, 1.0});
    REQUIRE(curves.size() == 3);
    for (std::size_t i = 0; i < curves[0].times.size(); ++i) {
        CHECK(curves[2].probabilities[i] <= curves[1].probabilities[i]);
        CHECK(curves[1].probabilities[i] <= curves[0].probabilities[i]);
    }
}

TEST_CASE("partial effects: unknown covariate rejected") {
    Rng rng(46);
    auto records = random_records(rng, 30, 2, 0.2);
    CoxModel model = fit_cox(records);
    CHECK_THROWS_AS(partial_effect_curves(model, records, "nope", {0.0}), ConfigError);
}

TEST_CASE("json: named coefficients and baseline round trip") {
    Rng rng(47);
    auto records = random_records(rng, 40, 2, 0.25);
    CoxModel model = fit_cox(records);
    model.feature_names = {"Age", "Stage=II"};

    CoxModel back = cox_model_from_json(cox_model_to_json(model));
    CHECK(back.fitted);
    CHECK(back.feature_names == model.feature_names);
    CHECK(back.beta == model.beta);
    CHECK(back.baseline_times == model.baseline_times);
    CHECK(back.baseline_cumhaz == model.baseline_cumhaz);
    CHECK(back.report.converged == model.report.converged);

    CHECK_THROWS_AS(cox_model_from_json(R"({"model": "mtlr"})"), ConfigError);
}

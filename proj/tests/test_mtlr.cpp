#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "survfuse/errors.hpp"
#include "survfuse/mtlr.hpp"
#include "survfuse/rng.hpp"
#include "survfuse/survival.hpp"

using namespace survfuse;

namespace {

TimeGrid grid_of(std::vector<double> points) {
    TimeGrid g;
    g.points = std::move(points);
    return g;
}

SurvivalRecord rec(const std::string& id, std::vector<double> x, double time, bool event) {
    SurvivalRecord r;
    r.patient_id = id;
    r.covariates = std::move(x);
    r.time = time;
    r.event = event;
    return r;
}

MtlrParams random_params(Rng& rng, const TimeGrid& grid, int d, double c_reg) {
    MtlrParams p = MtlrParams::zeros(grid, d, c_reg);
    for (double& v : p.theta) v = rng.normal();
    for (double& v : p.bias) v = rng.normal();
    return p;
}

std::vector<SurvivalRecord> random_cohort(Rng& rng, int n, int d, double censor_prob) {
    std::vector<SurvivalRecord> records;
    for (int i = 0; i < n; ++i) {
        std::vector<double> x(d);
        for (double& v : x) v = rng.normal();
        // avoid grid-aligned times so censoring set relations stay strict
        records.push_back(rec("P" + std::to_string(i), std::move(x),
                              0.05 + 9.9 * rng.uniform(), rng.uniform() >= censor_prob));
    }
    return records;
}

double fd_rel(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-6});
}

}  // namespace

TEST_CASE("labels: interval index from event and censoring times") {
    TimeGrid grid = grid_of({1, 2, 3});
    CHECK(LabelSequence::from_event_time(grid, 0.5).k == 0);
    CHECK(LabelSequence::from_event_time(grid, 2.5).k == 2);
    CHECK(LabelSequence::from_event_time(grid, 2.0).k == 1);  // t_j < s is strict
    CHECK(LabelSequence::from_event_time(grid, 9.9).k == 3);

    CHECK(censor_k_min(grid, 1.5) == 1);
    CHECK(censor_k_min(grid, 2.0) == 2);  // interval containing c stays consistent
    CHECK(censor_k_min(grid, 0.2) == 0);
    CHECK(censor_k_min(grid, 5.0) == 3);

    LabelSequence l = LabelSequence::from_event_time(grid, 2.5);
    CHECK(l.y(1) == false);
    CHECK(l.y(2) == false);
    CHECK(l.y(3) == true);  // y_j = 1 iff j > k
}

TEST_CASE("scores: suffix sums with empty top interval") {
    TimeGrid grid = grid_of({1, 2});
    MtlrParams p = MtlrParams::zeros(grid, 1, 0.0);
    p.theta = {1.0, 2.0};
    p.bias = {0.5, -0.5};
    std::vector<double> x{1.0};
    CHECK(sequence_score(p, x, 0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(sequence_score(p, x, 1) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(sequence_score(p, x, 2) == 0.0);

    MtlrParams zeros = MtlrParams::zeros(grid, 1, 0.0);
    for (int k = 0; k <= 2; ++k) CHECK(sequence_score(zeros, x, k) == 0.0);
    CHECK_THROWS_AS(sequence_score(p, x, 3), DataError);
}

TEST_CASE("loss: zero parameters give uniform-distribution values") {
    TimeGrid grid = grid_of({1, 2, 3, 4});  // m = 4
    MtlrParams p = MtlrParams::zeros(grid, 2, 0.0);

    std::vector<SurvivalRecord> uncensored;
    for (int i = 0; i < 7; ++i) uncensored.push_back(rec("P" + std::to_string(i), {0, 0}, 2.5, true));
    CHECK(mtlr_loss(p, uncensored).value == doctest::Approx(7.0 * std::log(5.0)).epsilon(1e-9));

    // censored at 2.5: K = {2,3,4}, q = 3
    std::vector<SurvivalRecord> censored{rec("c", {0, 0}, 2.5, false)};
    CHECK(mtlr_loss(p, censored).value == doctest::Approx(std::log(5.0 / 3.0)).epsilon(1e-9));
}

TEST_CASE("loss: penalty decomposition is exact") {
    TimeGrid grid = grid_of({1, 3, 6});
    Rng rng(11);
    auto records = random_cohort(rng, 8, 3, 0.4);
    MtlrParams p = random_params(rng, grid, 3, 0.0);
    double base = mtlr_loss(p, records).value;

    p.c_reg = 2.5;
    double norm2 = 0.0;
    for (double v : p.theta) norm2 += v * v;
    CHECK(mtlr_loss(p, records).value == doctest::Approx(base + 1.25 * norm2).epsilon(1e-12));
}

TEST_CASE("loss: censoring marginalizes over a superset of sequences") {
    TimeGrid grid = grid_of({1, 2, 3});
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        MtlrParams p = random_params(rng, grid, 2, 0.0);
        double c = 0.1 + 2.8 * rng.uniform();
        std::vector<double> x{rng.normal(), rng.normal()};
        double nll_event = mtlr_loss(p, {rec("e", x, c, true)}).value;
        double nll_censored = mtlr_loss(p, {rec("c", x, c, false)}).value;
        CHECK(nll_censored <= nll_event + 1e-12);
    }
}

TEST_CASE("loss: analytic gradient matches central finite differences") {
    const double h = 1e-5;
    TimeGrid grid = grid_of({1, 2, 3, 4});
    for (int seed = 0; seed < 10; ++seed) {
        Rng rng(mix_seed(50, seed));
        auto records = random_cohort(rng, 5, 3, 0.4);
        MtlrParams p = random_params(rng, grid, 3, 0.7);

        MtlrLossResult l = mtlr_loss(p, records);
        for (std::size_t i = 0; i < p.theta.size(); ++i) {
            MtlrParams plus = p, minus = p;
            plus.theta[i] += h;
            minus.theta[i] -= h;
            double fd = (mtlr_loss(plus, records).value - mtlr_loss(minus, records).value) / (2 * h);
            CHECK(fd_rel(l.grad_theta[i], fd) < 1e-5);
        }
        for (std::size_t i = 0; i < p.bias.size(); ++i) {
            MtlrParams plus = p, minus = p;
            plus.bias[i] += h;
            minus.bias[i] -= h;
            double fd = (mtlr_loss(plus, records).value - mtlr_loss(minus, records).value) / (2 * h);
            CHECK(fd_rel(l.grad_bias[i], fd) < 1e-5);
        }
    }
}

TEST_CASE("loss: covariate gradient matches finite differences") {
    const double h = 1e-5;
    TimeGrid grid = grid_of({1, 2, 3});
    Rng rng(13);
    auto records = random_cohort(rng, 4, 2, 0.5);
    MtlrParams p = random_params(rng, grid, 2, 0.3);

    std::vector<double> grad_x;
    mtlr_loss(p, records, &grad_x);
    REQUIRE(grad_x.size() == records.size() * 2);
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (int k = 0; k < 2; ++k) {
            auto plus = records, minus = records;
            plus[i].covariates[k] += h;
            minus[i].covariates[k] -= h;
            double fd = (mtlr_loss(p, plus).value - mtlr_loss(p, minus).value) / (2 * h);
            CHECK(fd_rel(grad_x[i * 2 + k], fd) < 1e-5);
        }
    }
}

TEST_CASE("curves: uniform case and logistic reduction") {
    TimeGrid grid3 = grid_of({1, 2, 3});
    MtlrParams zeros3 = MtlrParams::zeros(grid3, 1, 0.0);
    SurvivalCurve c = mtlr_survival_curve(zeros3, {0.0});
    CHECK(c.times == std::vector<double>{0, 1, 2, 3});
    CHECK(c.probabilities[0] == 1.0);
    CHECK(c.probabilities[1] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(c.probabilities[2] == doctest::Approx(0.50).epsilon(1e-12));
    CHECK(c.probabilities[3] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(mtlr_risk(zeros3, {0.0}) == doctest::Approx(1.5).epsilon(1e-12));

    TimeGrid grid1 = grid_of({5});
    MtlrParams p1 = MtlrParams::zeros(grid1, 1, 0.0);
    p1.theta = {1.0};
    p1.bias = {0.0};
    for (double z : {-2.0, 0.0, 1.7}) {
        SurvivalCurve one = mtlr_survival_curve(p1, {z});
        CHECK(one.probabilities[1] == doctest::Approx(1.0 / (1.0 + std::exp(z))).epsilon(1e-12));
    }
}

TEST_CASE("curves: random parameters keep softmax structure") {
    TimeGrid grid = grid_of({1, 2, 4, 8});
    Rng rng(14);
    for (int trial = 0; trial < 200; ++trial) {
        MtlrParams p = random_params(rng, grid, 3, 0.0);
        std::vector<double> x{rng.normal(), rng.normal(), rng.normal()};
        SurvivalCurve c = mtlr_survival_curve(p, x);
        REQUIRE(c.probabilities.size() == 5);
        CHECK(c.probabilities[0] == 1.0);
        for (std::size_t i = 1; i < c.probabilities.size(); ++i) {
            CHECK(c.probabilities[i] >= 0.0);
            CHECK(c.probabilities[i] <= 1.0);
            CHECK(c.probabilities[i] <= c.probabilities[i - 1] + 1e-15);
        }
        // recompute the softmax from raw scores; the curve must be its suffix sums
        std::vector<double> scores(5);
        double zmax = -1e300;
        for (int k = 0; k <= 4; ++k) zmax = std::max(zmax, scores[k] = sequence_score(p, x, k));
        double denom = 0.0;
        for (double s : scores) denom += std::exp(s - zmax);
        std::vector<double> pmf(5);
        double mass = 0.0;
        for (int k = 0; k <= 4; ++k) mass += pmf[k] = std::exp(scores[k] - zmax) / denom;
        CHECK(std::fabs(mass - 1.0) < 1e-12);
        for (int j = 1; j <= 4; ++j) {
            double suffix = 0.0;
            for (int k = j; k <= 4; ++k) suffix += pmf[k];
            CHECK(std::fabs(c.probabilities[j] - suffix) < 1e-12);
        }
    }
}

TEST_CASE("risk: ranking equals negative area under the survival curve") {
    TimeGrid grid = grid_of({1, 3, 5, 9});
    Rng rng(15);
    MtlrParams p = random_params(rng, grid, 2, 0.0);

    std::vector<double> risks, neg_area;
    for (int i = 0; i < 100; ++i) {
        std::vector<double> x{rng.normal(), rng.normal()};
        risks.push_back(mtlr_risk(p, x));
        SurvivalCurve c = mtlr_survival_curve(p, x);
        double area = 0.0;
        for (std::size_t j = 1; j < c.times.size(); ++j) area += c.probabilities[j];
        neg_area.push_back(-area);
    }
    std::vector<int> by_risk(100), by_area(100);
    for (int i = 0; i < 100; ++i) by_risk[i] = by_area[i] = i;
    std::sort(by_risk.begin(), by_risk.end(), [&](int a, int b) { return risks[a] < risks[b]; });
    std::sort(by_area.begin(), by_area.end(),
              [&](int a, int b) { return neg_area[a] < neg_area[b]; });
    CHECK(by_risk == by_area);
}

TEST_CASE("risk: monotone in the single-grid-point score") {
    TimeGrid grid = grid_of({2});
    MtlrParams p = MtlrParams::zeros(grid, 1, 0.0);
    p.theta = {1.0};
    double prev = mtlr_risk(p, {-3.0});
    for (double z : {-1.0, 0.0, 0.5, 2.0, 4.0}) {
        double cur = mtlr_risk(p, {z});
        CHECK(cur > prev);
        prev = cur;
    }
}

TEST_CASE("fit: strong signal reaches high training concordance") {
    Rng rng(16);
    std::vector<SurvivalRecord> records;
    for (int i = 0; i < 400; ++i) {
        double x1 = rng.normal();
        double u = rng.uniform();
        double t = -std::log1p(-u) / (0.15 * std::exp(1.5 * x1));
        bool event = rng.uniform() >= 0.25;
        records.push_back(rec("P" + std::to_string(i), {x1}, t, event));
    }
    TimeGrid grid = make_time_grid(records, 5);
    MtlrFitConfig config;
    config.seed = 5;
    MtlrFitResult fit = fit_mtlr(records, grid, config);
    auto risks = mtlr_predict_risk(fit.params, records);
    CHECK(concordance_index(risks, records) > 0.8);
    CHECK(fit.loss_trace.size() == 100);
}

TEST_CASE("fit: huge regularization crushes the weights") {
    Rng rng(17);
    auto records = random_cohort(rng, 60, 2, 0.3);
    TimeGrid grid = make_time_grid(records, 4);
    MtlrFitConfig config;
    config.c_reg = 1e6;
    config.epochs = 60;
    config.seed = 2;
    MtlrFitResult fit = fit_mtlr(records, grid, config);
    double frob = 0.0;
    for (double v : fit.params.theta) frob += v * v;
    CHECK(std::sqrt(frob) < 1e-2);
}

TEST_CASE("fit: full-batch runs are bit-identical across repeats") {
    Rng rng(18);
    auto records = random_cohort(rng, 40, 3, 0.3);
    TimeGrid grid = make_time_grid(records, 4);
    MtlrFitConfig config;
    config.batch_size = 0;
    config.epochs = 30;
    config.seed = 77;
    MtlrFitResult a = fit_mtlr(records, grid, config);
    MtlrFitResult b = fit_mtlr(records, grid, config);
    CHECK(a.params.theta == b.params.theta);
    CHECK(a.params.bias == b.params.bias);
    CHECK(a.loss_trace == b.loss_trace);
}

TEST_CASE("fit: seeded mini-batch runs are reproducible, different seeds differ") {
    Rng rng(19);
    auto records = random_cohort(rng, 50, 2, 0.3);
    TimeGrid grid = make_time_grid(records, 3);
    MtlrFitConfig config;
    config.epochs = 10;
    config.seed = 4;
    MtlrFitResult a = fit_mtlr(records, grid, config);
    MtlrFitResult b = fit_mtlr(records, grid, config);
    CHECK(a.params.theta == b.params.theta);

    config.seed = 5;
    MtlrFitResult c = fit_mtlr(records, grid, config);
    CHECK(a.params.theta != c.params.theta);
}

TEST_CASE("fit: sgd optimizer is available") {
    Rng rng(23);
    auto records = random_cohort(rng, 40, 2, 0.3);
    TimeGrid grid = make_time_grid(records, 3);
    MtlrFitConfig config;
    config.optimizer = MtlrOptimizer::Sgd;
    config.lr = 0.002;
    config.epochs = 30;
    MtlrFitResult fit = fit_mtlr(records, grid, config);
    CHECK(fit.loss_trace.back() < fit.loss_trace.front());
}

TEST_CASE("fit: divergence aborts with a convergence error") {
    Rng rng(24);
    auto records = random_cohort(rng, 30, 2, 0.3);
    TimeGrid grid = make_time_grid(records, 3);
    MtlrFitConfig config;
    config.lr = 1e160;  // one Adam step lands the squared penalty past the double range
    config.epochs = 8;
    CHECK_THROWS_AS(fit_mtlr(records, grid, config), ConvergenceError);
}

TEST_CASE("neural: identity encoder reproduces the vanilla loss exactly") {
    TimeGrid grid = grid_of({1, 2, 4});
    Rng rng(25);
    auto records = random_cohort(rng, 10, 3, 0.4);

    NeuralMtlrConfig config;
    config.hidden = {3};
    config.relu = false;
    config.dropout = 0.0;
    NeuralMtlrModel model = build_neural_mtlr(3, grid, config);

    // overwrite the single linear layer with the identity map
    auto learnable = model.encoder.learnable();
    REQUIRE(learnable.size() == 2);
    for (long r = 0; r < 3; ++r) {
        for (long c = 0; c < 3; ++c) learnable[0]->data[r * 3 + c] = r == c ? 1.0 : 0.0;
    }
    for (long c = 0; c < 3; ++c) learnable[1]->data[c] = 0.0;
    model.head = random_params(rng, grid, 3, 0.9);

    double composite = neural_mtlr_loss(model, records);
    double vanilla = mtlr_loss(model.head, records).value;
    CHECK(composite == doctest::Approx(vanilla).epsilon(1e-12));
}

TEST_CASE("neural: composite gradient matches finite differences through the encoder") {
    const double h = 1e-5;
    TimeGrid grid = grid_of({1, 2});
    Rng rng(26);
    auto records = random_cohort(rng, 3, 2, 0.34);

    NeuralMtlrConfig config;
    config.hidden = {4};
    config.dropout = 0.0;
    NeuralMtlrModel model = build_neural_mtlr(2, grid, config);
    model.head = random_params(rng, grid, 4, 0.0);

    nn::Tensor input({3, 2});
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 2; ++k) input.data[i * 2 + k] = records[i].covariates[k];
    }
    auto encoded_loss = [&]() {
        nn::Tensor f = model.encoder.forward(input, nn::Mode::Eval, 0, nullptr);
        auto encoded = records;
        for (int i = 0; i < 3; ++i) {
            encoded[i].covariates.assign(f.data.begin() + i * 4, f.data.begin() + (i + 1) * 4);
        }
        return mtlr_loss(model.head, encoded);
    };

    // analytic: backprop the head's covariate gradient through the encoder
    std::vector<nn::LayerCache> caches;
    nn::Tensor f = model.encoder.forward(input, nn::Mode::Eval, 0, &caches);
    auto encoded = records;
    for (int i = 0; i < 3; ++i) {
        encoded[i].covariates.assign(f.data.begin() + i * 4, f.data.begin() + (i + 1) * 4);
    }
    std::vector<double> grad_x;
    mtlr_loss(model.head, encoded, &grad_x);
    nn::Tensor seed({3, 4});
    seed.data = grad_x;
    std::vector<std::vector<nn::Tensor>> grads;
    model.encoder.backward(seed, caches, &grads);

    REQUIRE(grads.size() == model.encoder.specs.size());
    std::size_t flat_checked = 0;
    for (std::size_t layer = 0; layer < grads.size(); ++layer) {
        for (std::size_t gi = 0; gi < grads[layer].size(); ++gi) {
            nn::Tensor& param = model.encoder.params[layer].learnable[gi];
            for (std::size_t pi = 0; pi < param.data.size(); ++pi) {
                double saved = param.data[pi];
                param.data[pi] = saved + h;
                double up = encoded_loss().value;
                param.data[pi] = saved - h;
                double down = encoded_loss().value;
                param.data[pi] = saved;
                double fd = (up - down) / (2 * h);
                CHECK(fd_rel(grads[layer][gi].data[pi], fd) < 1e-4);
                ++flat_checked;
            }
        }
    }
    CHECK(flat_checked == 4 * 2 + 4);
}

TEST_CASE("neural: beats vanilla on a nonlinear cohort") {
    Rng rng(27);
    std::vector<SurvivalRecord> records;
    for (int i = 0; i < 300; ++i) {
        double x1 = rng.normal();
        double x2 = rng.normal();
        double eta = 2.2 * std::fabs(x1) - 1.1;
        double u = rng.uniform();
        double t = -std::log1p(-u) / (0.12 * std::exp(eta));
        records.push_back(rec("P" + std::to_string(i), {x1, x2}, t, rng.uniform() >= 0.2));
    }
    TimeGrid grid = make_time_grid(records, 5);

    MtlrFitConfig flat;
    flat.seed = 3;
    flat.epochs = 60;
    MtlrFitResult vanilla = fit_mtlr(records, grid, flat);
    double c_vanilla =
        concordance_index(mtlr_predict_risk(vanilla.params, records), records);

    NeuralMtlrConfig config;
    config.hidden = {16, 16};
    config.dropout = 0.0;
    config.fit = flat;
    NeuralMtlrFitResult neural = fit_neural_mtlr(records, grid, config);
    double c_neural = concordance_index(neural.model.predict_risk(records), records);

    CHECK(c_neural > c_vanilla + 0.05);
}

TEST_CASE("json: vanilla round trip is exact") {
    TimeGrid grid = grid_of({1.5, 3.25, 7});
    Rng rng(28);
    MtlrParams p = random_params(rng, grid, 2, 0.4);
    MtlrParams back = mtlr_model_from_json(mtlr_model_to_json(p));
    CHECK(back.grid.points == p.grid.points);
    CHECK(back.theta == p.theta);
    CHECK(back.bias == p.bias);
    CHECK(back.c_reg == p.c_reg);
}

TEST_CASE("json: neural round trip preserves predictions") {
    TimeGrid grid = grid_of({1, 2, 5});
    Rng rng(29);
    auto records = random_cohort(rng, 30, 2, 0.3);
    NeuralMtlrConfig config;
    config.hidden = {8};
    config.fit.epochs = 10;
    config.fit.seed = 9;
    NeuralMtlrFitResult fit = fit_neural_mtlr(records, grid, config);

    NeuralMtlrModel back = neural_mtlr_model_from_json(neural_mtlr_model_to_json(fit.model));
    for (int i = 0; i < 5; ++i) {
        CHECK(back.risk(records[i].covariates) ==
              doctest::Approx(fit.model.risk(records[i].covariates)).epsilon(1e-12));
        SurvivalCurve a = back.survival_curve(records[i].covariates);
        SurvivalCurve b = fit.model.survival_curve(records[i].covariates);
        CHECK(a.probabilities == b.probabilities);
    }
}

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "survfuse/errors.hpp"
#include "survfuse/fusion.hpp"
#include "survfuse/rng.hpp"
#include "survfuse/survival.hpp"

#include "test_util.hpp"

using namespace survfuse;

namespace {

// Random desk-profile batch; `signal` adds a per-patient intensity shift that
// also drives the hazard, so the image carries learnable risk information.
MultimodalBatch desk_batch(const FusionConfig& config, int n, int ehr_dim, std::uint64_t seed,
                           double signal = 0.0) {
    Rng rng(seed);
    MultimodalBatch batch;
    const auto& s = config.input_dhw;
    for (int p = 0; p < config.paths(); ++p) {
        batch.paths.emplace_back(std::vector<long>{n, 1, s[0], s[1], s[2]});
    }
    batch.ehr = nn::Tensor({n, ehr_dim});
    for (double& v : batch.ehr.data) v = rng.normal();

    const long voxels = s[0] * s[1] * s[2];
    for (int i = 0; i < n; ++i) {
        double shift = signal * rng.uniform();
        for (int p = 0; p < config.paths(); ++p) {
            for (long v = 0; v < voxels; ++v) {
                batch.paths[p].data[i * voxels + v] = 0.3 * rng.uniform() + shift;
            }
        }
        double eta = 2.0 * shift;
        double t = -std::log1p(-rng.uniform()) / (0.2 * std::exp(eta));
        SurvivalRecord rec;
        rec.patient_id = "P" + std::to_string(i);
        rec.time = 0.01 + t;
        rec.event = rng.uniform() >= 0.2;
        for (int k = 0; k < ehr_dim; ++k) {
            rec.covariates.push_back(batch.ehr.data[i * ehr_dim + k]);
        }
        batch.outcomes.push_back(std::move(rec));
    }
    return batch;
}

TimeGrid grid_for(const MultimodalBatch& batch, int m) { return make_time_grid(batch.outcomes, m); }

std::vector<double> snapshot(FusionModel& model) {
    std::vector<double> values;
    for (double* p : fusion_parameters(model)) values.push_back(*p);
    return values;
}

}  // namespace

TEST_CASE("config: named profiles carry the published dimensions") {
    FusionConfig paper = FusionConfig::paper(FusionVariant::V2);
    CHECK(paper.input_dhw == std::array<long, 3>{50, 80, 80});
    CHECK(paper.channels == std::vector<int>{32, 64, 128, 256});
    CHECK(paper.feature_len == 256);
    CHECK(paper.fc == std::vector<int>{256, 256});
    CHECK(paper.dropout == 0.2);
    CHECK(paper.fit.batch_size == 16);
    CHECK(paper.fit.lr == 0.016);
    CHECK(paper.fit.epochs == 100);
    CHECK(paper.paths() == 1);
    CHECK(FusionConfig::paper(FusionVariant::V1).paths() == 3);

    FusionConfig desk = FusionConfig::desk(FusionVariant::V2);
    CHECK(desk.input_dhw == std::array<long, 3>{16, 16, 16});
    CHECK(desk.channels == std::vector<int>{4, 4, 8, 8});
    CHECK(desk.feature_len == 16);
    desk.validate();
    paper.validate();

    FusionConfig bad = desk;
    bad.channels = {4, 4};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = desk;
    bad.feature_len = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = desk;
    bad.fc.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("build: desk and paper wiring share the layer-kind sequence") {
    TimeGrid grid;
    grid.points = {1, 2, 3};
    FusionModel desk = build_fusion_model(FusionConfig::desk(FusionVariant::V2), 2, grid);
    FusionModel paper = build_fusion_model(FusionConfig::paper(FusionVariant::V2), 2, grid);
    CHECK(desk.layer_kind_sequence() == paper.layer_kind_sequence());

    FusionModel desk1 = build_fusion_model(FusionConfig::desk(FusionVariant::V1), 0, grid);
    CHECK(desk1.paths.size() == 3);
    CHECK(desk.paths.size() == 1);
}

TEST_CASE("build: paper-profile shape algebra reaches the 256-feature") {
    TimeGrid grid;
    grid.points = {1, 2};
    FusionModel model = build_fusion_model(FusionConfig::paper(FusionVariant::V2), 0, grid);
    std::vector<long> shape{1, 1, 50, 80, 80};
    for (const auto& spec : model.paths[0].specs) shape = nn::output_shape(spec, shape);
    CHECK(shape == std::vector<long>{1, 256});
}

TEST_CASE("features: desk V2 yields 16 per patient, V1 concatenates 48") {
    FusionConfig v2 = FusionConfig::desk(FusionVariant::V2);
    TimeGrid grid;
    grid.points = {1, 2, 3};
    FusionModel model = build_fusion_model(v2, 0, grid);
    MultimodalBatch batch = desk_batch(v2, 2, 0, 200);
    nn::Tensor feats = model.image_features(batch);
    CHECK(feats.shape == std::vector<long>{2, 16});
    for (double v : feats.data) CHECK(std::isfinite(v));

    FusionConfig v1 = FusionConfig::desk(FusionVariant::V1);
    FusionModel model1 = build_fusion_model(v1, 0, grid);
    MultimodalBatch batch1 = desk_batch(v1, 2, 0, 201);
    CHECK(model1.image_features(batch1).shape == std::vector<long>{2, 48});
}

TEST_CASE("batch: validation catches inconsistent parts") {
    FusionConfig config = FusionConfig::desk(FusionVariant::V2);
    MultimodalBatch batch = desk_batch(config, 3, 2, 202);
    batch.validate(config);

    MultimodalBatch wrong_paths = batch;
    wrong_paths.paths.emplace_back(batch.paths[0]);
    CHECK_THROWS_AS(wrong_paths.validate(config), DataError);

    MultimodalBatch wrong_n = batch;
    wrong_n.outcomes.pop_back();
    CHECK_THROWS_AS(wrong_n.validate(config), DataError);

    MultimodalBatch wrong_shape = batch;
    wrong_shape.paths[0].shape[2] = 8;
    CHECK_THROWS_AS(wrong_shape.validate(config), DataError);
}

TEST_CASE("loss: finite at initialization in both modes") {
    FusionConfig config = FusionConfig::desk(FusionVariant::V2);
    TimeGrid grid;
    grid.points = {0.5, 1.5, 4.0};
    FusionModel model = build_fusion_model(config, 2, grid);
    MultimodalBatch batch = desk_batch(config, 4, 2, 203);
    CHECK(std::isfinite(fusion_loss(model, batch, nn::Mode::Eval, 0)));
    CHECK(std::isfinite(fusion_loss(model, batch, nn::Mode::Train, 7)));
}

TEST_CASE("gradients: sampled end-to-end check on the desk profile") {
    const double h = 1e-5;
    FusionConfig config = FusionConfig::desk(FusionVariant::V2);
    config.dropout = 0.1;
    TimeGrid grid;
    grid.points = {1.0, 3.0};
    FusionModel model = build_fusion_model(config, 2, grid);
    MultimodalBatch batch = desk_batch(config, 2, 2, 204);

    const nn::Mode mode = nn::Mode::Train;
    const std::uint64_t seed = 99;
    FusionLossGrad lg = fusion_loss_and_flat_grad(model, batch, mode, seed);
    std::vector<double*> params = fusion_parameters(model);
    REQUIRE(lg.grad.size() == params.size());

    Rng pick(4242);
    double worst = 0.0;
    for (int trial = 0; trial < 120; ++trial) {
        std::size_t i = static_cast<std::size_t>(pick.uniform() * params.size());
        double saved = *params[i];
        *params[i] = saved + h;
        double up = fusion_loss(model, batch, mode, seed);
        *params[i] = saved - h;
        double down = fusion_loss(model, batch, mode, seed);
        *params[i] = saved;
        double fd = (up - down) / (2 * h);
        worst = std::max(worst, nn::fd_rel_err(lg.grad[i], fd));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("train: zero epochs leave the model at its initialization") {
    FusionConfig config = FusionConfig::desk(FusionVariant::V2);
    config.fit.epochs = 0;
    TimeGrid grid;
    grid.points = {1, 2};
    FusionModel model = build_fusion_model(config, 0, grid);
    std::vector<double> before = snapshot(model);
    MultimodalBatch batch = desk_batch(config, 4, 0, 205);
    FusionTrainResult result = train_fusion(model, batch);
    CHECK(result.loss_trace.empty());
    CHECK(snapshot(model) == before);
}

TEST_CASE("train: full-batch same-seed runs are identical") {
    FusionConfig config = FusionConfig::desk(FusionVariant::V2);
    config.fit.epochs = 3;
    config.fit.batch_size = 0;
    config.fit.seed = 31;
    TimeGrid grid;
    grid.points = {0.8, 2.0, 5.0};

    MultimodalBatch batch = desk_batch(config, 6, 1, 206);
    FusionModel a = build_fusion_model(config, 1, grid);
    FusionModel b = build_fusion_model(config, 1, grid);
    FusionTrainResult ra = train_fusion(a, batch);
    FusionTrainResult rb = train_fusion(b, batch);
    CHECK(ra.loss_trace == rb.loss_trace);
    CHECK(snapshot(a) == snapshot(b));
    CHECK(ra.loss_trace.size() == 3);
}

TEST_CASE("train: learnable image signal drives the loss down") {
    FusionConfig config = FusionConfig::desk(FusionVariant::V2);
    config.fit.epochs = 12;
    config.fit.batch_size = 0;
    config.fit.lr = 0.004;
    config.fit.seed = 8;
    config.dropout = 0.0;
    MultimodalBatch batch = desk_batch(config, 16, 0, 207, 1.5);
    TimeGrid grid = grid_for(batch, 3);
    FusionModel model = build_fusion_model(config, 0, grid);
    FusionTrainResult result = train_fusion(model, batch);
    REQUIRE(result.loss_trace.size() == 12);
    CHECK(result.loss_trace.back() < result.loss_trace.front());
    CHECK(result.val_cindex.empty());
}

TEST_CASE("train: validation batch produces a per-epoch concordance log") {
    FusionConfig config = FusionConfig::desk(FusionVariant::V2);
    config.fit.epochs = 2;
    config.fit.batch_size = 0;
    MultimodalBatch batch = desk_batch(config, 8, 0, 208, 1.0);
    MultimodalBatch val = desk_batch(config, 6, 0, 209, 1.0);
    TimeGrid grid = grid_for(batch, 2);
    FusionModel model = build_fusion_model(config, 0, grid);
    FusionTrainResult result = train_fusion(model, batch, &val);
    CHECK(result.val_cindex.size() == 2);
    for (double c : result.val_cindex) {
        CHECK(c >= 0.0);
        CHECK(c <= 1.0);
    }
}

TEST_CASE("train: exploding step aborts but restores finite parameters") {
    FusionConfig config = FusionConfig::desk(FusionVariant::V2);
    config.fit.epochs = 6;
    config.fit.batch_size = 0;
    config.fit.lr = 1e160;  // one Adam step overflows the squared-penalty term
    TimeGrid grid;
    grid.points = {1, 2};
    FusionModel model = build_fusion_model(config, 0, grid);
    MultimodalBatch batch = desk_batch(config, 4, 0, 210);
    CHECK_THROWS_AS(train_fusion(model, batch), ConvergenceError);
    for (double* p : fusion_parameters(model)) CHECK(std::isfinite(*p));
}

TEST_CASE("predict: eval mode is deterministic and batch invariant") {
    FusionConfig config = FusionConfig::desk(FusionVariant::V2);
    TimeGrid grid;
    grid.points = {1, 2, 3};
    FusionModel model = build_fusion_model(config, 1, grid);
    MultimodalBatch batch = desk_batch(config, 8, 1, 211);

    auto risks = model.predict_risk(batch);
    auto again = model.predict_risk(batch);
    REQUIRE(risks.size() == 8);
    for (std::size_t i = 0; i < risks.size(); ++i) {
        CHECK(risks[i].value == again[i].value);
    }

    MultimodalBatch solo = batch.rows({3});
    auto one = model.predict_risk(solo);
    REQUIRE(one.size() == 1);
    CHECK(one[0].patient_id == risks[3].patient_id);
    CHECK(std::fabs(one[0].value - risks[3].value) < 1e-10);

    MultimodalBatch dup = batch.rows({2, 2, 5});
    auto dup_risks = model.predict_risk(dup);
    CHECK(dup_risks[0].value == dup_risks[1].value);
}

TEST_CASE("predict: all-zero inputs give one shared finite risk") {
    FusionConfig config = FusionConfig::desk(FusionVariant::V2);
    TimeGrid grid;
    grid.points = {1, 4};
    FusionModel model = build_fusion_model(config, 0, grid);
    MultimodalBatch batch = desk_batch(config, 3, 0, 212);
    for (auto& path : batch.paths) std::fill(path.data.begin(), path.data.end(), 0.0);

    auto risks = model.predict_risk(batch);
    CHECK(std::isfinite(risks[0].value));
    CHECK(risks[1].value == risks[0].value);
    CHECK(risks[2].value == risks[0].value);
}

TEST_CASE("checkpoint: round trip preserves predictions bit for bit") {
    FusionConfig config = FusionConfig::desk(FusionVariant::V2);
    config.fit.epochs = 2;
    config.fit.batch_size = 0;
    MultimodalBatch batch = desk_batch(config, 6, 2, 213, 0.8);
    TimeGrid grid = grid_for(batch, 3);
    FusionModel model = build_fusion_model(config, 2, grid);
    train_fusion(model, batch);

    std::string manifest = test_dir() + "/ckpt.json";
    std::string blob = test_dir() + "/ckpt.bin";
    save_fusion_checkpoint(model, manifest, blob, 12);
    FusionModel back = load_fusion_checkpoint(manifest);

    CHECK(back.config.input_dhw == model.config.input_dhw);
    CHECK(back.ehr_dim == 2);
    CHECK(snapshot(back) == snapshot(model));
    auto a = model.predict_risk(batch);
    auto b = back.predict_risk(batch);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].value == b[i].value);

    CHECK_THROWS_AS(load_fusion_checkpoint(test_dir() + "/missing.json"), DataError);
}

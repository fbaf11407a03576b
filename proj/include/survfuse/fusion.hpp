#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "survfuse/mtlr.hpp"
#include "survfuse/survival.hpp"
#include "survfuse/tensor.hpp"

namespace survfuse {

// V1 runs three CNN paths (CT, PET, fused); V2 runs one path on the fused
// volume only.
enum class FusionVariant { V1, V2 };
enum class FusionProfile { Paper, Desk };

struct FusionConfig {
    FusionVariant variant = FusionVariant::V2;
    FusionProfile profile = FusionProfile::Desk;
    std::array<long, 3> input_dhw{16, 16, 16};
    std::vector<int> channels{4, 4, 8, 8};  // conv output channels across the two blocks
    int feature_len = 16;                   // per-path image feature length
    std::vector<int> fc{16, 16};
    double dropout = 0.2;
    MtlrFitConfig fit;

    int paths() const { return variant == FusionVariant::V1 ? 3 : 1; }
    void validate() const;  // throws ConfigError

    static FusionConfig paper(FusionVariant variant);
    static FusionConfig desk(FusionVariant variant);
};

// Images per path as (N,1,D,H,W), EHR features as (N,d) with d possibly 0,
// and the outcome (time/event/id) per patient.
struct MultimodalBatch {
    std::vector<nn::Tensor> paths;
    nn::Tensor ehr;
    std::vector<SurvivalRecord> outcomes;

    long n() const { return static_cast<long>(outcomes.size()); }
    void validate(const FusionConfig& config) const;  // throws DataError
    MultimodalBatch rows(const std::vector<std::size_t>& index) const;
};

struct FusionModel {
    FusionConfig config;
    int ehr_dim = 0;
    std::vector<nn::Sequential> paths;  // per path: conv blocks, GAP, feature linear
    nn::Sequential trunk;               // fc stack over [image features, ehr]
    MtlrParams head;

    // concatenated per-path image features, before the EHR join: (N, paths*feature_len)
    nn::Tensor image_features(const MultimodalBatch& batch, nn::Mode mode = nn::Mode::Eval,
                              std::uint64_t rng_seed = 0);
    std::vector<RiskScore> predict_risk(const MultimodalBatch& batch);
    std::vector<nn::LayerKind> layer_kind_sequence() const;
};

FusionModel build_fusion_model(const FusionConfig& config, int ehr_dim, const TimeGrid& grid);

// cohort loss (censoring-aware MTLR objective over the whole batch)
double fusion_loss(FusionModel& model, const MultimodalBatch& batch, nn::Mode mode,
                   std::uint64_t rng_seed);

// Pointers to every learnable scalar in a stable order, aligned with the flat
// gradient from fusion_loss_and_flat_grad; used by training and grad checks.
std::vector<double*> fusion_parameters(FusionModel& model);

struct FusionLossGrad {
    double loss = 0.0;
    std::vector<double> grad;  // aligned with fusion_parameters order
};

FusionLossGrad fusion_loss_and_flat_grad(FusionModel& model, const MultimodalBatch& batch,
                                         nn::Mode mode, std::uint64_t rng_seed);

struct FusionTrainResult {
    std::vector<double> loss_trace;   // full-cohort eval-mode loss per epoch
    std::vector<double> val_cindex;   // per epoch when a validation batch is given
};

// Mini-batch Adam per model.config.fit; on a NaN/inf loss the parameters are
// restored to the end of the last finite epoch before ConvergenceError.
FusionTrainResult train_fusion(FusionModel& model, const MultimodalBatch& cohort,
                               const MultimodalBatch* validation = nullptr);

void save_fusion_checkpoint(const FusionModel& model, const std::string& manifest_path,
                            const std::string& blob_path, long step = 0,
                            const std::string& encoding_json = "");
FusionModel load_fusion_checkpoint(const std::string& manifest_path);

}  // namespace survfuse

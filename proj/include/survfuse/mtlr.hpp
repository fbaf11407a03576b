#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "survfuse/survival.hpp"
#include "survfuse/tensor.hpp"

namespace survfuse {

// Parameter bank of the multi-task logistic regression model: one weight row
// theta_j and bias b_j per grid point, plus the l2 constant C on the thetas.
struct MtlrParams {
    TimeGrid grid;
    std::vector<double> theta;  // m*d row-major, row j = theta_j
    std::vector<double> bias;   // m
    double c_reg = 1.0;

    int m() const { return grid.size(); }
    int dim() const { return m() == 0 ? 0 : static_cast<int>(theta.size()) / m(); }
    static MtlrParams zeros(const TimeGrid& grid, int dim, double c_reg);
};

// Monotone binary label sequence y with y_j = 1 iff j > k: the event falls in
// interval k, where interval k spans (t_k, t_{k+1}] and t_0 = 0, t_{m+1} = inf.
struct LabelSequence {
    int k = 0;
    int m = 0;

    bool y(int j) const { return j > k; }  // j in 1..m

    // uncensored: k = #{t_j < s}
    static LabelSequence from_event_time(const TimeGrid& grid, double s);
};

// smallest interval index consistent with censoring at time c:
// K(c) = {k : t_{k+1} > c} = {censor_k_min(grid, c), ..., m}
int censor_k_min(const TimeGrid& grid, double c);

// f(x, k) = sum_{j=k+1..m} (theta_j . x + b_j); empty sum (k = m) is 0
double sequence_score(const MtlrParams& params, const std::vector<double>& x, int k);

struct MtlrLossResult {
    double value = 0.0;
    std::vector<double> grad_theta;  // m*d
    std::vector<double> grad_bias;   // m
};

// (C/2) sum_j ||theta_j||^2 plus the censoring-aware negative log likelihood,
// with log-sum-exp stabilized by max subtraction. When grad_x is non-null it
// receives d(loss)/d(covariates) per patient (n*d row-major) for use as the
// backprop seed of the neural variants.
MtlrLossResult mtlr_loss(const MtlrParams& params, const std::vector<SurvivalRecord>& records,
                         std::vector<double>* grad_x = nullptr);

// P(interval k) = softmax over f(x, .); S(t_j) = P(k >= j);
// curve = (0, 1), (t_1, S(t_1)), ..., (t_m, S(t_m))
SurvivalCurve mtlr_survival_curve(const MtlrParams& params, const std::vector<double>& x);

// scalar risk = sum_j (1 - S(t_j)): cumulative incidence mass over the grid
double mtlr_risk(const MtlrParams& params, const std::vector<double>& x);
std::vector<RiskScore> mtlr_predict_risk(const MtlrParams& params,
                                         const std::vector<SurvivalRecord>& records);

enum class MtlrOptimizer { Adam, Sgd };

struct MtlrFitConfig {
    double c_reg = 1.0;
    double lr = 0.016;
    int epochs = 100;
    int batch_size = 16;  // <= 0 selects deterministic full-batch mode
    MtlrOptimizer optimizer = MtlrOptimizer::Adam;
    std::uint64_t seed = 0;
};

struct MtlrFitResult {
    MtlrParams params;
    std::vector<double> loss_trace;  // full-cohort loss at the end of each epoch
};

MtlrFitResult fit_mtlr(const std::vector<SurvivalRecord>& records, const TimeGrid& grid,
                       const MtlrFitConfig& config = {});

// ---- neural variant: fully connected encoder feeding the MTLR head ----

struct NeuralMtlrConfig {
    std::vector<int> hidden{256, 256};
    double dropout = 0.2;
    bool relu = true;
    MtlrFitConfig fit;
};

struct NeuralMtlrModel {
    nn::Sequential encoder;
    MtlrParams head;
    NeuralMtlrConfig config;

    SurvivalCurve survival_curve(const std::vector<double>& x);
    double risk(const std::vector<double>& x);
    std::vector<RiskScore> predict_risk(const std::vector<SurvivalRecord>& records);
};

// builds the encoder (Linear [+ ReLU] [+ Dropout between layers]) over d inputs
NeuralMtlrModel build_neural_mtlr(int input_dim, const TimeGrid& grid,
                                  const NeuralMtlrConfig& config);

// full loss of the composite model (encoder forward in the given mode)
double neural_mtlr_loss(NeuralMtlrModel& model, const std::vector<SurvivalRecord>& records,
                        nn::Mode mode = nn::Mode::Eval, std::uint64_t dropout_seed = 0);

struct NeuralMtlrFitResult {
    NeuralMtlrModel model;
    std::vector<double> loss_trace;
};

NeuralMtlrFitResult fit_neural_mtlr(const std::vector<SurvivalRecord>& records,
                                    const TimeGrid& grid, const NeuralMtlrConfig& config = {});

std::string mtlr_model_to_json(const MtlrParams& params, const std::string& encoding_json = "");
MtlrParams mtlr_model_from_json(const std::string& text);
std::string neural_mtlr_model_to_json(const NeuralMtlrModel& model,
                                      const std::string& encoding_json = "");
NeuralMtlrModel neural_mtlr_model_from_json(const std::string& text);

}  // namespace survfuse

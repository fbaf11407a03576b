#pragma once

#include <string>
#include <vector>

#include "survfuse/survival.hpp"

namespace survfuse {

struct CoxLikelihood {
    double value = 0.0;
    std::vector<double> gradient;  // d
    std::vector<double> hessian;   // d*d row-major
};

struct CoxConvergenceReport {
    bool converged = false;
    int iterations = 0;
    double final_grad_norm = 0.0;
    std::vector<double> grad_norm_trace;
};

struct CoxFitConfig {
    int max_iter = 100;
    double tol = 1e-8;
    double ridge = 0.0;
};

struct CoxModel {
    std::vector<double> beta;
    std::vector<std::string> feature_names;   // empty -> f0..f{d-1}
    std::vector<double> baseline_times;       // distinct event times, ascending
    std::vector<double> baseline_cumhaz;      // Breslow H0 at those times
    CoxConvergenceReport report;
    bool fitted = false;

    double cumhaz_at(double t) const;
    double baseline_survival(double t) const;  // exp(-H0(t))
};

// Negative log partial likelihood with Breslow tie handling, plus analytic
// gradient and Hessian.
CoxLikelihood neg_log_partial_likelihood(const std::vector<double>& beta,
                                         const std::vector<SurvivalRecord>& records);

// Newton-Raphson with step-halving on the (optionally ridge-penalized)
// partial likelihood; Breslow baseline computed at the fitted beta.
CoxModel fit_cox(const std::vector<SurvivalRecord>& records, const CoxFitConfig& config = {});

// Linear predictor beta . x per patient; higher = worse prognosis.
std::vector<RiskScore> cox_predict_risk(const CoxModel& model,
                                        const std::vector<SurvivalRecord>& records);

// Survival curves as the named covariate is set to each value, all other
// features held at the cohort mean: S(t) = S0(t)^exp(beta . (x_v - xbar)).
std::vector<SurvivalCurve> partial_effect_curves(const CoxModel& model,
                                                 const std::vector<SurvivalRecord>& records,
                                                 const std::string& covariate,
                                                 const std::vector<double>& values);

std::string cox_model_to_json(const CoxModel& model, const std::string& encoding_json = "");
CoxModel cox_model_from_json(const std::string& text);

}  // namespace survfuse

#pragma once
// Linear process scorer that emits a Beta belief per reasoning prefix.
//
// The mean head produces two logits (z_yes, z_no) and mu is the softmax
// probability of "yes" over just those two. The concentration head is a single
// linear unit passed through softplus and offset by kappa_min. Gradients are
// derived by hand for this fixed architecture.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "distprm/distmath.hpp"

namespace distprm {

enum class LossKind {
    /// Beta-Binomial NLL plus the stop-gradient evidence regularizer.
    BetaBinomialTotal,
    /// Soft cross-entropy of mu against K/N (standard point-label baseline).
    CrossEntropy,
};

const char* to_string(LossKind kind) noexcept;
/// Accepts "bb"/"beta_binomial_total" and "ce"/"cross_entropy".
LossKind loss_kind_from_string(const std::string& name);

struct ScorerParams {
    std::size_t feature_dim = 0;
    double kappa_min = kKappaMin;
    // feature_dim x 2, row-major; column 0 feeds z_yes, column 1 feeds z_no.
    std::vector<double> mean_weights;
    std::array<double, 2> mean_bias{0.0, 0.0};
    std::vector<double> conc_weights;
    double conc_bias = 0.0;

    static ScorerParams zeros(std::size_t feature_dim, double kappa_min = kKappaMin);
    /// Throws std::invalid_argument on shape mismatch, non-finite weights or kappa_min <= 0.
    void validate() const;
};

/// Gradient with the same layout as the trainable part of ScorerParams.
struct ScorerGrad {
    std::vector<double> mean_weights;
    std::array<double, 2> mean_bias{0.0, 0.0};
    std::vector<double> conc_weights;
    double conc_bias = 0.0;
};

struct LabeledPrefix {
    std::vector<double> features;
    CountObservation observation;
    std::optional<double> true_q;  // evaluation only, never enters a loss
    std::string problem_id;
    std::string rollout_id;
    int step_index = 0;  // 1-based
};

BetaBelief forward(const ScorerParams& params, std::span<const double> features);

double bb_loss(const BetaBelief& belief, const CountObservation& obs);
/// lambda_reg * |sg(mu) - K/N| * kappa, with mu clamped as in the likelihood.
double reg_loss(const BetaBelief& belief, const CountObservation& obs, double lambda_reg);
double ce_loss(const BetaBelief& belief, const CountObservation& obs);
double total_loss(const BetaBelief& belief, const CountObservation& obs, double lambda_reg);
double loss(LossKind kind, const BetaBelief& belief, const CountObservation& obs, double lambda_reg);

BeliefGrad bb_loss_grad(const BetaBelief& belief, const CountObservation& obs);
/// d_mu is always exactly zero (stop-gradient).
BeliefGrad reg_loss_grad(const BetaBelief& belief, const CountObservation& obs, double lambda_reg);
/// d_kappa is always exactly zero.
BeliefGrad ce_loss_grad(const BetaBelief& belief, const CountObservation& obs);
BeliefGrad loss_grad(LossKind kind, const BetaBelief& belief, const CountObservation& obs,
                     double lambda_reg);

/// Pulls a belief-space gradient back through both heads.
ScorerGrad backprop(const ScorerParams& params, std::span<const double> features, const BeliefGrad& upstream);

ScorerGrad backward(const ScorerParams& params, std::span<const double> features, const CountObservation& obs,
                    LossKind kind, double lambda_reg);

/// Optimizer constants follow the usual AdamW settings; learning rate,
/// epochs and batch size are desk-scale choices.
struct TrainConfig {
    double learning_rate = 0.02;
    double conc_lr_multiplier = 10.0;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double lambda_reg = 5e-2;
    double initial_kappa = 4.0;
    double init_scale = 0.01;
    double kappa_min = kKappaMin;
    int epochs = 30;
    int batch_size = 64;
    std::uint64_t seed = 7;
};

struct EpochDiagnostics {
    int epoch = 0;  // 0 is the initializer
    double loss = 0.0;
    double kappa_mean = 0.0;
    double kappa_p90 = 0.0;
    double mae_true_q = 0.0;  // NaN when no record carries true_q
};

struct TrainResult {
    ScorerParams params;
    EpochDiagnostics initial;
    std::vector<EpochDiagnostics> epochs;
};

/// Small-uniform weights from the seed; concentration bias solved so kappa starts near initial_kappa.
ScorerParams initialize_params(std::size_t feature_dim, const TrainConfig& config);

EpochDiagnostics diagnose(const ScorerParams& params, std::span<const LabeledPrefix> data, LossKind kind,
                          double lambda_reg, int epoch);

/// Mini-batch AdamW. Deterministic given config.seed. Throws std::invalid_argument on
/// an empty or inconsistent dataset and std::runtime_error on a non-finite loss.
TrainResult train(std::span<const LabeledPrefix> data, const TrainConfig& config, LossKind kind);

double softplus(double x) noexcept;
double inverse_softplus(double y);

}  // namespace distprm

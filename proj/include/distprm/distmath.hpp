#pragma once
// Special functions and Beta-Binomial count likelihood.
//
// Everything here is a pure function of its arguments. Domain violations
// (non-positive or non-finite arguments to the gamma family) throw
// std::domain_error; malformed observations throw std::invalid_argument.

#include <utility>

namespace distprm {

/// Margin used to clamp the Beta mean away from {0, 1} before forming (alpha, beta).
inline constexpr double kBetaEpsilon = 1e-6;
/// Lower bound added to the softplus concentration output.
inline constexpr double kKappaMin = 1e-3;
/// Internal concentration cap; beyond it the Binomial limit holds to working precision.
inline constexpr double kKappaCap = 1e8;

/// Beta belief over a prefix success probability, parameterized by mean and concentration.
struct BetaBelief {
    double mu = 0.5;
    double kappa = 4.0;
};

/// K successes out of N Monte Carlo continuations.
struct CountObservation {
    int successes = 0;
    int trials = 1;

    double ratio() const noexcept { return static_cast<double>(successes) / trials; }
    /// Throws std::invalid_argument unless 0 <= K <= N and N >= 1.
    void validate() const;
};

struct BetaParams {
    double alpha;
    double beta;
};

// Partial derivatives of a scalar with respect to the belief coordinates.
struct BeliefGrad {
    double d_mu = 0.0;
    double d_kappa = 0.0;
};

double log_gamma(double x);
double digamma(double x);
double log_beta(double a, double b);

/// Mean clamped into [epsilon, 1 - epsilon].
double clamp_mu(double mu, double epsilon = kBetaEpsilon) noexcept;
/// True when the clamp in clamp_mu would change mu (gradient is cut there).
bool mu_clamp_active(double mu, double epsilon = kBetaEpsilon) noexcept;

BetaParams beta_params(const BetaBelief& belief, double epsilon = kBetaEpsilon);

/// ln C(N,K) + ln B(K+alpha, N-K+beta) - ln B(alpha, beta).
double beta_binomial_log_pmf(const CountObservation& obs, const BetaBelief& belief);

/// Gradient of beta_binomial_log_pmf with respect to (mu, kappa). Zero through an
/// active mu clamp and above the kappa cap.
BeliefGrad beta_binomial_grad(const CountObservation& obs, const BetaBelief& belief);

/// Standard deviation of Beta(mu * kappa, (1 - mu) * kappa): sqrt(mu (1 - mu) / (kappa + 1)).
double beta_std(const BetaBelief& belief) noexcept;

}  // namespace distprm

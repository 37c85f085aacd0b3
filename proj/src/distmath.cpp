#include "distprm/distmath.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace distprm {

namespace {

// Lanczos approximation, g = 7, nine terms.
constexpr std::array<double, 9> kLanczos7 = {
    0.99999999999980993227684700473478,
    676.520368121885098567009190444019,
    -1259.13921672240287047156078755283,
    771.3234287776530788486528258894,
    -176.61502916214059906584551354,
    12.507343278686904814458936853,
    -0.13857109526572011689554707,
    9.984369578019570859563e-6,
    1.50563273514931155834e-7,
};

const double kLogRootTwoPi = 0.5 * std::log(2.0 * std::numbers::pi);

void require_positive(double x, const char* fn) {
    if (!std::isfinite(x) || x <= 0.0) {
        throw std::domain_error(std::string(fn) + ": argument must be positive and finite, got " +
                                std::to_string(x));
    }
}

double lanczos_log_gamma(double x) {
    // Lanczos is written for z!, i.e. Gamma(z + 1).
    const double z = x - 1.0;
    double series = kLanczos7[0];
    for (std::size_t k = 1; k < kLanczos7.size(); ++k) {
        series += kLanczos7[k] / (z + static_cast<double>(k));
    }
    const double shifted = z + 7.5;
    return (z + 0.5) * std::log(shifted) - shifted + kLogRootTwoPi + std::log(series);
}

double clamp_kappa(double kappa) noexcept { return std::min(kappa, kKappaCap); }

}  // namespace

void CountObservation::validate() const {
    if (trials < 1) {
        throw std::invalid_argument("CountObservation: trials must be >= 1");
    }
    if (successes < 0 || successes > trials) {
        throw std::invalid_argument("CountObservation: successes must lie in [0, trials]");
    }
}

double log_gamma(double x) {
    require_positive(x, "log_gamma");
    if (x < 0.5) {
        // Reflection: Gamma(x) Gamma(1 - x) = pi / sin(pi x).
        return std::log(std::numbers::pi / std::sin(std::numbers::pi * x)) -
               lanczos_log_gamma(1.0 - x);
    }
    return lanczos_log_gamma(x);
}

double digamma(double x) {
    require_positive(x, "digamma");
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    // Asymptotic series in 1/x^2 with Bernoulli coefficients B_2k / 2k.
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    const double tail =
        inv2 * (1.0 / 12.0 -
                inv2 * (1.0 / 120.0 -
                        inv2 * (1.0 / 252.0 -
                                inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    return result + std::log(x) - 0.5 * inv - tail;
}

double log_beta(double a, double b) {
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

double clamp_mu(double mu, double epsilon) noexcept {
    return std::clamp(mu, epsilon, 1.0 - epsilon);
}

bool mu_clamp_active(double mu, double epsilon) noexcept {
    return mu < epsilon || mu > 1.0 - epsilon;
}

BetaParams beta_params(const BetaBelief& belief, double epsilon) {
    const double mu = clamp_mu(belief.mu, epsilon);
    const double kappa = clamp_kappa(belief.kappa);
    return {mu * kappa, (1.0 - mu) * kappa};
}

double beta_binomial_log_pmf(const CountObservation& obs, const BetaBelief& belief) {
    obs.validate();
    const auto [alpha, beta] = beta_params(belief);
    const double n = obs.trials;
    const double k = obs.successes;
    const double log_choose = log_gamma(n + 1.0) - log_gamma(k + 1.0) - log_gamma(n - k + 1.0);
    return log_choose + log_beta(k + alpha, n - k + beta) - log_beta(alpha, beta);
}

BeliefGrad beta_binomial_grad(const CountObservation& obs, const BetaBelief& belief) {
    obs.validate();
    const auto [alpha, beta] = beta_params(belief);
    const double n = obs.trials;
    const double k = obs.successes;
    const double shared = digamma(alpha + beta) - digamma(n + alpha + beta);
    const double d_alpha = digamma(k + alpha) - digamma(alpha) + shared;
    const double d_beta = digamma(n - k + beta) - digamma(beta) + shared;

    const double mu = clamp_mu(belief.mu);
    const double kappa = clamp_kappa(belief.kappa);
    BeliefGrad grad;
    if (!mu_clamp_active(belief.mu)) {
        grad.d_mu = kappa * (d_alpha - d_beta);
    }
    if (belief.kappa <= kKappaCap) {
        grad.d_kappa = mu * d_alpha + (1.0 - mu) * d_beta;
    }
    return grad;
}

double beta_std(const BetaBelief& belief) noexcept {
    const double mu = std::clamp(belief.mu, 0.0, 1.0);
    return std::sqrt(mu * (1.0 - mu) / (belief.kappa + 1.0));
}

}  // namespace distprm

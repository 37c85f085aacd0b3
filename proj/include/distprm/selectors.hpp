#pragma once
// Candidate-level scoring rules for Best-of-N selection.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace distprm {

struct StepScore {
    double mu = 0.0;
    double kappa = 0.0;
    double sigma = 0.0;
};

struct ScoredCandidate {
    std::vector<StepScore> steps;
    std::int64_t token_cost = 0;
    std::string candidate_id;
    int answer = 0;
};

enum class SelectionKind { Vanilla, Linear, RiskBudget };

struct SelectionRule {
    SelectionKind kind = SelectionKind::Vanilla;
    double lambda = 0.0;
    double tau = 0.0;  // risk-budget only
};

const char* to_string(SelectionKind kind) noexcept;

/// Mean of per-step mu.
double s_vanilla(const ScoredCandidate& c);
/// Mean of (mu - lambda * sigma).
double s_linear(const ScoredCandidate& c, double lambda);
/// Mean mu minus lambda times the fraction of steps with sigma strictly above tau.
double s_risk_budget(const ScoredCandidate& c, double lambda, double tau);
double score(const ScoredCandidate& c, const SelectionRule& rule);

/// Quantile of step-level sigmas with linear interpolation; q in (0, 1).
double percentile_tau(std::span<const double> sigmas, double q);

/// Bernoulli standard deviation sqrt(mu (1 - mu)), the kappa-free uncertainty proxy.
double proxy_sigma(double mu);

/// Argmax of the rule's score; ties go to the lowest index. Throws on an empty pool.
std::size_t select_best(std::span<const ScoredCandidate> pool, const SelectionRule& rule);

}  // namespace distprm

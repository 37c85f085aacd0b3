#include "distprm/selectors.hpp"

#include <cmath>
#include <stdexcept>

#include "distprm/stats.hpp"

namespace distprm {

namespace {

void require_steps(const ScoredCandidate& c) {
    if (c.steps.empty()) throw std::invalid_argument("candidate " + c.candidate_id + " has no steps");
}

}  // namespace

const char* to_string(SelectionKind kind) noexcept {
    switch (kind) {
        case SelectionKind::Vanilla: return "vanilla";
        case SelectionKind::Linear: return "linear";
        case SelectionKind::RiskBudget: return "risk_budget";
    }
    return "unknown";
}

double s_vanilla(const ScoredCandidate& c) {
    require_steps(c);
    double sum = 0.0;
    for (const auto& s : c.steps) sum += s.mu;
    return sum / static_cast<double>(c.steps.size());
}

double s_linear(const ScoredCandidate& c, double lambda) {
    require_steps(c);
    double sum = 0.0;
    for (const auto& s : c.steps) sum += s.mu - lambda * s.sigma;
    return sum / static_cast<double>(c.steps.size());
}

double s_risk_budget(const ScoredCandidate& c, double lambda, double tau) {
    require_steps(c);
    std::size_t risky = 0;
    for (const auto& s : c.steps) risky += s.sigma > tau ? 1 : 0;
    return s_vanilla(c) - lambda * static_cast<double>(risky) / static_cast<double>(c.steps.size());
}

double score(const ScoredCandidate& c, const SelectionRule& rule) {
    switch (rule.kind) {
        case SelectionKind::Vanilla: return s_vanilla(c);
        case SelectionKind::Linear: return s_linear(c, rule.lambda);
        case SelectionKind::RiskBudget: return s_risk_budget(c, rule.lambda, rule.tau);
    }
    throw std::logic_error("unhandled selection kind");
}

double percentile_tau(std::span<const double> sigmas, double q) {
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("percentile_tau: q must lie in (0, 1)");
    return percentile(sigmas, q);
}

double proxy_sigma(double mu) {
    if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("proxy_sigma: mu must lie in [0, 1]");
    return std::sqrt(mu * (1.0 - mu));
}

std::size_t select_best(std::span<const ScoredCandidate> pool, const SelectionRule& rule) {
    if (pool.empty()) throw std::invalid_argument("select_best: empty pool");
    std::size_t best = 0;
    double best_score = score(pool[0], rule);
    for (std::size_t i = 1; i < pool.size(); ++i) {
        const double s = score(pool[i], rule);
        if (s > best_score) {
            best = i;
            best_score = s;
        }
    }
    return best;
}

}  // namespace distprm

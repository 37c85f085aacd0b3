#include "distprm/aca.hpp"

#include <cstdio>
#include <limits>
#include <stdexcept>

namespace distprm {

namespace {

constexpr std::uint64_t kFreshStream = 0x46;
constexpr std::uint64_t kRepairStream = 0x52;

std::string candidate_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "c%02d", index);
    return buf;
}

void check_pool(std::span<const ScoredCandidate> pool, const char* who) {
    if (pool.empty()) throw std::invalid_argument(std::string(who) + ": empty pool");
}

class RunBuilder {
public:
    RunBuilder(const SyntheticProblem& problem, const ScorerParams& scorer, UncertaintySource source)
        : scorer_(scorer), source_(source) {
        run_.trace.problem_id = problem.id;
    }

    void add(Rollout rollout, std::int64_t new_tokens) {
        const int index = run_.trace.candidates_generated++;
        ScoredCandidate sc = score_candidate(rollout, scorer_, source_);
        sc.candidate_id = candidate_name(index);
        run_.trace.total_tokens += new_tokens;
        run_.scored.push_back(std::move(sc));
        run_.candidates.push_back(std::move(rollout));
    }

    ACAStage snapshot(double lambda, double c_stop) const {
        ACAStage stage;
        for (const auto& c : run_.scored) {
            const Bounds b = bounds(c, lambda, c_stop);
            stage.pool.push_back(c.candidate_id);
            stage.scores.push_back(b.score);
            stage.lcb.push_back(b.lcb);
            stage.ucb.push_back(b.ucb);
        }
        return stage;
    }

    ACARun finish(const SelectionRule& rule) {
        const std::size_t best = select_best(run_.scored, rule);
        run_.trace.selected_candidate_id = run_.scored[best].candidate_id;
        run_.trace.selected_correct = run_.candidates[best].final_correct;
        return std::move(run_);
    }

    ACARun& run() { return run_; }

private:
    const ScorerParams& scorer_;
    UncertaintySource source_;
    ACARun run_;
};

void check_scorer(const ScorerParams& scorer) {
    scorer.validate();
    if (scorer.feature_dim != kFeatureDim) {
        throw std::invalid_argument("scorer feature_dim " + std::to_string(scorer.feature_dim) +
                                    " does not match environment features " + std::to_string(kFeatureDim));
    }
}

}  // namespace

const char* to_string(UncertaintySource source) noexcept {
    switch (source) {
        case UncertaintySource::Learned: return "learned";
        case UncertaintySource::Proxy: return "proxy";
        case UncertaintySource::None: return "none";
    }
    return "?";
}

UncertaintySource uncertainty_source_from_string(const std::string& name) {
    if (name == "learned") return UncertaintySource::Learned;
    if (name == "proxy") return UncertaintySource::Proxy;
    if (name == "none") return UncertaintySource::None;
    throw std::invalid_argument("unknown uncertainty source '" + name + "'");
}

const char* to_string(DecisionKind kind) noexcept {
    switch (kind) {
        case DecisionKind::Stop: return "stop";
        case DecisionKind::Expand: return "expand";
        case DecisionKind::Repair: return "repair";
    }
    return "?";
}

void ACAConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("aca config: " + what); };
    if (initial_batch < 1) fail("initial_batch must be positive");
    if (batch_size < 1) fail("batch_size must be positive");
    if (max_budget < initial_batch) fail("max_budget must be >= initial_batch");
    if (!(lambda >= 0.0)) fail("lambda must be non-negative");
    if (!(c_stop >= 0.0)) fail("c_stop must be non-negative");
    if (!(c_cut >= 0.0)) fail("c_cut must be non-negative");
    if (!(p_bad >= 0.0 && p_bad <= 1.0)) fail("p_bad must lie in [0, 1]");
}

ScoredCandidate score_candidate(const Rollout& rollout, const ScorerParams& scorer, UncertaintySource source) {
    if (rollout.steps.empty()) throw std::invalid_argument("score_candidate: rollout has no steps");
    ScoredCandidate c;
    c.steps.reserve(rollout.steps.size());
    for (const auto& step : rollout.steps) {
        const BetaBelief b = forward(scorer, step.features);
        double sigma = 0.0;
        switch (source) {
            case UncertaintySource::Learned: sigma = beta_std(b); break;
            case UncertaintySource::Proxy: sigma = proxy_sigma(b.mu); break;
            case UncertaintySource::None: break;
        }
        c.steps.push_back({b.mu, b.kappa, sigma});
    }
    c.token_cost = rollout.token_cost();
    c.answer = rollout.answer;
    return c;
}

Bounds bounds(const ScoredCandidate& candidate, double lambda, double c_stop) {
    if (candidate.steps.empty()) throw std::invalid_argument("bounds: candidate has no steps");
    double u = 0.0;
    for (const auto& s : candidate.steps) u += s.sigma;
    u /= static_cast<double>(candidate.steps.size());
    const double s = s_linear(candidate, lambda);
    return {s, s - c_stop * u, s + c_stop * u};
}

std::size_t leader(std::span<const ScoredCandidate> pool, const ACAConfig& config) {
    check_pool(pool, "leader");
    return select_best(pool, {SelectionKind::Linear, config.lambda, 0.0});
}

bool should_stop(std::span<const ScoredCandidate> pool, const ACAConfig& config) {
    const std::size_t best = leader(pool, config);
    const double lcb = bounds(pool[best], config.lambda, config.c_stop).lcb;
    double rival = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (i != best) rival = std::max(rival, bounds(pool[i], config.lambda, config.c_stop).ucb);
    }
    return lcb > rival;
}

std::size_t pick_competitor(std::span<const ScoredCandidate> pool, const ACAConfig& config) {
    if (pool.size() < 2) throw std::invalid_argument("pick_competitor: need at least two candidates");
    const std::size_t best = leader(pool, config);
    std::size_t pick = pool.size();
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (i == best) continue;
        const double ucb = bounds(pool[i], config.lambda, config.c_stop).ucb;
        if (pick == pool.size() || ucb > top) {
            pick = i;
            top = ucb;
        }
    }
    return pick;
}

int find_cutpoint(const ScoredCandidate& candidate, const ACAConfig& config) {
    if (candidate.steps.empty()) throw std::invalid_argument("find_cutpoint: candidate has no steps");
    for (std::size_t t = 0; t < candidate.steps.size(); ++t) {
        const auto& s = candidate.steps[t];
        if (s.mu - config.c_cut * s.sigma < config.p_bad) return static_cast<int>(t) + 1;
    }
    std::size_t arg = 0;
    for (std::size_t t = 1; t < candidate.steps.size(); ++t) {
        if (candidate.steps[t].sigma > candidate.steps[arg].sigma) arg = t;
    }
    return static_cast<int>(arg) + 1;
}

Rollout sample_fresh_candidate(const SyntheticProblem& problem, std::uint64_t seed, int index) {
    Rng rng(derive_seed(seed, {kFreshStream, static_cast<std::uint64_t>(index)}));
    return sample_rollout(problem, rng);
}

ACARun run_aca(const SyntheticProblem& problem, const ScorerParams& scorer, const ACAConfig& config,
               std::uint64_t seed) {
    config.validate();
    check_scorer(scorer);
    RunBuilder b(problem, scorer, config.uncertainty);
    for (int i = 0; i < config.initial_batch; ++i) {
        Rollout r = sample_fresh_candidate(problem, seed, i);
        const auto tokens = r.token_cost();
        b.add(std::move(r), tokens);
    }

    for (;;) {
        ACARun& run = b.run();
        ACAStage stage = b.snapshot(config.lambda, config.c_stop);
        if (config.early_stop && should_stop(run.scored, config)) {
            stage.decision = {DecisionKind::Stop, "dominance", "", 0};
            run.trace.stages.push_back(std::move(stage));
            break;
        }
        if (run.trace.candidates_generated >= config.max_budget) {
            stage.decision = {DecisionKind::Stop, "budget", "", 0};
            run.trace.stages.push_back(std::move(stage));
            break;
        }
        const int count = std::min(config.batch_size, config.max_budget - run.trace.candidates_generated);
        if (run.scored.size() < 2) {
            stage.decision = {DecisionKind::Expand, "", "", 0};
            for (int j = 0; j < count; ++j) {
                Rollout r = sample_fresh_candidate(problem, seed, run.trace.candidates_generated);
                const auto tokens = r.token_cost();
                b.add(std::move(r), tokens);
            }
        } else {
            const std::size_t comp = pick_competitor(run.scored, config);
            const int cut = find_cutpoint(run.scored[comp], config);
            const std::string parent = run.scored[comp].candidate_id;
            stage.decision = {DecisionKind::Repair, "", parent, cut};
            const std::vector<RolloutStep> prefix(run.candidates[comp].steps.begin(),
                                                  run.candidates[comp].steps.begin() + (cut - 1));
            for (int j = 0; j < count; ++j) {
                const auto k = static_cast<std::uint64_t>(run.trace.candidates_generated);
                Rng rng(derive_seed(seed, {kRepairStream, k}));
                Rollout r = sample_rollout(problem, rng, prefix);
                r.from_prefix_of = Provenance{parent, cut};
                std::int64_t fresh_tokens = 0;
                for (std::size_t t = prefix.size(); t < r.steps.size(); ++t) fresh_tokens += r.steps[t].token_count;
                b.add(std::move(r), fresh_tokens);
            }
        }
        b.run().trace.stages.push_back(std::move(stage));
    }
    return b.finish(config.final_selection);
}

ACARun run_vanilla_bon(const SyntheticProblem& problem, const ScorerParams& scorer, int n,
                       const SelectionRule& rule, UncertaintySource source, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("run_vanilla_bon: n must be >= 1");
    check_scorer(scorer);
    RunBuilder b(problem, scorer, source);
    for (int i = 0; i < n; ++i) {
        Rollout r = sample_fresh_candidate(problem, seed, i);
        const auto tokens = r.token_cost();
        b.add(std::move(r), tokens);
    }
    ACAStage stage = b.snapshot(rule.lambda, 0.0);
    stage.decision = {DecisionKind::Stop, "budget", "", 0};
    b.run().trace.stages.push_back(std::move(stage));
    return b.finish(rule);
}

nlohmann::ordered_json trace_to_json(const ACATrace& trace) {
    nlohmann::ordered_json j;
    j["problem_id"] = trace.problem_id;
    j["stages"] = nlohmann::ordered_json::array();
    for (const auto& s : trace.stages) {
        nlohmann::ordered_json st;
        st["pool"] = s.pool;
        st["scores"] = s.scores;
        st["lcb"] = s.lcb;
        st["ucb"] = s.ucb;
        nlohmann::ordered_json d;
        d["kind"] = to_string(s.decision.kind);
        if (!s.decision.reason.empty()) d["reason"] = s.decision.reason;
        if (s.decision.kind == DecisionKind::Repair) {
            d["candidate_id"] = s.decision.candidate_id;
            d["cut_index"] = s.decision.cut_index;
        }
        st["decision"] = std::move(d);
        j["stages"].push_back(std::move(st));
    }
    j["total_tokens"] = trace.total_tokens;
    j["candidates_generated"] = trace.candidates_generated;
    j["selected_candidate_id"] = trace.selected_candidate_id;
    j["selected_correct"] = trace.selected_correct;
    return j;
}

}  // namespace distprm

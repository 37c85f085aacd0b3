#pragma once
// Adaptive computation allocation for Best-of-N sampling.
//
// Candidates are drawn in batches. After each stage the leader y* (argmax of
// the linear risk-adjusted score S) stops the search when its lower bound
// S - c_stop U beats every other candidate's upper bound S + c_stop U, where U
// is the candidate's mean step sigma. Otherwise the non-winner with the
// highest upper bound is cut at its first doubtful step and m continuations
// are resampled from the kept prefix. Reused prefix steps cost no new tokens.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "distprm/envsim.hpp"
#include "distprm/scorer.hpp"
#include "distprm/selectors.hpp"

namespace distprm {

enum class UncertaintySource { Learned, Proxy, None };

const char* to_string(UncertaintySource source) noexcept;
UncertaintySource uncertainty_source_from_string(const std::string& name);

struct ACAConfig {
    int initial_batch = 4;
    int batch_size = 4;
    int max_budget = 16;
    double lambda = 0.5;
    double c_stop = 0.3;
    double c_cut = 1.0;
    double p_bad = 0.3;
    UncertaintySource uncertainty = UncertaintySource::Learned;
    bool early_stop = true;
    SelectionRule final_selection{SelectionKind::Linear, 0.5, 0.0};

    void validate() const;
};

struct Bounds {
    double score = 0.0;
    double lcb = 0.0;
    double ucb = 0.0;
};

enum class DecisionKind { Stop, Expand, Repair };

const char* to_string(DecisionKind kind) noexcept;

struct StageDecision {
    DecisionKind kind = DecisionKind::Stop;
    std::string reason;  // stop: "dominance" or "budget"
    std::string candidate_id;  // repair only
    int cut_index = 0;  // repair only, 1-based
};

struct ACAStage {
    std::vector<std::string> pool;
    std::vector<double> scores;
    std::vector<double> lcb;
    std::vector<double> ucb;
    StageDecision decision;
};

struct ACATrace {
    std::string problem_id;
    std::vector<ACAStage> stages;
    std::int64_t total_tokens = 0;
    int candidates_generated = 0;
    std::string selected_candidate_id;
    bool selected_correct = false;
};

struct ACARun {
    ACATrace trace;
    std::vector<Rollout> candidates;
    std::vector<ScoredCandidate> scored;
};

ScoredCandidate score_candidate(const Rollout& rollout, const ScorerParams& scorer, UncertaintySource source);

/// S = s_linear(lambda), U = mean sigma, bounds S -/+ c_stop U.
Bounds bounds(const ScoredCandidate& candidate, double lambda, double c_stop);

/// Index of argmax S with the lowest-index tie-break.
std::size_t leader(std::span<const ScoredCandidate> pool, const ACAConfig& config);
bool should_stop(std::span<const ScoredCandidate> pool, const ACAConfig& config);
/// Non-winner with the largest UCB; needs at least two candidates.
std::size_t pick_competitor(std::span<const ScoredCandidate> pool, const ACAConfig& config);
/// 1-based cut step: first mu - c_cut sigma < p_bad, else argmax sigma.
int find_cutpoint(const ScoredCandidate& candidate, const ACAConfig& config);

/// Fresh candidate i of a run with this seed; shared by ACA and vanilla BoN so their pools align.
Rollout sample_fresh_candidate(const SyntheticProblem& problem, std::uint64_t seed, int index);

ACARun run_aca(const SyntheticProblem& problem, const ScorerParams& scorer, const ACAConfig& config,
               std::uint64_t seed);

ACARun run_vanilla_bon(const SyntheticProblem& problem, const ScorerParams& scorer, int n,
                       const SelectionRule& rule, UncertaintySource source, std::uint64_t seed);

nlohmann::ordered_json trace_to_json(const ACATrace& trace);

}  // namespace distprm

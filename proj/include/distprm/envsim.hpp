#pragma once
// Synthetic step-by-step reasoning world with an exact prefix-success oracle.
//
// Each problem is an absorbing fatal-error chain: at every new step a clean
// prefix turns fatal with probability e; once fatal it stays fatal. A clean
// completion is always correct, a fatal one recovers with probability rho.
// Hence q_t = rho when fatal, otherwise (1-e)^(T-t) + (1 - (1-e)^(T-t)) rho.
//
// Step features (kFeatureDim = 8):
//   [0] fatal indicator, flipped independently with probability eta
//   [1] remaining fraction (T - t) / T
//   [2] e plus Gaussian noise
//   [3] clarity 1 - 2 eta plus Gaussian noise
//   [4] signed evidence: +clarity when the indicator is raised, -clarity otherwise
//   [5] running mean of [4] over the prefix
//   [6] (T - t) times [2]
//   [7] constant 1
//
// A fraction of steps draw their indicator flip from ambiguous_eta instead of
// the problem's eta, and their clarity reflects that.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "distprm/distmath.hpp"
#include "distprm/random.hpp"
#include "distprm/scorer.hpp"

namespace distprm {

inline constexpr std::size_t kFeatureDim = 8;

struct EnvConfig {
    int num_problems = 420;
    int rollouts_per_problem = 4;
    int min_steps = 3;
    int max_steps = 9;
    double min_error_rate = 0.03;
    double max_error_rate = 0.28;
    std::vector<double> eta_regimes{0.05, 0.30};
    double recovery_rate = 0.02;
    int min_tokens = 60;
    int max_tokens = 140;
    double feature_noise = 0.05;
    double ambiguous_step_rate = 0.2;
    double ambiguous_eta = 0.45;
    int label_trials = 16;

    void validate() const;
};

struct SyntheticProblem {
    std::string id;
    std::uint64_t index = 0;
    int num_steps = 2;
    double error_rate = 0.1;
    double recovery_rate = 0.05;
    double eta = 0.05;
    int min_tokens = 60;
    int max_tokens = 140;
    double feature_noise = 0.02;
    double ambiguous_step_rate = 0.0;
    double ambiguous_eta = 0.45;
    std::uint64_t seed = 0;

    void validate() const;
};

struct RolloutStep {
    bool fatal = false;
    std::vector<double> features;
    int token_count = 0;
};

struct Provenance {
    std::string candidate_id;
    int cut_index = 1;  // 1-based step that was resampled
};

struct Rollout {
    std::string problem_id;
    std::vector<RolloutStep> steps;
    bool final_correct = false;
    int answer = 0;  // 0 is the correct answer token
    std::optional<Provenance> from_prefix_of;

    std::int64_t token_cost() const noexcept;
};

/// Draws T, e and eta for problem `index` from rng.
SyntheticProblem generate_problem(const EnvConfig& config, std::uint64_t index, Rng& rng,
                                  const std::string& id_prefix = "p");

/// Problems 0..count-1 from independent id-derived streams under `seed`.
std::vector<SyntheticProblem> generate_problems(const EnvConfig& config, int count, std::uint64_t seed,
                                                const std::string& id_prefix = "p");

/// Continues the chain after `prefix` (empty for a fresh rollout) up to the problem's T steps.
Rollout sample_rollout(const SyntheticProblem& problem, Rng& rng, std::span<const RolloutStep> prefix = {});

double true_q(const SyntheticProblem& problem, bool fatal, int steps_done);

/// K successful continuations out of `trials` sampled from the prefix.
CountObservation mc_label(const SyntheticProblem& problem, std::span<const RolloutStep> prefix, int trials,
                          Rng& rng);

struct Dataset {
    std::vector<SyntheticProblem> problems;
    std::vector<LabeledPrefix> records;
};

Dataset make_dataset(const EnvConfig& config, std::uint64_t seed);

/// One JSON object per line: problem_id, rollout_id, step_index, features, K, N[, true_q].
void write_jsonl(std::span<const LabeledPrefix> records, std::ostream& out);
/// Throws std::invalid_argument with the line number on malformed input.
std::vector<LabeledPrefix> read_jsonl(std::istream& in);

}  // namespace distprm

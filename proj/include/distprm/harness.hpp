#pragma once
// Experiment pipelines behind the CLI: data generation, training, Best-of-N,
// ACA and step-detection evaluation, and report merging. Every command is a
// pure function of its config and inputs, so reruns produce identical files.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "distprm/aca.hpp"
#include "distprm/config.hpp"

namespace distprm {

namespace fs = std::filesystem;

// ---- report rows -----------------------------------------------------------

struct ReportRow {
    std::string method;
    double accuracy = 0.0;
    std::int64_t total_tokens = 0;
    double mean_candidates = 0.0;
    std::optional<double> lambda;
    std::optional<double> tau_q;

    /// Throws std::invalid_argument unless accuracy is in [0, 1] and tokens are non-negative.
    void validate() const;
};

inline constexpr const char* kReportHeader = "method,accuracy,total_tokens,mean_candidates,lambda,tau_q";

void write_report_csv(std::span<const ReportRow> rows, std::ostream& out);
/// Throws std::invalid_argument naming `source` and the line on malformed input.
std::vector<ReportRow> read_report_csv(std::istream& in, const std::string& source);

/// 100 (1 - tokens / baseline). Throws when baseline is not positive.
double token_reduction_percent(std::int64_t tokens, std::int64_t baseline);
/// "(↓30.22%)" style label with two decimals; increases render as "(↑x%)".
std::string format_reduction(double percent);

// ---- shared evaluation plumbing --------------------------------------------

/// Deterministic split by hashed problem id; `fraction` of ids land in validation.
bool is_validation(const std::string& problem_id, double fraction);

struct EvalSplit {
    std::vector<SyntheticProblem> validation;
    std::vector<SyntheticProblem> test;
};

/// Held-out problems ("e" ids) drawn from a stream disjoint from the training data.
EvalSplit eval_problems(const ExperimentConfig& config);

/// Candidates 0..size-1 of the problem's shared pool; the same streams ACA uses for fresh draws.
std::vector<Rollout> make_pool(const SyntheticProblem& problem, int size);

std::vector<ScoredCandidate> score_pool(std::span<const Rollout> pool, const ScorerParams& scorer,
                                        UncertaintySource source = UncertaintySource::Learned);

struct TunedRule {
    SelectionRule rule;
    std::optional<double> tau_q;
    double validation_accuracy = 0.0;
};

/// Grid search on validation pools maximizing accuracy; ties keep the earlier grid point.
/// Risk-budget tau is the q-th percentile of all validation step sigmas.
TunedRule tune_rule(SelectionKind kind, std::span<const std::vector<ScoredCandidate>> pools,
                    std::span<const std::vector<bool>> correct, const SelectorGrid& grid);

// ---- step detection --------------------------------------------------------

struct ThresholdChoice {
    double threshold = 0.0;
    double f1 = 0.0;
};

/// Micro F1 with erroneous steps as the positive class; a step is flagged when score < threshold.
double f1_at(std::span<const double> scores, const std::vector<bool>& erroneous, double threshold);
/// Sweeps thresholds k * step for k = 0..floor(1/step); ties keep the lowest threshold.
ThresholdChoice best_threshold(std::span<const double> scores, const std::vector<bool>& erroneous, double step);

struct StepDetectRow {
    std::string method;
    std::string regime;  // "all" or "eta=0.05" style
    double threshold = 0.0;
    double f1 = 0.0;
    std::size_t steps = 0;
};

// ---- commands --------------------------------------------------------------

struct GenDataResult {
    fs::path dataset;
    fs::path manifest;
    std::size_t records = 0;
    std::string config_hash;
};

/// dataset.jsonl plus manifest.json under out_dir.
GenDataResult cmd_gen_data(const ExperimentConfig& config, const fs::path& out_dir);

/// Trains `kind` on the dataset; writes model_<kind>.json, train_log_<kind>.csv and train_<kind>.json.
TrainResult cmd_train(const ExperimentConfig& config, LossKind kind, const fs::path& dataset, const fs::path& out_dir);

fs::path model_path(const fs::path& out_dir, LossKind kind);

struct BonReport {
    std::vector<ReportRow> rows;
    std::string pool_sha256;
    int test_problems = 0;
};

/// Shared 16-candidate pools scored by the BB model and the CE baseline; bon_report.{csv,json}.
BonReport cmd_eval_bon(const ExperimentConfig& config, const ScorerParams& bb, const ScorerParams& ce,
                       const fs::path& out_dir);

struct AcaReport {
    std::vector<ReportRow> rows;
    double first_stage_stop_rate = 0.0;  // full ACA
};

/// Vanilla BoN, ACA without early stop and full ACA (BB model, tuned risk-budget selection),
/// plus the learned / proxy / reward-only ablation; aca_report.{csv,json} and aca_traces.jsonl.
AcaReport cmd_eval_aca(const ExperimentConfig& config, const ScorerParams& bb, const ScorerParams& ce,
                       const fs::path& out_dir);

std::vector<StepDetectRow> cmd_eval_stepdetect(const ExperimentConfig& config, const ScorerParams& bb,
                                               const ScorerParams& ce, const fs::path& out_dir);

/// Merges report CSVs (sorted by path) and adds reductions against each file's vanilla row;
/// writes report.csv and report.json. Throws before writing anything on empty or bad input.
std::vector<ReportRow> cmd_report(std::vector<fs::path> inputs, const fs::path& out_dir);

}  // namespace distprm

#pragma once
// Experiment configuration: one versioned JSON document drives every CLI command.
// Missing keys take defaults; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "distprm/aca.hpp"
#include "distprm/envsim.hpp"
#include "distprm/scorer.hpp"

namespace distprm {

inline constexpr int kConfigVersion = 1;

struct SelectorGrid {
    std::vector<double> lambdas{0.2, 0.5, 0.7, 1.0, 1.5};
    std::vector<double> tau_quantiles{0.7, 0.8, 0.9};
    double validation_fraction = 0.2;
};

struct EvalConfig {
    int num_problems = 25000;
    int pool_size = 16;
};

struct AcaEvalConfig {
    int initial_batch = 4;
    int batch_size = 4;
    int max_budget = 16;
    double lambda = 0.5;
    double c_stop = 0.3;
    double c_cut = 1.0;
    double p_bad = 0.3;
    int max_traces = 1000;  // traces are written for the first test problems only
};

struct StepDetectConfig {
    double lambda = 0.5;
    double threshold_step = 0.005;
    int rollouts_per_problem = 4;
};

struct ExperimentConfig {
    int version = kConfigVersion;
    std::uint64_t seed = 7;
    EnvConfig env;
    LossKind loss_kind = LossKind::BetaBinomialTotal;
    TrainConfig train;  // train.seed is ignored, see train_config()
    SelectorGrid selector;
    EvalConfig eval;
    AcaEvalConfig aca;
    StepDetectConfig stepdetect;
    std::string output_dir = "out";

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    /// Training settings with the experiment seed applied.
    TrainConfig train_config() const;
    ACAConfig aca_config() const;
};

/// Strict parse: unknown keys, wrong types and unsupported versions throw std::invalid_argument.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::ordered_json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

/// SHA-256 of the canonical JSON form, excluding the output directory.
std::string config_hash(const ExperimentConfig& config);

}  // namespace distprm

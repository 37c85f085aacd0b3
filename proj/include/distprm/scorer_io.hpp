#pragma once
// Versioned JSON form of ScorerParams:
//   {"version":1,"feature_dim":D,"kappa_min":k,
//    "mean_head":{"weights":[2D, row-major],"bias":[2]},
//    "conc_head":{"weights":[D],"bias":b}}

#include <filesystem>
#include <string>

#include <json.hpp>

#include "distprm/scorer.hpp"

namespace distprm {

inline constexpr int kScorerFormatVersion = 1;

nlohmann::ordered_json scorer_to_json(const ScorerParams& params);
/// Throws std::invalid_argument on a wrong version, missing keys or shape mismatch.
ScorerParams scorer_from_json(const nlohmann::json& doc);

void save_scorer(const ScorerParams& params, const std::filesystem::path& path);
ScorerParams load_scorer(const std::filesystem::path& path);

}  // namespace distprm

#include "distprm/scorer_io.hpp"

#include <fstream>
#include <stdexcept>

namespace distprm {

nlohmann::ordered_json scorer_to_json(const ScorerParams& params) {
    params.validate();
    nlohmann::ordered_json doc;
    doc["version"] = kScorerFormatVersion;
    doc["feature_dim"] = params.feature_dim;
    doc["kappa_min"] = params.kappa_min;
    doc["mean_head"]["weights"] = params.mean_weights;
    doc["mean_head"]["bias"] = params.mean_bias;
    doc["conc_head"]["weights"] = params.conc_weights;
    doc["conc_head"]["bias"] = params.conc_bias;
    return doc;
}

ScorerParams scorer_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("version").get<int>() != kScorerFormatVersion) {
            throw std::invalid_argument("unsupported scorer format version " + doc.at("version").dump());
        }
        ScorerParams p;
        p.feature_dim = doc.at("feature_dim").get<std::size_t>();
        p.kappa_min = doc.at("kappa_min").get<double>();
        p.mean_weights = doc.at("mean_head").at("weights").get<std::vector<double>>();
        p.mean_bias = doc.at("mean_head").at("bias").get<std::array<double, 2>>();
        p.conc_weights = doc.at("conc_head").at("weights").get<std::vector<double>>();
        p.conc_bias = doc.at("conc_head").at("bias").get<double>();
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed scorer document: ") + e.what());
    }
}

void save_scorer(const ScorerParams& params, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << scorer_to_json(params).dump(2) << '\n';
}

ScorerParams load_scorer(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("model file " + path.string() + " is not valid JSON: " + e.what());
    }
    return scorer_from_json(doc);
}

}  // namespace distprm

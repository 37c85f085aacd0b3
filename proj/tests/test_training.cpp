#include <doctest.h>

#include <cmath>

#include "distprm/envsim.hpp"
#include "distprm/scorer.hpp"

using namespace distprm;

namespace {

double mae(const ScorerParams& p, const std::vector<LabeledPrefix>& rows) {
    double s = 0.0;
    for (const auto& r : rows) s += std::abs(forward(p, r.features).mu - *r.true_q);
    return s / static_cast<double>(rows.size());
}

struct Split {
    std::vector<LabeledPrefix> fit, held;
};

// Every fifth problem is held out, so no rollout straddles the split.
Split split(const Dataset& ds) {
    Split out;
    for (const auto& r : ds.records) {
        const int index = std::stoi(r.problem_id.substr(1));
        (index % 5 == 0 ? out.held : out.fit).push_back(r);
    }
    return out;
}

}  // namespace

TEST_CASE("training on a low-noise world cuts held-out MAE to true_q at least threefold") {
    EnvConfig env;
    env.eta_regimes = {0.05};
    env.ambiguous_step_rate = 0.0;
    env.feature_noise = 0.02;
    const auto ds = make_dataset(env, 7);
    CHECK(ds.records.size() >= 9000);
    CHECK(ds.records.size() <= 11000);
    const auto [fit, held] = split(ds);
    REQUIRE_FALSE(held.empty());

    const TrainConfig cfg;
    const auto untrained = mae(initialize_params(kFeatureDim, cfg), held);
    for (const auto kind : {LossKind::BetaBinomialTotal, LossKind::CrossEntropy}) {
        const auto trained = mae(train(fit, cfg, kind).params, held);
        MESSAGE(std::string(to_string(kind)) << ": untrained " << untrained << " trained " << trained);
        CHECK(untrained >= 3.0 * trained);
    }
}

TEST_CASE("training on the default two-regime world still reduces held-out MAE") {
    const auto ds = make_dataset(EnvConfig{}, 7);
    const auto [fit, held] = split(ds);
    const TrainConfig cfg;
    const auto untrained = mae(initialize_params(kFeatureDim, cfg), held);
    const auto trained = mae(train(fit, cfg, LossKind::BetaBinomialTotal).params, held);
    MESSAGE("default world: untrained " << untrained << " trained " << trained);
    CHECK(trained < untrained);
}

#include "distprm/envsim.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace distprm {

namespace {

constexpr std::uint64_t kProblemStream = 0x70;
constexpr std::uint64_t kRolloutStream = 0x72;
constexpr std::uint64_t kLabelStream = 0x6c;

std::string format_id(const std::string& prefix, std::uint64_t index, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*llu", width, static_cast<unsigned long long>(index));
    return prefix + buf;
}

}  // namespace

void EnvConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("env config: " + what); };
    if (num_problems < 1) fail("num_problems must be positive");
    if (rollouts_per_problem < 1) fail("rollouts_per_problem must be positive");
    if (min_steps < 2 || max_steps < min_steps) fail("step range must satisfy 2 <= min_steps <= max_steps");
    if (!(min_error_rate >= 0.0 && max_error_rate < 1.0 && min_error_rate <= max_error_rate)) {
        fail("error rate range must lie in [0, 1)");
    }
    if (eta_regimes.empty()) fail("eta_regimes must be non-empty");
    for (double eta : eta_regimes) {
        if (!(eta >= 0.0 && eta < 0.5)) fail("every eta regime must lie in [0, 0.5)");
    }
    if (!(recovery_rate >= 0.0 && recovery_rate < 0.5)) fail("recovery_rate must lie in [0, 0.5)");
    if (min_tokens < 1 || max_tokens < min_tokens) fail("token range must satisfy 1 <= min <= max");
    if (!(feature_noise >= 0.0)) fail("feature_noise must be non-negative");
    if (!(ambiguous_step_rate >= 0.0 && ambiguous_step_rate <= 1.0)) fail("ambiguous_step_rate must lie in [0, 1]");
    if (!(ambiguous_eta >= 0.0 && ambiguous_eta <= 0.5)) fail("ambiguous_eta must lie in [0, 0.5]");
    if (label_trials < 1) fail("label_trials must be positive");
}

void SyntheticProblem::validate() const {
    auto fail = [&](const std::string& what) { throw std::invalid_argument("problem " + id + ": " + what); };
    if (num_steps < 2) fail("num_steps must be >= 2");
    if (!(error_rate >= 0.0 && error_rate < 1.0)) fail("error_rate must lie in [0, 1)");
    if (!(recovery_rate >= 0.0 && recovery_rate < 0.5)) fail("recovery_rate must lie in [0, 0.5)");
    if (!(eta >= 0.0 && eta < 0.5)) fail("eta must lie in [0, 0.5)");
    if (min_tokens < 1 || max_tokens < min_tokens) fail("bad token range");
    if (!(ambiguous_step_rate >= 0.0 && ambiguous_step_rate <= 1.0)) fail("ambiguous_step_rate must lie in [0, 1]");
    if (!(ambiguous_eta >= 0.0 && ambiguous_eta <= 0.5)) fail("ambiguous_eta must lie in [0, 0.5]");
}

std::int64_t Rollout::token_cost() const noexcept {
    std::int64_t total = 0;
    for (const auto& s : steps) total += s.token_count;
    return total;
}

SyntheticProblem generate_problem(const EnvConfig& config, std::uint64_t index, Rng& rng,
                                  const std::string& id_prefix) {
    config.validate();
    SyntheticProblem p;
    p.id = format_id(id_prefix, index, 5);
    p.index = index;
    p.num_steps = static_cast<int>(rng.uniform_int(config.min_steps, config.max_steps));
    p.error_rate = rng.uniform(config.min_error_rate, config.max_error_rate);
    p.eta = config.eta_regimes[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(config.eta_regimes.size()) - 1))];
    p.recovery_rate = config.recovery_rate;
    p.min_tokens = config.min_tokens;
    p.max_tokens = config.max_tokens;
    p.feature_noise = config.feature_noise;
    p.ambiguous_step_rate = config.ambiguous_step_rate;
    p.ambiguous_eta = config.ambiguous_eta;
    p.seed = rng.next();
    return p;
}

std::vector<SyntheticProblem> generate_problems(const EnvConfig& config, int count, std::uint64_t seed,
                                                const std::string& id_prefix) {
    std::vector<SyntheticProblem> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, {kProblemStream, static_cast<std::uint64_t>(i)}));
        out.push_back(generate_problem(config, static_cast<std::uint64_t>(i), rng, id_prefix));
    }
    return out;
}

Rollout sample_rollout(const SyntheticProblem& problem, Rng& rng, std::span<const RolloutStep> prefix) {
    if (prefix.size() > static_cast<std::size_t>(problem.num_steps)) {
        throw std::invalid_argument("sample_rollout: prefix longer than the problem");
    }
    for (std::size_t i = 1; i < prefix.size(); ++i) {
        if (prefix[i - 1].fatal && !prefix[i].fatal) {
            throw std::invalid_argument("sample_rollout: prefix violates the absorbing error chain");
        }
    }
    Rollout r;
    r.problem_id = problem.id;
    r.steps.assign(prefix.begin(), prefix.end());
    bool fatal = !prefix.empty() && prefix.back().fatal;
    const double steps_total = problem.num_steps;
    double evidence_sum = 0.0;
    for (const auto& s : prefix) evidence_sum += s.features.size() > 4 ? s.features[4] : 0.0;
    for (int t = static_cast<int>(prefix.size()) + 1; t <= problem.num_steps; ++t) {
        if (!fatal) fatal = rng.bernoulli(problem.error_rate);
        RolloutStep step;
        step.fatal = fatal;
        const double eta = rng.bernoulli(problem.ambiguous_step_rate) ? problem.ambiguous_eta : problem.eta;
        const bool flagged = fatal != rng.bernoulli(eta);
        const double clarity = 1.0 - 2.0 * eta + rng.normal(0.0, problem.feature_noise);
        const double e_hat = problem.error_rate + rng.normal(0.0, problem.feature_noise);
        const double evidence = (flagged ? 1.0 : -1.0) * clarity;
        evidence_sum += evidence;
        step.features = {
            flagged ? 1.0 : 0.0,
            (steps_total - t) / steps_total,
            e_hat,
            clarity,
            evidence,
            evidence_sum / t,
            (steps_total - t) * e_hat,
            1.0,
        };
        step.token_count = static_cast<int>(rng.uniform_int(problem.min_tokens, problem.max_tokens));
        r.steps.push_back(std::move(step));
    }
    r.final_correct = !fatal || rng.bernoulli(problem.recovery_rate);
    r.answer = r.final_correct ? 0 : static_cast<int>(rng.uniform_int(1, 7));
    return r;
}

double true_q(const SyntheticProblem& problem, bool fatal, int steps_done) {
    if (steps_done < 0 || steps_done > problem.num_steps) {
        throw std::invalid_argument("true_q: steps_done outside [0, T]");
    }
    if (fatal) return problem.recovery_rate;
    const double clean = std::pow(1.0 - problem.error_rate, problem.num_steps - steps_done);
    return clean + (1.0 - clean) * problem.recovery_rate;
}

CountObservation mc_label(const SyntheticProblem& problem, std::span<const RolloutStep> prefix, int trials,
                          Rng& rng) {
    if (trials < 1) throw std::invalid_argument("mc_label: trials must be >= 1");
    CountObservation obs{0, trials};
    for (int i = 0; i < trials; ++i) {
        if (sample_rollout(problem, rng, prefix).final_correct) ++obs.successes;
    }
    return obs;
}

Dataset make_dataset(const EnvConfig& config, std::uint64_t seed) {
    config.validate();
    Dataset ds;
    ds.problems = generate_problems(config, config.num_problems, seed);
    for (const auto& problem : ds.problems) {
        for (int r = 0; r < config.rollouts_per_problem; ++r) {
            const auto ridx = static_cast<std::uint64_t>(r);
            Rng rollout_rng(derive_seed(problem.seed, {kRolloutStream, ridx}));
            const Rollout rollout = sample_rollout(problem, rollout_rng);
            const std::string rollout_id = problem.id + "-r" + format_id("", ridx, 2);
            for (std::size_t t = 1; t <= rollout.steps.size(); ++t) {
                Rng label_rng(derive_seed(problem.seed, {kLabelStream, ridx, t}));
                const auto prefix = std::span<const RolloutStep>(rollout.steps).first(t);
                LabeledPrefix rec;
                rec.features = rollout.steps[t - 1].features;
                rec.observation = mc_label(problem, prefix, config.label_trials, label_rng);
                rec.true_q = true_q(problem, rollout.steps[t - 1].fatal, static_cast<int>(t));
                rec.problem_id = problem.id;
                rec.rollout_id = rollout_id;
                rec.step_index = static_cast<int>(t);
                ds.records.push_back(std::move(rec));
            }
        }
    }
    return ds;
}

void write_jsonl(std::span<const LabeledPrefix> records, std::ostream& out) {
    for (const auto& rec : records) {
        nlohmann::ordered_json line;
        line["problem_id"] = rec.problem_id;
        line["rollout_id"] = rec.rollout_id;
        line["step_index"] = rec.step_index;
        line["features"] = rec.features;
        line["K"] = rec.observation.successes;
        line["N"] = rec.observation.trials;
        if (rec.true_q) line["true_q"] = *rec.true_q;
        out << line.dump() << '\n';
    }
}

std::vector<LabeledPrefix> read_jsonl(std::istream& in) {
    std::vector<LabeledPrefix> records;
    std::string text;
    std::size_t line_no = 0;
    while (std::getline(in, text)) {
        ++line_no;
        if (text.empty()) continue;
        try {
            const auto line = nlohmann::json::parse(text);
            LabeledPrefix rec;
            rec.problem_id = line.at("problem_id").get<std::string>();
            rec.rollout_id = line.at("rollout_id").get<std::string>();
            rec.step_index = line.at("step_index").get<int>();
            rec.features = line.at("features").get<std::vector<double>>();
            rec.observation = {line.at("K").get<int>(), line.at("N").get<int>()};
            rec.observation.validate();
            if (line.contains("true_q")) {
                const double q = line.at("true_q").get<double>();
                if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("true_q outside [0, 1]");
                rec.true_q = q;
            }
            if (rec.step_index < 1) throw std::invalid_argument("step_index must be >= 1");
            records.push_back(std::move(rec));
        } catch (const std::exception& e) {
            throw std::invalid_argument("dataset line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

}  // namespace distprm

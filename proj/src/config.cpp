#include "distprm/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include "distprm/sha256.hpp"

namespace distprm {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::invalid_argument("config: " + path + ": " + what);
}

// Reads one JSON object, tracking consumed keys so leftovers can be rejected.
class Section {
public:
    Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
    }

    void read(const char* key, int& out) {
        if (const json* v = take(key)) {
            if (!v->is_number_integer()) fail(where(key), "expected an integer");
            const auto x = v->get<long long>();
            if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
                fail(where(key), "out of range");
            }
            out = static_cast<int>(x);
        }
    }
    void read(const char* key, std::uint64_t& out) {
        if (const json* v = take(key)) {
            if (!v->is_number_unsigned()) fail(where(key), "expected a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }
    void read(const char* key, double& out) {
        if (const json* v = take(key)) {
            if (!v->is_number()) fail(where(key), "expected a number");
            out = v->get<double>();
        }
    }
    void read(const char* key, std::string& out) {
        if (const json* v = take(key)) {
            if (!v->is_string()) fail(where(key), "expected a string");
            out = v->get<std::string>();
        }
    }
    void read(const char* key, std::vector<double>& out) {
        if (const json* v = take(key)) {
            if (!v->is_array()) fail(where(key), "expected an array of numbers");
            std::vector<double> xs;
            for (const auto& e : *v) {
                if (!e.is_number()) fail(where(key), "expected an array of numbers");
                xs.push_back(e.get<double>());
            }
            out = std::move(xs);
        }
    }
    template <class F>
    void section(const char* key, F&& body) {
        if (const json* v = take(key)) {
            Section sub(*v, where(key));
            body(sub);
            sub.finish();
        }
    }
    void finish() const {
        for (const auto& [key, value] : doc_.items()) {
            if (!used_.count(key)) fail(where(key.c_str()), "unknown key");
        }
    }

private:
    const json* take(const char* key) {
        used_.insert(key);
        auto it = doc_.find(key);
        return it == doc_.end() ? nullptr : &*it;
    }
    std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& doc_;
    std::string path_;
    std::set<std::string> used_;
};

ordered_json body_json(const ExperimentConfig& c) {
    ordered_json j;
    j["version"] = c.version;
    j["seed"] = c.seed;
    const auto& e = c.env;
    j["env"] = {{"num_problems", e.num_problems},
                {"rollouts_per_problem", e.rollouts_per_problem},
                {"min_steps", e.min_steps},
                {"max_steps", e.max_steps},
                {"min_error_rate", e.min_error_rate},
                {"max_error_rate", e.max_error_rate},
                {"eta_regimes", e.eta_regimes},
                {"recovery_rate", e.recovery_rate},
                {"min_tokens", e.min_tokens},
                {"max_tokens", e.max_tokens},
                {"feature_noise", e.feature_noise},
                {"ambiguous_step_rate", e.ambiguous_step_rate},
                {"ambiguous_eta", e.ambiguous_eta},
                {"label_trials", e.label_trials}};
    const auto& t = c.train;
    j["train"] = {{"loss_kind", to_string(c.loss_kind)},
                  {"learning_rate", t.learning_rate},
                  {"conc_lr_multiplier", t.conc_lr_multiplier},
                  {"weight_decay", t.weight_decay},
                  {"beta1", t.beta1},
                  {"beta2", t.beta2},
                  {"adam_epsilon", t.adam_epsilon},
                  {"lambda_reg", t.lambda_reg},
                  {"initial_kappa", t.initial_kappa},
                  {"init_scale", t.init_scale},
                  {"kappa_min", t.kappa_min},
                  {"epochs", t.epochs},
                  {"batch_size", t.batch_size}};
    j["selector"] = {{"lambda_grid", c.selector.lambdas},
                     {"tau_quantiles", c.selector.tau_quantiles},
                     {"validation_fraction", c.selector.validation_fraction}};
    j["eval"] = {{"num_problems", c.eval.num_problems}, {"pool_size", c.eval.pool_size}};
    const auto& a = c.aca;
    j["aca"] = {{"initial_batch", a.initial_batch}, {"batch_size", a.batch_size}, {"max_budget", a.max_budget},
                {"lambda", a.lambda},               {"c_stop", a.c_stop},         {"c_cut", a.c_cut},
                {"p_bad", a.p_bad},                 {"max_traces", a.max_traces}};
    j["stepdetect"] = {{"lambda", c.stepdetect.lambda},
                       {"threshold_step", c.stepdetect.threshold_step},
                       {"rollouts_per_problem", c.stepdetect.rollouts_per_problem}};
    return j;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (version != kConfigVersion) fail("version", "unsupported version " + std::to_string(version));
    env.validate();
    if (train.epochs < 1) fail("train.epochs", "must be positive");
    if (train.batch_size < 1) fail("train.batch_size", "must be positive");
    if (!(train.learning_rate > 0.0)) fail("train.learning_rate", "must be positive");
    if (!(train.initial_kappa > train.kappa_min)) fail("train.initial_kappa", "must exceed kappa_min");
    if (selector.lambdas.empty()) fail("selector.lambda_grid", "must be non-empty");
    if (selector.tau_quantiles.empty()) fail("selector.tau_quantiles", "must be non-empty");
    for (double l : selector.lambdas) {
        if (!(l >= 0.0)) fail("selector.lambda_grid", "entries must be non-negative");
    }
    for (double q : selector.tau_quantiles) {
        if (!(q > 0.0 && q < 1.0)) fail("selector.tau_quantiles", "entries must lie in (0, 1)");
    }
    if (!(selector.validation_fraction > 0.0 && selector.validation_fraction < 1.0)) {
        fail("selector.validation_fraction", "must lie in (0, 1)");
    }
    if (eval.num_problems < 2) fail("eval.num_problems", "must be at least 2");
    if (eval.pool_size < 1) fail("eval.pool_size", "must be positive");
    if (aca.max_traces < 0) fail("aca.max_traces", "must be non-negative");
    aca_config().validate();
    if (!(stepdetect.lambda >= 0.0)) fail("stepdetect.lambda", "must be non-negative");
    if (!(stepdetect.threshold_step > 0.0 && stepdetect.threshold_step <= 1.0)) {
        fail("stepdetect.threshold_step", "must lie in (0, 1]");
    }
    if (stepdetect.rollouts_per_problem < 1 || stepdetect.rollouts_per_problem > eval.pool_size) {
        fail("stepdetect.rollouts_per_problem", "must lie in [1, eval.pool_size]");
    }
    if (output_dir.empty()) fail("output.dir", "must be non-empty");
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
}

ACAConfig ExperimentConfig::aca_config() const {
    ACAConfig c;
    c.initial_batch = aca.initial_batch;
    c.batch_size = aca.batch_size;
    c.max_budget = aca.max_budget;
    c.lambda = aca.lambda;
    c.c_stop = aca.c_stop;
    c.c_cut = aca.c_cut;
    c.p_bad = aca.p_bad;
    return c;
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
    ExperimentConfig c;
    Section root(doc, "");
    root.read("version", c.version);
    if (c.version != kConfigVersion) fail("version", "unsupported version " + std::to_string(c.version));
    root.read("seed", c.seed);
    root.section("env", [&](Section& s) {
        auto& e = c.env;
        s.read("num_problems", e.num_problems);
        s.read("rollouts_per_problem", e.rollouts_per_problem);
        s.read("min_steps", e.min_steps);
        s.read("max_steps", e.max_steps);
        s.read("min_error_rate", e.min_error_rate);
        s.read("max_error_rate", e.max_error_rate);
        s.read("eta_regimes", e.eta_regimes);
        s.read("recovery_rate", e.recovery_rate);
        s.read("min_tokens", e.min_tokens);
        s.read("max_tokens", e.max_tokens);
        s.read("feature_noise", e.feature_noise);
        s.read("ambiguous_step_rate", e.ambiguous_step_rate);
        s.read("ambiguous_eta", e.ambiguous_eta);
        s.read("label_trials", e.label_trials);
    });
    root.section("train", [&](Section& s) {
        std::string kind = to_string(c.loss_kind);
        s.read("loss_kind", kind);
        c.loss_kind = loss_kind_from_string(kind);
        auto& t = c.train;
        s.read("learning_rate", t.learning_rate);
        s.read("conc_lr_multiplier", t.conc_lr_multiplier);
        s.read("weight_decay", t.weight_decay);
        s.read("beta1", t.beta1);
        s.read("beta2", t.beta2);
        s.read("adam_epsilon", t.adam_epsilon);
        s.read("lambda_reg", t.lambda_reg);
        s.read("initial_kappa", t.initial_kappa);
        s.read("init_scale", t.init_scale);
        s.read("kappa_min", t.kappa_min);
        s.read("epochs", t.epochs);
        s.read("batch_size", t.batch_size);
    });
    root.section("selector", [&](Section& s) {
        s.read("lambda_grid", c.selector.lambdas);
        s.read("tau_quantiles", c.selector.tau_quantiles);
        s.read("validation_fraction", c.selector.validation_fraction);
    });
    root.section("eval", [&](Section& s) {
        s.read("num_problems", c.eval.num_problems);
        s.read("pool_size", c.eval.pool_size);
    });
    root.section("aca", [&](Section& s) {
        auto& a = c.aca;
        s.read("initial_batch", a.initial_batch);
        s.read("batch_size", a.batch_size);
        s.read("max_budget", a.max_budget);
        s.read("lambda", a.lambda);
        s.read("c_stop", a.c_stop);
        s.read("c_cut", a.c_cut);
        s.read("p_bad", a.p_bad);
        s.read("max_traces", a.max_traces);
    });
    root.section("stepdetect", [&](Section& s) {
        s.read("lambda", c.stepdetect.lambda);
        s.read("threshold_step", c.stepdetect.threshold_step);
        s.read("rollouts_per_problem", c.stepdetect.rollouts_per_problem);
    });
    root.section("output", [&](Section& s) { s.read("dir", c.output_dir); });
    root.finish();
    c.validate();
    return c;
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& config) {
    auto j = body_json(config);
    j["output"] = {{"dir", config.output_dir}};
    return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config: " + path.string() + ": " + e.what());
    }
    return config_from_json(doc);
}

std::string config_hash(const ExperimentConfig& config) {
    return sha256_hex(body_json(config).dump());
}

}  // namespace distprm

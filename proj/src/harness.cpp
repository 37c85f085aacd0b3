#include "distprm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "distprm/random.hpp"
#include "distprm/scorer_io.hpp"
#include "distprm/sha256.hpp"
#include "distprm/stats.hpp"

namespace distprm {

namespace {

using nlohmann::ordered_json;

constexpr std::uint64_t kEvalStream = 0x45;

std::string num(double x) {
    if (std::isnan(x)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

std::string fixed(double x, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <class T>
void hash_pod(Sha256& h, const T& value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    h.update(std::string_view(buf, sizeof(T)));
}

void hash_pool(Sha256& h, const SyntheticProblem& problem, std::span<const Rollout> pool) {
    h.update(problem.id);
    h.update(std::string_view("\0", 1));
    for (const auto& r : pool) {
        hash_pod(h, static_cast<std::int64_t>(r.steps.size()));
        hash_pod(h, static_cast<std::int32_t>(r.final_correct));
        hash_pod(h, static_cast<std::int32_t>(r.answer));
        for (const auto& s : r.steps) {
            hash_pod(h, static_cast<std::int32_t>(s.fatal));
            hash_pod(h, static_cast<std::int32_t>(s.token_count));
            for (double f : s.features) hash_pod(h, f);
        }
    }
}

ordered_json row_json(const ReportRow& r) {
    ordered_json j;
    j["method"] = r.method;
    j["accuracy"] = r.accuracy;
    j["total_tokens"] = r.total_tokens;
    j["mean_candidates"] = r.mean_candidates;
    j["lambda"] = r.lambda ? ordered_json(*r.lambda) : ordered_json(nullptr);
    j["tau_q"] = r.tau_q ? ordered_json(*r.tau_q) : ordered_json(nullptr);
    return j;
}

std::string report_string(std::span<const ReportRow> rows) {
    std::ostringstream out;
    write_report_csv(rows, out);
    return out.str();
}

std::optional<double> parse_optional(const std::string& field, const std::string& where) {
    if (field.empty()) return std::nullopt;
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(field, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument(where + ": bad number '" + field + "'");
    }
    if (used != field.size()) throw std::invalid_argument(where + ": bad number '" + field + "'");
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

struct Pools {
    std::vector<std::vector<ScoredCandidate>> scored;
    std::vector<std::vector<bool>> correct;
};

Pools validation_pools(std::span<const SyntheticProblem> problems, const ScorerParams& scorer, int size) {
    Pools p;
    for (const auto& problem : problems) {
        const auto pool = make_pool(problem, size);
        p.scored.push_back(score_pool(pool, scorer));
        std::vector<bool> ok;
        for (const auto& r : pool) ok.push_back(r.final_correct);
        p.correct.push_back(std::move(ok));
    }
    return p;
}

double pool_accuracy(std::span<const std::vector<ScoredCandidate>> pools, std::span<const std::vector<bool>> correct,
                     const SelectionRule& rule) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pools.size(); ++i) hits += correct[i][select_best(pools[i], rule)] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(pools.size());
}

std::string regime_label(double eta) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "eta=%.2f", eta);
    return buf;
}

ordered_json tuned_json(const TunedRule& t) {
    ordered_json j;
    j["kind"] = to_string(t.rule.kind);
    j["lambda"] = t.rule.lambda;
    j["tau"] = t.rule.tau;
    j["tau_q"] = t.tau_q ? ordered_json(*t.tau_q) : ordered_json(nullptr);
    j["validation_accuracy"] = t.validation_accuracy;
    return j;
}

ordered_json manifest_config(const ExperimentConfig& config) {
    auto j = config_to_json(config);
    j.erase("output");
    return j;
}

}  // namespace

// ---- report rows -----------------------------------------------------------

void ReportRow::validate() const {
    if (method.empty() || method.find(',') != std::string::npos) {
        throw std::invalid_argument("report row: bad method label '" + method + "'");
    }
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw std::invalid_argument("report row " + method + ": accuracy outside [0, 1]");
    if (total_tokens < 0) throw std::invalid_argument("report row " + method + ": negative tokens");
    if (!(mean_candidates >= 0.0)) throw std::invalid_argument("report row " + method + ": bad mean_candidates");
}

void write_report_csv(std::span<const ReportRow> rows, std::ostream& out) {
    out << kReportHeader << '\n';
    for (const auto& r : rows) {
        r.validate();
        out << r.method << ',' << fixed(r.accuracy, 6) << ',' << r.total_tokens << ',' << fixed(r.mean_candidates, 4)
            << ',' << (r.lambda ? num(*r.lambda) : "") << ',' << (r.tau_q ? num(*r.tau_q) : "") << '\n';
    }
}

std::vector<ReportRow> read_report_csv(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line) || line != kReportHeader) {
        throw std::invalid_argument(source + ": line 1: expected header '" + std::string(kReportHeader) + "'");
    }
    std::vector<ReportRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = source + ": line " + std::to_string(lineno);
        const auto f = split_csv(line);
        if (f.size() != 6) throw std::invalid_argument(where + ": expected 6 fields");
        ReportRow r;
        r.method = f[0];
        const auto acc = parse_optional(f[1], where);
        const auto mc = parse_optional(f[3], where);
        if (!acc || !mc) throw std::invalid_argument(where + ": missing accuracy or mean_candidates");
        r.accuracy = *acc;
        r.mean_candidates = *mc;
        std::size_t used = 0;
        try {
            r.total_tokens = std::stoll(f[2], &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (f[2].empty() || used != f[2].size()) throw std::invalid_argument(where + ": bad total_tokens '" + f[2] + "'");
        r.lambda = parse_optional(f[4], where);
        r.tau_q = parse_optional(f[5], where);
        try {
            r.validate();
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(where + ": " + e.what());
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

double token_reduction_percent(std::int64_t tokens, std::int64_t baseline) {
    if (baseline <= 0) throw std::invalid_argument("token reduction: baseline tokens must be positive");
    if (tokens < 0) throw std::invalid_argument("token reduction: negative tokens");
    return 100.0 * (1.0 - static_cast<double>(tokens) / static_cast<double>(baseline));
}

std::string format_reduction(double percent) {
    const bool up = percent < 0.0 && fixed(-percent, 2) != "0.00";
    return std::string("(") + (up ? "↑" : "↓") + fixed(std::abs(percent), 2) + "%)";
}

// ---- shared evaluation plumbing --------------------------------------------

bool is_validation(const std::string& problem_id, double fraction) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : problem_id) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    const double u = static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-53;
    return u < fraction;
}

EvalSplit eval_problems(const ExperimentConfig& config) {
    const auto all = generate_problems(config.env, config.eval.num_problems, derive_seed(config.seed, {kEvalStream}), "e");
    EvalSplit split;
    for (const auto& p : all) {
        (is_validation(p.id, config.selector.validation_fraction) ? split.validation : split.test).push_back(p);
    }
    if (split.validation.empty() || split.test.empty()) {
        throw std::invalid_argument("eval: validation/test split left one side empty; raise eval.num_problems");
    }
    return split;
}

std::vector<Rollout> make_pool(const SyntheticProblem& problem, int size) {
    std::vector<Rollout> pool;
    pool.reserve(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) pool.push_back(sample_fresh_candidate(problem, problem.seed, i));
    return pool;
}

std::vector<ScoredCandidate> score_pool(std::span<const Rollout> pool, const ScorerParams& scorer,
                                        UncertaintySource source) {
    std::vector<ScoredCandidate> out;
    out.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        auto c = score_candidate(pool[i], scorer, source);
        c.candidate_id = (i < 10 ? "c0" : "c") + std::to_string(i);
        out.push_back(std::move(c));
    }
    return out;
}

TunedRule tune_rule(SelectionKind kind, std::span<const std::vector<ScoredCandidate>> pools,
                    std::span<const std::vector<bool>> correct, const SelectorGrid& grid) {
    if (pools.empty() || pools.size() != correct.size()) throw std::invalid_argument("tune_rule: bad validation pools");
    TunedRule best;
    best.validation_accuracy = -1.0;
    auto consider = [&](const SelectionRule& rule, std::optional<double> q) {
        const double acc = pool_accuracy(pools, correct, rule);
        if (acc > best.validation_accuracy) best = {rule, q, acc};
    };
    switch (kind) {
        case SelectionKind::Vanilla:
            consider({SelectionKind::Vanilla, 0.0, 0.0}, std::nullopt);
            break;
        case SelectionKind::Linear:
            for (double l : grid.lambdas) consider({SelectionKind::Linear, l, 0.0}, std::nullopt);
            break;
        case SelectionKind::RiskBudget: {
            std::vector<double> sigmas;
            for (const auto& pool : pools) {
                for (const auto& c : pool) {
                    for (const auto& s : c.steps) sigmas.push_back(s.sigma);
                }
            }
            for (double l : grid.lambdas) {
                for (double q : grid.tau_quantiles) consider({SelectionKind::RiskBudget, l, percentile(sigmas, q)}, q);
            }
            break;
        }
    }
    return best;
}

// ---- step detection --------------------------------------------------------

double f1_at(std::span<const double> scores, const std::vector<bool>& erroneous, double threshold) {
    if (scores.size() != erroneous.size()) throw std::invalid_argument("f1_at: size mismatch");
    std::size_t tp = 0, predicted = 0, positives = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool flag = scores[i] < threshold;
        predicted += flag;
        positives += erroneous[i];
        tp += flag && erroneous[i];
    }
    const std::size_t denom = predicted + positives;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

ThresholdChoice best_threshold(std::span<const double> scores, const std::vector<bool>& erroneous, double step) {
    if (scores.size() != erroneous.size()) throw std::invalid_argument("best_threshold: size mismatch");
    if (scores.empty()) throw std::invalid_argument("best_threshold: no steps");
    if (!(step > 0.0 && step <= 1.0)) throw std::invalid_argument("best_threshold: step must lie in (0, 1]");
    std::vector<std::pair<double, bool>> sorted;
    sorted.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) sorted.emplace_back(scores[i], erroneous[i]);
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> pos_prefix(sorted.size() + 1, 0);
    for (std::size_t i = 0; i < sorted.size(); ++i) pos_prefix[i + 1] = pos_prefix[i] + sorted[i].second;
    const std::size_t positives = pos_prefix.back();

    ThresholdChoice best{0.0, -1.0};
    const auto count = static_cast<long>(std::floor(1.0 / step + 1e-9));
    for (long k = 0; k <= count; ++k) {
        const double tau = static_cast<double>(k) * step;
        const auto it = std::lower_bound(sorted.begin(), sorted.end(), tau,
                                         [](const std::pair<double, bool>& a, double t) { return a.first < t; });
        const auto predicted = static_cast<std::size_t>(it - sorted.begin());
        const std::size_t tp = pos_prefix[predicted];
        const std::size_t denom = predicted + positives;
        const double f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
        if (f1 > best.f1) best = {tau, f1};
    }
    return best;
}

// ---- commands --------------------------------------------------------------

GenDataResult cmd_gen_data(const ExperimentConfig& config, const fs::path& out_dir) {
    config.validate();
    const auto ds = make_dataset(config.env, config.seed);
    std::ostringstream jsonl;
    write_jsonl(ds.records, jsonl);
    const std::string body = jsonl.str();

    GenDataResult res;
    res.dataset = out_dir / "dataset.jsonl";
    res.manifest = out_dir / "manifest.json";
    res.records = ds.records.size();
    res.config_hash = config_hash(config);

    ordered_json m;
    m["format"] = "distprm-dataset-manifest";
    m["version"] = 1;
    m["config_hash"] = res.config_hash;
    m["seed"] = config.seed;
    m["records"] = res.records;
    m["problems"] = ds.problems.size();
    m["dataset"] = res.dataset.filename().string();
    m["dataset_sha256"] = sha256_hex(body);
    m["config"] = manifest_config(config);
    write_file(res.dataset, body);
    write_file(res.manifest, m.dump(2) + "\n");
    return res;
}

fs::path model_path(const fs::path& out_dir, LossKind kind) {
    return out_dir / (std::string("model_") + to_string(kind) + ".json");
}

TrainResult cmd_train(const ExperimentConfig& config, LossKind kind, const fs::path& dataset, const fs::path& out_dir) {
    config.validate();
    const std::string body = read_file(dataset);
    std::istringstream in(body);
    std::vector<LabeledPrefix> records;
    try {
        records = read_jsonl(in);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(dataset.string() + ": " + e.what());
    }
    if (records.empty()) throw std::invalid_argument(dataset.string() + ": no records");
    auto result = train(records, config.train_config(), kind);

    std::ostringstream log;
    log << "epoch,loss,kappa_mean,kappa_p90,mae_true_q\n";
    for (const auto& e : result.epochs) {
        log << e.epoch << ',' << num(e.loss) << ',' << num(e.kappa_mean) << ',' << num(e.kappa_p90) << ','
            << num(e.mae_true_q) << '\n';
    }
    auto diag = [](const EpochDiagnostics& e) {
        return ordered_json{{"epoch", e.epoch},
                            {"loss", e.loss},
                            {"kappa_mean", e.kappa_mean},
                            {"kappa_p90", e.kappa_p90},
                            {"mae_true_q", std::isnan(e.mae_true_q) ? ordered_json(nullptr) : ordered_json(e.mae_true_q)}};
    };
    ordered_json summary;
    summary["loss_kind"] = to_string(kind);
    summary["config_hash"] = config_hash(config);
    summary["dataset_sha256"] = sha256_hex(body);
    summary["records"] = records.size();
    summary["initial"] = diag(result.initial);
    summary["final"] = diag(result.epochs.back());

    const std::string name = to_string(kind);
    write_file(model_path(out_dir, kind), scorer_to_json(result.params).dump(2) + "\n");
    write_file(out_dir / ("train_log_" + name + ".csv"), log.str());
    write_file(out_dir / ("train_" + name + ".json"), summary.dump(2) + "\n");
    return result;
}

BonReport cmd_eval_bon(const ExperimentConfig& config, const ScorerParams& bb, const ScorerParams& ce,
                       const fs::path& out_dir) {
    config.validate();
    const auto split = eval_problems(config);
    const int n = config.eval.pool_size;

    struct Entry {
        std::string method;
        const ScorerParams* model;
        TunedRule tuned;
        std::size_t hits = 0;
    };
    std::vector<Entry> entries;
    for (const auto& [tag, model] : {std::pair{"ce", &ce}, std::pair{"bb", &bb}}) {
        const auto val = validation_pools(split.validation, *model, n);
        const std::string t = tag;
        entries.push_back({t + "_vanilla", model, tune_rule(SelectionKind::Vanilla, val.scored, val.correct, config.selector)});
        entries.push_back({t + "_linear_l0", model, {{SelectionKind::Linear, 0.0, 0.0}, std::nullopt, 0.0}});
        entries.push_back({t + "_linear", model, tune_rule(SelectionKind::Linear, val.scored, val.correct, config.selector)});
        entries.push_back({t + "_risk_budget_l0", model, {{SelectionKind::RiskBudget, 0.0, 0.0}, std::nullopt, 0.0}});
        entries.push_back(
            {t + "_risk_budget", model, tune_rule(SelectionKind::RiskBudget, val.scored, val.correct, config.selector)});
    }

    Sha256 hasher;
    std::int64_t tokens = 0;
    for (const auto& p : split.test) {
        const auto pool = make_pool(p, n);
        hash_pool(hasher, p, pool);
        for (const auto& r : pool) tokens += r.token_cost();
        const auto scored_ce = score_pool(pool, ce);
        const auto scored_bb = score_pool(pool, bb);
        for (auto& e : entries) {
            const auto& scored = e.model == &ce ? scored_ce : scored_bb;
            e.hits += pool[select_best(scored, e.tuned.rule)].final_correct ? 1 : 0;
        }
    }

    BonReport report;
    report.pool_sha256 = hasher.hex_digest();
    report.test_problems = static_cast<int>(split.test.size());
    ordered_json j;
    j["config_hash"] = config_hash(config);
    j["pool_sha256"] = report.pool_sha256;
    j["validation_problems"] = split.validation.size();
    j["test_problems"] = split.test.size();
    j["pool_size"] = n;
    j["rows"] = ordered_json::array();
    for (const auto& e : entries) {
        ReportRow r;
        r.method = e.method;
        r.accuracy = static_cast<double>(e.hits) / static_cast<double>(split.test.size());
        r.total_tokens = tokens;
        r.mean_candidates = n;
        if (e.tuned.rule.kind != SelectionKind::Vanilla) r.lambda = e.tuned.rule.lambda;
        r.tau_q = e.tuned.tau_q;
        auto rj = row_json(r);
        rj["rule"] = tuned_json(e.tuned);
        rj["pool_sha256"] = report.pool_sha256;
        j["rows"].push_back(std::move(rj));
        report.rows.push_back(std::move(r));
    }
    write_file(out_dir / "bon_report.csv", report_string(report.rows));
    write_file(out_dir / "bon_report.json", j.dump(2) + "\n");
    return report;
}

AcaReport cmd_eval_aca(const ExperimentConfig& config, const ScorerParams& bb, const ScorerParams& ce,
                       const fs::path& out_dir) {
    config.validate();
    const auto split = eval_problems(config);
    const auto val = validation_pools(split.validation, bb, config.eval.pool_size);
    const TunedRule rb = tune_rule(SelectionKind::RiskBudget, val.scored, val.correct, config.selector);

    ACAConfig main = config.aca_config();
    main.final_selection = rb.rule;
    ACAConfig no_stop = main;
    no_stop.early_stop = false;
    ACAConfig ablation = config.aca_config();
    ablation.final_selection = {SelectionKind::Linear, config.aca.lambda, 0.0};
    ACAConfig proxy = ablation;
    proxy.uncertainty = UncertaintySource::Proxy;
    ACAConfig reward_only = ablation;
    reward_only.uncertainty = UncertaintySource::None;

    struct Variant {
        std::string method;
        std::optional<ACAConfig> aca;  // empty for vanilla BoN
        const ScorerParams* model;
        std::optional<double> lambda;
        std::optional<double> tau_q;
        std::size_t hits = 0;
        std::int64_t tokens = 0;
        std::int64_t candidates = 0;
        std::size_t first_stage = 0;
    };
    std::vector<Variant> variants{
        {"vanilla_bon", std::nullopt, &bb, rb.rule.lambda, rb.tau_q},
        {"aca_no_early_stop", no_stop, &bb, rb.rule.lambda, rb.tau_q},
        {"aca", main, &bb, rb.rule.lambda, rb.tau_q},
        {"aca_learned", ablation, &bb, config.aca.lambda, std::nullopt},
        {"aca_proxy", proxy, &ce, config.aca.lambda, std::nullopt},
        {"aca_reward_only", reward_only, &ce, config.aca.lambda, std::nullopt},
    };

    std::string traces;
    for (std::size_t i = 0; i < split.test.size(); ++i) {
        const auto& p = split.test[i];
        for (auto& v : variants) {
            const ACARun run = v.aca ? run_aca(p, *v.model, *v.aca, p.seed)
                                     : run_vanilla_bon(p, *v.model, config.eval.pool_size, rb.rule,
                                                       UncertaintySource::Learned, p.seed);
            v.hits += run.trace.selected_correct ? 1 : 0;
            v.tokens += run.trace.total_tokens;
            v.candidates += run.trace.candidates_generated;
            v.first_stage += run.trace.stages.size() == 1 ? 1 : 0;
            if (i < static_cast<std::size_t>(config.aca.max_traces)) {
                ordered_json line;
                line["method"] = v.method;
                line["trace"] = trace_to_json(run.trace);
                traces += line.dump() + "\n";
            }
        }
    }

    const auto n = static_cast<double>(split.test.size());
    AcaReport report;
    ordered_json j;
    j["config_hash"] = config_hash(config);
    j["validation_problems"] = split.validation.size();
    j["test_problems"] = split.test.size();
    j["risk_budget_rule"] = tuned_json(rb);
    j["rows"] = ordered_json::array();
    for (const auto& v : variants) {
        ReportRow r{v.method, static_cast<double>(v.hits) / n, v.tokens, static_cast<double>(v.candidates) / n,
                    v.lambda, v.tau_q};
        auto rj = row_json(r);
        rj["model"] = v.model == &bb ? "beta_binomial_total" : "cross_entropy";
        rj["uncertainty"] = v.aca ? to_string(v.aca->uncertainty) : "learned";
        rj["first_stage_stop_rate"] = static_cast<double>(v.first_stage) / n;
        j["rows"].push_back(std::move(rj));
        report.rows.push_back(std::move(r));
        if (v.method == "aca") report.first_stage_stop_rate = static_cast<double>(v.first_stage) / n;
    }
    write_file(out_dir / "aca_report.csv", report_string(report.rows));
    write_file(out_dir / "aca_report.json", j.dump(2) + "\n");
    write_file(out_dir / "aca_traces.jsonl", traces);
    return report;
}

std::vector<StepDetectRow> cmd_eval_stepdetect(const ExperimentConfig& config, const ScorerParams& bb,
                                               const ScorerParams& ce, const fs::path& out_dir) {
    config.validate();
    const auto split = eval_problems(config);
    const std::vector<std::string> methods{"bb_mu", "bb_risk_adjusted", "ce_mu", "oracle_true_q"};
    struct Steps {
        std::vector<std::vector<double>> scores;
        std::vector<bool> erroneous;
        std::vector<std::string> regime;
    };
    auto collect = [&](std::span<const SyntheticProblem> problems) {
        Steps s;
        s.scores.resize(methods.size());
        for (const auto& p : problems) {
            const auto pool = make_pool(p, config.stepdetect.rollouts_per_problem);
            const std::string regime = regime_label(p.eta);
            for (const auto& r : pool) {
                for (std::size_t t = 0; t < r.steps.size(); ++t) {
                    const auto& step = r.steps[t];
                    const BetaBelief b = forward(bb, step.features);
                    const BetaBelief c = forward(ce, step.features);
                    s.scores[0].push_back(b.mu);
                    s.scores[1].push_back(b.mu - config.stepdetect.lambda * beta_std(b));
                    s.scores[2].push_back(c.mu);
                    s.scores[3].push_back(true_q(p, step.fatal, static_cast<int>(t) + 1));
                    s.erroneous.push_back(step.fatal);
                    s.regime.push_back(regime);
                }
            }
        }
        return s;
    };
    const Steps val = collect(split.validation);
    const Steps test = collect(split.test);

    std::map<std::string, std::vector<std::size_t>> by_regime;
    for (std::size_t i = 0; i < test.regime.size(); ++i) by_regime[test.regime[i]].push_back(i);

    std::vector<StepDetectRow> rows;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        const auto choice = best_threshold(val.scores[m], val.erroneous, config.stepdetect.threshold_step);
        rows.push_back({methods[m], "all", choice.threshold, f1_at(test.scores[m], test.erroneous, choice.threshold),
                        test.erroneous.size()});
        for (const auto& [regime, idx] : by_regime) {
            std::vector<double> sc;
            std::vector<bool> er;
            for (auto i : idx) {
                sc.push_back(test.scores[m][i]);
                er.push_back(test.erroneous[i]);
            }
            rows.push_back({methods[m], regime, choice.threshold, f1_at(sc, er, choice.threshold), idx.size()});
        }
    }

    std::ostringstream csv;
    csv << "method,regime,threshold,f1,steps\n";
    ordered_json j;
    j["config_hash"] = config_hash(config);
    j["lambda"] = config.stepdetect.lambda;
    j["threshold_step"] = config.stepdetect.threshold_step;
    j["rows"] = ordered_json::array();
    for (const auto& r : rows) {
        csv << r.method << ',' << r.regime << ',' << fixed(r.threshold, 3) << ',' << fixed(r.f1, 6) << ',' << r.steps
            << '\n';
        j["rows"].push_back({{"method", r.method},
                             {"regime", r.regime},
                             {"threshold", r.threshold},
                             {"f1", r.f1},
                             {"steps", r.steps}});
    }
    write_file(out_dir / "stepdetect.csv", csv.str());
    write_file(out_dir / "stepdetect.json", j.dump(2) + "\n");
    return rows;
}

std::vector<ReportRow> cmd_report(std::vector<fs::path> inputs, const fs::path& out_dir) {
    if (inputs.empty()) throw std::invalid_argument("report: no input files");
    std::sort(inputs.begin(), inputs.end());

    struct Merged {
        std::string source;
        ReportRow row;
        double reduction = 0.0;
    };
    std::vector<Merged> merged;
    for (const auto& path : inputs) {
        std::istringstream in(read_file(path));
        const auto rows = read_report_csv(in, path.string());
        if (rows.empty()) throw std::invalid_argument("report: " + path.string() + " has no rows");
        const auto base = std::find_if(rows.begin(), rows.end(),
                                       [](const ReportRow& r) { return r.method.find("vanilla") != std::string::npos; });
        if (base == rows.end()) throw std::invalid_argument("report: " + path.string() + " has no vanilla row");
        if (base->total_tokens <= 0) throw std::invalid_argument("report: " + path.string() + " vanilla row has no tokens");
        for (const auto& r : rows) {
            merged.push_back({path.filename().string(), r, token_reduction_percent(r.total_tokens, base->total_tokens)});
        }
    }

    std::ostringstream csv;
    csv << "source," << kReportHeader << ",token_reduction_pct,reduction_label\n";
    ordered_json j;
    j["rows"] = ordered_json::array();
    std::vector<ReportRow> out;
    for (const auto& m : merged) {
        const auto& r = m.row;
        csv << m.source << ',' << r.method << ',' << fixed(r.accuracy, 6) << ',' << r.total_tokens << ','
            << fixed(r.mean_candidates, 4) << ',' << (r.lambda ? num(*r.lambda) : "") << ','
            << (r.tau_q ? num(*r.tau_q) : "") << ',' << fixed(m.reduction, 2) << ',' << format_reduction(m.reduction)
            << '\n';
        auto rj = row_json(r);
        rj["source"] = m.source;
        rj["token_reduction_pct"] = m.reduction;
        rj["reduction_label"] = format_reduction(m.reduction);
        j["rows"].push_back(std::move(rj));
        out.push_back(r);
    }
    write_file(out_dir / "report.csv", csv.str());
    write_file(out_dir / "report.json", j.dump(2) + "\n");
    return out;
}

}  // namespace distprm

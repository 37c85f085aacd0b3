#include <doctest.h>

#include <fstream>
#include <sstream>

#include "distprm/harness.hpp"
#include "distprm/scorer_io.hpp"
#include "distprm/sha256.hpp"

using namespace distprm;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.env.num_problems = 40;
    c.train.epochs = 3;
    c.eval.num_problems = 200;
    c.aca.max_traces = 5;
    return c;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("distprm_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    Sha256 h;
    h.update("a");
    h.update("bc");
    CHECK(h.hex_digest() == sha256_hex("abc"));
    CHECK_THROWS_AS(h.update("x"), std::logic_error);
}

TEST_CASE("config defaults carry the documented values") {
    const ExperimentConfig c;
    CHECK(c.selector.lambdas == std::vector<double>{0.2, 0.5, 0.7, 1.0, 1.5});
    CHECK(c.selector.tau_quantiles == std::vector<double>{0.7, 0.8, 0.9});
    CHECK(c.env.label_trials == 16);
    CHECK(c.eval.pool_size == 16);
    const auto a = c.aca_config();
    CHECK(a.initial_batch == 4);
    CHECK(a.batch_size == 4);
    CHECK(a.max_budget == 16);
    CHECK(a.lambda == 0.5);
    CHECK(a.c_stop == 0.3);
    CHECK(a.c_cut == 1.0);
    CHECK(a.p_bad == 0.3);
    CHECK(c.train.initial_kappa == 4.0);
    CHECK(c.stepdetect.lambda == 0.5);
    CHECK(c.stepdetect.threshold_step == 0.005);
    CHECK(c.train_config().seed == c.seed);
}

TEST_CASE("config JSON is strict and round-trips") {
    const ExperimentConfig c = small_config();
    const auto j = config_to_json(c);
    const auto back = config_from_json(nlohmann::json::parse(j.dump()));
    CHECK(config_to_json(back).dump() == j.dump());
    CHECK(config_hash(back) == config_hash(c));

    auto with = [&](const std::string& patch) {
        auto doc = nlohmann::json::parse(j.dump());
        doc.merge_patch(nlohmann::json::parse(patch));
        return doc;
    };
    auto message = [](const nlohmann::json& doc) {
        try {
            config_from_json(doc);
        } catch (const std::invalid_argument& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message(with(R"({"bogus": 1})")).find("bogus") != std::string::npos);
    CHECK(message(with(R"({"aca": {"c_stoop": 0.3}})")).find("aca.c_stoop") != std::string::npos);
    CHECK(message(with(R"({"version": 2})")).find("version") != std::string::npos);
    CHECK(message(with(R"({"env": {"num_problems": 1.5}})")).find("env.num_problems") != std::string::npos);
    CHECK(message(with(R"({"seed": -1})")).find("seed") != std::string::npos);
    CHECK(message(with(R"({"selector": {"lambda_grid": []}})")).find("lambda_grid") != std::string::npos);
    CHECK(message(with(R"({"train": {"loss_kind": "mse"}})")).find("mse") != std::string::npos);
    CHECK(message(nlohmann::json::array()).find("object") != std::string::npos);

    const auto partial = config_from_json(nlohmann::json::parse(R"({"seed": 11, "eval": {"num_problems": 300}})"));
    CHECK(partial.seed == 11);
    CHECK(partial.eval.num_problems == 300);
    CHECK(partial.eval.pool_size == 16);

    auto other = c;
    other.seed = 8;
    CHECK(config_hash(other) != config_hash(c));
    other = c;
    other.output_dir = "elsewhere";
    CHECK(config_hash(other) == config_hash(c));

    const auto dir = scratch("config");
    std::ofstream(dir / "c.json") << j.dump(2);
    CHECK(config_hash(load_config(dir / "c.json")) == config_hash(c));
    std::ofstream(dir / "bad.json") << "{ not json";
    CHECK_THROWS_AS(load_config(dir / "bad.json"), std::invalid_argument);
    CHECK_THROWS_AS(load_config(dir / "missing.json"), std::invalid_argument);
}

TEST_CASE("report CSV round trip and validation") {
    const std::vector<ReportRow> rows{{"vanilla_bon", 0.5, 1383, 16.0, 0.5, 0.9}, {"aca", 0.25, 965, 9.5, std::nullopt, std::nullopt}};
    std::stringstream ss;
    write_report_csv(rows, ss);
    const auto text = ss.str();
    CHECK(text.rfind("method,accuracy,total_tokens,mean_candidates,lambda,tau_q\n", 0) == 0);
    CHECK(text.find("aca,0.250000,965,9.5000,,\n") != std::string::npos);
    const auto back = read_report_csv(ss, "mem");
    REQUIRE(back.size() == 2);
    CHECK(back[0].lambda == 0.5);
    CHECK(back[0].tau_q == 0.9);
    CHECK_FALSE(back[1].lambda.has_value());
    CHECK(back[1].total_tokens == 965);

    std::stringstream bad_header("method,acc\n");
    CHECK_THROWS_AS(read_report_csv(bad_header, "x"), std::invalid_argument);
    std::stringstream bad_acc(std::string(kReportHeader) + "\nm,1.5,10,1,,\n");
    try {
        read_report_csv(bad_acc, "f.csv");
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("f.csv: line 2") != std::string::npos);
    }
    std::stringstream bad_tokens(std::string(kReportHeader) + "\nm,0.5,12x,1,,\n");
    CHECK_THROWS_AS(read_report_csv(bad_tokens, "x"), std::invalid_argument);
    std::stringstream neg(std::string(kReportHeader) + "\nm,0.5,-3,1,,\n");
    CHECK_THROWS_AS(read_report_csv(neg, "x"), std::invalid_argument);
}

TEST_CASE("token reduction arithmetic") {
    CHECK(token_reduction_percent(1383, 1383) == 0.0);
    CHECK(token_reduction_percent(965, 1383) == doctest::Approx(100.0 * 418.0 / 1383.0).epsilon(1e-14));
    CHECK(format_reduction(token_reduction_percent(965, 1383)) == "(↓30.22%)");
    CHECK(format_reduction(token_reduction_percent(1237, 1383)) == "(↓10.56%)");
    CHECK(format_reduction(token_reduction_percent(11912, 17932)) == "(↓33.57%)");
    CHECK(format_reduction(0.0) == "(↓0.00%)");
    CHECK(format_reduction(-12.5) == "(↑12.50%)");
    CHECK_THROWS_AS(token_reduction_percent(5, 0), std::invalid_argument);
    CHECK_THROWS_AS(token_reduction_percent(-1, 10), std::invalid_argument);
}

TEST_CASE("validation split is deterministic and near its target fraction") {
    int val = 0;
    for (int i = 0; i < 20000; ++i) {
        const auto id = "e" + std::to_string(i);
        const bool v = is_validation(id, 0.2);
        CHECK(v == is_validation(id, 0.2));
        val += v;
    }
    // Binomial(20000, 0.2) has sd ~57.
    CHECK(val > 4000 - 300);
    CHECK(val < 4000 + 300);
    CHECK_FALSE(is_validation("e1", 0.0));
}

TEST_CASE("F1 sweep oracles") {
    const std::vector<double> scores{0.1, 0.2, 0.6, 0.9};
    const std::vector<bool> err{true, false, true, false};
    // tau 0.15 flags {0.1}: tp 1, predicted 1, positives 2.
    CHECK(f1_at(scores, err, 0.15) == doctest::Approx(2.0 / 3.0));
    CHECK(f1_at(scores, err, 0.0) == 0.0);
    CHECK(f1_at(scores, err, 1.0) == doctest::Approx(4.0 / 6.0));

    // Perfectly separable scores reach F1 1 at the lowest separating grid threshold.
    const std::vector<double> sep{0.1, 0.12, 0.8, 0.9};
    const std::vector<bool> lab{true, true, false, false};
    const auto best = best_threshold(sep, lab, 0.005);
    CHECK(best.f1 == 1.0);
    CHECK(best.threshold == doctest::Approx(0.125));

    // Constant scorer: only "flag nothing" or "flag everything" exist, so the best is the all-positive baseline.
    std::vector<double> flat(10, 0.4);
    std::vector<bool> mix{true, false, false, true, false, false, false, true, false, false};
    const auto c = best_threshold(flat, mix, 0.005);
    CHECK(c.f1 == doctest::Approx(2.0 * 0.3 / 1.3));
    CHECK(c.threshold > 0.4);

    // The sweep agrees with a brute-force evaluation of every grid point.
    std::vector<double> rnd;
    std::vector<bool> rl;
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        rnd.push_back(rng.uniform());
        rl.push_back(rng.bernoulli(rnd.back() < 0.4 ? 0.8 : 0.2));
    }
    double brute = -1.0, brute_tau = 0.0;
    for (int k = 0; k <= 200; ++k) {
        const double f = f1_at(rnd, rl, k * 0.005);
        if (f > brute) {
            brute = f;
            brute_tau = k * 0.005;
        }
    }
    const auto swept = best_threshold(rnd, rl, 0.005);
    CHECK(swept.f1 == doctest::Approx(brute).epsilon(1e-15));
    CHECK(swept.threshold == brute_tau);
    CHECK_THROWS_AS(best_threshold({}, {}, 0.005), std::invalid_argument);
}

TEST_CASE("gen-data manifest and dataset") {
    const auto cfg = small_config();
    const auto dir = scratch("gen");
    const auto r = cmd_gen_data(cfg, dir);
    const auto body = slurp(r.dataset);
    CHECK(count_lines(body) == r.records);
    const auto m = nlohmann::json::parse(slurp(r.manifest));
    CHECK(m["records"] == r.records);
    CHECK(m["seed"] == cfg.seed);
    CHECK(m["config_hash"] == config_hash(cfg));
    CHECK(m["dataset_sha256"] == sha256_hex(body));
    CHECK(m["config"]["aca"]["max_budget"] == 16);
    CHECK(m["config"]["selector"]["tau_quantiles"] == nlohmann::json::parse("[0.7,0.8,0.9]"));
    std::istringstream in(body);
    for (const auto& rec : read_jsonl(in)) CHECK(rec.observation.trials == 16);

    const auto again = cmd_gen_data(cfg, scratch("gen2"));
    CHECK(again.config_hash == r.config_hash);
    CHECK(slurp(again.dataset) == body);
}

TEST_CASE("train writes model, per-epoch log and summary") {
    auto cfg = small_config();
    const auto dir = scratch("train");
    const auto data = cmd_gen_data(cfg, dir).dataset;

    const auto ce = cmd_train(cfg, LossKind::CrossEntropy, data, dir);
    const auto log = slurp(dir / "train_log_cross_entropy.csv");
    CHECK(log.rfind("epoch,loss,kappa_mean,kappa_p90,mae_true_q\n", 0) == 0);
    CHECK(count_lines(log) == static_cast<std::size_t>(cfg.train.epochs) + 1);
    for (const auto& e : ce.epochs) {
        CHECK(e.kappa_mean == ce.initial.kappa_mean);
        CHECK(e.kappa_p90 == ce.initial.kappa_p90);
    }
    CHECK(ce.initial.kappa_mean == doctest::Approx(4.0).epsilon(0.01));
    const auto loaded = load_scorer(model_path(dir, LossKind::CrossEntropy));
    CHECK(scorer_to_json(loaded).dump() == scorer_to_json(ce.params).dump());
    const auto summary = nlohmann::json::parse(slurp(dir / "train_cross_entropy.json"));
    CHECK(summary["initial"]["epoch"] == 0);
    CHECK(summary["loss_kind"] == "cross_entropy");

    CHECK_THROWS_AS(cmd_train(cfg, LossKind::BetaBinomialTotal, dir / "nope.jsonl", dir), std::invalid_argument);
    std::ofstream(dir / "broken.jsonl") << "{\"problem_id\": 1}\n";
    CHECK_THROWS_AS(cmd_train(cfg, LossKind::BetaBinomialTotal, dir / "broken.jsonl", dir), std::invalid_argument);
}

TEST_CASE("eval-bon shares pools across selectors") {
    auto cfg = small_config();
    const auto dir = scratch("bon");
    const auto data = cmd_gen_data(cfg, dir).dataset;
    const auto bb = cmd_train(cfg, LossKind::BetaBinomialTotal, data, dir).params;
    const auto ce = cmd_train(cfg, LossKind::CrossEntropy, data, dir).params;
    const auto r = cmd_eval_bon(cfg, bb, ce, dir);
    REQUIRE(r.rows.size() == 10);
    for (const auto& row : r.rows) {
        CHECK(row.total_tokens == r.rows.front().total_tokens);
        CHECK(row.mean_candidates == 16.0);
    }
    // lambda = 0 rows reduce to the vanilla score.
    CHECK(r.rows[1].accuracy == r.rows[0].accuracy);
    CHECK(r.rows[3].accuracy == r.rows[0].accuracy);
    CHECK(r.rows[6].accuracy == r.rows[5].accuracy);

    // Independent recount of the pooled tokens and the pool hash's sensitivity to the seed.
    const auto split = eval_problems(cfg);
    CHECK(r.test_problems == static_cast<int>(split.test.size()));
    std::int64_t tokens = 0;
    for (const auto& p : split.test) {
        for (const auto& c : make_pool(p, 16)) tokens += c.token_cost();
    }
    CHECK(r.rows.front().total_tokens == tokens);
    CHECK(cmd_eval_bon(cfg, bb, ce, scratch("bon2")).pool_sha256 == r.pool_sha256);
    auto reseeded = cfg;
    reseeded.seed = 99;
    CHECK(cmd_eval_bon(reseeded, bb, ce, scratch("bon3")).pool_sha256 != r.pool_sha256);

    const auto j = nlohmann::json::parse(slurp(dir / "bon_report.json"));
    for (const auto& row : j["rows"]) CHECK(row["pool_sha256"] == r.pool_sha256);
}

TEST_CASE("eval-bon in a world where every candidate is correct") {
    auto cfg = small_config();
    cfg.env.min_error_rate = 0.0;
    cfg.env.max_error_rate = 0.0;
    const auto bb = initialize_params(kFeatureDim, cfg.train_config());
    const auto r = cmd_eval_bon(cfg, bb, bb, scratch("allgood"));
    for (const auto& row : r.rows) CHECK(row.accuracy == 1.0);
}

TEST_CASE("eval-aca accounting") {
    auto cfg = small_config();
    const auto dir = scratch("aca");
    const auto data = cmd_gen_data(cfg, dir).dataset;
    const auto bb = cmd_train(cfg, LossKind::BetaBinomialTotal, data, dir).params;
    const auto ce = cmd_train(cfg, LossKind::CrossEntropy, data, dir).params;
    const auto r = cmd_eval_aca(cfg, bb, ce, dir);
    REQUIRE(r.rows.size() == 6);
    const auto& vanilla = r.rows[0];
    const auto& no_stop = r.rows[1];
    const auto& full = r.rows[2];
    CHECK(vanilla.method == "vanilla_bon");
    CHECK(vanilla.mean_candidates == 16.0);
    CHECK(no_stop.mean_candidates == 16.0);
    CHECK(full.total_tokens <= vanilla.total_tokens);
    CHECK(no_stop.total_tokens <= vanilla.total_tokens);
    CHECK(full.mean_candidates <= 16.0);
    CHECK(r.rows[5].method == "aca_reward_only");

    const auto traces = slurp(dir / "aca_traces.jsonl");
    CHECK(count_lines(traces) == 6u * 5u);
    std::istringstream lines(traces);
    std::string line;
    while (std::getline(lines, line)) {
        const auto t = nlohmann::json::parse(line);
        CHECK(t["trace"]["candidates_generated"].get<int>() <= 16);
    }
}

TEST_CASE("eval-stepdetect rows and oracle bound") {
    auto cfg = small_config();
    const auto dir = scratch("step");
    const auto data = cmd_gen_data(cfg, dir).dataset;
    const auto bb = cmd_train(cfg, LossKind::BetaBinomialTotal, data, dir).params;
    const auto ce = cmd_train(cfg, LossKind::CrossEntropy, data, dir).params;
    const auto rows = cmd_eval_stepdetect(cfg, bb, ce, dir);
    REQUIRE(rows.size() == 4u * 3u);
    double oracle = 0.0;
    for (const auto& r : rows) {
        if (r.method == "oracle_true_q" && r.regime == "all") oracle = r.f1;
    }
    for (const auto& r : rows) {
        if (r.regime == "all") CHECK(oracle >= r.f1);
    }
    CHECK(slurp(dir / "stepdetect.csv").rfind("method,regime,threshold,f1,steps\n", 0) == 0);
}

TEST_CASE("report merges files and fails closed") {
    const auto dir = scratch("report");
    const std::vector<ReportRow> aca{{"vanilla_bon", 0.25, 1383, 16.0, std::nullopt, std::nullopt},
                                     {"aca", 0.2632, 965, 9.0, std::nullopt, std::nullopt}};
    std::ofstream(dir / "a.csv") << [&] {
        std::ostringstream s;
        write_report_csv(aca, s);
        return s.str();
    }();
    const auto out = dir / "out";
    const auto rows = cmd_report({dir / "a.csv"}, out);
    CHECK(rows.size() == 2);
    const auto csv = slurp(out / "report.csv");
    CHECK(csv.find("a.csv,vanilla_bon,0.250000,1383,16.0000,,,0.00,(↓0.00%)") != std::string::npos);
    CHECK(csv.find("a.csv,aca,0.263200,965,9.0000,,,30.22,(↓30.22%)") != std::string::npos);
    const auto j = nlohmann::json::parse(slurp(out / "report.json"));
    CHECK(j["rows"][1]["token_reduction_pct"].get<double>() == doctest::Approx(30.2241503977));

    const auto empty_out = dir / "empty";
    CHECK_THROWS_AS(cmd_report({}, empty_out), std::invalid_argument);
    CHECK_FALSE(fs::exists(empty_out / "report.csv"));

    std::ofstream(dir / "b.csv") << kReportHeader << "\naca,0.5,10,4,,\n";
    const auto bad_out = dir / "bad";
    CHECK_THROWS_AS(cmd_report({dir / "a.csv", dir / "b.csv"}, bad_out), std::invalid_argument);
    CHECK_FALSE(fs::exists(bad_out / "report.csv"));
    CHECK_FALSE(fs::exists(bad_out / "report.json"));
    std::ofstream(dir / "c.csv") << kReportHeader << "\n";
    CHECK_THROWS_AS(cmd_report({dir / "c.csv"}, bad_out), std::invalid_argument);

    // Input order does not matter.
    std::ofstream(dir / "d.csv") << slurp(dir / "a.csv");
    cmd_report({dir / "d.csv", dir / "a.csv"}, dir / "o1");
    cmd_report({dir / "a.csv", dir / "d.csv"}, dir / "o2");
    CHECK(slurp(dir / "o1" / "report.csv") == slurp(dir / "o2" / "report.csv"));
}

TEST_CASE("full pipeline is byte-identical across reruns") {
    const auto cfg = small_config();
    auto run = [&](const std::string& name) {
        const auto dir = scratch(name);
        const auto data = cmd_gen_data(cfg, dir).dataset;
        const auto bb = cmd_train(cfg, LossKind::BetaBinomialTotal, data, dir).params;
        const auto ce = cmd_train(cfg, LossKind::CrossEntropy, data, dir).params;
        cmd_eval_bon(cfg, bb, ce, dir);
        cmd_eval_aca(cfg, bb, ce, dir);
        cmd_eval_stepdetect(cfg, bb, ce, dir);
        cmd_report({dir / "bon_report.csv", dir / "aca_report.csv"}, dir);
        return dir;
    };
    const auto a = run("det_a");
    const auto b = run("det_b");
    for (const char* f : {"dataset.jsonl", "manifest.json", "model_beta_binomial_total.json", "train_log_beta_binomial_total.csv",
                          "bon_report.csv", "bon_report.json", "aca_report.csv", "aca_report.json", "aca_traces.jsonl",
                          "stepdetect.csv", "report.csv", "report.json"}) {
        INFO(f);
        CHECK(slurp(a / f) == slurp(b / f));
    }
}

// distprm command-line entry point.
//
//   distprm [--config FILE] [--seed N] [--out DIR] <command> [options]
//
// Success prints one JSON line on stdout; failure prints one JSON line on
// stderr ({"status":"error",...}) and exits nonzero.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "distprm/config.hpp"
#include "distprm/harness.hpp"
#include "distprm/scorer_io.hpp"

namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

int report_error(const std::string& command, const std::string& kind, const std::string& message, int code) {
    ordered_json j{{"status", "error"}, {"command", command}, {"kind", kind}, {"message", message}};
    std::cerr << j.dump() << std::endl;
    return code;
}

void print_ok(const std::string& command, ordered_json extra) {
    ordered_json j{{"status", "ok"}, {"command", command}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    std::cout << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributional process reward model experiments"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    app.add_option("--config", config_path, "Experiment config JSON (defaults when omitted)")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Override the config seed");
    app.add_option("--out", out_dir, "Override the output directory");

    auto* gen = app.add_subcommand("gen-data", "Generate the labeled prefix dataset and its manifest");

    auto* train = app.add_subcommand("train", "Train a scorer on a dataset");
    std::string loss, dataset;
    train->add_option("--loss", loss, "bb|beta_binomial_total|ce|cross_entropy (default: config)");
    train->add_option("--dataset", dataset, "Dataset JSONL (default: <out>/dataset.jsonl)");

    std::string model, baseline;
    std::vector<CLI::App*> evals;
    for (const auto& [name, help] : {std::pair{"eval-bon", "Best-of-N selection on shared pools"},
                                     std::pair{"eval-aca", "Adaptive computation allocation and ablation"},
                                     std::pair{"eval-stepdetect", "Erroneous-step detection F1"}}) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--model", model, "Beta-Binomial model (default: <out>/model_beta_binomial_total.json)");
        sub->add_option("--baseline-model", baseline, "Cross-entropy model (default: <out>/model_cross_entropy.json)");
        evals.push_back(sub);
    }

    auto* report = app.add_subcommand("report", "Merge report CSVs and add token reductions");
    std::vector<std::string> inputs;
    report->add_option("inputs", inputs, "Report CSV files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("", "usage", e.what(), e.get_exit_code() == 0 ? 2 : e.get_exit_code());
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        distprm::ExperimentConfig config = config_path.empty() ? distprm::ExperimentConfig{}
                                                               : distprm::load_config(config_path);
        if (seed) config.seed = *seed;
        if (!out_dir.empty()) config.output_dir = out_dir;
        config.validate();
        const fs::path out = config.output_dir;

        auto load_models = [&] {
            const fs::path bb = model.empty() ? distprm::model_path(out, distprm::LossKind::BetaBinomialTotal) : fs::path(model);
            const fs::path ce = baseline.empty() ? distprm::model_path(out, distprm::LossKind::CrossEntropy) : fs::path(baseline);
            return std::pair{distprm::load_scorer(bb), distprm::load_scorer(ce)};
        };

        if (gen->parsed()) {
            const auto r = distprm::cmd_gen_data(config, out);
            print_ok(command, {{"records", r.records},
                               {"config_hash", r.config_hash},
                               {"dataset", r.dataset.string()},
                               {"manifest", r.manifest.string()}});
        } else if (train->parsed()) {
            const auto kind = loss.empty() ? config.loss_kind : distprm::loss_kind_from_string(loss);
            const fs::path data = dataset.empty() ? out / "dataset.jsonl" : fs::path(dataset);
            const auto r = distprm::cmd_train(config, kind, data, out);
            print_ok(command, {{"loss_kind", distprm::to_string(kind)},
                               {"epochs", r.epochs.size()},
                               {"final_loss", r.epochs.back().loss},
                               {"model", distprm::model_path(out, kind).string()}});
        } else if (evals[0]->parsed()) {
            const auto [bb, ce] = load_models();
            const auto r = distprm::cmd_eval_bon(config, bb, ce, out);
            print_ok(command, {{"test_problems", r.test_problems},
                               {"pool_sha256", r.pool_sha256},
                               {"report", (out / "bon_report.csv").string()}});
        } else if (evals[1]->parsed()) {
            const auto [bb, ce] = load_models();
            const auto r = distprm::cmd_eval_aca(config, bb, ce, out);
            print_ok(command, {{"first_stage_stop_rate", r.first_stage_stop_rate},
                               {"report", (out / "aca_report.csv").string()}});
        } else if (evals[2]->parsed()) {
            const auto [bb, ce] = load_models();
            const auto rows = distprm::cmd_eval_stepdetect(config, bb, ce, out);
            print_ok(command, {{"rows", rows.size()}, {"report", (out / "stepdetect.csv").string()}});
        } else if (report->parsed()) {
            std::vector<fs::path> paths(inputs.begin(), inputs.end());
            const auto rows = distprm::cmd_report(paths, out);
            print_ok(command, {{"rows", rows.size()}, {"report", (out / "report.csv").string()}});
        }
    } catch (const std::invalid_argument& e) {
        return report_error(command, "invalid_input", e.what(), 1);
    } catch (const std::exception& e) {
        return report_error(command, "runtime", e.what(), 1);
    }
    return 0;
}

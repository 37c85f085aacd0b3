#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run(const std::string& args, const fs::path& dir) {
    const auto err_path = dir / "stderr.txt";
    const std::string cmd = std::string(DISTPRM_CLI) + " " + args + " 2>" + err_path.string();
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream e(err_path);
    std::getline(e, r.err, '\0');
    return r;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("distprm_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("bad config fails with a JSON error line") {
    const auto dir = scratch("bad");
    std::ofstream(dir / "cfg.json") << R"({"version": 1, "aca": {"c_stoop": 0.3}})";
    const auto r = run("--config " + (dir / "cfg.json").string() + " --out " + dir.string() + " gen-data", dir);
    CHECK(r.code == 1);
    CHECK(r.out.empty());
    const auto j = nlohmann::json::parse(r.err);
    CHECK(j["status"] == "error");
    CHECK(j["command"] == "gen-data");
    CHECK(j["kind"] == "invalid_input");
    CHECK(j["message"].get<std::string>().find("c_stoop") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "dataset.jsonl"));
}

TEST_CASE("unknown subcommand is a usage error") {
    const auto dir = scratch("usage");
    const auto r = run("frobnicate", dir);
    CHECK(r.code != 0);
    CHECK(nlohmann::json::parse(r.err)["kind"] == "usage");
}

TEST_CASE("small pipeline through the binary") {
    const auto dir = scratch("pipe");
    std::ofstream(dir / "cfg.json") << R"({"version": 1, "env": {"num_problems": 30}, "train": {"epochs": 2},
                                          "eval": {"num_problems": 100}, "aca": {"max_traces": 3}})";
    const std::string base = "--config " + (dir / "cfg.json").string() + " --seed 11 --out " + dir.string() + " ";

    auto ok = [&](const std::string& cmd) {
        const auto r = run(base + cmd, dir);
        INFO(cmd << ": " << r.err);
        REQUIRE(r.code == 0);
        const auto j = nlohmann::json::parse(r.out);
        CHECK(j["status"] == "ok");
        return j;
    };
    const auto gen = ok("gen-data");
    CHECK(gen["records"].get<int>() > 0);
    const auto manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
    CHECK(manifest["seed"] == 11);

    CHECK(ok("train --loss bb")["loss_kind"] == "beta_binomial_total");
    CHECK(ok("train --loss ce")["loss_kind"] == "cross_entropy");
    ok("eval-bon");
    ok("eval-aca");
    ok("eval-stepdetect");
    const auto rep = ok("report " + (dir / "bon_report.csv").string() + " " + (dir / "aca_report.csv").string());
    CHECK(rep["rows"] == 16);
    CHECK(fs::exists(dir / "report.csv"));

    const auto bad = run(base + "train --loss hinge", dir);
    CHECK(bad.code == 1);
    CHECK(nlohmann::json::parse(bad.err)["command"] == "train");
}

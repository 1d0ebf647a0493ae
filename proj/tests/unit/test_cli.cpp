#include <doctest.h>

#include "theta_stationary/cli.hpp"
#include "theta_stationary/csv.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace theta_stationary;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "theta-stationary");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    Outcome o;
    o.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("theta_stationary_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }

    std::string config(const std::string& body, const std::string& file = "config.json") const {
        std::ofstream(path / file) << body;
        return (path / file).string();
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_binary(const std::string& args) {
    const std::string cmd = std::string("\"") + THETA_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config parsing") {
    const auto cfg = cli::parse_config(nlohmann::json::parse(
        R"({"problem": {"builtin": "ou", "alpha": 1.5}, "theta": 0.25, "h": 0.1, "x0": 3, "profile": "full"})"));
    REQUIRE(cfg.problem);
    CHECK(cfg.problem->alpha == 1.5);
    CHECK(*cfg.theta == 0.25);
    CHECK(*cfg.x0 == std::vector<double>{3.0});
    CHECK(*cfg.profile == Profile::Full);
    CHECK(cli::parse_config(nlohmann::json::parse(R"({"problem": "cubic2d"})")).problem->builtin == "cubic2d");
    CHECK_THROWS_AS(cli::parse_config(nlohmann::json::parse(R"({"thetaa": 1})")), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config(nlohmann::json::parse(R"({"theta": "half"})")), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config(nlohmann::json::parse("[1, 2]")), cli::ConfigError);
}

TEST_CASE("problem resolution") {
    cli::ProblemConfig pc;
    pc.builtin = "ou";
    pc.alpha = 3.0;
    const auto bp = cli::resolve_problem(pc);
    CHECK(bp.bounds.k2 == -3.0);
    pc.builtin = "cubic1d";
    CHECK_THROWS(cli::resolve_problem(pc));
    CHECK(cli::resolve_problem(std::nullopt).problem.name == "ou");
    CHECK(cli::default_x0("cubic2d", 2) == std::vector<double>{2.0, 3.0});
}

TEST_CASE("simulate one path writes n_steps + 1 rows, reproducibly") {
    TempDir dir("simulate");
    const auto cfg = dir.config(R"({"problem": "ou", "theta": 0.5, "h": 0.01, "n_steps": 10, "seed": 1, "output_dir": ")" +
                                (dir.path / "a").string() + R"("})");
    const auto first = run_cli({"simulate", cfg});
    REQUIRE(first.code == 0);
    const auto table = read_csv(dir.path / "a" / "path.csv");
    CHECK(table.columns == std::vector<std::string>{"t", "x"});
    CHECK(table.rows.size() == 11);
    CHECK(table.rows[0][1] == 2.0);
    CHECK(table.meta_value("seed") == "1");
    const std::string before = slurp(dir.path / "a" / "path.csv");
    CHECK(run_cli({"simulate", "--config", cfg}).code == 0);
    CHECK(slurp(dir.path / "a" / "path.csv") == before);
    CHECK(run_cli({"simulate", cfg, "--seed", "2"}).code == 0);
    CHECK(slurp(dir.path / "a" / "path.csv") != before);
}

TEST_CASE("simulate an ensemble") {
    TempDir dir("ensemble");
    const auto cfg = dir.config(R"({"problem": "cubic2d", "n_paths": 4, "n_steps": 20, "h": 0.05, "snapshot_every": 0.5})");
    const auto o = run_cli({"simulate", cfg, "--out", (dir.path / "new" / "nested").string()});
    REQUIRE(o.code == 0);
    const auto table = read_csv(dir.path / "new" / "nested" / "ensemble.csv");
    CHECK(table.columns == std::vector<std::string>{"t", "path", "x1", "x2"});
    CHECK(table.rows.size() == 3 * 4);
    CHECK(nlohmann::json::parse(o.out)["paths"] == 4);
}

TEST_CASE("configuration errors exit 2") {
    TempDir dir("errors");
    CHECK(run_cli({"simulate", dir.config("{not json")}).code == 2);
    CHECK(run_cli({"simulate", dir.config(R"({"steps": 3})")}).code == 2);
    CHECK(run_cli({"simulate", (dir.path / "missing.json").string()}).code == 2);
    const auto unknown = run_cli({"experiment", "-e", "nope", "--out", dir.path.string()});
    CHECK(unknown.code == 2);
    CHECK(unknown.err.find("nope") != std::string::npos);
    CHECK(run_cli({"simulate", dir.config(R"({"theta": 2})")}).code == 2);
    CHECK(run_cli({"simulate", dir.config(R"({"problem": "ou", "x0": [1, 2]})")}).code == 2);
    const auto both = dir.config("{}");
    CHECK(run_cli({"simulate", both, "--config", both}).code == 2);
    CHECK(run_cli({"bogus"}).code == 2);
    CHECK(run_cli({"experiment", "--profile", "fast"}).code == 2);
}

TEST_CASE("check reports the regime") {
    TempDir dir("check");
    const auto ok = run_cli({"check", dir.config(R"({"problem": "ou", "theta": 0, "h": 0.5})")});
    CHECK(ok.code == 0);
    const auto report = nlohmann::json::parse(ok.out);
    CHECK(report["valid"] == true);
    CHECK(report.contains("conditions"));

    const auto bad = run_cli({"check", dir.config(R"({"problem": "ou", "theta": 0, "h": 2})")});
    CHECK(bad.code == 4);
    CHECK(bad.out.find("step bound") != std::string::npos);

    CHECK(run_cli({"check", dir.config(R"({"problem": "cubic1d", "theta": 1, "h": 10})")}).code == 0);
    CHECK(run_cli({"check", dir.config(R"({"problem": "cubic1d", "theta": 0, "h": 0.1})")}).code == 4);
}

TEST_CASE("experiment: explicit cubic divergence is the expected verdict") {
    TempDir dir("moment");
    const auto cfg = dir.config(R"({"experiment": "moment", "problem": "cubic1d", "theta": 0, "h": 0.5, "x0": 3, "n_paths": 20})");
    const auto o = run_cli({"experiment", cfg, "--out", (dir.path / "out").string()});
    CHECK(o.code == 0);
    const auto verdict = nlohmann::json::parse(o.out);
    CHECK(verdict["metrics"]["divergence"] == true);
    CHECK(verdict["pass"] == true);
    CHECK(fs::exists(dir.path / "out" / "verdict.json"));
    CHECK(fs::exists(dir.path / "out" / "moment_series.csv"));
}

TEST_CASE("explicit blow-up on a single path is a runtime error naming the step") {
    TempDir dir("blowup");
    const auto cfg = dir.config(R"({"problem": "cubic1d", "theta": 0, "h": 0.5, "x0": 3, "n_steps": 40, "output_dir": ")" +
                                dir.path.string() + R"("})");
    const auto o = run_cli({"simulate", cfg});
    CHECK(o.code == 3);
    CHECK(o.err.find("step") != std::string::npos);
}

TEST_CASE("the installed binary") {
    CHECK(run_binary("--help") == 0);
    CHECK(run_binary("simulate --help") == 0);
    CHECK(run_binary("--no-such-flag") == 2);
    CHECK(run_binary("experiment -e nope") == 2);
}

}  // TEST_SUITE

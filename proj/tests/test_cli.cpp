// SPDX-License-Identifier: Apache-2.0
//
// Drives the built binary end to end: flags, config files, output formats,
// and the full exit-code contract (0 success, 2 usage, 3 numerical,
// 4 diverged).

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

#ifndef MUDKIT_CLI_PATH
#define MUDKIT_CLI_PATH "mudkit"
#endif

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "mudkit_cli_tests";
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

RunResult run(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    const fs::path out = work_dir() / ("out" + std::to_string(counter) + ".txt");
    const fs::path err = work_dir() / ("err" + std::to_string(counter) + ".txt");
    ++counter;
    const std::string cmd = env + (env.empty() ? "" : " ") + MUDKIT_CLI_PATH + " " + args +
                            " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
    const auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

fs::path write_config(const std::string& name, const std::string& body) {
    const fs::path p = work_dir() / name;
    std::ofstream out(p);
    out << body;
    return p;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& body) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

std::string strip_last_column(const std::string& csv) {
    std::istringstream in(csv);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        const auto pos = line.rfind(',');
        out << (pos == std::string::npos ? line : line.substr(0, pos)) << '\n';
    }
    return out.str();
}

}  // namespace

TEST_CASE("whiten: polar on an orthonormal input reports a tiny residual") {
    const RunResult r = run("whiten --op polar --rows 16 --cols 64 --cond 1 --seed 3");
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(r.out);
    CHECK(j.at("op") == "polar");
    CHECK(j.at("k") == 16);
    CHECK(j.at("d") == 64);
    CHECK(j.at("ortho_residual").get<double>() <= 1e-9);
}

TEST_CASE("whiten: flops field follows the 12x cost-model gap") {
    const RunResult mud = run("whiten --op mud --passes 1 --rows 64 --cols 256 --seed 4");
    const RunResult muon = run("whiten --op muon --ns-iters 5 --rows 64 --cols 256 --seed 4");
    REQUIRE(mud.exit_code == 0);
    REQUIRE(muon.exit_code == 0);
    const double fm = json::parse(mud.out).at("flops").get<double>();
    const double fn = json::parse(muon.out).at("flops").get<double>();
    CHECK(std::abs(fn / fm - 12.0) <= 1.2);
}

TEST_CASE("whiten: cholqr surfaces the squared condition number as exit 3") {
    const RunResult r = run("whiten --op cholqr --rows 32 --cols 128 --cond 1e9 --seed 5");
    CHECK(r.exit_code == 3);
    CHECK(r.err.find("SPD") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
    CHECK(run("whiten --no-such-flag").exit_code == 2);
    CHECK(run("whiten --op nope").exit_code == 2);
    CHECK(run("").exit_code == 2);
    CHECK(run("train /no/such/config.json").exit_code == 2);
    const fs::path bad = write_config("bad_key.json", "{\"task\": \"matreg\", \"oops\": 1}");
    CHECK(run("train " + bad.string()).exit_code == 2);
    const fs::path bad2 = write_config("bad_matreg.json", "{\"matreg_n\": 1}");
    CHECK(run("train " + bad2.string()).exit_code == 2);
}

TEST_CASE("help exits 0") {
    CHECK(run("--help").exit_code == 0);
    CHECK(run("whiten --help").exit_code == 0);
}

TEST_CASE("trace: 2x2 instances finish in one exact pass") {
    const RunResult r = run("trace --dim 2 --eps0 0.3 --seed 6");
    REQUIRE(r.exit_code == 0);
    const auto rows = parse_csv(r.out);
    REQUIRE(rows.size() >= 3);
    CHECK(rows[0] == std::vector<std::string>{"pass", "linf", "l1", "fro"});
    CHECK(rows[2][0] == "1");
    CHECK(std::stod(rows[2][1]) == 0.0);
    CHECK(std::stod(rows[2][2]) == 0.0);
    CHECK(std::stod(rows[2][3]) == 0.0);
    // exact one-pass finish leaves nothing in the fit window: no slope row
    CHECK(rows.back()[0] == "1");
}

TEST_CASE("trace: eps0 = 0 emits a single row of zeros") {
    const RunResult r = run("trace --dim 8 --eps0 0 --seed 7");
    REQUIRE(r.exit_code == 0);
    const auto rows = parse_csv(r.out);
    REQUIRE(rows.size() == 2);  // header + pass 0
    CHECK(rows[1] == std::vector<std::string>{"0", "0", "0", "0"});
}

TEST_CASE("trace: generic run fits a quadratic slope") {
    const RunResult r = run("trace --dim 16 --eps0 0.003 --seed 8");
    REQUIRE(r.exit_code == 0);
    const auto rows = parse_csv(r.out);
    REQUIRE(rows.back().at(0) == "slope");
    const double slope = std::stod(rows.back().at(1));
    CHECK(std::abs(slope - 2.0) <= 0.3);
}

TEST_CASE("sgs-check reports a tiny spectrum discrepancy") {
    const RunResult r = run("sgs-check --dim 24 --instances 10 --seed 9");
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(r.out);
    CHECK(j.at("dim") == 24);
    CHECK(j.at("max_discrepancy").get<double>() <= 1e-8);
}

TEST_CASE("bench emits one CSV row per op with model flops") {
    const RunResult r =
        run("bench --op mud1 --op mud2 --rows 64 --cols 256 --repeats 3 --seed 10");
    REQUIRE(r.exit_code == 0);
    const auto rows = parse_csv(r.out);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] ==
          std::vector<std::string>{"op", "k", "d", "flops", "wall_seconds", "flops_per_second"});
    CHECK(rows[1][0] == "mud1");
    const std::uint64_t k2d = 64ULL * 64 * 256;
    CHECK(std::stoull(rows[1][3]) == 2 * k2d + k2d / 2);
    CHECK(std::stoull(rows[2][3]) == 2 * (2 * k2d + k2d / 2));
}

TEST_CASE("train: zero steps produce a header-only CSV") {
    const fs::path cfg = write_config("steps0.json", "{\"steps\": 0}");
    const RunResult r = run("train " + cfg.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out == "step,loss,lr,grad_norm_preclip,elapsed_seconds\n");
}

TEST_CASE("train: identical configs give identical deterministic columns") {
    const fs::path cfg = write_config("det.json",
                                      "{\"task\": \"matreg\", \"matreg_n\": 8, \"matreg_m\": 8,"
                                      " \"steps\": 30, \"warmup_steps\": 5, \"batch\": 4,"
                                      " \"seed\": 11, \"optimizer\": \"mud\"}");
    const RunResult a = run("train " + cfg.string());
    const RunResult b = run("train " + cfg.string());
    REQUIRE(a.exit_code == 0);
    REQUIRE(b.exit_code == 0);
    CHECK(strip_last_column(a.out) == strip_last_column(b.out));
    CHECK(parse_csv(a.out).size() == 31);
}

TEST_CASE("train: MUDKIT_SEED overrides the config seed") {
    const fs::path cfg = write_config("envseed.json",
                                      "{\"task\": \"matreg\", \"matreg_n\": 8, \"matreg_m\": 8,"
                                      " \"steps\": 10, \"warmup_steps\": 2, \"batch\": 4,"
                                      " \"seed\": 11}");
    const RunResult base = run("train " + cfg.string());
    const RunResult overridden = run("train " + cfg.string(), "MUDKIT_SEED=99");
    const RunResult direct = run("train " + cfg.string(), "MUDKIT_SEED=11");
    REQUIRE(base.exit_code == 0);
    REQUIRE(overridden.exit_code == 0);
    CHECK(strip_last_column(base.out) != strip_last_column(overridden.out));
    CHECK(strip_last_column(base.out) == strip_last_column(direct.out));
    CHECK(run("trace --dim 4 --eps0 0.1", "MUDKIT_SEED=garbage").exit_code == 2);
}

TEST_CASE("train: divergence writes the partial trace and exits 4") {
    const fs::path out_csv = work_dir() / "diverged.csv";
    const fs::path cfg = write_config(
        "diverge.json", "{\"task\": \"matreg\", \"matreg_n\": 8, \"matreg_m\": 8,"
                        " \"steps\": 50, \"warmup_steps\": 1, \"batch\": 4,"
                        " \"lr\": 1e300, \"min_lr\": 1e299,"
                        " \"output_path\": \"" + out_csv.string() + "\"}");
    const RunResult r = run("train " + cfg.string());
    CHECK(r.exit_code == 4);
    std::ifstream in(out_csv);
    std::stringstream ss;
    ss << in.rdbuf();
    const auto rows = parse_csv(ss.str());
    CHECK(rows.size() >= 2);  // header plus at least the first step
}

TEST_CASE("train: json format carries the same records") {
    const fs::path cfg = write_config("fmt.json",
                                      "{\"steps\": 5, \"warmup_steps\": 1, \"batch\": 4,"
                                      " \"matreg_n\": 8, \"matreg_m\": 8,"
                                      " \"format\": \"json\"}");
    const RunResult r = run("train " + cfg.string());
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(r.out);
    CHECK(j.at("diverged") == false);
    CHECK(j.at("records").size() == 5);
}

TEST_CASE("compare summarizes optimizers and favors the cheap decorrelator") {
    const fs::path cfg = write_config(
        "compare.json",
        "{\"task\": \"matreg\", \"matreg_n\": 64, \"matreg_m\": 64, \"batch\": 16,"
        " \"steps\": 800, \"warmup_steps\": 20, \"seed\": 12, \"workers\": 1,"
        " \"target_ratio\": 0.1,"
        " \"optimizers\": [{\"name\": \"adamw\"}, {\"name\": \"muon\"},"
        "                  {\"name\": \"mud\", \"mud_passes\": 1}]}");
    const RunResult r = run("compare " + cfg.string());
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(r.out);
    REQUIRE(j.at("results").size() == 3);
    CHECK(j.at("results")[0].at("optimizer") == "adamw");
    CHECK(j.at("results")[2].at("optimizer") == "mud1");
    const auto& muon = j.at("results")[1];
    const auto& mud = j.at("results")[2];
    REQUIRE_FALSE(muon.at("steps_to_target").is_null());
    REQUIRE_FALSE(mud.at("steps_to_target").is_null());
    CHECK(mud.at("seconds_to_target").get<double>() <
          muon.at("seconds_to_target").get<double>());
}

TEST_CASE("compare validates its config") {
    const fs::path no_opts = write_config("no_opts.json", "{\"task\": \"matreg\"}");
    CHECK(run("compare " + no_opts.string()).exit_code == 2);
    const fs::path two_targets = write_config(
        "two_targets.json", "{\"optimizers\": [{\"name\": \"adamw\"}],"
                            " \"target_ratio\": 0.5, \"target_loss\": 1.0}");
    CHECK(run("compare " + two_targets.string()).exit_code == 2);
}

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string binary() {
    const char* bin = std::getenv("FGLSIM_BIN");
    REQUIRE(bin != nullptr);
    return bin;
}

struct RunOutcome {
    int exit_code = -1;
    std::string output;
};

RunOutcome run_cli(const std::string& args) {
    const std::string log = "/tmp/fgl_cli_out.txt";
    const std::string cmd = "\"" + binary() + "\" " + args + " >" + log + " 2>&1";
    const int raw = std::system(cmd.c_str());
    RunOutcome out;
    out.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(log);
    std::ostringstream ss;
    ss << in.rdbuf();
    out.output = ss.str();
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    json j;
    in >> j;
    return j;
}

// A configuration small enough that every subcommand finishes in well under a
// second: tiny federation, few rounds, short chains.
std::string tiny_config() {
    static const std::string path = [] {
        const json cfg = {
            {"seed", 3},
            {"dataset",
             {{"kind", "gmm"},
              {"classes", 4},
              {"train_samples", 240},
              {"test_samples", 80}}},
            {"fl",
             {{"clients", 3},
              {"participation", 1.0},
              {"rounds", 2},
              {"local_epochs", 1},
              {"lr", 0.05},
              {"batch", 32},
              {"synth_samples", 120},
              {"server_epochs", 2}}},
            {"model", {{"kind", "mlp"}, {"hidden", {8}}}},
            {"synth", {{"method", "direct"}}},
            {"landscape", {{"radius", 0.5}, {"grid", 3}}},
        };
        const std::string p = "/tmp/fgl_cli_tiny.json";
        std::ofstream out(p);
        out << cfg.dump(2);
        return p;
    }();
    return path;
}

struct TempDir {
    std::string path;
    explicit TempDir(const std::string& name) : path("/tmp/fgl_cli_" + name) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("version flag prints and exits cleanly") {
    const auto out = run_cli("--version");
    REQUIRE(out.exit_code == 0);
    REQUIRE(out.output.find("1.0.0") != std::string::npos);
}

TEST_CASE("a one-shot run leaves a complete trail") {
    TempDir dir("run_fgl");
    const auto out =
        run_cli("run fgl --config " + tiny_config() + " --out " + dir.path);
    INFO(out.output);
    REQUIRE(out.exit_code == 0);

    const json manifest = read_json(dir.path + "/manifest.json");
    REQUIRE(manifest.at("status") == "ok");
    REQUIRE(manifest.at("command") == "run fgl");
    REQUIRE(manifest.at("config").is_object());
    REQUIRE(manifest.at("config").at("seed") == 3);
    REQUIRE(manifest.contains("modeled_seconds"));
    REQUIRE(manifest.at("artifacts").size() >= 4);
    for (const auto& rel : manifest.at("artifacts"))
        REQUIRE(fs::exists(fs::path(dir.path) / rel.get<std::string>()));

    const json summary = read_json(dir.path + "/summary.json");
    REQUIRE(summary.at("entries") == 1);
    REQUIRE(summary.at("reports")[0].at("method") == "fgl");
    REQUIRE(summary.at("ledgers").contains("fgl"));

    // One prompt upload per client, no model traffic.
    const auto ledger_csv = slurp(dir.path + "/ledger-fgl.csv");
    REQUIRE(std::count(ledger_csv.begin(), ledger_csv.end(), '\n') == 4); // header + 3
    REQUIRE(ledger_csv.find("model") == std::string::npos);
}

TEST_CASE("federated and centralized runs emit round tables") {
    TempDir dir("run_fedavg");
    auto out = run_cli("run fedavg --config " + tiny_config() + " --out " + dir.path);
    INFO(out.output);
    REQUIRE(out.exit_code == 0);
    const auto rounds = slurp(dir.path + "/rounds.csv");
    REQUIRE(rounds.rfind("round,clients,mean_local_loss,train_acc,test_acc,cumulative_bytes\n",
                         0) == 0);
    REQUIRE(std::count(rounds.begin(), rounds.end(), '\n') == 3); // header + 2 rounds

    TempDir dir2("run_central");
    out = run_cli("run centralized --config " + tiny_config() + " --out " + dir2.path);
    REQUIRE(out.exit_code == 0);
    const json summary = read_json(dir2.path + "/summary.json");
    REQUIRE(summary.at("reports")[0].at("method") == "centralized");
}

TEST_CASE("identical invocations produce identical artifacts") {
    TempDir a("rep_a"), b("rep_b");
    REQUIRE(run_cli("run fgl --config " + tiny_config() + " --out " + a.path).exit_code == 0);
    REQUIRE(run_cli("run fgl --config " + tiny_config() + " --out " + b.path).exit_code == 0);

    const json manifest = read_json(a.path + "/manifest.json");
    for (const auto& rel : manifest.at("artifacts")) {
        const std::string name = rel.get<std::string>();
        REQUIRE(slurp(a.path + "/" + name) == slurp(b.path + "/" + name));
    }
}

TEST_CASE("seed and preset flags override the config file") {
    TempDir a("seed_a"), b("seed_b");
    REQUIRE(run_cli("run fgl --config " + tiny_config() + " --seed 5 --out " + a.path)
                .exit_code == 0);
    REQUIRE(run_cli("run fgl --config " + tiny_config() + " --seed 6 --out " + b.path)
                .exit_code == 0);
    REQUIRE(read_json(a.path + "/manifest.json").at("config").at("seed") == 5);
    // Different seeds, different trained models.
    REQUIRE(slurp(a.path + "/results.csv") != slurp(b.path + "/results.csv"));
}

TEST_CASE("bad input is a validation failure, not a crash") {
    TempDir dir("bad");
    // Unknown config key.
    const std::string bad_cfg = "/tmp/fgl_cli_bad.json";
    {
        std::ofstream out(bad_cfg);
        out << R"({"wrong_key": 1})";
    }
    auto out = run_cli("run fgl --config " + bad_cfg + " --out " + dir.path);
    REQUIRE(out.exit_code == 1);
    REQUIRE(out.output.find("wrong_key") != std::string::npos);
    const json manifest = read_json(dir.path + "/manifest.json");
    REQUIRE(manifest.at("status") == "failed");
    REQUIRE(manifest.contains("failure_phase"));
    std::remove(bad_cfg.c_str());

    // Unknown experiment name.
    out = run_cli("run warp --config " + tiny_config() + " --out " + dir.path + "2");
    REQUIRE(out.exit_code == 1);
    fs::remove_all(dir.path + "2");

    // Missing required subcommand.
    out = run_cli("");
    REQUIRE(out.exit_code == 1);
}

TEST_CASE("sweeps fan out into per-size subdirectories") {
    TempDir dir("sweep");
    const auto out = run_cli("sweep --ns 120,240 --config " + tiny_config() + " --out " +
                             dir.path);
    INFO(out.output);
    REQUIRE(out.exit_code == 0);

    const auto sweep = slurp(dir.path + "/sweep.csv");
    REQUIRE(sweep.rfind("synth_samples,train_acc,test_acc\n", 0) == 0);
    REQUIRE(std::count(sweep.begin(), sweep.end(), '\n') == 3);
    REQUIRE(fs::exists(dir.path + "/ns-120/results.csv"));
    REQUIRE(fs::exists(dir.path + "/ns-240/results.csv"));

    const json summary = read_json(dir.path + "/summary.json");
    REQUIRE(summary.at("entries") == 2);

    REQUIRE(run_cli("sweep --ns 0 --config " + tiny_config() + " --out " + dir.path + "x")
                .exit_code == 1);
    fs::remove_all(dir.path + "x");
}

TEST_CASE("landscape runs slice both protocols") {
    TempDir dir("landscape");
    const auto out = run_cli("landscape --config " + tiny_config() + " --out " + dir.path);
    INFO(out.output);
    REQUIRE(out.exit_code == 0);
    REQUIRE(fs::exists(dir.path + "/landscape-fedavg.csv"));
    REQUIRE(fs::exists(dir.path + "/landscape-fgl.csv"));
    const json summary = read_json(dir.path + "/summary.json");
    REQUIRE(summary.at("landscapes").contains("fedavg"));
    REQUIRE(summary.at("landscapes").at("fgl").at("grid") == 3);
}

TEST_CASE("protocol comparison reports the byte ratio") {
    TempDir dir("comm");
    const auto out = run_cli("compare-comm --config " + tiny_config() + " --out " + dir.path);
    INFO(out.output);
    REQUIRE(out.exit_code == 0);
    const json cmp = read_json(dir.path + "/comparison.json");
    REQUIRE(cmp.at("fgl_total_bytes").get<std::uint64_t>() > 0);
    REQUIRE(cmp.at("fedavg_total_bytes").get<std::uint64_t>() >
            cmp.at("fgl_total_bytes").get<std::uint64_t>());
    REQUIRE(cmp.at("bytes_ratio").get<double>() < 1.0);
}

TEST_CASE("run directories can be compared after the fact") {
    TempDir a("cmp_a"), b("cmp_b"), out_dir("cmp_out");
    REQUIRE(run_cli("run fgl --config " + tiny_config() + " --out " + a.path).exit_code == 0);
    REQUIRE(run_cli("run fedavg --config " + tiny_config() + " --out " + b.path).exit_code ==
            0);

    // Comparing a run against itself: every ratio is exactly one.
    auto out = run_cli("compare " + a.path + " " + a.path + " --out " + out_dir.path);
    INFO(out.output);
    REQUIRE(out.exit_code == 0);
    json cmp = read_json(out_dir.path + "/compare.json");
    REQUIRE(cmp.at("baseline") == a.path);
    REQUIRE(cmp.at("runs").size() == 2);
    REQUIRE(cmp.at("ratios")[1].at("bytes_ratio") == 1.0);
    REQUIRE(cmp.at("ratios")[1].at("test_acc_ratio") == 1.0);

    // Cross-method comparison works when the dataset matches.
    fs::remove_all(out_dir.path);
    out = run_cli("compare " + a.path + " " + b.path + " --out " + out_dir.path);
    REQUIRE(out.exit_code == 0);

    // One directory is not a comparison.
    out = run_cli("compare " + a.path + " --out " + out_dir.path + "x");
    REQUIRE(out.exit_code == 1);
    fs::remove_all(out_dir.path + "x");
}

TEST_CASE("comparing runs from different datasets fails cleanly") {
    TempDir a("ds_a"), b("ds_b"), out_dir("ds_out");
    REQUIRE(run_cli("run fgl --config " + tiny_config() + " --out " + a.path).exit_code == 0);

    const std::string other_cfg = "/tmp/fgl_cli_other.json";
    {
        json cfg = json::parse(slurp(tiny_config()));
        cfg["dataset"]["classes"] = 5;
        std::ofstream out_file(other_cfg);
        out_file << cfg.dump(2);
    }
    REQUIRE(run_cli("run fgl --config " + other_cfg + " --out " + b.path).exit_code == 0);

    const auto out = run_cli("compare " + a.path + " " + b.path + " --out " + out_dir.path);
    REQUIRE(out.exit_code == 1);
    REQUIRE(out.output.find("dataset") != std::string::npos);
    std::remove(other_cfg.c_str());
}

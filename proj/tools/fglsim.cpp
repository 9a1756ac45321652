// Experiment runner: wires configs to the protocol runs and writes every
// artifact (tables, ledgers, landscape grids, manifests) a run produces.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <CLI11.hpp>

#include "fgl/fgl.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Session {
    fgl::SimConfig cfg;
    bool have_config = false; // compare runs without one
    std::string out_dir;
    std::string command;
    std::string phase = "setup";
    std::vector<std::string> artifacts; // relative to out_dir
    std::map<std::string, double> phase_seconds;
    std::optional<fgl::CostEstimate> modeled;
};

template <typename Fn>
auto timed_phase(Session& s, const std::string& name, Fn&& fn) {
    s.phase = name;
    const auto start = std::chrono::steady_clock::now();
    auto done = [&] {
        const auto stop = std::chrono::steady_clock::now();
        s.phase_seconds[name] += std::chrono::duration<double>(stop - start).count();
    };
    if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        done();
    } else {
        auto result = fn();
        done();
        return result;
    }
}

void add_artifact(Session& s, const std::string& path) {
    s.artifacts.push_back(fs::relative(path, s.out_dir).string());
}

void write_manifest(const Session& s, const std::string& status, const std::string& error = "") {
    std::error_code ec;
    fs::create_directories(s.out_dir, ec);
    if (ec) return; // nowhere to put it; the console error stands alone
    json m;
    m["version"] = fgl::kVersionString;
    m["command"] = s.command;
    m["status"] = status;
    m["config"] = s.have_config ? fgl::config_to_json(s.cfg) : json(nullptr);
    m["artifacts"] = s.artifacts;
    m["phase_seconds"] = s.phase_seconds;
    if (s.modeled) {
        m["modeled_seconds"] = {{"transfer", s.modeled->transfer_seconds},
                                {"latency", s.modeled->latency_seconds},
                                {"compute", s.modeled->compute_seconds},
                                {"total", s.modeled->total_seconds}};
    }
    if (!error.empty()) {
        m["failure_phase"] = s.phase;
        m["error"] = error;
    }
    std::ofstream out((fs::path(s.out_dir) / "manifest.json").string(), std::ios::binary);
    out << m.dump(2) << "\n";
}

std::string dataset_tag(const fgl::SimConfig& cfg) { return cfg.dataset.kind; }

void write_rounds_csv(const std::vector<fgl::RoundReport>& reports, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fgl::fail("cannot write %s", path.c_str());
    out << "round,clients,mean_local_loss,train_acc,test_acc,cumulative_bytes\n";
    char buf[160];
    for (const auto& r : reports) {
        char train[32] = "", test[32] = "";
        if (r.train_eval) std::snprintf(train, sizeof train, "%.6g", r.train_eval->accuracy);
        if (r.test_eval) std::snprintf(test, sizeof test, "%.6g", r.test_eval->accuracy);
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.6g,%s,%s,%llu\n", r.round, r.selected.size(),
                      r.mean_local_loss, train, test,
                      static_cast<unsigned long long>(r.cumulative_bytes));
        out << buf;
    }
    if (!out) fgl::fail("write failed for %s", path.c_str());
}

fgl::TrainRunResult execute_protocol(Session& s, const std::string& method,
                                     const fgl::MaterializedData& data,
                                     const fgl::NetworkSpec& net) {
    const auto& cfg = s.cfg;
    fgl::TrainRunResult result = timed_phase(s, method, [&] {
        if (method == "fedavg")
            return fgl::run_fedavg(net, data.train, data.shards, data.test, cfg.fl, cfg.seed,
                                   cfg.netsim);
        if (method == "centralized")
            return fgl::run_centralized(net, data.train, data.test, cfg.fl, cfg.seed);
        if (method == "fgl")
            return fgl::run_fgl(net, data.train, data.shards, data.test, cfg.fl,
                                fgl::make_fgl_options(cfg, data), cfg.seed, cfg.netsim);
        fgl::fail_config("unknown experiment '%s' (want fgl, fedavg, or centralized)",
                         method.c_str());
    });
    for (const auto& [name, secs] : result.phase_seconds)
        s.phase_seconds[method + "." + name] += secs;
    return result;
}

fgl::EvalReport report_of(const std::string& method, const fgl::SimConfig& cfg,
                          const fgl::TrainRunResult& r) {
    return {method, dataset_tag(cfg), r.final_train.accuracy, r.final_test.accuracy,
            r.final_test.mean_loss};
}

double run_compute_seconds(const fgl::TrainRunResult& r) {
    double total = 0.0;
    for (const auto& [name, secs] : r.phase_seconds) total += secs;
    return total;
}

fgl::EvalReport cmd_run(Session& s, const std::string& method) {
    const auto data = timed_phase(s, "data", [&] { return fgl::materialize_dataset(s.cfg); });
    const fgl::NetworkSpec net = fgl::build_network(s.cfg.model, data.train);
    const fgl::TrainRunResult result = execute_protocol(s, method, data, net);
    const fgl::EvalReport report = report_of(method, s.cfg, result);

    timed_phase(s, "report", [&] {
        const auto written =
            fgl::emit_reports({report}, {}, {{method, result.ledger}}, s.out_dir);
        for (const auto& p : written) add_artifact(s, p);
        const std::string rounds = (fs::path(s.out_dir) / "rounds.csv").string();
        write_rounds_csv(result.reports, rounds);
        add_artifact(s, rounds);
        if (result.synthetic) {
            for (const auto& p : fgl::export_synthetic(*result.synthetic, s.out_dir, "synthetic"))
                add_artifact(s, p);
        }
    });
    s.modeled = fgl::estimate_costs(result.ledger, s.cfg.cost, run_compute_seconds(result));
    write_manifest(s, "ok");
    std::printf("%s on %s: train acc %.4f, test acc %.4f, %llu bytes moved\n", method.c_str(),
                dataset_tag(s.cfg).c_str(), result.final_train.accuracy,
                result.final_test.accuracy,
                static_cast<unsigned long long>(result.ledger.total_bytes()));
    return report;
}

void cmd_sweep(Session& s, const std::vector<std::size_t>& ns_values) {
    std::vector<fgl::EvalReport> reports;
    for (std::size_t ns : ns_values) {
        Session sub;
        sub.cfg = s.cfg;
        sub.cfg.fl.synth_samples = ns;
        sub.have_config = true;
        sub.out_dir = (fs::path(s.out_dir) / ("ns-" + std::to_string(ns))).string();
        sub.command = s.command + " [ns=" + std::to_string(ns) + "]";
        const fgl::EvalReport rep = cmd_run(sub, "fgl");
        for (const auto& [name, secs] : sub.phase_seconds) s.phase_seconds[name] += secs;
        for (const auto& rel : sub.artifacts)
            s.artifacts.push_back(("ns-" + std::to_string(ns) + "/") + rel);
        reports.push_back({"fgl-ns" + std::to_string(ns), rep.dataset, rep.train_acc,
                           rep.test_acc, rep.mean_loss});
    }

    s.phase = "report";
    const std::string sweep_path = (fs::path(s.out_dir) / "sweep.csv").string();
    std::ofstream out(sweep_path, std::ios::binary);
    if (!out) fgl::fail("cannot write %s", sweep_path.c_str());
    out << "synth_samples,train_acc,test_acc\n";
    char buf[96];
    for (std::size_t i = 0; i < ns_values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6g\n", ns_values[i], reports[i].train_acc,
                      reports[i].test_acc);
        out << buf;
    }
    out.close();
    add_artifact(s, sweep_path);
    for (const auto& p : fgl::emit_reports(reports, {}, {}, s.out_dir)) add_artifact(s, p);
    write_manifest(s, "ok");
    std::printf("sweep over %zu synthetic-data sizes done; trend in %s\n", ns_values.size(),
                sweep_path.c_str());
}

void cmd_landscape(Session& s) {
    const auto data = timed_phase(s, "data", [&] { return fgl::materialize_dataset(s.cfg); });
    const fgl::NetworkSpec net = fgl::build_network(s.cfg.model, data.train);
    const auto fedavg = execute_protocol(s, "fedavg", data, net);
    const auto fgl_run = execute_protocol(s, "fgl", data, net);

    const auto slices = timed_phase(s, "landscape", [&] {
        std::vector<std::pair<std::string, fgl::LossLandscapeSlice>> out;
        out.emplace_back("fedavg",
                         fgl::loss_landscape(net, fedavg.model.params, data.test,
                                             s.cfg.landscape.radius, s.cfg.landscape.grid,
                                             s.cfg.seed));
        out.emplace_back("fgl",
                         fgl::loss_landscape(net, fgl_run.model.params, data.test,
                                             s.cfg.landscape.radius, s.cfg.landscape.grid,
                                             s.cfg.seed));
        return out;
    });

    timed_phase(s, "report", [&] {
        const auto written = fgl::emit_reports(
            {report_of("fedavg", s.cfg, fedavg), report_of("fgl", s.cfg, fgl_run)}, slices,
            {{"fedavg", fedavg.ledger}, {"fgl", fgl_run.ledger}}, s.out_dir);
        for (const auto& p : written) add_artifact(s, p);
    });
    write_manifest(s, "ok");
    std::printf("landscape slices written for fedavg and fgl (grid %zu, radius %g)\n",
                s.cfg.landscape.grid, s.cfg.landscape.radius);
}

void cmd_compare_comm(Session& s) {
    const auto data = timed_phase(s, "data", [&] { return fgl::materialize_dataset(s.cfg); });
    const fgl::NetworkSpec net = fgl::build_network(s.cfg.model, data.train);
    const auto fedavg = execute_protocol(s, "fedavg", data, net);
    const auto fgl_run = execute_protocol(s, "fgl", data, net);

    timed_phase(s, "report", [&] {
        const auto cmp = fgl::compare_protocols(fgl_run.ledger, fedavg.ledger);
        const std::string cmp_path = (fs::path(s.out_dir) / "comparison.json").string();
        fs::create_directories(s.out_dir);
        fgl::save_comparison_json(cmp, cmp_path);
        add_artifact(s, cmp_path);
        const auto written = fgl::emit_reports(
            {report_of("fedavg", s.cfg, fedavg), report_of("fgl", s.cfg, fgl_run)}, {},
            {{"fedavg", fedavg.ledger}, {"fgl", fgl_run.ledger}}, s.out_dir);
        for (const auto& p : written) add_artifact(s, p);
        std::printf("fgl moved %llu bytes vs fedavg %llu (ratio %.6g)\n",
                    static_cast<unsigned long long>(cmp.fgl_total),
                    static_cast<unsigned long long>(cmp.fedavg_total), cmp.ratio);
    });
    write_manifest(s, "ok");
}

json load_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fgl::fail_config("compare: cannot read %s", path.c_str());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fgl::fail_config("compare: %s is not valid JSON (%s)", path.c_str(), e.what());
    }
}

// Ratio helper for the comparison table: identical zeros compare equal, a
// zero denominator alone has no ratio.
json ratio_of(double value, double base) {
    if (base == 0.0) return value == 0.0 ? json(1.0) : json(nullptr);
    return json(value / base);
}

void cmd_compare(Session& s, const std::vector<std::string>& dirs) {
    if (dirs.size() < 2)
        fgl::fail_config("compare needs at least two run directories (got %zu)", dirs.size());

    struct RunInfo {
        std::string dir;
        json manifest;
        json summary;
        double test_acc = 0.0;
        double total_bytes = 0.0;
        double modeled_seconds = 0.0;
    };
    std::vector<RunInfo> runs;
    for (const auto& dir : dirs) {
        RunInfo info;
        info.dir = dir;
        info.manifest = load_json_file((fs::path(dir) / "manifest.json").string());
        info.summary = load_json_file((fs::path(dir) / "summary.json").string());
        if (info.manifest.value("status", "") != "ok")
            fgl::fail_config("compare: run in %s did not finish cleanly", dir.c_str());
        if (info.summary.at("reports").empty())
            fgl::fail_config("compare: run in %s has no eval reports", dir.c_str());
        info.test_acc = info.summary.at("reports").at(0).at("test_acc").get<double>();
        for (const auto& [name, led] : info.summary.at("ledgers").items())
            info.total_bytes += led.at("total_bytes").get<double>();
        if (info.manifest.contains("modeled_seconds"))
            info.modeled_seconds = info.manifest.at("modeled_seconds").at("total").get<double>();
        runs.push_back(std::move(info));
    }

    for (const auto& run : runs)
        if (!run.manifest.contains("config") || !run.manifest.at("config").is_object())
            fgl::fail_config("compare: %s has no config echo in its manifest", run.dir.c_str());
    const json& base_ds = runs.front().manifest.at("config").at("dataset");
    for (const auto& run : runs)
        if (run.manifest.at("config").at("dataset") != base_ds)
            fgl::fail_config("compare: %s and %s were run on different datasets",
                             runs.front().dir.c_str(), run.dir.c_str());

    json cmp;
    cmp["baseline"] = runs.front().dir;
    json rows = json::array();
    json ratios = json::array();
    for (const auto& run : runs) {
        json row;
        row["dir"] = run.dir;
        row["command"] = run.manifest.value("command", "");
        row["reports"] = run.summary.at("reports");
        row["total_bytes"] = run.total_bytes;
        row["modeled_seconds"] = run.modeled_seconds;
        rows.push_back(std::move(row));

        const auto& base = runs.front();
        ratios.push_back({{"dir", run.dir},
                          {"bytes_ratio", ratio_of(run.total_bytes, base.total_bytes)},
                          {"time_ratio", ratio_of(run.modeled_seconds, base.modeled_seconds)},
                          {"test_acc_ratio", ratio_of(run.test_acc, base.test_acc)}});
    }
    cmp["runs"] = std::move(rows);
    cmp["ratios"] = std::move(ratios);

    s.phase = "report";
    fs::create_directories(s.out_dir);
    const std::string path = (fs::path(s.out_dir) / "compare.json").string();
    std::ofstream out(path, std::ios::binary);
    if (!out) fgl::fail("cannot write %s", path.c_str());
    out << cmp.dump(2) << "\n";
    if (!out) fgl::fail("write failed for %s", path.c_str());
    add_artifact(s, path);
    write_manifest(s, "ok");
    std::printf("compared %zu runs against %s; table in %s\n", runs.size(),
                runs.front().dir.c_str(), path.c_str());
}

std::vector<std::size_t> parse_ns_list(const std::string& text) {
    std::vector<std::size_t> values;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const std::string item = text.substr(pos, comma - pos);
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(item, &used);
            if (used != item.size() || v == 0) throw std::invalid_argument(item);
            values.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            fgl::fail_config("--ns wants comma-separated positive integers, got '%s'",
                             item.c_str());
        }
        pos = comma + 1;
    }
    return values;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"one-shot federated generative learning simulator"};
    app.set_version_flag("--version", fgl::kVersionString);
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::string preset;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--seed", seed, "master seed (overrides the config)");
    app.add_option("--preset", preset, "replace the fl block with a named preset");

    std::string experiment;
    std::string ns_text = "2000,5000,10000";
    auto* run = app.add_subcommand("run", "run one experiment: fgl, fedavg, or centralized");
    run->add_option("experiment", experiment, "experiment name")->required();
    run->add_option("--ns", ns_text, "synthetic sample counts (sweep only)");
    run->fallthrough();

    auto* sweep = app.add_subcommand("sweep", "run fgl across synthetic-data sizes");
    sweep->add_option("--ns", ns_text, "comma-separated synthetic sample counts")
        ->capture_default_str();
    sweep->fallthrough();

    auto* landscape =
        app.add_subcommand("landscape", "loss-landscape slices for fedavg and fgl models");
    landscape->fallthrough();

    auto* compare_comm =
        app.add_subcommand("compare-comm", "communication bytes, fgl vs fedavg");
    compare_comm->fallthrough();

    std::vector<std::string> compare_dirs;
    auto* compare = app.add_subcommand("compare", "tabulate completed runs side by side");
    compare->add_option("dirs", compare_dirs, "run directories")->expected(-1);
    compare->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }

    Session s;
    s.out_dir = out_dir;
    try {
        if (compare->parsed()) {
            s.command = "compare";
            cmd_compare(s, compare_dirs);
            return 0;
        }

        s.phase = "config";
        s.cfg = config_path.empty() ? fgl::parse_config(json::object())
                                    : fgl::load_config(config_path);
        if (!preset.empty()) {
            s.cfg.fl = fgl::fl_preset(preset);
            s.cfg.preset = preset;
        }
        if (seed) {
            s.cfg.seed = *seed;
            s.cfg.partition.seed = *seed;
        }
        s.have_config = true;

        if (run->parsed()) {
            s.command = "run " + experiment;
            if (experiment == "sweep")
                cmd_sweep(s, parse_ns_list(ns_text));
            else if (experiment == "landscape")
                cmd_landscape(s);
            else if (experiment == "compare-comm")
                cmd_compare_comm(s);
            else
                cmd_run(s, experiment);
        } else if (sweep->parsed()) {
            s.command = "sweep";
            cmd_sweep(s, parse_ns_list(ns_text));
        } else if (landscape->parsed()) {
            s.command = "landscape";
            cmd_landscape(s);
        } else if (compare_comm->parsed()) {
            s.command = "compare-comm";
            cmd_compare_comm(s);
        }
        return 0;
    } catch (const fgl::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        write_manifest(s, "failed", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        write_manifest(s, "failed", e.what());
        return 2;
    }
}

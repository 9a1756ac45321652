#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fgl/core.hpp"
#include "fgl/dataset.hpp"
#include "fgl/netsim.hpp"
#include "fgl/network.hpp"

namespace fgl {

// Model quality measurements and the report files the simulator emits.

struct Evaluation {
    double accuracy = 0.0;
    double mean_loss = 0.0;
    std::size_t correct = 0;
    std::size_t total = 0;
};

// Full-dataset accuracy and cross-entropy, computed in chunks so image
// datasets do not blow up activation memory. Argmax ties go to the lowest
// class index.
inline Evaluation evaluate(const NetworkSpec& net, const ParamVector& params,
                           const LabeledDataset& data, std::size_t chunk = 256) {
    if (chunk == 0) fail("evaluate: chunk must be >= 1");
    data.validate();
    Evaluation ev;
    ev.total = data.labels.size();
    if (ev.total == 0) fail("evaluate: empty dataset");

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < ev.total; start += chunk) {
        const std::size_t stop = std::min(start + chunk, ev.total);
        const Tensor batch = data.features.slice_rows(start, stop - start);
        const Tensor probs = forward(net, params, batch);
        const std::size_t classes = probs.dim(1);
        for (std::size_t r = 0; r < stop - start; ++r) {
            const double* row = probs.row(r);
            std::size_t arg = 0;
            for (std::size_t c = 1; c < classes; ++c)
                if (row[c] > row[arg]) arg = c;
            const int label = data.labels[start + r];
            if (static_cast<std::size_t>(label) == arg) ev.correct++;
            loss_sum -= std::log(std::max(row[label], 1e-300));
        }
    }
    ev.accuracy = static_cast<double>(ev.correct) / static_cast<double>(ev.total);
    ev.mean_loss = loss_sum / static_cast<double>(ev.total);
    return ev;
}

// Empirical 1-D Wasserstein-1 distance via the quantile coupling. Handles
// unequal sample counts.
inline double wasserstein1(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) fail("wasserstein1: empty sample set");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double u = 0.0, w = 0.0;
    while (i < a.size() && j < b.size()) {
        const double ua = static_cast<double>(i + 1) / na;
        const double ub = static_cast<double>(j + 1) / nb;
        const double next = std::min(ua, ub);
        w += std::abs(a[i] - b[j]) * (next - u);
        u = next;
        if (ua == next) i++;
        if (ub == next) j++;
    }
    return w;
}

// ---------------------------------------------------------------------------
// Loss landscape slices
//
// Two random directions, each rescaled per parameter block so its block norms
// match the model's (filter normalization), then orthogonalized against each
// other over the full vector. The loss is evaluated on a (grid x grid) lattice
// of offsets in the plane they span.
// ---------------------------------------------------------------------------

struct LossLandscapeSlice {
    double radius = 0.0;
    std::size_t grid = 0;
    std::vector<double> offsets;   // per-axis offsets, length grid
    std::vector<double> losses;    // row-major grid x grid, [i * grid + j]
    std::vector<double> direction1;
    std::vector<double> direction2;
    double center_loss = 0.0;

    double loss_at(std::size_t i, std::size_t j) const { return losses[i * grid + j]; }
    double mean_loss() const {
        double total = 0.0;
        for (double v : losses) total += v;
        return total / static_cast<double>(losses.size());
    }
};

namespace detail {

inline double norm(const double* v, std::size_t n) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += v[i] * v[i];
    return std::sqrt(total);
}

// Rescales each layout block of dir to carry the same norm as the matching
// block of params. Blocks where the model itself is zero stay zero.
inline void filter_normalize(std::vector<double>& dir, const ParamVector& params) {
    for (const auto& entry : params.layout) {
        if (entry.length == 0) continue;
        const double pn = norm(params.values.data() + entry.offset, entry.length);
        const double dn = norm(dir.data() + entry.offset, entry.length);
        const double scale = dn > 0.0 ? pn / dn : 0.0;
        for (std::size_t i = 0; i < entry.length; ++i) dir[entry.offset + i] *= scale;
    }
}

} // namespace detail

inline LossLandscapeSlice landscape_with_directions(const NetworkSpec& net,
                                                    const ParamVector& params,
                                                    const LabeledDataset& data,
                                                    std::vector<double> d1,
                                                    std::vector<double> d2, double radius,
                                                    std::size_t grid) {
    if (grid < 3 || grid % 2 == 0)
        fail("loss landscape: grid must be odd and >= 3, got %zu", grid);
    if (!(radius > 0.0)) fail("loss landscape: radius must be > 0");
    const std::size_t n = params.values.size();
    if (d1.size() != n || d2.size() != n)
        fail("loss landscape: direction length mismatch (%zu and %zu vs %zu params)", d1.size(),
             d2.size(), n);

    // Gram-Schmidt: strip d1's component out of d2, keep d2's original norm.
    double d11 = 0.0, d12 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        d11 += d1[i] * d1[i];
        d12 += d1[i] * d2[i];
    }
    if (!(d11 > 0.0)) fail("loss landscape: first direction is zero");
    const double before = detail::norm(d2.data(), n);
    const double coef = d12 / d11;
    for (std::size_t i = 0; i < n; ++i) d2[i] -= coef * d1[i];
    const double after = detail::norm(d2.data(), n);
    if (!(after > 0.0)) fail("loss landscape: directions are collinear");
    for (std::size_t i = 0; i < n; ++i) d2[i] *= before / after;

    LossLandscapeSlice slice;
    slice.radius = radius;
    slice.grid = grid;
    slice.direction1 = d1;
    slice.direction2 = d2;
    slice.offsets.resize(grid);
    const std::size_t center = (grid - 1) / 2;
    for (std::size_t i = 0; i < grid; ++i)
        slice.offsets[i] = i == center
                               ? 0.0
                               : -radius + 2.0 * radius * static_cast<double>(i) /
                                               static_cast<double>(grid - 1);

    slice.losses.resize(grid * grid);
    ParamVector shifted = params;
    for (std::size_t i = 0; i < grid; ++i) {
        for (std::size_t j = 0; j < grid; ++j) {
            const double a = slice.offsets[i];
            const double b = slice.offsets[j];
            if (i == center && j == center) {
                // The center cell is the unperturbed model, evaluated through
                // the identical code path; no arithmetic may touch it.
                slice.losses[i * grid + j] = loss_only(net, params, data.features, data.labels);
            } else {
                for (std::size_t p = 0; p < n; ++p)
                    shifted.values[p] = params.values[p] + a * d1[p] + b * d2[p];
                slice.losses[i * grid + j] = loss_only(net, shifted, data.features, data.labels);
            }
        }
    }
    slice.center_loss = slice.losses[center * grid + center];
    return slice;
}

inline LossLandscapeSlice loss_landscape(const NetworkSpec& net, const ParamVector& params,
                                         const LabeledDataset& data, double radius,
                                         std::size_t grid, std::uint64_t seed) {
    const std::size_t n = params.values.size();
    std::vector<double> d1(n), d2(n);
    Rng r1(derive_seed(seed, seed_salt::kLandscape, 1));
    Rng r2(derive_seed(seed, seed_salt::kLandscape, 2));
    for (auto& v : d1) v = r1.gaussian();
    for (auto& v : d2) v = r2.gaussian();
    detail::filter_normalize(d1, params);
    detail::filter_normalize(d2, params);
    return landscape_with_directions(net, params, data, std::move(d1), std::move(d2), radius,
                                     grid);
}

inline void save_landscape_csv(const LossLandscapeSlice& slice, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot write %s", path.c_str());
    out << "i,j,offset_i,offset_j,loss\n";
    char buf[96];
    for (std::size_t i = 0; i < slice.grid; ++i)
        for (std::size_t j = 0; j < slice.grid; ++j) {
            std::snprintf(buf, sizeof buf, "%zu,%zu,%.6g,%.6g,%.6g\n", i, j, slice.offsets[i],
                          slice.offsets[j], slice.loss_at(i, j));
            out << buf;
        }
    if (!out) fail("write failed for %s", path.c_str());
}

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

struct EvalReport {
    std::string method;
    std::string dataset;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double mean_loss = 0.0; // test-set cross-entropy

    void validate() const {
        if (train_acc < 0.0 || train_acc > 1.0 || test_acc < 0.0 || test_acc > 1.0)
            fail("eval report %s/%s: accuracies must be in [0, 1]", method.c_str(),
                 dataset.c_str());
        if (method.find(',') != std::string::npos || dataset.find(',') != std::string::npos)
            fail("eval report: commas in method or dataset tags break the table");
    }
};

namespace detail {

// Every float the report files carry goes through this: six significant
// digits, so reruns are byte-identical and diffs stay readable.
inline double sig6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::strtod(buf, nullptr);
}

inline std::string artifact_name(const char* stem, const std::string& tag) {
    if (tag.find('/') != std::string::npos || tag.find(',') != std::string::npos)
        fail("emit_reports: tag \"%s\" cannot name a file", tag.c_str());
    return tag.empty() ? std::string(stem) + ".csv" : std::string(stem) + "-" + tag + ".csv";
}

} // namespace detail

// Writes every table the simulator reports: results.csv (one row per method
// and dataset), one CSV per landscape slice and per ledger, and summary.json
// tying them together. Same inputs, same bytes. Returns the written paths.
inline std::vector<std::string> emit_reports(
    const std::vector<EvalReport>& reports,
    const std::vector<std::pair<std::string, LossLandscapeSlice>>& slices,
    const std::vector<std::pair<std::string, CommLedger>>& ledgers,
    const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fail("cannot create output directory %s: %s", out_dir.c_str(),
                 ec.message().c_str());

    std::vector<std::string> written;
    nlohmann::json summary;
    summary["entries"] = reports.size();

    if (!reports.empty()) {
        const std::string path = (fs::path(out_dir) / "results.csv").string();
        std::ofstream out(path, std::ios::binary);
        if (!out) fail("cannot write %s", path.c_str());
        out << "method,dataset,train_acc,test_acc\n";
        char buf[64];
        for (const auto& r : reports) {
            r.validate();
            std::snprintf(buf, sizeof buf, "%.6g,%.6g\n", r.train_acc, r.test_acc);
            out << r.method << "," << r.dataset << "," << buf;
        }
        if (!out) fail("write failed for %s", path.c_str());
        written.push_back(path);
    }

    nlohmann::json jreports = nlohmann::json::array();
    for (const auto& r : reports) {
        jreports.push_back({{"method", r.method},
                            {"dataset", r.dataset},
                            {"train_acc", detail::sig6(r.train_acc)},
                            {"test_acc", detail::sig6(r.test_acc)},
                            {"mean_loss", detail::sig6(r.mean_loss)}});
    }
    summary["reports"] = std::move(jreports);

    std::set<std::string> used;
    nlohmann::json jslices = nlohmann::json::object();
    for (const auto& [tag, slice] : slices) {
        const std::string name = detail::artifact_name("landscape", tag);
        if (!used.insert(name).second) fail("emit_reports: duplicate artifact %s", name.c_str());
        const std::string path = (fs::path(out_dir) / name).string();
        save_landscape_csv(slice, path);
        written.push_back(path);
        jslices[tag.empty() ? "landscape" : tag] = {
            {"file", name},
            {"grid", slice.grid},
            {"radius", detail::sig6(slice.radius)},
            {"center_loss", detail::sig6(slice.center_loss)},
            {"mean_loss", detail::sig6(slice.mean_loss())}};
    }
    summary["landscapes"] = std::move(jslices);

    nlohmann::json jledgers = nlohmann::json::object();
    for (const auto& [tag, ledger] : ledgers) {
        const std::string name = detail::artifact_name("ledger", tag);
        if (!used.insert(name).second) fail("emit_reports: duplicate artifact %s", name.c_str());
        const std::string path = (fs::path(out_dir) / name).string();
        save_ledger_csv(ledger, path);
        written.push_back(path);
        jledgers[tag.empty() ? "ledger" : tag] = {
            {"file", name},
            {"messages", ledger.entries.size()},
            {"total_bytes", ledger.total_bytes()},
            {"uplink_bytes", ledger.total_bytes(Direction::Uplink)},
            {"downlink_bytes", ledger.total_bytes(Direction::Downlink)}};
    }
    summary["ledgers"] = std::move(jledgers);

    const std::string spath = (fs::path(out_dir) / "summary.json").string();
    std::ofstream sout(spath, std::ios::binary);
    if (!sout) fail("cannot write %s", spath.c_str());
    sout << summary.dump(2) << "\n";
    if (!sout) fail("write failed for %s", spath.c_str());
    written.push_back(spath);
    return written;
}

} // namespace fgl

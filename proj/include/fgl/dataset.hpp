#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fgl/core.hpp"
#include "fgl/tensor.hpp"

namespace fgl {

// ---------------------------------------------------------------------------
// Labeled data
// ---------------------------------------------------------------------------

struct LabeledDataset {
    Tensor features;               // N x d or N x H x W x C
    std::vector<int> labels;       // N entries in [0, num_classes)
    std::size_t num_classes = 0;
    std::vector<std::string> class_names; // descriptors, size num_classes

    std::size_t size() const { return labels.size(); }

    void validate() const {
        if (features.rows() != labels.size())
            fail("dataset: %zu feature rows vs %zu labels", features.rows(), labels.size());
        if (num_classes == 0) fail("dataset: num_classes must be positive");
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
                fail("dataset: label %d at row %zu out of range [0, %zu)", labels[i], i,
                     num_classes);
        if (class_names.size() != num_classes)
            fail("dataset: %zu class names for %zu classes", class_names.size(), num_classes);
    }

    std::vector<std::size_t> label_histogram() const {
        std::vector<std::size_t> counts(num_classes, 0);
        for (int y : labels) counts[static_cast<std::size_t>(y)]++;
        return counts;
    }
};

inline std::vector<std::string> default_class_names(std::size_t classes) {
    std::vector<std::string> names;
    names.reserve(classes);
    for (std::size_t c = 0; c < classes; ++c)
        names.push_back("class_" + std::to_string(c));
    return names;
}

// ---------------------------------------------------------------------------
// Gaussian-mixture ground truth
// ---------------------------------------------------------------------------

struct GmmComponent {
    double weight = 1.0;
    std::vector<double> mean;
    std::vector<double> var; // diagonal, entries > 0
};

struct GmmClass {
    std::vector<GmmComponent> components;
};

struct GmmSpec {
    std::vector<GmmClass> classes;

    std::size_t dim() const {
        for (const auto& cls : classes)
            for (const auto& comp : cls.components) return comp.mean.size();
        return 0;
    }

    void validate() const {
        if (classes.empty()) fail("GmmSpec: no classes");
        const std::size_t d = dim();
        for (std::size_t c = 0; c < classes.size(); ++c) {
            const auto& comps = classes[c].components;
            if (comps.empty()) fail("GmmSpec: class %zu has no components", c);
            double wsum = 0.0;
            for (const auto& comp : comps) {
                if (comp.weight < 0.0) fail("GmmSpec: class %zu negative weight", c);
                if (comp.mean.size() != d || comp.var.size() != d)
                    fail("GmmSpec: class %zu component dim mismatch", c);
                for (double v : comp.var)
                    if (!(v > 0.0)) fail("GmmSpec: class %zu has non-positive variance", c);
                wsum += comp.weight;
            }
            if (std::abs(wsum - 1.0) > 1e-12)
                fail("GmmSpec: class %zu weights sum to %.17g, not 1", c, wsum);
        }
    }
};

// Desk-scale default: one component per class, means on a circle, shared
// isotropic variance. Near-unity Bayes accuracy at the default settings.
inline GmmSpec default_gmm_spec(std::size_t classes = 10, std::size_t dim = 2,
                                double radius = 5.0, double sigma2 = 0.25) {
    GmmSpec spec;
    spec.classes.resize(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        GmmComponent comp;
        comp.weight = 1.0;
        comp.mean.assign(dim, 0.0);
        const double angle = 2.0 * 3.14159265358979323846 * static_cast<double>(c) /
                             static_cast<double>(classes);
        comp.mean[0] = radius * std::cos(angle);
        if (dim > 1) comp.mean[1] = radius * std::sin(angle);
        comp.var.assign(dim, sigma2);
        spec.classes[c].components.push_back(std::move(comp));
    }
    return spec;
}

namespace detail {

inline std::size_t pick_weighted(Rng& rng, const std::vector<GmmComponent>& comps) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t j = 0; j < comps.size(); ++j) {
        acc += comps[j].weight;
        if (u < acc) return j;
    }
    return comps.size() - 1;
}

inline void sample_component(Rng& rng, const GmmComponent& comp, double* out) {
    for (std::size_t i = 0; i < comp.mean.size(); ++i)
        out[i] = comp.mean[i] + std::sqrt(comp.var[i]) * rng.gaussian();
}

} // namespace detail

// Samples n labeled points from the mixture. Labels are drawn iid uniform
// over classes unless explicit per-class counts are given (which must sum
// to n). Deterministic per seed.
inline LabeledDataset gen_gmm(const GmmSpec& spec, std::size_t n, std::uint64_t seed,
                              const std::vector<std::size_t>& per_class_counts = {}) {
    spec.validate();
    if (n == 0) fail("gen_gmm: n must be positive");
    const std::size_t classes = spec.classes.size();
    const std::size_t d = spec.dim();

    std::vector<int> labels;
    labels.reserve(n);
    Rng rng(seed);
    if (per_class_counts.empty()) {
        for (std::size_t i = 0; i < n; ++i)
            labels.push_back(static_cast<int>(rng.below(classes)));
    } else {
        if (per_class_counts.size() != classes)
            fail("gen_gmm: %zu per-class counts for %zu classes", per_class_counts.size(),
                 classes);
        std::size_t total = 0;
        for (std::size_t c = 0; c < classes; ++c) {
            for (std::size_t i = 0; i < per_class_counts[c]; ++i)
                labels.push_back(static_cast<int>(c));
            total += per_class_counts[c];
        }
        if (total != n) fail("gen_gmm: per-class counts sum to %zu, not %zu", total, n);
    }

    LabeledDataset data;
    data.features = Tensor::zeros({n, d});
    data.labels = std::move(labels);
    data.num_classes = classes;
    data.class_names = default_class_names(classes);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& comps = spec.classes[static_cast<std::size_t>(data.labels[i])].components;
        const std::size_t j = detail::pick_weighted(rng, comps);
        detail::sample_component(rng, comps[j], data.features.row(i));
    }
    return data;
}

// ---------------------------------------------------------------------------
// CSV (2-D and general flat feature vectors): header f0,f1,...,label
// ---------------------------------------------------------------------------

inline LabeledDataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("load_csv: cannot open %s", path.c_str());
    std::string line;
    if (!std::getline(in, line)) fail("load_csv: %s is empty", path.c_str());
    std::size_t dims = 0;
    {
        std::stringstream header(line);
        std::string col;
        std::vector<std::string> cols;
        while (std::getline(header, col, ',')) cols.push_back(col);
        if (cols.size() < 2 || cols.back() != "label")
            fail("load_csv: %s: expected header f0,...,label", path.c_str());
        for (std::size_t i = 0; i + 1 < cols.size(); ++i)
            if (cols[i] != "f" + std::to_string(i))
                fail("load_csv: %s: unexpected column '%s'", path.c_str(), cols[i].c_str());
        dims = cols.size() - 1;
    }
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++row;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            if (col < dims)
                values.push_back(std::stod(cell));
            else
                labels.push_back(std::stoi(cell));
            ++col;
        }
        if (col != dims + 1)
            fail("load_csv: %s row %zu: expected %zu cells, got %zu", path.c_str(), row,
                 dims + 1, col);
    }
    if (labels.empty()) fail("load_csv: %s has no data rows", path.c_str());
    int max_label = 0;
    for (int y : labels) {
        if (y < 0) fail("load_csv: negative label");
        max_label = std::max(max_label, y);
    }
    LabeledDataset data;
    data.features = Tensor({labels.size(), dims}, std::move(values));
    data.labels = std::move(labels);
    data.num_classes = static_cast<std::size_t>(max_label) + 1;
    data.class_names = default_class_names(data.num_classes);
    data.validate();
    return data;
}

inline void save_csv(const LabeledDataset& data, const std::string& path) {
    if (data.features.rank() != 2)
        fail("save_csv: only flat feature tensors are supported");
    std::ofstream out(path);
    if (!out) fail("save_csv: cannot open %s", path.c_str());
    const std::size_t d = data.features.dim(1);
    for (std::size_t i = 0; i < d; ++i) out << "f" << i << ",";
    out << "label\n";
    char buf[32];
    for (std::size_t r = 0; r < data.size(); ++r) {
        const double* row = data.features.row(r);
        for (std::size_t i = 0; i < d; ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", row[i]);
            out << buf << ",";
        }
        out << data.labels[r] << "\n";
    }
    if (!out) fail("save_csv: write to %s failed", path.c_str());
}

} // namespace fgl

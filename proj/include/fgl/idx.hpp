#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "fgl/core.hpp"
#include "fgl/dataset.hpp"

namespace fgl {

// IDX image/label container (the MNIST family format). Big-endian headers:
// images carry magic 0x00000803 and dims [N, H, W]; labels carry 0x00000801
// and [N]. Pixels are u8 and are scaled to [0, 1] on load.

namespace detail {

inline std::uint32_t read_be_u32(std::ifstream& in, const std::string& path,
                                 std::size_t offset) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in)
        fail("%s: truncated at byte offset %zu (expected 4 more header bytes)", path.c_str(),
             offset);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_be_u32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace detail

inline LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) fail("load_idx: cannot open %s", images_path.c_str());
    const std::uint32_t img_magic = detail::read_be_u32(img, images_path, 0);
    if (img_magic != 0x00000803u)
        fail("%s: bad image magic 0x%08x at byte offset 0 (want 0x00000803)",
             images_path.c_str(), img_magic);
    const std::uint32_t n = detail::read_be_u32(img, images_path, 4);
    const std::uint32_t h = detail::read_be_u32(img, images_path, 8);
    const std::uint32_t w = detail::read_be_u32(img, images_path, 12);

    std::vector<unsigned char> pixels(static_cast<std::size_t>(n) * h * w);
    img.read(reinterpret_cast<char*>(pixels.data()),
             static_cast<std::streamsize>(pixels.size()));
    if (static_cast<std::size_t>(img.gcount()) != pixels.size())
        fail("%s: truncated at byte offset %zu (expected %zu pixel bytes, got %zu)",
             images_path.c_str(), std::size_t(16) + static_cast<std::size_t>(img.gcount()),
             pixels.size(), static_cast<std::size_t>(img.gcount()));

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) fail("load_idx: cannot open %s", labels_path.c_str());
    const std::uint32_t lab_magic = detail::read_be_u32(lab, labels_path, 0);
    if (lab_magic != 0x00000801u)
        fail("%s: bad label magic 0x%08x at byte offset 0 (want 0x00000801)",
             labels_path.c_str(), lab_magic);
    const std::uint32_t ln = detail::read_be_u32(lab, labels_path, 4);
    if (ln != n)
        fail("load_idx: %u labels in %s but %u images in %s", ln, labels_path.c_str(), n,
             images_path.c_str());
    std::vector<unsigned char> raw_labels(n);
    lab.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(lab.gcount()) != raw_labels.size())
        fail("%s: truncated at byte offset %zu (expected %u label bytes)", labels_path.c_str(),
             std::size_t(8) + static_cast<std::size_t>(lab.gcount()), n);

    LabeledDataset data;
    data.features = Tensor::zeros({n, h, w, 1});
    for (std::size_t i = 0; i < pixels.size(); ++i)
        data.features.values[i] = static_cast<double>(pixels[i]) / 255.0;
    data.labels.resize(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        data.labels[i] = static_cast<int>(raw_labels[i]);
        max_label = std::max(max_label, data.labels[i]);
    }
    data.num_classes = static_cast<std::size_t>(max_label) + 1;
    data.class_names = default_class_names(data.num_classes);
    data.validate();
    return data;
}

// Writes features (values expected in [0, 1], quantized to u8) and labels.
// Round-trips through load_idx up to that quantization.
inline void write_idx(const LabeledDataset& data, const std::string& images_path,
                      const std::string& labels_path) {
    if (data.features.rank() != 4)
        fail("write_idx: features must be N x H x W x 1, got rank %zu", data.features.rank());
    if (data.features.dim(3) != 1) fail("write_idx: only single-channel images");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) fail("write_idx: cannot open %s", images_path.c_str());
    detail::write_be_u32(img, 0x00000803u);
    detail::write_be_u32(img, static_cast<std::uint32_t>(data.features.dim(0)));
    detail::write_be_u32(img, static_cast<std::uint32_t>(data.features.dim(1)));
    detail::write_be_u32(img, static_cast<std::uint32_t>(data.features.dim(2)));
    for (double v : data.features.values) {
        const double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        const auto byte = static_cast<unsigned char>(clamped * 255.0 + 0.5);
        img.write(reinterpret_cast<const char*>(&byte), 1);
    }
    if (!img) fail("write_idx: write to %s failed", images_path.c_str());

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) fail("write_idx: cannot open %s", labels_path.c_str());
    detail::write_be_u32(lab, 0x00000801u);
    detail::write_be_u32(lab, static_cast<std::uint32_t>(data.labels.size()));
    for (int y : data.labels) {
        const auto byte = static_cast<unsigned char>(y);
        lab.write(reinterpret_cast<const char*>(&byte), 1);
    }
    if (!lab) fail("write_idx: write to %s failed", labels_path.c_str());
}

} // namespace fgl

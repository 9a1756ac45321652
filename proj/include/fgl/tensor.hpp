#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "fgl/core.hpp"

namespace fgl {

// Dense row-major tensor of doubles. Plain value type; shape is a list of
// positive dims and values.size() always equals their product.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    Tensor() = default;

    Tensor(std::vector<std::size_t> s, std::vector<double> v)
        : shape(std::move(s)), values(std::move(v)) {
        if (element_count(shape) != values.size())
            fail("Tensor: %zu values do not fill shape of %zu elements",
                 values.size(), element_count(shape));
    }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> shape) {
        const std::size_t n = element_count(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0));
    }

    std::size_t size() const { return values.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape[i]; }

    // Leading dim, i.e. the batch/sample count for dataset tensors.
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }

    // Elements per leading-dim slice.
    std::size_t row_size() const {
        if (shape.empty()) return 0;
        std::size_t n = 1;
        for (std::size_t i = 1; i < shape.size(); ++i) n *= shape[i];
        return n;
    }

    double* row(std::size_t r) { return values.data() + r * row_size(); }
    const double* row(std::size_t r) const { return values.data() + r * row_size(); }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // Rows [first, first+count) as a new tensor with the same trailing dims.
    Tensor slice_rows(std::size_t first, std::size_t count) const {
        const std::size_t rs = row_size();
        std::vector<std::size_t> s = shape;
        s[0] = count;
        std::vector<double> v(values.begin() + static_cast<std::ptrdiff_t>(first * rs),
                              values.begin() + static_cast<std::ptrdiff_t>((first + count) * rs));
        return Tensor(std::move(s), std::move(v));
    }

    // New tensor whose rows are values[index[i]]'s rows, in index order.
    Tensor gather_rows(const std::vector<std::size_t>& index) const {
        const std::size_t rs = row_size();
        std::vector<std::size_t> s = shape;
        s[0] = index.size();
        std::vector<double> v;
        v.reserve(index.size() * rs);
        for (std::size_t i : index) {
            const double* src = row(i);
            v.insert(v.end(), src, src + rs);
        }
        return Tensor(std::move(s), std::move(v));
    }
};

} // namespace fgl

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fgl/core.hpp"
#include "fgl/tensor.hpp"

namespace fgl {

// ---------------------------------------------------------------------------
// Network description
// ---------------------------------------------------------------------------

enum class LayerKind { Affine, Conv2D, ReLU, Flatten, SoftmaxCE };

inline const char* layer_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Affine: return "Affine";
        case LayerKind::Conv2D: return "Conv2D";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::Flatten: return "Flatten";
        case LayerKind::SoftmaxCE: return "SoftmaxCE";
    }
    return "?";
}

struct LayerSpec {
    LayerKind kind;
    std::size_t in = 0, out = 0;                                  // Affine
    std::size_t in_channels = 0, out_channels = 0;                // Conv2D
    std::size_t kernel = 0, stride = 1;                           // Conv2D
    std::size_t classes = 0;                                      // SoftmaxCE
};

inline LayerSpec affine(std::size_t in, std::size_t out) {
    LayerSpec l{LayerKind::Affine};
    l.in = in;
    l.out = out;
    return l;
}

inline LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels,
                        std::size_t kernel, std::size_t stride = 1) {
    LayerSpec l{LayerKind::Conv2D};
    l.in_channels = in_channels;
    l.out_channels = out_channels;
    l.kernel = kernel;
    l.stride = stride;
    return l;
}

inline LayerSpec relu() { return LayerSpec{LayerKind::ReLU}; }
inline LayerSpec flatten() { return LayerSpec{LayerKind::Flatten}; }

inline LayerSpec softmax_ce(std::size_t classes) {
    LayerSpec l{LayerKind::SoftmaxCE};
    l.classes = classes;
    return l;
}

// Ordered layer stack ending in a softmax cross-entropy head. The statically
// checkable composition rules live in validate(); anything that depends on
// the input's spatial dims is checked during the forward pass.
struct NetworkSpec {
    std::vector<LayerSpec> layers;

    std::size_t classes() const { return layers.empty() ? 0 : layers.back().classes; }

    void validate() const {
        if (layers.empty()) fail("NetworkSpec: no layers");
        if (layers.back().kind != LayerKind::SoftmaxCE)
            fail("NetworkSpec: last layer must be SoftmaxCE, got %s",
                 layer_name(layers.back().kind));
        std::size_t width = 0; // 0 = not known yet / not a flat width
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const LayerSpec& l = layers[i];
            switch (l.kind) {
                case LayerKind::Affine:
                    if (l.in == 0 || l.out == 0)
                        fail("layer %zu (Affine): dims must be positive", i);
                    if (width != 0 && width != l.in)
                        fail("layer %zu (Affine): declared in=%zu but previous layer yields "
                             "width %zu", i, l.in, width);
                    width = l.out;
                    break;
                case LayerKind::Conv2D:
                    if (l.in_channels == 0 || l.out_channels == 0 || l.kernel == 0 ||
                        l.stride == 0)
                        fail("layer %zu (Conv2D): dims must be positive", i);
                    width = 0;
                    break;
                case LayerKind::ReLU:
                    break;
                case LayerKind::Flatten:
                    width = 0;
                    break;
                case LayerKind::SoftmaxCE:
                    if (i + 1 != layers.size())
                        fail("layer %zu (SoftmaxCE): head must be the last layer", i);
                    if (l.classes < 2) fail("SoftmaxCE: needs at least 2 classes");
                    if (width != 0 && width != l.classes)
                        fail("layer %zu (SoftmaxCE): %zu classes but previous layer yields "
                             "width %zu", i, l.classes, width);
                    break;
            }
        }
    }

    // Plain MLP: affine/relu pairs over the hidden widths, then the head.
    static NetworkSpec mlp(std::size_t in, const std::vector<std::size_t>& hidden,
                           std::size_t classes) {
        NetworkSpec net;
        std::size_t width = in;
        for (std::size_t h : hidden) {
            net.layers.push_back(affine(width, h));
            net.layers.push_back(relu());
            width = h;
        }
        net.layers.push_back(affine(width, classes));
        net.layers.push_back(softmax_ce(classes));
        net.validate();
        return net;
    }

    // Two conv layers and one fully connected layer, for H x W x C images.
    static NetworkSpec small_cnn(std::size_t height, std::size_t width,
                                 std::size_t channels, std::size_t classes,
                                 std::size_t c1 = 8, std::size_t c2 = 16,
                                 std::size_t kernel = 5, std::size_t stride = 2) {
        auto conv_out = [&](std::size_t d) { return (d - kernel) / stride + 1; };
        const std::size_t h1 = conv_out(height), w1 = conv_out(width);
        const std::size_t h2 = conv_out(h1), w2 = conv_out(w1);
        NetworkSpec net;
        net.layers = {conv2d(channels, c1, kernel, stride), relu(),
                      conv2d(c1, c2, kernel, stride), relu(), flatten(),
                      affine(h2 * w2 * c2, classes), softmax_ce(classes)};
        net.validate();
        return net;
    }
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct LayoutEntry {
    std::size_t offset = 0;
    std::size_t length = 0;
    bool operator==(const LayoutEntry&) const = default;
};

inline std::size_t layer_param_count(const LayerSpec& l) {
    switch (l.kind) {
        case LayerKind::Affine: return l.in * l.out + l.out;
        case LayerKind::Conv2D:
            return l.out_channels * l.kernel * l.kernel * l.in_channels + l.out_channels;
        default: return 0;
    }
}

// Per-layer (offset, length) table; paramless layers get zero-length entries
// so indices line up with the layer list.
inline std::vector<LayoutEntry> param_layout(const NetworkSpec& net) {
    std::vector<LayoutEntry> layout;
    layout.reserve(net.layers.size());
    std::size_t offset = 0;
    for (const LayerSpec& l : net.layers) {
        const std::size_t len = layer_param_count(l);
        layout.push_back({offset, len});
        offset += len;
    }
    return layout;
}

// Flat parameter vector plus the layout that maps slices back to layers.
struct ParamVector {
    std::vector<double> values;
    std::vector<LayoutEntry> layout;

    std::size_t size() const { return values.size(); }

    bool layout_matches(const NetworkSpec& net) const {
        if (layout != param_layout(net)) return false;
        std::size_t total = 0;
        for (const auto& e : layout) total += e.length;
        return total == values.size();
    }
};

// Per-layer uniform init in +-sqrt(6 / (fan_in + fan_out)); biases start at 0.
inline ParamVector init_params(const NetworkSpec& net, std::uint64_t seed) {
    net.validate();
    ParamVector params;
    params.layout = param_layout(net);
    std::size_t total = 0;
    for (const auto& e : params.layout) total += e.length;
    params.values.assign(total, 0.0);
    Rng rng(seed);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        double* p = params.values.data() + params.layout[i].offset;
        if (l.kind == LayerKind::Affine) {
            const double bound = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
            for (std::size_t j = 0; j < l.in * l.out; ++j) p[j] = rng.uniform(-bound, bound);
        } else if (l.kind == LayerKind::Conv2D) {
            const std::size_t fan = l.kernel * l.kernel;
            const double bound =
                std::sqrt(6.0 / static_cast<double>(fan * (l.in_channels + l.out_channels)));
            const std::size_t n = l.out_channels * fan * l.in_channels;
            for (std::size_t j = 0; j < n; ++j) p[j] = rng.uniform(-bound, bound);
        }
    }
    return params;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace detail {

[[noreturn]] inline void layer_fail(std::size_t index, LayerKind kind, const std::string& what) {
    fail("layer %zu (%s): %s", index, layer_name(kind), what.c_str());
}

inline void require_params(const NetworkSpec& net, const ParamVector& params) {
    if (!params.layout_matches(net))
        fail("params do not match the network layout (%zu values)", params.values.size());
}

inline Tensor affine_forward(const LayerSpec& l, const double* p, const Tensor& x,
                             std::size_t index) {
    if (x.rank() != 2)
        layer_fail(index, l.kind,
                   detail::format("expected 2-D input, got rank %zu", x.rank()));
    if (x.dim(1) != l.in)
        layer_fail(index, l.kind,
                   detail::format("input width %zu does not match declared in=%zu",
                                  x.dim(1), l.in));
    const std::size_t n = x.rows();
    const double* w = p;
    const double* b = p + l.in * l.out;
    Tensor y = Tensor::zeros({n, l.out});
    for (std::size_t r = 0; r < n; ++r) {
        const double* xr = x.row(r);
        double* yr = y.row(r);
        for (std::size_t o = 0; o < l.out; ++o) yr[o] = b[o];
        for (std::size_t i = 0; i < l.in; ++i) {
            const double xi = xr[i];
            const double* wrow = w + i * l.out;
            for (std::size_t o = 0; o < l.out; ++o) yr[o] += xi * wrow[o];
        }
    }
    return y;
}

inline void affine_backward(const LayerSpec& l, const double* p, const Tensor& x,
                            const Tensor& dy, double* gp, Tensor& dx) {
    const std::size_t n = x.rows();
    const double* w = p;
    double* gw = gp;
    double* gb = gp + l.in * l.out;
    for (std::size_t r = 0; r < n; ++r) {
        const double* xr = x.row(r);
        const double* dyr = dy.row(r);
        double* dxr = dx.row(r);
        for (std::size_t o = 0; o < l.out; ++o) gb[o] += dyr[o];
        for (std::size_t i = 0; i < l.in; ++i) {
            const double xi = xr[i];
            double* gwrow = gw + i * l.out;
            const double* wrow = w + i * l.out;
            double acc = 0.0;
            for (std::size_t o = 0; o < l.out; ++o) {
                gwrow[o] += xi * dyr[o];
                acc += wrow[o] * dyr[o];
            }
            dxr[i] = acc;
        }
    }
}

struct ConvDims {
    std::size_t h, w, ho, wo;
};

inline ConvDims conv_dims(const LayerSpec& l, const Tensor& x, std::size_t index) {
    if (x.rank() != 4)
        layer_fail(index, l.kind,
                   detail::format("expected 4-D input (N,H,W,C), got rank %zu", x.rank()));
    if (x.dim(3) != l.in_channels)
        layer_fail(index, l.kind,
                   detail::format("input has %zu channels but layer declares %zu",
                                  x.dim(3), l.in_channels));
    if (x.dim(1) < l.kernel || x.dim(2) < l.kernel)
        layer_fail(index, l.kind,
                   detail::format("input %zux%zu smaller than kernel %zu", x.dim(1),
                                  x.dim(2), l.kernel));
    ConvDims d;
    d.h = x.dim(1);
    d.w = x.dim(2);
    d.ho = (d.h - l.kernel) / l.stride + 1;
    d.wo = (d.w - l.kernel) / l.stride + 1;
    return d;
}

// Valid padding, no dilation. Weights are laid out [out_ch][ky][kx][in_ch].
inline Tensor conv_forward(const LayerSpec& l, const double* p, const Tensor& x,
                           std::size_t index) {
    const ConvDims d = conv_dims(l, x, index);
    const std::size_t n = x.rows(), ci = l.in_channels, co = l.out_channels, k = l.kernel;
    const double* w = p;
    const double* b = p + co * k * k * ci;
    Tensor y = Tensor::zeros({n, d.ho, d.wo, co});
    for (std::size_t img = 0; img < n; ++img) {
        const double* xim = x.row(img);
        double* yim = y.row(img);
        for (std::size_t oy = 0; oy < d.ho; ++oy)
            for (std::size_t ox = 0; ox < d.wo; ++ox) {
                double* ypix = yim + (oy * d.wo + ox) * co;
                for (std::size_t o = 0; o < co; ++o) ypix[o] = b[o];
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const double* xrow = xim + ((oy * l.stride + ky) * d.w + ox * l.stride) * ci;
                    for (std::size_t kx = 0; kx < k; ++kx)
                        for (std::size_t c = 0; c < ci; ++c) {
                            const double xv = xrow[kx * ci + c];
                            const double* wv = w + ((ky * k + kx) * ci + c);
                            for (std::size_t o = 0; o < co; ++o)
                                ypix[o] += xv * wv[o * k * k * ci];
                        }
                }
            }
    }
    return y;
}

inline void conv_backward(const LayerSpec& l, const double* p, const Tensor& x,
                          const Tensor& dy, double* gp, Tensor& dx) {
    const std::size_t n = x.rows(), ci = l.in_channels, co = l.out_channels, k = l.kernel;
    const std::size_t w = x.dim(2);
    const std::size_t ho = dy.dim(1), wo = dy.dim(2);
    const double* wt = p;
    double* gw = gp;
    double* gb = gp + co * k * k * ci;
    for (std::size_t img = 0; img < n; ++img) {
        const double* xim = x.row(img);
        const double* dyim = dy.row(img);
        double* dxim = dx.row(img);
        for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
                const double* dpix = dyim + (oy * wo + ox) * co;
                for (std::size_t o = 0; o < co; ++o) gb[o] += dpix[o];
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const std::size_t iy = oy * l.stride + ky;
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const std::size_t ix = ox * l.stride + kx;
                        const double* xpix = xim + (iy * w + ix) * ci;
                        double* dxpix = dxim + (iy * w + ix) * ci;
                        for (std::size_t c = 0; c < ci; ++c) {
                            const std::size_t widx = (ky * k + kx) * ci + c;
                            double acc = 0.0;
                            for (std::size_t o = 0; o < co; ++o) {
                                const std::size_t oidx = o * k * k * ci + widx;
                                gw[oidx] += xpix[c] * dpix[o];
                                acc += wt[oidx] * dpix[o];
                            }
                            dxpix[c] += acc;
                        }
                    }
                }
            }
    }
}

// Numerically stable row softmax (max subtraction).
inline Tensor softmax_rows(const Tensor& logits) {
    Tensor probs = logits;
    const std::size_t c = logits.rank() == 2 ? logits.dim(1) : 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        double* row = probs.row(r);
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < c; ++j) row[j] /= sum;
    }
    return probs;
}

struct ForwardTrace {
    std::vector<Tensor> inputs; // inputs[i] = input to layer i; back() = logits
};

// Runs the stack up to the head and returns the logits; records every layer
// input when a trace is supplied.
inline Tensor forward_to_logits(const NetworkSpec& net, const ParamVector& params,
                                const Tensor& batch, ForwardTrace* trace) {
    require_params(net, params);
    Tensor x = batch;
    for (std::size_t i = 0; i + 1 < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        const double* p = params.values.data() + params.layout[i].offset;
        Tensor y;
        switch (l.kind) {
            case LayerKind::Affine: y = affine_forward(l, p, x, i); break;
            case LayerKind::Conv2D: y = conv_forward(l, p, x, i); break;
            case LayerKind::ReLU: {
                y = x;
                for (double& v : y.values) v = v > 0.0 ? v : 0.0;
                break;
            }
            case LayerKind::Flatten: {
                if (x.rank() < 2)
                    layer_fail(i, l.kind, "expected input with a batch dim");
                y = Tensor({x.rows(), x.row_size()}, x.values);
                break;
            }
            case LayerKind::SoftmaxCE:
                layer_fail(i, l.kind, "head before end of stack");
        }
        if (trace) trace->inputs.push_back(std::move(x));
        x = std::move(y);
    }
    const LayerSpec& head = net.layers.back();
    if (x.rank() != 2 || x.dim(1) != head.classes)
        layer_fail(net.layers.size() - 1, head.kind,
                   detail::format("expected %zu logits per row, got width %zu",
                                  head.classes, x.rank() == 2 ? x.dim(1) : 0));
    if (trace) trace->inputs.push_back(x);
    return x;
}

inline void check_labels(const std::vector<int>& labels, std::size_t n, std::size_t classes) {
    if (labels.size() != n)
        fail("%zu labels for a batch of %zu samples", labels.size(), n);
    for (std::size_t i = 0; i < n; ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
            fail("sample %zu: label %d out of range [0, %zu)", i, labels[i], classes);
}

} // namespace detail

// Class-probability rows for a batch; each row is non-negative and sums to 1.
inline Tensor forward(const NetworkSpec& net, const ParamVector& params, const Tensor& batch) {
    return detail::softmax_rows(detail::forward_to_logits(net, params, batch, nullptr));
}

// Mean cross-entropy of the batch without gradients.
inline double loss_only(const NetworkSpec& net, const ParamVector& params, const Tensor& batch,
                        const std::vector<int>& labels) {
    if (batch.rows() == 0) fail("loss: batch must be nonempty");
    const Tensor logits = detail::forward_to_logits(net, params, batch, nullptr);
    detail::check_labels(labels, batch.rows(), net.classes());
    const std::size_t c = net.classes();
    double loss = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const double* row = logits.row(r);
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        loss += std::log(sum) + mx - row[static_cast<std::size_t>(labels[r])];
    }
    return loss / static_cast<double>(logits.rows());
}

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

// Mean cross-entropy and its exact analytic gradient w.r.t. every parameter.
inline LossGrad loss_and_grad(const NetworkSpec& net, const ParamVector& params,
                              const Tensor& batch, const std::vector<int>& labels) {
    if (batch.rows() == 0) fail("loss_and_grad: batch must be nonempty");
    detail::ForwardTrace trace;
    const Tensor logits = detail::forward_to_logits(net, params, batch, &trace);
    detail::check_labels(labels, batch.rows(), net.classes());

    const std::size_t n = batch.rows();
    const std::size_t c = net.classes();
    LossGrad result;
    result.grad.assign(params.size(), 0.0);

    double loss = 0.0;
    Tensor dx = detail::softmax_rows(logits); // becomes (probs - onehot)/n
    for (std::size_t r = 0; r < n; ++r) {
        const double* lrow = logits.row(r);
        double mx = lrow[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, lrow[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(lrow[j] - mx);
        const auto label = static_cast<std::size_t>(labels[r]);
        loss += std::log(sum) + mx - lrow[label];
        double* drow = dx.row(r);
        drow[label] -= 1.0;
        for (std::size_t j = 0; j < c; ++j) drow[j] /= static_cast<double>(n);
    }
    result.loss = loss / static_cast<double>(n);

    // Walk back through the stack, skipping the head (dx already holds its
    // gradient w.r.t. the logits).
    for (std::size_t idx = net.layers.size() - 1; idx-- > 0;) {
        const LayerSpec& l = net.layers[idx];
        const Tensor& x = trace.inputs[idx];
        const double* p = params.values.data() + params.layout[idx].offset;
        double* gp = result.grad.data() + params.layout[idx].offset;
        Tensor dprev;
        switch (l.kind) {
            case LayerKind::Affine:
                dprev = Tensor::zeros(x.shape);
                detail::affine_backward(l, p, x, dx, gp, dprev);
                break;
            case LayerKind::Conv2D:
                dprev = Tensor::zeros(x.shape);
                detail::conv_backward(l, p, x, dx, gp, dprev);
                break;
            case LayerKind::ReLU:
                dprev = dx;
                for (std::size_t j = 0; j < x.size(); ++j)
                    if (x.values[j] <= 0.0) dprev.values[j] = 0.0;
                break;
            case LayerKind::Flatten:
                dprev = Tensor(x.shape, dx.values);
                break;
            case LayerKind::SoftmaxCE:
                break; // unreachable: head handled above
        }
        dx = std::move(dprev);
    }
    return result;
}

// Central-difference gradient estimate, one coordinate at a time. Test oracle;
// independent of the analytic backward path.
inline std::vector<double> finite_diff_grad(const NetworkSpec& net, const ParamVector& params,
                                            const Tensor& batch, const std::vector<int>& labels,
                                            double eps) {
    if (!(eps > 0.0)) fail("finite_diff_grad: eps must be positive, got %g", eps);
    ParamVector probe = params;
    std::vector<double> grad(params.size(), 0.0);
    for (std::size_t j = 0; j < params.size(); ++j) {
        const double saved = probe.values[j];
        probe.values[j] = saved + eps;
        const double up = loss_only(net, probe, batch, labels);
        probe.values[j] = saved - eps;
        const double down = loss_only(net, probe, batch, labels);
        probe.values[j] = saved;
        grad[j] = (up - down) / (2.0 * eps);
    }
    return grad;
}

} // namespace fgl

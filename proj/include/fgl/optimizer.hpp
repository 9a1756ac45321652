#pragma once

#include <cstddef>
#include <vector>

#include "fgl/core.hpp"
#include "fgl/network.hpp"

namespace fgl {

// SGD with classical momentum: v' = mu*v + g, w' = w - eta*v'.
// One OptimizerState belongs to exactly one training loop at a time.
struct OptimizerState {
    double learning_rate = 0.01;
    double momentum = 0.0;
    std::vector<double> velocity;

    OptimizerState() = default;

    OptimizerState(double eta, double mu, std::size_t param_count)
        : learning_rate(eta), momentum(mu), velocity(param_count, 0.0) {
        if (!(mu >= 0.0 && mu < 1.0)) fail("momentum must be in [0,1), got %g", mu);
    }
};

inline void sgd_step(ParamVector& params, const std::vector<double>& grad,
                     OptimizerState& state) {
    if (params.size() != grad.size() || params.size() != state.velocity.size())
        fail("sgd_step: length mismatch (params %zu, grad %zu, velocity %zu)",
             params.size(), grad.size(), state.velocity.size());
    const double eta = state.learning_rate;
    const double mu = state.momentum;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        state.velocity[i] = mu * state.velocity[i] + grad[i];
        params.values[i] -= eta * state.velocity[i];
    }
}

} // namespace fgl

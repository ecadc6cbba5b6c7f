#include "sanet/adam.hpp"

#include <cmath>
#include <string>

namespace sanet {

void adam_step(const std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state) {
    if (grads.size() != params.size())
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                             std::to_string(grads.size()) + " gradients");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].size() != params[i].numel())
            throw DimensionError("adam_step: gradient " + std::to_string(i) + " does not match " +
                                 params[i].shape().str());
        for (double g : grads[i])
            if (!std::isfinite(g))
                throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(i));
    }
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.numel(), 0.0);
            state.v.emplace_back(p.numel(), 0.0);
        }
    } else if (state.m.size() != params.size()) {
        throw DimensionError("adam_step: optimizer state tracks a different parameter list");
    }

    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        auto data = p.data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        const auto& g = grads[i];
        for (std::size_t k = 0; k < data.size(); ++k) {
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
            const double mhat = m[k] / c1;
            const double vhat = v[k] / c2;
            data[k] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

void adam_step(const std::vector<Tensor>& params, AdamState& state) {
    std::vector<std::vector<double>> grads;
    grads.reserve(params.size());
    for (const auto& p : params) {
        if (p.has_grad())
            grads.emplace_back(p.grad().begin(), p.grad().end());
        else
            grads.emplace_back(p.numel(), 0.0);
    }
    adam_step(params, grads, state);
}

}  // namespace sanet

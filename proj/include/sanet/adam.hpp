#pragma once

#include <cstdint>
#include <vector>

#include "sanet/tensor.hpp"

namespace sanet {

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m, v;
};

/// One bias-corrected Adam update using each parameter's accumulated
/// gradient (missing gradient = zero). Rejects the whole step with
/// NumericError if any gradient entry is non-finite.
void adam_step(const std::vector<Tensor>& params, AdamState& state);

/// Same update with explicitly supplied gradients (one buffer per parameter).
void adam_step(const std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state);

}  // namespace sanet

#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "sanet/autograd.hpp"
#include "sanet/ops.hpp"
#include "sanet/parameters.hpp"

namespace testutil {

using sanet::Shape;
using sanet::Tensor;

inline Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(s.numel());
    for (double& x : v) x = u(rng);
    return Tensor(std::move(s), std::move(v));
}

inline Tensor random_param(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = random_tensor(std::move(s), rng, lo, hi);
    t.set_requires_grad(true);
    return t;
}

/// Fixed random weighting so non-scalar outputs can be checked through a scalar.
inline Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
    std::mt19937_64 rng(seed);
    Tensor w = random_tensor(y.shape(), rng);
    return sanet::sum(sanet::hadamard(y, w));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline void zero_all(const sanet::ParameterStore& store) {
    for (const Tensor& t : store.tensors()) {
        Tensor h = t;
        for (double& v : h.data()) v = 0.0;
    }
}

inline void jitter_all(const sanet::ParameterStore& store, std::uint64_t seed, double amp = 0.1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-amp, amp);
    for (const Tensor& t : store.tensors()) {
        Tensor h = t;
        for (double& v : h.data()) v += u(rng);
    }
}

}  // namespace testutil

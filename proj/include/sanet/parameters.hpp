// Named parameter registry and initialisers.
#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sanet/tensor.hpp"

namespace sanet {

/// Ordered collection of trainable leaves. Every name is registered once.
class ParameterStore {
public:
    Tensor add(const std::string& name, Tensor value);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    Tensor at(const std::string& name) const;

    std::size_t size() const noexcept { return tensors_.size(); }
    std::size_t scalar_count() const noexcept;
    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::vector<Tensor>& tensors() const noexcept { return tensors_; }

    void zero_grad();

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
    std::map<std::string, std::size_t> index_;
};

/// Scoped view used by blocks to create their parameters.
class ParamBuilder {
public:
    ParamBuilder(ParameterStore& store, std::mt19937_64& rng, std::string prefix = {})
        : store_(&store), rng_(&rng), prefix_(std::move(prefix)) {}

    ParamBuilder child(const std::string& name) const;

    /// N(0, 2 / fan_in) weights.
    Tensor he_normal(const std::string& name, Shape shape, std::size_t fan_in);
    Tensor zeros(const std::string& name, Shape shape);
    Tensor constant(const std::string& name, Shape shape, double value);

    const std::string& prefix() const noexcept { return prefix_; }

private:
    std::string full(const std::string& name) const;

    ParameterStore* store_;
    std::mt19937_64* rng_;
    std::string prefix_;
};

}  // namespace sanet

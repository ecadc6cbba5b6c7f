#include "sanet/parameters.hpp"

#include <cmath>
#include <stdexcept>

namespace sanet {

Tensor ParameterStore::add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw std::logic_error("parameter registered twice: " + name);
    value.set_requires_grad(true);
    index_[name] = tensors_.size();
    names_.push_back(name);
    tensors_.push_back(value);
    return value;
}

Tensor ParameterStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return tensors_[it->second];
}

std::size_t ParameterStore::scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
}

ParamBuilder ParamBuilder::child(const std::string& name) const {
    return ParamBuilder(*store_, *rng_, full(name));
}

std::string ParamBuilder::full(const std::string& name) const {
    return prefix_.empty() ? name : prefix_ + "." + name;
}

Tensor ParamBuilder::he_normal(const std::string& name, Shape shape, std::size_t fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
    std::vector<double> v(shape.numel());
    for (auto& e : v) e = dist(*rng_);
    return store_->add(full(name), Tensor(std::move(shape), std::move(v)));
}

Tensor ParamBuilder::zeros(const std::string& name, Shape shape) {
    return store_->add(full(name), Tensor::zeros(std::move(shape)));
}

Tensor ParamBuilder::constant(const std::string& name, Shape shape, double value) {
    return store_->add(full(name), Tensor::full(std::move(shape), value));
}

}  // namespace sanet

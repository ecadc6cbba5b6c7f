#include "sanet/tensor.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace sanet {

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw DimensionError("shape must have at least one axis");
    for (auto d : dims_)
        if (d == 0) throw DimensionError("shape extents must be >= 1, got " + str());
}

std::size_t Shape::numel() const noexcept {
    std::size_t n = dims_.empty() ? 0 : 1;
    for (auto d : dims_) n *= d;
    return n;
}

std::string Shape::str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(dims_[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<TensorImpl>()) {
    impl_->data.assign(shape.numel(), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<TensorImpl>()) {
    if (values.size() != shape.numel())
        throw DimensionError("tensor of shape " + shape.str() + " needs " +
                             std::to_string(shape.numel()) + " values, got " +
                             std::to_string(values.size()));
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    Tensor t(std::move(shape), std::move(values));
    t.impl_->requires_grad = true;
    return t;
}

Tensor wrap(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }

TensorImpl& Tensor::impl() const {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return *impl_;
}

double Tensor::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape().str());
    return impl().data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    impl().requires_grad = on;
    return *this;
}

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw std::logic_error("tensor has no gradient; run backward first");
    return impl().grad;
}

std::span<double> Tensor::grad_mut() {
    impl().ensure_grad();
    return impl().grad;
}

void Tensor::zero_grad() {
    auto& g = impl().grad;
    std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::clone() const {
    Tensor t(shape(), impl().data);
    t.impl_->requires_grad = impl().requires_grad;
    return t;
}

Tensor Tensor::reshaped(Shape s) const {
    if (s.numel() != numel())
        throw DimensionError("cannot reshape " + shape().str() + " to " + s.str());
    auto impl2 = std::make_shared<TensorImpl>();
    impl2->shape = std::move(s);
    impl2->data = impl().data;
    return Tensor(std::move(impl2));
}

std::string to_debug_string(const Tensor& t) {
    std::ostringstream os;
    const auto& dims = t.shape().dims();
    for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
    os << ";";
    os << std::setprecision(17);
    for (double v : t.data()) os << ' ' << v;
    return os.str();
}

Tensor from_debug_string(const std::string& text) {
    auto semi = text.find(';');
    if (semi == std::string::npos) throw std::invalid_argument("debug tensor: missing ';'");
    std::vector<std::size_t> dims;
    std::istringstream hs(text.substr(0, semi));
    std::string tok;
    while (std::getline(hs, tok, 'x')) dims.push_back(std::stoul(tok));
    std::vector<double> vals;
    std::istringstream vs(text.substr(semi + 1));
    double v;
    while (vs >> v) vals.push_back(v);
    return Tensor(Shape(std::move(dims)), std::move(vals));
}

}  // namespace sanet

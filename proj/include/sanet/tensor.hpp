// Dense tensors with optional gradient buffers.
#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sanet {

/// Raised when operand extents violate an operation's contract.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised on NaN/Inf where a finite value is required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims);
    explicit Shape(std::vector<std::size_t> dims);

    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
    std::size_t numel() const noexcept;
    const std::vector<std::size_t>& dims() const noexcept { return dims_; }

    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;

private:
    std::vector<std::size_t> dims_;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a backward pass touches it
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

/// Handle to shared tensor storage. Copies alias the same buffer; use clone()
/// for a detached deep copy.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, v); }
    /// Leaf that participates in gradient computation.
    static Tensor parameter(Shape shape, std::vector<double> values);

    bool defined() const noexcept { return impl_ != nullptr; }
    const Shape& shape() const { return impl().shape; }
    std::size_t numel() const { return impl().data.size(); }
    std::size_t dim(std::size_t axis) const { return impl().shape[axis]; }

    std::span<double> data() { return impl().data; }
    std::span<const double> data() const { return impl().data; }
    double operator[](std::size_t i) const { return impl().data[i]; }
    double item() const;

    bool requires_grad() const { return impl().requires_grad; }
    Tensor& set_requires_grad(bool on);

    bool has_grad() const { return impl().grad.size() == impl().data.size(); }
    std::span<const double> grad() const;
    std::span<double> grad_mut();
    void zero_grad();

    Tensor clone() const;
    /// Same storage, new extents; element count must match. Not recorded.
    Tensor reshaped(Shape shape) const;

    TensorImpl& impl() const;
    const std::shared_ptr<TensorImpl>& handle() const noexcept { return impl_; }
    bool same_storage(const Tensor& o) const noexcept { return impl_ == o.impl_; }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    friend Tensor wrap(std::shared_ptr<TensorImpl>);

    std::shared_ptr<TensorImpl> impl_;
};

Tensor wrap(std::shared_ptr<TensorImpl> impl);

/// Plain-text dump "d0xd1x...; v0 v1 ..." (row-major, 17 significant digits).
std::string to_debug_string(const Tensor& t);
Tensor from_debug_string(const std::string& text);

}  // namespace sanet

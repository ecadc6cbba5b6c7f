#include "sanet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "sanet/autograd.hpp"

namespace sanet {

namespace {

// Registers `out` as the result of `op` on the active tape. `bw` reads the
// output gradient and accumulates into input gradients.
void record(const char* op, std::initializer_list<Tensor> inputs, Tensor& out,
            std::function<void()> bw) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorImpl>> ins;
    for (const auto& t : inputs)
        if (t.defined()) ins.push_back(t.handle());
    active_tape()->record({op, std::move(ins), out.handle(), std::move(bw)});
}

void record_many(const char* op, const std::vector<Tensor>& inputs, Tensor& out,
                 std::function<void()> bw) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorImpl>> ins;
    for (const auto& t : inputs) ins.push_back(t.handle());
    active_tape()->record({op, std::move(ins), out.handle(), std::move(bw)});
}

// Gradient buffer of an input, or nullptr when it does not take gradients.
double* grad_of(TensorImpl* p) {
    if (!p || !p->requires_grad) return nullptr;
    p->ensure_grad();
    return p->grad.data();
}

TensorImpl* raw(const Tensor& t) { return t.defined() ? t.handle().get() : nullptr; }

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
    throw DimensionError(op + ": incompatible shapes " + a.str() + " and " + b.str());
}

void require_rank(const std::string& op, const Tensor& t, std::size_t rank) {
    if (t.shape().rank() != rank)
        throw DimensionError(op + ": expected rank " + std::to_string(rank) + ", got " +
                             t.shape().str());
}

enum class Bin { add, sub, mul, div };

Tensor binary(const Tensor& a, const Tensor& b, Bin kind, const char* name) {
    const bool same = a.shape() == b.shape();
    const bool a_scalar = a.numel() == 1, b_scalar = b.numel() == 1;
    if (!same && !a_scalar && !b_scalar) shape_error(name, a.shape(), b.shape());
    const Shape shape = (same || b_scalar) ? a.shape() : b.shape();
    const std::size_t n = shape.numel();
    const std::size_t sa = a_scalar ? 0 : 1, sb = b_scalar ? 0 : 1;

    std::vector<double> v(n);
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double p = x[i * sa], q = y[i * sb];
        switch (kind) {
            case Bin::add: v[i] = p + q; break;
            case Bin::sub: v[i] = p - q; break;
            case Bin::mul: v[i] = p * q; break;
            case Bin::div: v[i] = p / q; break;
        }
    }
    Tensor out(shape, std::move(v));
    if (detail::should_record({&a, &b})) {
        auto* ai = raw(a);
        auto* bi = raw(b);
        auto* o = raw(out);
        record(name, {a, b}, out, [=] {
            double* ga = grad_of(ai);
            double* gb = grad_of(bi);
            const auto& g = o->grad;
            const auto& xa = ai->data;
            const auto& xb = bi->data;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t ia = i * sa, ib = i * sb;
                switch (kind) {
                    case Bin::add:
                        if (ga) ga[ia] += g[i];
                        if (gb) gb[ib] += g[i];
                        break;
                    case Bin::sub:
                        if (ga) ga[ia] += g[i];
                        if (gb) gb[ib] -= g[i];
                        break;
                    case Bin::mul:
                        if (ga) ga[ia] += g[i] * xb[ib];
                        if (gb) gb[ib] += g[i] * xa[ia];
                        break;
                    case Bin::div:
                        if (ga) ga[ia] += g[i] / xb[ib];
                        if (gb) gb[ib] -= g[i] * xa[ia] / (xb[ib] * xb[ib]);
                        break;
                }
            }
        });
    }
    return out;
}

// Elementwise unary op; `deriv(x, y)` gives dy/dx from input and output.
template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, const char* name, Fwd fwd, Deriv deriv) {
    const std::size_t n = x.numel();
    std::vector<double> v(n);
    auto in = x.data();
    for (std::size_t i = 0; i < n; ++i) v[i] = fwd(in[i]);
    Tensor out(x.shape(), std::move(v));
    if (detail::should_record({&x})) {
        auto* xi = raw(x);
        auto* o = raw(out);
        record(name, {x}, out, [=] {
            double* gx = grad_of(xi);
            if (!gx) return;
            for (std::size_t i = 0; i < n; ++i) gx[i] += o->grad[i] * deriv(xi->data[i], o->data[i]);
        });
    }
    return out;
}

// Output index range [lo, hi) such that 0 <= o*stride + off < in_len.
std::pair<long, long> valid_range(long off, long stride, long in_len, long out_len) {
    long lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
    long hi = (in_len - 1 - off) < 0 ? 0 : (in_len - 1 - off) / stride + 1;
    return {std::max(0L, lo), std::min(out_len, std::max(hi, 0L))};
}

std::size_t conv_out_extent(const char* op, std::size_t in, std::size_t pad, std::size_t k_eff,
                            std::size_t stride) {
    if (stride == 0) throw DimensionError(std::string(op) + ": stride must be >= 1");
    if (in + 2 * pad < k_eff)
        throw DimensionError(std::string(op) + ": output extent < 1 (input " + std::to_string(in) +
                             ", pad " + std::to_string(pad) + ", kernel " +
                             std::to_string(k_eff) + ")");
    return (in + 2 * pad - k_eff) / stride + 1;
}

// Dense correlation over (T, H, W) with spatial dilation; conv2d is the T=1 case.
struct ConvSpec {
    std::size_t ci, t, h, w;       // input
    std::size_t co, kt, kh, kw;    // kernel
    std::size_t st, sh, sw;        // strides
    std::size_t pt, ph, pw;        // padding
    std::size_t dh, dw;            // dilation
    std::size_t ot, oh, ow;        // output
};

template <class Visit>
void conv_visit(const ConvSpec& s, Visit&& visit) {
    // visit(co, kernel_index, out_row_offset, in_base, ox_lo, ox_hi); input x index = in_base + ox * stride
    for (std::size_t co = 0; co < s.co; ++co)
        for (std::size_t ci = 0; ci < s.ci; ++ci)
            for (std::size_t kz = 0; kz < s.kt; ++kz) {
                auto [zlo, zhi] = valid_range(long(kz) - long(s.pt), long(s.st), long(s.t), long(s.ot));
                for (std::size_t ky = 0; ky < s.kh; ++ky) {
                    auto [ylo, yhi] = valid_range(long(ky * s.dh) - long(s.ph), long(s.sh), long(s.h), long(s.oh));
                    for (std::size_t kx = 0; kx < s.kw; ++kx) {
                        const long xoff = long(kx * s.dw) - long(s.pw);
                        auto [xlo, xhi] = valid_range(xoff, long(s.sw), long(s.w), long(s.ow));
                        if (xlo >= xhi) continue;
                        const std::size_t kidx = (((co * s.ci + ci) * s.kt + kz) * s.kh + ky) * s.kw + kx;
                        for (long oz = zlo; oz < zhi; ++oz) {
                            const long iz = oz * long(s.st) + long(kz) - long(s.pt);
                            for (long oy = ylo; oy < yhi; ++oy) {
                                const long iy = oy * long(s.sh) + long(ky * s.dh) - long(s.ph);
                                const std::size_t orow = ((co * s.ot + oz) * s.oh + oy) * s.ow;
                                const std::size_t irow = ((ci * s.t + iz) * s.h + iy) * s.w;
                                visit(co, kidx, orow, long(irow) + xoff, xlo, xhi);
                            }
                        }
                    }
                }
            }
}

Tensor conv_general(const char* name, const Tensor& x, const Tensor& kernel, const Tensor& bias,
                    ConvSpec s, const Shape& out_shape) {
    std::vector<double> out(out_shape.numel(), 0.0);
    const std::size_t plane = s.ot * s.oh * s.ow;
    if (bias.defined()) {
        if (bias.shape() != Shape{s.co}) shape_error(name, kernel.shape(), bias.shape());
        for (std::size_t co = 0; co < s.co; ++co)
            std::fill_n(out.begin() + co * plane, plane, bias[co]);
    }
    const double* xd = x.data().data();
    const double* wd = kernel.data().data();
    double* od = out.data();
    const long sw = long(s.sw);
    conv_visit(s, [&](std::size_t, std::size_t kidx, std::size_t orow, long ibase, long lo, long hi) {
        const double wv = wd[kidx];
        double* op = od + orow;
        if (sw == 1) {
            for (long ox = lo; ox < hi; ++ox) op[ox] += wv * xd[ibase + ox];
        } else {
            for (long ox = lo; ox < hi; ++ox) op[ox] += wv * xd[ibase + ox * sw];
        }
    });

    Tensor result(out_shape, std::move(out));
    if (detail::should_record({&x, &kernel, &bias})) {
        auto* xi = raw(x);
        auto* ki = raw(kernel);
        auto* bi = raw(bias);
        auto* o = raw(result);
        record(name, {x, kernel, bias}, result, [=] {
            double* gx = grad_of(xi);
            double* gk = grad_of(ki);
            double* gb = grad_of(bi);
            const double* g = o->grad.data();
            const double* xd2 = xi->data.data();
            const double* wd2 = ki->data.data();
            if (gb)
                for (std::size_t co = 0; co < s.co; ++co)
                    for (std::size_t p = 0; p < plane; ++p) gb[co] += g[co * plane + p];
            if (!gx && !gk) return;
            conv_visit(s, [&](std::size_t, std::size_t kidx, std::size_t orow, long ibase, long lo, long hi) {
                const double* gp = g + orow;
                if (gk) {
                    double acc = 0.0;
                    for (long ox = lo; ox < hi; ++ox) acc += gp[ox] * xd2[ibase + ox * sw];
                    gk[kidx] += acc;
                }
                if (gx) {
                    const double wv = wd2[kidx];
                    for (long ox = lo; ox < hi; ++ox) gx[ibase + ox * sw] += wv * gp[ox];
                }
            });
        });
    }
    return result;
}

}  // namespace

// --- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Bin::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Bin::sub, "sub"); }
Tensor hadamard(const Tensor& a, const Tensor& b) { return binary(a, b, Bin::mul, "hadamard"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, Bin::div, "div"); }

Tensor scale(const Tensor& x, double s) {
    return unary(x, "scale", [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& x, double s) {
    return unary(x, "add_scalar", [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x, "sigmoid",
        [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
    return unary(x, "relu", [](double v) { return v > 0 ? v : 0.0; },
                 [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor log(const Tensor& x) {
    return unary(x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
    return unary(x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    return unary(x, "clamp", [=](double v) { return std::clamp(v, lo, hi); },
                 [=](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor pointwise(const Tensor& x, Pointwise kind, const Tensor& y) {
    switch (kind) {
        case Pointwise::sigmoid: return sigmoid(x);
        case Pointwise::relu: return relu(x);
        case Pointwise::add:
        case Pointwise::hadamard:
            if (!y.defined()) throw std::invalid_argument("pointwise: binary kind needs a second operand");
            if (x.shape() != y.shape()) shape_error("pointwise", x.shape(), y.shape());
            return kind == Pointwise::add ? add(x, y) : hadamard(x, y);
    }
    throw std::invalid_argument("pointwise: unknown kind");
}

// --- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor out = Tensor::scalar(s);
    if (detail::should_record({&x})) {
        auto* xi = raw(x);
        auto* o = raw(out);
        record("sum", {x}, out, [=] {
            double* gx = grad_of(xi);
            if (!gx) return;
            const double g = o->grad[0];
            for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g;
        });
    }
    return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / double(x.numel())); }

// --- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().rank() != 2 || b.shape().rank() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError("matmul: inner extents differ for " + a.shape().str() + " and " +
                             b.shape().str());
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> c(m * n, 0.0);
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            for (std::size_t j = 0; j < n; ++j) c[i * n + j] += av * bd[p * n + j];
        }
    Tensor out(Shape{m, n}, std::move(c));
    if (detail::should_record({&a, &b})) {
        auto* ai = raw(a);
        auto* bi = raw(b);
        auto* o = raw(out);
        record("matmul", {a, b}, out, [=] {
            double* ga = grad_of(ai);
            double* gb = grad_of(bi);
            const auto& g = o->grad;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double av = ai->data[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) {
                        acc += g[i * n + j] * bi->data[p * n + j];
                        if (gb) gb[p * n + j] += av * g[i * n + j];
                    }
                    if (ga) ga[i * k + p] += acc;
                }
        });
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    require_rank("transpose", a, 2);
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> v(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j * m + i] = a[i * n + j];
    Tensor out(Shape{n, m}, std::move(v));
    if (detail::should_record({&a})) {
        auto* ai = raw(a);
        auto* o = raw(out);
        record("transpose", {a}, out, [=] {
            double* ga = grad_of(ai);
            if (!ga) return;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += o->grad[j * m + i];
        });
    }
    return out;
}

Tensor softmax_axis(const Tensor& x, std::size_t axis) {
    const auto& dims = x.shape().dims();
    if (axis >= dims.size())
        throw DimensionError("softmax_axis: axis " + std::to_string(axis) + " invalid for shape " +
                             x.shape().str());
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= dims[i];
    for (std::size_t i = axis + 1; i < dims.size(); ++i) inner *= dims[i];
    const std::size_t len = dims[axis];

    std::vector<double> y(x.numel());
    auto xd = x.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = xd[base];
            for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, xd[base + l * inner]);
            double z = 0.0;
            for (std::size_t l = 0; l < len; ++l) {
                const double e = std::exp(xd[base + l * inner] - mx);
                y[base + l * inner] = e;
                z += e;
            }
            for (std::size_t l = 0; l < len; ++l) y[base + l * inner] /= z;
        }
    Tensor out(x.shape(), std::move(y));
    if (detail::should_record({&x})) {
        auto* xi = raw(x);
        auto* o = raw(out);
        record("softmax", {x}, out, [=] {
            double* gx = grad_of(xi);
            if (!gx) return;
            const auto& yv = o->data;
            const auto& g = o->grad;
            for (std::size_t oo = 0; oo < outer; ++oo)
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = oo * len * inner + in;
                    double dot = 0.0;
                    for (std::size_t l = 0; l < len; ++l) dot += g[base + l * inner] * yv[base + l * inner];
                    for (std::size_t l = 0; l < len; ++l) {
                        const std::size_t i = base + l * inner;
                        gx[i] += yv[i] * (g[i] - dot);
                    }
                }
        });
    }
    return out;
}

Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.shape().rank() != 1 || w.shape().rank() != 2 || w.dim(1) != x.dim(0))
        shape_error("fully_connected", w.shape(), x.shape());
    if (b.shape() != Shape{w.dim(0)}) shape_error("fully_connected", w.shape(), b.shape());
    const Tensor col = reshape(x, Shape{x.dim(0), 1});
    return add(reshape(matmul(w, col), Shape{w.dim(0)}), b);
}

// --- shape -----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
    Tensor out = x.reshaped(std::move(shape));
    if (detail::should_record({&x})) {
        auto* xi = raw(x);
        auto* o = raw(out);
        record("reshape", {x}, out, [=] {
            double* gx = grad_of(xi);
            if (!gx) return;
            for (std::size_t i = 0; i < o->grad.size(); ++i) gx[i] += o->grad[i];
        });
    }
    return out;
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: empty input list");
    const auto& first = xs.front().shape().dims();
    std::vector<std::size_t> tail(first.begin() + 1, first.end());
    std::size_t channels = 0;
    for (const auto& t : xs) {
        const auto& d = t.shape().dims();
        if (d.size() != first.size() || !std::equal(tail.begin(), tail.end(), d.begin() + 1))
            shape_error("concat_channels", xs.front().shape(), t.shape());
        channels += d[0];
    }
    std::vector<std::size_t> dims = first;
    dims[0] = channels;
    std::vector<double> v;
    v.reserve(Shape(dims).numel());
    for (const auto& t : xs) v.insert(v.end(), t.data().begin(), t.data().end());
    Tensor out(Shape(dims), std::move(v));
    if (detail::should_record(xs)) {
        std::vector<TensorImpl*> parts;
        for (const auto& t : xs) parts.push_back(raw(t));
        auto* o = raw(out);
        record_many("concat", xs, out, [=] {
            std::size_t off = 0;
            for (auto* p : parts) {
                const std::size_t n = p->data.size();
                if (double* gp = grad_of(p))
                    for (std::size_t i = 0; i < n; ++i) gp[i] += o->grad[off + i];
                off += n;
            }
        });
    }
    return out;
}

Tensor swap_leading_axes(const Tensor& x) {
    const auto& d = x.shape().dims();
    if (d.size() < 2) throw DimensionError("swap_leading_axes: rank < 2 for " + x.shape().str());
    const std::size_t a = d[0], b = d[1];
    const std::size_t rest = x.numel() / (a * b);
    std::vector<std::size_t> nd = d;
    std::swap(nd[0], nd[1]);
    std::vector<double> v(x.numel());
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j)
            std::copy_n(x.data().begin() + (i * b + j) * rest, rest, v.begin() + (j * a + i) * rest);
    Tensor out(Shape(nd), std::move(v));
    if (detail::should_record({&x})) {
        auto* xi = raw(x);
        auto* o = raw(out);
        record("swap_leading_axes", {x}, out, [=] {
            double* gx = grad_of(xi);
            if (!gx) return;
            for (std::size_t i = 0; i < a; ++i)
                for (std::size_t j = 0; j < b; ++j)
                    for (std::size_t r = 0; r < rest; ++r)
                        gx[(i * b + j) * rest + r] += o->grad[(j * a + i) * rest + r];
        });
    }
    return out;
}

// --- convolution -----------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Conv2dGeometry g) {
    require_rank("conv2d", x, 3);
    require_rank("conv2d", kernel, 4);
    const std::size_t k = kernel.dim(2);
    if (kernel.dim(3) != k || k % 2 == 0)
        throw DimensionError("conv2d: kernel must be square with odd extent, got " + kernel.shape().str());
    if (kernel.dim(1) != x.dim(0)) shape_error("conv2d", x.shape(), kernel.shape());
    if (g.dilation == 0) throw DimensionError("conv2d: dilation must be >= 1");
    const std::size_t keff = g.dilation * (k - 1) + 1;
    ConvSpec s{};
    s.ci = x.dim(0); s.t = 1; s.h = x.dim(1); s.w = x.dim(2);
    s.co = kernel.dim(0); s.kt = 1; s.kh = k; s.kw = k;
    s.st = 1; s.sh = g.stride; s.sw = g.stride;
    s.pt = 0; s.ph = g.pad; s.pw = g.pad;
    s.dh = g.dilation; s.dw = g.dilation;
    s.ot = 1;
    s.oh = conv_out_extent("conv2d", s.h, g.pad, keff, g.stride);
    s.ow = conv_out_extent("conv2d", s.w, g.pad, keff, g.stride);
    return conv_general("conv2d", x, kernel, bias, s, Shape{s.co, s.oh, s.ow});
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride, std::size_t pad) {
    return conv2d(x, kernel, Tensor{}, Conv2dGeometry{stride, pad, 1});
}

Tensor conv3d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Conv3dGeometry g) {
    require_rank("conv3d", x, 4);
    require_rank("conv3d", kernel, 5);
    if (kernel.dim(1) != x.dim(0)) shape_error("conv3d", x.shape(), kernel.shape());
    const std::size_t k = kernel.dim(3);
    if (kernel.dim(4) != k || k % 2 == 0)
        throw DimensionError("conv3d: spatial kernel must be square with odd extent, got " +
                             kernel.shape().str());
    ConvSpec s{};
    s.ci = x.dim(0); s.t = x.dim(1); s.h = x.dim(2); s.w = x.dim(3);
    s.co = kernel.dim(0); s.kt = kernel.dim(2); s.kh = k; s.kw = k;
    s.st = g.stride_t; s.sh = g.stride; s.sw = g.stride;
    s.pt = g.pad_t; s.ph = g.pad; s.pw = g.pad;
    s.dh = 1; s.dw = 1;
    s.ot = conv_out_extent("conv3d", s.t, g.pad_t, s.kt, g.stride_t);
    s.oh = conv_out_extent("conv3d", s.h, g.pad, k, g.stride);
    s.ow = conv_out_extent("conv3d", s.w, g.pad, k, g.stride);
    return conv_general("conv3d", x, kernel, bias, s, Shape{s.co, s.ot, s.oh, s.ow});
}

Tensor transposed_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                         std::size_t stride, std::size_t pad) {
    require_rank("transposed_conv2d", x, 3);
    require_rank("transposed_conv2d", kernel, 4);
    if (stride == 0) throw DimensionError("transposed_conv2d: stride must be >= 1");
    if (kernel.dim(0) != x.dim(0) || kernel.dim(2) != kernel.dim(3))
        shape_error("transposed_conv2d", x.shape(), kernel.shape());
    const std::size_t ci = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t co = kernel.dim(1), k = kernel.dim(2);
    const long oh_l = long(stride * (h - 1) + k) - 2 * long(pad);
    const long ow_l = long(stride * (w - 1) + k) - 2 * long(pad);
    if (oh_l < 1 || ow_l < 1)
        throw DimensionError("transposed_conv2d: invalid geometry, output extent < 1");
    const std::size_t oh = std::size_t(oh_l), ow = std::size_t(ow_l);
    if (bias.defined() && bias.shape() != Shape{co})
        shape_error("transposed_conv2d", kernel.shape(), bias.shape());

    // Visits every (input pixel, kernel tap) pair that lands inside the output.
    auto visit = [=](auto&& f) {
        for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t o = 0; o < co; ++o)
                for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const std::size_t kidx = ((c * co + o) * k + ky) * k + kx;
                        for (std::size_t iy = 0; iy < h; ++iy) {
                            const long oy = long(iy * stride + ky) - long(pad);
                            if (oy < 0 || oy >= oh_l) continue;
                            for (std::size_t ix = 0; ix < w; ++ix) {
                                const long ox = long(ix * stride + kx) - long(pad);
                                if (ox < 0 || ox >= ow_l) continue;
                                f(kidx, (c * h + iy) * w + ix, (o * oh + std::size_t(oy)) * ow + std::size_t(ox));
                            }
                        }
                    }
    };

    std::vector<double> out(co * oh * ow, 0.0);
    if (bias.defined())
        for (std::size_t o = 0; o < co; ++o) std::fill_n(out.begin() + o * oh * ow, oh * ow, bias[o]);
    {
        const double* xd = x.data().data();
        const double* kd = kernel.data().data();
        visit([&](std::size_t kidx, std::size_t xi, std::size_t oi) { out[oi] += kd[kidx] * xd[xi]; });
    }
    Tensor result(Shape{co, oh, ow}, std::move(out));
    if (detail::should_record({&x, &kernel, &bias})) {
        auto* xi_ = raw(x);
        auto* ki = raw(kernel);
        auto* bi = raw(bias);
        auto* o = raw(result);
        record("transposed_conv2d", {x, kernel, bias}, result, [=] {
            double* gx = grad_of(xi_);
            double* gk = grad_of(ki);
            double* gb = grad_of(bi);
            const double* g = o->grad.data();
            if (gb)
                for (std::size_t c = 0; c < co; ++c)
                    for (std::size_t p = 0; p < oh * ow; ++p) gb[c] += g[c * oh * ow + p];
            const double* xd = xi_->data.data();
            const double* kd = ki->data.data();
            visit([&](std::size_t kidx, std::size_t xidx, std::size_t oidx) {
                if (gx) gx[xidx] += kd[kidx] * g[oidx];
                if (gk) gk[kidx] += xd[xidx] * g[oidx];
            });
        });
    }
    return result;
}

// --- pooling / resampling --------------------------------------------------

Tensor global_max_pool(const Tensor& x) {
    require_rank("global_max_pool", x, 3);
    const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
    std::vector<double> v(c);
    std::vector<std::size_t> arg(c);
    auto xd = x.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = 0;
        for (std::size_t p = 1; p < plane; ++p)
            if (xd[ch * plane + p] > xd[ch * plane + best]) best = p;
        arg[ch] = ch * plane + best;
        v[ch] = xd[arg[ch]];
    }
    Tensor out(Shape{c}, std::move(v));
    if (detail::should_record({&x})) {
        auto* xi = raw(x);
        auto* o = raw(out);
        record("global_max_pool", {x}, out, [=] {
            double* gx = grad_of(xi);
            if (!gx) return;
            for (std::size_t ch = 0; ch < c; ++ch) gx[arg[ch]] += o->grad[ch];
        });
    }
    return out;
}

Tensor channel_mean(const Tensor& x) {
    require_rank("channel_mean", x, 3);
    const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
    std::vector<double> v(plane, 0.0);
    auto xd = x.data();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < plane; ++p) v[p] += xd[ch * plane + p];
    for (auto& e : v) e /= double(c);
    Tensor out(Shape{1, x.dim(1), x.dim(2)}, std::move(v));
    if (detail::should_record({&x})) {
        auto* xi = raw(x);
        auto* o = raw(out);
        record("channel_mean", {x}, out, [=] {
            double* gx = grad_of(xi);
            if (!gx) return;
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t p = 0; p < plane; ++p) gx[ch * plane + p] += o->grad[p] / double(c);
        });
    }
    return out;
}

Tensor channel_max(const Tensor& x) {
    require_rank("channel_max", x, 3);
    const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
    std::vector<double> v(plane);
    std::vector<std::size_t> arg(plane);
    auto xd = x.data();
    for (std::size_t p = 0; p < plane; ++p) {
        std::size_t best = 0;
        for (std::size_t ch = 1; ch < c; ++ch)
            if (xd[ch * plane + p] > xd[best * plane + p]) best = ch;
        arg[p] = best * plane + p;
        v[p] = xd[arg[p]];
    }
    Tensor out(Shape{1, x.dim(1), x.dim(2)}, std::move(v));
    if (detail::should_record({&x})) {
        auto* xi = raw(x);
        auto* o = raw(out);
        record("channel_max", {x}, out, [=] {
            double* gx = grad_of(xi);
            if (!gx) return;
            for (std::size_t p = 0; p < plane; ++p) gx[arg[p]] += o->grad[p];
        });
    }
    return out;
}

Tensor temporal_mean(const Tensor& x) {
    require_rank("temporal_mean", x, 4);
    const std::size_t c = x.dim(0), t = x.dim(1), plane = x.dim(2) * x.dim(3);
    std::vector<double> v(c * plane, 0.0);
    auto xd = x.data();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t s = 0; s < t; ++s)
            for (std::size_t p = 0; p < plane; ++p) v[ch * plane + p] += xd[(ch * t + s) * plane + p];
    for (auto& e : v) e /= double(t);
    Tensor out(Shape{c, x.dim(2), x.dim(3)}, std::move(v));
    if (detail::should_record({&x})) {
        auto* xi = raw(x);
        auto* o = raw(out);
        record("temporal_mean", {x}, out, [=] {
            double* gx = grad_of(xi);
            if (!gx) return;
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t s = 0; s < t; ++s)
                    for (std::size_t p = 0; p < plane; ++p)
                        gx[(ch * t + s) * plane + p] += o->grad[ch * plane + p] / double(t);
        });
    }
    return out;
}

namespace {

// Source taps for one axis of a 2x resize.
struct Taps {
    std::vector<std::size_t> i0, i1;
    std::vector<double> w1;  // weight of i1; i0 gets 1 - w1
};

Taps make_taps(std::size_t n, UpsampleMode mode) {
    Taps t;
    for (std::size_t d = 0; d < 2 * n; ++d) {
        if (mode == UpsampleMode::nearest) {
            t.i0.push_back(d / 2);
            t.i1.push_back(d / 2);
            t.w1.push_back(0.0);
            continue;
        }
        double src = (double(d) + 0.5) / 2.0 - 0.5;
        if (src < 0) src = 0;
        const auto a = std::size_t(std::floor(src));
        t.i0.push_back(a);
        t.i1.push_back(std::min(a + 1, n - 1));
        t.w1.push_back(src - double(a));
    }
    return t;
}

}  // namespace

Tensor upsample2x(const Tensor& x, UpsampleMode mode) {
    require_rank("upsample2x", x, 3);
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t oh = 2 * h, ow = 2 * w;
    const Taps ty = make_taps(h, mode), tx = make_taps(w, mode);
    std::vector<double> v(c * oh * ow);
    auto xd = x.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* src = xd.data() + ch * h * w;
        for (std::size_t y = 0; y < oh; ++y) {
            const double* r0 = src + ty.i0[y] * w;
            const double* r1 = src + ty.i1[y] * w;
            const double ly = ty.w1[y];
            for (std::size_t xx = 0; xx < ow; ++xx) {
                const double lx = tx.w1[xx];
                const double top = (1 - lx) * r0[tx.i0[xx]] + lx * r0[tx.i1[xx]];
                const double bot = (1 - lx) * r1[tx.i0[xx]] + lx * r1[tx.i1[xx]];
                v[(ch * oh + y) * ow + xx] = (1 - ly) * top + ly * bot;
            }
        }
    }
    Tensor out(Shape{c, oh, ow}, std::move(v));
    if (detail::should_record({&x})) {
        auto* xi = raw(x);
        auto* o = raw(out);
        record("upsample2x", {x}, out, [=] {
            double* gx = grad_of(xi);
            if (!gx) return;
            for (std::size_t ch = 0; ch < c; ++ch) {
                double* dst = gx + ch * h * w;
                for (std::size_t y = 0; y < oh; ++y) {
                    const double ly = ty.w1[y];
                    for (std::size_t xx = 0; xx < ow; ++xx) {
                        const double g = o->grad[(ch * oh + y) * ow + xx];
                        const double lx = tx.w1[xx];
                        dst[ty.i0[y] * w + tx.i0[xx]] += g * (1 - ly) * (1 - lx);
                        dst[ty.i0[y] * w + tx.i1[xx]] += g * (1 - ly) * lx;
                        dst[ty.i1[y] * w + tx.i0[xx]] += g * ly * (1 - lx);
                        dst[ty.i1[y] * w + tx.i1[xx]] += g * ly * lx;
                    }
                }
            }
        });
    }
    return out;
}

// --- channel-wise modulation ----------------------------------------------

Tensor affine_channels(const Tensor& x, const Tensor& scale_, const Tensor& shift) {
    const std::size_t c = x.dim(0), inner = x.numel() / c;
    if (scale_.shape() != Shape{c}) shape_error("affine_channels", x.shape(), scale_.shape());
    if (shift.defined() && shift.shape() != Shape{c}) shape_error("affine_channels", x.shape(), shift.shape());
    std::vector<double> v(x.numel());
    auto xd = x.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double s = scale_[ch], b = shift.defined() ? shift[ch] : 0.0;
        for (std::size_t i = 0; i < inner; ++i) v[ch * inner + i] = s * xd[ch * inner + i] + b;
    }
    Tensor out(x.shape(), std::move(v));
    if (detail::should_record({&x, &scale_, &shift})) {
        auto* xi = raw(x);
        auto* si = raw(scale_);
        auto* bi = raw(shift);
        auto* o = raw(out);
        record("affine_channels", {x, scale_, shift}, out, [=] {
            double* gx = grad_of(xi);
            double* gs = grad_of(si);
            double* gb = grad_of(bi);
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc_s = 0.0, acc_b = 0.0;
                const double s = si->data[ch];
                for (std::size_t i = 0; i < inner; ++i) {
                    const std::size_t k = ch * inner + i;
                    const double g = o->grad[k];
                    acc_s += g * xi->data[k];
                    acc_b += g;
                    if (gx) gx[k] += g * s;
                }
                if (gs) gs[ch] += acc_s;
                if (gb) gb[ch] += acc_b;
            }
        });
    }
    return out;
}

Tensor channel_scale(const Tensor& x, const Tensor& w) { return affine_channels(x, w, Tensor{}); }

Tensor spatial_scale(const Tensor& x, const Tensor& mask) {
    require_rank("spatial_scale", x, 3);
    if (mask.shape() != Shape{1, x.dim(1), x.dim(2)}) shape_error("spatial_scale", x.shape(), mask.shape());
    const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
    std::vector<double> v(x.numel());
    auto xd = x.data();
    auto md = mask.data();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < plane; ++p) v[ch * plane + p] = xd[ch * plane + p] * md[p];
    Tensor out(x.shape(), std::move(v));
    if (detail::should_record({&x, &mask})) {
        auto* xi = raw(x);
        auto* mi = raw(mask);
        auto* o = raw(out);
        record("spatial_scale", {x, mask}, out, [=] {
            double* gx = grad_of(xi);
            double* gm = grad_of(mi);
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t p = 0; p < plane; ++p) {
                    const double g = o->grad[ch * plane + p];
                    if (gx) gx[ch * plane + p] += g * mi->data[p];
                    if (gm) gm[p] += g * xi->data[ch * plane + p];
                }
        });
    }
    return out;
}

}  // namespace sanet

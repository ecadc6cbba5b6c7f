// Differentiable tensor primitives.
//
// Layout conventions: feature maps are C x H x W, volumes C x T x H x W,
// all row-major. Binary elementwise ops require equal shapes, except that
// either operand may be a single-element tensor (scalar broadcast).
#pragma once

#include <cstddef>
#include <vector>

#include "sanet/tensor.hpp"

namespace sanet {

// --- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
/// Gradient passes only where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi);

enum class Pointwise { sigmoid, relu, add, hadamard };
Tensor pointwise(const Tensor& x, Pointwise kind, const Tensor& y = Tensor{});

// --- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// --- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Normalises along `axis` with max subtraction.
Tensor softmax_axis(const Tensor& x, std::size_t axis);
Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& b);

// --- shape -----------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
/// Concatenates along axis 0; trailing extents must agree.
Tensor concat_channels(const std::vector<Tensor>& xs);
/// Swaps axes 0 and 1 (e.g. T x C x H x W -> C x T x H x W).
Tensor swap_leading_axes(const Tensor& x);

// --- convolution -----------------------------------------------------------

struct Conv2dGeometry {
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::size_t dilation = 1;
};

/// Cross-correlation. x: C_in x H x W, kernel: C_out x C_in x k x k (k odd),
/// bias: C_out or undefined.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Conv2dGeometry g);
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride = 1, std::size_t pad = 0);

struct Conv3dGeometry {
    std::size_t stride_t = 1, stride = 1;
    std::size_t pad_t = 0, pad = 0;
};

/// x: C_in x T x H x W, kernel: C_out x C_in x k_t x k x k.
Tensor conv3d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Conv3dGeometry g);

/// Adjoint of conv2d. x: C_in x H x W, kernel: C_in x C_out x k x k, so the
/// same buffer serves as a conv2d kernel mapping C_out -> C_in.
/// Output extent: stride*(in-1) + k - 2*pad.
Tensor transposed_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                         std::size_t stride, std::size_t pad = 0);

// --- pooling / resampling --------------------------------------------------

/// C x H x W -> C. Gradient goes to the first maximum in row-major order.
Tensor global_max_pool(const Tensor& x);
/// C x H x W -> 1 x H x W.
Tensor channel_mean(const Tensor& x);
Tensor channel_max(const Tensor& x);
/// C x T x H x W -> C x H x W.
Tensor temporal_mean(const Tensor& x);

enum class UpsampleMode { nearest, bilinear };
/// Bilinear uses the align-corners-false convention.
Tensor upsample2x(const Tensor& x, UpsampleMode mode);

// --- channel-wise modulation ----------------------------------------------

/// x: C x ..., w: C. out[c, ...] = w[c] * x[c, ...].
Tensor channel_scale(const Tensor& x, const Tensor& w);
/// out[c, ...] = scale[c] * x[c, ...] + shift[c].
Tensor affine_channels(const Tensor& x, const Tensor& scale, const Tensor& shift);
/// x: C x H x W, mask: 1 x H x W.
Tensor spatial_scale(const Tensor& x, const Tensor& mask);

}  // namespace sanet

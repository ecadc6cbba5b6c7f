// Thin parameter holders around the convolution / linear primitives.
#pragma once

#include "sanet/ops.hpp"
#include "sanet/parameters.hpp"

namespace sanet {

struct Conv2dLayer {
    Tensor weight;  // C_out x C_in x k x k
    Tensor bias;    // C_out, may be undefined
    Conv2dGeometry geometry;

    static Conv2dLayer create(ParamBuilder b, std::size_t in, std::size_t out, std::size_t k,
                              Conv2dGeometry g = {}, bool with_bias = true);
    /// "Same" padding for stride 1: pad = dilation * (k - 1) / 2.
    static Conv2dLayer same(ParamBuilder b, std::size_t in, std::size_t out, std::size_t k,
                            std::size_t dilation = 1, bool with_bias = true);

    Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, geometry); }
};

struct Conv3dLayer {
    Tensor weight;  // C_out x C_in x k_t x k x k
    Conv3dGeometry geometry;

    static Conv3dLayer create(ParamBuilder b, std::size_t in, std::size_t out, std::size_t kt,
                              std::size_t k, Conv3dGeometry g);

    Tensor operator()(const Tensor& x) const { return conv3d(x, weight, Tensor{}, geometry); }
};

struct DeconvLayer {
    Tensor weight;  // C_in x C_out x k x k
    Tensor bias;
    std::size_t stride = 2;

    /// 2x2 kernel, stride 2: doubles the spatial extent exactly.
    static DeconvLayer create(ParamBuilder b, std::size_t in, std::size_t out);

    Tensor operator()(const Tensor& x) const { return transposed_conv2d(x, weight, bias, stride, 0); }
};

struct LinearLayer {
    Tensor weight;  // out x in
    Tensor bias;

    static LinearLayer create(ParamBuilder b, std::size_t in, std::size_t out);

    Tensor operator()(const Tensor& x) const { return fully_connected(x, weight, bias); }
};

/// Per-channel scale and shift (stands in for batch normalisation).
struct AffineLayer {
    Tensor scale;
    Tensor shift;

    static AffineLayer create(ParamBuilder b, std::size_t channels);

    Tensor operator()(const Tensor& x) const { return affine_channels(x, scale, shift); }
};

}  // namespace sanet

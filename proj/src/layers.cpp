#include "sanet/layers.hpp"

namespace sanet {

Conv2dLayer Conv2dLayer::create(ParamBuilder b, std::size_t in, std::size_t out, std::size_t k,
                                Conv2dGeometry g, bool with_bias) {
    Conv2dLayer l;
    l.weight = b.he_normal("weight", Shape{out, in, k, k}, in * k * k);
    if (with_bias) l.bias = b.zeros("bias", Shape{out});
    l.geometry = g;
    return l;
}

Conv2dLayer Conv2dLayer::same(ParamBuilder b, std::size_t in, std::size_t out, std::size_t k,
                              std::size_t dilation, bool with_bias) {
    return create(b, in, out, k, Conv2dGeometry{1, dilation * (k - 1) / 2, dilation}, with_bias);
}

Conv3dLayer Conv3dLayer::create(ParamBuilder b, std::size_t in, std::size_t out, std::size_t kt,
                                std::size_t k, Conv3dGeometry g) {
    Conv3dLayer l;
    l.weight = b.he_normal("weight", Shape{out, in, kt, k, k}, in * kt * k * k);
    l.geometry = g;
    return l;
}

DeconvLayer DeconvLayer::create(ParamBuilder b, std::size_t in, std::size_t out) {
    DeconvLayer l;
    // Each output pixel receives exactly one tap per input channel.
    l.weight = b.he_normal("weight", Shape{in, out, 2, 2}, in);
    l.bias = b.zeros("bias", Shape{out});
    l.stride = 2;
    return l;
}

LinearLayer LinearLayer::create(ParamBuilder b, std::size_t in, std::size_t out) {
    LinearLayer l;
    l.weight = b.he_normal("weight", Shape{out, in}, in);
    l.bias = b.zeros("bias", Shape{out});
    return l;
}

AffineLayer AffineLayer::create(ParamBuilder b, std::size_t channels) {
    AffineLayer l;
    l.scale = b.constant("scale", Shape{channels}, 1.0);
    l.shift = b.zeros("shift", Shape{channels});
    return l;
}

}  // namespace sanet

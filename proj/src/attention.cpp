#include "sanet/attention.hpp"

#include <algorithm>
#include <string>

namespace sanet {

namespace {

void require_same(const char* op, const FeatureMap& a, const FeatureMap& b) {
    if (a.tensor.shape() != b.tensor.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + a.tensor.shape().str() + " vs " +
                             b.tensor.shape().str());
}

FeatureMap like(const FeatureMap& ref, Tensor t) { return FeatureMap{std::move(t), ref.level, ref.branch}; }

}  // namespace

RfbParams RfbParams::create(ParamBuilder b, std::size_t in, std::size_t out) {
    const std::size_t width = std::max<std::size_t>(1, out / 4);
    RfbParams p;
    p.branch0 = Conv2dLayer::same(b.child("branch0"), in, width, 1);
    const std::array<std::size_t, 3> dilations{1, 3, 5};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto tag = "branch" + std::to_string(i + 1);
        p.reduce[i] = Conv2dLayer::same(b.child(tag + ".reduce"), in, width, 1);
        p.dilated[i] = Conv2dLayer::same(b.child(tag + ".dilated"), width, width, 3, dilations[i]);
    }
    p.merge = Conv2dLayer::same(b.child("merge"), 4 * width, out, 1);
    p.shortcut = Conv2dLayer::same(b.child("shortcut"), in, out, 1);
    return p;
}

FeatureMap rfb_block(const FeatureMap& x, const RfbParams& p) {
    std::vector<Tensor> branches{p.branch0(x.tensor)};
    for (std::size_t i = 0; i < 3; ++i) branches.push_back(p.dilated[i](p.reduce[i](x.tensor)));
    Tensor merged = p.merge(concat_channels(branches));
    return like(x, relu(add(merged, p.shortcut(x.tensor))));
}

ResidualParams ResidualParams::create(ParamBuilder b, std::size_t channels) {
    return {Conv2dLayer::same(b.child("conv1"), channels, channels, 3),
            Conv2dLayer::same(b.child("conv2"), channels, channels, 3)};
}

FeatureMap residual_block(const FeatureMap& x, const ResidualParams& p) {
    Tensor y = p.conv2(relu(p.conv1(x.tensor)));
    return like(x, relu(add(y, x.tensor)));
}

SqueezeExciteParams SqueezeExciteParams::create(ParamBuilder b, std::size_t channels,
                                                std::size_t reduction) {
    const std::size_t hidden = std::max<std::size_t>(1, channels / std::max<std::size_t>(1, reduction));
    return {LinearLayer::create(b.child("fc1"), channels, hidden),
            LinearLayer::create(b.child("fc2"), hidden, channels)};
}

Tensor channel_fuse_weights(const FeatureMap& f_upper, const SqueezeExciteParams& p, UpsampleMode mode) {
    Tensor pooled = global_max_pool(upsample2x(f_upper.tensor, mode));
    return sigmoid(p.fc2(relu(p.fc1(pooled))));
}

FeatureMap channel_attention_fuse(const FeatureMap& f_i, const FeatureMap& f_upper,
                                  const SqueezeExciteParams& p, UpsampleMode mode) {
    if (f_upper.branch != f_i.branch)
        throw std::invalid_argument("channel_attention_fuse: maps come from different branches");
    if (2 * f_upper.height() != f_i.height() || 2 * f_upper.width() != f_i.width())
        throw DimensionError("channel_attention_fuse: upsampled upper map " +
                             std::to_string(2 * f_upper.height()) + "x" + std::to_string(2 * f_upper.width()) +
                             " does not match " + f_i.tensor.shape().str());
    Tensor w = channel_fuse_weights(f_upper, p, mode);
    return like(f_i, add(channel_scale(f_i.tensor, w), f_i.tensor));
}

CoAttentionResult co_attention(const FeatureMap& a, const FeatureMap& b) {
    require_same("co_attention", a, b);
    const std::size_t c = a.channels(), hw = a.height() * a.width();
    Tensor am = reshape(a.tensor, Shape{c, hw});
    Tensor bm = reshape(b.tensor, Shape{c, hw});

    CoAttentionState state;
    state.similarity = matmul(transpose(am), bm);
    state.col_norm = softmax_axis(state.similarity, 0);
    state.row_norm = softmax_axis(transpose(state.similarity), 0);

    Tensor ao = reshape(matmul(am, state.col_norm), a.tensor.shape());
    Tensor bo = reshape(matmul(bm, state.row_norm), b.tensor.shape());
    return {like(a, ao), like(b, bo), std::move(state)};
}

SelfGateParams SelfGateParams::create(ParamBuilder b, std::size_t channels) {
    return {Conv2dLayer::same(b.child("conv"), channels, channels, 1)};
}

Tensor self_gate_confidence(const FeatureMap& f, const SelfGateParams& p) {
    return sigmoid(p.conv(f.tensor));
}

FeatureMap self_gate(const FeatureMap& f, const SelfGateParams& p) {
    return like(f, hadamard(self_gate_confidence(f, p), f.tensor));
}

SaStageParams SaStageParams::create(ParamBuilder b, std::size_t channels, std::size_t se_reduction,
                                    bool use_coattention, UpsampleMode upsample) {
    auto branch = [&](const std::string& name) {
        ParamBuilder s = b.child(name);
        SaBranchParams bp;
        bp.channel_fuse = SqueezeExciteParams::create(s.child("ca"), channels, se_reduction);
        bp.upper_residual = ResidualParams::create(s.child("rb"), channels);
        bp.reduce = Conv2dLayer::same(s.child("reduce"), 2 * channels, channels, 1);
        if (use_coattention) bp.gate = SelfGateParams::create(s.child("gate"), channels);
        return bp;
    };
    SaStageParams p;
    p.aif = branch("aif");
    p.fs = branch("fs");
    p.use_coattention = use_coattention;
    p.upsample = upsample;
    return p;
}

namespace {

// Multi-level attention for one branch: CA fusion, concat with the upsampled
// residual-block output of the upper map, 1x1 reduction.
FeatureMap multi_level(const std::pair<FeatureMap, FeatureMap>& pair, const SaBranchParams& p,
                       UpsampleMode mode) {
    const auto& [f_i, f_upper] = pair;
    if (f_upper.level != f_i.level + 1)
        throw std::invalid_argument("sa_stage: upper map must be one level above (got " +
                                    std::to_string(f_i.level) + ", " + std::to_string(f_upper.level) + ")");
    FeatureMap ca = channel_attention_fuse(f_i, f_upper, p.channel_fuse, mode);
    Tensor rb = upsample2x(residual_block(f_upper, p.upper_residual).tensor, mode);
    return like(f_i, p.reduce(concat_channels({ca.tensor, rb})));
}

}  // namespace

SaStageOutput sa_stage(const std::pair<FeatureMap, FeatureMap>& pair2d,
                       const std::pair<FeatureMap, FeatureMap>& pair3d, const SaStageParams& p) {
    if (pair2d.first.level != pair3d.first.level)
        throw std::invalid_argument("sa_stage: branch levels differ");
    FeatureMap cat2d = multi_level(pair2d, p.aif, p.upsample);
    FeatureMap cat3d = multi_level(pair3d, p.fs, p.upsample);
    if (!p.use_coattention) return {cat2d, cat3d, {}};

    CoAttentionResult co = co_attention(cat2d, cat3d);
    Tensor g2 = self_gate_confidence(co.a, p.aif.gate);
    Tensor g3 = self_gate_confidence(co.b, p.fs.gate);
    SaStageOutput out{like(co.a, hadamard(g2, co.a.tensor)), like(co.b, hadamard(g3, co.b.tensor)),
                      std::move(co.state)};
    out.state.gates = {g2, g3};
    return out;
}

SpatialUnitParams SpatialUnitParams::create(ParamBuilder b) {
    return {Conv2dLayer::same(b.child("conv"), 2, 1, 7)};
}

Tensor spatial_attention_mask(const FeatureMap& f, const SpatialUnitParams& p) {
    return sigmoid(p.conv(concat_channels({channel_mean(f.tensor), channel_max(f.tensor)})));
}

FeatureMap spatial_attention_unit(const FeatureMap& f, const SpatialUnitParams& p) {
    return like(f, spatial_scale(f.tensor, spatial_attention_mask(f, p)));
}

Tensor channel_attention_weights(const FeatureMap& f, const SqueezeExciteParams& p) {
    return sigmoid(p.fc2(relu(p.fc1(global_max_pool(f.tensor)))));
}

FeatureMap channel_attention_unit(const FeatureMap& f, const SqueezeExciteParams& p) {
    return like(f, channel_scale(f.tensor, channel_attention_weights(f, p)));
}

AifAttentionParams AifAttentionParams::create(ParamBuilder b, std::size_t channels,
                                              std::size_t se_reduction) {
    return {SqueezeExciteParams::create(b.child("channel"), channels, se_reduction),
            SpatialUnitParams::create(b.child("spatial"))};
}

std::pair<FeatureMap, FeatureMap> aif_induced_attention(const FeatureMap& f2d, const FeatureMap& f3d,
                                                        const AifAttentionParams& p) {
    require_same("aif_induced_attention", f2d, f3d);
    FeatureMap guided = spatial_attention_unit(channel_attention_unit(f2d, p.channel), p.spatial);
    return {f2d, like(f3d, add(guided.tensor, f3d.tensor))};
}

}  // namespace sanet

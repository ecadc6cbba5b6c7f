// Attention blocks of the synergistic-attention decoder.
//
// Feature maps are C x H x W. Co-attention treats each map as a C x HW matrix,
// so the similarity matrix relates spatial positions of the two branches.
#pragma once

#include <array>
#include <utility>

#include "sanet/layers.hpp"

namespace sanet {

enum class Branch { aif2d, fs3d };

struct FeatureMap {
    Tensor tensor;  // C x H x W
    int level = 0;  // pyramid level 1..4
    Branch branch = Branch::aif2d;

    std::size_t channels() const { return tensor.dim(0); }
    std::size_t height() const { return tensor.dim(1); }
    std::size_t width() const { return tensor.dim(2); }
};

struct CoAttentionState {
    Tensor similarity;  // HW x HW, M[p, q] = <a[:, p], b[:, q]>
    Tensor col_norm;    // column-wise softmax of M
    Tensor row_norm;    // column-wise softmax of M^T
    std::pair<Tensor, Tensor> gates;  // self-gate confidences, filled by sa_stage
};

// ---------------------------------------------------------------- blocks ---

/// Receptive-field block: 1x1 branch plus three (1x1 -> dilated 3x3) branches
/// with dilations 1, 3, 5, concatenated, merged by 1x1, plus a 1x1 shortcut.
struct RfbParams {
    Conv2dLayer branch0;
    std::array<Conv2dLayer, 3> reduce;
    std::array<Conv2dLayer, 3> dilated;
    Conv2dLayer merge;
    Conv2dLayer shortcut;

    static RfbParams create(ParamBuilder b, std::size_t in, std::size_t out);
};

FeatureMap rfb_block(const FeatureMap& x, const RfbParams& p);

struct ResidualParams {
    Conv2dLayer conv1, conv2;
    static ResidualParams create(ParamBuilder b, std::size_t channels);
};

/// relu(conv2(relu(conv1(x))) + x).
FeatureMap residual_block(const FeatureMap& x, const ResidualParams& p);

/// Squeeze-excitation MLP: C -> max(1, C / reduction) -> C.
struct SqueezeExciteParams {
    LinearLayer fc1, fc2;
    static SqueezeExciteParams create(ParamBuilder b, std::size_t channels, std::size_t reduction);
};

/// sigmoid(FC(ReLU(FC(maxpool(up(f_upper)))))) * f_i + f_i.
FeatureMap channel_attention_fuse(const FeatureMap& f_i, const FeatureMap& f_upper,
                                  const SqueezeExciteParams& p, UpsampleMode mode);

/// Channel weights used by channel_attention_fuse, exposed for inspection.
Tensor channel_fuse_weights(const FeatureMap& f_upper, const SqueezeExciteParams& p, UpsampleMode mode);

struct CoAttentionResult {
    FeatureMap a;
    FeatureMap b;
    CoAttentionState state;
};

/// Parameter-free co-attention across branches.
CoAttentionResult co_attention(const FeatureMap& a, const FeatureMap& b);

struct SelfGateParams {
    Conv2dLayer conv;  // 1x1, C -> C
    static SelfGateParams create(ParamBuilder b, std::size_t channels);
};

Tensor self_gate_confidence(const FeatureMap& f, const SelfGateParams& p);
/// sigmoid(conv(f)) * f.
FeatureMap self_gate(const FeatureMap& f, const SelfGateParams& p);

struct SaBranchParams {
    SqueezeExciteParams channel_fuse;
    ResidualParams upper_residual;
    Conv2dLayer reduce;  // 1x1, 2C -> C
    SelfGateParams gate;
};

struct SaStageParams {
    SaBranchParams aif;
    SaBranchParams fs;
    bool use_coattention = true;
    UpsampleMode upsample = UpsampleMode::bilinear;

    static SaStageParams create(ParamBuilder b, std::size_t channels, std::size_t se_reduction,
                                bool use_coattention, UpsampleMode upsample);
};

struct SaStageOutput {
    FeatureMap aif;
    FeatureMap fs;
    CoAttentionState state;  // empty when co-attention is disabled
};

/// One synergistic-attention stage. Each pair is (level-i map, level-(i+1) map)
/// for one branch; outputs are at level i with the stage width.
SaStageOutput sa_stage(const std::pair<FeatureMap, FeatureMap>& pair2d,
                       const std::pair<FeatureMap, FeatureMap>& pair3d, const SaStageParams& p);

struct SpatialUnitParams {
    Conv2dLayer conv;  // 7x7, 2 -> 1, pad 3
    static SpatialUnitParams create(ParamBuilder b);
};

Tensor spatial_attention_mask(const FeatureMap& f, const SpatialUnitParams& p);
/// sigmoid(conv7x7([mean_c(f); max_c(f)])) * f.
FeatureMap spatial_attention_unit(const FeatureMap& f, const SpatialUnitParams& p);

Tensor channel_attention_weights(const FeatureMap& f, const SqueezeExciteParams& p);
/// sigmoid(MLP(maxpool(f))) * f.
FeatureMap channel_attention_unit(const FeatureMap& f, const SqueezeExciteParams& p);

struct AifAttentionParams {
    SqueezeExciteParams channel;
    SpatialUnitParams spatial;
    static AifAttentionParams create(ParamBuilder b, std::size_t channels, std::size_t se_reduction);
};

/// Returns (f2d, spatial(channel(f2d)) + f3d).
std::pair<FeatureMap, FeatureMap> aif_induced_attention(const FeatureMap& f2d, const FeatureMap& f3d,
                                                        const AifAttentionParams& p);

}  // namespace sanet

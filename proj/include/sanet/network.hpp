// Dual-branch saliency network: 2D all-in-focus encoder, 3D focal-stack
// encoder, two cascaded synergistic-attention stages, AiF-induced attention
// and a progressive deconvolution decoder, with ablation switches.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sanet/attention.hpp"
#include "sanet/layers.hpp"
#include "sanet/parameters.hpp"

namespace sanet {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Components accumulate left to right: B < ME0 < ME < SA1 < SA2 < PF1 < PF2 < FULL.
enum class Ablation { B, ME0, ME, SA1, SA2, PF1, PF2, FULL };

std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& s);
std::string to_string(UpsampleMode m);
UpsampleMode parse_upsample(const std::string& s);

struct ModelConfig {
    std::size_t slices = 12;  // focal slices per stack (T)
    std::size_t base_channels = 16;
    std::size_t rfb_channels = 32;
    std::size_t decoder_channels = 16;
    std::size_t input_size = 64;
    std::size_t se_reduction = 4;
    Ablation ablation = Ablation::FULL;
    UpsampleMode upsample = UpsampleMode::bilinear;

    /// Throws ConfigError on an inconsistent configuration.
    void validate() const;

    /// key=value lines, stable key order.
    std::string to_text() const;
    static ModelConfig from_text(const std::string& text);
    /// Applies one key=value setting; returns false for an unknown key.
    bool set(const std::string& key, const std::string& value);
};

/// Levels 1..4 at strides 4/8/16/32 with widths base * {1, 2, 4, 8}.
struct FeaturePyramid {
    std::array<FeatureMap, 4> levels;
    const FeatureMap& level(int i) const { return levels.at(std::size_t(i - 1)); }
};

struct Prediction {
    std::vector<Tensor> maps;  // P1..P3 under deep supervision, otherwise one map
    const Tensor& final_map() const { return maps.back(); }
};

// ------------------------------------------------------------ encoders ---

struct ResStage2d {
    Conv2dLayer conv1, conv2, shortcut;
    AffineLayer norm1, norm2, norm_shortcut;
};

struct Encoder2dParams {
    Conv2dLayer stem1, stem2;
    AffineLayer stem1_norm, stem2_norm;
    std::array<ResStage2d, 3> stages;

    static Encoder2dParams create(ParamBuilder b, std::size_t in_channels, std::size_t base);
};

struct ResStage3d {
    Conv3dLayer conv1, conv2, shortcut;
    AffineLayer norm1, norm2, norm_shortcut;
};

struct Encoder3dParams {
    Conv3dLayer stem1, stem2;
    AffineLayer stem1_norm, stem2_norm;
    std::array<ResStage3d, 3> stages;

    static Encoder3dParams create(ParamBuilder b, std::size_t slices, std::size_t base);
};

/// Temporal extents of the 3D branch after the stem and each stage.
std::array<std::size_t, 4> temporal_extents(std::size_t slices);

/// Generic 2D pyramid encoder over a C x H x W input.
FeaturePyramid encode_2d(const Tensor& x, const Encoder2dParams& p, const ModelConfig& cfg, Branch branch);
/// img: 3 x H x W.
FeaturePyramid encode_aif(const Tensor& img, const Encoder2dParams& p, const ModelConfig& cfg);
/// stack: T x 3 x H x W. Each level is collapsed over time by averaging.
FeaturePyramid encode_fs(const Tensor& stack, const Encoder3dParams& p, const ModelConfig& cfg);

// --------------------------------------------------------------- heads ---

struct PredictionHeadParams {
    Conv2dLayer conv;  // 1x1, 2C -> 1
    static PredictionHeadParams create(ParamBuilder b, std::size_t branch_channels);
};

/// concat -> 1x1 conv -> sigmoid -> upsample to input size.
Tensor prediction_head(const FeatureMap& f2d, const FeatureMap& f3d, const PredictionHeadParams& p,
                       const ModelConfig& cfg);

/// n x (2x2 stride-2 transposed conv -> 3x3 conv -> ReLU), then 1x1 conv + sigmoid.
struct DeconvDecoderParams {
    struct Stage {
        DeconvLayer up;
        Conv2dLayer conv;
    };
    std::vector<Stage> stages;
    Conv2dLayer out;

    static DeconvDecoderParams create(ParamBuilder b, std::size_t in_channels, std::size_t width,
                                      std::size_t stages);
};

Tensor deconv_decode(const Tensor& x, const DeconvDecoderParams& p);

/// Final prediction from the level-2 pair: three doubling stages back to input size.
Tensor pf_forward(const FeatureMap& f2d, const FeatureMap& f3d, const DeconvDecoderParams& p,
                  const ModelConfig& cfg);

/// Deep-supervision head: a deconvolution decoder with log2(stride) stages.
Tensor progressive_head(const FeatureMap& f2d, const FeatureMap& f3d, const DeconvDecoderParams& p,
                        const ModelConfig& cfg);

// --------------------------------------------------------------- model ---

class SaNet {
public:
    SaNet(ModelConfig cfg, std::uint64_t seed);

    /// aif: 3 x H x W, stack: T x 3 x H x W.
    Prediction forward(const Tensor& aif, const Tensor& stack) const;

    const ModelConfig& config() const noexcept { return cfg_; }
    ParameterStore& parameters() noexcept { return store_; }
    const ParameterStore& parameters() const noexcept { return store_; }
    std::size_t head_count() const;

private:
    ModelConfig cfg_;
    ParameterStore store_;

    Encoder2dParams aif_encoder_;
    std::optional<Encoder2dParams> fs_encoder_2d_;  // baseline B only
    std::optional<Encoder3dParams> fs_encoder_;
    std::array<std::optional<RfbParams>, 3> rfb_aif_, rfb_fs_;  // levels 2..4
    std::optional<SaStageParams> stage1_, stage2_;
    std::optional<PredictionHeadParams> head_;
    std::optional<DeconvDecoderParams> head1_, head2_, decoder_;
    std::optional<AifAttentionParams> aif_attention_;
};

// ---------------------------------------------------------- checkpoint ---

/// Binary container: magic, version, ModelConfig text, then per parameter
/// name, shape and little-endian float64 data.
void save_checkpoint(const std::string& path, const SaNet& model);
SaNet load_checkpoint(const std::string& path);

}  // namespace sanet

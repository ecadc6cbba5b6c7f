// Light-field sample loading, synthetic scenes and prediction output.
//
// Directory layout:
//   root/aif/<id>.png        all-in-focus image
//   root/fs/<id>/NN.png      focal slices, ordered by numeric index NN
//   root/gt/<id>.png         mask, foreground where pixel > 127
//   root/<split>.txt         optional id list (one per line, # comments)
// PGM/PPM files are accepted wherever PNG is.
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sanet/network.hpp"

namespace sanet {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 8-bit interleaved image.
struct Image {
    std::size_t width = 0, height = 0, channels = 0;
    std::vector<std::uint8_t> pixels;
};

Image read_image(const std::filesystem::path& path);
/// Single-channel 8-bit PNG.
void write_png_gray(const std::filesystem::path& path, const Image& img);

/// C x H x W, bilinear with half-pixel centres.
Tensor resize_bilinear(const Tensor& x, std::size_t height, std::size_t width);
Tensor resize_nearest(const Tensor& x, std::size_t height, std::size_t width);

struct Sample {
    std::string id;
    Tensor aif;          // 3 x H x W in [0, 1]
    Tensor focal_stack;  // T x 3 x H x W, zero slices appended after the real ones
    Tensor gt;           // 1 x H x W, values in {0, 1}
    std::size_t slice_count_original = 0;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<std::string> ids;
    std::string split;
};

/// Reads root/<split>.txt when present, otherwise lists root/aif sorted by id.
DatasetManifest open_manifest(const std::filesystem::path& root, const std::string& split);

Sample load_sample(const DatasetManifest& manifest, const std::string& id, const ModelConfig& cfg);
std::vector<Sample> load_dataset(const DatasetManifest& manifest, const ModelConfig& cfg);

/// Deterministic scenes of cfg.input_size with cfg.slices focal slices.
std::vector<Sample> generate_synthetic(std::uint64_t seed, std::size_t count, const ModelConfig& cfg);

/// 8-bit gray, value = floor(255 p + 0.5).
void write_saliency_map(const Tensor& p, const std::filesystem::path& path);
/// Gray image scaled to [0, 1], 1 x H x W.
Tensor read_saliency_map(const std::filesystem::path& path);
/// Gray image binarised at > 127, 1 x H x W.
Tensor read_mask(const std::filesystem::path& path);

}  // namespace sanet

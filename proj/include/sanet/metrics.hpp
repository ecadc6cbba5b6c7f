// Salient-object evaluation: MAE, F-measure, S-measure, E-measure and
// threshold-swept F/E curves.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sanet/tensor.hpp"

namespace sanet {

/// Row-major H x W map with values in [0, 1].
class SaliencyMap {
public:
    SaliencyMap(std::size_t height, std::size_t width, std::vector<double> values);
    /// Accepts 1 x H x W or H x W tensors.
    static SaliencyMap from_tensor(const Tensor& t);

    std::size_t height() const noexcept { return h_; }
    std::size_t width() const noexcept { return w_; }
    std::size_t size() const noexcept { return v_.size(); }
    double operator[](std::size_t i) const { return v_[i]; }
    const std::vector<double>& values() const noexcept { return v_; }

private:
    std::size_t h_, w_;
    std::vector<double> v_;
};

/// Row-major H x W binary mask.
class GroundTruthMask {
public:
    GroundTruthMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values);
    /// Values must be exactly 0 or 1.
    static GroundTruthMask from_tensor(const Tensor& t);

    std::size_t height() const noexcept { return h_; }
    std::size_t width() const noexcept { return w_; }
    std::size_t size() const noexcept { return v_.size(); }
    bool operator[](std::size_t i) const { return v_[i] != 0; }
    std::size_t foreground() const noexcept;

private:
    std::size_t h_, w_;
    std::vector<std::uint8_t> v_;
};

double mae(const SaliencyMap& p, const GroundTruthMask& g);

/// min(2 * mean(P), 1). A pixel is salient iff p >= tau.
double adaptive_threshold(const SaliencyMap& p);

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
};

PrecisionRecall precision_recall(const SaliencyMap& p, const GroundTruthMask& g, double threshold);

/// beta^2 = 0.3; 0 when the binarised map and the mask do not intersect.
double f_measure(const SaliencyMap& p, const GroundTruthMask& g, double threshold);
double s_measure(const SaliencyMap& p, const GroundTruthMask& g);
/// Enhanced alignment of the binarised map, clamped to <= 1.
double e_measure(const SaliencyMap& p, const GroundTruthMask& g, double threshold);

inline constexpr std::size_t kCurvePoints = 256;

struct CurveRow {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
    double e = 0.0;
};

/// Thresholds k / 255 for k = 0..255.
std::vector<CurveRow> fe_curves(const SaliencyMap& p, const GroundTruthMask& g);

struct ImageScores {
    std::string id;
    double mae = 0.0;
    double f_adaptive = 0.0;
    double s = 0.0;
    double e_adaptive = 0.0;
    std::vector<CurveRow> curves;
};

ImageScores evaluate_image(const std::string& id, const SaliencyMap& p, const GroundTruthMask& g);

struct MetricReport {
    std::vector<ImageScores> images;  // sorted by id
    double mae = 0.0;
    double f_adaptive = 0.0;
    double s = 0.0;
    double e_adaptive = 0.0;
    std::vector<CurveRow> curves;  // pointwise mean over images
};

/// Means are summed in id order, so the result does not depend on input order.
MetricReport aggregate_report(std::vector<ImageScores> images);

/// `id,MAE,F_adp,S,E_adp` rows plus a MEAN row, 6 decimals.
std::string format_report(const MetricReport& r);
/// `threshold,F,E`, 256 rows, 6 decimals.
std::string format_curves(const std::vector<CurveRow>& curves);

void write_report(const std::string& path, const MetricReport& r);
void write_curves(const std::string& path, const std::vector<CurveRow>& curves);

}  // namespace sanet

// Hybrid saliency objective: BCE + soft IoU + continuous E-measure, summed
// over every prediction head.
#pragma once

#include <vector>

#include "sanet/network.hpp"

namespace sanet {

/// Pixel mean of -[g ln p + (1 - g) ln(1 - p)] with p clamped to [1e-7, 1 - 1e-7].
Tensor bce_loss(const Tensor& p, const Tensor& g);
/// 1 - (sum(p g) + 1) / (sum(p + g - p g) + 1).
Tensor iou_loss(const Tensor& p, const Tensor& g);
/// 1 - mean((xi + 1)^2 / 4) on the unbinarised map.
Tensor em_loss(const Tensor& p, const Tensor& g);

struct HeadLoss {
    double bce = 0.0, iou = 0.0, em = 0.0;
    double total() const { return bce + iou + em; }
};

struct LossBreakdown {
    std::vector<HeadLoss> heads;
    double bce = 0.0, iou = 0.0, em = 0.0;
    Tensor total;  // differentiable scalar
};

LossBreakdown hybrid_loss(const Prediction& preds, const Tensor& g);

}  // namespace sanet

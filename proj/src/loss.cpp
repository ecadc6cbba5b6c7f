#include "sanet/loss.hpp"

namespace sanet {

namespace {

constexpr double kClamp = 1e-7;
constexpr double kIouSmooth = 1.0;
constexpr double kEmEps = 1e-8;

void require_pair(const char* op, const Tensor& p, const Tensor& g) {
    if (p.shape() != g.shape())
        throw DimensionError(std::string(op) + ": prediction " + p.shape().str() + " vs mask " + g.shape().str());
}

Tensor one_minus(const Tensor& x) { return add_scalar(scale(x, -1.0), 1.0); }

}  // namespace

Tensor bce_loss(const Tensor& p, const Tensor& g) {
    require_pair("bce_loss", p, g);
    Tensor pc = clamp(p, kClamp, 1.0 - kClamp);
    Tensor ll = add(hadamard(g, log(pc)), hadamard(one_minus(g), log(one_minus(pc))));
    return scale(mean(ll), -1.0);
}

Tensor iou_loss(const Tensor& p, const Tensor& g) {
    require_pair("iou_loss", p, g);
    Tensor pg = hadamard(p, g);
    Tensor inter = add_scalar(sum(pg), kIouSmooth);
    Tensor uni = add_scalar(sum(sub(add(p, g), pg)), kIouSmooth);
    return one_minus(div(inter, uni));
}

Tensor em_loss(const Tensor& p, const Tensor& g) {
    require_pair("em_loss", p, g);
    Tensor phi_g = sub(g, mean(g));
    Tensor phi_p = sub(p, mean(p));
    Tensor num = scale(hadamard(phi_g, phi_p), 2.0);
    Tensor den = add_scalar(add(square(phi_g), square(phi_p)), kEmEps);
    Tensor enhanced = scale(square(add_scalar(div(num, den), 1.0)), 0.25);
    return one_minus(mean(enhanced));
}

LossBreakdown hybrid_loss(const Prediction& preds, const Tensor& g) {
    if (preds.maps.empty()) throw std::invalid_argument("hybrid_loss: no prediction maps");
    LossBreakdown out;
    for (const Tensor& p : preds.maps) {
        Tensor b = bce_loss(p, g), i = iou_loss(p, g), e = em_loss(p, g);
        out.heads.push_back({b.item(), i.item(), e.item()});
        out.bce += b.item();
        out.iou += i.item();
        out.em += e.item();
        Tensor head = add(add(b, i), e);
        out.total = out.total.defined() ? add(out.total, head) : head;
    }
    return out;
}

}  // namespace sanet

#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "sanet/loss.hpp"

using namespace sanet;

namespace {

Tensor mixed_mask(std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution b(0.4);
    Tensor g(Shape{1, h, w});
    for (double& v : g.data()) v = b(rng) ? 1.0 : 0.0;
    g.data()[0] = 1.0;
    g.data()[1] = 0.0;
    return g;
}

Tensor complement(const Tensor& t) {
    Tensor c = t.clone();
    for (double& v : c.data()) v = 1.0 - v;
    return c;
}

}  // namespace

TEST_CASE("bce examples") {
    Tensor g = mixed_mask(8, 8, 1);
    CHECK(bce_loss(g, g).item() <= 1e-6);
    CHECK(bce_loss(Tensor::full(Shape{1, 8, 8}, 0.5), g).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(std::isfinite(bce_loss(complement(g), g).item()));
    CHECK_THROWS(bce_loss(Tensor(Shape{1, 8, 7}), g));
}

TEST_CASE("iou examples") {
    Tensor g = mixed_mask(8, 8, 2);
    CHECK(std::abs(iou_loss(g, g).item()) <= 1e-6);
    double k = 0;
    for (double v : g.data()) k += v;
    CHECK(iou_loss(Tensor::zeros(g.shape()), g).item() == doctest::Approx(1.0 - 1.0 / (k + 1.0)).epsilon(1e-12));
    CHECK_THROWS(iou_loss(Tensor(Shape{1, 4, 4}), g));
}

TEST_CASE("em examples") {
    Tensor g = mixed_mask(8, 8, 3);
    CHECK(em_loss(g, g).item() <= 1e-6);
    CHECK(em_loss(Tensor::full(g.shape(), 0.37), g).item() == doctest::Approx(0.75).epsilon(1e-12));

    std::mt19937_64 rng(4);
    for (int i = 0; i < 10; ++i) {
        Tensor p = testutil::random_tensor(g.shape(), rng, 0.0, 1.0);
        const double a = em_loss(p, g).item();
        const double b = em_loss(complement(p), complement(g)).item();
        CHECK(std::abs(a - b) <= 1e-12);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
    }
}

TEST_CASE("hybrid loss sums heads and terms") {
    Tensor g = mixed_mask(8, 8, 5);
    Prediction perfect{{g, g, g}};
    LossBreakdown lb = hybrid_loss(perfect, g);
    CHECK(lb.heads.size() == 3);
    CHECK(lb.total.item() <= 3e-6);

    std::mt19937_64 rng(6);
    Prediction pred;
    for (int i = 0; i < 3; ++i) pred.maps.push_back(testutil::random_tensor(g.shape(), rng, 0.0, 1.0));
    lb = hybrid_loss(pred, g);
    double expect = 0.0, bce = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double b = bce_loss(pred.maps[i], g).item();
        const double u = iou_loss(pred.maps[i], g).item();
        const double e = em_loss(pred.maps[i], g).item();
        CHECK(lb.heads[i].bce == b);
        CHECK(lb.heads[i].iou == u);
        CHECK(lb.heads[i].em == e);
        expect += b + u + e;
        bce += b;
    }
    CHECK(lb.total.item() == doctest::Approx(expect).epsilon(1e-14));
    CHECK(lb.bce == doctest::Approx(bce).epsilon(1e-14));
    CHECK(lb.bce + lb.iou + lb.em == doctest::Approx(lb.total.item()).epsilon(1e-14));
}

TEST_CASE("single-output ablation gives one loss head") {
    ModelConfig cfg;
    cfg.slices = 2;
    cfg.base_channels = 2;
    cfg.rfb_channels = 4;
    cfg.decoder_channels = 2;
    cfg.input_size = 32;
    cfg.ablation = Ablation::PF1;
    SaNet net(cfg, 1);
    std::mt19937_64 rng(7);
    Tensor aif = testutil::random_tensor(Shape{3, 32, 32}, rng, 0.0, 1.0);
    Tensor st = testutil::random_tensor(Shape{2, 3, 32, 32}, rng, 0.0, 1.0);
    LossBreakdown lb = hybrid_loss(net.forward(aif, st), mixed_mask(32, 32, 8));
    CHECK(lb.heads.size() == 1);
    CHECK(lb.total.item() == doctest::Approx(lb.heads[0].total()).epsilon(1e-14));

    cfg.ablation = Ablation::PF2;
    SaNet net2(cfg, 1);
    CHECK(hybrid_loss(net2.forward(aif, st), mixed_mask(32, 32, 8)).heads.size() == 3);
}

TEST_CASE("loss gradients") {
    Tensor g = mixed_mask(8, 8, 9);
    std::mt19937_64 rng(10);
    // Keep away from the BCE clamp.
    Tensor p = testutil::random_tensor(g.shape(), rng, 0.05, 0.95);
    CHECK(grad_check([&](const Tensor& x) { return bce_loss(x, g); }, p.clone()) <= 1e-4);
    CHECK(grad_check([&](const Tensor& x) { return iou_loss(x, g); }, p.clone()) <= 1e-4);
    CHECK(grad_check([&](const Tensor& x) { return em_loss(x, g); }, p.clone()) <= 1e-4);

    std::vector<Tensor> maps;
    for (int i = 0; i < 3; ++i) maps.push_back(testutil::random_param(g.shape(), rng, 0.05, 0.95));
    GradCheckReport r = grad_check([&] { return hybrid_loss(Prediction{maps}, g).total; }, maps);
    CHECK(r.max_rel_error <= 1e-4);
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "metric_oracle.hpp"
#include "sanet/metrics.hpp"

using namespace sanet;

namespace {

SaliencyMap to_map(const oracle::Pair& x) {
    std::vector<double> v;
    for (const auto& row : x.p) v.insert(v.end(), row.begin(), row.end());
    return SaliencyMap(x.h, x.w, v);
}

GroundTruthMask to_mask(const oracle::Pair& x) {
    std::vector<std::uint8_t> v;
    for (const auto& row : x.g)
        for (int g : row) v.push_back(std::uint8_t(g));
    return GroundTruthMask(x.h, x.w, v);
}

SaliencyMap map2(std::vector<double> v) { return SaliencyMap(2, 2, std::move(v)); }
GroundTruthMask mask2(std::vector<std::uint8_t> v) { return GroundTruthMask(2, 2, std::move(v)); }

}  // namespace

TEST_CASE("metrics match the brute-force oracle on 50 random pairs") {
    std::mt19937_64 rng(2024);
    for (int n = 0; n < 50; ++n) {
        const int kind = n < 5 ? 1 : n < 10 ? 2 : n < 20 ? 3 : 0;
        const oracle::Pair x = oracle::random_pair(16, 16, rng, kind);
        const SaliencyMap p = to_map(x);
        const GroundTruthMask g = to_mask(x);
        CAPTURE(n);

        CHECK(std::abs(mae(p, g) - oracle::mae(x)) <= 1e-9);
        const double tau = oracle::adaptive(x);
        CHECK(std::abs(adaptive_threshold(p) - tau) <= 1e-12);
        CHECK(std::abs(f_measure(p, g, tau) - oracle::fmeasure(x, tau).f) <= 1e-9);
        CHECK(std::abs(e_measure(p, g, tau) - oracle::emeasure(x, tau)) <= 1e-9);
        CHECK(std::abs(s_measure(p, g) - oracle::smeasure(x)) <= 1e-9);

        const auto rows = fe_curves(p, g);
        REQUIRE(rows.size() == 256);
        int bad = 0;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const double t = double(k) / 255.0;
            const oracle::PR pr = oracle::fmeasure(x, t);
            bad += rows[k].threshold != t;
            bad += std::abs(rows[k].precision - pr.precision) > 1e-9;
            bad += std::abs(rows[k].recall - pr.recall) > 1e-9;
            bad += std::abs(rows[k].f - pr.f) > 1e-9;
            bad += std::abs(rows[k].e - oracle::emeasure(x, t)) > 1e-9;
        }
        CHECK(bad == 0);

        const ImageScores s = evaluate_image("x", p, g);
        CHECK(s.mae == mae(p, g));
        CHECK(s.f_adaptive == f_measure(p, g, tau));
        CHECK(s.s == s_measure(p, g));
        CHECK(s.e_adaptive == e_measure(p, g, tau));
        for (double v : {s.mae, s.f_adaptive, s.s, s.e_adaptive}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("mae examples") {
    CHECK(mae(map2({0.2, 0.4, 0.6, 0.8}), mask2({0, 0, 1, 1})) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(mae(map2({0.5, 0.5, 0.5, 0.5}), mask2({0, 0, 0, 0})) == doctest::Approx(0.5));
    CHECK(mae(map2({0, 1, 1, 0}), mask2({0, 1, 1, 0})) == 0.0);
}

TEST_CASE("adaptive threshold examples") {
    CHECK(adaptive_threshold(map2({0, 0, 0, 0})) == 0.0);
    CHECK(precision_recall(map2({0, 0, 0, 0}), mask2({1, 0, 0, 0}), 0.0).recall == 1.0);
    CHECK(adaptive_threshold(map2({0.3, 0.3, 0.2, 0.4})) == doctest::Approx(0.6));
    CHECK(adaptive_threshold(map2({0.7, 0.7, 0.6, 0.8})) == 1.0);
}

TEST_CASE("f-measure examples") {
    CHECK(f_measure(map2({0.9, 0.1, 0.8, 0.0}), mask2({1, 0, 1, 0}), 0.5) == doctest::Approx(1.0));
    CHECK(f_measure(map2({1, 1, 1, 1}), mask2({1, 1, 0, 0}), 0.5) == doctest::Approx(0.65 / 1.15).epsilon(1e-12));
    CHECK(f_measure(map2({0.9, 0.9, 0, 0}), mask2({0, 0, 1, 1}), 0.5) == 0.0);
    CHECK(f_measure(map2({0, 0, 0, 0}), mask2({0, 0, 1, 1}), 0.5) == 0.0);
}

TEST_CASE("s-measure examples") {
    CHECK(s_measure(map2({0.3, 0.3, 0.3, 0.3}), mask2({0, 0, 0, 0})) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(s_measure(map2({0.6, 0.6, 0.6, 0.6}), mask2({1, 1, 1, 1})) == doctest::Approx(0.6).epsilon(1e-12));
    std::vector<double> p(64 * 64, 0.0);
    std::vector<std::uint8_t> g(64 * 64, 0);
    for (int i = 10; i < 40; ++i)
        for (int j = 20; j < 50; ++j) p[i * 64 + j] = 1.0, g[i * 64 + j] = 1;
    CHECK(s_measure(SaliencyMap(64, 64, p), GroundTruthMask(64, 64, g)) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("e-measure examples") {
    std::vector<double> p(64 * 64, 0.0);
    std::vector<std::uint8_t> g(64 * 64, 0);
    for (int i = 5; i < 30; ++i)
        for (int j = 5; j < 30; ++j) p[i * 64 + j] = 0.9, g[i * 64 + j] = 1;
    const double e = e_measure(SaliencyMap(64, 64, p), GroundTruthMask(64, 64, g), 0.5);
    CHECK(e <= 1.0);
    CHECK(e >= 1.0 - 1e-3);

    CHECK(e_measure(map2({0, 0, 0, 0}), mask2({0, 0, 0, 0}), 0.5) == doctest::Approx(1.0));
    CHECK(e_measure(map2({1, 1, 1, 1}), mask2({0, 0, 0, 0}), 0.5) == doctest::Approx(0.0));
    CHECK(e_measure(map2({1, 1, 1, 1}), mask2({1, 1, 1, 1}), 0.5) == doctest::Approx(1.0));
}

TEST_CASE("e-measure complement symmetry") {
    std::mt19937_64 rng(5);
    for (int n = 0; n < 20; ++n) {
        oracle::Pair x = oracle::random_pair(16, 16, rng, 0);
        oracle::Pair y = x;
        // Threshold 0.5 on 1-P selects exactly the complement when no pixel equals 0.5.
        for (int i = 0; i < x.h; ++i)
            for (int j = 0; j < x.w; ++j) {
                if (x.p[i][j] == 0.5) x.p[i][j] = 0.25;
                y.p[i][j] = 1.0 - x.p[i][j];
                y.g[i][j] = 1 - x.g[i][j];
            }
        if (oracle::gt_mean(x) == 0.0 || oracle::gt_mean(x) == 1.0) continue;
        // The binarised complement is {p < 0.5}, i.e. 1 - p > 0.5.
        const double a = e_measure(to_map(x), to_mask(x), 0.5);
        const double b = e_measure(to_map(y), to_mask(y), std::nextafter(0.5, 1.0));
        CHECK(std::abs(a - b) <= 1e-12);
    }
}

TEST_CASE("curve sanity") {
    std::mt19937_64 rng(6);
    for (int n = 0; n < 10; ++n) {
        const oracle::Pair x = oracle::random_pair(16, 16, rng, 0);
        if (oracle::gt_mean(x) == 0.0) continue;
        const auto rows = fe_curves(to_map(x), to_mask(x));
        CHECK(rows[0].recall == 1.0);
        CHECK(rows[0].precision == doctest::Approx(oracle::gt_mean(x)).epsilon(1e-12));
        for (std::size_t k = 1; k < rows.size(); ++k) CHECK(rows[k].recall <= rows[k - 1].recall);
    }
}

TEST_CASE("aggregate report") {
    ImageScores a{"b", 0.1, 0.4, 0.5, 0.6, {}};
    ImageScores b{"a", 0.3, 0.6, 0.7, 0.8, {}};
    a.curves.assign(kCurvePoints, CurveRow{0, 0, 0, 0.2, 0.4});
    b.curves.assign(kCurvePoints, CurveRow{0, 0, 0, 0.4, 0.6});
    for (std::size_t k = 0; k < kCurvePoints; ++k) a.curves[k].threshold = b.curves[k].threshold = k / 255.0;

    const MetricReport single = aggregate_report({a});
    CHECK(single.f_adaptive == a.f_adaptive);
    CHECK(single.mae == a.mae);

    const MetricReport r = aggregate_report({a, b});
    CHECK(r.f_adaptive == doctest::Approx(0.5));
    CHECK(r.mae == doctest::Approx(0.2));
    CHECK(r.images[0].id == "a");
    CHECK(r.curves[7].f == doctest::Approx(0.3));
    CHECK(r.curves[7].e == doctest::Approx(0.5));

    const MetricReport swapped = aggregate_report({b, a});
    CHECK(format_report(r) == format_report(swapped));
    CHECK(format_curves(r.curves) == format_curves(swapped.curves));

    CHECK_THROWS(aggregate_report({}));
    CHECK_THROWS(aggregate_report({a, a}));
}

TEST_CASE("report formats") {
    ImageScores a{"img1", 0.1, 0.4, 0.5, 0.6, std::vector<CurveRow>(kCurvePoints)};
    for (std::size_t k = 0; k < kCurvePoints; ++k) a.curves[k] = {k / 255.0, 0.5, 0.5, 0.25, 0.75};
    const MetricReport r = aggregate_report({a});
    CHECK(format_report(r) ==
          "id,MAE,F_adp,S,E_adp\nimg1,0.100000,0.400000,0.500000,0.600000\nMEAN,0.100000,0.400000,0.500000,0.600000\n");
    const std::string c = format_curves(r.curves);
    CHECK(c.rfind("threshold,F,E\n0.000000,0.250000,0.750000\n", 0) == 0);
    CHECK(std::count(c.begin(), c.end(), '\n') == 257);
}

TEST_CASE("metric inputs are validated") {
    CHECK_THROWS(SaliencyMap(2, 2, {0.1, 1.2, 0, 0}));
    CHECK_THROWS(SaliencyMap(2, 2, {0.1}));
    CHECK_THROWS(GroundTruthMask(2, 2, {0, 2, 0, 0}));
    CHECK_THROWS(mae(map2({0, 0, 0, 0}), GroundTruthMask(1, 4, {0, 0, 0, 0})));
}

#include "sanet/metrics.hpp"

#include <algorithm>
#include <array>
#include <cfloat>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace sanet {

namespace {

constexpr double kBeta2 = 0.3;
constexpr double kAlpha = 0.5;
constexpr double kEps = 1e-8;

void require_pair(const char* op, const SaliencyMap& p, const GroundTruthMask& g) {
    if (p.height() != g.height() || p.width() != g.width())
        throw DimensionError(std::string(op) + ": map " + std::to_string(p.height()) + "x" +
                             std::to_string(p.width()) + " vs mask " + std::to_string(g.height()) + "x" +
                             std::to_string(g.width()));
}

std::pair<std::size_t, std::size_t> plane_extents(const Tensor& t, const char* what) {
    const auto& d = t.shape().dims();
    if (d.size() == 2) return {d[0], d[1]};
    if (d.size() == 3 && d[0] == 1) return {d[1], d[2]};
    throw DimensionError(std::string(what) + ": expected H x W or 1 x H x W, got " + t.shape().str());
}

struct Stats {
    double mean = 0.0;
    double var = 0.0;  // sample variance, 0 for n <= 1
};

// Region of a row-major grid: rows [r0, r1), cols [c0, c1).
struct Region {
    std::size_t r0, r1, c0, c1;
    std::size_t area() const { return (r1 - r0) * (c1 - c0); }
};

double object_score(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double m = 0.0;
    for (double x : xs) m += x;
    m /= double(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    const double sd = xs.size() > 1 ? std::sqrt(ss / double(xs.size() - 1)) : 0.0;
    return 2.0 * m / (m * m + 1.0 + sd + DBL_EPSILON);
}

double region_ssim(const SaliencyMap& p, const GroundTruthMask& g, Region r) {
    const std::size_t n = r.area();
    const std::size_t w = p.width();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = r.r0; i < r.r1; ++i)
        for (std::size_t j = r.c0; j < r.c1; ++j) {
            mx += p[i * w + j];
            my += g[i * w + j] ? 1.0 : 0.0;
        }
    mx /= double(n);
    my /= double(n);
    double sx = 0.0, sy = 0.0, sxy = 0.0;
    if (n > 1) {
        for (std::size_t i = r.r0; i < r.r1; ++i)
            for (std::size_t j = r.c0; j < r.c1; ++j) {
                const double dx = p[i * w + j] - mx, dy = (g[i * w + j] ? 1.0 : 0.0) - my;
                sx += dx * dx;
                sy += dy * dy;
                sxy += dx * dy;
            }
        sx /= double(n - 1);
        sy /= double(n - 1);
        sxy /= double(n - 1);
    }
    const double a = 4.0 * mx * my * sxy;
    const double b = (mx * mx + my * my) * (sx + sy);
    if (a != 0.0) return a / (b + DBL_EPSILON);
    return b == 0.0 ? 1.0 : 0.0;
}

double region_score(const SaliencyMap& p, const GroundTruthMask& g) {
    const std::size_t h = g.height(), w = g.width();
    double sr = 0.0, sc = 0.0, cnt = 0.0;
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
            if (g[i * w + j]) {
                sr += double(i);
                sc += double(j);
                cnt += 1.0;
            }
    // 1-based split index: quadrants are [0, y) and [y, h).
    const auto y = std::size_t(std::round(sr / cnt)) + 1;
    const auto x = std::size_t(std::round(sc / cnt)) + 1;
    const double area = double(h * w);
    const std::array<Region, 4> quads{{{0, y, 0, x}, {0, y, x, w}, {y, h, 0, x}, {y, h, x, w}}};
    double s = 0.0;
    for (const Region& q : quads) {
        if (q.r1 <= q.r0 || q.c1 <= q.c0) continue;
        s += double(q.area()) / area * region_ssim(p, g, q);
    }
    return s;
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << text;
    if (!os) throw std::runtime_error("failed writing: " + path);
}

}  // namespace

SaliencyMap::SaliencyMap(std::size_t height, std::size_t width, std::vector<double> values)
    : h_(height), w_(width), v_(std::move(values)) {
    if (h_ == 0 || w_ == 0 || v_.size() != h_ * w_)
        throw DimensionError("SaliencyMap: " + std::to_string(v_.size()) + " values for " + std::to_string(h_) +
                             "x" + std::to_string(w_));
    for (double v : v_)
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("SaliencyMap: value outside [0, 1]");
}

SaliencyMap SaliencyMap::from_tensor(const Tensor& t) {
    auto [h, w] = plane_extents(t, "SaliencyMap");
    return {h, w, std::vector<double>(t.data().begin(), t.data().end())};
}

GroundTruthMask::GroundTruthMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values)
    : h_(height), w_(width), v_(std::move(values)) {
    if (h_ == 0 || w_ == 0 || v_.size() != h_ * w_)
        throw DimensionError("GroundTruthMask: " + std::to_string(v_.size()) + " values for " +
                             std::to_string(h_) + "x" + std::to_string(w_));
    for (auto v : v_)
        if (v > 1) throw std::invalid_argument("GroundTruthMask: value not in {0, 1}");
}

GroundTruthMask GroundTruthMask::from_tensor(const Tensor& t) {
    auto [h, w] = plane_extents(t, "GroundTruthMask");
    std::vector<std::uint8_t> v(t.numel());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (t[i] != 0.0 && t[i] != 1.0) throw std::invalid_argument("GroundTruthMask: value not in {0, 1}");
        v[i] = t[i] == 1.0;
    }
    return {h, w, std::move(v)};
}

std::size_t GroundTruthMask::foreground() const noexcept {
    return std::size_t(std::count(v_.begin(), v_.end(), std::uint8_t{1}));
}

double mae(const SaliencyMap& p, const GroundTruthMask& g) {
    require_pair("mae", p, g);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs((g[i] ? 1.0 : 0.0) - p[i]);
    return s / double(p.size());
}

double adaptive_threshold(const SaliencyMap& p) {
    double s = 0.0;
    for (double v : p.values()) s += v;
    return std::min(2.0 * s / double(p.size()), 1.0);
}

PrecisionRecall precision_recall(const SaliencyMap& p, const GroundTruthMask& g, double threshold) {
    require_pair("precision_recall", p, g);
    std::size_t tp = 0, predicted = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool m = p[i] >= threshold;
        predicted += m;
        tp += m && g[i];
    }
    const std::size_t positives = g.foreground();
    PrecisionRecall pr;
    if (predicted) pr.precision = double(tp) / double(predicted);
    if (positives) pr.recall = double(tp) / double(positives);
    return pr;
}

double f_measure(const SaliencyMap& p, const GroundTruthMask& g, double threshold) {
    const auto [prec, rec] = precision_recall(p, g, threshold);
    if (prec == 0.0 || rec == 0.0) return 0.0;
    return (1.0 + kBeta2) * prec * rec / (kBeta2 * prec + rec);
}

double s_measure(const SaliencyMap& p, const GroundTruthMask& g) {
    require_pair("s_measure", p, g);
    const double n = double(p.size());
    const double mu = double(g.foreground()) / n;
    double mp = 0.0;
    for (double v : p.values()) mp += v;
    mp /= n;
    if (g.foreground() == 0) return 1.0 - mp;
    if (g.foreground() == p.size()) return mp;

    std::vector<double> fg, bg;
    for (std::size_t i = 0; i < p.size(); ++i) (g[i] ? fg : bg).push_back(g[i] ? p[i] : 1.0 - p[i]);
    const double so = mu * object_score(fg) + (1.0 - mu) * object_score(bg);
    const double sr = region_score(p, g);
    return std::clamp(kAlpha * so + (1.0 - kAlpha) * sr, 0.0, 1.0);
}

double e_measure(const SaliencyMap& p, const GroundTruthMask& g, double threshold) {
    require_pair("e_measure", p, g);
    const std::size_t n = p.size();
    std::vector<double> b(n);
    double mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        b[i] = p[i] >= threshold ? 1.0 : 0.0;
        mb += b[i];
    }
    mb /= double(n);
    const std::size_t fg = g.foreground();
    const double mg = double(fg) / double(n);

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double enhanced;
        if (fg == 0) {
            enhanced = 1.0 - b[i];
        } else if (fg == n) {
            enhanced = b[i];
        } else {
            const double pg = (g[i] ? 1.0 : 0.0) - mg, pb = b[i] - mb;
            const double xi = 2.0 * pg * pb / (pg * pg + pb * pb + kEps);
            enhanced = (xi + 1.0) * (xi + 1.0) / 4.0;
        }
        total += enhanced;
    }
    return std::min(total / (double(n) - 1.0 + kEps), 1.0);
}

std::vector<CurveRow> fe_curves(const SaliencyMap& p, const GroundTruthMask& g) {
    std::vector<CurveRow> rows(kCurvePoints);
    for (std::size_t k = 0; k < kCurvePoints; ++k) {
        const double t = double(k) / 255.0;
        const auto pr = precision_recall(p, g, t);
        rows[k] = {t, pr.precision, pr.recall, f_measure(p, g, t), e_measure(p, g, t)};
    }
    return rows;
}

ImageScores evaluate_image(const std::string& id, const SaliencyMap& p, const GroundTruthMask& g) {
    const double tau = adaptive_threshold(p);
    return {id, mae(p, g), f_measure(p, g, tau), s_measure(p, g), e_measure(p, g, tau), fe_curves(p, g)};
}

MetricReport aggregate_report(std::vector<ImageScores> images) {
    if (images.empty()) throw std::invalid_argument("aggregate_report: no images");
    std::sort(images.begin(), images.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < images.size(); ++i)
        if (images[i].id == images[i - 1].id)
            throw std::invalid_argument("aggregate_report: duplicate image id '" + images[i].id + "'");

    MetricReport r;
    const double n = double(images.size());
    r.curves.assign(kCurvePoints, CurveRow{});
    for (std::size_t k = 0; k < kCurvePoints; ++k) r.curves[k].threshold = double(k) / 255.0;
    for (const auto& im : images) {
        r.mae += im.mae;
        r.f_adaptive += im.f_adaptive;
        r.s += im.s;
        r.e_adaptive += im.e_adaptive;
        if (im.curves.size() != kCurvePoints)
            throw std::invalid_argument("aggregate_report: image '" + im.id + "' lacks curve rows");
        for (std::size_t k = 0; k < kCurvePoints; ++k) {
            r.curves[k].precision += im.curves[k].precision;
            r.curves[k].recall += im.curves[k].recall;
            r.curves[k].f += im.curves[k].f;
            r.curves[k].e += im.curves[k].e;
        }
    }
    r.mae /= n;
    r.f_adaptive /= n;
    r.s /= n;
    r.e_adaptive /= n;
    for (auto& row : r.curves) {
        row.precision /= n;
        row.recall /= n;
        row.f /= n;
        row.e /= n;
    }
    r.images = std::move(images);
    return r;
}

std::string format_report(const MetricReport& r) {
    std::string out = "id,MAE,F_adp,S,E_adp\n";
    auto line = [&](const std::string& id, double m, double f, double s, double e) {
        out += id + "," + fmt6(m) + "," + fmt6(f) + "," + fmt6(s) + "," + fmt6(e) + "\n";
    };
    for (const auto& im : r.images) line(im.id, im.mae, im.f_adaptive, im.s, im.e_adaptive);
    line("MEAN", r.mae, r.f_adaptive, r.s, r.e_adaptive);
    return out;
}

std::string format_curves(const std::vector<CurveRow>& curves) {
    std::string out = "threshold,F,E\n";
    for (const auto& row : curves) out += fmt6(row.threshold) + "," + fmt6(row.f) + "," + fmt6(row.e) + "\n";
    return out;
}

void write_report(const std::string& path, const MetricReport& r) { write_text(path, format_report(r)); }

void write_curves(const std::string& path, const std::vector<CurveRow>& curves) {
    write_text(path, format_curves(curves));
}

}  // namespace sanet

#include "sanet/dataset_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

namespace sanet {

namespace fs = std::filesystem;

namespace {

constexpr std::array<const char*, 3> kExtensions{".png", ".ppm", ".pgm"};

bool is_png(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png";
}

bool is_supported(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return std::find(kExtensions.begin(), kExtensions.end(), ext) != kExtensions.end();
}

Image read_png(const fs::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str()))
        throw DatasetError("cannot decode image " + path.string() + ": " + png.message);
    Image img;
    const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    img.width = png.width;
    img.height = png.height;
    img.channels = color ? 3 : 1;
    img.pixels.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
        png_image_free(&png);
        throw DatasetError("cannot decode image " + path.string() + ": " + png.message);
    }
    return img;
}

// Binary P5 / P6 with maxval <= 255.
Image read_pnm(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DatasetError("missing file: " + path.string());
    auto token = [&]() {
        std::string t;
        char c;
        while (is.get(c)) {
            if (c == '#') {
                std::string skip;
                std::getline(is, skip);
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                if (!t.empty()) break;
            } else {
                t += c;
            }
        }
        return t;
    };
    const std::string magic = token();
    if (magic != "P5" && magic != "P6") throw DatasetError("cannot decode image " + path.string() + ": not P5/P6");
    Image img;
    try {
        img.width = std::stoul(token());
        img.height = std::stoul(token());
        if (std::stoul(token()) > 255) throw DatasetError("cannot decode image " + path.string() + ": 16-bit PNM");
    } catch (const std::logic_error&) {
        throw DatasetError("cannot decode image " + path.string() + ": bad header");
    }
    img.channels = magic == "P6" ? 3 : 1;
    img.pixels.resize(img.width * img.height * img.channels);
    if (!is.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size())))
        throw DatasetError("cannot decode image " + path.string() + ": truncated");
    return img;
}

Tensor to_tensor(const Image& img, std::size_t channels) {
    Tensor t(Shape{channels, img.height, img.width});
    auto d = t.data();
    const std::size_t hw = img.height * img.width;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < hw; ++i)
            d[c * hw + i] = img.pixels[i * img.channels + std::min(c, img.channels - 1)] / 255.0;
    return t;
}

fs::path find_image(const fs::path& stem) {
    for (const char* ext : kExtensions) {
        fs::path p = stem;
        p += ext;
        if (fs::exists(p)) return p;
    }
    fs::path p = stem;
    p += ".png";
    throw DatasetError("missing file: " + p.string());
}

bool all_digits(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

double interp_axis(std::size_t i, std::size_t in, std::size_t out, std::size_t& i0, std::size_t& i1) {
    double src = (double(i) + 0.5) * double(in) / double(out) - 0.5;
    if (src < 0.0) src = 0.0;
    i0 = std::min(std::size_t(src), in - 1);
    i1 = std::min(i0 + 1, in - 1);
    return src - double(i0);
}

void check_extents(const Image& img, const Image& ref, const fs::path& path) {
    if (img.width != ref.width || img.height != ref.height)
        throw DatasetError("extent mismatch: " + path.string() + " is " + std::to_string(img.width) + "x" +
                           std::to_string(img.height) + ", expected " + std::to_string(ref.width) + "x" +
                           std::to_string(ref.height));
}

Tensor fit(const Tensor& x, std::size_t size) {
    return x.dim(1) == size && x.dim(2) == size ? x : resize_bilinear(x, size, size);
}

// Separable 7-tap Gaussian, sigma 1.5, replicated border.
Tensor gaussian_blur(const Tensor& x) {
    std::array<double, 7> k{};
    double s = 0.0;
    for (int i = -3; i <= 3; ++i) s += k[std::size_t(i + 3)] = std::exp(-double(i * i) / (2.0 * 1.5 * 1.5));
    for (double& v : k) v /= s;
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor tmp(x.shape()), out(x.shape());
    auto src = x.data();
    auto t = tmp.data();
    auto o = out.data();
    auto at = [](long i, std::size_t n) { return std::size_t(std::clamp(i, 0L, long(n) - 1)); };
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                double acc = 0.0;
                for (int d = -3; d <= 3; ++d) acc += k[std::size_t(d + 3)] * src[(ch * h + i) * w + at(long(j) + d, w)];
                t[(ch * h + i) * w + j] = acc;
            }
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                double acc = 0.0;
                for (int d = -3; d <= 3; ++d) acc += k[std::size_t(d + 3)] * t[(ch * h + at(long(i) + d, h)) * w + j];
                o[(ch * h + i) * w + j] = acc;
            }
    return out;
}

void clamp01(Tensor& t) {
    for (double& v : t.data()) v = std::clamp(v, 0.0, 1.0);
}

}  // namespace

Image read_image(const fs::path& path) {
    if (!fs::exists(path)) throw DatasetError("missing file: " + path.string());
    return is_png(path) ? read_png(path) : read_pnm(path);
}

void write_png_gray(const fs::path& path, const Image& img) {
    if (img.channels != 1 || img.pixels.size() != img.width * img.height)
        throw std::invalid_argument("write_png_gray: expected a single-channel image");
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = png_uint_32(img.width);
    png.height = png_uint_32(img.height);
    png.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.c_str(), 0, img.pixels.data(), 0, nullptr))
        throw std::runtime_error("cannot write " + path.string() + ": " + png.message);
}

Tensor resize_bilinear(const Tensor& x, std::size_t height, std::size_t width) {
    if (x.shape().rank() != 3) throw DimensionError("resize_bilinear: expected C x H x W, got " + x.shape().str());
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out(Shape{c, height, width});
    auto src = x.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < height; ++i) {
        std::size_t y0, y1;
        const double ly = interp_axis(i, h, height, y0, y1);
        for (std::size_t j = 0; j < width; ++j) {
            std::size_t x0, x1;
            const double lx = interp_axis(j, w, width, x0, x1);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double* p = src.data() + ch * h * w;
                const double top = (1 - lx) * p[y0 * w + x0] + lx * p[y0 * w + x1];
                const double bot = (1 - lx) * p[y1 * w + x0] + lx * p[y1 * w + x1];
                dst[(ch * height + i) * width + j] = (1 - ly) * top + ly * bot;
            }
        }
    }
    return out;
}

Tensor resize_nearest(const Tensor& x, std::size_t height, std::size_t width) {
    if (x.shape().rank() != 3) throw DimensionError("resize_nearest: expected C x H x W, got " + x.shape().str());
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out(Shape{c, height, width});
    auto src = x.data();
    auto dst = out.data();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < height; ++i) {
            const std::size_t si = std::min(i * h / height, h - 1);
            for (std::size_t j = 0; j < width; ++j)
                dst[(ch * height + i) * width + j] = src[(ch * h + si) * w + std::min(j * w / width, w - 1)];
        }
    return out;
}

DatasetManifest open_manifest(const fs::path& root, const std::string& split) {
    DatasetManifest m{root, {}, split};
    const fs::path list = root / (split + ".txt");
    if (fs::exists(list)) {
        std::ifstream is(list);
        std::string line;
        while (std::getline(is, line)) {
            line.erase(std::find(line.begin(), line.end(), '#'), line.end());
            const auto b = line.find_first_not_of(" \t\r");
            if (b == std::string::npos) continue;
            m.ids.push_back(line.substr(b, line.find_last_not_of(" \t\r") - b + 1));
        }
    } else {
        const fs::path dir = root / "aif";
        if (!fs::is_directory(dir)) throw DatasetError("missing directory: " + dir.string());
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && is_supported(e.path())) m.ids.push_back(e.path().stem().string());
        std::sort(m.ids.begin(), m.ids.end());
    }
    std::set<std::string> seen;
    for (const auto& id : m.ids)
        if (!seen.insert(id).second) throw DatasetError("duplicate sample id in manifest: " + id);
    if (m.ids.empty()) throw DatasetError("no samples found under " + root.string());
    return m;
}

Sample load_sample(const DatasetManifest& manifest, const std::string& id, const ModelConfig& cfg) {
    if (std::find(manifest.ids.begin(), manifest.ids.end(), id) == manifest.ids.end())
        throw DatasetError("sample id not in manifest: " + id);
    const fs::path root = manifest.root;
    const std::size_t n = cfg.input_size, T = cfg.slices;

    const fs::path aif_path = find_image(root / "aif" / id);
    const Image aif = read_image(aif_path);
    const fs::path gt_path = find_image(root / "gt" / id);
    const Image gt = read_image(gt_path);
    check_extents(gt, aif, gt_path);

    const fs::path fs_dir = root / "fs" / id;
    if (!fs::is_directory(fs_dir)) throw DatasetError("missing file: " + fs_dir.string());
    std::vector<std::pair<unsigned long, fs::path>> slices;
    for (const auto& e : fs::directory_iterator(fs_dir)) {
        const std::string stem = e.path().stem().string();
        if (e.is_regular_file() && is_supported(e.path()) && all_digits(stem))
            slices.emplace_back(std::stoul(stem), e.path());
    }
    std::sort(slices.begin(), slices.end());
    if (slices.empty()) throw DatasetError("missing file: no focal slices in " + fs_dir.string());
    if (slices.size() > T)
        throw DatasetError("sample " + id + " has " + std::to_string(slices.size()) + " focal slices, more than T = " +
                           std::to_string(T));

    Sample s;
    s.id = id;
    s.slice_count_original = slices.size();
    s.aif = fit(to_tensor(aif, 3), n);

    s.focal_stack = Tensor(Shape{T, 3, n, n});
    auto dst = s.focal_stack.data();
    for (std::size_t k = 0; k < slices.size(); ++k) {
        const Image img = read_image(slices[k].second);
        check_extents(img, aif, slices[k].second);
        const Tensor t = fit(to_tensor(img, 3), n);
        std::copy(t.data().begin(), t.data().end(), dst.begin() + std::ptrdiff_t(k * 3 * n * n));
    }

    Tensor raw = to_tensor(gt, 1);
    if (raw.dim(1) != n || raw.dim(2) != n) raw = resize_nearest(raw, n, n);
    for (double& v : raw.data()) v = v * 255.0 > 127.5 ? 1.0 : 0.0;
    s.gt = raw;
    return s;
}

std::vector<Sample> load_dataset(const DatasetManifest& manifest, const ModelConfig& cfg) {
    std::vector<Sample> out;
    for (const auto& id : manifest.ids) out.push_back(load_sample(manifest, id, cfg));
    return out;
}

std::vector<Sample> generate_synthetic(std::uint64_t seed, std::size_t count, const ModelConfig& cfg) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto u = [&] { return uni(rng); };
    const std::size_t n = cfg.input_size, T = cfg.slices;
    const double unit = double(n) / 32.0;

    std::vector<Sample> out;
    for (std::size_t s = 0; s < count; ++s) {
        Tensor img, mask;
        for (;;) {
            Tensor grid(Shape{3, 4, 4});
            for (double& v : grid.data()) v = u();
            img = resize_bilinear(grid, n, n);
            for (double& v : img.data()) v = 0.6 * v + 0.2 * u();
            mask = Tensor(Shape{1, n, n});

            const int objects = u() < 0.5 ? 2 : 1;
            for (int o = 0; o < objects; ++o) {
                const double cx = u() * double(n), cy = u() * double(n);
                const double a = (4.0 + u() * 8.0) * unit, b = (4.0 + u() * 8.0) * unit;
                const bool ellipse = u() < 0.5;
                const std::array<double, 3> color{u(), u(), u()};
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dx = (double(j) + 0.5 - cx) / a, dy = (double(i) + 0.5 - cy) / b;
                        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
                        if (!inside) continue;
                        mask.data()[i * n + j] = 1.0;
                        for (std::size_t c = 0; c < 3; ++c) img.data()[(c * n + i) * n + j] = color[c] + 0.1 * u();
                    }
            }
            double fg = 0.0;
            for (double v : mask.data()) fg += v;
            fg /= double(n * n);
            if (fg >= 0.02 && fg <= 0.6) break;
        }
        clamp01(img);

        // Depth planes are slice indices; a pixel is sharp only in the slice focused at its plane.
        const auto object_plane = std::min(std::size_t(u() * double(T)), T - 1);
        std::size_t background_plane = object_plane;
        if (T > 1) {
            background_plane = std::min(std::size_t(u() * double(T - 1)), T - 2);
            if (background_plane >= object_plane) ++background_plane;
        }
        const Tensor blurred = gaussian_blur(img);

        Sample smp;
        smp.id = "syn" + std::string(4 - std::min<std::size_t>(4, std::to_string(s).size()), '0') + std::to_string(s);
        smp.aif = img;
        smp.gt = mask;
        smp.slice_count_original = T;
        smp.focal_stack = Tensor(Shape{T, 3, n, n});
        auto dst = smp.focal_stack.data();
        for (std::size_t k = 0; k < T; ++k)
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t p = 0; p < n * n; ++p) {
                    const std::size_t plane = mask[p] > 0.5 ? object_plane : background_plane;
                    const std::size_t idx = c * n * n + p;
                    dst[k * 3 * n * n + idx] = std::clamp(plane == k ? img[idx] : blurred[idx], 0.0, 1.0);
                }
        out.push_back(std::move(smp));
    }
    return out;
}

void write_saliency_map(const Tensor& p, const fs::path& path) {
    const auto& d = p.shape().dims();
    if (!(d.size() == 2 || (d.size() == 3 && d[0] == 1)))
        throw DimensionError("write_saliency_map: expected 1 x H x W, got " + p.shape().str());
    Image img;
    img.height = d[d.size() - 2];
    img.width = d.back();
    img.channels = 1;
    img.pixels.resize(p.numel());
    for (std::size_t i = 0; i < p.numel(); ++i) {
        const double v = p[i];
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("write_saliency_map: value outside [0, 1]");
        img.pixels[i] = std::uint8_t(std::floor(255.0 * v + 0.5));
    }
    write_png_gray(path, img);
}

Tensor read_saliency_map(const fs::path& path) { return to_tensor(read_image(path), 1); }

Tensor read_mask(const fs::path& path) {
    Tensor t = to_tensor(read_image(path), 1);
    for (double& v : t.data()) v = v * 255.0 > 127.5 ? 1.0 : 0.0;
    return t;
}

}  // namespace sanet

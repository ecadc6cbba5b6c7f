#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "sanet/dataset_io.hpp"

using namespace sanet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("sanet_io_" + tag + "_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_ppm(const fs::path& p, std::size_t w, std::size_t h, std::uint8_t base) {
    fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    os << "P6\n" << w << " " << h << "\n255\n";
    for (std::size_t i = 0; i < w * h * 3; ++i) os.put(char(std::uint8_t(base + i % 7)));
}

void write_gray(const fs::path& p, std::size_t w, std::size_t h, std::uint8_t fill) {
    fs::create_directories(p.parent_path());
    Image img{w, h, 1, std::vector<std::uint8_t>(w * h, fill)};
    write_png_gray(p, img);
}

// One sample with n slices of w x h.
void make_sample(const fs::path& root, const std::string& id, std::size_t n, std::size_t w = 8, std::size_t h = 8) {
    write_ppm(root / "aif" / (id + ".ppm"), w, h, 10);
    for (std::size_t k = 0; k < n; ++k) {
        char name[16];
        std::snprintf(name, sizeof name, "%02zu.ppm", k);
        write_ppm(root / "fs" / id / name, w, h, std::uint8_t(20 * (k + 1)));
    }
    write_gray(root / "gt" / (id + ".png"), w, h, 200);
}

ModelConfig small(std::size_t slices, std::size_t size) {
    ModelConfig c;
    c.slices = slices;
    c.input_size = size;
    return c;
}

}  // namespace

TEST_CASE("short focal stacks are zero-padded after the real slices") {
    TempDir d("pad");
    make_sample(d.path, "a", 5);
    const Sample s = load_sample(open_manifest(d.path, "train"), "a", small(12, 8));
    CHECK(s.slice_count_original == 5);
    CHECK(s.focal_stack.shape() == Shape{12, 3, 8, 8});
    const std::size_t slice = 3 * 8 * 8;
    for (std::size_t k = 0; k < 12; ++k) {
        double sum = 0;
        for (std::size_t i = 0; i < slice; ++i) sum += s.focal_stack[k * slice + i];
        if (k < 5) {
            CHECK(sum > 0.0);
            // Slice order follows the file index; pixel 0 of slice k is 20(k+1)/255.
            CHECK(s.focal_stack[k * slice] == doctest::Approx(20.0 * double(k + 1) / 255.0));
        } else {
            CHECK(sum == 0.0);
        }
    }
    CHECK(s.aif.shape() == Shape{3, 8, 8});
    CHECK(s.aif[0] == doctest::Approx(10.0 / 255.0));
}

TEST_CASE("ground truth is binarised above 127") {
    TempDir d("gt");
    make_sample(d.path, "a", 1);
    write_gray(d.path / "gt" / "a.png", 8, 8, 100);
    make_sample(d.path, "b", 1);
    const DatasetManifest m = open_manifest(d.path, "train");
    const Sample sa = load_sample(m, "a", small(2, 8));
    const Sample sb = load_sample(m, "b", small(2, 8));
    for (double v : sa.gt.data()) CHECK(v == 0.0);
    for (double v : sb.gt.data()) CHECK(v == 1.0);
    write_gray(d.path / "gt" / "b.png", 8, 8, 128);
    CHECK(load_sample(m, "b", small(2, 8)).gt[0] == 1.0);
    write_gray(d.path / "gt" / "b.png", 8, 8, 127);
    CHECK(load_sample(m, "b", small(2, 8)).gt[0] == 0.0);
}

TEST_CASE("loading errors") {
    TempDir d("err");
    make_sample(d.path, "a", 3);
    make_sample(d.path, "b", 2);
    make_sample(d.path, "c", 2);
    const DatasetManifest m = open_manifest(d.path, "train");

    fs::remove(d.path / "gt" / "b.png");
    try {
        load_sample(m, "b", small(4, 8));
        FAIL("expected an error");
    } catch (const DatasetError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("missing file") != std::string::npos);
        CHECK(msg.find((d.path / "gt" / "b").string()) != std::string::npos);
    }

    CHECK_THROWS_AS(load_sample(m, "a", small(2, 8)), DatasetError);

    write_ppm(d.path / "fs" / "c" / "01.ppm", 6, 8, 5);
    CHECK_THROWS_WITH_AS(load_sample(m, "c", small(4, 8)), doctest::Contains("extent mismatch"), DatasetError);

    CHECK_THROWS_AS(load_sample(m, "zz", small(4, 8)), DatasetError);

    std::ofstream(d.path / "fs" / "a" / "00.ppm") << "garbage";
    CHECK_THROWS(load_sample(m, "a", small(4, 8)));
}

TEST_CASE("images are resized to the input size") {
    TempDir d("resize");
    make_sample(d.path, "a", 2, 16, 16);
    const Sample s = load_sample(open_manifest(d.path, "train"), "a", small(2, 8));
    CHECK(s.aif.shape() == Shape{3, 8, 8});
    CHECK(s.focal_stack.shape() == Shape{2, 3, 8, 8});
    CHECK(s.gt.shape() == Shape{1, 8, 8});
}

TEST_CASE("manifest discovery and split files") {
    TempDir d("manifest");
    for (const char* id : {"c", "a", "b"}) make_sample(d.path, id, 1);
    CHECK(open_manifest(d.path, "train").ids == std::vector<std::string>{"a", "b", "c"});

    std::ofstream(d.path / "test.txt") << "# held out\nc\n\n b \n";
    const DatasetManifest m = open_manifest(d.path, "test");
    CHECK(m.ids == std::vector<std::string>{"c", "b"});
    CHECK(load_dataset(m, small(1, 8)).size() == 2);

    std::ofstream(d.path / "dup.txt") << "a\na\n";
    CHECK_THROWS_AS(open_manifest(d.path, "dup"), DatasetError);
    CHECK_THROWS_AS(open_manifest(d.path / "nothing", "train"), DatasetError);
}

TEST_CASE("synthetic scenes") {
    const ModelConfig cfg = small(4, 32);
    const auto a = generate_synthetic(7, 6, cfg);
    const auto b = generate_synthetic(7, 6, cfg);
    const auto c = generate_synthetic(8, 6, cfg);
    REQUIRE(a.size() == 6);
    bool differs = false;
    const std::size_t hw = 32 * 32;
    for (std::size_t i = 0; i < a.size(); ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "syn%04zu", i);
        CHECK(a[i].id == id);
        CHECK(std::equal(a[i].aif.data().begin(), a[i].aif.data().end(), b[i].aif.data().begin()));
        CHECK(std::equal(a[i].focal_stack.data().begin(), a[i].focal_stack.data().end(),
                         b[i].focal_stack.data().begin()));
        CHECK(std::equal(a[i].gt.data().begin(), a[i].gt.data().end(), b[i].gt.data().begin()));
        differs |= !std::equal(a[i].aif.data().begin(), a[i].aif.data().end(), c[i].aif.data().begin());

        CHECK(a[i].aif.shape() == Shape{3, 32, 32});
        CHECK(a[i].focal_stack.shape() == Shape{4, 3, 32, 32});
        CHECK(a[i].gt.shape() == Shape{1, 32, 32});
        CHECK(a[i].slice_count_original == 4);

        double fg = 0;
        for (double v : a[i].gt.data()) {
            CHECK((v == 0.0 || v == 1.0));
            fg += v;
        }
        fg /= double(hw);
        CHECK(fg >= 0.02);
        CHECK(fg <= 0.6);

        // Exactly the focused slice reproduces the all-in-focus image on the object.
        int sharp = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            double diff = 0;
            for (std::size_t ch = 0; ch < 3; ++ch)
                for (std::size_t p = 0; p < hw; ++p)
                    if (a[i].gt[p] > 0.5)
                        diff = std::max(diff, std::abs(a[i].focal_stack[(k * 3 + ch) * hw + p] - a[i].aif[ch * hw + p]));
            sharp += diff == 0.0;
        }
        CHECK(sharp == 1);
        for (double v : a[i].focal_stack.data()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK(differs);
}

TEST_CASE("saliency map quantisation") {
    TempDir d("png");
    const fs::path p = d.path / "m.png";
    write_saliency_map(Tensor(Shape{1, 1, 3}, {1.0, 0.0, 0.5}), p);
    const Image img = read_image(p);
    CHECK(img.channels == 1);
    CHECK(img.pixels == std::vector<std::uint8_t>{255, 0, 128});

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor m(Shape{1, 16, 20});
    for (double& v : m.data()) v = u(rng);
    write_saliency_map(m, p);
    const Tensor back = read_saliency_map(p);
    REQUIRE(back.shape() == m.shape());
    double err = 0;
    for (std::size_t i = 0; i < m.numel(); ++i) {
        CHECK(std::abs(back[i] - m[i]) <= 0.5 / 255.0 + 1e-12);
        err += std::abs(back[i] - m[i]);
    }
    CHECK(err / double(m.numel()) <= 1.0 / 510.0);

    CHECK_THROWS(write_saliency_map(Tensor(Shape{1, 1, 1}, {1.5}), p));
    CHECK_THROWS(write_saliency_map(Tensor(Shape{2, 1, 1}), p));
}

TEST_CASE("resizing") {
    Tensor x(Shape{1, 2, 2}, {0.0, 1.0, 2.0, 3.0});
    Tensor same = resize_bilinear(x, 2, 2);
    CHECK(std::equal(same.data().begin(), same.data().end(), x.data().begin()));
    Tensor up = resize_bilinear(x, 4, 4);
    CHECK(up[0] == 0.0);
    CHECK(up[1] == doctest::Approx(0.25));
    CHECK(up[15] == 3.0);
    Tensor n = resize_nearest(x, 4, 4);
    CHECK(n[0] == 0.0);
    CHECK(n[3] == 1.0);
    CHECK(n[15] == 3.0);
    Tensor c = resize_bilinear(Tensor::full(Shape{3, 5, 7}, 0.4), 9, 4);
    for (double v : c.data()) CHECK(v == doctest::Approx(0.4));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lpcn/metrics.hpp"
#include "lpcn/png_io.hpp"
#include "lpcn/resample.hpp"
#include "lpcn/rng.hpp"

using namespace lpcn;
namespace fs = std::filesystem;

namespace {

Tensor<double> synth(int h, int w) {
    Tensor<double> img(h, w, 1);
    for (int x = 0; x < h; ++x)
        for (int y = 0; y < w; ++y)
            img(x, y, 0) = 255.0 * (0.5 + 0.25 * std::sin(0.3 * x) + 0.25 * std::cos(0.2 * y));
    return img;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("psnr basics") {
    Tensor<double> a = synth(16, 16);
    CHECK(std::isinf(psnr(a, a)));
    Tensor<double> b = a;
    for (auto& v : b.raw()) v += 1.0;
    CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(255.0 * 255.0)).epsilon(1e-12));
    CHECK(psnr(a, b) == doctest::Approx(48.1308).epsilon(1e-4));
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK_THROWS_AS(psnr(a, synth(16, 15)), ShapeError);
}

TEST_CASE("psnr decreases monotonically with uniform error") {
    Tensor<double> a = synth(12, 12);
    double prev = 1e9;
    for (double e : {0.5, 1.0, 2.0, 4.0, 8.0}) {
        Tensor<double> b = a;
        for (auto& v : b.raw()) v += e;
        const double p = psnr(a, b);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("ssim basics") {
    Tensor<double> a = synth(24, 24);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(ssim(synth(8, 8), synth(8, 8)), ArgError);  // smaller than window
    SUBCASE("adding a constant to both cancels in the mean terms") {
        // Variance and covariance are shift-invariant; only the luminance
        // term moves, and for equal-mean pairs nothing moves at all.
        Tensor<double> a2 = a;
        for (auto& v : a2.raw()) v += 10.0;
        CHECK(ssim(a2, a2) == doctest::Approx(1.0).epsilon(1e-12));
        Tensor<double> b = a;
        for (auto& v : b.raw()) v *= 0.9;
        Tensor<double> b2 = b;
        for (auto& v : b2.raw()) v += 10.0;
        CHECK(std::abs(ssim(a, b) - ssim(a2, b2)) < 5e-3);
    }
    SUBCASE("negative for a high-contrast pattern vs its negative") {
        Tensor<double> cb(22, 22, 1);
        for (int x = 0; x < 22; ++x)
            for (int y = 0; y < 22; ++y) cb(x, y, 0) = ((x / 2 + y / 2) % 2) ? 255.0 : 0.0;
        Tensor<double> neg = cb;
        for (auto& v : neg.raw()) v = 255.0 - v;
        CHECK(ssim(cb, neg) < 0.0);
    }
}

TEST_CASE("ssim matches the numpy oracle on the down-up pair") {
    Tensor<double> img = synth(32, 24);
    Tensor<double> up = resize_bicubic(resize_bicubic(img, 8, 6), 32, 24);
    // Frozen from tests/oracle/resize_metrics_oracle.py.
    CHECK(ssim(img, up) == doctest::Approx(0.993222656684459).epsilon(1e-10));
}

TEST_CASE("shave_border") {
    Tensor<double> img = synth(96, 96);
    CHECK(shave_border(img, 0) == img);
    CHECK(shave_border(img, 4).shape() == Shape{88, 88, 1});
    CHECK(shave_border(img, 4)(0, 0, 0) == img(4, 4, 0));
    CHECK_THROWS_AS(shave_border(synth(8, 8), 4), ArgError);
}

TEST_CASE("shave isolates border corruption") {
    Rng rng(5);
    Tensor<double> clean = synth(32, 32);
    // Corrupt only the outermost 4-pixel frame.
    Tensor<double> border = clean;
    for (int x = 0; x < 32; ++x)
        for (int y = 0; y < 32; ++y)
            if (x < 4 || x >= 28 || y < 4 || y >= 28)
                border(x, y, 0) = 255.0 * rng.uniform();
    // Corrupt only an interior block.
    Tensor<double> interior = clean;
    for (int x = 12; x < 20; ++x)
        for (int y = 12; y < 20; ++y) interior(x, y, 0) = 255.0 * rng.uniform();

    // Border noise disappears after shaving; interior noise does not.
    CHECK(std::isfinite(psnr(clean, border)));
    CHECK(std::isinf(psnr(shave_border(clean, 4), shave_border(border, 4))));
    CHECK(ssim(shave_border(clean, 4), shave_border(border, 4)) == 1.0);
    CHECK(std::isfinite(psnr(shave_border(clean, 4), shave_border(interior, 4))));
    CHECK(ssim(shave_border(clean, 4), shave_border(interior, 4)) < 1.0);
}

TEST_CASE("evaluate_set pipeline") {
    TempDir dir("lpcn_metrics_test");
    // Odd sizes force the mod-crop path.
    write_png(synth(67, 53), dir.path / "a.png");
    write_png(synth(48, 48), dir.path / "b.png");

    Upscaler bicubic_up = [](const Tensor<double>& lr, int s) {
        return resize_bicubic(lr, lr.h() * s, lr.w() * s);
    };

    SUBCASE("bicubic baseline runs and is deterministic") {
        EvalReport r1 = evaluate_set(dir.path, bicubic_up, 4, dir.path / "r1.csv");
        EvalReport r2 = evaluate_set(dir.path, bicubic_up, 4, dir.path / "r2.csv");
        CHECK(r1.entries.size() == 2);
        CHECK(r1.mean_psnr == r2.mean_psnr);
        CHECK(r1.mean_ssim == r2.mean_ssim);
        CHECK(r1.mean_ssim > 0.0);
        CHECK(r1.mean_ssim <= 1.0);
        // Reports match apart from the wall-clock column.
        auto strip_seconds = [](const fs::path& p) {
            std::ifstream f(p);
            std::string out, line;
            while (std::getline(f, line)) out += line.substr(0, line.rfind(',')) + "\n";
            return out;
        };
        CHECK(strip_seconds(dir.path / "r1.csv") == strip_seconds(dir.path / "r2.csv"));
        std::ifstream f1(dir.path / "r1.csv");
        std::string s1((std::istreambuf_iterator<char>(f1)), {});
        CHECK(s1.find("name,psnr_db,ssim,seconds") == 0);
    }

    SUBCASE("identity bypass gives infinite PSNR per image") {
        // Upscaler that ignores the LR input and returns the ground truth.
        Upscaler cheat = [&](const Tensor<double>& lr, int s) {
            for (const char* n : {"a.png", "b.png"}) {
                Tensor<double> hr = luma(read_png(dir.path / n));
                const int ch = hr.h() / s * s, cw = hr.w() / s * s;
                if (ch == lr.h() * s && cw == lr.w() * s)
                    return crop_spatial(hr, Shape{ch, cw, 1});
            }
            throw ArgError("no match");
        };
        EvalReport r = evaluate_set(dir.path, cheat, 4);
        for (const auto& e : r.entries) CHECK(std::isinf(e.psnr_db));
    }

    SUBCASE("empty directory errors") {
        TempDir empty("lpcn_metrics_empty");
        CHECK_THROWS_AS(evaluate_set(empty.path, bicubic_up, 4), ArgError);
    }
}

TEST_CASE("png round trip preserves 8-bit data") {
    TempDir dir("lpcn_png_test");
    Rng rng(9);
    Tensor<double> img(13, 17, 3);
    for (auto& v : img.raw()) v = double(rng.below(256));
    write_png(img, dir.path / "x.png");
    CHECK(read_png(dir.path / "x.png") == img);
    Tensor<double> gray(5, 6, 1);
    for (auto& v : gray.raw()) v = double(rng.below(256));
    write_png(gray, dir.path / "g.png");
    CHECK(read_png(dir.path / "g.png") == gray);
}

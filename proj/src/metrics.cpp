#include "lpcn/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include "lpcn/png_io.hpp"
#include "lpcn/resample.hpp"

namespace lpcn {

double psnr(const Tensor<double>& a, const Tensor<double>& b, double peak) {
    if (a.shape() != b.shape())
        throw ShapeError("psnr: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.raw()[i] - b.raw()[i];
        mse += d * d;
    }
    mse /= double(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

// 11x11 Gaussian, normalized to sum 1.
const std::vector<double>& gaussian_window() {
    static const std::vector<double> win = [] {
        std::vector<double> w(kWin * kWin);
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i)
            for (int j = 0; j < kWin; ++j) {
                const double di = i - kWin / 2, dj = j - kWin / 2;
                const double v = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
                w[i * kWin + j] = v;
                sum += v;
            }
        for (double& v : w) v /= sum;
        return w;
    }();
    return win;
}

}  // namespace

double ssim(const Tensor<double>& a, const Tensor<double>& b, double peak) {
    if (a.shape() != b.shape())
        throw ShapeError("ssim: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    if (a.c() != 1) throw ArgError("ssim: expected single-channel inputs");
    if (a.h() < kWin || a.w() < kWin)
        throw ArgError("ssim: image smaller than the 11x11 window");
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const auto& win = gaussian_window();
    const int oh = a.h() - kWin + 1, ow = a.w() - kWin + 1;
    double total = 0.0;
    for (int x = 0; x < oh; ++x)
        for (int y = 0; y < ow; ++y) {
            double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    const double wgt = win[i * kWin + j];
                    const double va = a(x + i, y + j, 0);
                    const double vb = b(x + i, y + j, 0);
                    mu_a += wgt * va;
                    mu_b += wgt * vb;
                    aa += wgt * va * va;
                    bb += wgt * vb * vb;
                    ab += wgt * va * vb;
                }
            const double var_a = aa - mu_a * mu_a;
            const double var_b = bb - mu_b * mu_b;
            const double cov = ab - mu_a * mu_b;
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                     ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        }
    return total / (double(oh) * ow);
}

Tensor<double> shave_border(const Tensor<double>& img, int s) {
    if (s < 0) throw ArgError("shave_border: s must be >= 0");
    if (s == 0) return img;
    if (img.h() <= 2 * s || img.w() <= 2 * s)
        throw ArgError("shave_border: image too small for shave of " + std::to_string(s));
    Tensor<double> out(img.h() - 2 * s, img.w() - 2 * s, img.c());
    for (int x = 0; x < out.h(); ++x)
        for (int y = 0; y < out.w(); ++y)
            for (int c = 0; c < out.c(); ++c) out(x, y, c) = img(x + s, y + s, c);
    return out;
}

EvalReport evaluate_set(const std::filesystem::path& hr_dir, const Upscaler& upscale,
                        int scale, const std::filesystem::path& report_path) {
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(hr_dir))
        for (const auto& e : std::filesystem::directory_iterator(hr_dir)) {
            auto ext = e.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
            if (e.is_regular_file() && ext == ".png") files.push_back(e.path());
        }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ArgError("no images found in " + hr_dir.string());

    EvalReport report;
    report.scale = scale;
    for (const auto& f : files) {
        try {
            const auto t0 = std::chrono::steady_clock::now();
            Tensor<double> hr = luma(read_png(f));
            // Mod-crop so the degradation is an integer downscale.
            const int ch = hr.h() / scale * scale, cw = hr.w() / scale * scale;
            hr = crop_spatial(hr, Shape{ch, cw, 1});
            Tensor<double> lr = resize_bicubic(hr, ch / scale, cw / scale);
            Tensor<double> sr = upscale(lr, scale);
            if (sr.shape() != hr.shape())
                throw ShapeError("upscaler produced " + sr.shape().str() + ", expected " +
                                 hr.shape().str());
            Tensor<double> sr_sh = shave_border(sr, scale);
            Tensor<double> hr_sh = shave_border(hr, scale);
            EvalEntry e;
            e.name = f.filename().string();
            e.psnr_db = psnr(sr_sh, hr_sh);
            e.ssim = ssim(sr_sh, hr_sh);
            e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                            .count();
            report.entries.push_back(e);
        } catch (const std::exception& ex) {
            std::cerr << "warning: skipping " << f.string() << ": " << ex.what() << "\n";
        }
    }
    if (report.entries.empty()) throw ArgError("no image in " + hr_dir.string() + " evaluated");
    double sp = 0.0, ss = 0.0;
    int n = 0;
    for (const auto& e : report.entries) {
        if (std::isinf(e.psnr_db)) continue;  // excluded from means
        sp += e.psnr_db;
        ss += e.ssim;
        ++n;
    }
    report.mean_psnr = n ? sp / n : std::numeric_limits<double>::infinity();
    report.mean_ssim = n ? ss / n : 1.0;
    if (!report_path.empty()) write_report(report, report_path);
    return report;
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out << "name,psnr_db,ssim,seconds\n";
        out.precision(6);
        out << std::fixed;
        for (const auto& e : report.entries) {
            if (std::isinf(e.psnr_db))
                out << e.name << ",inf," << e.ssim << "," << e.seconds << "\n";
            else
                out << e.name << "," << e.psnr_db << "," << e.ssim << "," << e.seconds << "\n";
        }
        out << "aggregate,"
            << (std::isinf(report.mean_psnr) ? std::string("inf")
                                             : std::to_string(report.mean_psnr))
            << "," << report.mean_ssim << "," << report.entries.size() << "\n";
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace lpcn

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lpcn/tensor.hpp"

namespace lpcn {

// PSNR in dB for luma planes in [0, peak]; +inf for identical inputs.
double psnr(const Tensor<double>& a, const Tensor<double>& b, double peak = 255.0);

// Mean local SSIM, 11x11 Gaussian window sigma=1.5, K1=0.01, K2=0.03,
// valid-region convolution.
double ssim(const Tensor<double>& a, const Tensor<double>& b, double peak = 255.0);

// Removes s pixels from every side.
Tensor<double> shave_border(const Tensor<double>& img, int s);

struct EvalEntry {
    std::string name;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double seconds = 0.0;
};

struct EvalReport {
    std::vector<EvalEntry> entries;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    int scale = 0;
    std::string method;
};

// Per HR image: luma, mod-crop to a multiple of scale, antialiased bicubic
// degradation by 1/scale, the supplied upscaler back to HR size, border shave
// of `scale`, then PSNR/SSIM against the shaved ground truth. Writes a CSV
// report (name,psnr_db,ssim,seconds plus an aggregate footer) when
// report_path is non-empty.
using Upscaler = std::function<Tensor<double>(const Tensor<double>& lr, int scale)>;

EvalReport evaluate_set(const std::filesystem::path& hr_dir, const Upscaler& upscale,
                        int scale, const std::filesystem::path& report_path = {});

void write_report(const EvalReport& report, const std::filesystem::path& path);

}  // namespace lpcn

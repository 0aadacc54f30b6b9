#include "lpcn/resample.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace lpcn {

double cubic_kernel(double t) {
    constexpr double a = -0.5;
    const double x = std::abs(t);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

namespace {

struct FilterRow {
    int first;                    // first source index (already clamp-folded)
    std::vector<double> weights;  // sums to 1
};

// Precomputed contribution rows for one axis, MATLAB-imresize style:
// antialiasing stretches the kernel by 1/scale when shrinking.
std::vector<FilterRow> build_filter(int in_len, int out_len) {
    const double scale = double(out_len) / in_len;
    const bool antialias = scale < 1.0;
    const double kscale = antialias ? scale : 1.0;
    const double support = 2.0 / kscale;
    std::vector<FilterRow> rows(out_len);
    for (int u = 0; u < out_len; ++u) {
        const double center = (u + 0.5) / scale - 0.5;
        const int left = int(std::floor(center - support)) + 1;
        const int right = int(std::floor(center + support));
        FilterRow row;
        row.first = std::clamp(left, 0, in_len - 1);
        const int last = std::clamp(right, 0, in_len - 1);
        row.weights.assign(last - row.first + 1, 0.0);
        double sum = 0.0;
        for (int k = left; k <= right; ++k) {
            const double wgt = cubic_kernel((center - k) * kscale) * kscale;
            sum += wgt;
            // Edge clamp: out-of-range taps fold onto the border sample.
            const int idx = std::clamp(k, 0, in_len - 1);
            row.weights[idx - row.first] += wgt;
        }
        if (sum != 0.0)
            for (double& wgt : row.weights) wgt /= sum;
        rows[u] = std::move(row);
    }
    return rows;
}

Tensor<double> resize_rows(const Tensor<double>& img, const std::vector<FilterRow>& rows) {
    Tensor<double> out(int(rows.size()), img.w(), img.c());
    for (int x = 0; x < out.h(); ++x) {
        const FilterRow& row = rows[x];
        for (int y = 0; y < out.w(); ++y) {
            double* dst = out.pixel(x, y);
            for (int c = 0; c < out.c(); ++c) dst[c] = 0.0;
            for (std::size_t k = 0; k < row.weights.size(); ++k) {
                const double* src = img.pixel(row.first + int(k), y);
                const double wgt = row.weights[k];
                for (int c = 0; c < out.c(); ++c) dst[c] += wgt * src[c];
            }
        }
    }
    return out;
}

Tensor<double> resize_cols(const Tensor<double>& img, const std::vector<FilterRow>& rows) {
    Tensor<double> out(img.h(), int(rows.size()), img.c());
    for (int x = 0; x < out.h(); ++x)
        for (int y = 0; y < out.w(); ++y) {
            const FilterRow& row = rows[y];
            double* dst = out.pixel(x, y);
            for (int c = 0; c < out.c(); ++c) dst[c] = 0.0;
            for (std::size_t k = 0; k < row.weights.size(); ++k) {
                const double* src = img.pixel(x, row.first + int(k));
                const double wgt = row.weights[k];
                for (int c = 0; c < out.c(); ++c) dst[c] += wgt * src[c];
            }
        }
    return out;
}

}  // namespace

Tensor<double> resize_bicubic(const Tensor<double>& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw ShapeError("resize_bicubic: target dims must be >= 1");
    Tensor<double> cur = img;
    if (out_h != img.h()) cur = resize_rows(cur, build_filter(img.h(), out_h));
    if (out_w != img.w()) cur = resize_cols(cur, build_filter(img.w(), out_w));
    return cur;
}

namespace {

inline double clamp255(double v) { return std::clamp(v, 0.0, 255.0); }

}  // namespace

Tensor<double> rgb_to_ycbcr(const Tensor<double>& img) {
    if (img.c() != 3) throw ShapeError("rgb_to_ycbcr: expected 3 channels");
    Tensor<double> out(img.h(), img.w(), 3);
    for (int x = 0; x < img.h(); ++x)
        for (int y = 0; y < img.w(); ++y) {
            const double r = clamp255(img(x, y, 0));
            const double g = clamp255(img(x, y, 1));
            const double b = clamp255(img(x, y, 2));
            out(x, y, 0) = 16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0;
            out(x, y, 1) = 128.0 + (-37.797 * r - 74.203 * g + 112.0 * b) / 255.0;
            out(x, y, 2) = 128.0 + (112.0 * r - 93.786 * g - 18.214 * b) / 255.0;
        }
    return out;
}

Tensor<double> ycbcr_to_rgb(const Tensor<double>& img) {
    if (img.c() != 3) throw ShapeError("ycbcr_to_rgb: expected 3 channels");
    Tensor<double> out(img.h(), img.w(), 3);
    for (int x = 0; x < img.h(); ++x)
        for (int y = 0; y < img.w(); ++y) {
            const double yy = img(x, y, 0) - 16.0;
            const double cb = img(x, y, 1) - 128.0;
            const double cr = img(x, y, 2) - 128.0;
            out(x, y, 0) = clamp255(yy * 255.0 / 219.0 + cr * 255.0 * 0.701 / 112.0);
            out(x, y, 1) = clamp255(yy * 255.0 / 219.0 - cb * 255.0 * 0.886 * 0.114 / (112.0 * 0.587)
                                    - cr * 255.0 * 0.701 * 0.299 / (112.0 * 0.587));
            out(x, y, 2) = clamp255(yy * 255.0 / 219.0 + cb * 255.0 * 0.886 / 112.0);
        }
    return out;
}

Tensor<double> luma(const Tensor<double>& img) {
    if (img.c() == 1) return img;
    if (img.c() != 3) throw ShapeError("luma: expected 1 or 3 channels");
    Tensor<double> ycc = rgb_to_ycbcr(img);
    Tensor<double> out(img.h(), img.w(), 1);
    for (int x = 0; x < img.h(); ++x)
        for (int y = 0; y < img.w(); ++y) out(x, y, 0) = ycc(x, y, 0);
    return out;
}

}  // namespace lpcn

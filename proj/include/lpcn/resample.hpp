#pragma once

#include "lpcn/tensor.hpp"

namespace lpcn {

// Keys cubic kernel, a = -0.5.
double cubic_kernel(double t);

// Separable bicubic resize with pixel-center alignment: the source coordinate
// of output pixel u is (u + 0.5)/scale - 0.5, edges clamped. When an axis
// shrinks, the kernel is stretched by 1/scale and each weight row is
// renormalized to sum 1 (the benchmark-resizer antialias convention).
Tensor<double> resize_bicubic(const Tensor<double>& img, int out_h, int out_w);

// ITU-R BT.601 studio-swing conversions on [0, 255] data. Inputs are clamped
// to [0, 255] first; the inverse clamps its output the same way.
Tensor<double> rgb_to_ycbcr(const Tensor<double>& img);
Tensor<double> ycbcr_to_rgb(const Tensor<double>& img);

// Luma plane of an image already in [0, 255]; grayscale passes through.
Tensor<double> luma(const Tensor<double>& img);

}  // namespace lpcn

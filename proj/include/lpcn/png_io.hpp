#pragma once

#include <filesystem>

#include "lpcn/tensor.hpp"

namespace lpcn {

// Reads an 8- or 16-bit PNG as (H, W, 1) grayscale or (H, W, 3) RGB in
// [0, 255]. Alpha is dropped; 16-bit samples are rescaled to 8-bit range
// with a warning on stderr. Throws IoError / FormatError.
Tensor<double> read_png(const std::filesystem::path& path);

// Writes an 8-bit PNG (grayscale for 1 channel, RGB for 3), rounding and
// clamping [0, 255] data. Atomic: temp file + rename.
void write_png(const Tensor<double>& img, const std::filesystem::path& path);

}  // namespace lpcn

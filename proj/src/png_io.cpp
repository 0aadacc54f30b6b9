#include "lpcn/png_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <iostream>
#include <memory>
#include <vector>

#include "lpcn/errors.hpp"

namespace lpcn {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor<double> read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open: " + path.string());

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
        throw FormatError("not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("corrupt PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (bit_depth == 16) {
        std::cerr << "warning: 16-bit PNG rescaled to 8-bit: " << path.string() << "\n";
        png_set_strip_16(png);
    }
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int h = int(png_get_image_height(png, info));
    const int w = int(png_get_image_width(png, info));
    const int channels = int(png_get_channels(png, info));
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("unsupported PNG channel count " + std::to_string(channels) + ": " +
                          path.string());
    }

    std::vector<png_byte> rowbuf(std::size_t(w) * channels);
    Tensor<double> img(h, w, channels);
    for (int x = 0; x < h; ++x) {
        png_read_row(png, rowbuf.data(), nullptr);
        double* dst = img.pixel(x, 0);
        for (std::size_t i = 0; i < rowbuf.size(); ++i) dst[i] = double(rowbuf[i]);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const Tensor<double>& img, const std::filesystem::path& path) {
    if (img.c() != 1 && img.c() != 3)
        throw ShapeError("write_png: only 1 or 3 channels supported");
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        FilePtr fp(std::fopen(tmp.c_str(), "wb"));
        if (!fp) throw IoError("cannot open for writing: " + tmp.string());

        png_structp png =
            png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (!png) throw IoError("png_create_write_struct failed");
        png_infop info = png_create_info_struct(png);
        if (!info) {
            png_destroy_write_struct(&png, nullptr);
            throw IoError("png_create_info_struct failed");
        }
        if (setjmp(png_jmpbuf(png))) {
            png_destroy_write_struct(&png, &info);
            throw IoError("PNG write failed: " + tmp.string());
        }
        png_init_io(png, fp.get());
        png_set_IHDR(png, info, png_uint_32(img.w()), png_uint_32(img.h()), 8,
                     img.c() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);

        std::vector<png_byte> rowbuf(std::size_t(img.w()) * img.c());
        for (int x = 0; x < img.h(); ++x) {
            const double* src = img.pixel(x, 0);
            for (std::size_t i = 0; i < rowbuf.size(); ++i) {
                const double v = std::round(src[i]);
                rowbuf[i] = png_byte(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v));
            }
            png_write_row(png, rowbuf.data());
        }
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace lpcn

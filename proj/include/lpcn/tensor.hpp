#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "lpcn/errors.hpp"

namespace lpcn {

// Scalar types used across the project. Training and inference run in
// train_real; gradient-check and metric suites run in test_real.
using train_real = float;
using test_real = double;

struct Shape {
    int h = 0;  // rows
    int w = 0;  // cols
    int c = 0;  // channels

    bool operator==(const Shape&) const = default;
    std::size_t elems() const { return std::size_t(h) * w * c; }
    std::string str() const {
        return "(" + std::to_string(h) + "," + std::to_string(w) + "," + std::to_string(c) + ")";
    }
};

// Dense row-major HWC tensor. Flat index of (x, y, c) is (x*W + y)*C + c,
// so the channels of one pixel are contiguous.
template <class T>
class Tensor {
  public:
    Tensor() = default;

    Tensor(Shape s, T fill = T(0)) : shape_(s) {
        if (s.h < 1 || s.w < 1 || s.c < 1)
            throw ShapeError("tensor dims must be >= 1, got " + s.str());
        data_.assign(s.elems(), fill);
    }

    Tensor(int h, int w, int c, T fill = T(0)) : Tensor(Shape{h, w, c}, fill) {}

    const Shape& shape() const { return shape_; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    int c() const { return shape_.c; }
    std::size_t size() const { return data_.size(); }

    T& operator()(int x, int y, int ch) { return data_[idx(x, y, ch)]; }
    const T& operator()(int x, int y, int ch) const { return data_[idx(x, y, ch)]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    // Pointer to the channel vector of pixel (x, y).
    T* pixel(int x, int y) { return data_.data() + (std::size_t(x) * shape_.w + y) * shape_.c; }
    const T* pixel(int x, int y) const {
        return data_.data() + (std::size_t(x) * shape_.w + y) * shape_.c;
    }

    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    bool operator==(const Tensor&) const = default;

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.raw()[i] = static_cast<U>(data_[i]);
        return out;
    }

  private:
    std::size_t idx(int x, int y, int ch) const {
        return (std::size_t(x) * shape_.w + y) * shape_.c + ch;
    }

    Shape shape_{};
    std::vector<T> data_;
};

template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ArgError("concat_channels: empty part list");
    const int h = parts[0].h(), w = parts[0].w();
    int ctot = 0;
    for (const auto& p : parts) {
        if (p.h() != h || p.w() != w)
            throw ShapeError("concat_channels: spatial mismatch " + p.shape().str() + " vs " +
                             parts[0].shape().str());
        ctot += p.c();
    }
    Tensor<T> out(h, w, ctot);
    for (int x = 0; x < h; ++x)
        for (int y = 0; y < w; ++y) {
            T* dst = out.pixel(x, y);
            for (const auto& p : parts) {
                const T* src = p.pixel(x, y);
                for (int ch = 0; ch < p.c(); ++ch) *dst++ = src[ch];
            }
        }
    return out;
}

// Channel block [c0, c0+n) as its own tensor.
template <class T>
Tensor<T> slice_channels(const Tensor<T>& t, int c0, int n) {
    if (c0 < 0 || n < 1 || c0 + n > t.c())
        throw ShapeError("slice_channels: block [" + std::to_string(c0) + "," +
                         std::to_string(c0 + n) + ") out of " + std::to_string(t.c()));
    Tensor<T> out(t.h(), t.w(), n);
    for (int x = 0; x < t.h(); ++x)
        for (int y = 0; y < t.w(); ++y) {
            const T* src = t.pixel(x, y) + c0;
            T* dst = out.pixel(x, y);
            for (int ch = 0; ch < n; ++ch) dst[ch] = src[ch];
        }
    return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.raw()[i] += b.raw()[i];
    return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("sub: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.raw()[i] -= b.raw()[i];
    return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T k) {
    Tensor<T> out = a;
    for (auto& v : out.raw()) v *= k;
    return out;
}

// Rounds H and W up to the next multiple of m by replicating the last
// row/column. Returns the padded tensor and the original shape for cropping.
template <class T>
std::pair<Tensor<T>, Shape> pad_to_multiple(const Tensor<T>& t, int m) {
    if (m < 1) throw ArgError("pad_to_multiple: m must be >= 1");
    const int nh = (t.h() + m - 1) / m * m;
    const int nw = (t.w() + m - 1) / m * m;
    if (nh == t.h() && nw == t.w()) return {t, t.shape()};
    Tensor<T> out(nh, nw, t.c());
    for (int x = 0; x < nh; ++x) {
        const int sx = x < t.h() ? x : t.h() - 1;
        for (int y = 0; y < nw; ++y) {
            const int sy = y < t.w() ? y : t.w() - 1;
            const T* src = t.pixel(sx, sy);
            T* dst = out.pixel(x, y);
            for (int ch = 0; ch < t.c(); ++ch) dst[ch] = src[ch];
        }
    }
    return {std::move(out), t.shape()};
}

// Top-left aligned spatial crop.
template <class T>
Tensor<T> crop_spatial(const Tensor<T>& t, Shape target) {
    if (target.h > t.h() || target.w > t.w() || target.c != t.c())
        throw ShapeError("crop_spatial: target " + target.str() + " does not fit in " +
                         t.shape().str());
    if (target == t.shape()) return t;
    Tensor<T> out(target);
    for (int x = 0; x < target.h; ++x)
        for (int y = 0; y < target.w; ++y) {
            const T* src = t.pixel(x, y);
            T* dst = out.pixel(x, y);
            for (int ch = 0; ch < target.c; ++ch) dst[ch] = src[ch];
        }
    return out;
}

}  // namespace lpcn

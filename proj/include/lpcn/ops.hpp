#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "lpcn/tensor.hpp"

namespace lpcn {

struct ConvSpec {
    int kh = 3, kw = 3;
    int in_channels = 1, out_channels = 1;
    int stride = 1;
    bool transposed = false;

    bool operator==(const ConvSpec&) const = default;

    void validate() const {
        if (kh < 1 || kw < 1 || kh % 2 == 0 || kw % 2 == 0)
            throw ArgError("ConvSpec: kernel dims must be odd and >= 1");
        if (stride != 1 && stride != 2) throw ArgError("ConvSpec: stride must be 1 or 2");
        if (in_channels < 1 || out_channels < 1) throw ArgError("ConvSpec: channels must be >= 1");
    }
};

// Weights of one convolution layer, laid out (kh, kw, cin, cout) with cout
// fastest. A transposed layer with spec {in=Ci, out=Co} stores the weights of
// the forward convolution it is adjoint to, i.e. cin=Co, cout=Ci.
template <class T>
struct ConvWeights {
    int kh = 0, kw = 0, cin = 0, cout = 0;
    std::vector<T> w;
    std::vector<T> b;  // one per layer output channel

    ConvWeights() = default;
    ConvWeights(int kh_, int kw_, int cin_, int cout_, int nbias)
        : kh(kh_), kw(kw_), cin(cin_), cout(cout_),
          w(std::size_t(kh_) * kw_ * cin_ * cout_, T(0)), b(nbias, T(0)) {}

    std::size_t widx(int dx, int dy, int i, int o) const {
        return ((std::size_t(dx) * kw + dy) * cin + i) * cout + o;
    }
    T& at(int dx, int dy, int i, int o) { return w[widx(dx, dy, i, o)]; }
    const T& at(int dx, int dy, int i, int o) const { return w[widx(dx, dy, i, o)]; }

    bool operator==(const ConvWeights&) const = default;
};

template <class T>
struct ConvGrad {
    Tensor<T> d_input;
    ConvWeights<T> d_weights;  // bias gradient rides in d_weights.b
};

// ---------------------------------------------------------------------------
// Tensor rearrangement ops (exact permutations, zero information loss)
// ---------------------------------------------------------------------------

// Space-to-depth: (H, W, C) -> (H/r, W/r, C*r^2). For each source channel the
// r^2 replicas occupy a contiguous output block; replica c samples
// M[r*x + c%r, r*y + c/r].
template <class T>
Tensor<T> lossless_pool(const Tensor<T>& m, int r) {
    if (r < 1) throw ArgError("lossless_pool: r must be >= 1");
    if (m.h() % r != 0 || m.w() % r != 0)
        throw ShapeError("lossless_pool: dims " + m.shape().str() + " not divisible by r=" +
                         std::to_string(r));
    if (r == 1) return m;
    const int r2 = r * r;
    Tensor<T> out(m.h() / r, m.w() / r, m.c() * r2);
    for (int x = 0; x < out.h(); ++x)
        for (int y = 0; y < out.w(); ++y) {
            T* dst = out.pixel(x, y);
            for (int ic = 0; ic < m.c(); ++ic)
                for (int c = 0; c < r2; ++c)
                    dst[ic * r2 + c] = m(r * x + c % r, r * y + c / r, ic);
        }
    return out;
}

// Depth-to-space, the exact inverse of lossless_pool.
template <class T>
Tensor<T> subpixel_upscale(const Tensor<T>& t, int r) {
    if (r < 1) throw ArgError("subpixel_upscale: r must be >= 1");
    const int r2 = r * r;
    if (t.c() % r2 != 0)
        throw ShapeError("subpixel_upscale: channels " + std::to_string(t.c()) +
                         " not divisible by r^2=" + std::to_string(r2));
    if (r == 1) return t;
    const int cout = t.c() / r2;
    Tensor<T> out(t.h() * r, t.w() * r, cout);
    for (int i = 0; i < out.h(); ++i)
        for (int j = 0; j < out.w(); ++j) {
            const T* src = t.pixel(i / r, j / r);
            T* dst = out.pixel(i, j);
            const int c = i % r + r * (j % r);
            for (int oc = 0; oc < cout; ++oc) dst[oc] = src[oc * r2 + c];
        }
    return out;
}

// Channel permutation interleaving features from different replicas:
// out[c] = in[c / r^2 + n * (c % r^2)].
template <class T>
Tensor<T> reshuffle(const Tensor<T>& f, int n, int r) {
    const int r2 = r * r;
    if (f.c() != n * r2)
        throw ShapeError("reshuffle: channels " + std::to_string(f.c()) + " != n*r^2 = " +
                         std::to_string(n * r2));
    std::vector<int> perm(f.c());
    for (int c = 0; c < f.c(); ++c) perm[c] = c / r2 + n * (c % r2);
    Tensor<T> out(f.h(), f.w(), f.c());
    for (int x = 0; x < f.h(); ++x)
        for (int y = 0; y < f.w(); ++y) {
            const T* src = f.pixel(x, y);
            T* dst = out.pixel(x, y);
            for (int c = 0; c < f.c(); ++c) dst[c] = src[perm[c]];
        }
    return out;
}

// Inverse of reshuffle; also its backward (gradient of a permutation is the
// inverse permutation applied to the upstream gradient).
template <class T>
Tensor<T> reshuffle_inverse(const Tensor<T>& f, int n, int r) {
    const int r2 = r * r;
    if (f.c() != n * r2)
        throw ShapeError("reshuffle_inverse: channels " + std::to_string(f.c()) +
                         " != n*r^2 = " + std::to_string(n * r2));
    std::vector<int> perm(f.c());
    for (int c = 0; c < f.c(); ++c) perm[c / r2 + n * (c % r2)] = c;
    Tensor<T> out(f.h(), f.w(), f.c());
    for (int x = 0; x < f.h(); ++x)
        for (int y = 0; y < f.w(); ++y) {
            const T* src = f.pixel(x, y);
            T* dst = out.pixel(x, y);
            for (int c = 0; c < f.c(); ++c) dst[c] = src[perm[c]];
        }
    return out;
}

// ---------------------------------------------------------------------------
// Convolution (same-zero padding, output dims = ceil(in/stride))
// ---------------------------------------------------------------------------

inline int conv_out_dim(int in, int stride) { return (in + stride - 1) / stride; }

// Leading pad so total padding = max((out-1)*stride + k - in, 0), split
// floor-half at the top/left.
inline int conv_pad_before(int in, int k, int stride) {
    const int out = conv_out_dim(in, stride);
    const int total = std::max((out - 1) * stride + k - in, 0);
    return total / 2;
}

// Multiply-accumulate count of one conv2d application on an (h, w) input.
inline std::int64_t conv_mac_count(const ConvSpec& spec, int h, int w) {
    const std::int64_t oh = conv_out_dim(h, spec.stride);
    const std::int64_t ow = conv_out_dim(w, spec.stride);
    return oh * ow * spec.kh * spec.kw * spec.in_channels * spec.out_channels;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvWeights<T>& wt, const ConvSpec& spec) {
    spec.validate();
    if (spec.transposed) throw ArgError("conv2d: spec.transposed must be false");
    if (x.c() != spec.in_channels || wt.cin != spec.in_channels || wt.cout != spec.out_channels)
        throw ShapeError("conv2d: channel mismatch, input " + x.shape().str());
    if (wt.b.size() != std::size_t(spec.out_channels))
        throw ShapeError("conv2d: bias length " + std::to_string(wt.b.size()) +
                         " != out_channels " + std::to_string(spec.out_channels));
    const int s = spec.stride, kh = spec.kh, kw = spec.kw;
    const int oh = conv_out_dim(x.h(), s), ow = conv_out_dim(x.w(), s);
    const int pt = conv_pad_before(x.h(), kh, s), pl = conv_pad_before(x.w(), kw, s);
    const int cin = spec.in_channels, cout = spec.out_channels;
    Tensor<T> out(oh, ow, cout);
#pragma omp parallel for schedule(static)
    for (int ox = 0; ox < oh; ++ox) {
        std::vector<T> acc(cout);
        for (int oy = 0; oy < ow; ++oy) {
            for (int o = 0; o < cout; ++o) acc[o] = wt.b[o];
            for (int dx = 0; dx < kh; ++dx) {
                const int xi = s * ox + dx - pt;
                if (xi < 0 || xi >= x.h()) continue;
                for (int dy = 0; dy < kw; ++dy) {
                    const int yi = s * oy + dy - pl;
                    if (yi < 0 || yi >= x.w()) continue;
                    const T* px = x.pixel(xi, yi);
                    const T* wrow = wt.w.data() + (std::size_t(dx) * kw + dy) * cin * cout;
                    for (int i = 0; i < cin; ++i) {
                        const T xv = px[i];
                        const T* wr = wrow + std::size_t(i) * cout;
                        for (int o = 0; o < cout; ++o) acc[o] += xv * wr[o];
                    }
                }
            }
            T* dst = out.pixel(ox, oy);
            for (int o = 0; o < cout; ++o) dst[o] = acc[o];
        }
    }
    return out;
}

// Adjoint of conv2d with the same weights, targeting a conv input of size
// (th, tw). g has the conv's output channel count; result has cin channels.
// Gather form, so it is race-free and summation order per element is fixed.
template <class T>
Tensor<T> conv2d_adjoint(const Tensor<T>& g, const ConvWeights<T>& wt, int stride, int th,
                         int tw) {
    const int s = stride, kh = wt.kh, kw = wt.kw;
    if (g.h() != conv_out_dim(th, s) || g.w() != conv_out_dim(tw, s) || g.c() != wt.cout)
        throw ShapeError("conv2d_adjoint: gradient shape " + g.shape().str() +
                         " inconsistent with target");
    const int pt = conv_pad_before(th, kh, s), pl = conv_pad_before(tw, kw, s);
    Tensor<T> out(th, tw, wt.cin);
#pragma omp parallel for schedule(static)
    for (int u = 0; u < th; ++u) {
        for (int v = 0; v < tw; ++v) {
            T* dst = out.pixel(u, v);
            for (int i = 0; i < wt.cin; ++i) dst[i] = T(0);
            for (int dx = 0; dx < kh; ++dx) {
                const int num_x = u + pt - dx;
                if (num_x < 0 || num_x % s != 0) continue;
                const int ox = num_x / s;
                if (ox >= g.h()) continue;
                for (int dy = 0; dy < kw; ++dy) {
                    const int num_y = v + pl - dy;
                    if (num_y < 0 || num_y % s != 0) continue;
                    const int oy = num_y / s;
                    if (oy >= g.w()) continue;
                    const T* pg = g.pixel(ox, oy);
                    const T* wrow = wt.w.data() + (std::size_t(dx) * kw + dy) * wt.cin * wt.cout;
                    for (int i = 0; i < wt.cin; ++i) {
                        const T* wr = wrow + std::size_t(i) * wt.cout;
                        T acc = T(0);
                        for (int o = 0; o < wt.cout; ++o) acc += wr[o] * pg[o];
                        dst[i] += acc;
                    }
                }
            }
        }
    }
    return out;
}

// Transposed convolution: adjoint of conv2d, plus bias. spec {in=Ci, out=Co,
// stride s, transposed=true}; weights are those of the conv being transposed
// (cin=Co, cout=Ci). Output is exactly (s*h, s*w, Co).
template <class T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const ConvWeights<T>& wt, const ConvSpec& spec) {
    spec.validate();
    if (!spec.transposed) throw ArgError("transposed_conv2d: spec.transposed must be true");
    if (x.c() != spec.in_channels || wt.cout != spec.in_channels || wt.cin != spec.out_channels)
        throw ShapeError("transposed_conv2d: channel mismatch, input " + x.shape().str());
    Tensor<T> out =
        conv2d_adjoint(x, wt, spec.stride, x.h() * spec.stride, x.w() * spec.stride);
    for (int u = 0; u < out.h(); ++u)
        for (int v = 0; v < out.w(); ++v) {
            T* dst = out.pixel(u, v);
            for (int q = 0; q < out.c(); ++q) dst[q] += wt.b[q];
        }
    return out;
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (auto& v : out.raw()) v = std::max(v, T(0));
    return out;
}

// ---------------------------------------------------------------------------
// Backward passes
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> relu_backward(const Tensor<T>& forward_input, const Tensor<T>& g) {
    if (forward_input.shape() != g.shape())
        throw ShapeError("relu_backward: shape mismatch");
    Tensor<T> out = g;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!(forward_input.raw()[i] > T(0))) out.raw()[i] = T(0);
    return out;
}

template <class T>
Tensor<T> lossless_pool_backward(const Tensor<T>& g, int r) {
    return subpixel_upscale(g, r);
}

template <class T>
Tensor<T> subpixel_upscale_backward(const Tensor<T>& g, int r) {
    return lossless_pool(g, r);
}

// d_weights[dx,dy,i,o] = sum over output positions of g[.,.,o] * x[.,.,i] at
// the window offset, d_bias[o] = sum of g. Parallel over kernel rows.
template <class T>
ConvGrad<T> conv2d_backward(const Tensor<T>& x, const ConvWeights<T>& wt, const ConvSpec& spec,
                            const Tensor<T>& g) {
    const int s = spec.stride, kh = spec.kh, kw = spec.kw;
    if (g.h() != conv_out_dim(x.h(), s) || g.w() != conv_out_dim(x.w(), s) ||
        g.c() != spec.out_channels)
        throw ShapeError("conv2d_backward: upstream gradient shape " + g.shape().str());
    const int pt = conv_pad_before(x.h(), kh, s), pl = conv_pad_before(x.w(), kw, s);
    ConvGrad<T> out;
    out.d_input = conv2d_adjoint(g, wt, s, x.h(), x.w());
    out.d_weights = ConvWeights<T>(kh, kw, wt.cin, wt.cout, int(wt.b.size()));
#pragma omp parallel for schedule(static)
    for (int dx = 0; dx < kh; ++dx) {
        for (int dy = 0; dy < kw; ++dy)
            for (int ox = 0; ox < g.h(); ++ox) {
                const int xi = s * ox + dx - pt;
                if (xi < 0 || xi >= x.h()) continue;
                for (int oy = 0; oy < g.w(); ++oy) {
                    const int yi = s * oy + dy - pl;
                    if (yi < 0 || yi >= x.w()) continue;
                    const T* px = x.pixel(xi, yi);
                    const T* pg = g.pixel(ox, oy);
                    T* wrow = out.d_weights.w.data() +
                              (std::size_t(dx) * kw + dy) * wt.cin * wt.cout;
                    for (int i = 0; i < wt.cin; ++i) {
                        const T xv = px[i];
                        T* wr = wrow + std::size_t(i) * wt.cout;
                        for (int o = 0; o < wt.cout; ++o) wr[o] += xv * pg[o];
                    }
                }
            }
    }
    for (int ox = 0; ox < g.h(); ++ox)
        for (int oy = 0; oy < g.w(); ++oy) {
            const T* pg = g.pixel(ox, oy);
            for (int o = 0; o < wt.cout; ++o) out.d_weights.b[o] += pg[o];
        }
    return out;
}

// Backward of transposed_conv2d. d_input is a plain conv2d of the upstream
// gradient with the shared weights; d_weights mirrors conv2d_backward with
// the roles of input and gradient swapped.
template <class T>
ConvGrad<T> transposed_conv2d_backward(const Tensor<T>& x, const ConvWeights<T>& wt,
                                       const ConvSpec& spec, const Tensor<T>& g) {
    const int s = spec.stride, kh = spec.kh, kw = spec.kw;
    if (g.h() != x.h() * s || g.w() != x.w() * s || g.c() != spec.out_channels)
        throw ShapeError("transposed_conv2d_backward: upstream gradient shape " +
                         g.shape().str());
    ConvSpec fwd = spec;
    fwd.transposed = false;
    fwd.in_channels = wt.cin;
    fwd.out_channels = wt.cout;
    // The shared weights carry this layer's bias (spec.out_channels entries);
    // the forward-direction conv below needs a zero bias of length cout.
    ConvWeights<T> nobias(kh, kw, wt.cin, wt.cout, wt.cout);
    nobias.w = wt.w;
    ConvGrad<T> out;
    // Bias of the shared weights has cout entries while this layer's bias has
    // spec.out_channels; keep them apart.
    {
        ConvWeights<T> tmp(kh, kw, wt.cin, wt.cout, int(wt.b.size()));
        out.d_weights = tmp;
    }
    out.d_input = conv2d(g, nobias, fwd);
    const int th = g.h(), tw = g.w();
    const int pt = conv_pad_before(th, kh, s), pl = conv_pad_before(tw, kw, s);
#pragma omp parallel for schedule(static)
    for (int dx = 0; dx < kh; ++dx) {
        for (int dy = 0; dy < kw; ++dy)
            for (int ox = 0; ox < x.h(); ++ox) {
                const int ui = s * ox + dx - pt;
                if (ui < 0 || ui >= th) continue;
                for (int oy = 0; oy < x.w(); ++oy) {
                    const int vi = s * oy + dy - pl;
                    if (vi < 0 || vi >= tw) continue;
                    const T* pg = g.pixel(ui, vi);
                    const T* px = x.pixel(ox, oy);
                    T* wrow = out.d_weights.w.data() +
                              (std::size_t(dx) * kw + dy) * wt.cin * wt.cout;
                    for (int i = 0; i < wt.cin; ++i) {
                        const T gv = pg[i];
                        T* wr = wrow + std::size_t(i) * wt.cout;
                        for (int o = 0; o < wt.cout; ++o) wr[o] += gv * px[o];
                    }
                }
            }
    }
    for (int u = 0; u < g.h(); ++u)
        for (int v = 0; v < g.w(); ++v) {
            const T* pg = g.pixel(u, v);
            for (int q = 0; q < g.c(); ++q) out.d_weights.b[q] += pg[q];
        }
    return out;
}

}  // namespace lpcn

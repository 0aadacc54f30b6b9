#pragma once

#include "lpcn/ops.hpp"
#include "lpcn/tensor.hpp"

// Serial reference kernels. These are deliberately written as plain
// quadruple loops, independent of the parallel implementations in ops.hpp,
// and are used as oracles in the tests and as the baseline in bench_conv.
namespace lpcn::reference {

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvWeights<T>& wt, const ConvSpec& spec) {
    const int s = spec.stride;
    const int oh = conv_out_dim(x.h(), s), ow = conv_out_dim(x.w(), s);
    const int pt = conv_pad_before(x.h(), spec.kh, s), pl = conv_pad_before(x.w(), spec.kw, s);
    Tensor<T> out(oh, ow, spec.out_channels);
    for (int ox = 0; ox < oh; ++ox)
        for (int oy = 0; oy < ow; ++oy)
            for (int o = 0; o < spec.out_channels; ++o) {
                T acc = wt.b[o];
                for (int dx = 0; dx < spec.kh; ++dx)
                    for (int dy = 0; dy < spec.kw; ++dy)
                        for (int i = 0; i < spec.in_channels; ++i) {
                            const int xi = s * ox + dx - pt;
                            const int yi = s * oy + dy - pl;
                            if (xi < 0 || xi >= x.h() || yi < 0 || yi >= x.w()) continue;
                            acc += wt.at(dx, dy, i, o) * x(xi, yi, i);
                        }
                out(ox, oy, o) = acc;
            }
    return out;
}

// Scatter-add formulation of the transposed convolution: each input pixel
// pushes its weighted kernel into the output frame.
template <class T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const ConvWeights<T>& wt,
                            const ConvSpec& spec) {
    const int s = spec.stride;
    const int oh = x.h() * s, ow = x.w() * s;
    const int pt = conv_pad_before(oh, spec.kh, s), pl = conv_pad_before(ow, spec.kw, s);
    Tensor<T> out(oh, ow, spec.out_channels);
    for (int u = 0; u < oh; ++u)
        for (int v = 0; v < ow; ++v)
            for (int q = 0; q < spec.out_channels; ++q) out(u, v, q) = wt.b[q];
    for (int ix = 0; ix < x.h(); ++ix)
        for (int iy = 0; iy < x.w(); ++iy)
            for (int dx = 0; dx < spec.kh; ++dx)
                for (int dy = 0; dy < spec.kw; ++dy) {
                    const int u = s * ix + dx - pt;
                    const int v = s * iy + dy - pl;
                    if (u < 0 || u >= oh || v < 0 || v >= ow) continue;
                    for (int q = 0; q < spec.out_channels; ++q)
                        for (int pch = 0; pch < spec.in_channels; ++pch)
                            out(u, v, q) += wt.at(dx, dy, q, pch) * x(ix, iy, pch);
                }
    return out;
}

}  // namespace lpcn::reference

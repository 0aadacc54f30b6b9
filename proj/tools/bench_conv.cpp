// Two timing comparisons:
//  1. the OpenMP conv2d kernel vs the serial quadruple-loop reference, and
//  2. a 3x3 convolution on the space-to-depth pooled layout vs the same
//     per-branch filter count at full resolution (analytic MAC ratio r^2).
#include <chrono>
#include <cstdio>
#include <string>

#include "lpcn/ops.hpp"
#include "lpcn/reference.hpp"
#include "lpcn/rng.hpp"

using namespace lpcn;

namespace {

using clk = std::chrono::steady_clock;

template <class Fn>
double best_of(int iters, Fn&& fn) {
    double best = 1e300;
    for (int i = 0; i < iters; ++i) {
        const auto t0 = clk::now();
        fn();
        best = std::min(best, std::chrono::duration<double>(clk::now() - t0).count());
    }
    return best;
}

Tensor<float> random_image(int h, int w, int c, Rng& rng) {
    Tensor<float> t(h, w, c);
    for (auto& v : t.raw()) v = float(rng.uniform());
    return t;
}

ConvWeights<float> random_weights(const ConvSpec& s, Rng& rng) {
    ConvWeights<float> w(s.kh, s.kw, s.in_channels, s.out_channels, s.out_channels);
    for (auto& v : w.w) v = float(rng.normal() * 0.05);
    for (auto& v : w.b) v = float(rng.normal() * 0.05);
    return w;
}

}  // namespace

int main(int argc, char** argv) {
    int size = 512, iters = 5;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--size" && i + 1 < argc) size = std::stoi(argv[++i]);
        else if (a == "--iters" && i + 1 < argc) iters = std::stoi(argv[++i]);
        else {
            std::fprintf(stderr, "usage: bench_conv [--size N] [--iters N]\n");
            return 2;
        }
    }
    Rng rng(1);

    // --- parallel kernel vs serial reference ------------------------------
    {
        const ConvSpec spec{3, 3, 16, 16, 1, false};
        Tensor<float> x = random_image(size / 4, size / 4, 16, rng);
        ConvWeights<float> w = random_weights(spec, rng);
        volatile float sink = 0.0f;
        const double t_par = best_of(iters, [&] { sink = conv2d(x, w, spec).raw()[0]; });
        const double t_ref =
            best_of(iters, [&] { sink = reference::conv2d(x, w, spec).raw()[0]; });
        (void)sink;
        std::printf("kernel check   : 3x3 16->16 @ %dx%d\n", size / 4, size / 4);
        std::printf("  omp kernel   : %.4f s\n", t_par);
        std::printf("  serial ref   : %.4f s (x%.2f)\n", t_ref, t_ref / t_par);
    }

    // --- pooled layout vs full resolution ---------------------------------
    {
        const int r = 2, n = 16;
        const ConvSpec pooled_spec{3, 3, 1, n, 1, false};
        const ConvSpec full_spec{3, 3, 1, n * r * r, 1, false};
        const std::int64_t mac_pooled =
            r * r * conv_mac_count(pooled_spec, size / r, size / r);
        const std::int64_t mac_full = conv_mac_count(full_spec, size, size);

        Tensor<float> replica = random_image(size / r, size / r, 1, rng);
        Tensor<float> full_img = random_image(size, size, 1, rng);
        ConvWeights<float> wp = random_weights(pooled_spec, rng);
        ConvWeights<float> wf = random_weights(full_spec, rng);
        volatile float sink = 0.0f;
        const double t_pooled = best_of(iters, [&] {
            for (int i = 0; i < r * r; ++i) sink = conv2d(replica, wp, pooled_spec).raw()[0];
        });
        const double t_full =
            best_of(iters, [&] { sink = conv2d(full_img, wf, full_spec).raw()[0]; });
        (void)sink;
        std::printf("layout check   : 3x3, %d filters/branch, r=%d @ %dx%d\n", n, r, size,
                    size);
        std::printf("  MACs pooled  : %lld\n", (long long)mac_pooled);
        std::printf("  MACs full    : %lld (ratio %.2f)\n", (long long)mac_full,
                    double(mac_full) / double(mac_pooled));
        std::printf("  pooled       : %.4f s\n", t_pooled);
        std::printf("  full res     : %.4f s (x%.2f)\n", t_full, t_full / t_pooled);
    }
    return 0;
}

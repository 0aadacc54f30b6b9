#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lpcn/binio.hpp"
#include "lpcn/ops.hpp"
#include "lpcn/rng.hpp"
#include "lpcn/tensor.hpp"

namespace lpcn {

enum class Mode : std::uint8_t { LPCN_SR = 0, LPCN_SR_PLUS = 1 };

inline std::string mode_name(Mode m) {
    return m == Mode::LPCN_SR ? "lpcn" : "lpcn-plus";
}

struct LayerSpec {
    ConvSpec conv;
    bool activation = true;

    bool operator==(const LayerSpec&) const = default;
};

// Declarative network description. The encoder-decoder is shared between the
// two branches in PLUS mode; everything else is branch-local.
struct ArchSpec {
    int r = 2;
    ConvSpec replica_conv;               // per-replica conv, r^2 separate parameter sets
    ConvSpec branchB_conv;               // PLUS: full-resolution input conv
    std::vector<LayerSpec> encdec;       // first half conv, second half transposed
    std::vector<std::pair<int, int>> skip_pairs;  // 1-based (encoder, decoder) layer ids
    ConvSpec head_conv;                  // branch A head, produces r^2 channels
    ConvSpec branchB_head;               // PLUS: produces SR image B
    ConvSpec fusion_conv;                // PLUS: 1x1 mixing of A and B
    Mode mode = Mode::LPCN_SR;

    bool operator==(const ArchSpec&) const = default;

    static ArchSpec defaults(Mode mode) {
        ArchSpec a;
        a.mode = mode;
        a.r = 2;
        a.replica_conv = {3, 3, 1, 16, 1, false};
        a.branchB_conv = {3, 3, 1, 64, 1, false};
        const int enc_strides[5] = {1, 2, 1, 2, 1};
        for (int i = 0; i < 5; ++i)
            a.encdec.push_back({{3, 3, 64, 64, enc_strides[i], false}, true});
        for (int i = 0; i < 5; ++i)
            a.encdec.push_back({{3, 3, 64, 64, enc_strides[4 - i], true}, true});
        // Mirror pairs whose spatial shapes line up (the stride-1 encoder layers).
        a.skip_pairs = {{1, 10}, {3, 8}, {5, 6}};
        a.head_conv = {3, 3, 64, 4, 1, false};
        a.branchB_head = {3, 3, 64, 1, 1, false};
        a.fusion_conv = {1, 1, 2, 1, 1, false};
        return a;
    }

    // Reduced variant for finite-difference testing: 2-layer encoder-decoder,
    // narrow channels.
    static ArchSpec tiny(Mode mode, int channels = 4, int replica_filters = 2) {
        ArchSpec a;
        a.mode = mode;
        a.r = 2;
        a.replica_conv = {3, 3, 1, replica_filters, 1, false};
        const int c = replica_filters * 4;
        a.branchB_conv = {3, 3, 1, c, 1, false};
        a.encdec.push_back({{3, 3, c, channels, 2, false}, true});
        a.encdec.push_back({{3, 3, channels, c, 2, true}, true});
        a.skip_pairs = {};
        a.head_conv = {3, 3, c, 4, 1, false};
        a.branchB_head = {3, 3, c, 1, 1, false};
        a.fusion_conv = {1, 1, 2, 1, 1, false};
        return a;
    }

    int n_encdec() const { return int(encdec.size()); }
    int replica_count() const { return r * r; }

    void validate() const {
        if (r < 1) throw ArgError("ArchSpec: r must be >= 1");
        const int n = n_encdec();
        if (n < 2 || n % 2 != 0)
            throw ArgError("ArchSpec: encoder-decoder needs an even layer count >= 2");
        for (int i = 0; i < n; ++i) {
            encdec[i].conv.validate();
            const bool dec = i >= n / 2;
            if (encdec[i].conv.transposed != dec)
                throw ArgError("ArchSpec: layers 1.." + std::to_string(n / 2) +
                               " must be convolutions, the rest transposed");
            if (dec && encdec[i].conv.stride != encdec[n - 1 - i].conv.stride)
                throw ArgError("ArchSpec: decoder strides must mirror the encoder");
        }
        replica_conv.validate();
        head_conv.validate();
        if (replica_conv.in_channels != 1)
            throw ArgError("ArchSpec: replica conv must take a single channel");
        if (replica_conv.out_channels * r * r != encdec.front().conv.in_channels)
            throw ArgError("ArchSpec: fused replica channels must match encoder input");
        if (head_conv.in_channels != encdec.back().conv.out_channels)
            throw ArgError("ArchSpec: head conv input channel mismatch");
        if (head_conv.out_channels != r * r)
            throw ArgError("ArchSpec: head conv must produce r^2 channels");
        for (auto [e, d] : skip_pairs) {
            if (e < 1 || e > n / 2 || d <= n / 2 || d > n)
                throw ArgError("ArchSpec: skip pair out of range");
            if (d != n + 1 - e) throw ArgError("ArchSpec: skips must connect mirror layers");
            if (encdec[e - 1].conv.stride != 1)
                throw ArgError("ArchSpec: skip source layer must have stride 1");
        }
        if (mode == Mode::LPCN_SR_PLUS) {
            branchB_conv.validate();
            branchB_head.validate();
            fusion_conv.validate();
            if (branchB_conv.in_channels != 1 ||
                branchB_conv.out_channels != encdec.front().conv.in_channels)
                throw ArgError("ArchSpec: branch B input conv channel mismatch");
            if (branchB_head.in_channels != encdec.back().conv.out_channels ||
                branchB_head.out_channels != 1)
                throw ArgError("ArchSpec: branch B head channel mismatch");
            if (fusion_conv.kh != 1 || fusion_conv.kw != 1 || fusion_conv.in_channels != 2 ||
                fusion_conv.out_channels != 1)
                throw ArgError("ArchSpec: fusion conv must be 1x1, 2->1");
        }
    }
};

template <class T>
struct ModelParams {
    ArchSpec arch;
    std::vector<ConvWeights<T>> replica;  // r^2 independent parameter sets
    std::vector<ConvWeights<T>> encdec;   // shared between branches in PLUS mode
    ConvWeights<T> head;
    ConvWeights<T> branchB_in;    // PLUS only
    ConvWeights<T> branchB_head;  // PLUS only
    ConvWeights<T> fusion;        // PLUS only

    Mode mode() const { return arch.mode; }
    bool operator==(const ModelParams&) const = default;
};

namespace detail {

template <class T>
ConvWeights<T> weights_for(const ConvSpec& s) {
    if (s.transposed)
        return ConvWeights<T>(s.kh, s.kw, s.out_channels, s.in_channels, s.out_channels);
    return ConvWeights<T>(s.kh, s.kw, s.in_channels, s.out_channels, s.out_channels);
}

template <class T>
void he_fill(ConvWeights<T>& wt, Rng& rng) {
    const double stddev = std::sqrt(2.0 / (double(wt.kh) * wt.kw * wt.cin));
    for (auto& v : wt.w) v = T(rng.normal() * stddev);
}

}  // namespace detail

// Zero-valued parameter set with the right shapes (used for gradients).
template <class T>
ModelParams<T> zero_params(const ArchSpec& arch) {
    arch.validate();
    ModelParams<T> p;
    p.arch = arch;
    for (int i = 0; i < arch.replica_count(); ++i)
        p.replica.push_back(detail::weights_for<T>(arch.replica_conv));
    for (const auto& l : arch.encdec) p.encdec.push_back(detail::weights_for<T>(l.conv));
    p.head = detail::weights_for<T>(arch.head_conv);
    if (arch.mode == Mode::LPCN_SR_PLUS) {
        p.branchB_in = detail::weights_for<T>(arch.branchB_conv);
        p.branchB_head = detail::weights_for<T>(arch.branchB_head);
        p.fusion = detail::weights_for<T>(arch.fusion_conv);
    }
    return p;
}

// He-initialized weights, zero biases; the fusion layer starts as a plain
// average of the two branch outputs.
template <class T>
ModelParams<T> build_model(const ArchSpec& arch, std::uint64_t seed) {
    ModelParams<T> p = zero_params<T>(arch);
    Rng rng(seed);
    for (auto& wt : p.replica) detail::he_fill(wt, rng);
    for (auto& wt : p.encdec) detail::he_fill(wt, rng);
    detail::he_fill(p.head, rng);
    if (arch.mode == Mode::LPCN_SR_PLUS) {
        detail::he_fill(p.branchB_in, rng);
        detail::he_fill(p.branchB_head, rng);
        p.fusion.w[0] = T(0.5);
        p.fusion.w[1] = T(0.5);
    }
    return p;
}

// Fixed layer enumeration used by the optimizer and the file format.
template <class T, class Fn>
void for_each_layer(ModelParams<T>& p, Fn&& fn) {
    for (std::size_t i = 0; i < p.replica.size(); ++i)
        fn("replica" + std::to_string(i), p.replica[i]);
    for (std::size_t i = 0; i < p.encdec.size(); ++i)
        fn("encdec" + std::to_string(i), p.encdec[i]);
    fn(std::string("head"), p.head);
    if (p.arch.mode == Mode::LPCN_SR_PLUS) {
        fn(std::string("branchB_in"), p.branchB_in);
        fn(std::string("branchB_head"), p.branchB_head);
        fn(std::string("fusion"), p.fusion);
    }
}

template <class T, class Fn>
void for_each_layer(const ModelParams<T>& p, Fn&& fn) {
    for_each_layer(const_cast<ModelParams<T>&>(p),
                   [&](const std::string& id, ConvWeights<T>& wt) {
                       fn(id, const_cast<const ConvWeights<T>&>(wt));
                   });
}

template <class T>
std::size_t total_params(const ModelParams<T>& p) {
    std::size_t n = 0;
    for_each_layer(p, [&](const std::string&, const ConvWeights<T>& wt) {
        n += wt.w.size() + wt.b.size();
    });
    return n;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

template <class T>
struct EncDecContext {
    std::vector<Tensor<T>> input;    // input of each layer
    std::vector<Tensor<T>> pre_act;  // conv output before activation/crop
    std::vector<Tensor<T>> output;   // layer output (after activation and skips)
};

template <class T>
struct ForwardContext {
    Tensor<T> input;                     // bicubic luma, (H, W, 1)
    std::vector<Tensor<T>> replica_in;   // single-channel replicas
    std::vector<Tensor<T>> replica_pre;  // per-replica conv outputs pre-ReLU
    EncDecContext<T> encdecA;
    Tensor<T> headA_in;
    Tensor<T> image_a;
    // PLUS branch
    Tensor<T> b0_pre;
    EncDecContext<T> encdecB;
    Tensor<T> headB_in;
    Tensor<T> image_b;
    Tensor<T> fusion_in;
    bool kept = false;
};

namespace detail {

template <class T>
Tensor<T> encdec_forward(const ModelParams<T>& p, const Tensor<T>& x0, EncDecContext<T>* ctx) {
    const auto& layers = p.arch.encdec;
    const int n = int(layers.size());
    Tensor<T> cur = x0;
    std::vector<Shape> in_shapes;
    // Skip sources are only needed until their decoder partner consumes them.
    std::vector<Tensor<T>> skip_src(n);
    if (ctx) {
        ctx->input.clear();
        ctx->pre_act.clear();
        ctx->output.clear();
    }
    for (int li = 0; li < n; ++li) {
        const auto& spec = layers[li].conv;
        in_shapes.push_back(cur.shape());
        if (ctx) ctx->input.push_back(cur);
        Tensor<T> pre = spec.transposed ? transposed_conv2d(cur, p.encdec[li], spec)
                                        : conv2d(cur, p.encdec[li], spec);
        Tensor<T> out = layers[li].activation ? relu(pre) : pre;
        if (ctx) ctx->pre_act.push_back(std::move(pre));
        if (spec.transposed) {
            // Retrace exactly: crop to the mirror encoder layer's input size
            // (only matters when a stride-2 stage saw an odd dimension).
            const Shape& mirror_in = in_shapes[n - 1 - li];
            if (mirror_in.h != out.h() || mirror_in.w != out.w())
                out = crop_spatial(out, Shape{mirror_in.h, mirror_in.w, out.c()});
        }
        for (auto [e, d] : p.arch.skip_pairs)
            if (d - 1 == li) out = lpcn::add(out, skip_src[e - 1]);
        for (auto [e, d] : p.arch.skip_pairs)
            if (e - 1 == li) skip_src[li] = out;
        if (ctx) ctx->output.push_back(out);
        cur = std::move(out);
    }
    return cur;
}

// Accumulates shared-layer gradients into grads.encdec and returns d_x0.
template <class T>
Tensor<T> encdec_backward(const ModelParams<T>& p, const EncDecContext<T>& ctx,
                          const Tensor<T>& d_out, ModelParams<T>& grads) {
    const auto& layers = p.arch.encdec;
    const int n = int(layers.size());
    // Per-layer output gradients; skips add extra contributions.
    std::vector<Tensor<T>> d_output(n);
    d_output[n - 1] = d_out;
    Tensor<T> d_next;  // gradient flowing into layer li's output
    for (int li = n - 1; li >= 0; --li) {
        Tensor<T> g = d_output[li];
        const auto& spec = layers[li].conv;
        // Skip whose decoder side is this layer: gradient also flows to the
        // encoder source's output.
        for (auto [e, d] : p.arch.skip_pairs)
            if (d - 1 == li) {
                if (d_output[e - 1].size() == 0)
                    d_output[e - 1] = g;
                else
                    d_output[e - 1] = lpcn::add(d_output[e - 1], g);
            }
        if (spec.transposed) {
            // Undo the retrace crop: scatter the gradient back into the
            // uncropped (stride * input) frame.
            const Tensor<T>& in = ctx.input[li];
            const int fh = in.h() * spec.stride, fw = in.w() * spec.stride;
            if (fh != g.h() || fw != g.w()) {
                Tensor<T> padded(fh, fw, g.c());
                for (int x = 0; x < g.h(); ++x)
                    for (int y = 0; y < g.w(); ++y)
                        for (int c = 0; c < g.c(); ++c) padded(x, y, c) = g(x, y, c);
                g = std::move(padded);
            }
        }
        if (layers[li].activation) g = relu_backward(ctx.pre_act[li], g);
        ConvGrad<T> cg = spec.transposed
                             ? transposed_conv2d_backward(ctx.input[li], p.encdec[li], spec, g)
                             : conv2d_backward(ctx.input[li], p.encdec[li], spec, g);
        for (std::size_t k = 0; k < cg.d_weights.w.size(); ++k)
            grads.encdec[li].w[k] += cg.d_weights.w[k];
        for (std::size_t k = 0; k < cg.d_weights.b.size(); ++k)
            grads.encdec[li].b[k] += cg.d_weights.b[k];
        if (li > 0) {
            if (d_output[li - 1].size() == 0)
                d_output[li - 1] = cg.d_input;
            else
                d_output[li - 1] = lpcn::add(d_output[li - 1], cg.d_input);
        } else {
            d_next = cg.d_input;
        }
    }
    return d_next;
}

}  // namespace detail

// Runs the assembled graph on a bicubic-upscaled luma plane in [0, 1].
// H and W must be divisible by 4 (callers pad). Returns SR image A in basic
// mode, the fused final image in PLUS mode.
template <class T>
Tensor<T> forward(const ModelParams<T>& p, const Tensor<T>& y_bicubic, bool keep_context,
                  ForwardContext<T>* ctx_out = nullptr) {
    const ArchSpec& a = p.arch;
    if (y_bicubic.c() != 1)
        throw ShapeError("forward: expected a single-channel luma tensor");
    if (y_bicubic.h() % 4 != 0 || y_bicubic.w() % 4 != 0)
        throw ShapeError("forward: dims " + y_bicubic.shape().str() +
                         " must be divisible by 4");
    ForwardContext<T> local;
    ForwardContext<T>* ctx = keep_context ? (ctx_out ? ctx_out : &local) : nullptr;
    if (ctx) {
        *ctx = ForwardContext<T>{};
        ctx->input = y_bicubic;
    }

    const int r = a.r, nrep = a.replica_count();
    Tensor<T> lp = lossless_pool(y_bicubic, r);
    std::vector<Tensor<T>> feats;
    for (int i = 0; i < nrep; ++i) {
        Tensor<T> rep = slice_channels(lp, i, 1);
        Tensor<T> pre = conv2d(rep, p.replica[i], a.replica_conv);
        if (ctx) {
            ctx->replica_in.push_back(rep);
            ctx->replica_pre.push_back(pre);
        }
        feats.push_back(relu(pre));
    }
    Tensor<T> fused = reshuffle(concat_channels(feats), a.replica_conv.out_channels, r);
    Tensor<T> encA = detail::encdec_forward(p, fused, ctx ? &ctx->encdecA : nullptr);
    if (ctx) ctx->headA_in = encA;
    Tensor<T> headA = conv2d(encA, p.head, a.head_conv);
    Tensor<T> image_a = subpixel_upscale(headA, r);
    if (ctx) ctx->image_a = image_a;

    if (a.mode == Mode::LPCN_SR) {
        if (ctx) ctx->kept = true;
        return image_a;
    }

    Tensor<T> b0_pre = conv2d(y_bicubic, p.branchB_in, a.branchB_conv);
    if (ctx) ctx->b0_pre = b0_pre;
    Tensor<T> encB = detail::encdec_forward(p, relu(b0_pre), ctx ? &ctx->encdecB : nullptr);
    if (ctx) ctx->headB_in = encB;
    Tensor<T> image_b = conv2d(encB, p.branchB_head, a.branchB_head);
    if (ctx) ctx->image_b = image_b;
    Tensor<T> fin = concat_channels(std::vector<Tensor<T>>{image_a, image_b});
    if (ctx) {
        ctx->fusion_in = fin;
        ctx->kept = true;
    }
    return conv2d(fin, p.fusion, a.fusion_conv);
}

// Gradients for every parameter given d(loss)/d(output). In PLUS mode the
// shared encoder-decoder gradients accumulate contributions from both
// branches.
template <class T>
ModelParams<T> backward(const ModelParams<T>& p, const ForwardContext<T>& ctx,
                        const Tensor<T>& d_output) {
    if (!ctx.kept) throw StateError("backward: forward context missing (keep_context=false)");
    const ArchSpec& a = p.arch;
    ModelParams<T> grads = zero_params<T>(a);

    Tensor<T> dA;
    if (a.mode == Mode::LPCN_SR_PLUS) {
        ConvGrad<T> fg = conv2d_backward(ctx.fusion_in, p.fusion, a.fusion_conv, d_output);
        grads.fusion = fg.d_weights;
        dA = slice_channels(fg.d_input, 0, 1);
        Tensor<T> dB = slice_channels(fg.d_input, 1, 1);

        ConvGrad<T> hg = conv2d_backward(ctx.headB_in, p.branchB_head, a.branchB_head, dB);
        grads.branchB_head = hg.d_weights;
        Tensor<T> d_encB_in = detail::encdec_backward(p, ctx.encdecB, hg.d_input, grads);
        d_encB_in = relu_backward(ctx.b0_pre, d_encB_in);
        ConvGrad<T> bg = conv2d_backward(ctx.input, p.branchB_in, a.branchB_conv, d_encB_in);
        grads.branchB_in = bg.d_weights;
    } else {
        dA = d_output;
    }

    const int r = a.r;
    Tensor<T> d_headA_out = subpixel_upscale_backward(dA, r);
    ConvGrad<T> hg = conv2d_backward(ctx.headA_in, p.head, a.head_conv, d_headA_out);
    grads.head = hg.d_weights;
    Tensor<T> d_fused = detail::encdec_backward(p, ctx.encdecA, hg.d_input, grads);
    Tensor<T> d_concat = reshuffle_inverse(d_fused, a.replica_conv.out_channels, r);
    const int nf = a.replica_conv.out_channels;
    for (int i = 0; i < a.replica_count(); ++i) {
        Tensor<T> d_feat = slice_channels(d_concat, i * nf, nf);
        d_feat = relu_backward(ctx.replica_pre[i], d_feat);
        ConvGrad<T> rg =
            conv2d_backward(ctx.replica_in[i], p.replica[i], a.replica_conv, d_feat);
        grads.replica[i] = rg.d_weights;
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Model file format ("LPCN"): magic, version u32, mode u8, arch table of u32
// fields, per-layer f32 payloads in enumeration order, CRC32 trailer.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

inline void write_conv_spec(ByteWriter& w, const ConvSpec& s) {
    w.u32(std::uint32_t(s.kh));
    w.u32(std::uint32_t(s.kw));
    w.u32(std::uint32_t(s.in_channels));
    w.u32(std::uint32_t(s.out_channels));
    w.u32(std::uint32_t(s.stride));
    w.u32(s.transposed ? 1 : 0);
}

inline ConvSpec read_conv_spec(ByteReader& r) {
    ConvSpec s;
    s.kh = int(r.u32());
    s.kw = int(r.u32());
    s.in_channels = int(r.u32());
    s.out_channels = int(r.u32());
    s.stride = int(r.u32());
    s.transposed = r.u32() != 0;
    return s;
}

inline void write_arch(ByteWriter& w, const ArchSpec& a) {
    w.u32(std::uint32_t(a.r));
    write_conv_spec(w, a.replica_conv);
    write_conv_spec(w, a.branchB_conv);
    w.u32(std::uint32_t(a.encdec.size()));
    for (const auto& l : a.encdec) {
        write_conv_spec(w, l.conv);
        w.u32(l.activation ? 1 : 0);
    }
    w.u32(std::uint32_t(a.skip_pairs.size()));
    for (auto [e, d] : a.skip_pairs) {
        w.u32(std::uint32_t(e));
        w.u32(std::uint32_t(d));
    }
    write_conv_spec(w, a.head_conv);
    write_conv_spec(w, a.branchB_head);
    write_conv_spec(w, a.fusion_conv);
}

inline ArchSpec read_arch(ByteReader& r, Mode mode) {
    ArchSpec a;
    a.mode = mode;
    a.r = int(r.u32());
    a.replica_conv = read_conv_spec(r);
    a.branchB_conv = read_conv_spec(r);
    const std::uint32_t n = r.u32();
    if (n > 1024) throw FormatError("model file: implausible encoder-decoder layer count");
    for (std::uint32_t i = 0; i < n; ++i) {
        LayerSpec l;
        l.conv = read_conv_spec(r);
        l.activation = r.u32() != 0;
        a.encdec.push_back(l);
    }
    const std::uint32_t ns = r.u32();
    if (ns > n) throw FormatError("model file: implausible skip pair count");
    for (std::uint32_t i = 0; i < ns; ++i) {
        const int e = int(r.u32()), d = int(r.u32());
        a.skip_pairs.push_back({e, d});
    }
    a.head_conv = read_conv_spec(r);
    a.branchB_head = read_conv_spec(r);
    a.fusion_conv = read_conv_spec(r);
    return a;
}

}  // namespace detail

inline void save_model(const ModelParams<float>& p, const std::filesystem::path& path) {
    ByteWriter w;
    w.magic("LPCN");
    w.u32(kModelFormatVersion);
    w.u8(std::uint8_t(p.arch.mode));
    detail::write_arch(w, p.arch);
    for_each_layer(p, [&](const std::string&, const ConvWeights<float>& wt) {
        for (float v : wt.w) w.f32(v);
        for (float v : wt.b) w.f32(v);
    });
    w.write_file(path);
}

inline ModelParams<float> load_model(const std::filesystem::path& path) {
    ByteReader r = ByteReader::from_file(path);
    r.check_crc("model file");
    r.expect_magic("LPCN", "model file");
    const std::uint32_t ver = r.u32();
    if (ver != kModelFormatVersion)
        throw FormatError("model file: unknown version " + std::to_string(ver));
    const std::uint8_t mode_byte = r.u8();
    if (mode_byte > 1)
        throw FormatError("model file: unknown mode " + std::to_string(int(mode_byte)));
    ArchSpec arch = detail::read_arch(r, Mode(mode_byte));
    ModelParams<float> p = zero_params<float>(arch);
    for_each_layer(p, [&](const std::string&, ConvWeights<float>& wt) {
        for (auto& v : wt.w) v = r.f32();
        for (auto& v : wt.b) v = r.f32();
    });
    if (r.remaining() != 0) throw FormatError("model file: trailing bytes after payload");
    return p;
}

}  // namespace lpcn

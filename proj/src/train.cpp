#include "lpcn/train.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>

#include "lpcn/binio.hpp"
#include "lpcn/png_io.hpp"
#include "lpcn/resample.hpp"
#include "lpcn/rng.hpp"

namespace lpcn {

namespace fs = std::filesystem;

PatchSet extract_patches(const fs::path& image_dir, int patch, int stride, int scale) {
    if (patch < 4 || patch % 4 != 0 || patch % scale != 0)
        throw ArgError("extract_patches: patch must be divisible by 4 and by scale");
    if (stride < 1) throw ArgError("extract_patches: stride must be >= 1");
    if (!fs::is_directory(image_dir))
        throw ArgError("extract_patches: not a directory: " + image_dir.string());

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(image_dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());

    PatchSet set;
    set.scale = scale;
    set.patch = patch;
    const int lp = patch / scale;
    for (const auto& f : files) {
        Tensor<double> y;
        try {
            y = luma(read_png(f));
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << f.filename().string() << ": " << e.what()
                      << "\n";
            continue;
        }
        const int ch = y.h() / scale * scale, cw = y.w() / scale * scale;
        if (ch < patch || cw < patch) {
            std::cerr << "warning: skipping " << f.filename().string()
                      << ": smaller than one patch\n";
            continue;
        }
        y = crop_spatial(y, Shape{ch, cw, 1});
        for (int x0 = 0; x0 + patch <= ch; x0 += stride)
            for (int y0 = 0; y0 + patch <= cw; y0 += stride) {
                Tensor<double> label(patch, patch, 1);
                for (int x = 0; x < patch; ++x)
                    for (int yy = 0; yy < patch; ++yy)
                        label(x, yy, 0) = y(x0 + x, y0 + yy, 0);
                Tensor<double> input =
                    resize_bicubic(resize_bicubic(label, lp, lp), patch, patch);
                PatchPair pr;
                pr.label = Tensor<float>(patch, patch, 1);
                pr.input = Tensor<float>(patch, patch, 1);
                for (std::size_t i = 0; i < label.size(); ++i) {
                    pr.label.raw()[i] = float(label.raw()[i] / 255.0);
                    pr.input.raw()[i] =
                        float(std::clamp(input.raw()[i] / 255.0, 0.0, 1.0));
                }
                set.pairs.push_back(std::move(pr));
            }
    }
    if (set.pairs.empty()) throw ArgError("extract_patches: no usable images in " +
                                          image_dir.string());
    return set;
}

void save_patchset(const PatchSet& set, const fs::path& path) {
    ByteWriter w;
    w.magic("LPCD");
    w.u32(kPatchFormatVersion);
    w.u32(std::uint32_t(set.scale));
    w.u32(std::uint32_t(set.patch));
    w.u64(set.pairs.size());
    for (const auto& pr : set.pairs) {
        for (float v : pr.label.raw()) w.f32(v);
        for (float v : pr.input.raw()) w.f32(v);
    }
    w.write_file(path);
}

PatchSet load_patchset(const fs::path& path) {
    ByteReader r = ByteReader::from_file(path);
    r.check_crc("patch archive");
    r.expect_magic("LPCD", "patch archive");
    const std::uint32_t ver = r.u32();
    if (ver != kPatchFormatVersion)
        throw FormatError("patch archive: unknown version " + std::to_string(ver));
    PatchSet set;
    set.scale = int(r.u32());
    set.patch = int(r.u32());
    if (set.patch < 4 || set.patch > 4096 || set.scale < 1 || set.scale > 64)
        throw FormatError("patch archive: implausible patch geometry");
    const std::uint64_t count = r.u64();
    const std::uint64_t plane = std::uint64_t(set.patch) * set.patch;
    if (count * plane * 8 != r.remaining())
        throw FormatError("patch archive: payload size does not match pair count");
    set.pairs.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        PatchPair pr;
        pr.label = Tensor<float>(set.patch, set.patch, 1);
        pr.input = Tensor<float>(set.patch, set.patch, 1);
        for (auto& v : pr.label.raw()) v = r.f32();
        for (auto& v : pr.input.raw()) v = r.f32();
        set.pairs.push_back(std::move(pr));
    }
    return set;
}

void save_opt_state(const AdamState& state, std::uint64_t step, std::uint64_t seed,
                    const fs::path& path) {
    ByteWriter w;
    w.magic("LPCO");
    w.u32(kOptFormatVersion);
    w.u64(step);
    w.u64(seed);
    w.u64(state.t);
    for (const ModelParams<float>* p : {&state.m, &state.v})
        for_each_layer(*p, [&](const std::string&, const ConvWeights<float>& wt) {
            for (float v : wt.w) w.f32(v);
            for (float v : wt.b) w.f32(v);
        });
    w.write_file(path);
}

std::tuple<AdamState, std::uint64_t, std::uint64_t> load_opt_state(const fs::path& path,
                                                                   const ArchSpec& arch) {
    ByteReader r = ByteReader::from_file(path);
    r.check_crc("optimizer state");
    r.expect_magic("LPCO", "optimizer state");
    const std::uint32_t ver = r.u32();
    if (ver != kOptFormatVersion)
        throw FormatError("optimizer state: unknown version " + std::to_string(ver));
    const std::uint64_t step = r.u64();
    const std::uint64_t seed = r.u64();
    AdamState s = make_adam_state(arch);
    s.t = r.u64();
    for (ModelParams<float>* p : {&s.m, &s.v})
        for_each_layer(*p, [&](const std::string&, ConvWeights<float>& wt) {
            for (auto& v : wt.w) v = r.f32();
            for (auto& v : wt.b) v = r.f32();
        });
    if (r.remaining() != 0) throw FormatError("optimizer state: trailing bytes after payload");
    return {std::move(s), step, seed};
}

TrainRun init_run(const TrainConfig& cfg) {
    cfg.validate();
    TrainRun run;
    const ArchSpec arch = ArchSpec::defaults(cfg.mode);
    run.params = build_model<float>(arch, cfg.seed);
    run.opt = make_adam_state(arch);
    run.step = 0;
    return run;
}

namespace {

void accumulate(ModelParams<float>& into, const ModelParams<float>& g) {
    std::vector<ConvWeights<float>*> dst;
    for_each_layer(into, [&](const std::string&, ConvWeights<float>& w) { dst.push_back(&w); });
    std::size_t i = 0;
    for_each_layer(g, [&](const std::string&, const ConvWeights<float>& w) {
        for (std::size_t k = 0; k < w.w.size(); ++k) dst[i]->w[k] += w.w[k];
        for (std::size_t k = 0; k < w.b.size(); ++k) dst[i]->b[k] += w.b[k];
        ++i;
    });
}

}  // namespace

std::vector<StepRecord> train(TrainRun& run, const PatchSet& set, const TrainConfig& cfg,
                              const TrainHooks& hooks) {
    cfg.validate();
    if (set.pairs.empty()) throw ArgError("train: empty patch set");
    const std::uint64_t n = set.pairs.size();

    // Sample order is the concatenation of per-epoch Fisher-Yates shuffles;
    // position in that stream is a pure function of the step counter, which
    // is what makes checkpoint resume bit-exact.
    std::uint64_t cached_epoch = ~std::uint64_t(0);
    std::vector<std::size_t> perm;
    auto sample_at = [&](std::uint64_t pos) -> const PatchPair& {
        const std::uint64_t epoch = pos / n;
        if (epoch != cached_epoch) {
            Rng rng(cfg.seed ^ (0x9E3779B97F4A7C15ULL * (epoch + 1)));
            perm = rng.permutation(n);
            cached_epoch = epoch;
        }
        return set.pairs[perm[pos % n]];
    };

    std::vector<StepRecord> history;
    const auto t0 = std::chrono::steady_clock::now();
    while (run.step < cfg.steps) {
        ModelParams<float> grads = zero_params<float>(run.params.arch);
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            const PatchPair& pr = sample_at(run.step * cfg.batch + b);
            ForwardContext<float> ctx;
            Tensor<float> out = forward(run.params, pr.input, true, &ctx);
            auto [loss, d] = mse_loss(out, pr.label);
            batch_loss += loss;
            if (cfg.batch > 1) {
                Tensor<float> ds = d;
                for (auto& v : ds.raw()) v /= float(cfg.batch);
                accumulate(grads, backward(run.params, ctx, ds));
            } else {
                accumulate(grads, backward(run.params, ctx, d));
            }
        }
        batch_loss /= cfg.batch;
        if (!std::isfinite(batch_loss))
            throw DivergenceError("train: non-finite loss at step " +
                                  std::to_string(run.step + 1));
        adam_step(run.params, grads, run.opt, cfg);
        run.step += 1;

        StepRecord rec;
        rec.step = run.step;
        rec.loss = batch_loss;
        rec.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.push_back(rec);
        if (hooks.on_step) hooks.on_step(rec);
        if (cfg.checkpoint_every > 0 && run.step % cfg.checkpoint_every == 0 &&
            run.step != cfg.steps && hooks.on_checkpoint)
            hooks.on_checkpoint(run);
    }
    return history;
}

}  // namespace lpcn

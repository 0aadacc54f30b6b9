#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "lpcn/model.hpp"
#include "lpcn/tensor.hpp"

namespace lpcn {

struct TrainConfig {
    int scale = 4;
    int patch = 96;
    int stride = 80;
    int batch = 128;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t steps = 0;
    std::uint64_t seed = 0;
    std::uint64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
    Mode mode = Mode::LPCN_SR;

    void validate() const {
        if (scale < 1) throw ArgError("TrainConfig: scale must be >= 1");
        if (patch < 4 || patch % 4 != 0 || patch % scale != 0)
            throw ArgError("TrainConfig: patch must be divisible by 4 and by scale");
        if (stride < 1) throw ArgError("TrainConfig: stride must be >= 1");
        if (batch < 1) throw ArgError("TrainConfig: batch must be >= 1");
        if (lr <= 0.0) throw ArgError("TrainConfig: lr must be positive");
    }
};

// One training pair: HR luma label and its degraded-then-bicubic input, both
// patch x patch, values in [0, 1].
struct PatchPair {
    Tensor<float> label;
    Tensor<float> input;
};

struct PatchSet {
    int scale = 4;
    int patch = 96;
    std::vector<PatchPair> pairs;
};

// Tiles every readable PNG in image_dir (luma, mod-cropped to a multiple of
// scale) into patch x patch labels with the given stride, discarding partial
// tiles; each input is the label pushed through the x(1/scale) degradation and
// bicubic-upscaled back. Unreadable or too-small files warn and are skipped.
PatchSet extract_patches(const std::filesystem::path& image_dir, int patch, int stride,
                         int scale);

// Patch archive ("LPCD"): magic, version u32, scale u32, patch u32, count u64,
// then per pair the label plane followed by the input plane as f32 LE, CRC32.
inline constexpr std::uint32_t kPatchFormatVersion = 1;

void save_patchset(const PatchSet& set, const std::filesystem::path& path);
PatchSet load_patchset(const std::filesystem::path& path);

// Mean squared error over all elements, plus the gradient wrt the prediction.
template <class T>
std::pair<double, Tensor<T>> mse_loss(const Tensor<T>& x_star, const Tensor<T>& x) {
    if (x_star.shape() != x.shape())
        throw ShapeError("mse_loss: shape mismatch " + x_star.shape().str() + " vs " +
                         x.shape().str());
    const double n = double(x_star.size());
    double loss = 0.0;
    Tensor<T> d(x_star.h(), x_star.w(), x_star.c());
    for (std::size_t i = 0; i < x_star.size(); ++i) {
        const double e = double(x_star.raw()[i]) - double(x.raw()[i]);
        loss += e * e;
        d.raw()[i] = T(2.0 * e / n);
    }
    return {loss / n, std::move(d)};
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    std::uint64_t t = 0;
    ModelParams<float> m;
    ModelParams<float> v;
};

inline AdamState make_adam_state(const ArchSpec& arch) {
    AdamState s;
    s.m = zero_params<float>(arch);
    s.v = zero_params<float>(arch);
    return s;
}

// Bias-corrected Adam update on one flat parameter vector.
template <class T>
void adam_update(std::vector<T>& p, const std::vector<T>& g, std::vector<T>& m,
                 std::vector<T>& v, std::uint64_t t, const TrainConfig& cfg) {
    if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
        throw StateError("adam_update: parameter/gradient/state size mismatch");
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = double(g[i]);
        const double mi = cfg.beta1 * double(m[i]) + (1.0 - cfg.beta1) * gi;
        const double vi = cfg.beta2 * double(v[i]) + (1.0 - cfg.beta2) * gi * gi;
        m[i] = T(mi);
        v[i] = T(vi);
        p[i] = T(double(p[i]) - cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.epsilon));
    }
}

inline void adam_step(ModelParams<float>& params, const ModelParams<float>& grads,
                      AdamState& state, const TrainConfig& cfg) {
    if (!(params.arch == grads.arch) || !(params.arch == state.m.arch))
        throw StateError("adam_step: parameter/gradient/state architecture mismatch");
    state.t += 1;
    // Walk all three structures in the fixed enumeration order.
    std::vector<ConvWeights<float>*> pl, ml, vl;
    std::vector<const ConvWeights<float>*> gl;
    for_each_layer(params, [&](const std::string&, ConvWeights<float>& w) { pl.push_back(&w); });
    for_each_layer(grads,
                   [&](const std::string&, const ConvWeights<float>& w) { gl.push_back(&w); });
    for_each_layer(state.m, [&](const std::string&, ConvWeights<float>& w) { ml.push_back(&w); });
    for_each_layer(state.v, [&](const std::string&, ConvWeights<float>& w) { vl.push_back(&w); });
    for (std::size_t i = 0; i < pl.size(); ++i) {
        adam_update(pl[i]->w, gl[i]->w, ml[i]->w, vl[i]->w, state.t, cfg);
        adam_update(pl[i]->b, gl[i]->b, ml[i]->b, vl[i]->b, state.t, cfg);
    }
}

// ---------------------------------------------------------------------------
// Optimizer checkpoint sidecar ("LPCO")
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kOptFormatVersion = 1;

void save_opt_state(const AdamState& state, std::uint64_t step, std::uint64_t seed,
                    const std::filesystem::path& path);
// Returns (state, step, seed); the architecture comes from the model file.
std::tuple<AdamState, std::uint64_t, std::uint64_t> load_opt_state(
    const std::filesystem::path& path, const ArchSpec& arch);

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct StepRecord {
    std::uint64_t step = 0;  // 1-based
    double loss = 0.0;
    double seconds = 0.0;  // wall-clock since run start
};

// Mutable training state. Resume = load params + opt from a checkpoint and
// keep step; the shuffle position is recomputed from (seed, step), so the
// continued trajectory is bit-identical to an uninterrupted run.
struct TrainRun {
    ModelParams<float> params;
    AdamState opt;
    std::uint64_t step = 0;
};

TrainRun init_run(const TrainConfig& cfg);

struct TrainHooks {
    // Called after each completed step.
    std::function<void(const StepRecord&)> on_step;
    // Called at checkpoint_every boundaries (and never on the final step,
    // which the caller persists itself).
    std::function<void(const TrainRun&)> on_checkpoint;
};

// Advances run until run.step == cfg.steps, returning one record per step.
// A non-finite batch loss aborts with DivergenceError; params/opt are left at
// the last finished step so the caller's previous checkpoint stays the
// newest good one.
std::vector<StepRecord> train(TrainRun& run, const PatchSet& set, const TrainConfig& cfg,
                              const TrainHooks& hooks = {});

}  // namespace lpcn

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lpcn/manifest.hpp"
#include "lpcn/metrics.hpp"
#include "lpcn/model.hpp"
#include "lpcn/png_io.hpp"
#include "lpcn/resample.hpp"
#include "lpcn/train.hpp"

namespace fs = std::filesystem;
using namespace lpcn;

namespace {

constexpr const char* kToolVersion = "1.0.0";
constexpr int kMaxDim = 1 << 15;  // refuse absurd output sizes

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

// Refines a bicubic-upscaled luma plane ([0, 255] in, [0, 255] out), padding
// to the model's divisibility requirement and cropping back.
Tensor<double> refine_luma(const ModelParams<float>& model, const Tensor<double>& y_big) {
    Tensor<double> norm = y_big;
    for (auto& v : norm.raw()) v /= 255.0;
    auto [padded, orig] = pad_to_multiple(norm, 4);
    Tensor<float> out = forward(model, padded.cast<float>(), false);
    Tensor<double> y = crop_spatial(out.cast<double>(), orig);
    for (auto& v : y.raw()) v = std::clamp(v, 0.0, 1.0) * 255.0;
    return y;
}

Upscaler model_upscaler(const ModelParams<float>& model) {
    return [&model](const Tensor<double>& lr, int s) {
        Tensor<double> big = resize_bicubic(lr, lr.h() * s, lr.w() * s);
        return refine_luma(model, big);
    };
}

int cmd_prepare(const fs::path& hr_dir, const fs::path& out, int scale, int patch,
                int stride) {
    RunManifest man;
    man.command = "prepare";
    man.config = {{"hr_dir", hr_dir.string()},
                  {"out", out.string()},
                  {"scale", std::to_string(scale)},
                  {"patch", std::to_string(patch)},
                  {"stride", std::to_string(stride)},
                  {"tool_version", kToolVersion}};
    man.started_at = timestamp_now();
    PatchSet set = extract_patches(hr_dir, patch, stride, scale);
    save_patchset(set, out);
    std::cout << "wrote " << set.pairs.size() << " pairs to " << out.string() << "\n";
    man.finished_at = timestamp_now();
    man.artifacts = {{"archive", out.string()},
                     {"pair_count", std::to_string(set.pairs.size())}};
    man.write(out.string() + ".manifest.json");
    return 0;
}

int cmd_train(const fs::path& data, const fs::path& out_model, const std::string& mode_str,
              std::uint64_t steps, std::uint64_t seed, const std::string& resume,
              TrainConfig cfg) {
    PatchSet set = load_patchset(data);
    cfg.scale = set.scale;
    cfg.patch = set.patch;
    cfg.steps = steps;
    cfg.seed = seed;
    cfg.mode = (mode_str == "lpcn-plus") ? Mode::LPCN_SR_PLUS : Mode::LPCN_SR;
    cfg.validate();

    TrainRun run;
    if (!resume.empty()) {
        run.params = load_model(resume);
        auto [opt, step, saved_seed] = load_opt_state(resume + ".opt", run.params.arch);
        run.opt = std::move(opt);
        run.step = step;
        if (saved_seed != seed)
            throw ArgError("train: checkpoint was recorded with seed " +
                           std::to_string(saved_seed) + ", got --seed " +
                           std::to_string(seed));
        cfg.mode = run.params.arch.mode;
    } else {
        run = init_run(cfg);
    }

    RunManifest man;
    man.command = "train";
    man.config = {{"data", data.string()},
                  {"out_model", out_model.string()},
                  {"mode", mode_name(cfg.mode)},
                  {"steps", std::to_string(cfg.steps)},
                  {"seed", std::to_string(cfg.seed)},
                  {"batch", std::to_string(cfg.batch)},
                  {"lr", fmt(cfg.lr)},
                  {"beta1", fmt(cfg.beta1)},
                  {"beta2", fmt(cfg.beta2)},
                  {"epsilon", fmt(cfg.epsilon)},
                  {"checkpoint_every", std::to_string(cfg.checkpoint_every)},
                  {"resume", resume},
                  {"tool_version", kToolVersion}};
    man.started_at = timestamp_now();

    const fs::path loss_csv = out_model.string() + ".loss.csv";
    std::ofstream csv(loss_csv, resume.empty() ? std::ios::trunc : std::ios::app);
    if (!csv) throw IoError("cannot open for writing: " + loss_csv.string());
    if (resume.empty()) csv << "step,loss,wall_seconds\n";

    const fs::path ckpt = out_model.string() + ".ckpt";
    TrainHooks hooks;
    hooks.on_step = [&](const StepRecord& r) {
        csv << r.step << "," << fmt(r.loss) << "," << fmt(r.seconds) << "\n";
        if (r.step % 50 == 0 || r.step == cfg.steps)
            std::cout << "step " << r.step << "/" << cfg.steps << " loss " << fmt(r.loss)
                      << "\n";
    };
    hooks.on_checkpoint = [&](const TrainRun& r) {
        save_model(r.params, ckpt);
        save_opt_state(r.opt, r.step, cfg.seed, ckpt.string() + ".opt");
    };
    train(run, set, cfg, hooks);

    save_model(run.params, out_model);
    save_opt_state(run.opt, run.step, cfg.seed, out_model.string() + ".opt");
    man.finished_at = timestamp_now();
    man.artifacts = {{"model", out_model.string()}, {"loss_csv", loss_csv.string()}};
    man.write(out_model.string() + ".manifest.json");
    std::cout << "wrote model to " << out_model.string() << "\n";
    return 0;
}

int cmd_upscale(const fs::path& model_path, const fs::path& in, const fs::path& out,
                int scale) {
    ModelParams<float> model = load_model(model_path);
    Tensor<double> img = read_png(in);
    const long long oh = (long long)img.h() * scale, ow = (long long)img.w() * scale;
    if (oh > kMaxDim || ow > kMaxDim) throw IoError("upscale: output dimensions too large");

    RunManifest man;
    man.command = "upscale";
    man.config = {{"model", model_path.string()},
                  {"in", in.string()},
                  {"out", out.string()},
                  {"scale", std::to_string(scale)},
                  {"tool_version", kToolVersion}};
    man.started_at = timestamp_now();

    Tensor<double> result;
    if (img.c() == 1) {
        result = refine_luma(model, resize_bicubic(img, int(oh), int(ow)));
    } else {
        Tensor<double> ycc = rgb_to_ycbcr(img);
        Tensor<double> y = refine_luma(
            model, resize_bicubic(slice_channels(ycc, 0, 1), int(oh), int(ow)));
        Tensor<double> cbcr = resize_bicubic(slice_channels(ycc, 1, 2), int(oh), int(ow));
        result = ycbcr_to_rgb(concat_channels(std::vector<Tensor<double>>{y, cbcr}));
    }
    write_png(result, out);
    man.finished_at = timestamp_now();
    man.artifacts = {{"image", out.string()}};
    man.write(out.string() + ".manifest.json");
    std::cout << "wrote " << out.string() << " (" << result.h() << "x" << result.w() << ")\n";
    return 0;
}

int cmd_evaluate(const fs::path& hr_dir, const std::string& method,
                 const std::string& model_path, int scale, const std::string& report) {
    Upscaler up;
    ModelParams<float> model;
    if (method == "model") {
        if (model_path.empty()) throw ArgError("evaluate: --method model requires --model");
        model = load_model(model_path);
        up = model_upscaler(model);
    } else {
        up = [](const Tensor<double>& lr, int s) {
            return resize_bicubic(lr, lr.h() * s, lr.w() * s);
        };
    }
    RunManifest man;
    man.command = "evaluate";
    man.config = {{"hr_dir", hr_dir.string()},
                  {"method", method},
                  {"model", model_path},
                  {"scale", std::to_string(scale)},
                  {"report", report},
                  {"tool_version", kToolVersion}};
    man.started_at = timestamp_now();
    EvalReport rep = evaluate_set(hr_dir, up, scale, report);
    std::cout << "PSNR=" << fmt(rep.mean_psnr) << " SSIM=" << fmt(rep.mean_ssim)
              << " N=" << rep.entries.size() << "\n";
    if (!report.empty()) {
        man.finished_at = timestamp_now();
        man.artifacts = {{"report", report}};
        man.write(report + ".manifest.json");
    }
    return 0;
}

int cmd_inspect(const fs::path& model_path) {
    ModelParams<float> p = load_model(model_path);  // validates magic/CRC/arch
    std::cout << "file: " << model_path.string() << "\n";
    std::cout << "crc: ok\n";
    std::cout << "format_version: " << kModelFormatVersion << "\n";
    std::cout << "mode: " << mode_name(p.arch.mode) << "\n";
    std::cout << "r: " << p.arch.r << "\n";
    std::cout << "layers:\n";
    std::size_t total = 0;
    for_each_layer(p, [&](const std::string& id, const ConvWeights<float>& w) {
        const std::size_t n = w.w.size() + w.b.size();
        total += n;
        std::cout << "  " << id << ": " << w.kh << "x" << w.kw << " cin=" << w.cin
                  << " cout=" << w.cout << " params=" << n << "\n";
    });
    std::cout << "total_params: " << total << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lossless-pooling CNN super-resolution toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    // prepare
    auto* prep = app.add_subcommand("prepare", "tile HR images into a training patch archive");
    std::string hr_dir, out_path;
    int scale = 4, patch = 96, stride = 80;
    prep->add_option("--hr-dir", hr_dir, "directory of HR PNG images")->required();
    prep->add_option("--out", out_path, "output patch archive path")->required();
    prep->add_option("--scale", scale, "downscaling factor");
    prep->add_option("--patch", patch, "patch side length");
    prep->add_option("--stride", stride, "tiling stride");

    // train
    auto* tr = app.add_subcommand("train", "train a model on a patch archive");
    std::string data, out_model, mode_str = "lpcn", resume;
    std::uint64_t steps = 1000, seed = 0;
    TrainConfig tcfg;
    tr->add_option("--data", data, "patch archive from `prepare`")->required();
    tr->add_option("--out-model", out_model, "output model file")->required();
    tr->add_option("--mode", mode_str, "lpcn | lpcn-plus")
        ->check(CLI::IsMember({"lpcn", "lpcn-plus"}));
    tr->add_option("--steps", steps, "total optimization steps");
    tr->add_option("--seed", seed, "RNG seed");
    tr->add_option("--resume", resume, "checkpoint model file to resume from");
    tr->add_option("--batch", tcfg.batch, "batch size");
    tr->add_option("--lr", tcfg.lr, "Adam learning rate");
    tr->add_option("--beta1", tcfg.beta1, "Adam beta1");
    tr->add_option("--beta2", tcfg.beta2, "Adam beta2");
    tr->add_option("--epsilon", tcfg.epsilon, "Adam epsilon");
    tr->add_option("--checkpoint-every", tcfg.checkpoint_every,
                   "steps between checkpoints (0 = none)");

    // upscale
    auto* up = app.add_subcommand("upscale", "super-resolve one PNG");
    std::string up_model, up_in, up_out;
    int up_scale = 4;
    up->add_option("--model", up_model, "trained model file")->required();
    up->add_option("--in", up_in, "input PNG")->required();
    up->add_option("--out", up_out, "output PNG")->required();
    up->add_option("--scale", up_scale, "upscaling factor");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "benchmark an upscaler on an HR image set");
    std::string ev_dir, ev_method = "bicubic", ev_model, ev_report;
    int ev_scale = 4;
    ev->add_option("--hr-dir", ev_dir, "directory of ground-truth PNGs")->required();
    ev->add_option("--method", ev_method, "bicubic | model")
        ->check(CLI::IsMember({"bicubic", "model"}));
    ev->add_option("--model", ev_model, "model file (for --method model)");
    ev->add_option("--scale", ev_scale, "scale factor");
    ev->add_option("--report", ev_report, "CSV report output path");

    // inspect
    auto* ins = app.add_subcommand("inspect", "dump a model file's structure");
    std::string ins_model;
    ins->add_option("--model", ins_model, "model file")->required();

    try {
        app.parse(argc, argv);
        if (*prep) return cmd_prepare(hr_dir, out_path, scale, patch, stride);
        if (*tr) return cmd_train(data, out_model, mode_str, steps, seed, resume, tcfg);
        if (*up) return cmd_upscale(up_model, up_in, up_out, up_scale);
        if (*ev) return cmd_evaluate(ev_dir, ev_method, ev_model, ev_scale, ev_report);
        if (*ins) return cmd_inspect(ins_model);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

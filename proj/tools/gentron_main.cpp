#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "gentron/checkpoint.hpp"
#include "gentron/checks.hpp"
#include "gentron/config.hpp"
#include "gentron/dataset.hpp"
#include "gentron/guidance.hpp"
#include "gentron/ppm.hpp"
#include "gentron/trainer.hpp"

namespace fs = std::filesystem;
using namespace gentron;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

struct CommonOpts {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out_dir;
};

RunConfig effective_config(const CommonOpts& opts) {
    RunConfig cfg = opts.config_path.empty() ? RunConfig{} : load_run_config(opts.config_path);
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    cfg.seed = resolve_seed(opts.seed, cfg.seed);
    return cfg;
}

void write_loss_csv(const fs::path& path, const std::vector<double>& losses) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cli: cannot write " + path.string());
    out << "step,loss\n";
    out.precision(10);
    for (size_t i = 0; i < losses.size(); ++i) out << i << "," << losses[i] << "\n";
    if (!out) throw IoError("cli: short write to " + path.string());
}

void write_manifest(const fs::path& path, const RunConfig& cfg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cli: cannot write " + path.string());
    out << run_config_to_json(cfg);
}

void dump_latent(const fs::path& path, const TensorT<float>& x) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cli: cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(x.data->data()),
              static_cast<std::streamsize>(x.data->size() * sizeof(float)));
}

int cmd_train_t2i(const CommonOpts& common, const std::string& data_flag,
                  std::optional<int> steps_flag, std::optional<int> batch_flag) {
    auto cfg = effective_config(common);
    if (!data_flag.empty()) cfg.data_dir = data_flag;
    if (steps_flag) cfg.train.steps = *steps_flag;
    if (batch_flag) cfg.train.batch = *batch_flag;
    if (cfg.data_dir.empty()) throw ValueError("train-t2i: no dataset path (config \"data\" or --data)");
    cfg.train.seed = *cfg.seed;

    auto ds = load_image_dataset(cfg.data_dir);
    GenTron model(cfg.model, *cfg.seed);
    NoiseSchedule sched(cfg.schedule);
    AdamW opt(named_parameters(model), cfg.train.adamw());
    auto report = train_t2i(model, ds, sched, cfg.train, opt);

    fs::create_directories(cfg.out_dir);
    save_checkpoint(model, (fs::path(cfg.out_dir) / "model.ckpt").string(), &opt);
    write_loss_csv(fs::path(cfg.out_dir) / "loss.csv", report.losses);
    write_manifest(fs::path(cfg.out_dir) / "run.json", cfg);
    const double last = report.losses.empty() ? 0.0 : report.losses.back();
    std::printf("train-t2i: %d steps, final loss %.6f, wrote %s\n", cfg.train.steps, last,
                cfg.out_dir.c_str());
    return kExitOk;
}

int cmd_finetune_t2v(const CommonOpts& common, const std::string& ckpt_path,
                     const std::string& data_flag, const std::string& video_flag,
                     std::optional<int> steps_flag, std::optional<double> p_motion_flag) {
    auto cfg = effective_config(common);
    if (!data_flag.empty()) cfg.data_dir = data_flag;
    if (!video_flag.empty()) cfg.video_data_dir = video_flag;
    if (steps_flag) cfg.train.steps = *steps_flag;
    if (p_motion_flag) cfg.train.p_motion_free = *p_motion_flag;
    cfg.train.seed = *cfg.seed;

    auto ckpt = read_checkpoint(ckpt_path);
    auto t2i = load_model(ckpt);
    if (t2i.config().temporal)
        throw SchemaError("finetune-t2v: checkpoint is already a video model");
    cfg.model = t2i.config();
    auto model = inflate_t2i(t2i, *cfg.seed);
    cfg.model.temporal = true;
    cfg.model.t_frames = cfg.train.t_frames;

    // inflation-equivalence gate: a pseudo-video through the inflated model
    // must reproduce the source model frame for frame before any training
    {
        NoGradGuard ng;
        Rng rng(*cfg.seed ^ 0x1d2c3b4a5ull);
        const auto& mc = t2i.config();
        auto img = randn<float>(rng, {mc.latent_h, mc.latent_w, mc.latent_c});
        auto clip = pseudo_video(img, cfg.train.t_frames);
        auto frame = reshape(img, {1, mc.latent_h, mc.latent_w, mc.latent_c});
        auto out_i = t2i.forward(frame, 1, t2i.encode("probe"));
        auto out_v = model.forward(clip.frames, 1, model.encode("probe"));
        double worst = 0.0;
        const size_t per = out_i.data->size();
        for (int f = 0; f < cfg.train.t_frames; ++f)
            for (size_t j = 0; j < per; ++j)
                worst = std::max(worst, std::abs(static_cast<double>(
                                     (*out_v.data)[static_cast<size_t>(f) * per + j] -
                                     (*out_i.data)[j])));
        if (!(worst < 1e-6)) {
            std::fprintf(stderr, "finetune-t2v: inflation equivalence failed (%.3e)\n", worst);
            return kExitCheckFailed;
        }
        std::printf("finetune-t2v: inflation equivalence ok (max dev %.3e)\n", worst);
    }

    ImageDataset images;
    VideoDataset clips;
    if (cfg.train.p_motion_free > 0.0) {
        if (cfg.data_dir.empty()) throw ValueError("finetune-t2v: image dataset path required");
        images = load_image_dataset(cfg.data_dir);
    }
    if (cfg.train.p_motion_free < 1.0) {
        if (cfg.video_data_dir.empty()) throw ValueError("finetune-t2v: video dataset path required");
        clips = load_video_dataset(cfg.video_data_dir);
    }

    NoiseSchedule sched(cfg.schedule);
    AdamW opt(named_parameters(model), cfg.train.adamw());
    auto report = finetune_t2v(model, images, clips, sched, cfg.train, opt);

    fs::create_directories(cfg.out_dir);
    save_checkpoint(model, (fs::path(cfg.out_dir) / "model_t2v.ckpt").string(), &opt);
    write_loss_csv(fs::path(cfg.out_dir) / "loss.csv", report.losses);
    write_manifest(fs::path(cfg.out_dir) / "run.json", cfg);
    std::printf("finetune-t2v: %d steps (%lld image / %lld video draws), wrote %s\n",
                cfg.train.steps, static_cast<long long>(report.image_draws),
                static_cast<long long>(report.video_draws), cfg.out_dir.c_str());
    return kExitOk;
}

int cmd_sample(const CommonOpts& common, const std::string& ckpt_path, const std::string& prompt,
               double lambda_t, double lambda_m, bool motion, int frames,
               std::optional<int> timesteps_flag) {
    auto cfg = effective_config(common);
    if (timesteps_flag) cfg.schedule.timesteps = *timesteps_flag;
    if (frames < 1) throw ValueError("sample: --frames must be >= 1");

    auto ckpt = read_checkpoint(ckpt_path);
    auto model_cfg = model_config_from_json(ckpt.config_json);
    model_cfg.t_frames = frames; // clip length is a sampling-time choice
    GenTron model(model_cfg, 0);
    load_into(model, ckpt);

    cfg.guidance.lambda_t = lambda_t;
    cfg.guidance.lambda_m = lambda_m;
    cfg.guidance.motion_enabled = motion;
    cfg.guidance.steps = 0;

    NoiseSchedule sched(cfg.schedule);
    Rng rng(*cfg.seed);
    auto conds = model.encode(prompt);
    std::printf("sample: lambda_t=%g lambda_m=%g motion=%s frames=%d timesteps=%d seed=%llu\n",
                lambda_t, lambda_m, motion ? "on" : "off", motion ? frames : 1,
                sched.timesteps(), static_cast<unsigned long long>(*cfg.seed));
    auto x = sample(model, sched, conds, cfg.guidance, rng);

    fs::create_directories(cfg.out_dir);
    dump_latent(fs::path(cfg.out_dir) / "latent.bin", x);
    if (motion) {
        write_clip((fs::path(cfg.out_dir) / "clip").string(), x);
        std::printf("sample: wrote %d frames under %s/clip\n", frames, cfg.out_dir.c_str());
    } else {
        auto img = reshape(x, {x.dim(1), x.dim(2), x.dim(3)});
        write_latent_ppm((fs::path(cfg.out_dir) / "sample.ppm").string(), img);
        std::printf("sample: wrote %s/sample.ppm\n", cfg.out_dir.c_str());
    }
    return kExitOk;
}

int cmd_check(const std::string& suite) {
    std::vector<std::string> suites =
        suite == "all" ? check_suites() : std::vector<std::string>{suite};
    bool all_ok = true;
    for (const auto& s : suites) {
        auto rep = run_check(s);
        for (const auto& r : rep.results) {
            std::printf("[%s] %s: %s%s%s\n", r.ok ? "ok" : "FAIL", rep.suite.c_str(),
                        r.name.c_str(), r.detail.empty() ? "" : " — ", r.detail.c_str());
        }
        all_ok &= rep.ok();
    }
    return all_ok ? kExitOk : kExitCheckFailed;
}

int cmd_gen_data(const CommonOpts& common, const std::string& kind, int n,
                 const std::string& clips_out, int frames) {
    auto cfg = effective_config(common);
    ImageDataset ds;
    if (kind == "gaussians")
        ds = make_gaussians(n, *cfg.seed);
    else if (kind == "shapes")
        ds = make_shapes(n, *cfg.seed);
    else
        throw ValueError("gen-data: unknown kind '" + kind + "' (gaussians | shapes)");
    save_image_dataset(ds, cfg.out_dir);
    std::printf("gen-data: wrote %d %s samples to %s\n", n, kind.c_str(), cfg.out_dir.c_str());
    if (!clips_out.empty()) {
        save_video_dataset(make_roll_clips(ds, frames), clips_out);
        std::printf("gen-data: wrote %zu clips of %d frames to %s\n", ds.size(), frames,
                    clips_out.c_str());
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"GenTron: text-conditioned diffusion transformers (T2I + temporal T2V)"};
    app.require_subcommand(1);

    CommonOpts common;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "JSON run config");
        sub->add_option("--seed", common.seed, "seed override (beats config and GENTRON_SEED)");
        sub->add_option("--out", common.out_dir, "output directory");
    };

    // train-t2i
    auto* train = app.add_subcommand("train-t2i", "train a text-to-image model");
    add_common(train);
    std::string train_data;
    std::optional<int> train_steps, train_batch;
    train->add_option("--data", train_data, "image dataset directory");
    train->add_option("--steps", train_steps, "training steps");
    train->add_option("--batch", train_batch, "batch size");

    // finetune-t2v
    auto* tune = app.add_subcommand("finetune-t2v", "inflate a T2I checkpoint and fine-tune on video");
    add_common(tune);
    std::string tune_ckpt, tune_data, tune_video;
    std::optional<int> tune_steps;
    std::optional<double> tune_pmf;
    tune->add_option("--checkpoint", tune_ckpt, "T2I checkpoint")->required();
    tune->add_option("--data", tune_data, "image dataset directory");
    tune->add_option("--video-data", tune_video, "video dataset directory");
    tune->add_option("--steps", tune_steps, "training steps");
    tune->add_option("--p-motion-free", tune_pmf, "pseudo-video branch probability");

    // sample
    auto* samp = app.add_subcommand("sample", "sample an image or clip from a checkpoint");
    add_common(samp);
    std::string samp_ckpt, samp_prompt;
    double samp_lt = 7.5, samp_lm = 1.2;
    bool samp_motion = false;
    int samp_frames = 8;
    std::optional<int> samp_timesteps;
    samp->add_option("--checkpoint", samp_ckpt, "model checkpoint")->required();
    samp->add_option("--prompt", samp_prompt, "text prompt");
    samp->add_option("--lambda-t", samp_lt, "text guidance scale");
    samp->add_option("--lambda-m", samp_lm, "motion guidance scale");
    samp->add_flag("--motion", samp_motion, "sample a clip with motion-free guidance");
    samp->add_option("--frames", samp_frames, "clip length when --motion is set");
    samp->add_option("--timesteps", samp_timesteps, "override schedule length");

    // check
    auto* chk = app.add_subcommand("check", "run an invariant/oracle suite");
    std::string chk_suite = "all";
    chk->add_option("suite", chk_suite,
                    "gradients | schedule | guidance | gaussian-oracle | video-identity | all");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen);
    std::string gen_kind = "shapes", gen_clips;
    int gen_n = 16, gen_frames = 8;
    gen->add_option("--kind", gen_kind, "gaussians | shapes");
    gen->add_option("--n", gen_n, "sample count");
    gen->add_option("--clips-out", gen_clips, "also emit rolling clips to this directory");
    gen->add_option("--frames", gen_frames, "frames per clip for --clips-out");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (train->parsed()) return cmd_train_t2i(common, train_data, train_steps, train_batch);
        if (tune->parsed())
            return cmd_finetune_t2v(common, tune_ckpt, tune_data, tune_video, tune_steps, tune_pmf);
        if (samp->parsed())
            return cmd_sample(common, samp_ckpt, samp_prompt, samp_lt, samp_lm, samp_motion,
                              samp_frames, samp_timesteps);
        if (chk->parsed()) return cmd_check(chk_suite);
        if (gen->parsed()) return cmd_gen_data(common, gen_kind, gen_n, gen_clips, gen_frames);
    } catch (const IoError& e) { // includes checkpoint schema/corruption errors
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}

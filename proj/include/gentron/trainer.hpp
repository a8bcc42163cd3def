#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gentron/dataset.hpp"
#include "gentron/model.hpp"
#include "gentron/optim.hpp"
#include "gentron/schedule.hpp"
#include "gentron/video.hpp"

namespace gentron {

struct TrainConfig {
    double lr = 1e-4; // constant; no schedule
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    int batch = 16;
    int steps = 100;
    double p_motion_free = 0.1;
    double p_text_drop = 0.1;
    int t_frames = 8;
    uint64_t seed = 0;

    void validate() const {
        if (!(lr > 0.0)) throw ValueError("train: lr must be > 0");
        if (batch < 1 || steps < 0) throw ValueError("train: batch >= 1 and steps >= 0 required");
        if (p_motion_free < 0.0 || p_motion_free > 1.0 || p_text_drop < 0.0 || p_text_drop > 1.0)
            throw ValueError("train: probabilities must lie in [0, 1]");
        if (t_frames < 1) throw ValueError("train: t_frames must be >= 1");
    }

    AdamWConfig adamw() const {
        AdamWConfig a;
        a.lr = lr;
        a.beta1 = beta1;
        a.beta2 = beta2;
        a.weight_decay = weight_decay;
        return a;
    }
};

struct TrainReport {
    std::vector<double> losses; // batch-averaged diffusion loss per step
    int64_t image_draws = 0;    // joint-training branch counts (per batch slot)
    int64_t video_draws = 0;
};

namespace detail {

// One uniform draw per sample: text present or swapped for the learned nulls.
template <typename T>
std::vector<TextConditionT<T>> maybe_drop_text(const GenTronT<T>& model, const std::string& prompt,
                                               double p_drop, Rng& rng) {
    const double u = rng.uniform();
    if (u < p_drop) return model.null_conditions();
    return model.encode(prompt);
}

} // namespace detail

// Denoising-loss training over (latent, prompt) pairs. Per sample: uniform
// timestep, fresh noise, q_sample, text dropout, eps MSE; per step the batch
// losses are averaged before one backward/optimizer step. Fully deterministic
// given (seed, config, dataset order).
template <typename T>
TrainReport train_t2i(GenTronT<T>& model, const ImageDatasetT<T>& ds, const NoiseSchedule& sched,
                      const TrainConfig& cfg, AdamWT<T>& opt) {
    cfg.validate();
    if (ds.empty()) throw ValueError("train_t2i: dataset is empty");
    Rng rng(cfg.seed);
    TrainReport report;
    report.losses.reserve(static_cast<size_t>(cfg.steps));

    for (int step = 0; step < cfg.steps; ++step) {
        opt.zero_grad();
        TensorT<T> loss_sum;
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& item = ds.items[static_cast<size_t>(rng.below(ds.size()))];
            const int t = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(sched.timesteps())));
            auto x0 = reshape(item.latent, {1, item.latent.dim(0), item.latent.dim(1),
                                            item.latent.dim(2)});
            auto eps = randn<T>(rng, x0.shape);
            auto x_t = q_sample(sched, x0, eps, t);
            auto conds = detail::maybe_drop_text(model, item.prompt, cfg.p_text_drop, rng);
            auto loss = eps_mse_loss(model.forward(x_t, t, conds), eps);
            loss_sum = b == 0 ? loss : add(loss_sum, loss);
        }
        auto total = scale(loss_sum, static_cast<T>(1.0 / cfg.batch));
        report.losses.push_back(static_cast<double>(total.item()));
        backward(total);
        opt.step();
    }
    return report;
}

template <typename T>
TrainReport train_t2i(GenTronT<T>& model, const ImageDatasetT<T>& ds, const NoiseSchedule& sched,
                      const TrainConfig& cfg) {
    AdamWT<T> opt(named_parameters(model), cfg.adamw());
    return train_t2i(model, ds, sched, cfg, opt);
}

// Joint image-video fine-tuning. Per batch slot an independent coin picks the
// branch: with p_motion_free an image becomes a pseudo-video trained under the
// identity (motion-free) temporal mask; otherwise a real clip trains under the
// full mask. Noise is drawn over the whole clip, independent per frame.
template <typename T>
TrainReport finetune_t2v(GenTronT<T>& model, const ImageDatasetT<T>& image_ds,
                         const VideoDatasetT<T>& video_ds, const NoiseSchedule& sched,
                         const TrainConfig& cfg, AdamWT<T>& opt) {
    cfg.validate();
    if (!model.config().temporal)
        throw ValueError("finetune_t2v: model has no temporal blocks; inflate it first");
    Rng rng(cfg.seed);
    TrainReport report;
    report.losses.reserve(static_cast<size_t>(cfg.steps));

    const auto eye = motion_free_mask<T>(cfg.t_frames);
    const auto full = full_motion_mask<T>(cfg.t_frames);

    for (int step = 0; step < cfg.steps; ++step) {
        opt.zero_grad();
        TensorT<T> loss_sum;
        for (int b = 0; b < cfg.batch; ++b) {
            const double u = rng.uniform();
            TensorT<T> clip;
            const TensorT<T>* mask;
            std::string prompt;
            if (u < cfg.p_motion_free) {
                if (image_ds.empty())
                    throw ValueError("finetune_t2v: image branch drawn but image dataset is empty");
                const auto& item = image_ds.items[static_cast<size_t>(rng.below(image_ds.size()))];
                clip = pseudo_video(item.latent, cfg.t_frames).frames;
                mask = &eye;
                prompt = item.prompt;
                ++report.image_draws;
            } else {
                if (video_ds.empty())
                    throw ValueError("finetune_t2v: video branch drawn but video dataset is empty");
                const auto& item = video_ds.items[static_cast<size_t>(rng.below(video_ds.size()))];
                if (item.clip.rank() != 4 || item.clip.dim(0) != cfg.t_frames)
                    throw ShapeError("finetune_t2v: clip length does not match t_frames");
                clip = item.clip;
                mask = &full;
                prompt = item.prompt;
                ++report.video_draws;
            }
            const int t = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(sched.timesteps())));
            auto eps = randn<T>(rng, clip.shape);
            auto x_t = q_sample(sched, clip, eps, t);
            auto conds = detail::maybe_drop_text(model, prompt, cfg.p_text_drop, rng);
            auto loss = eps_mse_loss(model.forward(x_t, t, conds, mask), eps);
            loss_sum = b == 0 ? loss : add(loss_sum, loss);
        }
        auto total = scale(loss_sum, static_cast<T>(1.0 / cfg.batch));
        report.losses.push_back(static_cast<double>(total.item()));
        backward(total);
        opt.step();
    }
    return report;
}

template <typename T>
TrainReport finetune_t2v(GenTronT<T>& model, const ImageDatasetT<T>& image_ds,
                         const VideoDatasetT<T>& video_ds, const NoiseSchedule& sched,
                         const TrainConfig& cfg) {
    AdamWT<T> opt(named_parameters(model), cfg.adamw());
    return finetune_t2v(model, image_ds, video_ds, sched, cfg, opt);
}

} // namespace gentron

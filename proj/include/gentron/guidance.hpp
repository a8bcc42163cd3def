#pragma once

#include <vector>

#include "gentron/model.hpp"
#include "gentron/schedule.hpp"
#include "gentron/video.hpp"

namespace gentron {

struct GuidanceConfig {
    double lambda_t = 7.5;
    double lambda_m = 1.2;
    bool motion_enabled = false;
    int steps = 0; // 0: follow the schedule's timestep count

    void validate() const {
        if (lambda_t < 0.0 || lambda_m < 0.0)
            throw ValueError("guidance: lambdas must be >= 0");
        if (steps < 0) throw ValueError("guidance: steps must be >= 0");
    }
};

// eps_uncond + lambda * (eps_cond - eps_uncond). The lambda in {0, 1}
// endpoints return the corresponding bracket verbatim so the telescoping
// identities hold bitwise, not just to rounding.
template <typename T>
TensorT<T> cfg_epsilon(const TensorT<T>& eps_cond, const TensorT<T>& eps_uncond, double lambda) {
    if (eps_cond.shape != eps_uncond.shape) throw ShapeError("cfg_epsilon: shape mismatch");
    if (lambda < 0.0) throw ValueError("cfg_epsilon: lambda must be >= 0");
    if (lambda == 1.0) return eps_cond;
    if (lambda == 0.0) return eps_uncond;
    return add(eps_uncond, scale(sub(eps_cond, eps_uncond), static_cast<T>(lambda)));
}

// Three-term motion-free composition:
//   eps~ = eps(0,0) + lambda_t * (eps(cT,cM) - eps(0,cM)) + lambda_m * (eps(0,cM) - eps(0,0))
// Full-collapse endpoints are returned verbatim (same bitwise-exactness rationale).
template <typename T>
TensorT<T> mfg_epsilon(const TensorT<T>& eps_null_null, const TensorT<T>& eps_text_motion,
                       const TensorT<T>& eps_null_motion, double lambda_t, double lambda_m) {
    if (eps_null_null.shape != eps_text_motion.shape ||
        eps_null_null.shape != eps_null_motion.shape)
        throw ShapeError("mfg_epsilon: shape mismatch");
    if (lambda_t < 0.0 || lambda_m < 0.0) throw ValueError("mfg_epsilon: lambdas must be >= 0");
    if (lambda_t == 1.0 && lambda_m == 1.0) return eps_text_motion;
    if (lambda_t == 0.0 && lambda_m == 0.0) return eps_null_null;
    auto text_term = scale(sub(eps_text_motion, eps_null_motion), static_cast<T>(lambda_t));
    auto motion_term = scale(sub(eps_null_motion, eps_null_null), static_cast<T>(lambda_m));
    return add(eps_null_null, add(text_term, motion_term));
}

// Ancestral sampling from pure noise. Image mode runs two forwards per step
// (conditional, null); motion mode runs the three Eq-style brackets, where the
// motion condition is switched purely through the temporal attention mask.
// Returns [1,H,W,C] (image) or [t_frames,H,W,C] (clip).
template <typename T>
TensorT<T> sample(GenTronT<T>& model, const NoiseSchedule& sched,
                  const std::vector<TextConditionT<T>>& conds, const GuidanceConfig& g, Rng& rng) {
    g.validate();
    if (g.steps != 0 && g.steps != sched.timesteps())
        throw ValueError("sample: steps must match the schedule (ancestral sampler only)");
    const auto& cfg = model.config();
    if (g.motion_enabled && !cfg.temporal)
        throw ValueError("sample: motion guidance requires an inflated video model");

    NoGradGuard ng;
    auto nulls = model.null_conditions();
    const int frames = g.motion_enabled ? cfg.t_frames : 1;
    auto x = randn<T>(rng, {frames, cfg.latent_h, cfg.latent_w, cfg.latent_c});

    TensorT<T> eye, full;
    if (g.motion_enabled) {
        eye = motion_free_mask<T>(frames);
        full = full_motion_mask<T>(frames);
    }

    for (int t = sched.timesteps(); t >= 1; --t) {
        TensorT<T> eps;
        if (g.motion_enabled) {
            auto eps_nn = model.forward(x, t, nulls, &eye);
            auto eps_tm = model.forward(x, t, conds, &full);
            auto eps_nm = model.forward(x, t, nulls, &full);
            eps = mfg_epsilon(eps_nn, eps_tm, eps_nm, g.lambda_t, g.lambda_m);
        } else {
            auto eps_c = model.forward(x, t, conds);
            auto eps_n = model.forward(x, t, nulls);
            eps = cfg_epsilon(eps_c, eps_n, g.lambda_t);
        }
        if (t > 1) {
            auto z = randn<T>(rng, x.shape);
            x = ddpm_step(sched, x, eps, t, &z);
        } else {
            x = ddpm_step(sched, x, eps, t);
        }
    }
    return x;
}

} // namespace gentron

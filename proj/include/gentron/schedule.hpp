#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gentron/tensor.hpp"

namespace gentron {

// Linear beta schedule. Timesteps are 1-based: t in {1, ..., timesteps},
// matching the convention that t=0 is clean data.
struct ScheduleConfig {
    int timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

class NoiseSchedule {
public:
    explicit NoiseSchedule(const ScheduleConfig& cfg) : cfg_(cfg) {
        if (cfg.timesteps < 1) throw ValueError("schedule: timesteps must be >= 1");
        if (!(cfg.beta_start > 0.0 && cfg.beta_end < 1.0 && cfg.beta_start <= cfg.beta_end))
            throw ValueError("schedule: need 0 < beta_start <= beta_end < 1");
        betas_.resize(static_cast<size_t>(cfg.timesteps));
        alpha_bars_.resize(static_cast<size_t>(cfg.timesteps));
        double cum = 1.0;
        for (int t = 1; t <= cfg.timesteps; ++t) {
            const double frac = cfg.timesteps == 1
                                    ? 0.0
                                    : static_cast<double>(t - 1) / static_cast<double>(cfg.timesteps - 1);
            const double b = cfg.beta_start + (cfg.beta_end - cfg.beta_start) * frac;
            betas_[static_cast<size_t>(t - 1)] = b;
            cum *= 1.0 - b;
            alpha_bars_[static_cast<size_t>(t - 1)] = cum;
        }
    }

    const ScheduleConfig& config() const { return cfg_; }
    int timesteps() const { return cfg_.timesteps; }

    double beta(int t) const { return betas_[index(t)]; }
    double alpha(int t) const { return 1.0 - betas_[index(t)]; }
    // alpha_bar(0) == 1 by convention (clean data).
    double alpha_bar(int t) const {
        if (t == 0) return 1.0;
        return alpha_bars_[index(t)];
    }
    double sigma(int t) const { return std::sqrt(beta(t)); }

private:
    size_t index(int t) const {
        if (t < 1 || t > cfg_.timesteps) throw ValueError("schedule: timestep out of range");
        return static_cast<size_t>(t - 1);
    }
    ScheduleConfig cfg_;
    std::vector<double> betas_;
    std::vector<double> alpha_bars_;
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
template <typename T>
TensorT<T> q_sample(const NoiseSchedule& sched, const TensorT<T>& x0, const TensorT<T>& eps, int t) {
    const double ab = sched.alpha_bar(t);
    return add(scale(x0, static_cast<T>(std::sqrt(ab))),
               scale(eps, static_cast<T>(std::sqrt(1.0 - ab))));
}

// One ancestral step:
//   x_{t-1} = (x_t - ((1-alpha_t)/sqrt(1-abar_t)) eps_hat) / sqrt(alpha_t) + sigma_t z
// The terminal step (t == 1, producing x_0) must not add noise: a nonzero z
// there is a caller bug, not something to ignore.
template <typename T>
TensorT<T> ddpm_step(const NoiseSchedule& sched, const TensorT<T>& x_t, const TensorT<T>& eps_hat,
                     int t, const TensorT<T>* z = nullptr) {
    const double a = sched.alpha(t);
    const double ab = sched.alpha_bar(t);
    const T coef = static_cast<T>((1.0 - a) / std::sqrt(1.0 - ab));
    const T inv_sqrt_a = static_cast<T>(1.0 / std::sqrt(a));
    auto mean = scale(sub(x_t, scale(eps_hat, coef)), inv_sqrt_a);
    if (z == nullptr) return mean;
    if (t == 1) {
        for (T v : *z->data)
            if (v != T(0)) throw ValueError("ddpm_step: terminal step requires z = 0");
        return mean;
    }
    return add(mean, scale(*z, static_cast<T>(sched.sigma(t))));
}

// Mean squared error between predicted and true noise.
template <typename T>
TensorT<T> eps_mse_loss(const TensorT<T>& eps_hat, const TensorT<T>& eps) {
    auto diff = sub(eps_hat, eps);
    return mean_all(mul(diff, diff));
}

} // namespace gentron

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gentron/model.hpp"
#include "gentron/tensor.hpp"

namespace gentron {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    void validate() const {
        if (!(lr > 0.0)) throw ValueError("adamw: lr must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
            throw ValueError("adamw: betas must lie in [0, 1)");
        if (!(eps > 0.0)) throw ValueError("adamw: eps must be > 0");
        if (weight_decay < 0.0) throw ValueError("adamw: weight_decay must be >= 0");
    }
};

template <typename T>
std::vector<std::pair<std::string, TensorT<T>*>> named_parameters(GenTronT<T>& model) {
    std::vector<std::pair<std::string, TensorT<T>*>> out;
    for (const auto& name : model.param_names()) out.emplace_back(name, &model.param(name));
    return out;
}

// Decoupled-weight-decay Adam. Moments live as named tensors ("opt.m.<param>",
// "opt.v.<param>") so checkpoints can persist optimizer state through the same
// tensor table as model weights.
template <typename T>
class AdamWT {
public:
    AdamWT(std::vector<std::pair<std::string, TensorT<T>*>> params, const AdamWConfig& cfg)
        : cfg_(cfg), params_(std::move(params)) {
        cfg_.validate();
        for (auto& [name, p] : params_) {
            m_.push_back(TensorT<T>::zeros(p->shape));
            v_.push_back(TensorT<T>::zeros(p->shape));
        }
    }

    const AdamWConfig& config() const { return cfg_; }
    int64_t step_count() const { return step_; }
    void set_step_count(int64_t s) { step_ = s; }

    size_t size() const { return params_.size(); }
    const std::string& name(size_t i) const { return params_[i].first; }
    TensorT<T>& m(size_t i) { return m_[i]; }
    TensorT<T>& v(size_t i) { return v_[i]; }
    const TensorT<T>& m(size_t i) const { return m_[i]; }
    const TensorT<T>& v(size_t i) const { return v_[i]; }

    // p <- p*(1 - lr*wd) - lr * mhat / (sqrt(vhat) + eps)
    void step() {
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        const double decay = 1.0 - cfg_.lr * cfg_.weight_decay;
        for (size_t k = 0; k < params_.size(); ++k) {
            auto& p = *params_[k].second;
            if (!p.grad) throw ValueError("adamw: parameter '" + params_[k].first +
                                          "' has no gradient; run backward first");
            auto& pd = *p.data;
            auto& g = *p.grad;
            auto& m = *m_[k].data;
            auto& v = *v_[k].data;
            for (size_t i = 0; i < pd.size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                m[i] = static_cast<T>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi);
                v[i] = static_cast<T>(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi);
                const double mhat = static_cast<double>(m[i]) / bc1;
                const double vhat = static_cast<double>(v[i]) / bc2;
                pd[i] = static_cast<T>(static_cast<double>(pd[i]) * decay -
                                       cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

    void zero_grad() {
        for (auto& [name, p] : params_) p->zero_grad();
    }

private:
    AdamWConfig cfg_;
    std::vector<std::pair<std::string, TensorT<T>*>> params_;
    std::vector<TensorT<T>> m_;
    std::vector<TensorT<T>> v_;
    int64_t step_ = 0;
};

using AdamW = AdamWT<float>;

} // namespace gentron

#pragma once

// Central finite-difference oracle for gradient verification. Everything runs
// in double so the truncation error of the h=1e-3 stencil (O(h^2)) dominates
// rounding noise by several orders of magnitude.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "gentron/tensor.hpp"

namespace gentron::fd {

inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max(floor, std::abs(a) + std::abs(b));
}

// Central difference of loss_fn w.r.t. element i of p; loss_fn must rebuild
// the forward pass from p's current contents on every call.
inline double fd_at(const std::function<TensorT<double>()>& loss_fn, TensorT<double>& p, size_t i,
                    double h) {
    NoGradGuard ng;
    const double orig = (*p.data)[i];
    (*p.data)[i] = orig + h;
    const double lp = loss_fn().item();
    (*p.data)[i] = orig - h;
    const double lm = loss_fn().item();
    (*p.data)[i] = orig;
    return (lp - lm) / (2.0 * h);
}

namespace detail {
inline std::vector<std::vector<double>> analytic_grads(
    const std::function<TensorT<double>()>& loss_fn, std::vector<TensorT<double>*>& params) {
    for (auto* p : params) {
        p->ensure_grad();
        p->zero_grad();
    }
    auto loss = loss_fn();
    backward(loss);
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (auto* p : params) out.push_back(*p->grad);
    return out;
}
} // namespace detail

// Max relative error between analytic gradients and central differences over
// every element of every listed parameter.
inline double max_grad_err(const std::function<TensorT<double>()>& loss_fn,
                           std::vector<TensorT<double>*> params, double h = 1e-3,
                           double floor = 1e-8) {
    const auto analytic = detail::analytic_grads(loss_fn, params);
    double worst = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = *params[pi];
        for (size_t i = 0; i < p.data->size(); ++i) {
            const double fdv = fd_at(loss_fn, p, i, h);
            worst = std::max(worst, rel_err(analytic[pi][i], fdv, floor));
        }
    }
    return worst;
}

// Same check over k elements spaced evenly through the concatenation of all
// parameters, so every tensor family gets probed without a full sweep.
inline double max_grad_err_sampled(const std::function<TensorT<double>()>& loss_fn,
                                   std::vector<TensorT<double>*> params, size_t k, double h = 1e-3,
                                   double floor = 1e-8) {
    const auto analytic = detail::analytic_grads(loss_fn, params);
    size_t total = 0;
    for (auto* p : params) total += p->data->size();
    if (k == 0 || total == 0) throw ValueError("fd: nothing to sample");
    if (k > total) k = total;

    double worst = 0.0;
    size_t checked = 0;
    for (size_t j = 0; j < k; ++j) {
        size_t flat = (j * total) / k + (total / (2 * k));
        if (flat >= total) flat = total - 1;
        size_t pi = 0;
        while (flat >= params[pi]->data->size()) {
            flat -= params[pi]->data->size();
            ++pi;
        }
        const double fdv = fd_at(loss_fn, *params[pi], flat, h);
        worst = std::max(worst, rel_err(analytic[pi][flat], fdv, floor));
        ++checked;
    }
    (void)checked;
    return worst;
}

} // namespace gentron::fd

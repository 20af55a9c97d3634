#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dnadiff/autograd.hpp"
#include "dnadiff/rng.hpp"

namespace dnadiff::nn {

// A named trainable tensor plus its Adam moment buffers.
template <typename S>
struct Parameter {
    std::string name;
    Var<S> var;
    Tensor<S> m;  // first moment
    Tensor<S> v;  // second moment
    int64_t step_count = 0;

    Parameter() = default;
    Parameter(std::string name_, Tensor<S> value)
        : name(std::move(name_)),
          var(make_var(std::move(value), true)),
          m(var->value.shape, S(0)),
          v(var->value.shape, S(0)) {}

    Tensor<S>& value() { return var->value; }
    const Tensor<S>& value() const { return var->value; }
};

template <typename S>
struct AdamConfig {
    S lr = S(1e-3);
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S eps = S(1e-8);
};

// Bias-corrected Adam update. Gradients are left in place; call zero_grads
// when the caller wants them cleared.
template <typename S>
void adam_step(std::vector<Parameter<S>*>& params, const AdamConfig<S>& cfg) {
    for (Parameter<S>* p : params) {
        p->step_count += 1;
        const double t = static_cast<double>(p->step_count);
        const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), t);
        const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), t);
        Tensor<S>& w = p->var->value;
        Tensor<S>& g = p->var->grad;
        if (g.numel() != w.numel()) continue;  // no gradient reached this parameter
        for (int64_t i = 0; i < w.numel(); ++i) {
            p->m[i] = cfg.beta1 * p->m[i] + (S(1) - cfg.beta1) * g[i];
            p->v[i] = cfg.beta2 * p->v[i] + (S(1) - cfg.beta2) * g[i] * g[i];
            S mhat = p->m[i] / static_cast<S>(bc1);
            S vhat = p->v[i] / static_cast<S>(bc2);
            w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        if (!w.all_finite()) throw ValueError("adam_step: parameter '" + p->name + "' became non-finite");
    }
}

template <typename S>
void zero_grads(std::vector<Parameter<S>*>& params) {
    for (Parameter<S>* p : params) {
        Tensor<S>& g = p->var->grad;
        if (g.numel() != p->var->value.numel()) g = Tensor<S>(p->var->value.shape, S(0));
        else g.fill(S(0));
    }
}

// Linear warmup to base_lr over warmup_steps, then cosine decay to 0 at
// total_steps. step is 0-based.
template <typename S>
S lr_cosine_warmup(int64_t step, int64_t warmup_steps, int64_t total_steps, S base_lr) {
    if (warmup_steps > 0 && step < warmup_steps)
        return base_lr * static_cast<S>(step + 1) / static_cast<S>(warmup_steps);
    if (step >= total_steps) return S(0);
    double progress = static_cast<double>(step - warmup_steps) /
                      static_cast<double>(std::max<int64_t>(1, total_steps - warmup_steps));
    return base_lr * static_cast<S>(0.5 * (1.0 + std::cos(progress * 3.14159265358979323846)));
}

// Kaiming-uniform fan-in init: U(-b, b) with b = sqrt(6 / fan_in).
template <typename S>
void kaiming_uniform(Tensor<S>& w, int64_t fan_in, RngStream& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<S>(rng.uniform(-bound, bound));
}

// fan_in for a conv kernel [C_out, C_in, K...] is C_in * prod(K); for a
// linear weight [d_in, d_out] it is d_in.
inline int64_t conv_fan_in(const Shape& kernel_shape) {
    int64_t f = 1;
    for (size_t i = 1; i < kernel_shape.size(); ++i) f *= kernel_shape[i];
    return f;
}

}  // namespace dnadiff::nn

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "eyesim/paramstore.hpp"

namespace eyesim {

// warmup: linear ramp 0 -> base_lr over warmup_steps, then cosine decay
// from base_lr down to min_lr over the remaining span.
inline double cosine_lr(int64_t step, int64_t total_steps, double base_lr, double min_lr,
                        int64_t warmup_steps) {
  require_config(total_steps > 0, "cosine_lr: total_steps must be positive");
  require_config(warmup_steps < total_steps, "cosine_lr: warmup must be shorter than schedule");
  require_config(step >= 0 && step <= total_steps, "cosine_lr: step out of range");
  if (warmup_steps > 0 && step < warmup_steps)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const double s = static_cast<double>(step - warmup_steps);
  const double span = static_cast<double>(total_steps - warmup_steps);
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(3.14159265358979323846 * s / span));
}

template <class T>
struct OptimizerState {
  std::map<std::string, Tensor<T>> m;
  std::map<std::string, Tensor<T>> v;
  int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

using LrScaleFn = std::function<double(const std::string&)>;

inline double unit_scale(const std::string&) { return 1.0; }

namespace detail {

template <class T>
void adam_family_step(ParamStore<T>& params, const std::map<std::string, Tensor<T>>& grads,
                      OptimizerState<T>& st, double lr, double beta1, double beta2, double eps,
                      double weight_decay, bool decoupled, const LrScaleFn& scale) {
  // validate everything first; a NaN gradient aborts before any mutation
  for (const auto& [name, g] : grads) {
    require_dim(params.has(name), "optimizer: gradient for unknown parameter " + name);
    require_dim(g.same_shape(params.at(name)), "optimizer: gradient shape mismatch for " + name);
    if (!all_finite(g)) throw NumericError("optimizer: non-finite gradient for " + name + ", update aborted");
  }
  st.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
  for (const auto& [name, g] : grads) {
    Tensor<T>& p = params.at(name);
    auto mi = st.m.find(name);
    if (mi == st.m.end()) {
      mi = st.m.emplace(name, Tensor<T>::zeros(p.shape)).first;
      st.v.emplace(name, Tensor<T>::zeros(p.shape));
    }
    Tensor<T>& m = mi->second;
    Tensor<T>& v = st.v.at(name);
    const double lr_p = lr * scale(name);
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double gi = static_cast<double>(g[i]);
      double md = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * gi;
      double vd = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * gi * gi;
      m[i] = static_cast<T>(md);
      v[i] = static_cast<T>(vd);
      double mhat = md / bc1;
      double vhat = vd / bc2;
      double upd = lr_p * mhat / (std::sqrt(vhat) + eps);
      if (decoupled) upd += lr_p * weight_decay * static_cast<double>(p[i]);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - upd);
    }
  }
}

}  // namespace detail

// Standard bias-corrected Adam.
template <class T>
void adam_step(ParamStore<T>& params, const std::map<std::string, Tensor<T>>& grads,
               OptimizerState<T>& st, double lr, double beta1, double beta2, double eps,
               const LrScaleFn& scale = unit_scale) {
  detail::adam_family_step(params, grads, st, lr, beta1, beta2, eps, 0.0, false, scale);
}

// Adam plus decoupled weight decay (lr * wd * param), independent of the
// moment estimates.
template <class T>
void adamw_step(ParamStore<T>& params, const std::map<std::string, Tensor<T>>& grads,
                OptimizerState<T>& st, double lr, double weight_decay, double beta1, double beta2,
                double eps, const LrScaleFn& scale = unit_scale) {
  detail::adam_family_step(params, grads, st, lr, beta1, beta2, eps, weight_decay, true, scale);
}

}  // namespace eyesim

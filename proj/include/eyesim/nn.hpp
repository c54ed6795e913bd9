#pragma once

#include <functional>
#include <map>
#include <string>

#include "eyesim/ops.hpp"
#include "eyesim/paramstore.hpp"

namespace eyesim {

// Bridges a ParamStore to a tape: parameters become leaf vars on first use.
// The predicate decides which names are trainable on this tape (frozen
// networks run forward-only at zero closure cost).
template <class T>
class VarPack {
 public:
  VarPack(Tape<T>& tape, const ParamStore<T>& store,
          std::function<bool(const std::string&)> trainable = nullptr)
      : tape_(&tape), store_(&store), trainable_(std::move(trainable)) {}

  Var operator()(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    bool rg = trainable_ ? trainable_(name) : true;
    Var v = tape_->leaf(store_->at(name), rg);
    cache_.emplace(name, v);
    return v;
  }

  // route a name to an existing var (gradient checking injects perturbed
  // leaves this way)
  void preset(const std::string& name, Var v) { cache_[name] = v; }

  // gradients for every touched parameter, zeros where nothing flowed
  std::map<std::string, Tensor<T>> collect_grads() const {
    std::map<std::string, Tensor<T>> out;
    for (const auto& [name, v] : cache_) {
      if (!tape_->needs_grad(v)) continue;
      out[name] = tape_->has_grad(v) ? tape_->grad(v) : Tensor<T>::zeros(store_->at(name).shape);
    }
    return out;
  }

  const std::map<std::string, Var>& touched() const { return cache_; }
  Tape<T>& tape() { return *tape_; }

 private:
  Tape<T>* tape_;
  const ParamStore<T>* store_;
  std::function<bool(const std::string&)> trainable_;
  std::map<std::string, Var> cache_;
};

// He-style uniform fan-in init; zero_init pins weights and bias at zero,
// which the residual nets use on their output projections so they start as
// the identity map.
template <class T>
void init_conv2d(ParamStore<T>& ps, const std::string& name, int64_t cout, int64_t cin, int64_t k,
                 RngStream& rng, const std::string& role, bool zero_init = false) {
  Tensor<T> w({cout, cin, k, k});
  if (!zero_init) {
    const double limit = std::sqrt(6.0 / static_cast<double>(cin * k * k));
    fill_uniform(w, rng, -limit, limit);
  }
  ps.add(name + ".weight", std::move(w), role);
  ps.add(name + ".bias", Tensor<T>::zeros({cout}), role);
}

template <class T>
void init_conv3d_p(ParamStore<T>& ps, const std::string& name, int64_t cout, int64_t cin, int64_t kt,
                   int64_t kh, int64_t kw, RngStream& rng, const std::string& role,
                   bool zero_init = false, bool with_bias = true) {
  Tensor<T> w({cout, cin, kt, kh, kw});
  if (!zero_init) {
    const double limit = std::sqrt(6.0 / static_cast<double>(cin * kt * kh * kw));
    fill_uniform(w, rng, -limit, limit);
  }
  ps.add(name + ".weight", std::move(w), role);
  if (with_bias) ps.add(name + ".bias", Tensor<T>::zeros({cout}), role);
}

template <class T>
void init_linear(ParamStore<T>& ps, const std::string& name, int64_t out, int64_t in, RngStream& rng,
                 const std::string& role, bool zero_init = false) {
  Tensor<T> w({out, in});
  if (!zero_init) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    fill_uniform(w, rng, -limit, limit);
  }
  ps.add(name + ".weight", std::move(w), role);
  ps.add(name + ".bias", Tensor<T>::zeros({out}), role);
}

// 'same' conv over a single [C,H,W] frame
template <class T>
Var conv_frame(VarPack<T>& pk, const std::string& name, Var x) {
  Tape<T>& tp = pk.tape();
  const Tensor<T>& xv = tp.val(x);
  Var x4 = reshape(tp, x, Shape{1, xv.shape[0], xv.shape[1], xv.shape[2]});
  const Tensor<T>& wv = tp.val(pk(name + ".weight"));
  const int64_t pad = wv.shape[2] / 2;
  Var o = conv2d(tp, x4, pk(name + ".weight"), pk(name + ".bias"), 1, pad);
  const Shape& os = tp.val(o).shape;
  return reshape(tp, o, Shape{os[1], os[2], os[3]});
}

// conv-act-conv with skip connection on a [C,H,W] frame
template <class T>
Var residual_block_frame(VarPack<T>& pk, const std::string& prefix, Var x, ActKind act) {
  Var h = conv_frame(pk, prefix + ".conv1", x);
  h = activation(pk.tape(), h, act);
  h = conv_frame(pk, prefix + ".conv2", h);
  return add(pk.tape(), x, h);
}

}  // namespace eyesim

#pragma once

#include <vector>

#include "eyesim/nn.hpp"
#include "eyesim/video.hpp"
#include "eyesim/viewdec.hpp"

namespace eyesim {

// ---- backbone stand-in --------------------------------------------------
// stem conv3d with spatial stride 2, then residual 3D blocks with a strided
// downsampling conv between blocks; spatial extent shrinks by 8 in total,
// the temporal extent is preserved.

struct BackboneCfg {
  int64_t channels = 16;
  int64_t blocks = 3;
  ActKind act = ActKind::kLRelu;
};

template <class T>
void init_backbone(ParamStore<T>& ps, const std::string& prefix, const BackboneCfg& cfg,
                   RngStream& rng) {
  const std::string role = prefix;
  init_conv3d_p(ps, prefix + ".stem", cfg.channels, 3, 3, 3, 3, rng, role);
  for (int64_t i = 0; i < cfg.blocks; ++i) {
    const std::string b = prefix + ".block" + std::to_string(i);
    init_conv3d_p(ps, b + ".conv1", cfg.channels, cfg.channels, 3, 3, 3, rng, role);
    init_conv3d_p(ps, b + ".conv2", cfg.channels, cfg.channels, 3, 3, 3, rng, role);
    if (i + 1 < cfg.blocks)
      init_conv3d_p(ps, prefix + ".down" + std::to_string(i), cfg.channels, cfg.channels, 3, 3, 3,
                    rng, role);
  }
}

template <class T>
Var conv3d_same(VarPack<T>& pk, const std::string& name, Var x, Stride3 st = {}) {
  Var w = pk(name + ".weight");
  Var b = pk(name + ".bias");
  const Pad3 pad{pk.tape().val(w).shape[2] / 2, pk.tape().val(w).shape[3] / 2,
                 pk.tape().val(w).shape[4] / 2};
  return conv3d(pk.tape(), x, w, b, st, pad);
}

// x: [B,3,T,H,W] -> [B,C,T,ceil(H/8),ceil(W/8)]
template <class T>
Var backbone_forward(VarPack<T>& pk, const std::string& prefix, Var x, const BackboneCfg& cfg) {
  Tape<T>& tp = pk.tape();
  const Tensor<T>& xv = tp.val(x);
  require_dim(xv.ndim() == 5 && xv.shape[1] == 3, "backbone: expects [B,3,T,H,W]");
  require_input(xv.shape[3] >= 8 && xv.shape[4] >= 8, "backbone: input smaller than total stride");
  Var h = conv3d_same(pk, prefix + ".stem", x, Stride3{1, 2, 2});
  h = activation(tp, h, cfg.act);
  for (int64_t i = 0; i < cfg.blocks; ++i) {
    const std::string b = prefix + ".block" + std::to_string(i);
    Var r = conv3d_same(pk, b + ".conv1", h);
    r = activation(tp, r, cfg.act);
    r = conv3d_same(pk, b + ".conv2", r);
    h = add(tp, h, r);
    if (i + 1 < cfg.blocks) {
      h = conv3d_same(pk, prefix + ".down" + std::to_string(i), h, Stride3{1, 2, 2});
      h = activation(tp, h, cfg.act);
    }
  }
  return h;
}

// ---- enhanced-frame embedding ---------------------------------------------
// append: original frames followed by n_concat uniformly chosen enhanced
// frames; replace: n_concat uniformly spaced originals substituted in place.

enum class AssembleMode { kAppend, kReplace };

template <class T>
VideoClip<T> assemble_input(const VideoClip<T>& original, const VideoClip<T>& enhanced,
                            int64_t n_concat, AssembleMode mode) {
  require_input(n_concat >= 0, "assemble_input: n_concat must be >= 0");
  if (n_concat == 0) return original;
  require_dim(original.h() == enhanced.h() && original.w() == enhanced.w() &&
                  original.c() == enhanced.c(),
              "assemble_input: enhanced clip misaligned with original");
  require_input(n_concat <= enhanced.t(), "assemble_input: n_concat exceeds enhanced frames");
  if (mode == AssembleMode::kAppend) {
    Tensor<T> frames({original.t() + n_concat, original.h(), original.w(), original.c()});
    VideoClip<T> out(std::move(frames), original.source_id);
    for (int64_t t = 0; t < original.t(); ++t) set_frame_hwc(out, t, frame_hwc(original, t));
    for (int64_t i = 0; i < n_concat; ++i) {
      int64_t src = uniform_sample_index(i, enhanced.t(), n_concat);
      set_frame_hwc(out, original.t() + i, frame_hwc(enhanced, src));
    }
    out.fps = original.fps;
    return out;
  }
  require_input(n_concat <= original.t(), "assemble_input: n_concat exceeds original frames");
  VideoClip<T> out = original;
  for (int64_t i = 0; i < n_concat; ++i) {
    int64_t dst = uniform_sample_index(i, original.t(), n_concat);
    int64_t src = uniform_sample_index(i, enhanced.t(), n_concat);
    set_frame_hwc(out, dst, frame_hwc(enhanced, src));
  }
  return out;
}

// ---- EyeSim head ------------------------------------------------------------

struct HeadCfg {
  int64_t channels = 16;
  ActKind phi = ActKind::kGelu;
  int64_t cprime() const { return std::max<int64_t>(1, channels / 4); }
};

// DyT: tanh(alpha * x) ⊙ w + b with a learnable scalar alpha and per-channel
// scale/shift; initialized as tanh with unit scale.
template <class T>
void init_dyt(ParamStore<T>& ps, const std::string& prefix, int64_t channels, RngStream&,
              const std::string& role) {
  ps.add(prefix + ".alpha", Tensor<T>::scalar(T(1)), role);
  ps.add(prefix + ".weight", Tensor<T>::full({channels}, T(1)), role);
  ps.add(prefix + ".bias", Tensor<T>::zeros({channels}), role);
}

template <class T>
Var dyt(VarPack<T>& pk, const std::string& prefix, Var x) {
  Tape<T>& tp = pk.tape();
  Var y = activation(tp, mul_bscalar(tp, x, pk(prefix + ".alpha")), ActKind::kTanh);
  return channel_shift(tp, channel_scale(tp, y, pk(prefix + ".weight")), pk(prefix + ".bias"));
}

template <class T>
void init_gaze(ParamStore<T>& ps, const std::string& prefix, const HeadCfg& cfg, RngStream& rng,
               const std::string& role) {
  init_conv3d_p(ps, prefix + ".w1", cfg.cprime(), cfg.channels, 1, 1, 1, rng, role);
  init_dyt(ps, prefix + ".dyt", cfg.cprime(), rng, role);
  init_conv3d_p(ps, prefix + ".w2", cfg.channels, cfg.cprime(), 1, 1, 1, rng, role);
}

// channel gate from the pooled descriptor:
// A = sigmoid(W2 gelu(DyT(W1 AvgPool(Z)))), O = A ⊙ Z
template <class T>
Var gaze_attention(VarPack<T>& pk, const std::string& prefix, Var z, const HeadCfg& cfg,
                   Var* gate_out = nullptr) {
  Tape<T>& tp = pk.tape();
  require_dim(tp.val(z).shape[1] == cfg.channels, "gaze: channel count mismatch");
  Var q = global_avg_pool(tp, z);
  Var a = conv3d(tp, q, pk(prefix + ".w1.weight"), pk(prefix + ".w1.bias"));
  a = dyt(pk, prefix + ".dyt", a);
  a = activation(tp, a, cfg.phi);
  Var gate = activation(tp, conv3d(tp, a, pk(prefix + ".w2.weight"), pk(prefix + ".w2.bias")),
                        ActKind::kSigmoid);
  if (gate_out) *gate_out = gate;
  return mul_gate(tp, gate, z);
}

template <class T>
void init_scan(ParamStore<T>& ps, const std::string& prefix, const HeadCfg& cfg, RngStream& rng,
               const std::string& role) {
  // temporal kernel slices {W_-1, W_0, W_+1} stored as one [C,C,3,1,1] kernel;
  // bias-free so identity configurations hold bit-exactly
  const double limit = std::sqrt(6.0 / static_cast<double>(cfg.channels * 3));
  Tensor<T> wtau({cfg.channels, cfg.channels, 3, 1, 1});
  fill_uniform(wtau, rng, -limit, limit);
  ps.add(prefix + ".wtau", std::move(wtau), role);
  const double plimit = std::sqrt(6.0 / static_cast<double>(cfg.channels));
  Tensor<T> proj({cfg.channels, cfg.channels, 1, 1, 1});
  fill_uniform(proj, rng, -plimit, plimit);
  ps.add(prefix + ".proj", std::move(proj), role);
}

// local temporal aggregation with replicate padding, then channel projection:
// Z(t) = phi(sum_tau W_tau X(t+tau)), Y = P Z
template <class T>
Var scan(VarPack<T>& pk, const std::string& prefix, Var x, const HeadCfg& cfg, ActKind phi) {
  Tape<T>& tp = pk.tape();
  require_dim(tp.val(x).shape[1] == cfg.channels, "scan: channel count mismatch");
  Var z = conv3d(tp, x, pk(prefix + ".wtau"), kNoVar, Stride3{}, Pad3{1, 0, 0}, PadMode::kReplicate);
  z = activation(tp, z, phi);
  return conv3d(tp, z, pk(prefix + ".proj"), kNoVar);
}

template <class T>
void init_head(ParamStore<T>& ps, const std::string& prefix, const HeadCfg& cfg, RngStream& rng) {
  const std::string role = prefix;
  init_gaze(ps, prefix + ".gaze", cfg, rng, role);
  init_scan(ps, prefix + ".scan", cfg, rng, role);
  // zero-initialized scorers and gate: fresh heads output 0 with a neutral gate
  init_linear(ps, prefix + ".score_gaze", 1, cfg.channels, rng, role, /*zero_init=*/true);
  init_linear(ps, prefix + ".score_scan", 1, cfg.channels, rng, role, /*zero_init=*/true);
  init_linear(ps, prefix + ".gate", 1, cfg.channels, rng, role, /*zero_init=*/true);
}

struct HeadDiagnostics {
  double s_gaze = 0, s_scan = 0, gate = 0;
  std::vector<double> gate_channels;
};

template <class T>
Var pooled_linear(VarPack<T>& pk, const std::string& name, Var feat) {
  Tape<T>& tp = pk.tape();
  Var pooled = global_avg_pool(tp, feat);
  const Shape& s = tp.val(pooled).shape;
  Var flat = reshape(tp, pooled, Shape{s[0], s[1]});
  Var out = linear(tp, flat, pk(name + ".weight"), pk(name + ".bias"));
  return reshape(tp, out, Shape{s[0]});
}

// score = g * s_gaze + (1-g) * s_scan with a per-item scalar gate
template <class T>
Var head_forward(VarPack<T>& pk, const std::string& prefix, Var z, const HeadCfg& cfg,
                 HeadDiagnostics* diag = nullptr) {
  Tape<T>& tp = pk.tape();
  Var gate_map = kNoVar;
  Var o = gaze_attention(pk, prefix + ".gaze", z, cfg, &gate_map);
  Var s_gaze = pooled_linear(pk, prefix + ".score_gaze", o);
  Var y = scan(pk, prefix + ".scan", z, cfg, cfg.phi);
  Var s_scan = pooled_linear(pk, prefix + ".score_scan", y);
  Var g = activation(tp, pooled_linear(pk, prefix + ".gate", z), ActKind::kSigmoid);
  Var one_minus_g = affine(tp, g, T(-1), T(1));
  Var score = add(tp, mul(tp, g, s_gaze), mul(tp, one_minus_g, s_scan));
  if (diag) {
    diag->s_gaze = static_cast<double>(tp.val(s_gaze)[0]);
    diag->s_scan = static_cast<double>(tp.val(s_scan)[0]);
    diag->gate = static_cast<double>(tp.val(g)[0]);
    const Tensor<T>& gm = tp.val(gate_map);
    diag->gate_channels.assign(gm.data.begin(), gm.data.end());
  }
  return score;
}

// ---- branch fusion -----------------------------------------------------------

template <class T>
void init_fusion(ParamStore<T>& ps, const std::string& prefix) {
  // sigmoid(0) = 0.5: fusion starts as the arithmetic mean
  ps.add(prefix + ".logit", Tensor<T>::zeros({1}), prefix);
}

// mos = lambda * s_aesthetic + (1 - lambda) * s_technical,
// lambda = sigmoid(learnable logit)
template <class T>
Var fuse_branches(VarPack<T>& pk, const std::string& prefix, Var s_aesthetic, Var s_technical,
                  double* lambda_out = nullptr) {
  Tape<T>& tp = pk.tape();
  require_dim(tp.val(s_aesthetic).numel() == 1 && tp.val(s_technical).numel() == 1,
              "fuse_branches: expects per-item scalar scores");
  check_finite(tp.val(s_aesthetic), "fuse_branches aesthetic score");
  check_finite(tp.val(s_technical), "fuse_branches technical score");
  Var lam = activation(tp, pk(prefix + ".logit"), ActKind::kSigmoid);
  if (lambda_out) *lambda_out = static_cast<double>(tp.val(lam)[0]);
  Var one_minus = affine(tp, lam, T(-1), T(1));
  return add(tp, mul(tp, lam, s_aesthetic), mul(tp, one_minus, s_technical));
}

}  // namespace eyesim

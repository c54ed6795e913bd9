#pragma once

#include <vector>

#include "eyesim/nn.hpp"
#include "eyesim/video.hpp"

namespace eyesim {

struct ResidualBlockCfg {
  int64_t channels = 16;
  int64_t n_blocks = 4;
  ActKind act = ActKind::kLRelu;
};

// ---- CleanNet ----------------------------------------------------------------
// Weight-tied refinement: x <- x + R(x) repeated `loops` times, where R is
// conv(C->F) -> n_blocks residual blocks -> conv(F->C). The output projection
// is zero-initialized, so a fresh network is the identity map. One clamp to
// [0,1] after the final loop keeps intermediate iterates unsaturated.

struct CleanNetCfg {
  ResidualBlockCfg blocks{16, 4, ActKind::kLRelu};
  int64_t loops = 3;
};

template <class T>
void init_cleannet(ParamStore<T>& ps, const std::string& prefix, const CleanNetCfg& cfg,
                   RngStream& rng) {
  const std::string role = prefix;
  init_conv2d(ps, prefix + ".conv_in", cfg.blocks.channels, 3, 3, rng, role);
  for (int64_t i = 0; i < cfg.blocks.n_blocks; ++i) {
    const std::string b = prefix + ".block" + std::to_string(i);
    init_conv2d(ps, b + ".conv1", cfg.blocks.channels, cfg.blocks.channels, 3, rng, role);
    init_conv2d(ps, b + ".conv2", cfg.blocks.channels, cfg.blocks.channels, 3, rng, role);
  }
  init_conv2d(ps, prefix + ".conv_out", 3, cfg.blocks.channels, 3, rng, role, /*zero_init=*/true);
}

template <class T>
Var cleannet_residual(VarPack<T>& pk, const std::string& prefix, Var x, const CleanNetCfg& cfg) {
  Var h = conv_frame(pk, prefix + ".conv_in", x);
  for (int64_t i = 0; i < cfg.blocks.n_blocks; ++i)
    h = residual_block_frame(pk, prefix + ".block" + std::to_string(i), h, cfg.blocks.act);
  return conv_frame(pk, prefix + ".conv_out", h);
}

// one frame [3,H,W] through `loops` weight-tied refinements; no final clamp
// here so training sees the raw iterate (the clip-level API clamps once)
template <class T>
Var cleannet_frame(VarPack<T>& pk, const std::string& prefix, Var x, const CleanNetCfg& cfg,
                   int64_t loops) {
  require_input(loops >= 0, "cleannet: loops must be >= 0");
  Var cur = x;
  for (int64_t l = 0; l < loops; ++l)
    cur = add(pk.tape(), cur, cleannet_residual(pk, prefix, cur, cfg));
  return cur;
}

template <class T>
void validate_cleannet(const ParamStore<T>& ps, const std::string& prefix, const CleanNetCfg& cfg) {
  const Shape want{cfg.blocks.channels, 3, 3, 3};
  require_config(ps.has(prefix + ".conv_in.weight") && ps.at(prefix + ".conv_in.weight").shape == want,
                 "cleannet: parameter shapes do not match the configuration");
  require_config(ps.has(prefix + ".block" + std::to_string(cfg.blocks.n_blocks - 1) + ".conv1.weight"),
                 "cleannet: missing residual block parameters");
}

template <class T>
VideoClip<T> cleannet_forward(const VideoClip<T>& clip, const ParamStore<T>& ps,
                              const std::string& prefix, const CleanNetCfg& cfg, int64_t loops) {
  require_input(loops >= 0, "cleannet: loops must be >= 0");
  if (loops == 0) return clip;
  validate_cleannet(ps, prefix, cfg);
  VideoClip<T> out = clip;
  for (int64_t t = 0; t < clip.t(); ++t) {
    Tape<T> tp;
    VarPack<T> pk(tp, ps, [](const std::string&) { return false; });
    Var x = tp.leaf(frame_chw(clip, t));
    Var y = clamp01(tp, cleannet_frame(pk, prefix, x, cfg, loops));
    set_frame_chw(out, t, tp.val(y));
  }
  return out;
}

// ---- flow estimation -----------------------------------------------------------
// Three-level pyramid: predict coarse flow at quarter resolution from the
// stacked frame pair, then upsample x2 (scaling the displacements) and refine
// with a two-conv correction at each finer level. All flow-producing convs
// are zero-initialized.

struct FlowCfg {
  int64_t channels = 8;
  ActKind act = ActKind::kLRelu;
};

template <class T>
void init_flownet(ParamStore<T>& ps, const std::string& prefix, const FlowCfg& cfg, RngStream& rng) {
  const std::string role = prefix;
  init_conv2d(ps, prefix + ".coarse.conv1", cfg.channels, 6, 3, rng, role);
  init_conv2d(ps, prefix + ".coarse.conv2", cfg.channels, cfg.channels, 3, rng, role);
  init_conv2d(ps, prefix + ".coarse.conv3", 2, cfg.channels, 3, rng, role);
  for (int lvl : {1, 0}) {
    const std::string r = prefix + ".refine" + std::to_string(lvl);
    init_conv2d(ps, r + ".conv1", cfg.channels, 8, 3, rng, role);
    init_conv2d(ps, r + ".conv2", 2, cfg.channels, 3, rng, role);
  }
  // near-zero initial flows, but with live gradients through every level
  // (a fully zeroed output chain stalls joint training for thousands of steps)
  for (const char* n : {".coarse.conv3.weight", ".refine1.conv2.weight", ".refine0.conv2.weight"}) {
    Tensor<T>& w = ps.at(prefix + n);
    for (T& v : w.data) v *= T(0.05);
  }
}

// all flow-producing convs zeroed: the network emits exactly zero flow
template <class T>
void zero_flow_outputs(ParamStore<T>& ps, const std::string& prefix) {
  for (const char* n : {".coarse.conv3.weight", ".coarse.conv3.bias", ".refine1.conv2.weight",
                        ".refine1.conv2.bias", ".refine0.conv2.weight", ".refine0.conv2.bias"}) {
    Tensor<T>& w = ps.at(prefix + n);
    std::fill(w.data.begin(), w.data.end(), T(0));
  }
}

// ref, neighbor: [3,H,W]; returns flow [2,H,W] mapping ref pixels into the
// neighbor frame
template <class T>
Var flow_estimate(VarPack<T>& pk, const std::string& prefix, Var ref, Var neighbor,
                  const FlowCfg& cfg) {
  Tape<T>& tp = pk.tape();
  const Tensor<T>& rv = tp.val(ref);
  require_dim(rv.same_shape(tp.val(neighbor)), "flow_estimate: frame shapes differ");
  const int64_t H = rv.shape[1], W = rv.shape[2];
  require_input(H >= 8 && W >= 8, "flow_estimate: frames must be at least 8x8");
  const int64_t h1 = (H + 1) / 2, w1 = (W + 1) / 2;
  const int64_t h2 = (h1 + 1) / 2, w2 = (w1 + 1) / 2;
  Var r1 = resize_chw(tp, ref, h1, w1), n1 = resize_chw(tp, neighbor, h1, w1);
  Var r2 = resize_chw(tp, r1, h2, w2), n2 = resize_chw(tp, n1, h2, w2);
  // coarse prediction
  Var h = conv_frame(pk, prefix + ".coarse.conv1", concat_axis(tp, {r2, n2}, 0));
  h = activation(tp, h, cfg.act);
  h = conv_frame(pk, prefix + ".coarse.conv2", h);
  h = activation(tp, h, cfg.act);
  Var flow = conv_frame(pk, prefix + ".coarse.conv3", h);
  // refine to half, then full resolution
  struct Level {
    Var r, n;
    int64_t h, w;
    int lvl;
  };
  for (const Level& L : {Level{r1, n1, h1, w1, 1}, Level{ref, neighbor, H, W, 0}}) {
    Var up = mul_scalar(tp, resize_chw(tp, flow, L.h, L.w), T(2));
    Var inp = concat_axis(tp, {L.r, L.n, up}, 0);
    Var d = conv_frame(pk, prefix + ".refine" + std::to_string(L.lvl) + ".conv1", inp);
    d = activation(tp, d, cfg.act);
    d = conv_frame(pk, prefix + ".refine" + std::to_string(L.lvl) + ".conv2", d);
    flow = add(tp, up, d);
  }
  return flow;
}

// plain wrapper returning the spec-facing [H,W,2] layout
template <class T>
Tensor<T> flow_estimate_hwc(const Tensor<T>& ref_hwc, const Tensor<T>& neighbor_hwc,
                            const ParamStore<T>& ps, const std::string& prefix,
                            const FlowCfg& cfg = {}) {
  Tape<T> tp;
  VarPack<T> pk(tp, ps, [](const std::string&) { return false; });
  Var ref = tp.leaf(hwc_to_chw(ref_hwc));
  Var nb = tp.leaf(hwc_to_chw(neighbor_hwc));
  Var flow = flow_estimate(pk, prefix, ref, nb, cfg);
  return chw_to_hwc(tp.val(flow));
}

// ---- BasicVSR-mini ---------------------------------------------------------
// Resolution-preserving bidirectional recurrence. For each direction the
// hidden state of the adjacent frame is warped by the estimated flow,
// concatenated with the current frame, and pushed through conv + residual
// blocks. Per-frame output is conv_fuse(concat(h_f, h_b)) + frame, with
// conv_fuse zero-initialized (fresh network = identity).

struct VsrMiniCfg {
  ResidualBlockCfg blocks{16, 3, ActKind::kLRelu};
  FlowCfg flow{};
};

template <class T>
void init_vsrmini(ParamStore<T>& ps, const std::string& prefix, const VsrMiniCfg& cfg,
                  RngStream& rng) {
  const std::string role = prefix;
  init_flownet(ps, prefix + ".flow", cfg.flow, rng);
  for (const char* dir : {"backward", "forward"}) {
    const std::string d = prefix + "." + dir;
    init_conv2d(ps, d + ".conv_in", cfg.blocks.channels, 3 + cfg.blocks.channels, 3, rng, role);
    for (int64_t i = 0; i < cfg.blocks.n_blocks; ++i) {
      const std::string b = d + ".block" + std::to_string(i);
      init_conv2d(ps, b + ".conv1", cfg.blocks.channels, cfg.blocks.channels, 3, rng, role);
      init_conv2d(ps, b + ".conv2", cfg.blocks.channels, cfg.blocks.channels, 3, rng, role);
    }
  }
  init_conv2d(ps, prefix + ".fuse", 3, 2 * cfg.blocks.channels, 3, rng, role, /*zero_init=*/true);
}

template <class T>
Var vsr_direction_step(VarPack<T>& pk, const std::string& dir_prefix, Var frame, Var hidden_warped,
                       const VsrMiniCfg& cfg) {
  Tape<T>& tp = pk.tape();
  Var h = conv_frame(pk, dir_prefix + ".conv_in", concat_axis(tp, {frame, hidden_warped}, 0));
  for (int64_t i = 0; i < cfg.blocks.n_blocks; ++i)
    h = residual_block_frame(pk, dir_prefix + ".block" + std::to_string(i), h, cfg.blocks.act);
  return h;
}

// frames: per-frame [3,H,W] vars; returns per-frame enhanced vars (no clamp)
template <class T>
std::vector<Var> vsrmini_frames(VarPack<T>& pk, const std::string& prefix,
                                const std::vector<Var>& frames, const VsrMiniCfg& cfg) {
  Tape<T>& tp = pk.tape();
  require_input(!frames.empty(), "vsrmini: empty clip");
  const int64_t n = static_cast<int64_t>(frames.size());
  const Shape& fs = tp.val(frames[0]).shape;
  const int64_t F = cfg.blocks.channels, H = fs[1], W = fs[2];
  auto zeros_hidden = [&] { return tp.leaf(Tensor<T>::zeros({F, H, W})); };
  // backward pass: t = n-1 .. 0, neighbor is t+1
  std::vector<Var> hb(frames.size());
  for (int64_t t = n - 1; t >= 0; --t) {
    Var warped;
    if (t == n - 1) {
      warped = zeros_hidden();
    } else {
      Var flow = flow_estimate(pk, prefix + ".flow", frames[t], frames[t + 1], cfg.flow);
      warped = warp_chw(tp, hb[t + 1], flow);
    }
    hb[t] = vsr_direction_step(pk, prefix + ".backward", frames[t], warped, cfg);
  }
  // forward pass: t = 0 .. n-1, neighbor is t-1
  std::vector<Var> hf(frames.size());
  for (int64_t t = 0; t < n; ++t) {
    Var warped;
    if (t == 0) {
      warped = zeros_hidden();
    } else {
      Var flow = flow_estimate(pk, prefix + ".flow", frames[t], frames[t - 1], cfg.flow);
      warped = warp_chw(tp, hf[t - 1], flow);
    }
    hf[t] = vsr_direction_step(pk, prefix + ".forward", frames[t], warped, cfg);
  }
  std::vector<Var> out(frames.size());
  for (int64_t t = 0; t < n; ++t) {
    Var fused = conv_frame(pk, prefix + ".fuse", concat_axis(tp, {hf[t], hb[t]}, 0));
    out[t] = add(tp, frames[t], fused);
  }
  return out;
}

template <class T>
void validate_vsrmini(const ParamStore<T>& ps, const std::string& prefix, const VsrMiniCfg& cfg) {
  const Shape want{cfg.blocks.channels, 3 + cfg.blocks.channels, 3, 3};
  require_config(ps.has(prefix + ".backward.conv_in.weight") &&
                     ps.at(prefix + ".backward.conv_in.weight").shape == want,
                 "vsrmini: parameter shapes do not match the configuration");
}

template <class T>
VideoClip<T> vsrmini_forward(const VideoClip<T>& clip, const ParamStore<T>& ps,
                             const std::string& prefix, const VsrMiniCfg& cfg) {
  require_input(clip.t() >= 1, "vsrmini: empty clip");
  validate_vsrmini(ps, prefix, cfg);
  Tape<T> tp;
  VarPack<T> pk(tp, ps, [](const std::string&) { return false; });
  std::vector<Var> frames;
  frames.reserve(clip.t());
  for (int64_t t = 0; t < clip.t(); ++t) frames.push_back(tp.leaf(frame_chw(clip, t)));
  std::vector<Var> out = vsrmini_frames(pk, prefix, frames, cfg);
  VideoClip<T> res = clip;
  for (int64_t t = 0; t < clip.t(); ++t) set_frame_chw(res, t, tp.val(clamp01(tp, out[t])));
  return res;
}

}  // namespace eyesim

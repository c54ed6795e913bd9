#pragma once

#include <functional>
#include <set>
#include <vector>

#include "eyesim/degrade.hpp"
#include "eyesim/eval.hpp"
#include "eyesim/nn.hpp"
#include "eyesim/video.hpp"
#include "eyesim/viewdec.hpp"

namespace eyesim {

struct LossWeights {
  double alpha1 = 0.3;
  double alpha2 = 0.01;
  double eps = 1e-3;
};

template <class T>
double charbonnier_value(const Tensor<T>& x, const Tensor<T>& y, double eps) {
  Tape<T> tp;
  return static_cast<double>(tp.val(charbonnier_op(tp, tp.leaf(x), tp.leaf(y), static_cast<T>(eps)))[0]);
}

// L_pixel: reconstruction against the clean reference
template <class T>
Var loss_pixel(Tape<T>& tp, Var v_ori, Var v_dis_enh, T eps) {
  return charbonnier_op(tp, v_ori, v_dis_enh, eps);
}

// L_identity: clean input should pass through unchanged
template <class T>
Var loss_identity(Tape<T>& tp, Var v_ori, Var v_ori_enh, T eps) {
  return charbonnier_op(tp, v_ori, v_ori_enh, eps);
}

// Differentiable per-frame quality penalty 100 - score. Same construction as
// proxy_iqa but with the median replaced by the mean absolute response so the
// gradient is defined; evaluation-time scoring keeps the median.
template <class T>
Var iqa_penalty_frame(Tape<T>& tp, Var frame_chw) {
  const Tensor<T>& fv = tp.val(frame_chw);
  require_dim(fv.ndim() == 3 && fv.shape[0] == 3, "iqa penalty: expects [3,H,W] frame");
  const int64_t H = fv.shape[1], W = fv.shape[2];
  require_input(H >= 3 && W >= 3, "iqa penalty: frame too small");
  Var x5 = reshape(tp, frame_chw, Shape{1, 3, 1, H, W});
  Tensor<T> lw({1, 3, 1, 1, 1});
  lw[0] = T(0.299);
  lw[1] = T(0.587);
  lw[2] = T(0.114);
  Var luma = conv3d(tp, x5, tp.leaf(std::move(lw)), kNoVar);
  Tensor<T> mask({1, 1, 1, 3, 3});
  const auto& m = noise_mask();
  for (int i = 0; i < 9; ++i) mask[i] = static_cast<T>(m[static_cast<size_t>(i)]);
  Var resp = conv3d(tp, luma, tp.leaf(std::move(mask)), kNoVar);  // valid, interior only
  Var ne = mul_scalar(tp, mean_all(tp, abs_op(tp, resp)), static_cast<T>(1.4826 / 6.0));
  Var arg = affine(tp, ne, static_cast<T>(-1.0 / 0.25), T(1));
  Var score01 = activation(tp, arg, ActKind::kLRelu, T(0));  // max(0, .)
  return affine(tp, score01, T(-100), T(100));               // 100 - score
}

inline std::vector<int64_t> default_iqa_indices(int64_t t_frames, int64_t n = 4) {
  std::set<int64_t> uniq;
  for (int64_t i = 0; i < n; ++i) uniq.insert(uniform_sample_index(i, t_frames, n));
  return std::vector<int64_t>(uniq.begin(), uniq.end());
}

// L_IQA over tape: sum of penalties over the selected enhanced frames
template <class T>
Var loss_iqa(Tape<T>& tp, const std::vector<Var>& frames_chw, const std::vector<int64_t>& indices) {
  require_config(!indices.empty(), "loss_iqa: empty frame index set");
  Var acc = kNoVar;
  for (int64_t idx : indices) {
    require_input(idx >= 0 && idx < static_cast<int64_t>(frames_chw.size()),
                  "loss_iqa: frame index out of range");
    Var p = iqa_penalty_frame(tp, frames_chw[idx]);
    acc = acc.valid() ? add(tp, acc, p) : p;
  }
  return acc;
}

// evaluation-time L_IQA with a pluggable scorer (defaults to the proxy)
template <class T>
using FrameScorer = std::function<double(const Tensor<T>&)>;  // frame [H,W,C] -> [0,100]

template <class T>
double loss_iqa_value(const VideoClip<T>& clip, const FrameScorer<T>& scorer,
                      const std::vector<int64_t>& indices) {
  require_config(!indices.empty(), "loss_iqa: empty frame index set");
  double acc = 0;
  for (int64_t idx : indices) {
    require_input(idx >= 0 && idx < clip.t(), "loss_iqa: frame index out of range");
    const double s = scorer(frame_hwc(clip, idx));
    require_input(s >= 0.0 && s <= 100.0, "loss_iqa: scorer must return values in [0,100]");
    acc += 100.0 - s;
  }
  return acc;
}

// L_total = L_pixel + a1 * L_identity + a2 * L_IQA (left-associated sum)
template <class T>
Var loss_total(Tape<T>& tp, Var pixel, Var identity, Var iqa, const LossWeights& w) {
  for (Var v : {pixel, identity, iqa})
    check_finite(tp.val(v), "loss_total component");
  Var out = add(tp, pixel, mul_scalar(tp, identity, static_cast<T>(w.alpha1)));
  return add(tp, out, mul_scalar(tp, iqa, static_cast<T>(w.alpha2)));
}

inline double loss_total_value(double pixel, double identity, double iqa, const LossWeights& w) {
  return pixel + w.alpha1 * identity + w.alpha2 * iqa;
}

// ---- VQA supervision -----------------------------------------------------
// MSE against MOS plus a soft-rank Spearman surrogate (1:1):
//   rank term = 1 - pearson(soft_rank(pred), average_ranks(mos))

template <class T>
Var pearson_to_const(Tape<T>& tp, Var x, const std::vector<double>& y) {
  const Tensor<T>& xv = tp.val(x);
  const int64_t n = xv.numel();
  require_input(static_cast<size_t>(n) == y.size() && n >= 2, "pearson: need matching length >= 2");
  double my = 0;
  for (double v : y) my += v;
  my /= static_cast<double>(n);
  Tensor<T> cy({n});
  double vy = 0;
  for (int64_t i = 0; i < n; ++i) {
    cy[i] = static_cast<T>(y[static_cast<size_t>(i)] - my);
    vy += (y[static_cast<size_t>(i)] - my) * (y[static_cast<size_t>(i)] - my);
  }
  vy /= static_cast<double>(n);
  require_input(vy > 0, "pearson: constant target");
  Var mean_x = mul_scalar(tp, sum_all(tp, x), T(1) / static_cast<T>(n));
  Var cx = sub_bscalar(tp, x, mean_x);
  Var cov = mul_scalar(tp, sum_all(tp, mul(tp, cx, tp.leaf(std::move(cy)))), T(1) / static_cast<T>(n));
  Var vx = add_scalar(tp, mul_scalar(tp, sum_all(tp, mul(tp, cx, cx)), T(1) / static_cast<T>(n)),
                      static_cast<T>(1e-12));
  Var denom = rsqrt_op(tp, mul_scalar(tp, vx, static_cast<T>(vy)));
  return mul(tp, cov, denom);
}

template <class T>
Var vqa_batch_loss(Tape<T>& tp, Var preds, const Tensor<double>& mos, double rank_tau = 0.25) {
  const Tensor<T>& pv = tp.val(preds);
  require_input(pv.ndim() == 1 && pv.numel() == mos.numel() && pv.numel() >= 2,
                "vqa_batch_loss: needs a prediction vector matching mos, length >= 2");
  if (!all_finite(pv)) throw NumericError("vqa_batch_loss: non-finite predictions");
  Tensor<T> target = mos.template cast<T>();
  Var mse = mse_to_const(tp, preds, std::move(target));
  std::vector<double> mos_v(mos.data.begin(), mos.data.end());
  Var sr = soft_rank(tp, preds, static_cast<T>(rank_tau));
  Var r = pearson_to_const(tp, sr, average_ranks(mos_v));
  Var rank_loss = affine(tp, r, T(-1), T(1));
  return add(tp, mse, rank_loss);
}

}  // namespace eyesim

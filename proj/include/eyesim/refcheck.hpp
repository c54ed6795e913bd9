#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "eyesim/ops.hpp"
#include "eyesim/rng.hpp"

// Naive reference implementations, deliberately written with different loop
// structure and summation order than the production kernels. They exist only
// to cross-check results and must stay independent of eyesim/ops.hpp math.
namespace eyesim::refcheck {

// six-loop scalar convolution, summing in (kt,kh,kw,cin) order
template <class T>
Tensor<T> conv3d_ref(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, Stride3 st,
                     Pad3 pad, PadMode mode) {
  const int64_t B = x.shape[0], Ci = x.shape[1], Ti = x.shape[2], H = x.shape[3], W = x.shape[4];
  const int64_t Co = w.shape[0], kt = w.shape[2], kh = w.shape[3], kw = w.shape[4];
  const int64_t To = (Ti + 2 * pad.t - kt) / st.t + 1;
  const int64_t Ho = (H + 2 * pad.h - kh) / st.h + 1;
  const int64_t Wo = (W + 2 * pad.w - kw) / st.w + 1;
  Tensor<T> out({B, Co, To, Ho, Wo});
  auto sample = [&](int64_t b, int64_t c, int64_t t, int64_t y, int64_t xx) -> T {
    if (mode == PadMode::kReplicate) {
      t = std::clamp<int64_t>(t, 0, Ti - 1);
      y = std::clamp<int64_t>(y, 0, H - 1);
      xx = std::clamp<int64_t>(xx, 0, W - 1);
    } else if (t < 0 || t >= Ti || y < 0 || y >= H || xx < 0 || xx >= W) {
      return T(0);
    }
    return x[idx5(x.shape, b, c, t, y, xx)];
  };
  for (int64_t b = 0; b < B; ++b)
    for (int64_t oc = 0; oc < Co; ++oc)
      for (int64_t to = 0; to < To; ++to)
        for (int64_t yo = 0; yo < Ho; ++yo)
          for (int64_t xo = 0; xo < Wo; ++xo) {
            T acc = bias ? (*bias)[oc] : T(0);
            for (int64_t dt = 0; dt < kt; ++dt)
              for (int64_t dy = 0; dy < kh; ++dy)
                for (int64_t dx = 0; dx < kw; ++dx)
                  for (int64_t ic = 0; ic < Ci; ++ic)
                    acc += w[idx5(w.shape, oc, ic, dt, dy, dx)] *
                           sample(b, ic, to * st.t + dt - pad.t, yo * st.h + dy - pad.h,
                                  xo * st.w + dx - pad.w);
            out[idx5(out.shape, b, oc, to, yo, xo)] = acc;
          }
  return out;
}

template <class T>
Tensor<T> global_avg_pool_ref(const Tensor<T>& x) {
  const int64_t B = x.shape[0], C = x.shape[1];
  const int64_t n = x.shape[2] * x.shape[3] * x.shape[4];
  Tensor<T> out({B, C, 1, 1, 1});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      double acc = 0;
      for (int64_t t = 0; t < x.shape[2]; ++t)
        for (int64_t y = 0; y < x.shape[3]; ++y)
          for (int64_t xx = 0; xx < x.shape[4]; ++xx)
            acc += static_cast<double>(x[idx5(x.shape, b, c, t, y, xx)]);
      out[b * C + c] = static_cast<T>(acc / static_cast<double>(n));
    }
  return out;
}

// per-pixel interpolation formula, align_corners=false
template <class T>
Tensor<T> resize2d_ref(const Tensor<T>& f, int64_t oh, int64_t ow) {
  const int64_t H = f.shape[0], W = f.shape[1], C = f.shape[2];
  Tensor<T> out({oh, ow, C});
  for (int64_t y = 0; y < oh; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      double sy = (static_cast<double>(y) + 0.5) * static_cast<double>(H) / static_cast<double>(oh) - 0.5;
      double sx = (static_cast<double>(x) + 0.5) * static_cast<double>(W) / static_cast<double>(ow) - 0.5;
      sy = std::clamp(sy, 0.0, static_cast<double>(H - 1));
      sx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
      int64_t y0 = static_cast<int64_t>(std::floor(sy)), x0 = static_cast<int64_t>(std::floor(sx));
      int64_t y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
      double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
      for (int64_t c = 0; c < C; ++c) {
        double v = (1 - fy) * (1 - fx) * static_cast<double>(f[(y0 * W + x0) * C + c]) +
                   (1 - fy) * fx * static_cast<double>(f[(y0 * W + x1) * C + c]) +
                   fy * (1 - fx) * static_cast<double>(f[(y1 * W + x0) * C + c]) +
                   fy * fx * static_cast<double>(f[(y1 * W + x1) * C + c]);
        out[(y * ow + x) * C + c] = static_cast<T>(v);
      }
    }
  return out;
}

template <class T>
Tensor<T> warp_ref(const Tensor<T>& f, const Tensor<T>& flow) {
  const int64_t H = f.shape[0], W = f.shape[1], C = f.shape[2];
  Tensor<T> out({H, W, C});
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      double sx = static_cast<double>(x) + static_cast<double>(flow[(y * W + x) * 2 + 0]);
      double sy = static_cast<double>(y) + static_cast<double>(flow[(y * W + x) * 2 + 1]);
      sx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(H - 1));
      int64_t y0 = static_cast<int64_t>(std::floor(sy)), x0 = static_cast<int64_t>(std::floor(sx));
      int64_t y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
      double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
      for (int64_t c = 0; c < C; ++c) {
        double v = (1 - fy) * (1 - fx) * static_cast<double>(f[(y0 * W + x0) * C + c]) +
                   (1 - fy) * fx * static_cast<double>(f[(y0 * W + x1) * C + c]) +
                   fy * (1 - fx) * static_cast<double>(f[(y1 * W + x0) * C + c]) +
                   fy * fx * static_cast<double>(f[(y1 * W + x1) * C + c]);
        out[(y * W + x) * C + c] = static_cast<T>(v);
      }
    }
  return out;
}

template <class T>
double charbonnier_ref(const Tensor<T>& x, const Tensor<T>& y, double eps) {
  double acc = 0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    acc += std::sqrt(d * d + eps * eps);
  }
  return acc / static_cast<double>(x.numel());
}

// average ranks (ties share the mean of the positions they occupy)
inline std::vector<double> ranks_ref(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

inline double pearson_ref(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double srocc_ref(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson_ref(ranks_ref(x), ranks_ref(y));
}

}  // namespace eyesim::refcheck

#include "eyesim/eval.hpp"

namespace eyesim {

// Fixed random suite comparing the production kernels against the scalar-loop
// references above: float64 ops within 1e-12, metric ranks exactly.
struct SelftestResult {
  int cases = 0;        // random input cases
  int comparisons = 0;  // individual oracle comparisons
  int failures = 0;
  double max_err = 0.0;
  std::vector<std::string> failed_cases;

  void record(const std::string& name, double err, double tol) {
    comparisons += 1;
    max_err = std::max(max_err, err);
    if (!(err <= tol)) {
      failures += 1;
      failed_cases.push_back(name + " err=" + std::to_string(err));
    }
  }
  bool ok() const { return failures == 0; }
};

inline SelftestResult run_selftest(uint64_t seed = 2026) {
  SelftestResult r;
  auto rnd = [&](Shape s, uint64_t k, double lo, double hi) {
    RngStream rng(derive_key(seed, k));
    return random_uniform<double>(std::move(s), rng, lo, hi);
  };
  int id = 0;
  // 25 convolution cases across strides, pads and modes
  for (int c = 0; c < 25; ++c, ++id, ++r.cases) {
    RngStream rng(derive_key(seed, static_cast<uint64_t>(id)));
    const int64_t kt = 1 + c % 3, kh = 1 + c % 2 + 1, kw = 3;
    Tensor<double> x = random_uniform<double>({1, 2, 3, 6, 6}, rng, -1, 1);
    Tensor<double> w = random_uniform<double>({2, 2, kt, kh, kw}, rng, -1, 1);
    Tensor<double> b = random_uniform<double>({2}, rng, -1, 1);
    Stride3 st{1, 1 + c % 2, 1 + (c / 2) % 2};
    Pad3 pad{c % 2, 1, 1};
    PadMode mode = c % 3 == 0 ? PadMode::kReplicate : PadMode::kZero;
    Tape<double> tp;
    Tensor<double> got =
        tp.val(conv3d(tp, tp.leaf(x), tp.leaf(w), tp.leaf(b), st, pad, mode));
    Tensor<double> ref = refcheck::conv3d_ref(x, w, &b, st, pad, mode);
    r.record("conv3d#" + std::to_string(c), max_abs_diff(got, ref), 1e-12);
  }
  // 15 pooling cases
  for (int c = 0; c < 15; ++c, ++id, ++r.cases) {
    Tensor<double> x = rnd({2, 3, 1 + c % 4, 4, 5}, static_cast<uint64_t>(id), -2, 2);
    Tape<double> tp;
    Tensor<double> got = tp.val(global_avg_pool(tp, tp.leaf(x)));
    r.record("pool#" + std::to_string(c), max_abs_diff(got, refcheck::global_avg_pool_ref(x)), 1e-12);
  }
  // 20 resize cases
  for (int c = 0; c < 20; ++c, ++id, ++r.cases) {
    Tensor<double> f = rnd({3 + c % 5, 4 + c % 3, 3}, static_cast<uint64_t>(id), 0, 1);
    const int64_t oh = 1 + (c * 7) % 9, ow = 1 + (c * 5) % 9;
    r.record("resize#" + std::to_string(c),
             max_abs_diff(bilinear_resize2d(f, oh, ow), refcheck::resize2d_ref(f, oh, ow)), 1e-12);
  }
  // 20 warp cases
  for (int c = 0; c < 20; ++c, ++id, ++r.cases) {
    Tensor<double> f = rnd({6, 6, 2}, static_cast<uint64_t>(id), 0, 1);
    RngStream rng(derive_key(seed, static_cast<uint64_t>(id) + 7000));
    Tensor<double> flow({6, 6, 2});
    fill_uniform(flow, rng, -2.5, 2.5);
    r.record("warp#" + std::to_string(c),
             max_abs_diff(warp_bilinear(f, flow), refcheck::warp_ref(f, flow)), 1e-12);
  }
  // 10 charbonnier cases
  for (int c = 0; c < 10; ++c, ++id, ++r.cases) {
    Tensor<double> x = rnd({3, 5}, static_cast<uint64_t>(id), 0, 1);
    Tensor<double> y = rnd({3, 5}, static_cast<uint64_t>(id) + 9000, 0, 1);
    Tape<double> tp;
    double got = tp.val(charbonnier_op(tp, tp.leaf(x), tp.leaf(y), 1e-3))[0];
    r.record("charbonnier#" + std::to_string(c), std::abs(got - refcheck::charbonnier_ref(x, y, 1e-3)),
             1e-12);
  }
  // 10 metric cases: exact rank agreement plus value checks
  for (int c = 0; c < 10; ++c, ++id, ++r.cases) {
    RngStream rng(derive_key(seed, static_cast<uint64_t>(id)));
    const size_t n = 3 + static_cast<size_t>(c) % 6;
    std::vector<double> x(n), y(n);
    for (size_t i = 0; i < n; ++i) {
      x[i] = rng.uniform(0.0, 1.0);
      y[i] = rng.uniform(0.0, 1.0);
    }
    if (c % 3 == 0) x[0] = x[n - 1];  // force a tie
    bool ranks_match = average_ranks(x) == refcheck::ranks_ref(x);
    r.record("ranks#" + std::to_string(c), ranks_match ? 0.0 : 1.0, 0.0);
    r.record("srocc#" + std::to_string(c), std::abs(srocc(x, y) - refcheck::srocc_ref(x, y)), 1e-12);
    r.record("plcc#" + std::to_string(c), std::abs(plcc(x, y) - refcheck::pearson_ref(x, y)), 1e-12);
  }
  return r;
}

}  // namespace eyesim

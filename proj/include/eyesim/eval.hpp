#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "eyesim/common.hpp"

namespace eyesim {

// ties share the mean of the positions they occupy (1-based)
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i + j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  require_input(x.size() == y.size(), "correlation: length mismatch");
  require_input(x.size() >= 2, "correlation: need at least 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    require_input(std::isfinite(x[i]) && std::isfinite(y[i]), "correlation: non-finite value");
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw NumericError("correlation undefined: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

// Spearman: Pearson correlation of average-ranked values.
inline double srocc(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(average_ranks(x), average_ranks(y));
}

// deterministic 4-parameter logistic fit (gradient descent on MSE), used only
// behind the plcc logistic flag
inline std::vector<double> fit_logistic4(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double ymin = y[0], ymax = y[0], xmean = 0, x2 = 0;
  for (size_t i = 0; i < n; ++i) {
    ymin = std::min(ymin, y[i]);
    ymax = std::max(ymax, y[i]);
    xmean += x[i];
  }
  xmean /= static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) x2 += (x[i] - xmean) * (x[i] - xmean);
  double xstd = std::sqrt(x2 / static_cast<double>(n)) + 1e-9;
  double b1 = ymin, b2 = ymax, b3 = xmean, b4 = xstd;
  const double lr = 0.05;
  for (int it = 0; it < 2000; ++it) {
    double g1 = 0, g2 = 0, g3 = 0, g4 = 0;
    for (size_t i = 0; i < n; ++i) {
      const double z = (x[i] - b3) / b4;
      const double s = 1.0 / (1.0 + std::exp(-z));
      const double f = b1 + (b2 - b1) * s;
      const double e = 2.0 * (f - y[i]) / static_cast<double>(n);
      const double ds = s * (1.0 - s);
      g1 += e * (1.0 - s);
      g2 += e * s;
      g3 += e * (b2 - b1) * ds * (-1.0 / b4);
      g4 += e * (b2 - b1) * ds * (-z / b4);
    }
    b1 -= lr * g1;
    b2 -= lr * g2;
    b3 -= lr * g3 * xstd * xstd;
    b4 -= lr * g4 * xstd;
    if (b4 < 1e-6) b4 = 1e-6;
  }
  return {b1, b2, b3, b4};
}

inline double plcc(const std::vector<double>& x, const std::vector<double>& y,
                   bool logistic_fit = false) {
  if (!logistic_fit) return pearson(x, y);
  auto b = fit_logistic4(x, y);
  std::vector<double> fx(x.size());
  for (size_t i = 0; i < x.size(); ++i)
    fx[i] = b[0] + (b[1] - b[0]) / (1.0 + std::exp(-(x[i] - b[2]) / b[3]));
  return pearson(fx, y);
}

// ---- ranking pairs -----------------------------------------------------------

struct RankPair {
  std::string clip_id_a;
  std::string clip_id_b;
  int gt_order = 0;  // +1: a better, -1: b better
  bool homogeneous = false;
};

struct RankingAccuracy {
  double all = 0, homogeneous = 0, non_homogeneous = 0;
  int64_t n_homogeneous = 0, n_non_homogeneous = 0;
};

// Fraction of pairs whose predicted order matches gt_order; exact score ties
// earn half credit. Reported per stratum and overall.
inline RankingAccuracy ranking_accuracy(const std::vector<RankPair>& pairs,
                                        const std::map<std::string, double>& scores) {
  require_input(!pairs.empty(), "ranking_accuracy: no pairs");
  double hits_h = 0, hits_n = 0;
  int64_t n_h = 0, n_n = 0;
  for (const RankPair& p : pairs) {
    require_input(p.clip_id_a != p.clip_id_b, "ranking_accuracy: pair references one clip twice");
    auto ia = scores.find(p.clip_id_a);
    auto ib = scores.find(p.clip_id_b);
    require_input(ia != scores.end() && ib != scores.end(),
                  "ranking_accuracy: missing score for " +
                      (ia == scores.end() ? p.clip_id_a : p.clip_id_b));
    double credit;
    if (ia->second == ib->second) {
      credit = 0.5;
    } else {
      const int pred = ia->second > ib->second ? 1 : -1;
      credit = pred == p.gt_order ? 1.0 : 0.0;
    }
    if (p.homogeneous) {
      hits_h += credit;
      n_h += 1;
    } else {
      hits_n += credit;
      n_n += 1;
    }
  }
  RankingAccuracy out;
  out.n_homogeneous = n_h;
  out.n_non_homogeneous = n_n;
  out.homogeneous = n_h ? hits_h / static_cast<double>(n_h) : 0.0;
  out.non_homogeneous = n_n ? hits_n / static_cast<double>(n_n) : 0.0;
  out.all = (hits_h + hits_n) / static_cast<double>(n_h + n_n);
  return out;
}

}  // namespace eyesim

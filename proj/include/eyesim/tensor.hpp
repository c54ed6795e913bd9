#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "eyesim/common.hpp"
#include "eyesim/rng.hpp"

namespace eyesim {

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor. Values are validated as finite at op boundaries,
// not on every intermediate.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(numel_of(shape), T(0)) {
    for (int64_t d : shape) require_dim(d > 0, "tensor dims must be positive, got " + shape_str(shape));
  }
  Tensor(Shape s, T fill) : Tensor(std::move(s)) { std::fill(data.begin(), data.end(), fill); }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, T v) { return Tensor(std::move(s), v); }
  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(size_t i) const { return shape[i]; }
  size_t ndim() const { return shape.size(); }
  bool empty() const { return data.empty(); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <class T>
inline bool all_finite(const Tensor<T>& t) {
  for (const T& v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <class T>
inline void check_finite(const Tensor<T>& t, const char* context) {
  if (!all_finite(t)) throw NumericError(std::string(context) + ": non-finite values");
}

template <class T>
inline void fill_uniform(Tensor<T>& t, RngStream& rng, double lo, double hi) {
  for (T& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
}

template <class T>
inline void fill_normal(Tensor<T>& t, RngStream& rng, double mean, double stddev) {
  for (T& v : t.data) v = static_cast<T>(rng.normal(mean, stddev));
}

template <class T>
inline Tensor<T> random_uniform(Shape s, RngStream& rng, double lo, double hi) {
  Tensor<T> t(std::move(s));
  fill_uniform(t, rng, lo, hi);
  return t;
}

template <class T>
inline double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_dim(a.same_shape(b), "max_abs_diff: shape mismatch");
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

// 5D index helpers (B,C,T,H,W ordering used by feature maps).
inline int64_t idx5(const Shape& s, int64_t a, int64_t b, int64_t c, int64_t d, int64_t e) {
  return (((a * s[1] + b) * s[2] + c) * s[3] + d) * s[4] + e;
}
inline int64_t idx4(const Shape& s, int64_t a, int64_t b, int64_t c, int64_t d) {
  return ((a * s[1] + b) * s[2] + c) * s[3] + d;
}
inline int64_t idx3(const Shape& s, int64_t a, int64_t b, int64_t c) {
  return (a * s[1] + b) * s[2] + c;
}

}  // namespace eyesim

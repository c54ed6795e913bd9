#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "eyesim/tape.hpp"

namespace eyesim {

enum class PadMode { kZero, kReplicate };

struct Stride3 {
  int64_t t = 1, h = 1, w = 1;
};
struct Pad3 {
  int64_t t = 0, h = 0, w = 0;
};

enum class ActKind { kTanh, kSigmoid, kGelu, kLRelu, kIdentity };

inline ActKind act_from_name(const std::string& s) {
  if (s == "tanh") return ActKind::kTanh;
  if (s == "sigmoid") return ActKind::kSigmoid;
  if (s == "gelu") return ActKind::kGelu;
  if (s == "lrelu") return ActKind::kLRelu;
  if (s == "identity") return ActKind::kIdentity;
  throw ConfigError("unknown activation kind: " + s);
}
inline const char* act_name(ActKind k) {
  switch (k) {
    case ActKind::kTanh: return "tanh";
    case ActKind::kSigmoid: return "sigmoid";
    case ActKind::kGelu: return "gelu";
    case ActKind::kLRelu: return "lrelu";
    case ActKind::kIdentity: return "identity";
  }
  return "?";
}

namespace detail {

// ---- padding ---------------------------------------------------------

template <class T>
Tensor<T> pad5(const Tensor<T>& x, Pad3 p, PadMode mode) {
  if (p.t == 0 && p.h == 0 && p.w == 0) return x;
  const Shape& s = x.shape;  // [B,C,T,H,W]
  Tensor<T> out({s[0], s[1], s[2] + 2 * p.t, s[3] + 2 * p.h, s[4] + 2 * p.w});
  const int64_t B = s[0], C = s[1], Ti = s[2], H = s[3], W = s[4];
  const int64_t Tp = Ti + 2 * p.t, Hp = H + 2 * p.h, Wp = W + 2 * p.w;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t t = 0; t < Tp; ++t) {
        int64_t ts = t - p.t;
        bool t_in = ts >= 0 && ts < Ti;
        int64_t tc = std::clamp<int64_t>(ts, 0, Ti - 1);
        for (int64_t y = 0; y < Hp; ++y) {
          int64_t ys = y - p.h;
          bool y_in = ys >= 0 && ys < H;
          int64_t yc = std::clamp<int64_t>(ys, 0, H - 1);
          if (mode == PadMode::kZero && (!t_in || !y_in)) continue;  // stays zero
          T* dst = out.ptr() + idx5(out.shape, b, c, t, y, 0);
          const T* srow = x.ptr() + idx5(s, b, c, mode == PadMode::kZero ? ts : tc,
                                         mode == PadMode::kZero ? ys : yc, 0);
          if (mode == PadMode::kZero) {
            for (int64_t xw = p.w; xw < p.w + W; ++xw) dst[xw] = srow[xw - p.w];
          } else {
            for (int64_t xw = 0; xw < Wp; ++xw)
              dst[xw] = srow[std::clamp<int64_t>(xw - p.w, 0, W - 1)];
          }
        }
      }
  return out;
}

// Fold gradient w.r.t. the padded buffer back onto the source extent.
template <class T>
Tensor<T> unpad5_fold(const Tensor<T>& gp, const Shape& orig, Pad3 p, PadMode mode) {
  if (p.t == 0 && p.h == 0 && p.w == 0) return gp;
  Tensor<T> out(orig);
  const int64_t B = orig[0], C = orig[1], Ti = orig[2], H = orig[3], W = orig[4];
  const int64_t Tp = Ti + 2 * p.t, Hp = H + 2 * p.h, Wp = W + 2 * p.w;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t t = 0; t < Tp; ++t) {
        int64_t ts = t - p.t;
        if (mode == PadMode::kZero && (ts < 0 || ts >= Ti)) continue;
        int64_t tc = std::clamp<int64_t>(ts, 0, Ti - 1);
        for (int64_t y = 0; y < Hp; ++y) {
          int64_t ys = y - p.h;
          if (mode == PadMode::kZero && (ys < 0 || ys >= H)) continue;
          int64_t yc = std::clamp<int64_t>(ys, 0, H - 1);
          const T* src = gp.ptr() + (((b * C + c) * Tp + t) * Hp + y) * Wp;
          T* drow = out.ptr() + idx5(orig, b, c, tc, yc, 0);
          if (mode == PadMode::kZero) {
            for (int64_t xw = p.w; xw < p.w + W; ++xw) drow[xw - p.w] += src[xw];
          } else {
            for (int64_t xw = 0; xw < Wp; ++xw)
              drow[std::clamp<int64_t>(xw - p.w, 0, W - 1)] += src[xw];
          }
        }
      }
  return out;
}

// ---- conv3d kernels (operate on the already padded input) -------------

inline Shape conv_out_shape(const Shape& xp, const Shape& w, Stride3 st) {
  require_dim(xp.size() == 5 && w.size() == 5, "conv3d: expects 5-D input and kernel");
  require_dim(xp[1] == w[1], "conv3d: input channel count mismatch");
  require_dim(w[2] <= xp[2] && w[3] <= xp[3] && w[4] <= xp[4],
              "conv3d: kernel larger than padded input");
  return Shape{xp[0], w[0], (xp[2] - w[2]) / st.t + 1, (xp[3] - w[3]) / st.h + 1,
               (xp[4] - w[4]) / st.w + 1};
}

template <class T>
Tensor<T> conv3d_fwd(const Tensor<T>& xp, const Tensor<T>& w, const Tensor<T>* bias, Stride3 st) {
  Shape os = conv_out_shape(xp.shape, w.shape, st);
  Tensor<T> out(os);
  const int64_t B = os[0], Co = os[1], To = os[2], Ho = os[3], Wo = os[4];
  const int64_t Ci = xp.shape[1], Tp = xp.shape[2], Hp = xp.shape[3], Wp = xp.shape[4];
  const int64_t kt = w.shape[2], kh = w.shape[3], kw = w.shape[4];
  for (int64_t b = 0; b < B; ++b)
    for (int64_t oc = 0; oc < Co; ++oc) {
      T* oplane = out.ptr() + ((b * Co + oc) * To) * Ho * Wo;
      if (bias) std::fill(oplane, oplane + To * Ho * Wo, (*bias)[oc]);
      for (int64_t ic = 0; ic < Ci; ++ic) {
        const T* iplane = xp.ptr() + ((b * Ci + ic) * Tp) * Hp * Wp;
        const T* wk = w.ptr() + ((oc * Ci + ic) * kt) * kh * kw;
        for (int64_t dt = 0; dt < kt; ++dt)
          for (int64_t dy = 0; dy < kh; ++dy)
            for (int64_t dx = 0; dx < kw; ++dx) {
              const T wv = wk[(dt * kh + dy) * kw + dx];
              for (int64_t to = 0; to < To; ++to) {
                const T* sframe = iplane + (to * st.t + dt) * Hp * Wp;
                T* dframe = oplane + to * Ho * Wo;
                for (int64_t yo = 0; yo < Ho; ++yo) {
                  const T* srow = sframe + (yo * st.h + dy) * Wp + dx;
                  T* drow = dframe + yo * Wo;
                  if (st.w == 1) {
                    for (int64_t xo = 0; xo < Wo; ++xo) drow[xo] += wv * srow[xo];
                  } else {
                    for (int64_t xo = 0; xo < Wo; ++xo) drow[xo] += wv * srow[xo * st.w];
                  }
                }
              }
            }
      }
    }
  return out;
}

template <class T>
void conv3d_bwd(const Tensor<T>& xp, const Tensor<T>& w, const Tensor<T>& gout, Stride3 st,
                Tensor<T>* gxp, Tensor<T>* gw, Tensor<T>* gb) {
  const Shape& os = gout.shape;
  const int64_t B = os[0], Co = os[1], To = os[2], Ho = os[3], Wo = os[4];
  const int64_t Ci = xp.shape[1], Tp = xp.shape[2], Hp = xp.shape[3], Wp = xp.shape[4];
  const int64_t kt = w.shape[2], kh = w.shape[3], kw = w.shape[4];
  if (gb) {
    for (int64_t b = 0; b < B; ++b)
      for (int64_t oc = 0; oc < Co; ++oc) {
        const T* gplane = gout.ptr() + ((b * Co + oc) * To) * Ho * Wo;
        T acc = 0;
        for (int64_t i = 0; i < To * Ho * Wo; ++i) acc += gplane[i];
        (*gb)[oc] += acc;
      }
  }
  if (!gxp && !gw) return;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t oc = 0; oc < Co; ++oc) {
      const T* gplane = gout.ptr() + ((b * Co + oc) * To) * Ho * Wo;
      for (int64_t ic = 0; ic < Ci; ++ic) {
        const T* iplane = xp.ptr() + ((b * Ci + ic) * Tp) * Hp * Wp;
        T* gip = gxp ? gxp->ptr() + ((b * Ci + ic) * Tp) * Hp * Wp : nullptr;
        const T* wk = w.ptr() + ((oc * Ci + ic) * kt) * kh * kw;
        T* gwk = gw ? gw->ptr() + ((oc * Ci + ic) * kt) * kh * kw : nullptr;
        for (int64_t dt = 0; dt < kt; ++dt)
          for (int64_t dy = 0; dy < kh; ++dy)
            for (int64_t dx = 0; dx < kw; ++dx) {
              const T wv = wk[(dt * kh + dy) * kw + dx];
              T wacc = 0;
              for (int64_t to = 0; to < To; ++to) {
                const int64_t tsrc = to * st.t + dt;
                for (int64_t yo = 0; yo < Ho; ++yo) {
                  const T* grow = gplane + (to * Ho + yo) * Wo;
                  const int64_t base = tsrc * Hp * Wp + (yo * st.h + dy) * Wp + dx;
                  if (gip) {
                    T* girow = gip + base;
                    if (st.w == 1) {
                      for (int64_t xo = 0; xo < Wo; ++xo) girow[xo] += wv * grow[xo];
                    } else {
                      for (int64_t xo = 0; xo < Wo; ++xo) girow[xo * st.w] += wv * grow[xo];
                    }
                  }
                  if (gwk) {
                    const T* srow = iplane + base;
                    if (st.w == 1) {
                      for (int64_t xo = 0; xo < Wo; ++xo) wacc += grow[xo] * srow[xo];
                    } else {
                      for (int64_t xo = 0; xo < Wo; ++xo) wacc += grow[xo] * srow[xo * st.w];
                    }
                  }
                }
              }
              if (gwk) gwk[(dt * kh + dy) * kw + dx] += wacc;
            }
      }
    }
}

struct BilinearTap {
  int64_t i0, i1;
  double f;  // fraction toward i1
  bool clamped;
};

inline BilinearTap bilinear_tap(double pos, int64_t n) {
  BilinearTap t;
  t.clamped = pos < 0.0 || pos > static_cast<double>(n - 1);
  double p = std::clamp(pos, 0.0, static_cast<double>(n - 1));
  double fl = std::floor(p);
  t.i0 = static_cast<int64_t>(fl);
  t.i1 = std::min<int64_t>(t.i0 + 1, n - 1);
  t.f = p - fl;
  return t;
}

}  // namespace detail

// ---- activation scalar math ----------------------------------------------

template <class T>
inline T act_fwd(T x, ActKind k, T slope) {
  switch (k) {
    case ActKind::kTanh: return std::tanh(x);
    case ActKind::kSigmoid: return T(1) / (T(1) + std::exp(-x));
    case ActKind::kGelu: {
      // exact erf form: x * Phi(x)
      return x * (T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475244))));
    }
    case ActKind::kLRelu: return x > T(0) ? x : slope * x;
    case ActKind::kIdentity: return x;
  }
  return x;
}

template <class T>
inline T act_grad(T x, T fx, ActKind k, T slope) {
  switch (k) {
    case ActKind::kTanh: return T(1) - fx * fx;
    case ActKind::kSigmoid: return fx * (T(1) - fx);
    case ActKind::kGelu: {
      T phi = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475244)));
      T pdf = T(0.3989422804014326779) * std::exp(T(-0.5) * x * x);
      return phi + x * pdf;
    }
    case ActKind::kLRelu: return x > T(0) ? T(1) : slope;
    case ActKind::kIdentity: return T(1);
  }
  return T(1);
}

// ---- tape ops --------------------------------------------------------------

// Cross-correlation (no kernel flip). x: [B,Cin,T,H,W], w: [Cout,Cin,kt,kh,kw],
// bias: [Cout] or kNoVar. Gradients w.r.t. input, kernel, bias.
template <class T>
Var conv3d(Tape<T>& tp, Var x, Var w, Var b, Stride3 st = {}, Pad3 pad = {},
           PadMode mode = PadMode::kZero) {
  const Tensor<T>& xv = tp.val(x);
  const Tensor<T>& wv = tp.val(w);
  check_finite(xv, "conv3d input");
  check_finite(wv, "conv3d kernel");
  require_dim(!b.valid() || (tp.val(b).ndim() == 1 && tp.val(b).dim(0) == wv.shape[0]),
              "conv3d: bias shape mismatch");
  Tensor<T> xp = detail::pad5(xv, pad, mode);
  const Tensor<T>* bias = b.valid() ? &tp.val(b) : nullptr;
  Tensor<T> out = detail::conv3d_fwd(xp, wv, bias, st);
  bool rg = tp.needs_grad(x) || tp.needs_grad(w) || (b.valid() && tp.needs_grad(b));
  return tp.push(std::move(out), rg, [x, w, b, st, pad, mode](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv2 = t.val(x);
    const Tensor<T>& wv2 = t.val(w);
    Tensor<T> xp2 = detail::pad5(xv2, pad, mode);
    Tensor<T> gxp, gw;
    Tensor<T>* pgx = nullptr;
    Tensor<T>* pgw = nullptr;
    Tensor<T>* pgb = nullptr;
    if (t.needs_grad(x)) {
      gxp = Tensor<T>::zeros(xp2.shape);
      pgx = &gxp;
    }
    if (t.needs_grad(w)) {
      gw = Tensor<T>::zeros(wv2.shape);
      pgw = &gw;
    }
    if (b.valid() && t.needs_grad(b)) pgb = &t.grad_buf(b);
    detail::conv3d_bwd(xp2, wv2, g, st, pgx, pgw, pgb);
    if (pgx) {
      Tensor<T> gx = detail::unpad5_fold(gxp, xv2.shape, pad, mode);
      t.accum(x, gx);
    }
    if (pgw) t.accum(w, gw);
  });
}

// 2-D convenience over [B,C,H,W] tensors, expressed as conv3d with kt=1.
template <class T>
Var conv2d(Tape<T>& tp, Var x, Var w, Var b, int64_t stride = 1, int64_t pad = 0,
           PadMode mode = PadMode::kZero) {
  const Tensor<T>& xv = tp.val(x);
  require_dim(xv.ndim() == 4, "conv2d: expects [B,C,H,W]");
  Var x5 = reshape(tp, x, Shape{xv.shape[0], xv.shape[1], 1, xv.shape[2], xv.shape[3]});
  const Tensor<T>& wv = tp.val(w);
  require_dim(wv.ndim() == 4, "conv2d: expects [Cout,Cin,kh,kw] kernel");
  Var w5 = reshape(tp, w, Shape{wv.shape[0], wv.shape[1], 1, wv.shape[2], wv.shape[3]});
  Var o5 = conv3d(tp, x5, w5, b, Stride3{1, stride, stride}, Pad3{0, pad, pad}, mode);
  const Shape& os = tp.val(o5).shape;
  return reshape(tp, o5, Shape{os[0], os[1], os[3], os[4]});
}

// mean over T,H,W per (batch, channel); output [B,C,1,1,1]
template <class T>
Var global_avg_pool(Tape<T>& tp, Var x) {
  const Tensor<T>& xv = tp.val(x);
  require_dim(xv.ndim() == 5, "global_avg_pool: expects [B,C,T,H,W]");
  const Shape s = xv.shape;
  require_dim(s[2] >= 1 && s[3] >= 1 && s[4] >= 1, "global_avg_pool: empty extent");
  Tensor<T> out({s[0], s[1], 1, 1, 1});
  const int64_t n = s[2] * s[3] * s[4];
  for (int64_t bc = 0; bc < s[0] * s[1]; ++bc) {
    const T* p = xv.ptr() + bc * n;
    T acc = 0;
    for (int64_t i = 0; i < n; ++i) acc += p[i];
    out[bc] = acc / static_cast<T>(n);
  }
  return tp.push(std::move(out), tp.needs_grad(x), [x, s, n](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buf(x);
    for (int64_t bc = 0; bc < s[0] * s[1]; ++bc) {
      const T gv = g[bc] / static_cast<T>(n);
      T* p = gx.ptr() + bc * n;
      for (int64_t i = 0; i < n; ++i) p[i] += gv;
    }
  });
}

template <class T>
Var reshape(Tape<T>& tp, Var x, Shape s) {
  const Tensor<T>& xv = tp.val(x);
  require_dim(numel_of(s) == xv.numel(), "reshape: numel mismatch");
  Tensor<T> out;
  out.shape = std::move(s);
  out.data = xv.data;
  return tp.push(std::move(out), tp.needs_grad(x), [x](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buf(x);
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g[i];
  });
}

template <class T>
Var activation(Tape<T>& tp, Var x, ActKind k, T slope = T(0.1)) {
  const Tensor<T>& xv = tp.val(x);
  Tensor<T> out(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) out[i] = act_fwd(xv[i], k, slope);
  return tp.push(std::move(out), tp.needs_grad(x), [x, k, slope](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv2 = t.val(x);
    Tensor<T>& gx = t.grad_buf(x);
    for (int64_t i = 0; i < xv2.numel(); ++i)
      gx[i] += g[i] * act_grad(xv2[i], act_fwd(xv2[i], k, slope), k, slope);
  });
}

template <class T>
Var add(Tape<T>& tp, Var a, Var b) {
  const Tensor<T>& av = tp.val(a);
  const Tensor<T>& bv = tp.val(b);
  require_dim(av.same_shape(bv), "add: shape mismatch");
  Tensor<T> out(av.shape);
  for (int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] + bv[i];
  bool rg = tp.needs_grad(a) || tp.needs_grad(b);
  return tp.push(std::move(out), rg, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accum(a, g);
    t.accum(b, g);
  });
}

template <class T>
Var sub(Tape<T>& tp, Var a, Var b) {
  const Tensor<T>& av = tp.val(a);
  const Tensor<T>& bv = tp.val(b);
  require_dim(av.same_shape(bv), "sub: shape mismatch");
  Tensor<T> out(av.shape);
  for (int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] - bv[i];
  bool rg = tp.needs_grad(a) || tp.needs_grad(b);
  return tp.push(std::move(out), rg, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accum(a, g);
    if (t.needs_grad(b)) {
      Tensor<T>& gb = t.grad_buf(b);
      for (int64_t i = 0; i < gb.numel(); ++i) gb[i] -= g[i];
    }
  });
}

template <class T>
Var mul(Tape<T>& tp, Var a, Var b) {
  const Tensor<T>& av = tp.val(a);
  const Tensor<T>& bv = tp.val(b);
  require_dim(av.same_shape(bv), "mul: shape mismatch");
  Tensor<T> out(av.shape);
  for (int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] * bv[i];
  bool rg = tp.needs_grad(a) || tp.needs_grad(b);
  return tp.push(std::move(out), rg, [a, b](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& av2 = t.val(a);
    const Tensor<T>& bv2 = t.val(b);
    if (t.needs_grad(a)) {
      Tensor<T>& ga = t.grad_buf(a);
      for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (t.needs_grad(b)) {
      Tensor<T>& gb = t.grad_buf(b);
      for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += g[i] * av2[i];
    }
  });
}

// out = a*x + c with compile-time constants
template <class T>
Var affine(Tape<T>& tp, Var x, T a, T c) {
  const Tensor<T>& xv = tp.val(x);
  Tensor<T> out(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) out[i] = a * xv[i] + c;
  return tp.push(std::move(out), tp.needs_grad(x), [x, a](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buf(x);
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += a * g[i];
  });
}

template <class T>
Var mul_scalar(Tape<T>& tp, Var x, T a) {
  return affine(tp, x, a, T(0));
}
template <class T>
Var add_scalar(Tape<T>& tp, Var x, T c) {
  return affine(tp, x, T(1), c);
}

// broadcast ops against a learnable 1-element tensor s
template <class T>
Var mul_bscalar(Tape<T>& tp, Var x, Var s) {
  const Tensor<T>& xv = tp.val(x);
  const Tensor<T>& sv = tp.val(s);
  require_dim(sv.numel() == 1, "mul_bscalar: scalar operand must have 1 element");
  Tensor<T> out(xv.shape);
  const T a = sv[0];
  for (int64_t i = 0; i < xv.numel(); ++i) out[i] = a * xv[i];
  bool rg = tp.needs_grad(x) || tp.needs_grad(s);
  return tp.push(std::move(out), rg, [x, s](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv2 = t.val(x);
    const T a2 = t.val(s)[0];
    if (t.needs_grad(x)) {
      Tensor<T>& gx = t.grad_buf(x);
      for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += a2 * g[i];
    }
    if (t.needs_grad(s)) {
      T acc = 0;
      for (int64_t i = 0; i < xv2.numel(); ++i) acc += g[i] * xv2[i];
      t.grad_buf(s)[0] += acc;
    }
  });
}

template <class T>
Var sub_bscalar(Tape<T>& tp, Var x, Var s) {
  const Tensor<T>& xv = tp.val(x);
  require_dim(tp.val(s).numel() == 1, "sub_bscalar: scalar operand must have 1 element");
  Tensor<T> out(xv.shape);
  const T c = tp.val(s)[0];
  for (int64_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] - c;
  bool rg = tp.needs_grad(x) || tp.needs_grad(s);
  return tp.push(std::move(out), rg, [x, s](Tape<T>& t, const Tensor<T>& g) {
    t.accum(x, g);
    if (t.needs_grad(s)) {
      T acc = 0;
      for (int64_t i = 0; i < g.numel(); ++i) acc += g[i];
      t.grad_buf(s)[0] -= acc;
    }
  });
}

// per-channel scale/shift; x: [B,C,...], w/b: [C]
template <class T>
Var channel_scale(Tape<T>& tp, Var x, Var w) {
  const Tensor<T>& xv = tp.val(x);
  const Tensor<T>& wv = tp.val(w);
  require_dim(xv.ndim() >= 2 && wv.numel() == xv.shape[1], "channel_scale: channel mismatch");
  const int64_t B = xv.shape[0], C = xv.shape[1], inner = xv.numel() / (B * C);
  Tensor<T> out(xv.shape);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      const T a = wv[c];
      const T* p = xv.ptr() + (b * C + c) * inner;
      T* q = out.ptr() + (b * C + c) * inner;
      for (int64_t i = 0; i < inner; ++i) q[i] = a * p[i];
    }
  bool rg = tp.needs_grad(x) || tp.needs_grad(w);
  return tp.push(std::move(out), rg, [x, w, B, C, inner](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv2 = t.val(x);
    const Tensor<T>& wv2 = t.val(w);
    if (t.needs_grad(x)) {
      Tensor<T>& gx = t.grad_buf(x);
      for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
          const T a = wv2[c];
          const T* gg = g.ptr() + (b * C + c) * inner;
          T* q = gx.ptr() + (b * C + c) * inner;
          for (int64_t i = 0; i < inner; ++i) q[i] += a * gg[i];
        }
    }
    if (t.needs_grad(w)) {
      Tensor<T>& gw = t.grad_buf(w);
      for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
          const T* gg = g.ptr() + (b * C + c) * inner;
          const T* p = xv2.ptr() + (b * C + c) * inner;
          T acc = 0;
          for (int64_t i = 0; i < inner; ++i) acc += gg[i] * p[i];
          gw[c] += acc;
        }
    }
  });
}

template <class T>
Var channel_shift(Tape<T>& tp, Var x, Var b) {
  const Tensor<T>& xv = tp.val(x);
  const Tensor<T>& bv = tp.val(b);
  require_dim(xv.ndim() >= 2 && bv.numel() == xv.shape[1], "channel_shift: channel mismatch");
  const int64_t B = xv.shape[0], C = xv.shape[1], inner = xv.numel() / (B * C);
  Tensor<T> out(xv.shape);
  for (int64_t bb = 0; bb < B; ++bb)
    for (int64_t c = 0; c < C; ++c) {
      const T a = bv[c];
      const T* p = xv.ptr() + (bb * C + c) * inner;
      T* q = out.ptr() + (bb * C + c) * inner;
      for (int64_t i = 0; i < inner; ++i) q[i] = p[i] + a;
    }
  bool rg = tp.needs_grad(x) || tp.needs_grad(b);
  return tp.push(std::move(out), rg, [x, b, B, C, inner](Tape<T>& t, const Tensor<T>& g) {
    t.accum(x, g);
    if (t.needs_grad(b)) {
      Tensor<T>& gb = t.grad_buf(b);
      for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t c = 0; c < C; ++c) {
          const T* gg = g.ptr() + (bb * C + c) * inner;
          T acc = 0;
          for (int64_t i = 0; i < inner; ++i) acc += gg[i];
          gb[c] += acc;
        }
    }
  });
}

// A: [B,C,1,1,1] gate, Z: [B,C,T,H,W]; out = A ⊙ Z broadcast over T,H,W
template <class T>
Var mul_gate(Tape<T>& tp, Var a, Var z) {
  const Tensor<T>& av = tp.val(a);
  const Tensor<T>& zv = tp.val(z);
  require_dim(av.ndim() == 5 && zv.ndim() == 5 && av.shape[0] == zv.shape[0] &&
                  av.shape[1] == zv.shape[1] && av.shape[2] == 1 && av.shape[3] == 1 &&
                  av.shape[4] == 1,
              "mul_gate: gate must be [B,C,1,1,1] matching Z");
  const int64_t BC = zv.shape[0] * zv.shape[1], inner = zv.shape[2] * zv.shape[3] * zv.shape[4];
  Tensor<T> out(zv.shape);
  for (int64_t bc = 0; bc < BC; ++bc) {
    const T g = av[bc];
    const T* p = zv.ptr() + bc * inner;
    T* q = out.ptr() + bc * inner;
    for (int64_t i = 0; i < inner; ++i) q[i] = g * p[i];
  }
  bool rg = tp.needs_grad(a) || tp.needs_grad(z);
  return tp.push(std::move(out), rg, [a, z, BC, inner](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& av2 = t.val(a);
    const Tensor<T>& zv2 = t.val(z);
    if (t.needs_grad(z)) {
      Tensor<T>& gz = t.grad_buf(z);
      for (int64_t bc = 0; bc < BC; ++bc) {
        const T gv = av2[bc];
        const T* gg = g.ptr() + bc * inner;
        T* q = gz.ptr() + bc * inner;
        for (int64_t i = 0; i < inner; ++i) q[i] += gv * gg[i];
      }
    }
    if (t.needs_grad(a)) {
      Tensor<T>& ga = t.grad_buf(a);
      for (int64_t bc = 0; bc < BC; ++bc) {
        const T* gg = g.ptr() + bc * inner;
        const T* p = zv2.ptr() + bc * inner;
        T acc = 0;
        for (int64_t i = 0; i < inner; ++i) acc += gg[i] * p[i];
        ga[bc] += acc;
      }
    }
  });
}

// concatenation along an axis; all inputs share remaining dims
template <class T>
Var concat_axis(Tape<T>& tp, const std::vector<Var>& xs, size_t axis) {
  require_dim(!xs.empty(), "concat_axis: empty input list");
  Shape s0 = tp.val(xs[0]).shape;
  require_dim(axis < s0.size(), "concat_axis: axis out of range");
  int64_t total = 0;
  for (Var v : xs) {
    const Shape& s = tp.val(v).shape;
    require_dim(s.size() == s0.size(), "concat_axis: rank mismatch");
    for (size_t d = 0; d < s.size(); ++d)
      require_dim(d == axis || s[d] == s0[d], "concat_axis: dim mismatch");
    total += s[axis];
  }
  Shape os = s0;
  os[axis] = total;
  int64_t outer = 1, inner = 1;
  for (size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
  Tensor<T> out(os);
  bool rg = false;
  int64_t off = 0;
  for (Var v : xs) {
    const Tensor<T>& xv = tp.val(v);
    const int64_t ax = xv.shape[axis];
    for (int64_t o = 0; o < outer; ++o)
      std::copy(xv.ptr() + o * ax * inner, xv.ptr() + (o + 1) * ax * inner,
                out.ptr() + (o * total + off) * inner);
    off += ax;
    rg = rg || tp.needs_grad(v);
  }
  std::vector<Var> vs = xs;
  return tp.push(std::move(out), rg, [vs, axis, outer, inner, total](Tape<T>& t, const Tensor<T>& g) {
    int64_t off2 = 0;
    for (Var v : vs) {
      const int64_t ax = t.val(v).shape[axis];
      if (t.needs_grad(v)) {
        Tensor<T>& gx = t.grad_buf(v);
        for (int64_t o = 0; o < outer; ++o) {
          const T* src = g.ptr() + (o * total + off2) * inner;
          T* dst = gx.ptr() + o * ax * inner;
          for (int64_t i = 0; i < ax * inner; ++i) dst[i] += src[i];
        }
      }
      off2 += ax;
    }
  });
}

// x: [B,C], w: [O,C], b: [O] or kNoVar -> [B,O]
template <class T>
Var linear(Tape<T>& tp, Var x, Var w, Var b) {
  const Tensor<T>& xv = tp.val(x);
  const Tensor<T>& wv = tp.val(w);
  require_dim(xv.ndim() == 2 && wv.ndim() == 2 && xv.shape[1] == wv.shape[1],
              "linear: shape mismatch");
  const int64_t B = xv.shape[0], C = xv.shape[1], O = wv.shape[0];
  require_dim(!b.valid() || tp.val(b).numel() == O, "linear: bias shape mismatch");
  Tensor<T> out({B, O});
  for (int64_t bb = 0; bb < B; ++bb)
    for (int64_t o = 0; o < O; ++o) {
      T acc = b.valid() ? tp.val(b)[o] : T(0);
      const T* xr = xv.ptr() + bb * C;
      const T* wr = wv.ptr() + o * C;
      for (int64_t c = 0; c < C; ++c) acc += xr[c] * wr[c];
      out[bb * O + o] = acc;
    }
  bool rg = tp.needs_grad(x) || tp.needs_grad(w) || (b.valid() && tp.needs_grad(b));
  return tp.push(std::move(out), rg, [x, w, b, B, C, O](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv2 = t.val(x);
    const Tensor<T>& wv2 = t.val(w);
    if (t.needs_grad(x)) {
      Tensor<T>& gx = t.grad_buf(x);
      for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t o = 0; o < O; ++o) {
          const T gv = g[bb * O + o];
          const T* wr = wv2.ptr() + o * C;
          T* xr = gx.ptr() + bb * C;
          for (int64_t c = 0; c < C; ++c) xr[c] += gv * wr[c];
        }
    }
    if (t.needs_grad(w)) {
      Tensor<T>& gw = t.grad_buf(w);
      for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t o = 0; o < O; ++o) {
          const T gv = g[bb * O + o];
          const T* xr = xv2.ptr() + bb * C;
          T* wr = gw.ptr() + o * C;
          for (int64_t c = 0; c < C; ++c) wr[c] += gv * xr[c];
        }
    }
    if (b.valid() && t.needs_grad(b)) {
      Tensor<T>& gb = t.grad_buf(b);
      for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t o = 0; o < O; ++o) gb[o] += g[bb * O + o];
    }
  });
}

// Bilinear warp, edge replication outside. x: [C,H,W], flow: [2,H,W] with
// channel 0 = x displacement, channel 1 = y displacement, in pixels.
template <class T>
Var warp_chw(Tape<T>& tp, Var x, Var flow) {
  const Tensor<T>& xv = tp.val(x);
  const Tensor<T>& fv = tp.val(flow);
  require_dim(xv.ndim() == 3 && fv.ndim() == 3 && fv.shape[0] == 2 && fv.shape[1] == xv.shape[1] &&
                  fv.shape[2] == xv.shape[2],
              "warp: flow must be [2,H,W] matching frame");
  check_finite(fv, "warp flow");
  const int64_t C = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
  Tensor<T> out(xv.shape);
  for (int64_t y = 0; y < H; ++y)
    for (int64_t xx = 0; xx < W; ++xx) {
      const double dx = static_cast<double>(fv[0 * H * W + y * W + xx]);
      const double dy = static_cast<double>(fv[1 * H * W + y * W + xx]);
      auto tx = detail::bilinear_tap(static_cast<double>(xx) + dx, W);
      auto ty = detail::bilinear_tap(static_cast<double>(y) + dy, H);
      for (int64_t c = 0; c < C; ++c) {
        const T* pl = xv.ptr() + c * H * W;
        T v00 = pl[ty.i0 * W + tx.i0], v01 = pl[ty.i0 * W + tx.i1];
        T v10 = pl[ty.i1 * W + tx.i0], v11 = pl[ty.i1 * W + tx.i1];
        T fy = static_cast<T>(ty.f), fx = static_cast<T>(tx.f);
        out[c * H * W + y * W + xx] =
            (T(1) - fy) * ((T(1) - fx) * v00 + fx * v01) + fy * ((T(1) - fx) * v10 + fx * v11);
      }
    }
  bool rg = tp.needs_grad(x) || tp.needs_grad(flow);
  return tp.push(std::move(out), rg, [x, flow, C, H, W](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv2 = t.val(x);
    const Tensor<T>& fv2 = t.val(flow);
    const bool nx = t.needs_grad(x), nf = t.needs_grad(flow);
    Tensor<T>* gx = nx ? &t.grad_buf(x) : nullptr;
    Tensor<T>* gf = nf ? &t.grad_buf(flow) : nullptr;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t xx = 0; xx < W; ++xx) {
        const double dx = static_cast<double>(fv2[0 * H * W + y * W + xx]);
        const double dy = static_cast<double>(fv2[1 * H * W + y * W + xx]);
        auto tx = detail::bilinear_tap(static_cast<double>(xx) + dx, W);
        auto ty = detail::bilinear_tap(static_cast<double>(y) + dy, H);
        T fy = static_cast<T>(ty.f), fx = static_cast<T>(tx.f);
        T gxacc = 0, gyacc = 0;
        for (int64_t c = 0; c < C; ++c) {
          const T gv = g[c * H * W + y * W + xx];
          const T* pl = xv2.ptr() + c * H * W;
          T v00 = pl[ty.i0 * W + tx.i0], v01 = pl[ty.i0 * W + tx.i1];
          T v10 = pl[ty.i1 * W + tx.i0], v11 = pl[ty.i1 * W + tx.i1];
          if (nx) {
            T* gpl = gx->ptr() + c * H * W;
            gpl[ty.i0 * W + tx.i0] += gv * (T(1) - fy) * (T(1) - fx);
            gpl[ty.i0 * W + tx.i1] += gv * (T(1) - fy) * fx;
            gpl[ty.i1 * W + tx.i0] += gv * fy * (T(1) - fx);
            gpl[ty.i1 * W + tx.i1] += gv * fy * fx;
          }
          if (nf) {
            gxacc += gv * ((T(1) - fy) * (v01 - v00) + fy * (v11 - v10));
            gyacc += gv * ((T(1) - fx) * (v10 - v00) + fx * (v11 - v01));
          }
        }
        if (nf) {
          if (!tx.clamped) (*gf)[0 * H * W + y * W + xx] += gxacc;
          if (!ty.clamped) (*gf)[1 * H * W + y * W + xx] += gyacc;
        }
      }
  });
}

// align-corners-false bilinear resize; x: [C,H,W] -> [C,oh,ow]
template <class T>
Var resize_chw(Tape<T>& tp, Var x, int64_t oh, int64_t ow) {
  const Tensor<T>& xv = tp.val(x);
  require_dim(xv.ndim() == 3, "resize: expects [C,H,W]");
  require_dim(oh >= 1 && ow >= 1, "resize: output dims must be positive");
  const int64_t C = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
  const double sy = static_cast<double>(H) / static_cast<double>(oh);
  const double sx = static_cast<double>(W) / static_cast<double>(ow);
  Tensor<T> out({C, oh, ow});
  for (int64_t y = 0; y < oh; ++y) {
    auto ty = detail::bilinear_tap((static_cast<double>(y) + 0.5) * sy - 0.5, H);
    for (int64_t xx = 0; xx < ow; ++xx) {
      auto tx = detail::bilinear_tap((static_cast<double>(xx) + 0.5) * sx - 0.5, W);
      T fy = static_cast<T>(ty.f), fx = static_cast<T>(tx.f);
      for (int64_t c = 0; c < C; ++c) {
        const T* pl = xv.ptr() + c * H * W;
        out[c * oh * ow + y * ow + xx] =
            (T(1) - fy) * ((T(1) - fx) * pl[ty.i0 * W + tx.i0] + fx * pl[ty.i0 * W + tx.i1]) +
            fy * ((T(1) - fx) * pl[ty.i1 * W + tx.i0] + fx * pl[ty.i1 * W + tx.i1]);
      }
    }
  }
  return tp.push(std::move(out), tp.needs_grad(x),
                 [x, C, H, W, oh, ow, sy, sx](Tape<T>& t, const Tensor<T>& g) {
                   Tensor<T>& gx = t.grad_buf(x);
                   for (int64_t y = 0; y < oh; ++y) {
                     auto ty = detail::bilinear_tap((static_cast<double>(y) + 0.5) * sy - 0.5, H);
                     for (int64_t xx = 0; xx < ow; ++xx) {
                       auto tx = detail::bilinear_tap((static_cast<double>(xx) + 0.5) * sx - 0.5, W);
                       T fy = static_cast<T>(ty.f), fx = static_cast<T>(tx.f);
                       for (int64_t c = 0; c < C; ++c) {
                         const T gv = g[c * oh * ow + y * ow + xx];
                         T* gpl = gx.ptr() + c * H * W;
                         gpl[ty.i0 * W + tx.i0] += gv * (T(1) - fy) * (T(1) - fx);
                         gpl[ty.i0 * W + tx.i1] += gv * (T(1) - fy) * fx;
                         gpl[ty.i1 * W + tx.i0] += gv * fy * (T(1) - fx);
                         gpl[ty.i1 * W + tx.i1] += gv * fy * fx;
                       }
                     }
                   }
                 });
}

// clamp to [0,1]; pass-through gradient inside the range (inclusive)
template <class T>
Var clamp01(Tape<T>& tp, Var x) {
  const Tensor<T>& xv = tp.val(x);
  Tensor<T> out(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) out[i] = std::clamp(xv[i], T(0), T(1));
  return tp.push(std::move(out), tp.needs_grad(x), [x](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv2 = t.val(x);
    Tensor<T>& gx = t.grad_buf(x);
    for (int64_t i = 0; i < xv2.numel(); ++i)
      if (xv2[i] >= T(0) && xv2[i] <= T(1)) gx[i] += g[i];
  });
}

template <class T>
Var abs_op(Tape<T>& tp, Var x) {
  const Tensor<T>& xv = tp.val(x);
  Tensor<T> out(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) out[i] = std::abs(xv[i]);
  return tp.push(std::move(out), tp.needs_grad(x), [x](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv2 = t.val(x);
    Tensor<T>& gx = t.grad_buf(x);
    for (int64_t i = 0; i < xv2.numel(); ++i) {
      T s = xv2[i] > T(0) ? T(1) : (xv2[i] < T(0) ? T(-1) : T(0));
      gx[i] += s * g[i];
    }
  });
}

template <class T>
Var sum_all(Tape<T>& tp, Var x) {
  const Tensor<T>& xv = tp.val(x);
  T acc = 0;
  for (int64_t i = 0; i < xv.numel(); ++i) acc += xv[i];
  return tp.push(Tensor<T>::scalar(acc), tp.needs_grad(x), [x](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buf(x);
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g[0];
  });
}

template <class T>
Var mean_all(Tape<T>& tp, Var x) {
  const int64_t n = tp.val(x).numel();
  return mul_scalar(tp, sum_all(tp, x), T(1) / static_cast<T>(n));
}

template <class T>
Var rsqrt_op(Tape<T>& tp, Var x) {
  const Tensor<T>& xv = tp.val(x);
  Tensor<T> out(xv.shape);
  for (int64_t i = 0; i < xv.numel(); ++i) {
    require_input(xv[i] > T(0), "rsqrt: operand must be positive");
    out[i] = T(1) / std::sqrt(xv[i]);
  }
  return tp.push(std::move(out), tp.needs_grad(x), [x](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv2 = t.val(x);
    Tensor<T>& gx = t.grad_buf(x);
    for (int64_t i = 0; i < xv2.numel(); ++i) {
      T r = T(1) / std::sqrt(xv2[i]);
      gx[i] += g[i] * (T(-0.5) * r * r * r);
    }
  });
}

namespace detail {

// pairwise reduction: keeps the all-equal-terms mean exact for power-of-two
// counts and improves accumulation error generally
template <class T, class F>
T pairwise_sum(int64_t lo, int64_t hi, const F& term) {
  if (hi - lo <= 2) {
    T acc = 0;
    for (int64_t i = lo; i < hi; ++i) acc += term(i);
    return acc;
  }
  const int64_t mid = lo + (hi - lo) / 2;
  return pairwise_sum<T>(lo, mid, term) + pairwise_sum<T>(mid, hi, term);
}

}  // namespace detail

// mean over elements of sqrt((x-y)^2 + eps^2)
template <class T>
Var charbonnier_op(Tape<T>& tp, Var x, Var y, T eps) {
  const Tensor<T>& xv = tp.val(x);
  const Tensor<T>& yv = tp.val(y);
  require_dim(xv.same_shape(yv), "charbonnier: shape mismatch");
  require_input(eps > T(0), "charbonnier: eps must be positive");
  check_finite(xv, "charbonnier x");
  check_finite(yv, "charbonnier y");
  const int64_t n = xv.numel();
  T acc = detail::pairwise_sum<T>(0, n, [&](int64_t i) {
    T d = xv[i] - yv[i];
    return std::sqrt(d * d + eps * eps);
  });
  bool rg = tp.needs_grad(x) || tp.needs_grad(y);
  return tp.push(Tensor<T>::scalar(acc / static_cast<T>(n)), rg,
                 [x, y, eps, n](Tape<T>& t, const Tensor<T>& g) {
                   const Tensor<T>& xv2 = t.val(x);
                   const Tensor<T>& yv2 = t.val(y);
                   const T gv = g[0] / static_cast<T>(n);
                   const bool nx = t.needs_grad(x), ny = t.needs_grad(y);
                   Tensor<T>* gx = nx ? &t.grad_buf(x) : nullptr;
                   Tensor<T>* gy = ny ? &t.grad_buf(y) : nullptr;
                   for (int64_t i = 0; i < n; ++i) {
                     T d = xv2[i] - yv2[i];
                     T dd = gv * d / std::sqrt(d * d + eps * eps);
                     if (nx) (*gx)[i] += dd;
                     if (ny) (*gy)[i] -= dd;
                   }
                 });
}

// mean squared error against a constant target
template <class T>
Var mse_to_const(Tape<T>& tp, Var x, Tensor<T> target) {
  const Tensor<T>& xv = tp.val(x);
  require_dim(xv.same_shape(target), "mse: shape mismatch");
  const int64_t n = xv.numel();
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    T d = xv[i] - target[i];
    acc += d * d;
  }
  auto tgt = std::make_shared<Tensor<T>>(std::move(target));
  return tp.push(Tensor<T>::scalar(acc / static_cast<T>(n)), tp.needs_grad(x),
                 [x, tgt, n](Tape<T>& t, const Tensor<T>& g) {
                   const Tensor<T>& xv2 = t.val(x);
                   Tensor<T>& gx = t.grad_buf(x);
                   const T gv = T(2) * g[0] / static_cast<T>(n);
                   for (int64_t i = 0; i < n; ++i) gx[i] += gv * (xv2[i] - (*tgt)[i]);
                 });
}

// soft ranks via pairwise sigmoids; x: [n] -> [n]
template <class T>
Var soft_rank(Tape<T>& tp, Var x, T tau) {
  const Tensor<T>& xv = tp.val(x);
  require_dim(xv.ndim() == 1, "soft_rank: expects a vector");
  require_input(tau > T(0), "soft_rank: tau must be positive");
  const int64_t n = xv.numel();
  Tensor<T> out(xv.shape);
  for (int64_t i = 0; i < n; ++i) {
    T acc = 0;
    for (int64_t j = 0; j < n; ++j) {
      if (i == j) continue;
      acc += T(1) / (T(1) + std::exp(-(xv[i] - xv[j]) / tau));
    }
    out[i] = acc;
  }
  return tp.push(std::move(out), tp.needs_grad(x), [x, tau, n](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv2 = t.val(x);
    Tensor<T>& gx = t.grad_buf(x);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) {
        if (i == j) continue;
        T s = T(1) / (T(1) + std::exp(-(xv2[i] - xv2[j]) / tau));
        T ds = s * (T(1) - s) / tau;
        // d sr_i / d x_i = +ds ; d sr_i / d x_j = -ds
        gx[i] += g[i] * ds;
        gx[j] -= g[i] * ds;
      }
  });
}

// ---- plain (non-tape) layout helpers and public single-frame ops ----------

template <class T>
Tensor<T> hwc_to_chw(const Tensor<T>& f) {
  require_dim(f.ndim() == 3, "hwc_to_chw: expects [H,W,C]");
  const int64_t H = f.shape[0], W = f.shape[1], C = f.shape[2];
  Tensor<T> out({C, H, W});
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x)
      for (int64_t c = 0; c < C; ++c) out[(c * H + y) * W + x] = f[(y * W + x) * C + c];
  return out;
}

template <class T>
Tensor<T> chw_to_hwc(const Tensor<T>& f) {
  require_dim(f.ndim() == 3, "chw_to_hwc: expects [C,H,W]");
  const int64_t C = f.shape[0], H = f.shape[1], W = f.shape[2];
  Tensor<T> out({H, W, C});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) out[(y * W + x) * C + c] = f[(c * H + y) * W + x];
  return out;
}

// frame: [H,W,C] -> [out_h,out_w,C]
template <class T>
Tensor<T> bilinear_resize2d(const Tensor<T>& frame, int64_t out_h, int64_t out_w) {
  require_dim(frame.ndim() == 3, "bilinear_resize2d: expects [H,W,C]");
  require_dim(out_h >= 1 && out_w >= 1, "bilinear_resize2d: zero output size");
  Tape<T> tp;
  Var x = tp.leaf(hwc_to_chw(frame));
  Var o = resize_chw(tp, x, out_h, out_w);
  return chw_to_hwc(tp.val(o));
}

// frame: [H,W,C], flow: [H,W,2] (dx,dy) -> warped [H,W,C]
template <class T>
Tensor<T> warp_bilinear(const Tensor<T>& frame, const Tensor<T>& flow) {
  require_dim(frame.ndim() == 3 && flow.ndim() == 3 && flow.shape[2] == 2 &&
                  flow.shape[0] == frame.shape[0] && flow.shape[1] == frame.shape[1],
              "warp_bilinear: flow must be [H,W,2] matching frame");
  Tape<T> tp;
  Var x = tp.leaf(hwc_to_chw(frame));
  Var f = tp.leaf(hwc_to_chw(flow));
  Var o = warp_chw(tp, x, f);
  return chw_to_hwc(tp.val(o));
}

}  // namespace eyesim

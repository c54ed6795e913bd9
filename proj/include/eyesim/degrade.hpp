#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eyesim/video.hpp"
#include "eyesim/viewdec.hpp"

namespace eyesim {

enum class DegKind { kGaussianNoise, kMotionBlur, kJpegLike, kSaltPepper, kMeanBlur };

inline const std::vector<DegKind>& all_deg_kinds() {
  static const std::vector<DegKind> kinds{DegKind::kGaussianNoise, DegKind::kMotionBlur,
                                          DegKind::kJpegLike, DegKind::kSaltPepper,
                                          DegKind::kMeanBlur};
  return kinds;
}

inline const char* deg_kind_name(DegKind k) {
  switch (k) {
    case DegKind::kGaussianNoise: return "gaussian_noise";
    case DegKind::kMotionBlur: return "motion_blur";
    case DegKind::kJpegLike: return "jpeg_like";
    case DegKind::kSaltPepper: return "salt_pepper";
    case DegKind::kMeanBlur: return "mean_blur";
  }
  return "?";
}

inline DegKind deg_kind_from_name(const std::string& s) {
  for (DegKind k : all_deg_kinds())
    if (s == deg_kind_name(k)) return k;
  throw ConfigError("unknown degradation kind: " + s);
}

// Sampling ranges; the low end of the noise-like kinds is open downward to
// zero so that the identity setting remains expressible.
struct DegRanges {
  static constexpr double sigma_lo = 0.01, sigma_hi = 0.15;
  static constexpr int64_t blur_len_lo = 3, blur_len_hi = 15;
  static constexpr double quality_lo = 10.0, quality_hi = 90.0;
  static constexpr double density_lo = 0.002, density_hi = 0.05;
  static constexpr int64_t box_lo = 3, box_hi = 7;
};

struct DegradationSpec {
  DegKind kind = DegKind::kGaussianNoise;
  std::map<std::string, double> params;
  double severity = 0.0;
  uint64_t global_seed = 0;
  int64_t clip_index = 0;

  double param(const std::string& name) const {
    auto it = params.find(name);
    require_input(it != params.end(), std::string("spec missing parameter ") + name);
    return it->second;
  }
};

inline double severity_of(DegKind kind, const std::map<std::string, double>& params) {
  auto lin = [](double v, double lo, double hi) { return std::clamp((v - lo) / (hi - lo), 0.0, 1.0); };
  switch (kind) {
    case DegKind::kGaussianNoise: return lin(params.at("sigma"), DegRanges::sigma_lo, DegRanges::sigma_hi);
    case DegKind::kMotionBlur:
      return lin(params.at("kernel_len"), static_cast<double>(DegRanges::blur_len_lo),
                 static_cast<double>(DegRanges::blur_len_hi));
    case DegKind::kJpegLike:
      return lin(DegRanges::quality_hi - params.at("quality"), 0.0,
                 DegRanges::quality_hi - DegRanges::quality_lo);
    case DegKind::kSaltPepper: return lin(params.at("density"), DegRanges::density_lo, DegRanges::density_hi);
    case DegKind::kMeanBlur:
      return lin(params.at("kernel_size"), static_cast<double>(DegRanges::box_lo),
                 static_cast<double>(DegRanges::box_hi));
  }
  return 0.0;
}

inline void validate_spec(const DegradationSpec& s) {
  switch (s.kind) {
    case DegKind::kGaussianNoise: {
      double v = s.param("sigma");
      require_input(v >= 0.0 && v <= DegRanges::sigma_hi, "gaussian_noise: sigma out of range");
      break;
    }
    case DegKind::kMotionBlur: {
      double len = s.param("kernel_len");
      double ang = s.param("angle");
      require_input(len >= 1 && len <= DegRanges::blur_len_hi && len == std::floor(len),
                    "motion_blur: kernel_len out of range");
      require_input(ang >= 0.0 && ang < 3.14159265358979323846 + 1e-12, "motion_blur: angle out of range");
      break;
    }
    case DegKind::kJpegLike: {
      double q = s.param("quality");
      require_input(q >= 1.0 && q <= 100.0, "jpeg_like: quality out of range");
      break;
    }
    case DegKind::kSaltPepper: {
      double d = s.param("density");
      require_input(d >= 0.0 && d <= DegRanges::density_hi, "salt_pepper: density out of range");
      break;
    }
    case DegKind::kMeanBlur: {
      double k = s.param("kernel_size");
      require_input(k == 1 || k == 3 || k == 5 || k == 7, "mean_blur: kernel_size must be odd in [1,7]");
      break;
    }
  }
}

// kind uniform over allowed_kinds, parameters uniform in their ranges,
// severity = the linear position of the parameter within its range.
inline DegradationSpec sample_spec(RngStream& rng, const std::vector<DegKind>& allowed_kinds) {
  require_input(!allowed_kinds.empty(), "sample_spec: allowed_kinds must be non-empty");
  DegradationSpec s;
  s.kind = allowed_kinds[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(allowed_kinds.size()) - 1))];
  switch (s.kind) {
    case DegKind::kGaussianNoise:
      s.params["sigma"] = rng.uniform(DegRanges::sigma_lo, DegRanges::sigma_hi);
      break;
    case DegKind::kMotionBlur:
      s.params["kernel_len"] = static_cast<double>(rng.uniform_int(DegRanges::blur_len_lo, DegRanges::blur_len_hi));
      s.params["angle"] = rng.uniform(0.0, 3.14159265358979323846);
      break;
    case DegKind::kJpegLike:
      s.params["quality"] = rng.uniform(DegRanges::quality_lo, DegRanges::quality_hi);
      break;
    case DegKind::kSaltPepper:
      s.params["density"] = rng.uniform(DegRanges::density_lo, DegRanges::density_hi);
      break;
    case DegKind::kMeanBlur:
      s.params["kernel_size"] = static_cast<double>(3 + 2 * rng.uniform_int(0, 2));
      break;
  }
  s.severity = severity_of(s.kind, s.params);
  return s;
}

namespace detail {

// 1-pixel-wide normalized line kernel of the given length and angle,
// rasterized by bilinear splatting of unit samples along the line.
inline std::vector<double> motion_line_kernel(int64_t len, double angle, int64_t* side_out) {
  const int64_t side = (len % 2 == 1) ? len : len + 1;
  std::vector<double> k(static_cast<size_t>(side * side), 0.0);
  const double cx = static_cast<double>(side - 1) / 2.0;
  const double c = std::cos(angle), sn = std::sin(angle);
  for (int64_t i = 0; i < len; ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(len - 1) / 2.0;
    const double px = cx + d * c, py = cx + d * sn;
    const int64_t x0 = static_cast<int64_t>(std::floor(px)), y0 = static_cast<int64_t>(std::floor(py));
    const double fx = px - static_cast<double>(x0), fy = py - static_cast<double>(y0);
    auto splat = [&](int64_t y, int64_t x, double wgt) {
      if (y >= 0 && y < side && x >= 0 && x < side) k[static_cast<size_t>(y * side + x)] += wgt;
    };
    splat(y0, x0, (1 - fy) * (1 - fx));
    splat(y0, x0 + 1, (1 - fy) * fx);
    splat(y0 + 1, x0, fy * (1 - fx));
    splat(y0 + 1, x0 + 1, fy * fx);
  }
  double sum = 0;
  for (double v : k) sum += v;
  for (double& v : k) v /= sum;
  *side_out = side;
  return k;
}

// spatial convolution with an arbitrary kernel, replicate padding, per frame
// and channel
template <class T>
void convolve_frames(Tensor<T>& frames, const std::vector<double>& kernel, int64_t side) {
  const int64_t Tn = frames.shape[0], H = frames.shape[1], W = frames.shape[2], C = frames.shape[3];
  const int64_t r = side / 2;
  Tensor<T> out(frames.shape);
  for (int64_t t = 0; t < Tn; ++t)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x)
        for (int64_t c = 0; c < C; ++c) {
          double acc = 0;
          for (int64_t ky = 0; ky < side; ++ky)
            for (int64_t kx = 0; kx < side; ++kx) {
              const double wv = kernel[static_cast<size_t>(ky * side + kx)];
              if (wv == 0.0) continue;
              const int64_t sy = std::clamp<int64_t>(y + ky - r, 0, H - 1);
              const int64_t sx = std::clamp<int64_t>(x + kx - r, 0, W - 1);
              acc += wv * static_cast<double>(frames[((t * H + sy) * W + sx) * C + c]);
            }
          out[((t * H + y) * W + x) * C + c] = static_cast<T>(acc);
        }
  frames = std::move(out);
}

// 8x8 orthonormal DCT-II basis used by the block-quantization roundtrip
struct Dct8 {
  double basis[8][8];
  Dct8() {
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x)
        basis[u][x] = std::cos((2.0 * x + 1.0) * u * 3.14159265358979323846 / 16.0) *
                      (u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0));
  }
};

inline const Dct8& dct8() {
  static const Dct8 d;
  return d;
}

// standard luminance / chrominance quantization tables
inline const std::array<int, 64>& jpeg_luma_table() {
  static const std::array<int, 64> t{16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,
                                     58, 60, 55, 14, 13,  16,  24,  40,  57, 69, 56, 14, 17,
                                     22, 29, 51, 87, 80,  62,  18,  22,  37, 56, 68, 109, 103,
                                     77, 24, 35, 55, 64,  81,  104, 113, 92, 49, 64, 78,  87,
                                     103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  return t;
}
inline const std::array<int, 64>& jpeg_chroma_table() {
  static const std::array<int, 64> t{17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
                                     24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
                                     99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
                                     99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};
  return t;
}

inline std::array<double, 64> scaled_quant_table(const std::array<int, 64>& base, double quality) {
  const double scale = quality < 50.0 ? 5000.0 / quality : 200.0 - 2.0 * quality;
  std::array<double, 64> out{};
  for (int i = 0; i < 64; ++i)
    out[i] = std::clamp(std::floor((base[i] * scale + 50.0) / 100.0), 1.0, 255.0);
  return out;
}

// DCT -> quantize -> dequantize -> inverse DCT on one padded plane
inline void jpeg_roundtrip_plane(std::vector<double>& plane, int64_t ph, int64_t pw,
                                 const std::array<double, 64>& qt) {
  const Dct8& d = dct8();
  for (int64_t by = 0; by < ph; by += 8)
    for (int64_t bx = 0; bx < pw; bx += 8) {
      double blk[8][8], coef[8][8];
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) blk[y][x] = plane[static_cast<size_t>((by + y) * pw + bx + x)];
      for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
          double acc = 0;
          for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) acc += blk[y][x] * d.basis[u][y] * d.basis[v][x];
          const double q = qt[static_cast<size_t>(u * 8 + v)];
          coef[u][v] = std::round(acc / q) * q;
        }
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          double acc = 0;
          for (int u = 0; u < 8; ++u)
            for (int v = 0; v < 8; ++v) acc += coef[u][v] * d.basis[u][y] * d.basis[v][x];
          plane[static_cast<size_t>((by + y) * pw + bx + x)] = acc;
        }
    }
}

}  // namespace detail

// Pure function of (clip, spec): all randomness comes from the spec's
// counter-based stream. Output stays in [0,1].
template <class T>
VideoClip<T> apply_degradation(const VideoClip<T>& clip, const DegradationSpec& spec) {
  require_input(clip.t() >= 1, "apply_degradation: empty clip");
  validate_spec(spec);
  RngStream rng = stream_for(spec.global_seed, static_cast<uint64_t>(spec.clip_index), RngOp::kDegrade);
  VideoClip<T> out = clip;
  Tensor<T>& fr = out.frames;
  const int64_t Tn = clip.t(), H = clip.h(), W = clip.w(), C = clip.c();
  switch (spec.kind) {
    case DegKind::kGaussianNoise: {
      const double sigma = spec.param("sigma");
      for (int64_t i = 0; i < fr.numel(); ++i)
        fr[i] = static_cast<T>(std::clamp(static_cast<double>(fr[i]) + rng.normal() * sigma, 0.0, 1.0));
      break;
    }
    case DegKind::kMotionBlur: {
      const int64_t len = static_cast<int64_t>(spec.param("kernel_len"));
      if (len <= 1) break;
      int64_t side = 0;
      auto kernel = detail::motion_line_kernel(len, spec.param("angle"), &side);
      detail::convolve_frames(fr, kernel, side);
      break;
    }
    case DegKind::kJpegLike: {
      const double q = spec.param("quality");
      auto qy = detail::scaled_quant_table(detail::jpeg_luma_table(), q);
      auto qc = detail::scaled_quant_table(detail::jpeg_chroma_table(), q);
      const int64_t ph = (H + 7) / 8 * 8, pw = (W + 7) / 8 * 8;
      std::vector<double> Y(static_cast<size_t>(ph * pw)), Cb(Y.size()), Cr(Y.size());
      for (int64_t t = 0; t < Tn; ++t) {
        for (int64_t y = 0; y < ph; ++y)
          for (int64_t x = 0; x < pw; ++x) {
            const int64_t sy = std::min(y, H - 1), sx = std::min(x, W - 1);
            const double r = fr[((t * H + sy) * W + sx) * C + 0];
            const double g = fr[((t * H + sy) * W + sx) * C + 1];
            const double b = fr[((t * H + sy) * W + sx) * C + 2];
            const size_t i = static_cast<size_t>(y * pw + x);
            Y[i] = (0.299 * r + 0.587 * g + 0.114 * b) * 255.0 - 128.0;
            Cb[i] = (-0.168736 * r - 0.331264 * g + 0.5 * b + 0.5) * 255.0 - 128.0;
            Cr[i] = (0.5 * r - 0.418688 * g - 0.081312 * b + 0.5) * 255.0 - 128.0;
          }
        detail::jpeg_roundtrip_plane(Y, ph, pw, qy);
        detail::jpeg_roundtrip_plane(Cb, ph, pw, qc);
        detail::jpeg_roundtrip_plane(Cr, ph, pw, qc);
        for (int64_t y = 0; y < H; ++y)
          for (int64_t x = 0; x < W; ++x) {
            const size_t i = static_cast<size_t>(y * pw + x);
            const double yy = (Y[i] + 128.0) / 255.0;
            const double cb = (Cb[i] + 128.0) / 255.0 - 0.5;
            const double cr = (Cr[i] + 128.0) / 255.0 - 0.5;
            const double r = yy + 1.402 * cr;
            const double g = yy - 0.344136 * cb - 0.714136 * cr;
            const double b = yy + 1.772 * cb;
            fr[((t * H + y) * W + x) * C + 0] = static_cast<T>(std::clamp(r, 0.0, 1.0));
            fr[((t * H + y) * W + x) * C + 1] = static_cast<T>(std::clamp(g, 0.0, 1.0));
            fr[((t * H + y) * W + x) * C + 2] = static_cast<T>(std::clamp(b, 0.0, 1.0));
          }
      }
      break;
    }
    case DegKind::kSaltPepper: {
      const double density = spec.param("density");
      for (int64_t t = 0; t < Tn; ++t)
        for (int64_t y = 0; y < H; ++y)
          for (int64_t x = 0; x < W; ++x) {
            const double u = rng.uniform();
            if (u < density / 2) {
              for (int64_t c = 0; c < C; ++c) fr[((t * H + y) * W + x) * C + c] = T(0);
            } else if (u < density) {
              for (int64_t c = 0; c < C; ++c) fr[((t * H + y) * W + x) * C + c] = T(1);
            }
          }
      break;
    }
    case DegKind::kMeanBlur: {
      const int64_t k = static_cast<int64_t>(spec.param("kernel_size"));
      if (k <= 1) break;
      std::vector<double> kernel(static_cast<size_t>(k * k), 1.0 / static_cast<double>(k * k));
      detail::convolve_frames(fr, kernel, k);
      break;
    }
  }
  return out;
}

// ---- proxy no-reference scorer --------------------------------------------

inline double luma601(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

// Difference-of-Laplacians response mask; its L2 norm is 6, which together
// with the 1.4826 MAD factor turns the median |response| into a noise-sigma
// estimate.
inline const std::array<double, 9>& noise_mask() {
  static const std::array<double, 9> m{1, -2, 1, -2, 4, -2, 1, -2, 1};
  return m;
}

// score = 100 * max(0, 1 - ne/0.25), ne = 1.4826/6 * median |mask response|
// over the interior of the luma plane. frame: [H,W,C] in [0,1].
template <class T>
double proxy_iqa(const Tensor<T>& frame) {
  require_dim(frame.ndim() == 3 && frame.shape[2] == 3, "proxy_iqa: expects [H,W,3]");
  const int64_t H = frame.shape[0], W = frame.shape[1];
  require_input(H >= 3 && W >= 3, "proxy_iqa: frame too small");
  const auto& m = noise_mask();
  std::vector<double> resp;
  resp.reserve(static_cast<size_t>((H - 2) * (W - 2)));
  for (int64_t y = 1; y < H - 1; ++y)
    for (int64_t x = 1; x < W - 1; ++x) {
      double acc = 0;
      for (int64_t dy = -1; dy <= 1; ++dy)
        for (int64_t dx = -1; dx <= 1; ++dx) {
          const int64_t i = ((y + dy) * W + (x + dx)) * 3;
          acc += m[static_cast<size_t>((dy + 1) * 3 + dx + 1)] *
                 luma601(frame[i], frame[i + 1], frame[i + 2]);
        }
      resp.push_back(std::abs(acc));
    }
  auto mid = resp.begin() + static_cast<int64_t>(resp.size() / 2);
  std::nth_element(resp.begin(), mid, resp.end());
  const double med = *mid;
  const double ne = 1.4826 / 6.0 * med;
  return 100.0 * std::max(0.0, 1.0 - ne / 0.25);
}

template <class T>
double proxy_iqa_clip_mean(const VideoClip<T>& clip) {
  double acc = 0;
  for (int64_t t = 0; t < clip.t(); ++t) acc += proxy_iqa(frame_hwc(clip, t));
  return acc / static_cast<double>(clip.t());
}

// ---- spec <-> json ----------------------------------------------------------

inline nlohmann::json spec_to_json(const DegradationSpec& s) {
  return nlohmann::json{{"kind", deg_kind_name(s.kind)},
                        {"params", s.params},
                        {"severity", s.severity},
                        {"stream", {{"global_seed", s.global_seed}, {"clip_index", s.clip_index}}}};
}

inline DegradationSpec spec_from_json(const nlohmann::json& j) {
  DegradationSpec s;
  s.kind = deg_kind_from_name(j.at("kind").get<std::string>());
  s.params = j.at("params").get<std::map<std::string, double>>();
  s.severity = j.at("severity").get<double>();
  s.global_seed = j.at("stream").at("global_seed").get<uint64_t>();
  s.clip_index = j.at("stream").at("clip_index").get<int64_t>();
  return s;
}

}  // namespace eyesim

#pragma once

#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <utility>

#include "eyesim/ops.hpp"
#include "eyesim/paramstore.hpp"

namespace eyesim {

// T x H x W x C frames, values in [0,1]. The universal media unit.
template <class T>
struct VideoClip {
  Tensor<T> frames;  // [T,H,W,C]
  std::optional<std::pair<int32_t, int32_t>> fps;
  std::string source_id;

  VideoClip() = default;
  explicit VideoClip(Tensor<T> f, std::string id = "") : frames(std::move(f)), source_id(std::move(id)) {
    require_dim(frames.ndim() == 4, "VideoClip: frames must be [T,H,W,C]");
  }

  int64_t t() const { return frames.shape[0]; }
  int64_t h() const { return frames.shape[1]; }
  int64_t w() const { return frames.shape[2]; }
  int64_t c() const { return frames.shape[3]; }
};

template <class T>
void validate_clip(const VideoClip<T>& clip, const char* context = "clip") {
  require_input(clip.frames.ndim() == 4 && clip.t() >= 1, std::string(context) + ": needs T >= 1");
  require_input(clip.c() == 3, std::string(context) + ": expects 3 channels");
  for (const T& v : clip.frames.data)
    require_input(v >= T(0) && v <= T(1) && std::isfinite(static_cast<double>(v)),
                  std::string(context) + ": values must lie in [0,1]");
}

template <class T>
Tensor<T> frame_hwc(const VideoClip<T>& clip, int64_t t) {
  const int64_t H = clip.h(), W = clip.w(), C = clip.c();
  Tensor<T> out({H, W, C});
  std::copy(clip.frames.ptr() + t * H * W * C, clip.frames.ptr() + (t + 1) * H * W * C, out.ptr());
  return out;
}

template <class T>
Tensor<T> frame_chw(const VideoClip<T>& clip, int64_t t) {
  return hwc_to_chw(frame_hwc(clip, t));
}

template <class T>
void set_frame_hwc(VideoClip<T>& clip, int64_t t, const Tensor<T>& f) {
  require_dim(f.shape == Shape{clip.h(), clip.w(), clip.c()}, "set_frame: shape mismatch");
  std::copy(f.ptr(), f.ptr() + f.numel(), clip.frames.ptr() + t * f.numel());
}

template <class T>
void set_frame_chw(VideoClip<T>& clip, int64_t t, const Tensor<T>& f) {
  set_frame_hwc(clip, t, chw_to_hwc(f));
}

// [T,H,W,C] -> [1,C,T,H,W]
template <class T>
Tensor<T> clip_to_bcthw(const VideoClip<T>& clip) {
  const int64_t Tn = clip.t(), H = clip.h(), W = clip.w(), C = clip.c();
  Tensor<T> out({1, C, Tn, H, W});
  for (int64_t t = 0; t < Tn; ++t)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x)
        for (int64_t c = 0; c < C; ++c)
          out[idx5(out.shape, 0, c, t, y, x)] = clip.frames[((t * H + y) * W + x) * C + c];
  return out;
}

template <class T>
double psnr(const VideoClip<T>& a, const VideoClip<T>& b) {
  require_dim(a.frames.same_shape(b.frames), "psnr: shape mismatch");
  double mse = 0;
  for (int64_t i = 0; i < a.frames.numel(); ++i) {
    double d = static_cast<double>(a.frames[i]) - static_cast<double>(b.frames[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.frames.numel());
  if (mse <= 0) return 99.0;  // identical content; cap instead of infinity
  return 10.0 * std::log10(1.0 / mse);
}

// Clip container: magic "EVID", u32 LE version, T,H,W,C as u32 LE, dtype u8
// (0 = f32 LE), payload frame-major / row-major / channel-interleaved.
template <class T>
void save_evid(const std::string& path, const VideoClip<T>& clip) {
  std::string buf;
  buf.append("EVID", 4);
  detail::put_u32(buf, kEvidFormatVersion);
  detail::put_u32(buf, static_cast<uint32_t>(clip.t()));
  detail::put_u32(buf, static_cast<uint32_t>(clip.h()));
  detail::put_u32(buf, static_cast<uint32_t>(clip.w()));
  detail::put_u32(buf, static_cast<uint32_t>(clip.c()));
  buf.push_back(static_cast<char>(0));  // dtype code 0 = f32 LE
  buf.reserve(buf.size() + static_cast<size_t>(clip.frames.numel()) * 4);
  for (int64_t i = 0; i < clip.frames.numel(); ++i)
    detail::put_f32(buf, static_cast<float>(clip.frames[i]));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("write failed: " + path);
}

template <class T>
VideoClip<T> load_evid(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 25 || buf.compare(0, 4, "EVID") != 0) throw IoError("not an EVID clip: " + path);
  if (detail::get_u32(buf, 4) != kEvidFormatVersion) throw IoError("unsupported EVID version: " + path);
  const int64_t Tn = detail::get_u32(buf, 8), H = detail::get_u32(buf, 12);
  const int64_t W = detail::get_u32(buf, 16), C = detail::get_u32(buf, 20);
  if (buf[24] != 0) throw IoError("unsupported EVID dtype: " + path);
  Tensor<T> frames({Tn, H, W, C});
  const size_t need = 25 + static_cast<size_t>(frames.numel()) * 4;
  if (buf.size() < need) throw IoError("truncated EVID payload: " + path);
  for (int64_t i = 0; i < frames.numel(); ++i)
    frames[i] = static_cast<T>(detail::get_f32(buf, 25 + static_cast<size_t>(i) * 4));
  return VideoClip<T>(std::move(frames), path);
}

}  // namespace eyesim

#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "eyesim/video.hpp"

namespace eyesim {

// centered uniform sampling: source index of output frame i out of n
inline int64_t uniform_sample_index(int64_t i, int64_t t_src, int64_t n) {
  int64_t idx = static_cast<int64_t>(
      std::floor((static_cast<double>(i) + 0.5) * static_cast<double>(t_src) / static_cast<double>(n)));
  return std::clamp<int64_t>(idx, 0, t_src - 1);
}

// Aesthetic view: N uniformly sampled frames, each bilinear-resized.
// Indices may repeat when the clip is shorter than N.
template <class T>
VideoClip<T> sample_aesthetic(const VideoClip<T>& video, int64_t n, int64_t out_h, int64_t out_w) {
  require_input(video.t() >= 1, "sample_aesthetic: empty video");
  require_input(n >= 1, "sample_aesthetic: n must be >= 1");
  Tensor<T> out({n, out_h, out_w, video.c()});
  VideoClip<T> result(std::move(out), video.source_id);
  for (int64_t i = 0; i < n; ++i) {
    int64_t src = uniform_sample_index(i, video.t(), n);
    set_frame_hwc(result, i, bilinear_resize2d(frame_hwc(video, src), out_h, out_w));
  }
  result.fps = video.fps;
  return result;
}

struct PatchProvenance {
  int64_t t;            // frame within the mosaic
  int64_t gy, gx;       // grid cell
  int64_t frame_index;  // source frame
  int64_t src_y, src_x; // top-left of the source window
};

template <class T>
struct FragmentMosaic {
  VideoClip<T> clip;  // T_c x (G*S_f) x (G*S_f) x C
  std::vector<PatchProvenance> provenance;
  int64_t grid = 0;
  int64_t patch = 0;
};

// Lossless fragments: the frame plane is split into a G x G grid of equal
// cells (remainder pixels go to the last row/column of cells); one S_f x S_f
// window per cell, chosen uniformly at random, reused across all T_c
// consecutive frames. Windows are tiled into a (G*S_f)^2 mosaic in grid order.
template <class T>
FragmentMosaic<T> sample_fragments(const VideoClip<T>& video, int64_t grid, int64_t patch,
                                   int64_t t_c, int64_t start, RngStream& rng) {
  require_input(grid >= 1 && patch >= 1, "sample_fragments: grid and patch must be positive");
  require_input(t_c >= 1, "sample_fragments: t_c must be >= 1");
  require_input(start >= 0 && start + t_c <= video.t(), "sample_fragments: start out of range");
  const int64_t H = video.h(), W = video.w(), C = video.c();
  const int64_t cell_h = H / grid, cell_w = W / grid;
  require_input(cell_h >= patch && cell_w >= patch,
                "sample_fragments: every grid cell must contain at least one patch window");
  // window offsets per cell, shared by all frames of this mosaic
  std::vector<int64_t> off_y(grid * grid), off_x(grid * grid);
  for (int64_t gy = 0; gy < grid; ++gy)
    for (int64_t gx = 0; gx < grid; ++gx) {
      const int64_t y0 = gy * cell_h;
      const int64_t y1 = (gy == grid - 1) ? H : (gy + 1) * cell_h;  // remainder to last cells
      const int64_t x0 = gx * cell_w;
      const int64_t x1 = (gx == grid - 1) ? W : (gx + 1) * cell_w;
      off_y[gy * grid + gx] = y0 + rng.uniform_int(0, (y1 - y0) - patch);
      off_x[gy * grid + gx] = x0 + rng.uniform_int(0, (x1 - x0) - patch);
    }
  const int64_t side = grid * patch;
  FragmentMosaic<T> mosaic;
  mosaic.grid = grid;
  mosaic.patch = patch;
  mosaic.clip = VideoClip<T>(Tensor<T>({t_c, side, side, C}), video.source_id);
  mosaic.provenance.reserve(t_c * grid * grid);
  for (int64_t t = 0; t < t_c; ++t) {
    const int64_t src_t = start + t;
    for (int64_t gy = 0; gy < grid; ++gy)
      for (int64_t gx = 0; gx < grid; ++gx) {
        const int64_t sy = off_y[gy * grid + gx], sx = off_x[gy * grid + gx];
        mosaic.provenance.push_back({t, gy, gx, src_t, sy, sx});
        for (int64_t py = 0; py < patch; ++py) {
          const T* src = video.frames.ptr() + (((src_t * H + sy + py) * W + sx) * C);
          T* dst = mosaic.clip.frames.ptr() +
                   (((t * side + gy * patch + py) * side + gx * patch) * C);
          std::copy(src, src + patch * C, dst);
        }
      }
  }
  return mosaic;
}

// Replays provenance: true iff every mosaic pixel equals its source pixel bit
// for bit.
template <class T>
bool verify_fragments(const FragmentMosaic<T>& m, const VideoClip<T>& video) {
  const int64_t C = video.c(), W = video.w(), H = video.h();
  const int64_t side = m.grid * m.patch;
  for (const PatchProvenance& p : m.provenance)
    for (int64_t py = 0; py < m.patch; ++py)
      for (int64_t px = 0; px < m.patch; ++px)
        for (int64_t c = 0; c < C; ++c) {
          T got = m.clip.frames[(((p.t * side + p.gy * m.patch + py) * side + p.gx * m.patch + px) * C + c)];
          T want = video.frames[(((p.frame_index * H + p.src_y + py) * W + p.src_x + px) * C + c)];
          if (got != want) return false;
        }
  return true;
}

template <class T>
nlohmann::json provenance_json(const FragmentMosaic<T>& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (const PatchProvenance& p : m.provenance) {
    arr.push_back({{"t", p.t},
                   {"gy", p.gy},
                   {"gx", p.gx},
                   {"frame_index", p.frame_index},
                   {"src_y", p.src_y},
                   {"src_x", p.src_x}});
  }
  return nlohmann::json{{"grid", m.grid}, {"patch", m.patch}, {"patches", arr}};
}

// Inference-time fragment starts: first, centered, last.
inline std::vector<int64_t> inference_fragment_starts(int64_t t_video, int64_t t_c) {
  if (t_video <= t_c) return {0};
  std::vector<int64_t> starts{0, (t_video - t_c) / 2, t_video - t_c};
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
  return starts;
}

}  // namespace eyesim

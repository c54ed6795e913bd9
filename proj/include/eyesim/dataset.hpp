#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "eyesim/degrade.hpp"

namespace eyesim {

// Ground-truth label from the declared severity mapping.
inline double mos_of(double severity) { return 1.0 + 4.0 * (1.0 - severity); }

struct GenConfig {
  int64_t n_clips = 10;
  int64_t frames = 16;
  int64_t h = 64;
  int64_t w = 64;
  uint64_t seed = 7;
  double split_ratio = 0.8;
  std::vector<DegKind> kinds = all_deg_kinds();
  bool stack = false;  // apply a second degradation; combined severity 1-(1-s1)(1-s2)
};

inline nlohmann::json gen_config_json(const GenConfig& g) {
  std::vector<std::string> kinds;
  for (DegKind k : g.kinds) kinds.push_back(deg_kind_name(k));
  return nlohmann::json{{"n_clips", g.n_clips}, {"frames", g.frames},      {"h", g.h},
                        {"w", g.w},             {"seed", g.seed},          {"split_ratio", g.split_ratio},
                        {"kinds", kinds},       {"stack", g.stack}};
}

inline GenConfig gen_config_from_json(const nlohmann::json& j) {
  GenConfig g;
  g.n_clips = j.at("n_clips").get<int64_t>();
  g.frames = j.at("frames").get<int64_t>();
  g.h = j.at("h").get<int64_t>();
  g.w = j.at("w").get<int64_t>();
  g.seed = j.at("seed").get<uint64_t>();
  g.split_ratio = j.at("split_ratio").get<double>();
  g.kinds.clear();
  for (const auto& k : j.at("kinds")) g.kinds.push_back(deg_kind_from_name(k.get<std::string>()));
  g.stack = j.value("stack", false);
  return g;
}

namespace detail {

struct MovingShape {
  bool ellipse;
  double cx, cy, sx, sy;   // center, half extents
  double vx, vy;           // velocity px/frame
  double r, g, b;
  double tex_amp, tex_fx, tex_fy, tex_phase;
};

// triangle-wave reflection keeps centers inside [lo, hi]
inline double bounce(double v, double lo, double hi) {
  const double span = hi - lo;
  double u = std::fmod(v - lo, 2.0 * span);
  if (u < 0) u += 2.0 * span;
  return lo + (u <= span ? u : 2.0 * span - u);
}

}  // namespace detail

// Procedural clean content: a smooth two-color gradient with a low-frequency
// sinusoid, a handful of textured moving shapes, and a global pan. Everything
// is a pure function of (seed, clip_index).
template <class T>
VideoClip<T> gen_clean_clip(const GenConfig& cfg, int64_t clip_index) {
  RngStream rng = stream_for(cfg.seed, static_cast<uint64_t>(clip_index), RngOp::kCleanClip);
  const int64_t Tn = cfg.frames, H = cfg.h, W = cfg.w;
  const double c0r = rng.uniform(0.1, 0.9), c0g = rng.uniform(0.1, 0.9), c0b = rng.uniform(0.1, 0.9);
  const double c1r = rng.uniform(0.1, 0.9), c1g = rng.uniform(0.1, 0.9), c1b = rng.uniform(0.1, 0.9);
  const double gang = rng.uniform(0.0, 2 * 3.14159265358979323846);
  const double gx = std::cos(gang) / static_cast<double>(W), gy = std::sin(gang) / static_cast<double>(H);
  const double amp = rng.uniform(0.03, 0.08);
  const double sfx = rng.uniform(0.5, 2.0) / static_cast<double>(W);
  const double sfy = rng.uniform(0.5, 2.0) / static_cast<double>(H);
  const double pan_x = rng.uniform(-1.5, 1.5), pan_y = rng.uniform(-1.5, 1.5);
  const int64_t n_shapes = rng.uniform_int(2, 4);
  std::vector<detail::MovingShape> shapes;
  for (int64_t i = 0; i < n_shapes; ++i) {
    detail::MovingShape s;
    s.ellipse = rng.uniform() < 0.5;
    s.cx = rng.uniform(0.15, 0.85) * static_cast<double>(W);
    s.cy = rng.uniform(0.15, 0.85) * static_cast<double>(H);
    s.sx = rng.uniform(0.08, 0.2) * static_cast<double>(W);
    s.sy = rng.uniform(0.08, 0.2) * static_cast<double>(H);
    s.vx = rng.uniform(-2.0, 2.0);
    s.vy = rng.uniform(-2.0, 2.0);
    s.r = rng.uniform(0.05, 0.95);
    s.g = rng.uniform(0.05, 0.95);
    s.b = rng.uniform(0.05, 0.95);
    s.tex_amp = rng.uniform(0.05, 0.15);
    s.tex_fx = rng.uniform(1.0, 3.0) / s.sx;
    s.tex_fy = rng.uniform(1.0, 3.0) / s.sy;
    s.tex_phase = rng.uniform(0.0, 2 * 3.14159265358979323846);
    shapes.push_back(s);
  }
  Tensor<T> frames({Tn, H, W, 3});
  const double twopi = 2 * 3.14159265358979323846;
  for (int64_t t = 0; t < Tn; ++t) {
    const double ox = pan_x * static_cast<double>(t), oy = pan_y * static_cast<double>(t);
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        const double wx = static_cast<double>(x) + ox, wy = static_cast<double>(y) + oy;
        double a = 0.5 + 0.5 * std::sin(twopi * (gx * wx + gy * wy));
        double wave = amp * std::sin(twopi * (sfx * wx + sfy * wy));
        double r = c0r + (c1r - c0r) * a + wave;
        double g = c0g + (c1g - c0g) * a + wave;
        double b = c0b + (c1b - c0b) * a + wave;
        for (const auto& s : shapes) {
          const double scx = detail::bounce(s.cx + s.vx * static_cast<double>(t) - ox, s.sx, static_cast<double>(W) - s.sx);
          const double scy = detail::bounce(s.cy + s.vy * static_cast<double>(t) - oy, s.sy, static_cast<double>(H) - s.sy);
          const double dx = (static_cast<double>(x) - scx) / s.sx;
          const double dy = (static_cast<double>(y) - scy) / s.sy;
          const double d = s.ellipse ? std::sqrt(dx * dx + dy * dy) : std::max(std::abs(dx), std::abs(dy));
          // soft edge roughly 1.5 px wide
          const double edge = 1.5 / std::min(s.sx, s.sy);
          const double alpha = std::clamp((1.0 - d) / edge, 0.0, 1.0);
          if (alpha > 0) {
            const double tex = 1.0 + s.tex_amp * std::sin(twopi * (s.tex_fx * dx + s.tex_fy * dy) + s.tex_phase);
            r += alpha * (s.r * tex - r);
            g += alpha * (s.g * tex - g);
            b += alpha * (s.b * tex - b);
          }
        }
        frames[((t * H + y) * W + x) * 3 + 0] = static_cast<T>(std::clamp(r, 0.0, 1.0));
        frames[((t * H + y) * W + x) * 3 + 1] = static_cast<T>(std::clamp(g, 0.0, 1.0));
        frames[((t * H + y) * W + x) * 3 + 2] = static_cast<T>(std::clamp(b, 0.0, 1.0));
      }
  }
  std::ostringstream id;
  id << "clip_" << std::setw(5) << std::setfill('0') << clip_index;
  VideoClip<T> clip(std::move(frames), id.str());
  clip.fps = std::make_pair(30, 1);
  return clip;
}

struct ManifestRecord {
  std::string clip_path;
  std::string clip_id;
  DegradationSpec spec;
  std::optional<DegradationSpec> spec2;  // only in stacked mode
  double mos = 0.0;
  std::string split;  // "train" | "test"
};

struct DatasetManifest {
  int format_version = kManifestFormatVersion;
  std::string tool_version = kToolVersion;
  uint64_t seed = 0;
  std::string config_hash;
  GenConfig gen;
  std::vector<ManifestRecord> records;

  std::vector<const ManifestRecord*> split_records(const std::string& split) const {
    std::vector<const ManifestRecord*> out;
    for (const auto& r : records)
      if (r.split == split) out.push_back(&r);
    return out;
  }
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : m.records) {
    nlohmann::json jr{{"clip_path", r.clip_path}, {"clip_id", r.clip_id},
                      {"spec", spec_to_json(r.spec)}, {"mos", r.mos}, {"split", r.split}};
    if (r.spec2) jr["spec2"] = spec_to_json(*r.spec2);
    recs.push_back(jr);
  }
  return nlohmann::json{{"format_version", m.format_version},
                        {"tool_version", m.tool_version},
                        {"seed", m.seed},
                        {"config_hash", m.config_hash},
                        {"generator", gen_config_json(m.gen)},
                        {"records", recs}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.format_version = j.at("format_version").get<int>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.seed = j.at("seed").get<uint64_t>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.gen = gen_config_from_json(j.at("generator"));
  for (const auto& jr : j.at("records")) {
    ManifestRecord r;
    r.clip_path = jr.at("clip_path").get<std::string>();
    r.clip_id = jr.at("clip_id").get<std::string>();
    r.spec = spec_from_json(jr.at("spec"));
    if (jr.contains("spec2")) r.spec2 = spec_from_json(jr.at("spec2"));
    r.mos = jr.at("mos").get<double>();
    r.split = jr.at("split").get<std::string>();
    m.records.push_back(std::move(r));
  }
  return m;
}

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw IoError(std::string("bad manifest json: ") + e.what());
  }
  return manifest_from_json(j);
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << content;
  if (!f) throw IoError("write failed: " + path);
}

// Regenerate the degraded clip of one record without touching the filesystem.
template <class T>
VideoClip<T> regenerate_degraded(const GenConfig& gen, const ManifestRecord& r) {
  VideoClip<T> clean = gen_clean_clip<T>(gen, r.spec.clip_index);
  VideoClip<T> out = apply_degradation(clean, r.spec);
  if (r.spec2) out = apply_degradation(out, *r.spec2);
  return out;
}

// Writes degraded clips plus manifest.json under out_dir. Deterministic for a
// given config: reruns produce byte-identical trees.
template <class T>
DatasetManifest generate_dataset(const GenConfig& cfg, const std::string& out_dir) {
  require_input(cfg.n_clips >= 2, "generate_dataset: need at least 2 clips");
  require_input(!cfg.kinds.empty(), "generate_dataset: kind list must be non-empty");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "clips", ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir);
  DatasetManifest m;
  m.seed = cfg.seed;
  m.gen = cfg;
  m.config_hash = hex64(fnv1a64(gen_config_json(cfg).dump()));
  const int64_t n_train = static_cast<int64_t>(std::floor(cfg.split_ratio * static_cast<double>(cfg.n_clips)));
  for (int64_t i = 0; i < cfg.n_clips; ++i) {
    VideoClip<T> clean = gen_clean_clip<T>(cfg, i);
    RngStream srng = stream_for(cfg.seed, static_cast<uint64_t>(i), RngOp::kSpecSample);
    ManifestRecord r;
    r.spec = sample_spec(srng, cfg.kinds);
    r.spec.global_seed = cfg.seed;
    r.spec.clip_index = i;
    double severity = r.spec.severity;
    VideoClip<T> degraded = apply_degradation(clean, r.spec);
    if (cfg.stack) {
      DegradationSpec s2 = sample_spec(srng, cfg.kinds);
      s2.global_seed = derive_key(cfg.seed, 1);
      s2.clip_index = i;
      degraded = apply_degradation(degraded, s2);
      severity = 1.0 - (1.0 - severity) * (1.0 - s2.severity);
      r.spec2 = s2;
    }
    r.clip_id = clean.source_id;
    r.clip_path = "clips/" + r.clip_id + ".evid";
    r.mos = mos_of(severity);
    r.split = i < n_train ? "train" : "test";
    save_evid((fs::path(out_dir) / r.clip_path).string(), degraded);
    m.records.push_back(std::move(r));
  }
  write_text_file((fs::path(out_dir) / "manifest.json").string(), manifest_to_json(m).dump(2) + "\n");
  return m;
}

}  // namespace eyesim

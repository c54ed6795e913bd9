#pragma once

#include <ctime>
#include <filesystem>
#include <optional>

#include "eyesim/dataset.hpp"
#include "eyesim/enhance.hpp"
#include "eyesim/eval.hpp"
#include "eyesim/losses.hpp"
#include "eyesim/model.hpp"

namespace eyesim {

// ---- configuration ------------------------------------------------------------

struct ViewCfg {
  int64_t aes_frames = 32;
  int64_t aes_h = 224, aes_w = 224;
  int64_t grid = 7, patch = 32, clip_len = 32;
  int64_t n_concat_aes = 10, n_concat_tech = 10;
  AssembleMode mode = AssembleMode::kAppend;
};

struct VqaModelCfg {
  ViewCfg views;
  BackboneCfg backbone;
  CleanNetCfg cleannet;
  VsrMiniCfg vsr;
  bool enhancers_enabled = true;

  HeadCfg head() const { return HeadCfg{backbone.channels, ActKind::kGelu}; }
};

inline nlohmann::json view_cfg_json(const ViewCfg& v) {
  return {{"aes_frames", v.aes_frames}, {"aes_h", v.aes_h},
          {"aes_w", v.aes_w},           {"grid", v.grid},
          {"patch", v.patch},           {"clip_len", v.clip_len},
          {"n_concat_aes", v.n_concat_aes}, {"n_concat_tech", v.n_concat_tech},
          {"mode", v.mode == AssembleMode::kAppend ? "append" : "replace"}};
}

inline ViewCfg view_cfg_from_json(const nlohmann::json& j) {
  ViewCfg v;
  v.aes_frames = j.at("aes_frames").get<int64_t>();
  v.aes_h = j.at("aes_h").get<int64_t>();
  v.aes_w = j.at("aes_w").get<int64_t>();
  v.grid = j.at("grid").get<int64_t>();
  v.patch = j.at("patch").get<int64_t>();
  v.clip_len = j.at("clip_len").get<int64_t>();
  v.n_concat_aes = j.at("n_concat_aes").get<int64_t>();
  v.n_concat_tech = j.at("n_concat_tech").get<int64_t>();
  v.mode = j.at("mode").get<std::string>() == "replace" ? AssembleMode::kReplace
                                                        : AssembleMode::kAppend;
  return v;
}

inline nlohmann::json model_cfg_json(const VqaModelCfg& m) {
  return {{"views", view_cfg_json(m.views)},
          {"backbone", {{"channels", m.backbone.channels}, {"blocks", m.backbone.blocks},
                        {"act", act_name(m.backbone.act)}}},
          {"cleannet", {{"channels", m.cleannet.blocks.channels},
                        {"n_blocks", m.cleannet.blocks.n_blocks},
                        {"act", act_name(m.cleannet.blocks.act)},
                        {"loops", m.cleannet.loops}}},
          {"vsr", {{"channels", m.vsr.blocks.channels}, {"n_blocks", m.vsr.blocks.n_blocks},
                   {"act", act_name(m.vsr.blocks.act)}, {"flow_channels", m.vsr.flow.channels}}},
          {"enhancers_enabled", m.enhancers_enabled}};
}

inline VqaModelCfg model_cfg_from_json(const nlohmann::json& j) {
  VqaModelCfg m;
  m.views = view_cfg_from_json(j.at("views"));
  m.backbone.channels = j.at("backbone").at("channels").get<int64_t>();
  m.backbone.blocks = j.at("backbone").at("blocks").get<int64_t>();
  m.backbone.act = act_from_name(j.at("backbone").at("act").get<std::string>());
  m.cleannet.blocks.channels = j.at("cleannet").at("channels").get<int64_t>();
  m.cleannet.blocks.n_blocks = j.at("cleannet").at("n_blocks").get<int64_t>();
  m.cleannet.blocks.act = act_from_name(j.at("cleannet").at("act").get<std::string>());
  m.cleannet.loops = j.at("cleannet").at("loops").get<int64_t>();
  m.vsr.blocks.channels = j.at("vsr").at("channels").get<int64_t>();
  m.vsr.blocks.n_blocks = j.at("vsr").at("n_blocks").get<int64_t>();
  m.vsr.blocks.act = act_from_name(j.at("vsr").at("act").get<std::string>());
  m.vsr.flow.channels = j.at("vsr").at("flow_channels").get<int64_t>();
  m.enhancers_enabled = j.at("enhancers_enabled").get<bool>();
  return m;
}

// desk-scale defaults for 64x64x16 synthetic clips
inline VqaModelCfg desk_model_cfg() {
  VqaModelCfg m;
  m.views.aes_frames = 8;
  m.views.aes_h = 32;
  m.views.aes_w = 32;
  m.views.grid = 4;
  m.views.patch = 8;
  m.views.clip_len = 8;
  m.views.n_concat_aes = 3;
  m.views.n_concat_tech = 3;
  m.backbone.channels = 16;
  return m;
}

// ---- model bundle -------------------------------------------------------------

template <class T>
struct VqaModel {
  VqaModelCfg cfg;
  ParamStore<T> params;               // backbone.* / head.* / fusion.*
  ParamStore<T> enhancer_aesthetic;   // vsr-mini
  ParamStore<T> enhancer_technical;   // cleannet
};

template <class T>
VqaModel<T> init_vqa_model(const VqaModelCfg& cfg, uint64_t seed) {
  VqaModel<T> m;
  m.cfg = cfg;
  RngStream rng = stream_for(seed, 0, RngOp::kInit);
  init_backbone(m.params, "backbone.aesthetic", cfg.backbone, rng);
  init_backbone(m.params, "backbone.technical", cfg.backbone, rng);
  init_head(m.params, "head.aesthetic", cfg.head(), rng);
  init_head(m.params, "head.technical", cfg.head(), rng);
  init_fusion(m.params, "fusion");
  init_vsrmini(m.enhancer_aesthetic, "enhancer.aesthetic", cfg.vsr, rng);
  init_cleannet(m.enhancer_technical, "enhancer.technical", cfg.cleannet, rng);
  return m;
}

// ---- view building -------------------------------------------------------------

template <class T>
VideoClip<T> build_aesthetic_view(const VideoClip<T>& clip, const ViewCfg& v) {
  return sample_aesthetic(clip, v.aes_frames, v.aes_h, v.aes_w);
}

template <class T>
VideoClip<T> build_technical_view(const VideoClip<T>& clip, const ViewCfg& v, int64_t start,
                                  RngStream& rng) {
  return sample_fragments(clip, v.grid, v.patch, std::min(v.clip_len, clip.t()), start, rng).clip;
}

enum class Branch { kAesthetic, kTechnical };

inline const char* branch_name(Branch b) {
  return b == Branch::kAesthetic ? "aesthetic" : "technical";
}

template <class T>
VideoClip<T> enhance_view(const VideoClip<T>& view, const VqaModel<T>& model, Branch b) {
  if (b == Branch::kAesthetic)
    return vsrmini_forward(view, model.enhancer_aesthetic, "enhancer.aesthetic", model.cfg.vsr);
  return cleannet_forward(view, model.enhancer_technical, "enhancer.technical", model.cfg.cleannet,
                          model.cfg.cleannet.loops);
}

template <class T>
VideoClip<T> build_branch_input(const VideoClip<T>& view, const VqaModel<T>& model, Branch b) {
  if (!model.cfg.enhancers_enabled) return view;
  VideoClip<T> enhanced = enhance_view(view, model, b);
  const int64_t n = b == Branch::kAesthetic ? model.cfg.views.n_concat_aes
                                             : model.cfg.views.n_concat_tech;
  return assemble_input(view, enhanced, std::min<int64_t>(n, enhanced.t()), model.cfg.views.mode);
}

// ---- scoring -------------------------------------------------------------------

struct ClipDiagnostics {
  HeadDiagnostics aesthetic, technical;
  double fusion_lambda = 0.5;
};

template <class T>
double branch_score(const VqaModel<T>& model, const VideoClip<T>& assembled, Branch b,
                    HeadDiagnostics* diag) {
  Tape<T> tp;
  VarPack<T> pk(tp, model.params, [](const std::string&) { return false; });
  Var x = tp.leaf(clip_to_bcthw(assembled));
  Var feat = backbone_forward(pk, std::string("backbone.") + branch_name(b), x, model.cfg.backbone);
  Var s = head_forward(pk, std::string("head.") + branch_name(b), feat, model.cfg.head(), diag);
  return static_cast<double>(tp.val(s)[0]);
}

// Full evaluation path: one aesthetic pass; the technical branch averages
// three fragment clips (first, centered, last start).
template <class T>
double score_clip(const VqaModel<T>& model, const VideoClip<T>& clip, uint64_t view_seed,
                  int64_t clip_index, double* s_aesthetic = nullptr, double* s_technical = nullptr,
                  ClipDiagnostics* diag = nullptr) {
  const ViewCfg& v = model.cfg.views;
  VideoClip<T> aes = build_aesthetic_view(clip, v);
  double sa = branch_score(model, build_branch_input(aes, model, Branch::kAesthetic),
                           Branch::kAesthetic, diag ? &diag->aesthetic : nullptr);
  double st_acc = 0;
  const auto starts = inference_fragment_starts(clip.t(), std::min(v.clip_len, clip.t()));
  for (size_t si = 0; si < starts.size(); ++si) {
    RngStream rng = stream_for(view_seed, static_cast<uint64_t>(clip_index * 8 + static_cast<int64_t>(si)),
                               RngOp::kFragment);
    VideoClip<T> tech = build_technical_view(clip, v, starts[si], rng);
    st_acc += branch_score(model, build_branch_input(tech, model, Branch::kTechnical),
                           Branch::kTechnical,
                           diag && si == 0 ? &diag->technical : nullptr);
  }
  const double st = st_acc / static_cast<double>(starts.size());
  // fusion
  Tape<T> tp;
  VarPack<T> pk(tp, model.params, [](const std::string&) { return false; });
  double lambda = 0.5;
  Var mos = fuse_branches(pk, "fusion", tp.leaf(Tensor<T>::scalar(static_cast<T>(sa))),
                          tp.leaf(Tensor<T>::scalar(static_cast<T>(st))), &lambda);
  if (s_aesthetic) *s_aesthetic = sa;
  if (s_technical) *s_technical = st;
  if (diag) diag->fusion_lambda = lambda;
  return static_cast<double>(tp.val(mos)[0]);
}

// ---- checkpoint bundle -----------------------------------------------------------

template <class T>
void save_vqa_model(const std::string& dir, const VqaModel<T>& model, uint64_t seed,
                    const std::string& config_hash) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create model directory: " + dir);
  save_eysm((fs::path(dir) / "vqa.eysm").string(), model.params);
  save_eysm((fs::path(dir) / "enhancer_aesthetic.eysm").string(), model.enhancer_aesthetic);
  save_eysm((fs::path(dir) / "enhancer_technical.eysm").string(), model.enhancer_technical);
  nlohmann::json meta{{"format_version", 1},
                      {"tool_version", kToolVersion},
                      {"seed", seed},
                      {"config_hash", config_hash},
                      {"kind", "vqa"},
                      {"model_cfg", model_cfg_json(model.cfg)}};
  write_text_file((fs::path(dir) / "model.json").string(), meta.dump(2) + "\n");
}

template <class T>
VqaModel<T> load_vqa_model(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string meta_path = (fs::path(dir) / "model.json").string();
  std::ifstream f(meta_path);
  if (!f) throw IoError("cannot open model metadata: " + meta_path);
  nlohmann::json meta;
  try {
    f >> meta;
  } catch (const std::exception& e) {
    throw IoError(std::string("bad model metadata: ") + e.what());
  }
  VqaModel<T> m;
  m.cfg = model_cfg_from_json(meta.at("model_cfg"));
  m.params = load_eysm<T>((fs::path(dir) / "vqa.eysm").string());
  m.enhancer_aesthetic = load_eysm<T>((fs::path(dir) / "enhancer_aesthetic.eysm").string());
  m.enhancer_technical = load_eysm<T>((fs::path(dir) / "enhancer_technical.eysm").string());
  return m;
}

// ---- ranking pairs ----------------------------------------------------------------

// inverse of the severity mapping: realized params (after rounding to valid
// values) are re-measured so the recorded severity stays exact
inline DegradationSpec spec_from_severity(DegKind kind, double severity, RngStream& rng) {
  DegradationSpec s;
  s.kind = kind;
  switch (kind) {
    case DegKind::kGaussianNoise:
      s.params["sigma"] = DegRanges::sigma_lo + severity * (DegRanges::sigma_hi - DegRanges::sigma_lo);
      break;
    case DegKind::kMotionBlur:
      s.params["kernel_len"] = std::round(static_cast<double>(DegRanges::blur_len_lo) +
                                          severity * (DegRanges::blur_len_hi - DegRanges::blur_len_lo));
      s.params["angle"] = rng.uniform(0.0, 3.14159265358979323846);
      break;
    case DegKind::kJpegLike:
      s.params["quality"] = DegRanges::quality_hi - severity * (DegRanges::quality_hi - DegRanges::quality_lo);
      break;
    case DegKind::kSaltPepper:
      s.params["density"] = DegRanges::density_lo + severity * (DegRanges::density_hi - DegRanges::density_lo);
      break;
    case DegKind::kMeanBlur:
      s.params["kernel_size"] = 3.0 + 2.0 * std::round(2.0 * severity);
      break;
  }
  s.severity = severity_of(kind, s.params);
  return s;
}

template <class T>
struct PairCorpus {
  std::vector<RankPair> pairs;
  // id -> (clip, mos); clips generated on the fly from the manifest's seed
  std::map<std::string, std::pair<VideoClip<T>, double>> clips;
};

// Homogeneous: same clean source, same kind, two severities; non-homogeneous:
// two different clean sources. A minimum MOS gap keeps the ground-truth order
// well defined at desk scale.
template <class T>
PairCorpus<T> build_ranking_pairs(const DatasetManifest& manifest, int64_t n_homogeneous,
                                  int64_t n_non_homogeneous, uint64_t seed,
                                  double min_mos_gap = 0.5) {
  auto test_records = manifest.split_records("test");
  require_input(test_records.size() >= 2, "build_ranking_pairs: need at least 2 test clips");
  RngStream rng = stream_for(seed, 0, RngOp::kPairs);
  PairCorpus<T> corpus;
  auto add_clip = [&](const std::string& id, int64_t clip_index, const DegradationSpec& spec_in,
                      uint64_t stream_seed) {
    DegradationSpec spec = spec_in;
    spec.global_seed = stream_seed;
    spec.clip_index = clip_index;
    VideoClip<T> clean = gen_clean_clip<T>(manifest.gen, clip_index);
    corpus.clips.emplace(id, std::make_pair(apply_degradation(clean, spec), mos_of(spec.severity)));
  };
  const auto& kinds = manifest.gen.kinds;
  for (int64_t i = 0; i < n_homogeneous; ++i) {
    const auto* rec = test_records[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(test_records.size()) - 1))];
    DegKind kind = kinds[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(kinds.size()) - 1))];
    // two severities with a guaranteed gap
    double s_lo, s_hi;
    DegradationSpec a, b;
    do {
      s_lo = rng.uniform(0.0, 1.0);
      s_hi = rng.uniform(0.0, 1.0);
      if (s_lo > s_hi) std::swap(s_lo, s_hi);
      a = spec_from_severity(kind, s_lo, rng);
      b = spec_from_severity(kind, s_hi, rng);
    } while (mos_of(a.severity) - mos_of(b.severity) < min_mos_gap);
    const std::string ida = "pair_h" + std::to_string(i) + "_a";
    const std::string idb = "pair_h" + std::to_string(i) + "_b";
    add_clip(ida, rec->spec.clip_index, a, derive_key(seed, static_cast<uint64_t>(i), 1));
    add_clip(idb, rec->spec.clip_index, b, derive_key(seed, static_cast<uint64_t>(i), 2));
    corpus.pairs.push_back({ida, idb, +1, true});  // lower severity = higher mos
  }
  for (int64_t i = 0; i < n_non_homogeneous; ++i) {
    size_t ra = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(test_records.size()) - 1));
    size_t rb;
    do {
      rb = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(test_records.size()) - 1));
    } while (rb == ra);
    DegradationSpec a, b;
    do {
      DegKind ka = kinds[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(kinds.size()) - 1))];
      DegKind kb = kinds[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(kinds.size()) - 1))];
      a = spec_from_severity(ka, rng.uniform(0.0, 1.0), rng);
      b = spec_from_severity(kb, rng.uniform(0.0, 1.0), rng);
    } while (std::abs(mos_of(a.severity) - mos_of(b.severity)) < min_mos_gap);
    const std::string ida = "pair_n" + std::to_string(i) + "_a";
    const std::string idb = "pair_n" + std::to_string(i) + "_b";
    add_clip(ida, test_records[ra]->spec.clip_index, a, derive_key(seed, static_cast<uint64_t>(i), 3));
    add_clip(idb, test_records[rb]->spec.clip_index, b, derive_key(seed, static_cast<uint64_t>(i), 4));
    corpus.pairs.push_back(
        {ida, idb, mos_of(a.severity) > mos_of(b.severity) ? +1 : -1, false});
  }
  return corpus;
}

// ---- report -------------------------------------------------------------------------

struct ReportOptions {
  int64_t n_homogeneous_pairs = 50;
  int64_t n_non_homogeneous_pairs = 50;
  bool plcc_logistic = false;
  bool write_csv = false;
  bool include_timestamp = true;
};

template <class T>
nlohmann::json run_report(const DatasetManifest& manifest, const std::string& data_dir,
                          const VqaModel<T>& model, const std::string& out_path,
                          const ReportOptions& opts = {}) {
  namespace fs = std::filesystem;
  auto test_records = manifest.split_records("test");
  require_input(!test_records.empty(), "run_report: empty test split");
  nlohmann::json records = nlohmann::json::array();
  std::vector<double> mos_gt, fused;
  for (const auto* rec : test_records) {
    const std::string clip_path = (fs::path(data_dir) / rec->clip_path).string();
    VideoClip<T> clip = load_evid<T>(clip_path);
    double sa = 0, st = 0;
    ClipDiagnostics diag;
    double score = score_clip(model, clip, manifest.seed, rec->spec.clip_index, &sa, &st, &diag);
    mos_gt.push_back(rec->mos);
    fused.push_back(score);
    records.push_back(
        {{"clip_id", rec->clip_id},
         {"mos_gt", rec->mos},
         {"score_aesthetic", sa},
         {"score_technical", st},
         {"score_fused", score},
         {"diagnostics",
          {{"aesthetic",
            {{"s_gaze", diag.aesthetic.s_gaze}, {"s_scan", diag.aesthetic.s_scan},
             {"gate", diag.aesthetic.gate}, {"gate_channels", diag.aesthetic.gate_channels}}},
           {"technical",
            {{"s_gaze", diag.technical.s_gaze}, {"s_scan", diag.technical.s_scan},
             {"gate", diag.technical.gate}, {"gate_channels", diag.technical.gate_channels}}},
           {"fusion_lambda", diag.fusion_lambda}}}});
  }
  const double rho = srocc(fused, mos_gt);
  const double r = plcc(fused, mos_gt);
  std::optional<double> r_logistic;
  if (opts.plcc_logistic) r_logistic = plcc(fused, mos_gt, true);
  // ranking pairs on freshly generated degraded variants of the test sources
  PairCorpus<T> corpus = build_ranking_pairs<T>(manifest, opts.n_homogeneous_pairs,
                                                opts.n_non_homogeneous_pairs, manifest.seed);
  std::map<std::string, double> pair_scores;
  int64_t pair_index = 0;
  for (const auto& [id, entry] : corpus.clips) {
    pair_scores[id] = score_clip(model, entry.first, derive_key(manifest.seed, 99), pair_index++);
  }
  RankingAccuracy acc = ranking_accuracy(corpus.pairs, pair_scores);

  nlohmann::json report{
      {"format_version", kReportFormatVersion},
      {"tool_version", kToolVersion},
      {"seed", manifest.seed},
      {"config_fingerprint", manifest.config_hash},
      {"tie_conventions", {{"srocc", "average_ranks"}, {"ranking_pairs", "half_credit"}}},
      {"metrics",
       {{"srocc", rho},
        {"plcc", r},
        {"plcc_logistic", r_logistic ? nlohmann::json(*r_logistic) : nlohmann::json()},
        {"ranking",
         {{"all", acc.all},
          {"homogeneous", acc.homogeneous},
          {"non_homogeneous", acc.non_homogeneous},
          {"n_homogeneous", acc.n_homogeneous},
          {"n_non_homogeneous", acc.n_non_homogeneous}}}}},
      {"records", records}};
  if (opts.include_timestamp) {
    report["timestamp"] = static_cast<int64_t>(std::time(nullptr));
  }
  if (!out_path.empty()) {
    write_text_file(out_path, report.dump(2) + "\n");
    if (opts.write_csv) {
      std::string csv = "clip_id,mos_gt,score_aesthetic,score_technical,score_fused\n";
      for (const auto& rec : records) {
        csv += rec.at("clip_id").get<std::string>() + "," +
               std::to_string(rec.at("mos_gt").get<double>()) + "," +
               std::to_string(rec.at("score_aesthetic").get<double>()) + "," +
               std::to_string(rec.at("score_technical").get<double>()) + "," +
               std::to_string(rec.at("score_fused").get<double>()) + "\n";
      }
      write_text_file(out_path + ".csv", csv);
    }
  }
  return report;
}

}  // namespace eyesim

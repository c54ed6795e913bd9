#pragma once

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "eyesim/gradsuite.hpp"
#include "eyesim/refcheck.hpp"
#include "eyesim/train.hpp"

namespace eyesim {

// exit codes: 0 success, 1 validation/configuration failure, 2 numeric failure
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumeric = 2;

namespace cli_detail {

inline uint64_t env_seed(uint64_t fallback) {
  if (const char* s = std::getenv("EYESIM_SEED")) {
    try {
      return std::stoull(s);
    } catch (...) {
      throw ConfigError("EYESIM_SEED is not a number");
    }
  }
  return fallback;
}

// config file overlay: defaults < config json < flags
inline nlohmann::json load_config_overlay(const std::vector<std::string>& args) {
  for (size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--config") {
      std::ifstream f(args[i + 1]);
      if (!f) throw ConfigError("cannot open config file: " + args[i + 1]);
      try {
        nlohmann::json j;
        f >> j;
        return j;
      } catch (const std::exception& e) {
        throw ConfigError(std::string("bad config json: ") + e.what());
      }
    }
  }
  return nlohmann::json::object();
}

template <class T>
T overlay(const nlohmann::json& j, const std::string& key, T def) {
  return j.contains(key) ? j.at(key).get<T>() : def;
}

inline void echo_config(const std::string& cmd, const nlohmann::json& cfg) {
  nlohmann::json out{{"command", cmd},
                     {"tool_version", kToolVersion},
                     {"config", cfg},
                     {"config_hash", hex64(fnv1a64(cfg.dump()))}};
  std::cout << out.dump(2) << "\n";
}

inline void write_run_config(const std::string& out_dir, const std::string& cmd,
                             const nlohmann::json& cfg, uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  nlohmann::json j{{"command", cmd},
                   {"tool_version", kToolVersion},
                   {"seed", seed},
                   {"config", cfg},
                   {"config_hash", hex64(fnv1a64(cfg.dump()))}};
  write_text_file((std::filesystem::path(out_dir) / "run_config.json").string(), j.dump(2) + "\n");
}

// model geometry flags shared by pretrain-enhance and train
struct ModelFlags {
  int64_t backbone_channels;
  int64_t aes_frames, aes_h, aes_w;
  int64_t grid, patch, clip_len;
  int64_t n_concat_aes, n_concat_tech;
  std::string assemble_mode;
  int64_t cleannet_loops;

  explicit ModelFlags(const nlohmann::json& j) {
    VqaModelCfg d = desk_model_cfg();
    backbone_channels = overlay<int64_t>(j, "backbone_channels", d.backbone.channels);
    aes_frames = overlay<int64_t>(j, "aes_frames", d.views.aes_frames);
    aes_h = overlay<int64_t>(j, "aes_h", d.views.aes_h);
    aes_w = overlay<int64_t>(j, "aes_w", d.views.aes_w);
    grid = overlay<int64_t>(j, "grid", d.views.grid);
    patch = overlay<int64_t>(j, "patch", d.views.patch);
    clip_len = overlay<int64_t>(j, "clip_len", d.views.clip_len);
    n_concat_aes = overlay<int64_t>(j, "n_concat_aes", d.views.n_concat_aes);
    n_concat_tech = overlay<int64_t>(j, "n_concat_tech", d.views.n_concat_tech);
    assemble_mode = overlay<std::string>(j, "assemble_mode", "append");
    cleannet_loops = overlay<int64_t>(j, "cleannet_loops", d.cleannet.loops);
  }

  void add_to(CLI::App* app) {
    app->add_option("--backbone-channels", backbone_channels, "backbone feature channels");
    app->add_option("--aes-frames", aes_frames, "aesthetic view frame count");
    app->add_option("--aes-h", aes_h, "aesthetic view height");
    app->add_option("--aes-w", aes_w, "aesthetic view width");
    app->add_option("--grid", grid, "fragment grid size");
    app->add_option("--patch", patch, "fragment patch size");
    app->add_option("--clip-len", clip_len, "fragment clip length");
    app->add_option("--n-concat-aes", n_concat_aes, "enhanced frames joined to the aesthetic view");
    app->add_option("--n-concat-tech", n_concat_tech, "enhanced frames joined to the technical view");
    app->add_option("--assemble-mode", assemble_mode, "append|replace")
        ->check(CLI::IsMember({"append", "replace"}));
    app->add_option("--cleannet-loops", cleannet_loops, "cleannet refinement loops");
  }

  VqaModelCfg to_cfg() const {
    VqaModelCfg m = desk_model_cfg();
    m.backbone.channels = backbone_channels;
    m.views.aes_frames = aes_frames;
    m.views.aes_h = aes_h;
    m.views.aes_w = aes_w;
    m.views.grid = grid;
    m.views.patch = patch;
    m.views.clip_len = clip_len;
    m.views.n_concat_aes = n_concat_aes;
    m.views.n_concat_tech = n_concat_tech;
    m.views.mode = assemble_mode == "replace" ? AssembleMode::kReplace : AssembleMode::kAppend;
    m.cleannet.loops = cleannet_loops;
    return m;
  }

  nlohmann::json to_json() const { return model_cfg_json(to_cfg()); }
};

inline void save_enhancer_ckpt(const std::string& out_dir, Branch branch,
                               const ParamStore<float>& params, const VqaModelCfg& mcfg,
                               uint64_t seed, const nlohmann::json& cfg_json) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const std::string base = branch == Branch::kAesthetic ? "enhancer_aesthetic" : "enhancer_technical";
  save_eysm((fs::path(out_dir) / (base + ".eysm")).string(), params);
  nlohmann::json meta{{"format_version", 1},
                      {"tool_version", kToolVersion},
                      {"seed", seed},
                      {"config_hash", hex64(fnv1a64(cfg_json.dump()))},
                      {"kind", branch == Branch::kAesthetic ? "vsrmini" : "cleannet"},
                      {"model_cfg", model_cfg_json(mcfg)}};
  write_text_file((fs::path(out_dir) / (base + ".json")).string(), meta.dump(2) + "\n");
}

inline ParamStore<float> load_enhancer_ckpt(const std::string& dir, Branch branch,
                                            VqaModelCfg* cfg_out = nullptr) {
  namespace fs = std::filesystem;
  const std::string base = branch == Branch::kAesthetic ? "enhancer_aesthetic" : "enhancer_technical";
  const std::string meta_path = (fs::path(dir) / (base + ".json")).string();
  std::ifstream f(meta_path);
  if (!f) throw IoError("cannot open enhancer metadata: " + meta_path);
  nlohmann::json meta;
  f >> meta;
  if (cfg_out) *cfg_out = model_cfg_from_json(meta.at("model_cfg"));
  return load_eysm<float>((fs::path(dir) / (base + ".eysm")).string());
}

}  // namespace cli_detail

inline int dispatch(std::vector<std::string> args) {
  using namespace cli_detail;
  CLI::App app{"eyesim: trainable dual-branch video quality assessment pipeline"};
  app.require_subcommand(1);
  nlohmann::json jc;
  try {
    jc = load_config_overlay(args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  std::string config_path;
  app.add_option("--config", config_path, "json config file overlaying defaults");

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic degraded dataset");
  struct {
    std::string out;
    int64_t clips, frames, h, w;
    uint64_t seed;
    double split;
    std::string kinds;
    bool stack;
  } g{overlay<std::string>(jc, "out", "data"),
      overlay<int64_t>(jc, "clips", 10),
      overlay<int64_t>(jc, "frames", 16),
      overlay<int64_t>(jc, "height", 64),
      overlay<int64_t>(jc, "width", 64),
      overlay<uint64_t>(jc, "seed", 7),
      overlay<double>(jc, "split", 0.8),
      overlay<std::string>(jc, "kinds", "all"),
      overlay<bool>(jc, "stack", false)};
  gen->add_option("--out", g.out, "output directory");
  gen->add_option("--clips", g.clips, "number of clips");
  gen->add_option("--frames", g.frames, "frames per clip");
  gen->add_option("--height", g.h, "frame height");
  gen->add_option("--width", g.w, "frame width");
  gen->add_option("--seed", g.seed, "generator seed");
  gen->add_option("--split", g.split, "train fraction");
  gen->add_option("--kinds", g.kinds, "comma list of degradation kinds or 'all'");
  gen->add_flag("--stack", g.stack, "apply two degradations per clip");

  // ---- pretrain-enhance ----
  auto* pre = app.add_subcommand("pretrain-enhance", "pretrain one branch's enhancement network");
  struct {
    std::string branch, data, out;
    int64_t steps, warmup;
    double lr, min_lr;
    uint64_t seed;
    int64_t frag_t, aes_frames_pre;
    double alpha1, alpha2;
    int64_t iqa_frames;
  } p{overlay<std::string>(jc, "branch", "technical"),
      overlay<std::string>(jc, "data", "data"),
      overlay<std::string>(jc, "out", "enhancer"),
      overlay<int64_t>(jc, "steps", 2000),
      overlay<int64_t>(jc, "warmup", 0),
      overlay<double>(jc, "lr", 1e-4),
      overlay<double>(jc, "min_lr", 1e-7),
      overlay<uint64_t>(jc, "seed", 1),
      overlay<int64_t>(jc, "frag_t", 1),
      overlay<int64_t>(jc, "aes_frames_pre", 3),
      overlay<double>(jc, "alpha1", 0.3),
      overlay<double>(jc, "alpha2", 0.01),
      overlay<int64_t>(jc, "iqa_frames", 4)};
  pre->add_option("--branch", p.branch, "aesthetic|technical")
      ->check(CLI::IsMember({"aesthetic", "technical"}));
  pre->add_option("--data", p.data, "dataset directory (with manifest.json)");
  pre->add_option("--out", p.out, "checkpoint output directory");
  pre->add_option("--steps", p.steps, "training steps");
  pre->add_option("--warmup", p.warmup, "warmup steps");
  pre->add_option("--lr", p.lr, "base learning rate");
  pre->add_option("--min-lr", p.min_lr, "cosine floor");
  pre->add_option("--seed", p.seed, "training seed");
  pre->add_option("--frag-t", p.frag_t, "fragment frames per sample (technical)");
  pre->add_option("--aes-frames-pre", p.aes_frames_pre, "view frames per sample (aesthetic)");
  pre->add_option("--alpha1", p.alpha1, "identity loss weight");
  pre->add_option("--alpha2", p.alpha2, "quality penalty weight");
  pre->add_option("--iqa-frames", p.iqa_frames, "frames scored by the quality penalty");
  ModelFlags pre_mf(jc);
  pre_mf.add_to(pre);

  // ---- train ----
  auto* tr = app.add_subcommand("train", "train the dual-branch quality model");
  struct {
    std::string data, out, enh_a, enh_t;
    int64_t steps, warmup, batch;
    double lr, min_lr, wd, backbone_scale, rank_tau;
    uint64_t seed;
    int workers;
    bool deterministic, no_enhancers;
  } t{overlay<std::string>(jc, "data", "data"),
      overlay<std::string>(jc, "out", "model"),
      overlay<std::string>(jc, "enhancer_aesthetic", ""),
      overlay<std::string>(jc, "enhancer_technical", ""),
      overlay<int64_t>(jc, "steps", 2000),
      overlay<int64_t>(jc, "warmup", 100),
      overlay<int64_t>(jc, "batch", 4),
      overlay<double>(jc, "lr", 1e-3),
      overlay<double>(jc, "min_lr", 1e-7),
      overlay<double>(jc, "weight_decay", 0.05),
      overlay<double>(jc, "backbone_lr_scale", 0.1),
      overlay<double>(jc, "rank_tau", 0.25),
      overlay<uint64_t>(jc, "seed", 1),
      overlay<int>(jc, "workers", 1),
      overlay<bool>(jc, "deterministic", false),
      overlay<bool>(jc, "no_enhancers", false)};
  tr->add_option("--data", t.data, "dataset directory");
  tr->add_option("--out", t.out, "model output directory");
  tr->add_option("--enhancer-aesthetic", t.enh_a, "pretrained aesthetic enhancer directory");
  tr->add_option("--enhancer-technical", t.enh_t, "pretrained technical enhancer directory");
  tr->add_option("--steps", t.steps, "training steps");
  tr->add_option("--warmup", t.warmup, "warmup steps");
  tr->add_option("--batch", t.batch, "clips per step");
  tr->add_option("--lr", t.lr, "base learning rate");
  tr->add_option("--min-lr", t.min_lr, "cosine floor");
  tr->add_option("--weight-decay", t.wd, "decoupled weight decay");
  tr->add_option("--backbone-lr-scale", t.backbone_scale, "backbone group lr multiplier");
  tr->add_option("--rank-tau", t.rank_tau, "soft-rank temperature");
  tr->add_option("--seed", t.seed, "training seed");
  tr->add_option("--workers", t.workers, "parallel workers for batch items");
  tr->add_flag("--deterministic", t.deterministic, "force a single worker");
  tr->add_flag("--no-enhancers", t.no_enhancers, "disable both enhancers (ablation)");
  ModelFlags tr_mf(jc);
  tr_mf.add_to(tr);

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "evaluate a trained model and write a report");
  struct {
    std::string data, model, out;
    int64_t pairs_h, pairs_n;
    bool csv, logistic, no_timestamp;
  } e{overlay<std::string>(jc, "data", "data"), overlay<std::string>(jc, "model", ""),
      overlay<std::string>(jc, "out", "report.json"), overlay<int64_t>(jc, "pairs_homogeneous", 50),
      overlay<int64_t>(jc, "pairs_non_homogeneous", 50), overlay<bool>(jc, "csv", false),
      overlay<bool>(jc, "logistic", false), overlay<bool>(jc, "no_timestamp", false)};
  ev->add_option("--data", e.data, "dataset directory");
  ev->add_option("--model", e.model, "trained model directory");
  ev->add_option("--out", e.out, "report path");
  ev->add_option("--pairs-homogeneous", e.pairs_h, "homogeneous ranking pairs");
  ev->add_option("--pairs-non-homogeneous", e.pairs_n, "non-homogeneous ranking pairs");
  ev->add_flag("--csv", e.csv, "also write a csv of per-clip scores");
  ev->add_flag("--logistic", e.logistic, "also report plcc after a 4-parameter logistic fit");
  ev->add_flag("--no-timestamp", e.no_timestamp, "omit the timestamp field");

  // ---- enhance ----
  auto* en = app.add_subcommand("enhance", "run one enhancer over an EVID clip");
  struct {
    std::string input, output, branch, ckpt;
  } n{overlay<std::string>(jc, "input", ""), overlay<std::string>(jc, "output", ""),
      overlay<std::string>(jc, "branch", "technical"), overlay<std::string>(jc, "ckpt", "")};
  en->add_option("--input", n.input, "input EVID clip")->required();
  en->add_option("--output", n.output, "output EVID clip")->required();
  en->add_option("--branch", n.branch, "aesthetic|technical")
      ->check(CLI::IsMember({"aesthetic", "technical"}));
  en->add_option("--ckpt", n.ckpt, "enhancer checkpoint directory")->required();

  // ---- check-grads ----
  auto* cg = app.add_subcommand("check-grads", "finite-difference gradient suite");
  std::string cg_module = overlay<std::string>(jc, "module", "");
  cg->add_option("--module", cg_module, "restrict to one module");

  // ---- selftest ----
  app.add_subcommand("selftest", "oracle-equivalence suite (no network, no data)");

  try {
    // CLI11 parses argv-style reversed
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& err) {
    if (err.get_exit_code() == 0) {  // --help
      std::cout << app.help() << "\n";
      return kExitOk;
    }
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      GenConfig cfg;
      cfg.n_clips = g.clips;
      cfg.frames = g.frames;
      cfg.h = g.h;
      cfg.w = g.w;
      cfg.seed = env_seed(g.seed);
      cfg.split_ratio = g.split;
      cfg.stack = g.stack;
      if (g.kinds != "all") {
        cfg.kinds.clear();
        std::stringstream ss(g.kinds);
        std::string item;
        while (std::getline(ss, item, ',')) cfg.kinds.push_back(deg_kind_from_name(item));
      }
      nlohmann::json cj = gen_config_json(cfg);
      echo_config("gen-data", cj);
      generate_dataset<float>(cfg, g.out);
      write_run_config(g.out, "gen-data", cj, cfg.seed);
      std::cout << "wrote " << cfg.n_clips << " clips under " << g.out << "\n";
      return kExitOk;
    }
    if (pre->parsed()) {
      Branch branch = p.branch == "aesthetic" ? Branch::kAesthetic : Branch::kTechnical;
      DatasetManifest manifest = load_manifest(
          (std::filesystem::path(p.data) / "manifest.json").string());
      VqaModelCfg mcfg = pre_mf.to_cfg();
      TrainConfig cfg;
      cfg.optimizer = OptKind::kAdam;
      cfg.lr = p.lr;
      cfg.min_lr = p.min_lr;
      cfg.beta1 = 0.9;
      cfg.beta2 = 0.99;
      cfg.total_steps = p.steps;
      cfg.warmup_steps = p.warmup;
      cfg.seed = env_seed(p.seed);
      cfg.iqa_frames = p.iqa_frames;
      LossWeights weights;
      weights.alpha1 = p.alpha1;
      weights.alpha2 = p.alpha2;
      PretrainViewCfg pv;
      pv.frag_t = p.frag_t;
      pv.aes_frames = p.aes_frames_pre;
      nlohmann::json cj{{"branch", p.branch},        {"train", train_cfg_json(cfg)},
                        {"alpha1", weights.alpha1},  {"alpha2", weights.alpha2},
                        {"frag_t", pv.frag_t},       {"aes_frames_pre", pv.aes_frames},
                        {"model", pre_mf.to_json()}};
      echo_config("pretrain-enhance", cj);
      std::error_code ec;
      std::filesystem::create_directories(p.out, ec);
      ParamStore<float> trained = pretrain_enhancer<float>(
          branch, manifest, mcfg, cfg, weights,
          (std::filesystem::path(p.out) / "pretrain_log.jsonl").string(), p.out, pv);
      save_enhancer_ckpt(p.out, branch, trained, mcfg, cfg.seed, cj);
      write_run_config(p.out, "pretrain-enhance", cj, cfg.seed);
      std::cout << "saved enhancer checkpoint under " << p.out << "\n";
      return kExitOk;
    }
    if (tr->parsed()) {
      DatasetManifest manifest = load_manifest(
          (std::filesystem::path(t.data) / "manifest.json").string());
      VqaModelCfg mcfg = tr_mf.to_cfg();
      mcfg.enhancers_enabled = !t.no_enhancers;
      TrainConfig cfg;
      cfg.optimizer = OptKind::kAdamW;
      cfg.lr = t.lr;
      cfg.min_lr = t.min_lr;
      cfg.weight_decay = t.wd;
      cfg.beta1 = 0.9;
      cfg.beta2 = 0.999;
      cfg.total_steps = t.steps;
      cfg.warmup_steps = t.warmup;
      cfg.batch = t.batch;
      cfg.seed = env_seed(t.seed);
      cfg.backbone_lr_scale = t.backbone_scale;
      cfg.rank_tau = t.rank_tau;
      cfg.workers = t.deterministic ? 1 : t.workers;
      VqaModel<float> model = init_vqa_model<float>(mcfg, cfg.seed);
      if (!t.enh_a.empty())
        model.enhancer_aesthetic = load_enhancer_ckpt(t.enh_a, Branch::kAesthetic);
      if (!t.enh_t.empty())
        model.enhancer_technical = load_enhancer_ckpt(t.enh_t, Branch::kTechnical);
      nlohmann::json cj{{"train", train_cfg_json(cfg)},
                        {"model", model_cfg_json(mcfg)},
                        {"enhancer_aesthetic", t.enh_a},
                        {"enhancer_technical", t.enh_t}};
      echo_config("train", cj);
      std::error_code ec;
      std::filesystem::create_directories(t.out, ec);
      train_vqa(model, manifest, t.data, cfg,
                (std::filesystem::path(t.out) / "train_log.jsonl").string());
      save_vqa_model(t.out, model, cfg.seed, hex64(fnv1a64(cj.dump())));
      write_run_config(t.out, "train", cj, cfg.seed);
      std::cout << "saved model under " << t.out << "\n";
      return kExitOk;
    }
    if (ev->parsed()) {
      if (e.model.empty()) {
        std::cerr << "error: eval requires --model pointing at a trained model directory\n";
        return kExitUsage;
      }
      DatasetManifest manifest = load_manifest(
          (std::filesystem::path(e.data) / "manifest.json").string());
      VqaModel<float> model = load_vqa_model<float>(e.model);
      ReportOptions opts;
      opts.n_homogeneous_pairs = e.pairs_h;
      opts.n_non_homogeneous_pairs = e.pairs_n;
      opts.plcc_logistic = e.logistic;
      opts.write_csv = e.csv;
      opts.include_timestamp = !e.no_timestamp;
      nlohmann::json cj{{"data", e.data}, {"model", e.model}, {"pairs_homogeneous", e.pairs_h},
                        {"pairs_non_homogeneous", e.pairs_n}};
      echo_config("eval", cj);
      nlohmann::json rep = run_report(manifest, e.data, model, e.out, opts);
      std::cout << "srocc=" << rep.at("metrics").at("srocc").get<double>()
                << " plcc=" << rep.at("metrics").at("plcc").get<double>() << " ranking_all="
                << rep.at("metrics").at("ranking").at("all").get<double>() << "\n";
      std::cout << "report written to " << e.out << "\n";
      return kExitOk;
    }
    if (en->parsed()) {
      Branch branch = n.branch == "aesthetic" ? Branch::kAesthetic : Branch::kTechnical;
      VqaModelCfg mcfg;
      ParamStore<float> params = load_enhancer_ckpt(n.ckpt, branch, &mcfg);
      VideoClip<float> clip = load_evid<float>(n.input);
      VideoClip<float> out =
          branch == Branch::kAesthetic
              ? vsrmini_forward(clip, params, "enhancer.aesthetic", mcfg.vsr)
              : cleannet_forward(clip, params, "enhancer.technical", mcfg.cleannet,
                                 mcfg.cleannet.loops);
      save_evid(n.output, out);
      std::cout << "enhanced clip written to " << n.output << "\n";
      return kExitOk;
    }
    if (cg->parsed()) {
      auto entries = gradient_suite(cg_module);
      if (entries.empty()) {
        std::cerr << "error: no gradient suite entries for module '" << cg_module << "'\n";
        return kExitUsage;
      }
      bool ok = true;
      for (auto& entry : entries) {
        auto rep = entry.run();
        const bool pass = rep.max_rel_err <= entry.tol;
        ok = ok && pass;
        std::cout << (pass ? "[PASS] " : "[FAIL] ") << entry.module << "/" << entry.name
                  << " max_rel_err=" << rep.max_rel_err << " (tol " << entry.tol << ")\n";
      }
      return ok ? kExitOk : kExitNumeric;
    }
    if (app.get_subcommand("selftest")->parsed()) {
      SelftestResult r = run_selftest();
      std::cout << "selftest: " << r.cases << " cases, " << r.comparisons << " comparisons, max_err="
                << r.max_err << ", failures=" << r.failures << "\n";
      for (const auto& fc : r.failed_cases) std::cout << "  FAILED " << fc << "\n";
      return r.ok() ? kExitOk : kExitNumeric;
    }
  } catch (const NumericError& ex) {
    std::cerr << "numeric error: " << ex.what() << "\n";
    return kExitNumeric;
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace eyesim

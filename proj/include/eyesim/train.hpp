#pragma once

#include <atomic>
#include <fstream>
#include <memory>
#include <thread>

#include "eyesim/optim.hpp"
#include "eyesim/pipeline.hpp"

namespace eyesim {

enum class OptKind { kAdam, kAdamW };

struct TrainConfig {
  OptKind optimizer = OptKind::kAdam;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double min_lr = 1e-7;
  int64_t total_steps = 2000;
  int64_t warmup_steps = 0;
  int64_t batch = 1;
  uint64_t seed = 1;
  double backbone_lr_scale = 0.1;
  int workers = 1;         // deterministic regardless: reduction order is fixed
  double rank_tau = 0.25;
  bool freeze_enhancers = true;
  int64_t iqa_frames = 4;
  int64_t log_every = 25;
};

inline nlohmann::json train_cfg_json(const TrainConfig& c) {
  return {{"optimizer", c.optimizer == OptKind::kAdam ? "adam" : "adamw"},
          {"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps},
          {"weight_decay", c.weight_decay}, {"min_lr", c.min_lr},
          {"total_steps", c.total_steps}, {"warmup_steps", c.warmup_steps},
          {"batch", c.batch}, {"seed", c.seed}, {"backbone_lr_scale", c.backbone_lr_scale},
          {"workers", c.workers}, {"rank_tau", c.rank_tau},
          {"freeze_enhancers", c.freeze_enhancers}, {"iqa_frames", c.iqa_frames}};
}

class JsonlLogger {
 public:
  explicit JsonlLogger(const std::string& path) {
    if (!path.empty()) {
      out_.open(path, std::ios::trunc);
      if (!out_) throw IoError("cannot open log: " + path);
    }
  }
  void write(const nlohmann::json& j) {
    if (out_.is_open()) out_ << j.dump() << "\n";
  }
  void flush() {
    if (out_.is_open()) out_.flush();
  }

 private:
  std::ofstream out_;
};

// ---- enhancer pretraining ----------------------------------------------------

struct PretrainViewCfg {
  // technical branch trains on single-frame fragment mosaics, aesthetic on
  // short resized clips
  int64_t frag_t = 1;
  int64_t aes_frames = 3;
};

namespace detail {

// per-frame charbonnier means averaged over the clip (frames share a size, so
// this equals the whole-clip mean)
template <class T>
Var clip_charbonnier(Tape<T>& tp, const std::vector<Var>& a, const std::vector<Var>& b, T eps) {
  Var acc = kNoVar;
  for (size_t i = 0; i < a.size(); ++i) {
    Var c = charbonnier_op(tp, a[i], b[i], eps);
    acc = acc.valid() ? add(tp, acc, c) : c;
  }
  return mul_scalar(tp, acc, T(1) / static_cast<T>(a.size()));
}

template <class T>
std::vector<Var> enhance_frames_on_tape(VarPack<T>& pk, const VideoClip<T>& view, Branch branch,
                                        const VqaModelCfg& cfg, bool clamp) {
  Tape<T>& tp = pk.tape();
  std::vector<Var> frames;
  frames.reserve(view.t());
  for (int64_t t = 0; t < view.t(); ++t) frames.push_back(tp.leaf(frame_chw(view, t)));
  std::vector<Var> out;
  if (branch == Branch::kAesthetic) {
    out = vsrmini_frames(pk, "enhancer.aesthetic", frames, cfg.vsr);
  } else {
    out.reserve(frames.size());
    for (Var f : frames)
      out.push_back(cleannet_frame(pk, "enhancer.technical", f, cfg.cleannet, cfg.cleannet.loops));
  }
  if (clamp)
    for (Var& v : out) v = clamp01(tp, v);
  return out;
}

}  // namespace detail

// One pretraining step's views: (clean view, degraded view) built identically.
template <class T>
std::pair<VideoClip<T>, VideoClip<T>> pretrain_views(const DatasetManifest& manifest,
                                                     const ManifestRecord& rec, Branch branch,
                                                     const VqaModelCfg& mcfg,
                                                     const PretrainViewCfg& pv, uint64_t step_seed) {
  VideoClip<T> clean = gen_clean_clip<T>(manifest.gen, rec.spec.clip_index);
  // fresh on-the-fly degradation each step
  RngStream srng(derive_key(step_seed, 17));
  DegradationSpec spec = sample_spec(srng, manifest.gen.kinds);
  spec.global_seed = step_seed;
  spec.clip_index = rec.spec.clip_index;
  VideoClip<T> dis = apply_degradation(clean, spec);
  if (branch == Branch::kAesthetic) {
    return {build_aesthetic_view(clean, mcfg.views),
            build_aesthetic_view(dis, mcfg.views)};
  }
  const int64_t t_c = std::min(pv.frag_t, clean.t());
  RngStream pos_rng(derive_key(step_seed, 23));
  const int64_t start = pos_rng.uniform_int(0, clean.t() - t_c);
  RngStream frag_a(derive_key(step_seed, 29));
  RngStream frag_b = frag_a;  // identical stream: same windows on both clips
  auto m_clean = sample_fragments(clean, mcfg.views.grid, mcfg.views.patch, t_c, start, frag_a);
  auto m_dis = sample_fragments(dis, mcfg.views.grid, mcfg.views.patch, t_c, start, frag_b);
  return {m_clean.clip, m_dis.clip};
}

// Trains one branch's enhancer with L_total = L_pixel + a1 L_identity + a2 L_IQA.
template <class T>
ParamStore<T> pretrain_enhancer(Branch branch, const DatasetManifest& manifest,
                                const VqaModelCfg& mcfg_in, const TrainConfig& cfg,
                                const LossWeights& weights, const std::string& log_path = "",
                                const std::string& diag_dir = "",
                                const PretrainViewCfg& pv = {}) {
  VqaModelCfg mcfg = mcfg_in;
  auto train_records = manifest.split_records("train");
  require_input(!train_records.empty(), "pretrain_enhancer: empty train split");
  ParamStore<T> params;
  RngStream init_rng = stream_for(cfg.seed, branch == Branch::kAesthetic ? 1 : 2, RngOp::kInit);
  const std::string prefix =
      branch == Branch::kAesthetic ? "enhancer.aesthetic" : "enhancer.technical";
  if (branch == Branch::kAesthetic) {
    init_vsrmini(params, prefix, mcfg.vsr, init_rng);
  } else {
    init_cleannet(params, prefix, mcfg.cleannet, init_rng);
  }
  JsonlLogger log(log_path);
  OptimizerState<T> opt;
  if (mcfg.views.aes_frames > pv.aes_frames) mcfg.views.aes_frames = pv.aes_frames;
  for (int64_t step = 0; step < cfg.total_steps; ++step) {
    const uint64_t step_seed = derive_key(cfg.seed, static_cast<uint64_t>(step),
                                          static_cast<uint64_t>(RngOp::kTrainStep));
    RngStream pick(step_seed);
    const auto* rec =
        train_records[static_cast<size_t>(pick.uniform_int(0, static_cast<int64_t>(train_records.size()) - 1))];
    auto [v_ori, v_dis] = pretrain_views<T>(manifest, *rec, branch, mcfg, pv, step_seed);
    Tape<T> tp;
    VarPack<T> pk(tp, params);
    std::vector<Var> dis_enh = detail::enhance_frames_on_tape(pk, v_dis, branch, mcfg, true);
    std::vector<Var> ori_enh = detail::enhance_frames_on_tape(pk, v_ori, branch, mcfg, true);
    std::vector<Var> ori_ref;
    ori_ref.reserve(v_ori.t());
    for (int64_t t = 0; t < v_ori.t(); ++t) ori_ref.push_back(tp.leaf(frame_chw(v_ori, t)));
    Var pixel = detail::clip_charbonnier(tp, ori_ref, dis_enh, static_cast<T>(weights.eps));
    Var identity = detail::clip_charbonnier(tp, ori_ref, ori_enh, static_cast<T>(weights.eps));
    Var iqa = loss_iqa(tp, dis_enh, default_iqa_indices(static_cast<int64_t>(dis_enh.size()), cfg.iqa_frames));
    Var total = loss_total(tp, pixel, identity, iqa, weights);
    const double loss_value = static_cast<double>(tp.val(total)[0]);
    if (!std::isfinite(loss_value)) {
      if (!diag_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(diag_dir, ec);
        save_eysm((std::filesystem::path(diag_dir) / "ckpt_diverged.eysm").string(), params);
      }
      throw NumericError("pretrain_enhancer: loss diverged at step " + std::to_string(step));
    }
    tp.backward(total);
    const double lr = cosine_lr(step, cfg.total_steps, cfg.lr, cfg.min_lr, cfg.warmup_steps);
    auto grads = pk.collect_grads();
    if (cfg.optimizer == OptKind::kAdam) {
      adam_step(params, grads, opt, lr, cfg.beta1, cfg.beta2, cfg.eps);
    } else {
      adamw_step(params, grads, opt, lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps);
    }
    if (step % cfg.log_every == 0 || step + 1 == cfg.total_steps) {
      log.write({{"step", step},
                 {"lr", lr},
                 {"pixel", static_cast<double>(tp.val(pixel)[0])},
                 {"identity", static_cast<double>(tp.val(identity)[0])},
                 {"iqa", static_cast<double>(tp.val(iqa)[0])},
                 {"total", loss_value}});
    }
  }
  log.flush();
  return params;
}

// Held-out comparison of the branch view before/after enhancement against the
// clean reference, using the manifest's recorded degradations.
struct EnhancerEval {
  double psnr_degraded = 0;
  double psnr_enhanced = 0;
  double pixel_before = 0;  // charbonnier(clean, degraded)
  double pixel_after = 0;   // charbonnier(clean, enhanced)
  int64_t n_clips = 0;
};

template <class T>
EnhancerEval eval_enhancer(Branch branch, const DatasetManifest& manifest,
                           const ParamStore<T>& params, const VqaModelCfg& mcfg_in,
                           const PretrainViewCfg& pv = {}, int64_t max_clips = 50) {
  VqaModelCfg mcfg = mcfg_in;
  if (mcfg.views.aes_frames > pv.aes_frames) mcfg.views.aes_frames = pv.aes_frames;
  auto test_records = manifest.split_records("test");
  require_input(!test_records.empty(), "eval_enhancer: empty test split");
  EnhancerEval ev;
  const std::string prefix =
      branch == Branch::kAesthetic ? "enhancer.aesthetic" : "enhancer.technical";
  for (const auto* rec : test_records) {
    if (ev.n_clips >= max_clips) break;
    VideoClip<T> clean = gen_clean_clip<T>(manifest.gen, rec->spec.clip_index);
    VideoClip<T> dis = regenerate_degraded<T>(manifest.gen, *rec);
    VideoClip<T> v_clean, v_dis;
    if (branch == Branch::kAesthetic) {
      v_clean = build_aesthetic_view(clean, mcfg.views);
      v_dis = build_aesthetic_view(dis, mcfg.views);
    } else {
      const int64_t t_c = std::min(pv.frag_t, clean.t());
      const int64_t start = (clean.t() - t_c) / 2;
      RngStream frag_a = stream_for(manifest.seed, static_cast<uint64_t>(rec->spec.clip_index),
                                    RngOp::kFragment);
      RngStream frag_b = frag_a;
      v_clean = sample_fragments(clean, mcfg.views.grid, mcfg.views.patch, t_c, start, frag_a).clip;
      v_dis = sample_fragments(dis, mcfg.views.grid, mcfg.views.patch, t_c, start, frag_b).clip;
    }
    VideoClip<T> enhanced =
        branch == Branch::kAesthetic
            ? vsrmini_forward(v_dis, params, prefix, mcfg.vsr)
            : cleannet_forward(v_dis, params, prefix, mcfg.cleannet, mcfg.cleannet.loops);
    ev.psnr_degraded += psnr(v_dis, v_clean);
    ev.psnr_enhanced += psnr(enhanced, v_clean);
    ev.pixel_before += charbonnier_value(v_clean.frames, v_dis.frames, 1e-3);
    ev.pixel_after += charbonnier_value(v_clean.frames, enhanced.frames, 1e-3);
    ev.n_clips += 1;
  }
  ev.psnr_degraded /= static_cast<double>(ev.n_clips);
  ev.psnr_enhanced /= static_cast<double>(ev.n_clips);
  ev.pixel_before /= static_cast<double>(ev.n_clips);
  ev.pixel_after /= static_cast<double>(ev.n_clips);
  return ev;
}

// ---- VQA training ---------------------------------------------------------------

template <class T>
struct TrainItemCache {
  VideoClip<T> aesthetic;   // assembled aesthetic input
  VideoClip<T> technical;   // assembled technical input
  double mos = 0;
};

// fixed per-clip views (fragment windows and start drawn once per clip) allow
// caching the frozen enhancers' outputs across all steps
template <class T>
std::vector<TrainItemCache<T>> build_train_cache(const DatasetManifest& manifest,
                                                 const std::string& data_dir,
                                                 const VqaModel<T>& model, int workers = 1) {
  auto train_records = manifest.split_records("train");
  require_input(!train_records.empty(), "train_vqa: empty train split");
  std::vector<TrainItemCache<T>> cache(train_records.size());
  auto build_one = [&](size_t i) {
    const auto* rec = train_records[i];
    VideoClip<T> clip = load_evid<T>((std::filesystem::path(data_dir) / rec->clip_path).string());
    const ViewCfg& v = model.cfg.views;
    VideoClip<T> aes = build_aesthetic_view(clip, v);
    RngStream rng = stream_for(manifest.seed, static_cast<uint64_t>(rec->spec.clip_index), RngOp::kFragment);
    const int64_t t_c = std::min(v.clip_len, clip.t());
    const int64_t start = rng.uniform_int(0, clip.t() - t_c);
    VideoClip<T> tech = build_technical_view(clip, v, start, rng);
    cache[i].aesthetic = build_branch_input(aes, model, Branch::kAesthetic);
    cache[i].technical = build_branch_input(tech, model, Branch::kTechnical);
    cache[i].mos = rec->mos;
  };
  if (workers <= 1) {
    for (size_t i = 0; i < cache.size(); ++i) build_one(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < cache.size(); i = next.fetch_add(1)) build_one(i);
      });
    for (auto& th : pool) th.join();
  }
  return cache;
}

struct VqaStepStats {
  double loss = 0, mse = 0, rank = 0, lr = 0;
};

namespace detail {

template <class T>
struct ItemGraph {
  Tape<T> tape;
  std::unique_ptr<VarPack<T>> pack;
  Var pred = kNoVar;
};

}  // namespace detail

// One optimization step over a batch of cached items. Per-item forward and
// backward run independently (parallelizable); gradients reduce in item order
// so the result is bit-identical for any worker count.
template <class T>
VqaStepStats train_vqa_step(VqaModel<T>& model, const std::vector<TrainItemCache<T>>& cache,
                            OptimizerState<T>& opt, const TrainConfig& cfg, int64_t step) {
  const uint64_t step_seed = derive_key(cfg.seed, static_cast<uint64_t>(step),
                                        static_cast<uint64_t>(RngOp::kTrainStep) + 100);
  RngStream pick(step_seed);
  const int64_t batch = std::max<int64_t>(2, cfg.batch);
  std::vector<size_t> items(batch);
  for (int64_t i = 0; i < batch; ++i)
    items[static_cast<size_t>(i)] =
        static_cast<size_t>(pick.uniform_int(0, static_cast<int64_t>(cache.size()) - 1));
  const HeadCfg hcfg = model.cfg.head();
  std::vector<detail::ItemGraph<T>> graphs(items.size());
  auto forward_one = [&](size_t k) {
    auto& g = graphs[k];
    g.pack = std::make_unique<VarPack<T>>(g.tape, model.params);
    const TrainItemCache<T>& item = cache[items[k]];
    Var xa = g.tape.leaf(clip_to_bcthw(item.aesthetic));
    Var fa = backbone_forward(*g.pack, "backbone.aesthetic", xa, model.cfg.backbone);
    Var sa = head_forward(*g.pack, "head.aesthetic", fa, hcfg);
    Var xt = g.tape.leaf(clip_to_bcthw(item.technical));
    Var ft = backbone_forward(*g.pack, "backbone.technical", xt, model.cfg.backbone);
    Var st = head_forward(*g.pack, "head.technical", ft, hcfg);
    g.pred = fuse_branches(*g.pack, "fusion", sa, st);
  };
  auto run_parallel = [&](const std::function<void(size_t)>& fn) {
    if (cfg.workers <= 1) {
      for (size_t k = 0; k < graphs.size(); ++k) fn(k);
      return;
    }
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    const int n_threads = std::min<int>(cfg.workers, static_cast<int>(graphs.size()));
    for (int w = 0; w < n_threads; ++w)
      pool.emplace_back([&] {
        for (size_t k = next.fetch_add(1); k < graphs.size(); k = next.fetch_add(1)) fn(k);
      });
    for (auto& th : pool) th.join();
  };
  run_parallel(forward_one);
  // batch loss on the collected predictions
  Tensor<T> preds({batch});
  Tensor<double> mos({batch});
  for (int64_t i = 0; i < batch; ++i) {
    preds[i] = graphs[static_cast<size_t>(i)].tape.val(graphs[static_cast<size_t>(i)].pred)[0];
    mos[i] = cache[items[static_cast<size_t>(i)]].mos;
  }
  if (!all_finite(preds))
    throw NumericError("train_vqa: non-finite prediction at step " + std::to_string(step));
  Tape<T> loss_tape;
  Var pv = loss_tape.leaf(preds, true);
  Var mse = mse_to_const(loss_tape, pv, mos.template cast<T>());
  std::vector<double> mos_v(mos.data.begin(), mos.data.end());
  Var sr = soft_rank(loss_tape, pv, static_cast<T>(cfg.rank_tau));
  Var corr = pearson_to_const(loss_tape, sr, average_ranks(mos_v));
  Var rank_loss = affine(loss_tape, corr, T(-1), T(1));
  Var total = add(loss_tape, mse, rank_loss);
  VqaStepStats stats;
  stats.loss = static_cast<double>(loss_tape.val(total)[0]);
  stats.mse = static_cast<double>(loss_tape.val(mse)[0]);
  stats.rank = static_cast<double>(loss_tape.val(rank_loss)[0]);
  if (!std::isfinite(stats.loss)) throw NumericError("train_vqa: loss diverged at step " + std::to_string(step));
  loss_tape.backward(total);
  const Tensor<T>& pred_grads = loss_tape.grad(pv);
  auto backward_one = [&](size_t k) {
    graphs[k].tape.backward(graphs[k].pred, pred_grads[static_cast<int64_t>(k)]);
  };
  run_parallel(backward_one);
  // fixed-order reduction
  std::map<std::string, Tensor<T>> grads;
  for (auto& g : graphs) {
    for (auto& [name, grad] : g.pack->collect_grads()) {
      auto it = grads.find(name);
      if (it == grads.end()) {
        grads.emplace(name, grad);
      } else {
        for (int64_t i = 0; i < grad.numel(); ++i) it->second[i] += grad[i];
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(batch);
  for (auto& [name, grad] : grads)
    for (T& v : grad.data) v = static_cast<T>(static_cast<double>(v) * scale);
  stats.lr = cosine_lr(step, cfg.total_steps, cfg.lr, cfg.min_lr, cfg.warmup_steps);
  LrScaleFn scale_fn = [&cfg](const std::string& name) {
    return name.rfind("backbone.", 0) == 0 ? cfg.backbone_lr_scale : 1.0;
  };
  if (cfg.optimizer == OptKind::kAdamW) {
    adamw_step(model.params, grads, opt, stats.lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps,
               scale_fn);
  } else {
    adam_step(model.params, grads, opt, stats.lr, cfg.beta1, cfg.beta2, cfg.eps, scale_fn);
  }
  return stats;
}

// Full VQA training pass over a manifest; enhancers stay frozen (their
// outputs are baked into the cache).
template <class T>
void train_vqa(VqaModel<T>& model, const DatasetManifest& manifest, const std::string& data_dir,
               const TrainConfig& cfg, const std::string& log_path = "") {
  require_config(cfg.freeze_enhancers, "train_vqa: only frozen-enhancer training uses the cache path");
  std::vector<TrainItemCache<T>> cache = build_train_cache(manifest, data_dir, model, cfg.workers);
  JsonlLogger log(log_path);
  OptimizerState<T> opt;
  for (int64_t step = 0; step < cfg.total_steps; ++step) {
    VqaStepStats s = train_vqa_step(model, cache, opt, cfg, step);
    if (step % cfg.log_every == 0 || step + 1 == cfg.total_steps) {
      log.write({{"step", step}, {"lr", s.lr}, {"loss", s.loss}, {"mse", s.mse}, {"rank", s.rank}});
    }
  }
  log.flush();
}

// ---- unfrozen-enhancer variant -------------------------------------------------
// per-step enhancement on the tape; slow, exists behind the unfreeze flag

template <class T>
void train_vqa_unfrozen_step(VqaModel<T>& model, const DatasetManifest& manifest,
                             const std::string& data_dir, const TrainConfig& cfg, int64_t step,
                             OptimizerState<T>& opt) {
  auto train_records = manifest.split_records("train");
  const uint64_t step_seed = derive_key(cfg.seed, static_cast<uint64_t>(step),
                                        static_cast<uint64_t>(RngOp::kTrainStep) + 100);
  RngStream pick(step_seed);
  const int64_t batch = std::max<int64_t>(2, cfg.batch);
  // merged parameter space: vqa params plus both enhancers
  ParamStore<T> merged;
  for (const auto& [n, t] : model.params.entries()) merged.add(n, t);
  for (const auto& [n, t] : model.enhancer_aesthetic.entries()) merged.add(n, t);
  for (const auto& [n, t] : model.enhancer_technical.entries()) merged.add(n, t);
  Tape<T> tp;
  VarPack<T> pk(tp, merged);
  std::vector<Var> preds;
  Tensor<double> mos({batch});
  const HeadCfg hcfg = model.cfg.head();
  for (int64_t i = 0; i < batch; ++i) {
    const auto* rec =
        train_records[static_cast<size_t>(pick.uniform_int(0, static_cast<int64_t>(train_records.size()) - 1))];
    VideoClip<T> clip = load_evid<T>((std::filesystem::path(data_dir) / rec->clip_path).string());
    const ViewCfg& v = model.cfg.views;
    VideoClip<T> aes = build_aesthetic_view(clip, v);
    RngStream rng = stream_for(manifest.seed, static_cast<uint64_t>(rec->spec.clip_index), RngOp::kFragment);
    const int64_t t_c = std::min(v.clip_len, clip.t());
    VideoClip<T> tech = build_technical_view(clip, v, rng.uniform_int(0, clip.t() - t_c), rng);
    auto branch_pred = [&](const VideoClip<T>& view, Branch b) {
      std::vector<Var> enhanced = detail::enhance_frames_on_tape(pk, view, b, model.cfg, true);
      // append-mode assembly on the tape
      std::vector<Var> frames;
      for (int64_t t = 0; t < view.t(); ++t)
        frames.push_back(tp.leaf(frame_chw(view, t)));
      const int64_t n_concat = b == Branch::kAesthetic ? v.n_concat_aes : v.n_concat_tech;
      for (int64_t k = 0; k < std::min<int64_t>(n_concat, static_cast<int64_t>(enhanced.size())); ++k)
        frames.push_back(enhanced[static_cast<size_t>(
            uniform_sample_index(k, static_cast<int64_t>(enhanced.size()), n_concat))]);
      // [N][3,H,W] -> [1,3,N,H,W]
      std::vector<Var> as5;
      const int64_t H = view.h(), W = view.w();
      for (Var f : frames) as5.push_back(reshape(tp, f, Shape{1, 3, 1, H, W}));
      Var x = concat_axis(tp, as5, 2);
      Var feat = backbone_forward(pk, std::string("backbone.") + branch_name(b), x, model.cfg.backbone);
      return head_forward(pk, std::string("head.") + branch_name(b), feat, hcfg);
    };
    Var sa = branch_pred(aes, Branch::kAesthetic);
    Var st = branch_pred(tech, Branch::kTechnical);
    preds.push_back(fuse_branches(pk, "fusion", sa, st));
    mos[i] = rec->mos;
  }
  // gather predictions into one vector var through concat
  std::vector<Var> preds1;
  for (Var p : preds) preds1.push_back(reshape(tp, p, Shape{1}));
  Var pv = concat_axis(tp, preds1, 0);
  Var loss = vqa_batch_loss(tp, pv, mos, cfg.rank_tau);
  if (!std::isfinite(static_cast<double>(tp.val(loss)[0])))
    throw NumericError("train_vqa: loss diverged");
  tp.backward(loss);
  auto grads = pk.collect_grads();
  const double lr = cosine_lr(step, cfg.total_steps, cfg.lr, cfg.min_lr, cfg.warmup_steps);
  LrScaleFn scale_fn = [&cfg](const std::string& name) {
    return name.rfind("backbone.", 0) == 0 ? cfg.backbone_lr_scale : 1.0;
  };
  if (cfg.optimizer == OptKind::kAdamW) {
    adamw_step(merged, grads, opt, lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps, scale_fn);
  } else {
    adam_step(merged, grads, opt, lr, cfg.beta1, cfg.beta2, cfg.eps, scale_fn);
  }
  // write back
  for (auto& [n, t] : model.params.entries()) t = merged.at(n);
  for (auto& [n, t] : model.enhancer_aesthetic.entries()) t = merged.at(n);
  for (auto& [n, t] : model.enhancer_technical.entries()) t = merged.at(n);
}

}  // namespace eyesim

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eyesim/dataset.hpp"
#include "eyesim/enhance.hpp"
#include "eyesim/gradsuite.hpp"
#include "eyesim/optim.hpp"

using namespace eyesim;

namespace {

VideoClip<double> texture_clip(int64_t t, int64_t h, int64_t w, uint64_t seed) {
  GenConfig g;
  g.frames = t;
  g.h = h;
  g.w = w;
  g.seed = seed;
  return gen_clean_clip<double>(g, 0);
}

}  // namespace

TEST_CASE("cleannet: loops=0 returns the input unchanged") {
  CleanNetCfg cfg;
  cfg.blocks = {8, 2, ActKind::kLRelu};
  ParamStore<double> ps;
  RngStream rng(8);
  init_cleannet(ps, "cn", cfg, rng);
  VideoClip<double> v = texture_clip(2, 12, 12, 21);
  VideoClip<double> out = cleannet_forward(v, ps, "cn", cfg, 0);
  CHECK(out.frames.data == v.frames.data);
}

TEST_CASE("cleannet: all-zero parameters give the identity for any loop count") {
  CleanNetCfg cfg;
  cfg.blocks = {8, 2, ActKind::kLRelu};
  ParamStore<double> ps;
  RngStream rng(8);
  init_cleannet(ps, "cn", cfg, rng);
  for (auto& [name, t] : ps.entries()) std::fill(t.data.begin(), t.data.end(), 0.0);
  VideoClip<double> v = texture_clip(2, 12, 12, 22);
  for (int64_t loops : {1, 3, 5}) {
    VideoClip<double> out = cleannet_forward(v, ps, "cn", cfg, loops);
    CHECK(out.frames.data == v.frames.data);
  }
}

TEST_CASE("cleannet: fresh init (zero output conv) is the identity") {
  CleanNetCfg cfg;
  ParamStore<double> ps;
  RngStream rng(8);
  init_cleannet(ps, "cn", cfg, rng);
  VideoClip<double> v = texture_clip(1, 16, 16, 23);
  VideoClip<double> out = cleannet_forward(v, ps, "cn", cfg, cfg.loops);
  CHECK(out.frames.data == v.frames.data);
}

TEST_CASE("cleannet: loops=3 equals three manual unrolled applications (seed 8)") {
  CleanNetCfg cfg;
  cfg.blocks = {4, 1, ActKind::kLRelu};
  ParamStore<double> ps;
  RngStream rng(8);
  init_cleannet(ps, "cn", cfg, rng);
  RngStream r2(81);
  fill_uniform(ps.at("cn.conv_out.weight"), r2, -0.3, 0.3);
  fill_uniform(ps.at("cn.conv_out.bias"), r2, -0.05, 0.05);
  VideoClip<double> v = texture_clip(1, 10, 10, 24);
  Tape<double> tp;
  VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
  Var x = tp.leaf(frame_chw(v, 0));
  // manual unroll with the same residual builder
  Var cur = x;
  for (int i = 0; i < 3; ++i) cur = add(tp, cur, cleannet_residual(pk, "cn", cur, cfg));
  Tensor<double> manual = tp.val(clamp01(tp, cur));
  VideoClip<double> out = cleannet_forward(v, ps, "cn", cfg, 3);
  CHECK(max_abs_diff(frame_chw(out, 0), manual) == 0.0);
  // parameter shape mismatch is a configuration error
  CleanNetCfg bad = cfg;
  bad.blocks.channels = 6;
  CHECK_THROWS_AS(cleannet_forward(v, ps, "cn", bad, 3), Error);
}

TEST_CASE("flow_estimate: zero-initialized flow convs give zero flow; shape is HxWx2") {
  FlowCfg cfg;
  ParamStore<double> ps;
  RngStream rng(30);
  init_flownet(ps, "fl", cfg, rng);
  zero_flow_outputs(ps, "fl");
  VideoClip<double> v = texture_clip(2, 16, 12, 25);
  Tensor<double> flow = flow_estimate_hwc(frame_hwc(v, 0), frame_hwc(v, 1), ps, "fl", cfg);
  CHECK(flow.shape == Shape{16, 12, 2});
  for (double f : flow.data) CHECK(f == 0.0);
  // identical frames likewise
  Tensor<double> flow2 = flow_estimate_hwc(frame_hwc(v, 0), frame_hwc(v, 0), ps, "fl", cfg);
  for (double f : flow2.data) CHECK(f == 0.0);
  // too-small frames are rejected
  VideoClip<double> tiny = texture_clip(2, 6, 6, 26);
  CHECK_THROWS_AS(flow_estimate_hwc(frame_hwc(tiny, 0), frame_hwc(tiny, 1), ps, "fl", cfg),
                  InputError);
}

namespace {

// bandlimited random texture evaluated analytically at shifted coordinates
struct SineTexture {
  struct Wave {
    double ax, fx, fy, phase;
  };
  std::vector<Wave> waves[3];
  explicit SineTexture(RngStream& rng) {
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 4; ++k)
        waves[c].push_back({rng.uniform(0.10, 0.22), rng.uniform(-0.07, 0.07),
                            rng.uniform(-0.07, 0.07), rng.uniform(0, 6.283185307179586)});
  }
  double at(int c, double x, double y) const {
    double v = 0.5;
    for (const auto& w : waves[c]) v += w.ax * std::sin(6.283185307179586 * (w.fx * x + w.fy * y) + w.phase);
    return std::clamp(v, 0.0, 1.0);
  }
  Tensor<double> frame(int64_t h, int64_t wd, double dx, double dy) const {
    Tensor<double> f({3, h, wd});
    for (int c = 0; c < 3; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < wd; ++x)
          f[(c * h + y) * wd + x] = at(c, static_cast<double>(x) - dx, static_cast<double>(y) - dy);
    return f;
  }
};

}  // namespace

TEST_CASE("flow_estimate: trained on synthetic 1-pixel translations, EPE < 0.5 px") {
  FlowCfg cfg;
  ParamStore<double> ps;
  RngStream rng(derive_key(300, 1));
  init_flownet(ps, "fl", cfg, rng);
  OptimizerState<double> st;
  const int64_t H = 16, W = 16;
  // desk-scale domain: a fixed texture family with fresh shifts each step
  RngStream tex_rng(derive_key(300, 7));
  std::vector<SineTexture> texes;
  for (int i = 0; i < 4; ++i) texes.emplace_back(tex_rng);
  RngStream data_rng(derive_key(300, 2));
  for (int step = 0; step < 8000; ++step) {
    const SineTexture& tex = texes[static_cast<size_t>(data_rng.uniform_int(0, 3))];
    const double dx = static_cast<double>(data_rng.uniform_int(-1, 1));
    const double dy = static_cast<double>(data_rng.uniform_int(-1, 1));
    // neighbor content shifted by (dx,dy): ground-truth flow is (dx,dy)
    Tensor<double> ref = tex.frame(H, W, 0, 0);
    Tensor<double> nb = tex.frame(H, W, dx, dy);
    Tensor<double> gt({2, H, W});
    for (int64_t i = 0; i < H * W; ++i) {
      gt[i] = dx;
      gt[H * W + i] = dy;
    }
    Tape<double> tp;
    VarPack<double> pk(tp, ps);
    Var flow = flow_estimate(pk, "fl", tp.leaf(ref), tp.leaf(nb), cfg);
    Var loss = mse_to_const(tp, flow, gt);
    tp.backward(loss);
    adam_step(ps, pk.collect_grads(), st, 5e-3, 0.9, 0.99, 1e-8);
  }
  // held-out shifts on the same texture family
  RngStream eval_rng(derive_key(300, 3));
  double epe = 0;
  int n = 0;
  for (int i = 0; i < 24; ++i) {
    const SineTexture& tex = texes[static_cast<size_t>(eval_rng.uniform_int(0, 3))];
    const double dx = static_cast<double>(eval_rng.uniform_int(-1, 1));
    const double dy = static_cast<double>(eval_rng.uniform_int(-1, 1));
    Tensor<double> ref = tex.frame(H, W, 0, 0);
    Tensor<double> nb = tex.frame(H, W, dx, dy);
    Tape<double> tp;
    VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
    Var flow = flow_estimate(pk, "fl", tp.leaf(ref), tp.leaf(nb), cfg);
    const Tensor<double>& fv = tp.val(flow);
    // interior mean endpoint error (borders lack evidence under replication)
    for (int64_t y = 3; y < H - 3; ++y)
      for (int64_t x = 3; x < W - 3; ++x) {
        const double ex = fv[0 * H * W + y * W + x] - dx;
        const double ey = fv[1 * H * W + y * W + x] - dy;
        epe += std::sqrt(ex * ex + ey * ey);
        n += 1;
      }
  }
  epe /= n;
  MESSAGE("mean endpoint error: " << epe);
  CHECK(epe < 0.5);
}

TEST_CASE("vsrmini: fresh init (zero fuse conv) is the identity; shape preserved") {
  VsrMiniCfg cfg;
  ParamStore<double> ps;
  RngStream rng(6);
  init_vsrmini(ps, "vsr", cfg, rng);
  VideoClip<double> v = texture_clip(3, 16, 16, 27);
  VideoClip<double> out = vsrmini_forward(v, ps, "vsr", cfg);
  CHECK(out.frames.shape == v.frames.shape);
  CHECK(out.frames.data == v.frames.data);
  // single frame: both hidden states zero-initialized, still identity at init
  VideoClip<double> one = texture_clip(1, 16, 16, 28);
  VideoClip<double> out1 = vsrmini_forward(one, ps, "vsr", cfg);
  CHECK(out1.frames.data == one.frames.data);
}

TEST_CASE("vsrmini: T=3 equals the step-by-step manual recurrence (seed 6)") {
  VsrMiniCfg cfg;
  cfg.blocks = {4, 1, ActKind::kLRelu};
  cfg.flow.channels = 4;
  ParamStore<double> ps;
  RngStream rng(6);
  init_vsrmini(ps, "vsr", cfg, rng);
  RngStream r2(61);
  fill_uniform(ps.at("vsr.fuse.weight"), r2, -0.2, 0.2);
  fill_uniform(ps.at("vsr.flow.coarse.conv3.weight"), r2, -0.05, 0.05);
  VideoClip<double> v = texture_clip(3, 12, 12, 29);
  // manual unrolled recurrence with the same primitives
  Tape<double> tp;
  VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
  std::vector<Var> f{tp.leaf(frame_chw(v, 0)), tp.leaf(frame_chw(v, 1)), tp.leaf(frame_chw(v, 2))};
  auto zeros = [&] { return tp.leaf(Tensor<double>::zeros({4, 12, 12})); };
  Var hb2 = vsr_direction_step(pk, "vsr.backward", f[2], zeros(), cfg);
  Var hb1 = vsr_direction_step(pk, "vsr.backward", f[1],
                               warp_chw(tp, hb2, flow_estimate(pk, "vsr.flow", f[1], f[2], cfg.flow)),
                               cfg);
  Var hb0 = vsr_direction_step(pk, "vsr.backward", f[0],
                               warp_chw(tp, hb1, flow_estimate(pk, "vsr.flow", f[0], f[1], cfg.flow)),
                               cfg);
  Var hf0 = vsr_direction_step(pk, "vsr.forward", f[0], zeros(), cfg);
  Var hf1 = vsr_direction_step(pk, "vsr.forward", f[1],
                               warp_chw(tp, hf0, flow_estimate(pk, "vsr.flow", f[1], f[0], cfg.flow)),
                               cfg);
  Var hf2 = vsr_direction_step(pk, "vsr.forward", f[2],
                               warp_chw(tp, hf1, flow_estimate(pk, "vsr.flow", f[2], f[1], cfg.flow)),
                               cfg);
  std::vector<Tensor<double>> manual;
  for (auto [ff, hf, hb] : {std::tuple{f[0], hf0, hb0}, {f[1], hf1, hb1}, {f[2], hf2, hb2}}) {
    Var fused = conv_frame(pk, "vsr.fuse", concat_axis(tp, {hf, hb}, 0));
    manual.push_back(tp.val(clamp01(tp, add(tp, ff, fused))));
  }
  VideoClip<double> out = vsrmini_forward(v, ps, "vsr", cfg);
  for (int64_t t = 0; t < 3; ++t) CHECK(max_abs_diff(frame_chw(out, t), manual[t]) == 0.0);
}

TEST_CASE("enhancers keep outputs inside [0,1]") {
  VsrMiniCfg vcfg;
  vcfg.blocks = {4, 1, ActKind::kLRelu};
  vcfg.flow.channels = 4;
  CleanNetCfg ccfg;
  ccfg.blocks = {4, 1, ActKind::kLRelu};
  ParamStore<float> ps;
  RngStream rng(99);
  init_vsrmini(ps, "vsr", vcfg, rng);
  init_cleannet(ps, "cn", ccfg, rng);
  // random output convs push values out of range before the clamp
  RngStream r2(991);
  fill_uniform(ps.at("vsr.fuse.weight"), r2, -1.0, 1.0);
  fill_uniform(ps.at("cn.conv_out.weight"), r2, -1.0, 1.0);
  fill_uniform(ps.at("cn.conv_out.bias"), r2, -0.5, 0.5);
  GenConfig g;
  g.frames = 2;
  g.h = 12;
  g.w = 12;
  VideoClip<float> v = gen_clean_clip<float>(g, 9);
  for (const VideoClip<float>& out :
       {vsrmini_forward(v, ps, "vsr", vcfg), cleannet_forward(v, ps, "cn", ccfg, 3)}) {
    for (float x : out.frames.data) {
      CHECK(x >= 0.0f);
      CHECK(x <= 1.0f);
    }
  }
}

TEST_CASE("gradient suite: enhance entries pass at 1e-4") {
  for (auto& e : gradient_suite("enhance")) {
    auto rep = e.run();
    INFO("entry: " << e.name << " max_rel_err=" << rep.max_rel_err);
    CHECK(rep.max_rel_err <= e.tol);
  }
}

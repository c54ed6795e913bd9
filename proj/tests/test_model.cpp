#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eyesim/dataset.hpp"
#include "eyesim/gradsuite.hpp"
#include "eyesim/model.hpp"

using namespace eyesim;

namespace {

Tensor<double> rnd(Shape s, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  RngStream rng(seed);
  return random_uniform<double>(std::move(s), rng, lo, hi);
}

}  // namespace

TEST_CASE("backbone: spatial dims shrink to ceil(H/8), temporal extent kept") {
  BackboneCfg cfg;
  cfg.channels = 6;
  ParamStore<double> ps;
  RngStream rng(12);
  init_backbone(ps, "bb", cfg, rng);
  for (auto [h, w] : {std::pair<int64_t, int64_t>{32, 32}, {24, 40}, {17, 9}}) {
    Tape<double> tp;
    VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
    Var x = tp.leaf(rnd({1, 3, 3, h, w}, 100, 0, 1));
    Var f = backbone_forward(pk, "bb", x, cfg);
    const Shape& s = tp.val(f).shape;
    CHECK(s == Shape{1, 6, 3, (h + 7) / 8, (w + 7) / 8});
  }
  // too-small input is rejected
  Tape<double> tp;
  VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
  Var x = tp.leaf(rnd({1, 3, 2, 4, 4}, 101, 0, 1));
  CHECK_THROWS_AS(backbone_forward(pk, "bb", x, cfg), InputError);
}

TEST_CASE("backbone: zero input with zero biases gives zero features") {
  BackboneCfg cfg;
  cfg.channels = 4;
  ParamStore<double> ps;
  RngStream rng(12);
  init_backbone(ps, "bb", cfg, rng);  // biases start at zero
  Tape<double> tp;
  VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
  Var x = tp.leaf(Tensor<double>::zeros({1, 3, 2, 16, 16}));
  Var f = backbone_forward(pk, "bb", x, cfg);
  for (double v : tp.val(f).data) CHECK(v == 0.0);
}

TEST_CASE("backbone: seed-12 matches the composed-op oracle") {
  BackboneCfg cfg;
  cfg.channels = 5;
  cfg.act = ActKind::kLRelu;
  ParamStore<double> ps;
  RngStream rng(12);
  init_backbone(ps, "bb", cfg, rng);
  Tensor<double> x = rnd({1, 3, 2, 16, 16}, 12, 0, 1);
  Tape<double> tp;
  VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
  Var xv = tp.leaf(x);
  Var got = backbone_forward(pk, "bb", xv, cfg);
  // sequential application of the audited primitives
  Var h = conv3d_same(pk, "bb.stem", xv, Stride3{1, 2, 2});
  h = activation(tp, h, cfg.act);
  for (int64_t i = 0; i < cfg.blocks; ++i) {
    Var r = conv3d_same(pk, "bb.block" + std::to_string(i) + ".conv1", h);
    r = activation(tp, r, cfg.act);
    r = conv3d_same(pk, "bb.block" + std::to_string(i) + ".conv2", r);
    h = add(tp, h, r);
    if (i + 1 < cfg.blocks) {
      h = conv3d_same(pk, "bb.down" + std::to_string(i), h, Stride3{1, 2, 2});
      h = activation(tp, h, cfg.act);
    }
  }
  CHECK(max_abs_diff(tp.val(got), tp.val(h)) == 0.0);
}

TEST_CASE("assemble_input: append and replace modes") {
  GenConfig g;
  g.frames = 32;
  g.h = 12;
  g.w = 12;
  VideoClip<float> orig = gen_clean_clip<float>(g, 0);
  VideoClip<float> enh = gen_clean_clip<float>(g, 1);
  // n_concat = 0 returns the original untouched
  CHECK(assemble_input(orig, enh, 0, AssembleMode::kAppend).frames.data == orig.frames.data);
  // append: 32 + 10 -> 42 frames, enhanced at the tail
  VideoClip<float> app = assemble_input(orig, enh, 10, AssembleMode::kAppend);
  CHECK(app.t() == 42);
  for (int64_t t = 0; t < 32; ++t)
    CHECK(max_abs_diff(frame_hwc(app, t), frame_hwc(orig, t)) == 0.0);
  CHECK(max_abs_diff(frame_hwc(app, 32), frame_hwc(enh, uniform_sample_index(0, 32, 10))) == 0.0);
  // replace: frame count unchanged, about a third substituted
  VideoClip<float> rep = assemble_input(orig, enh, 10, AssembleMode::kReplace);
  CHECK(rep.t() == 32);
  int64_t changed = 0;
  for (int64_t t = 0; t < 32; ++t)
    if (max_abs_diff(frame_hwc(rep, t), frame_hwc(orig, t)) > 0) changed += 1;
  CHECK(changed == 10);
  // n_concat beyond the enhanced clip is rejected
  CHECK_THROWS_AS(assemble_input(orig, enh, 40, AssembleMode::kAppend), InputError);
}

TEST_CASE("dyt: fixed points and tanh(1) value") {
  ParamStore<double> ps;
  RngStream rng(1);
  init_dyt(ps, "d", 3, rng, "t");
  RngStream r2(2);
  fill_uniform(ps.at("d.bias"), r2, -0.5, 0.5);
  Tape<double> tp;
  VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
  // x = 0 -> b per channel
  Var x0 = tp.leaf(Tensor<double>::zeros({1, 3, 1, 2, 2}));
  const Tensor<double>& out0 = tp.val(dyt(pk, "d", x0));
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < 4; ++i) CHECK(out0[c * 4 + i] == ps.at("d.bias")[c]);
  // alpha = 0 -> b regardless of x
  ps.at("d.alpha")[0] = 0.0;
  Tape<double> tp2;
  VarPack<double> pk2(tp2, ps, [](const std::string&) { return false; });
  Var xr = tp2.leaf(rnd({1, 3, 1, 2, 2}, 3));
  const Tensor<double>& out1 = tp2.val(dyt(pk2, "d", xr));
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < 4; ++i) CHECK(out1[c * 4 + i] == ps.at("d.bias")[c]);
  // alpha=1, w=1, b=0, x=1 -> tanh(1)
  ps.at("d.alpha")[0] = 1.0;
  std::fill(ps.at("d.bias").data.begin(), ps.at("d.bias").data.end(), 0.0);
  Tape<double> tp3;
  VarPack<double> pk3(tp3, ps, [](const std::string&) { return false; });
  Var one = tp3.leaf(Tensor<double>::full({1, 3, 1, 1, 1}, 1.0));
  CHECK(tp3.val(dyt(pk3, "d", one))[0] == doctest::Approx(std::tanh(1.0)).epsilon(1e-15));
  CHECK(std::tanh(1.0) == doctest::Approx(0.761594).epsilon(1e-6));
}

TEST_CASE("gaze_attention: zeroed W2 gives A = 0.5 and O = Z/2 exactly") {
  HeadCfg cfg;
  cfg.channels = 4;
  ParamStore<double> ps;
  RngStream rng(13);
  init_gaze(ps, "g", cfg, rng, "t");
  std::fill(ps.at("g.w2.weight").data.begin(), ps.at("g.w2.weight").data.end(), 0.0);
  std::fill(ps.at("g.w2.bias").data.begin(), ps.at("g.w2.bias").data.end(), 0.0);
  Tape<double> tp;
  VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
  Tensor<double> z = rnd({2, 4, 2, 3, 3}, 131);
  Var o = gaze_attention(pk, "g", tp.leaf(z), cfg);
  const Tensor<double>& ov = tp.val(o);
  for (int64_t i = 0; i < z.numel(); ++i) CHECK(ov[i] == 0.5 * z[i]);
}

TEST_CASE("gaze_attention: gate bound |O| <= |Z| and shape preservation") {
  HeadCfg cfg;
  cfg.channels = 8;
  ParamStore<double> ps;
  RngStream rng(132);
  init_gaze(ps, "g", cfg, rng, "t");
  Tape<double> tp;
  VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
  Tensor<double> z = rnd({1, 8, 3, 4, 4}, 133);
  Var gate = kNoVar;
  Var o = gaze_attention(pk, "g", tp.leaf(z), cfg, &gate);
  const Tensor<double>& ov = tp.val(o);
  CHECK(ov.shape == z.shape);
  for (int64_t i = 0; i < z.numel(); ++i) CHECK(std::abs(ov[i]) <= std::abs(z[i]));
  for (double a : tp.val(gate).data) {
    CHECK(a > 0.0);
    CHECK(a < 1.0);
  }
}

TEST_CASE("gaze_attention: seed-13 matches a scalar-loop oracle of the gate composition") {
  HeadCfg cfg;
  cfg.channels = 4;  // C' = 1
  ParamStore<double> ps;
  RngStream rng(13);
  init_gaze(ps, "g", cfg, rng, "t");
  RngStream r2(134);
  fill_uniform(ps.at("g.dyt.weight"), r2, 0.5, 1.5);
  fill_uniform(ps.at("g.dyt.bias"), r2, -0.3, 0.3);
  Tensor<double> z = rnd({2, 4, 2, 3, 3}, 13);
  Tape<double> tp;
  VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
  const Tensor<double>& got = tp.val(gaze_attention(pk, "g", tp.leaf(z), cfg));
  // independent scalar evaluation
  const int64_t B = 2, C = 4, inner = 2 * 3 * 3, Cp = cfg.cprime();
  const Tensor<double>&w1 = ps.at("g.w1.weight"), &b1 = ps.at("g.w1.bias");
  const Tensor<double>&w2 = ps.at("g.w2.weight"), &b2 = ps.at("g.w2.bias");
  const double alpha = ps.at("g.dyt.alpha")[0];
  for (int64_t b = 0; b < B; ++b) {
    std::vector<double> q(C, 0.0);
    for (int64_t c = 0; c < C; ++c) {
      for (int64_t i = 0; i < inner; ++i) q[c] += z[(b * C + c) * inner + i];
      q[c] /= static_cast<double>(inner);
    }
    std::vector<double> ahat(Cp);
    for (int64_t o = 0; o < Cp; ++o) {
      double acc = b1[o];
      for (int64_t c = 0; c < C; ++c) acc += w1[o * C + c] * q[c];
      double d = std::tanh(alpha * acc) * ps.at("g.dyt.weight")[o] + ps.at("g.dyt.bias")[o];
      ahat[o] = d * 0.5 * (1.0 + std::erf(d / std::sqrt(2.0)));  // gelu
    }
    for (int64_t c = 0; c < C; ++c) {
      double acc = b2[c];
      for (int64_t o = 0; o < Cp; ++o) acc += w2[c * Cp + o] * ahat[o];
      double gate = 1.0 / (1.0 + std::exp(-acc));
      for (int64_t i = 0; i < inner; ++i)
        CHECK(got[(b * C + c) * inner + i] ==
              doctest::Approx(gate * z[(b * C + c) * inner + i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("scan: identity kernel configuration gives Y = X exactly") {
  HeadCfg cfg;
  cfg.channels = 3;
  ParamStore<double> ps;
  RngStream rng(14);
  init_scan(ps, "s", cfg, rng, "t");
  Tensor<double>& wtau = ps.at("s.wtau");
  std::fill(wtau.data.begin(), wtau.data.end(), 0.0);
  for (int64_t c = 0; c < 3; ++c) wtau[idx5(wtau.shape, c, c, 1, 0, 0)] = 1.0;  // W_0 = I
  Tensor<double>& proj = ps.at("s.proj");
  std::fill(proj.data.begin(), proj.data.end(), 0.0);
  for (int64_t c = 0; c < 3; ++c) proj[idx5(proj.shape, c, c, 0, 0, 0)] = 1.0;  // P = I
  Tensor<double> x = rnd({1, 3, 4, 2, 2}, 141);
  Tape<double> tp;
  VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
  const Tensor<double>& y = tp.val(scan(pk, "s", tp.leaf(x), cfg, ActKind::kIdentity));
  CHECK(y.data == x.data);
}

TEST_CASE("scan: T=1 with all-identity temporal slices gives 3X (replicate padding)") {
  HeadCfg cfg;
  cfg.channels = 2;
  ParamStore<double> ps;
  RngStream rng(14);
  init_scan(ps, "s", cfg, rng, "t");
  Tensor<double>& wtau = ps.at("s.wtau");
  std::fill(wtau.data.begin(), wtau.data.end(), 0.0);
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t k = 0; k < 3; ++k) wtau[idx5(wtau.shape, c, c, k, 0, 0)] = 1.0;
  Tensor<double>& proj = ps.at("s.proj");
  std::fill(proj.data.begin(), proj.data.end(), 0.0);
  for (int64_t c = 0; c < 2; ++c) proj[idx5(proj.shape, c, c, 0, 0, 0)] = 1.0;
  Tensor<double> x = rnd({1, 2, 1, 3, 3}, 142);
  Tape<double> tp;
  VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
  const Tensor<double>& y = tp.val(scan(pk, "s", tp.leaf(x), cfg, ActKind::kIdentity));
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == doctest::Approx(3.0 * x[i]).epsilon(1e-14));
}

TEST_CASE("scan: seed-14 matches a loop oracle of the temporal aggregation") {
  HeadCfg cfg;
  cfg.channels = 3;
  ParamStore<double> ps;
  RngStream rng(14);
  init_scan(ps, "s", cfg, rng, "t");
  Tensor<double> x = rnd({1, 3, 4, 2, 2}, 14);
  Tape<double> tp;
  VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
  const Tensor<double>& got = tp.val(scan(pk, "s", tp.leaf(x), cfg, ActKind::kGelu));
  const Tensor<double>&wtau = ps.at("s.wtau"), &proj = ps.at("s.proj");
  const int64_t C = 3, Tn = 4, HW = 4;
  for (int64_t t = 0; t < Tn; ++t)
    for (int64_t p = 0; p < HW; ++p) {
      std::vector<double> zt(C, 0.0);
      for (int64_t o = 0; o < C; ++o) {
        double acc = 0;
        for (int64_t tau = -1; tau <= 1; ++tau) {
          int64_t ts = std::clamp<int64_t>(t + tau, 0, Tn - 1);
          for (int64_t c = 0; c < C; ++c)
            acc += wtau[idx5(wtau.shape, o, c, tau + 1, 0, 0)] * x[(c * Tn + ts) * HW + p];
        }
        zt[o] = acc * 0.5 * (1.0 + std::erf(acc / std::sqrt(2.0)));
      }
      for (int64_t o = 0; o < C; ++o) {
        double acc = 0;
        for (int64_t c = 0; c < C; ++c) acc += proj[idx5(proj.shape, o, c, 0, 0, 0)] * zt[c];
        CHECK(got[(o * Tn + t) * HW + p] == doctest::Approx(acc).epsilon(1e-12));
      }
    }
}

TEST_CASE("head_forward: equal branch scores pass through; saturated gate selects gaze") {
  HeadCfg cfg;
  cfg.channels = 4;
  ParamStore<double> ps;
  RngStream rng(15);
  init_head(ps, "h", cfg, rng);
  // zero scorer weights with bias c on both branches -> score == c
  ps.at("h.score_gaze.bias")[0] = 2.5;
  ps.at("h.score_scan.bias")[0] = 2.5;
  RngStream r2(151);
  fill_uniform(ps.at("h.gate.weight"), r2, -2.0, 2.0);  // arbitrary gate
  Tape<double> tp;
  VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
  HeadDiagnostics diag;
  Var s = head_forward(pk, "h", tp.leaf(rnd({1, 4, 2, 3, 3}, 152)), cfg, &diag);
  CHECK(tp.val(s)[0] == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(diag.gate > 0.0);
  CHECK(diag.gate < 1.0);
  // gate saturated high -> exactly the gaze branch score
  ps.at("h.score_scan.bias")[0] = -1.0;
  std::fill(ps.at("h.gate.weight").data.begin(), ps.at("h.gate.weight").data.end(), 0.0);
  ps.at("h.gate.bias")[0] = 100.0;
  Tape<double> tp2;
  VarPack<double> pk2(tp2, ps, [](const std::string&) { return false; });
  HeadDiagnostics d2;
  Var s2 = head_forward(pk2, "h", tp2.leaf(rnd({1, 4, 2, 3, 3}, 153)), cfg, &d2);
  CHECK(d2.gate == 1.0);
  CHECK(tp2.val(s2)[0] == d2.s_gaze);
}

TEST_CASE("head_forward: seed-15 matches the composed oracle; score between branches") {
  HeadCfg cfg;
  cfg.channels = 4;
  ParamStore<double> ps;
  RngStream rng(15);
  init_head(ps, "h", cfg, rng);
  RngStream r2(154);
  for (const char* n : {"h.score_gaze.weight", "h.score_scan.weight", "h.gate.weight"})
    fill_uniform(ps.at(n), r2, -0.8, 0.8);
  Tensor<double> z = rnd({1, 4, 2, 3, 3}, 15);
  Tape<double> tp;
  VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
  HeadDiagnostics diag;
  double got = tp.val(head_forward(pk, "h", tp.leaf(z), cfg, &diag))[0];
  // composed from the already-tested pieces
  Tape<double> tp2;
  VarPack<double> pk2(tp2, ps, [](const std::string&) { return false; });
  Var zv = tp2.leaf(z);
  double sg = tp2.val(pooled_linear(pk2, "h.score_gaze", gaze_attention(pk2, "h.gaze", zv, cfg)))[0];
  double ss = tp2.val(pooled_linear(pk2, "h.score_scan", scan(pk2, "h.scan", zv, cfg, cfg.phi)))[0];
  double g = 1.0 / (1.0 + std::exp(-tp2.val(pooled_linear(pk2, "h.gate", zv))[0]));
  CHECK(got == doctest::Approx(g * sg + (1 - g) * ss).epsilon(1e-12));
  CHECK(got >= std::min(sg, ss) - 1e-12);
  CHECK(got <= std::max(sg, ss) + 1e-12);
  CHECK(diag.gate_channels.size() == 4);
}

TEST_CASE("head: every parameter receives nonzero gradient from the score") {
  HeadCfg cfg;
  cfg.channels = 4;
  ParamStore<double> ps;
  RngStream rng(15);
  init_head(ps, "h", cfg, rng);
  RngStream r2(155);
  for (const char* n : {"h.score_gaze.weight", "h.score_scan.weight", "h.gate.weight"})
    fill_uniform(ps.at(n), r2, -0.8, 0.8);
  Tape<double> tp;
  VarPack<double> pk(tp, ps);
  Var s = head_forward(pk, "h", tp.leaf(rnd({1, 4, 3, 3, 3}, 156)), cfg);
  tp.backward(s);
  auto grads = pk.collect_grads();
  for (const auto& [name, t] : ps.entries()) {
    REQUIRE(grads.count(name) == 1);
    double linf = 0;
    for (double v : grads.at(name).data) linf = std::max(linf, std::abs(v));
    INFO("param " << name);
    CHECK(linf > 0.0);
  }
}

TEST_CASE("fuse_branches: equal scores pass through; init is the arithmetic mean exactly") {
  ParamStore<double> ps;
  init_fusion(ps, "f");
  Tape<double> tp;
  VarPack<double> pk(tp, ps, [](const std::string&) { return false; });
  Var sa = tp.leaf(Tensor<double>::scalar(3.0));
  Var st = tp.leaf(Tensor<double>::scalar(3.0));
  double lambda = 0;
  CHECK(tp.val(fuse_branches(pk, "f", sa, st, &lambda))[0] == 3.0);
  CHECK(lambda == 0.5);
  // arbitrary scores: logit 0 -> exactly (a+b)/2
  RngStream rng(157);
  for (int i = 0; i < 20; ++i) {
    double a = rng.uniform(-3, 6), b = rng.uniform(-3, 6);
    Tape<double> t2;
    VarPack<double> p2(t2, ps, [](const std::string&) { return false; });
    double mos = t2.val(fuse_branches(p2, "f", t2.leaf(Tensor<double>::scalar(a)),
                                      t2.leaf(Tensor<double>::scalar(b))))[0];
    CHECK(mos == (a + b) / 2.0);
    CHECK(mos >= std::min(a, b));
    CHECK(mos <= std::max(a, b));
  }
}

TEST_CASE("gradient suite: model entries pass at 1e-4") {
  for (auto& e : gradient_suite("model")) {
    auto rep = e.run();
    INFO("entry: " << e.name << " max_rel_err=" << rep.max_rel_err);
    CHECK(rep.max_rel_err <= e.tol);
  }
}

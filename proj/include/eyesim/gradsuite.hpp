#pragma once

#include <functional>
#include <string>
#include <vector>

#include "eyesim/enhance.hpp"
#include "eyesim/gradcheck.hpp"
#include "eyesim/losses.hpp"
#include "eyesim/model.hpp"

namespace eyesim {

// One finite-difference check per learnable operation, on small double
// precision inputs. Shared by the check-grads subcommand, the unit tests and
// the acceptance gate.
struct GradSuiteEntry {
  std::string module;
  std::string name;
  double tol = 1e-4;
  std::function<FiniteDiffReport()> run;
};

namespace gradsuite_detail {

inline Tensor<double> rnd(Shape s, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  RngStream rng(derive_key(4242, seed));
  return random_uniform<double>(std::move(s), rng, lo, hi);
}

// check every parameter of `store` plus the extra named tensors
inline FiniteDiffReport check_network(
    const ParamStore<double>& store,
    std::vector<std::pair<std::string, Tensor<double>>> extra_inputs,
    const std::function<Var(Tape<double>&, VarPack<double>&, const std::vector<Var>&)>& build) {
  std::vector<std::pair<std::string, Tensor<double>>> inputs;
  for (const auto& [name, t] : store.entries()) inputs.emplace_back(name, t);
  const size_t n_params = inputs.size();
  for (auto& e : extra_inputs) inputs.push_back(e);
  auto builder = [&store, n_params, &build](Tape<double>& tp, const std::vector<Var>& vars) {
    VarPack<double> pk(tp, store);
    size_t k = 0;
    for (const auto& [name, t] : store.entries()) pk.preset(name, vars[k++]);
    std::vector<Var> extras(vars.begin() + static_cast<int64_t>(n_params), vars.end());
    return build(tp, pk, extras);
  };
  return finite_diff_check(std::move(inputs), builder);
}

}  // namespace gradsuite_detail

inline std::vector<GradSuiteEntry> gradient_suite(const std::string& module_filter = "") {
  using gradsuite_detail::check_network;
  using gradsuite_detail::rnd;
  std::vector<GradSuiteEntry> entries;
  auto put = [&](const std::string& module, const std::string& name,
                 std::function<FiniteDiffReport()> fn) {
    if (!module_filter.empty() && module_filter != module) return;
    entries.push_back({module, name, 1e-4, std::move(fn)});
  };

  // ---- numeric-core ----
  put("numeric-core", "conv3d", [] {
    auto build = [](Tape<double>& tp, const std::vector<Var>& v) {
      return mean_all(tp, conv3d(tp, v[0], v[1], v[2], Stride3{1, 2, 2}, Pad3{1, 1, 1}));
    };
    return finite_diff_check({{"x", rnd({1, 2, 3, 5, 5}, 1)},
                              {"w", rnd({2, 2, 3, 3, 3}, 2)},
                              {"b", rnd({2}, 3)}},
                             build);
  });
  put("numeric-core", "warp_bilinear", [] {
    auto build = [](Tape<double>& tp, const std::vector<Var>& v) {
      Var o = warp_chw(tp, v[0], v[1]);
      return mean_all(tp, mul(tp, o, o));
    };
    return finite_diff_check(
        {{"frame", rnd({2, 5, 5}, 4, 0.0, 1.0)}, {"flow", rnd({2, 5, 5}, 5, -0.3, 0.3)}}, build);
  });
  put("numeric-core", "bilinear_resize2d", [] {
    auto build = [](Tape<double>& tp, const std::vector<Var>& v) {
      Var o = resize_chw(tp, v[0], 6, 3);
      return mean_all(tp, mul(tp, o, o));
    };
    return finite_diff_check({{"x", rnd({2, 4, 5}, 6)}}, build);
  });
  put("numeric-core", "global_avg_pool", [] {
    auto build = [](Tape<double>& tp, const std::vector<Var>& v) {
      Var p = global_avg_pool(tp, v[0]);
      return sum_all(tp, mul(tp, p, p));
    };
    return finite_diff_check({{"x", rnd({2, 2, 2, 3, 3}, 7)}}, build);
  });
  put("numeric-core", "activations", [] {
    auto build = [](Tape<double>& tp, const std::vector<Var>& v) {
      Var a = activation(tp, v[0], ActKind::kTanh);
      a = activation(tp, a, ActKind::kGelu);
      a = activation(tp, a, ActKind::kSigmoid);
      return mean_all(tp, a);
    };
    return finite_diff_check({{"x", rnd({3, 4}, 8)}}, build);
  });
  put("numeric-core", "lrelu_off_kink", [] {
    // inputs kept clear of the non-smooth point at 0
    Tensor<double> x = rnd({3, 4}, 9, 0.2, 1.0);
    for (int64_t i = 0; i < x.numel(); i += 2) x[i] = -x[i];
    return finite_diff_check({{"x", x}}, [](Tape<double>& tp, const std::vector<Var>& v) {
      return mean_all(tp, activation(tp, v[0], ActKind::kLRelu, 0.1));
    });
  });

  // ---- model: head pieces ----
  put("model", "dyt", [] {
    HeadCfg cfg;
    cfg.channels = 3;
    ParamStore<double> ps;
    RngStream rng(derive_key(4242, 10));
    init_dyt(ps, "dyt", 3, rng, "t");
    return check_network(ps, {{"x", rnd({2, 3, 2, 3, 3}, 11)}},
                         [](Tape<double>& tp, VarPack<double>& pk, const std::vector<Var>& ex) {
                           return mean_all(tp, dyt(pk, "dyt", ex[0]));
                         });
  });
  put("model", "gaze_attention", [] {
    HeadCfg cfg;
    cfg.channels = 4;
    ParamStore<double> ps;
    RngStream rng(derive_key(4242, 12));
    init_gaze(ps, "gaze", cfg, rng, "t");
    return check_network(ps, {{"z", rnd({2, 4, 2, 3, 3}, 13)}},
                         [cfg](Tape<double>& tp, VarPack<double>& pk, const std::vector<Var>& ex) {
                           Var o = gaze_attention(pk, "gaze", ex[0], cfg);
                           return mean_all(tp, mul(tp, o, o));
                         });
  });
  put("model", "scan", [] {
    HeadCfg cfg;
    cfg.channels = 3;
    ParamStore<double> ps;
    RngStream rng(derive_key(4242, 14));
    init_scan(ps, "scan", cfg, rng, "t");
    return check_network(ps, {{"x", rnd({1, 3, 4, 2, 2}, 15)}},
                         [cfg](Tape<double>& tp, VarPack<double>& pk, const std::vector<Var>& ex) {
                           Var o = scan(pk, "scan", ex[0], cfg, ActKind::kGelu);
                           return mean_all(tp, mul(tp, o, o));
                         });
  });
  put("model", "head_forward", [] {
    HeadCfg cfg;
    cfg.channels = 4;
    ParamStore<double> ps;
    RngStream rng(derive_key(4242, 16));
    init_head(ps, "head", cfg, rng);
    // scorers are zero-initialized; nudge them so the gate path carries signal
    RngStream r2(derive_key(4242, 17));
    for (const char* n : {"head.score_gaze.weight", "head.score_scan.weight", "head.gate.weight"})
      fill_uniform(ps.at(n), r2, -0.5, 0.5);
    return check_network(ps, {{"z", rnd({1, 4, 2, 3, 3}, 18)}},
                         [cfg](Tape<double>& tp, VarPack<double>& pk, const std::vector<Var>& ex) {
                           HeadDiagnostics diag;
                           return head_forward(pk, "head", ex[0], cfg, &diag);
                         });
  });
  put("model", "fuse_branches", [] {
    ParamStore<double> ps;
    init_fusion(ps, "fusion");
    ps.at("fusion.logit")[0] = 0.3;
    return check_network(ps, {{"sa", rnd({1}, 19)}, {"st", rnd({1}, 20)}},
                         [](Tape<double>& tp, VarPack<double>& pk, const std::vector<Var>& ex) {
                           return fuse_branches(pk, "fusion", ex[0], ex[1]);
                         });
  });
  put("model", "backbone_blocks", [] {
    BackboneCfg cfg;
    cfg.channels = 4;
    cfg.act = ActKind::kGelu;
    ParamStore<double> ps;
    RngStream rng(derive_key(4242, 21));
    init_backbone(ps, "bb", cfg, rng);
    return check_network(ps, {{"x", rnd({1, 3, 2, 8, 8}, 22, 0.0, 1.0)}},
                         [cfg](Tape<double>& tp, VarPack<double>& pk, const std::vector<Var>& ex) {
                           Var f = backbone_forward(pk, "bb", ex[0], cfg);
                           return mean_all(tp, mul(tp, f, f));
                         });
  });

  // ---- enhance ----
  put("enhance", "cleannet", [] {
    CleanNetCfg cfg;
    cfg.blocks = {4, 1, ActKind::kGelu};
    cfg.loops = 2;
    ParamStore<double> ps;
    RngStream rng(derive_key(4242, 23));
    init_cleannet(ps, "cn", cfg, rng);
    // move off the zero-init identity so the output conv has signal
    RngStream r2(derive_key(4242, 24));
    fill_uniform(ps.at("cn.conv_out.weight"), r2, -0.2, 0.2);
    return check_network(ps, {{"frame", rnd({3, 6, 6}, 25, 0.1, 0.9)}},
                         [cfg](Tape<double>& tp, VarPack<double>& pk, const std::vector<Var>& ex) {
                           Var y = cleannet_frame(pk, "cn", ex[0], cfg, cfg.loops);
                           return mean_all(tp, mul(tp, y, y));
                         });
  });
  put("enhance", "flow_estimate", [] {
    FlowCfg cfg;
    cfg.channels = 4;
    cfg.act = ActKind::kGelu;
    ParamStore<double> ps;
    RngStream rng(derive_key(4242, 26));
    init_flownet(ps, "fl", cfg, rng);
    RngStream r2(derive_key(4242, 27));
    for (const char* n : {"fl.coarse.conv3.weight", "fl.refine1.conv2.weight", "fl.refine0.conv2.weight"})
      fill_uniform(ps.at(n), r2, -0.05, 0.05);
    return check_network(
        ps, {{"ref", rnd({3, 8, 8}, 28, 0.0, 1.0)}, {"nb", rnd({3, 8, 8}, 29, 0.0, 1.0)}},
        [cfg](Tape<double>& tp, VarPack<double>& pk, const std::vector<Var>& ex) {
          Var f = flow_estimate(pk, "fl", ex[0], ex[1], cfg);
          return mean_all(tp, mul(tp, f, f));
        });
  });
  put("enhance", "vsrmini", [] {
    VsrMiniCfg cfg;
    cfg.blocks = {4, 1, ActKind::kGelu};
    cfg.flow.channels = 4;
    cfg.flow.act = ActKind::kGelu;
    ParamStore<double> ps;
    RngStream rng(derive_key(4242, 30));
    init_vsrmini(ps, "vsr", cfg, rng);
    RngStream r2(derive_key(4242, 31));
    fill_uniform(ps.at("vsr.fuse.weight"), r2, -0.1, 0.1);
    fill_uniform(ps.at("vsr.flow.coarse.conv3.weight"), r2, -0.02, 0.02);
    // fractional flow biases keep warp taps away from integer crossings,
    // where bilinear sampling is non-smooth and central differences disagree
    ps.at("vsr.flow.coarse.conv3.bias")[0] = 0.11;
    ps.at("vsr.flow.coarse.conv3.bias")[1] = -0.07;
    ps.at("vsr.flow.refine1.conv2.bias")[0] = 0.05;
    ps.at("vsr.flow.refine0.conv2.bias")[1] = 0.04;
    return check_network(
        ps, {{"f0", rnd({3, 8, 8}, 32, 0.1, 0.9)}, {"f1", rnd({3, 8, 8}, 33, 0.1, 0.9)}},
        [cfg](Tape<double>& tp, VarPack<double>& pk, const std::vector<Var>& ex) {
          std::vector<Var> out = vsrmini_frames(pk, "vsr", {ex[0], ex[1]}, cfg);
          Var s = add(tp, mean_all(tp, mul(tp, out[0], out[0])),
                      mean_all(tp, mul(tp, out[1], out[1])));
          return s;
        });
  });

  // ---- train: losses ----
  put("train", "charbonnier", [] {
    return finite_diff_check({{"x", rnd({3, 4}, 34)}, {"y", rnd({3, 4}, 35)}},
                             [](Tape<double>& tp, const std::vector<Var>& v) {
                               return charbonnier_op(tp, v[0], v[1], 1e-3);
                             });
  });
  put("train", "loss_iqa_surrogate", [] {
    return finite_diff_check({{"frame", rnd({3, 6, 6}, 36, 0.1, 0.9)}},
                             [](Tape<double>& tp, const std::vector<Var>& v) {
                               return iqa_penalty_frame(tp, v[0]);
                             });
  });
  put("train", "loss_total", [] {
    LossWeights w;
    return finite_diff_check(
        {{"a", rnd({2, 3}, 37, 0.0, 1.0)}, {"b", rnd({2, 3}, 38, 0.0, 1.0)}, {"c", rnd({2, 3}, 39, 0.0, 1.0)},
         {"frame", rnd({3, 6, 6}, 40, 0.1, 0.9)}},
        [w](Tape<double>& tp, const std::vector<Var>& v) {
          Var pixel = charbonnier_op(tp, v[0], v[1], w.eps);
          Var identity = charbonnier_op(tp, v[0], v[2], w.eps);
          Var iqa = iqa_penalty_frame(tp, v[3]);
          return loss_total(tp, pixel, identity, iqa, w);
        });
  });
  put("train", "rank_loss", [] {
    Tensor<double> mos = rnd({5}, 41, 1.0, 5.0);
    return finite_diff_check({{"pred", rnd({5}, 42, 1.0, 5.0)}},
                             [mos](Tape<double>& tp, const std::vector<Var>& v) {
                               return vqa_batch_loss(tp, v[0], mos);
                             });
  });
  return entries;
}

}  // namespace eyesim

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "eyesim/pipeline.hpp"
#include "eyesim/refcheck.hpp"

using namespace eyesim;

namespace {

namespace fs = std::filesystem;

std::vector<double> rndv(size_t n, uint64_t seed, double lo = 0.0, double hi = 1.0) {
  RngStream rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("srocc: identical orderings, reversals, and tie handling (seed 18)") {
  std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> y{10, 20, 30, 40, 50};
  CHECK(srocc(x, y) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> yr{50, 40, 30, 20, 10};
  CHECK(srocc(x, yr) == doctest::Approx(-1.0).epsilon(1e-12));
  // n=6 with ties
  std::vector<double> a{0.3, 0.3, 0.9, 0.1, 0.5, 0.5};
  std::vector<double> b = rndv(6, 18);
  CHECK(srocc(a, b) == doctest::Approx(refcheck::srocc_ref(a, b)).epsilon(1e-12));
  CHECK(average_ranks(a) == std::vector<double>{2.5, 2.5, 6.0, 1.0, 4.5, 4.5});
  // degenerate input
  std::vector<double> c{2, 2, 2, 2, 2, 2};
  CHECK_THROWS_AS(srocc(c, b), NumericError);
  CHECK_THROWS_AS(srocc({1.0}, {2.0}), InputError);
}

TEST_CASE("srocc is invariant under strictly monotone transforms") {
  for (int c = 0; c < 10; ++c) {
    auto x = rndv(12, derive_key(500, static_cast<uint64_t>(c)));
    auto y = rndv(12, derive_key(501, static_cast<uint64_t>(c)));
    double base = srocc(x, y);
    std::vector<double> xt(x.size()), yt(y.size());
    for (size_t i = 0; i < x.size(); ++i) {
      xt[i] = std::exp(3.0 * x[i]);       // strictly increasing
      yt[i] = -1.0 / (1.0 + 2.0 * y[i]);  // strictly increasing
    }
    CHECK(srocc(xt, yt) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("plcc: affine relations and the covariance-formula oracle (seed 19)") {
  std::vector<double> x = rndv(9, 19);
  std::vector<double> y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = 2.0 * x[i] + 1.0;
  CHECK(plcc(x, y) == doctest::Approx(1.0).epsilon(1e-12));
  for (size_t i = 0; i < x.size(); ++i) y[i] = -x[i];
  CHECK(plcc(x, y) == doctest::Approx(-1.0).epsilon(1e-12));
  std::vector<double> z = rndv(9, 191);
  CHECK(plcc(x, z) == doctest::Approx(refcheck::pearson_ref(x, z)).epsilon(1e-12));
  // positive affine invariance
  std::vector<double> xa(x.size());
  for (size_t i = 0; i < x.size(); ++i) xa[i] = 5.0 * x[i] - 3.0;
  CHECK(plcc(xa, z) == doctest::Approx(plcc(x, z)).epsilon(1e-12));
  std::vector<double> flat(9, 1.0);
  CHECK_THROWS_AS(plcc(flat, z), NumericError);
}

TEST_CASE("plcc: optional logistic pre-fit recovers a sigmoid-shaped relation") {
  RngStream rng(192);
  std::vector<double> x, y;
  for (int i = 0; i < 40; ++i) {
    double xi = rng.uniform(-3.0, 3.0);
    x.push_back(xi);
    y.push_back(2.0 + 3.0 / (1.0 + std::exp(-2.0 * (xi - 0.5))));
  }
  double raw = plcc(x, y);
  double fit = plcc(x, y, true);
  CHECK(fit >= raw - 1e-9);
  CHECK(fit == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("srocc/plcc agree with brute-force oracles on all lengths <= 8") {
  int case_id = 0;
  for (size_t n = 2; n <= 8; ++n)
    for (int rep = 0; rep < 8; ++rep) {
      auto x = rndv(n, derive_key(600, static_cast<uint64_t>(case_id)));
      auto y = rndv(n, derive_key(601, static_cast<uint64_t>(case_id)));
      ++case_id;
      CHECK(srocc(x, y) == doctest::Approx(refcheck::srocc_ref(x, y)).epsilon(1e-12));
      CHECK(plcc(x, y) == doctest::Approx(refcheck::pearson_ref(x, y)).epsilon(1e-12));
      CHECK(average_ranks(x) == refcheck::ranks_ref(x));
    }
}

TEST_CASE("ranking_accuracy: perfect, tied, and seed-20 brute-force cases") {
  std::vector<RankPair> pairs{{"a", "b", +1, true}, {"c", "d", -1, false}, {"a", "d", +1, false}};
  std::map<std::string, double> scores{{"a", 4.0}, {"b", 2.0}, {"c", 1.0}, {"d", 3.0}};
  auto acc = ranking_accuracy(pairs, scores);
  CHECK(acc.all == 1.0);
  CHECK(acc.homogeneous == 1.0);
  CHECK(acc.non_homogeneous == 1.0);
  // equal scores earn half credit everywhere
  std::map<std::string, double> flat{{"a", 1.0}, {"b", 1.0}, {"c", 1.0}, {"d", 1.0}};
  auto acc2 = ranking_accuracy(pairs, flat);
  CHECK(acc2.all == 0.5);
  CHECK(acc2.homogeneous == 0.5);
  CHECK(acc2.non_homogeneous == 0.5);
  // random 20-pair set against brute-force enumeration
  RngStream rng(20);
  std::vector<RankPair> rp;
  std::map<std::string, double> mos, pred;
  for (int i = 0; i < 12; ++i) {
    std::string id = "c" + std::to_string(i);
    mos[id] = rng.uniform(1.0, 5.0);
    pred[id] = rng.uniform(1.0, 5.0);
  }
  for (int i = 0; i < 20; ++i) {
    int a = static_cast<int>(rng.uniform_int(0, 11)), b;
    do {
      b = static_cast<int>(rng.uniform_int(0, 11));
    } while (b == a);
    std::string ia = "c" + std::to_string(a), ib = "c" + std::to_string(b);
    rp.push_back({ia, ib, mos[ia] > mos[ib] ? +1 : -1, i % 2 == 0});
  }
  auto got = ranking_accuracy(rp, pred);
  double hits_h = 0, hits_n = 0;
  int nh = 0, nn = 0;
  for (const auto& p : rp) {
    double credit = pred[p.clip_id_a] == pred[p.clip_id_b]
                        ? 0.5
                        : ((pred[p.clip_id_a] > pred[p.clip_id_b] ? 1 : -1) == p.gt_order ? 1.0 : 0.0);
    (p.homogeneous ? hits_h : hits_n) += credit;
    (p.homogeneous ? nh : nn) += 1;
  }
  CHECK(got.homogeneous == doctest::Approx(hits_h / nh).epsilon(1e-12));
  CHECK(got.non_homogeneous == doctest::Approx(hits_n / nn).epsilon(1e-12));
  // exact stratum decomposition
  CHECK(got.all ==
        doctest::Approx((got.homogeneous * nh + got.non_homogeneous * nn) / (nh + nn)).epsilon(1e-15));
  // missing scores are input errors
  std::vector<RankPair> missing{{"zz", "c1", +1, false}};
  CHECK_THROWS_AS(ranking_accuracy(missing, pred), InputError);
}

namespace {

struct ReportFixture {
  fs::path dir;
  DatasetManifest manifest;
  VqaModel<float> model;
  ReportFixture() {
    dir = fs::temp_directory_path() / "eyesim_t_report";
    fs::remove_all(dir);
    GenConfig g;
    g.n_clips = 8;
    g.frames = 6;
    g.h = 16;
    g.w = 16;
    g.seed = 51;
    g.split_ratio = 0.5;
    manifest = generate_dataset<float>(g, dir.string());
    VqaModelCfg mcfg;
    mcfg.views.aes_frames = 3;
    mcfg.views.aes_h = 16;
    mcfg.views.aes_w = 16;
    mcfg.views.grid = 2;
    mcfg.views.patch = 8;
    mcfg.views.clip_len = 3;
    mcfg.views.n_concat_aes = 1;
    mcfg.views.n_concat_tech = 1;
    mcfg.backbone.channels = 6;
    mcfg.cleannet.blocks = {6, 1, ActKind::kLRelu};
    mcfg.vsr.blocks = {6, 1, ActKind::kLRelu};
    mcfg.vsr.flow.channels = 4;
    model = init_vqa_model<float>(mcfg, 8);
    // non-degenerate scorers so clip scores differ
    RngStream rng(81);
    for (const char* n :
         {"head.aesthetic.score_gaze.weight", "head.aesthetic.score_scan.weight",
          "head.aesthetic.gate.weight", "head.technical.score_gaze.weight",
          "head.technical.score_scan.weight", "head.technical.gate.weight"})
      fill_uniform(model.params.at(n), rng, -0.6, 0.6);
  }
  ~ReportFixture() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("score_clip: deterministic, finite, respects branch averaging") {
  ReportFixture fx;
  auto rec = fx.manifest.split_records("test")[0];
  VideoClip<float> clip = load_evid<float>((fx.dir / rec->clip_path).string());
  double sa = 0, st = 0;
  ClipDiagnostics diag;
  double s1 = score_clip(fx.model, clip, fx.manifest.seed, rec->spec.clip_index, &sa, &st, &diag);
  double s2 = score_clip(fx.model, clip, fx.manifest.seed, rec->spec.clip_index);
  CHECK(s1 == s2);
  CHECK(std::isfinite(sa));
  CHECK(std::isfinite(st));
  CHECK(diag.fusion_lambda == 0.5);
  CHECK(s1 == doctest::Approx(0.5 * sa + 0.5 * st).epsilon(1e-6));  // float model path
  CHECK(diag.aesthetic.gate > 0.0);
  CHECK(diag.aesthetic.gate < 1.0);
}

TEST_CASE("run_report: metrics recompute, determinism, and error on empty split") {
  ReportFixture fx;
  fs::path out = fx.dir / "report.json";
  ReportOptions opts;
  opts.n_homogeneous_pairs = 4;
  opts.n_non_homogeneous_pairs = 4;
  opts.include_timestamp = false;
  opts.write_csv = true;
  nlohmann::json rep = run_report(fx.manifest, fx.dir.string(), fx.model, out.string(), opts);
  REQUIRE(fs::exists(out));
  REQUIRE(fs::exists(fx.dir / "report.json.csv"));
  // srocc in the report equals a standalone recomputation over the records
  std::vector<double> mos, fused;
  for (const auto& r : rep.at("records")) {
    mos.push_back(r.at("mos_gt").get<double>());
    fused.push_back(r.at("score_fused").get<double>());
  }
  CHECK(rep.at("metrics").at("srocc").get<double>() == doctest::Approx(srocc(fused, mos)).epsilon(1e-12));
  CHECK(rep.at("metrics").at("plcc").get<double>() == doctest::Approx(plcc(fused, mos)).epsilon(1e-12));
  CHECK(rep.at("metrics").at("ranking").at("n_homogeneous").get<int>() == 4);
  CHECK(rep.at("config_fingerprint").get<std::string>() == fx.manifest.config_hash);
  // byte-identical rerun (timestamp excluded)
  fs::path out2 = fx.dir / "report2.json";
  run_report(fx.manifest, fx.dir.string(), fx.model, out2.string(), opts);
  auto read = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  };
  CHECK(read(out) == read(out2));
  // empty test split is an error, not an empty report
  DatasetManifest broken = fx.manifest;
  for (auto& r : broken.records) r.split = "train";
  CHECK_THROWS_AS(run_report(broken, fx.dir.string(), fx.model, (fx.dir / "r3.json").string(), opts),
                  InputError);
}

TEST_CASE("ranking pairs: homogeneous share a source and kind, mos gap enforced") {
  ReportFixture fx;
  auto corpus = build_ranking_pairs<float>(fx.manifest, 6, 6, fx.manifest.seed);
  REQUIRE(corpus.pairs.size() == 12);
  int n_h = 0;
  for (const auto& p : corpus.pairs) {
    const auto& [clip_a, mos_a] = corpus.clips.at(p.clip_id_a);
    const auto& [clip_b, mos_b] = corpus.clips.at(p.clip_id_b);
    CHECK(std::abs(mos_a - mos_b) >= 0.5 - 1e-9);
    CHECK(p.gt_order == (mos_a > mos_b ? 1 : -1));
    if (p.homogeneous) n_h += 1;
  }
  CHECK(n_h == 6);
  // determinism
  auto corpus2 = build_ranking_pairs<float>(fx.manifest, 6, 6, fx.manifest.seed);
  for (const auto& [id, entry] : corpus.clips)
    CHECK(corpus2.clips.at(id).first.frames.data == entry.first.frames.data);
}

TEST_CASE("vqa model bundle: save and load round trip") {
  ReportFixture fx;
  fs::path mdir = fx.dir / "model";
  save_vqa_model(mdir.string(), fx.model, 8, "cafebabe");
  VqaModel<float> loaded = load_vqa_model<float>(mdir.string());
  CHECK(loaded.cfg.backbone.channels == fx.model.cfg.backbone.channels);
  CHECK(loaded.cfg.views.grid == fx.model.cfg.views.grid);
  for (const auto& [name, t] : fx.model.params.entries())
    CHECK(loaded.params.at(name).data == t.data);
  for (const auto& [name, t] : fx.model.enhancer_technical.entries())
    CHECK(loaded.enhancer_technical.at(name).data == t.data);
  CHECK_THROWS_AS(load_vqa_model<float>("/nonexistent"), IoError);
}

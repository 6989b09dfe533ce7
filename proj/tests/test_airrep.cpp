#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "tda/airrep.hpp"
#include "tda/eval.hpp"
#include "tda/io_util.hpp"
#include "tda/sampling.hpp"

using namespace tda;
using namespace tda::airrep;

namespace {

Example ex_of(std::int64_t id, std::initializer_list<double> feats, double label = 0.0) {
  Example e;
  e.id = id;
  e.features = Eigen::VectorXd(static_cast<Eigen::Index>(feats.size()));
  Eigen::Index i = 0;
  for (double f : feats) e.features[i++] = f;
  e.label = label;
  return e;
}

AirRepModel identity_encoder(int d, PoolingMode pooling = PoolingMode::kAttention) {
  AirRepModel m = AirRepModel::init(EncoderKind::kAffine, d, d, 0, pooling, 0, 0.0);
  for (int i = 0; i < d; ++i) m.weights[i * d + i] = 1.0;
  return m;
}

// Small hand-built instance: labels carry a planted cluster signal so the
// ranking loss has something to learn.
oracle::CrossValInstance toy_instance(RngSeed seed) {
  oracle::CrossValInstance inst;
  eval::PlantedConfig cfg;
  cfg.num_tasks = 2;
  cfg.per_task = 8;
  cfg.d = 3;
  cfg.noise = 0.3;
  inst.train_pool = eval::synth_planted_dataset(cfg, seed);
  cfg.per_task = 4;
  inst.valid = eval::synth_planted_dataset(cfg, seed + 1);

  inst.subsets = sample_subsets(inst.train_pool, 6, 5, seed + 2);
  const Eigen::Index m = 6, nv = inst.valid.size();

  // Score each subset for each target by task overlap, then normalize into
  // zero-mean labels per column.
  Eigen::MatrixXd raw(m, nv);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < nv; ++j) {
      int overlap = 0;
      for (std::int64_t id : inst.subsets[static_cast<std::size_t>(i)].member_ids) {
        if (inst.train_pool.by_id(id).label == inst.valid.examples[j].label) ++overlap;
      }
      raw(i, j) = static_cast<double>(overlap);
    }
  }
  const auto norm = oracle::normalize_labels(raw, oracle::NormalizeMode::kStdDev);
  inst.labels = norm.labels;
  inst.losses = raw;
  inst.degenerate = norm.degenerate;
  return inst;
}

ExampleRefs refs_of(const std::vector<const Example*>& v) { return v; }

}  // namespace

TEST_CASE("encode: zero weights give the zero vector") {
  AirRepModel m = AirRepModel::init(EncoderKind::kAffine, 3, 4, 0,
                                    PoolingMode::kAttention, 1, 0.0);
  CHECK(m.weights.cwiseAbs().maxCoeff() == 0.0);  // zero init scale, zero biases
  const Eigen::VectorXd out = encode(m, ex_of(0, {1.0, -2.0, 3.0}));
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encode: identity encoder reproduces the features") {
  const AirRepModel m = identity_encoder(3);
  const Example z = ex_of(0, {0.5, -1.5, 2.5});
  CHECK(encode(m, z) == z.features);
}

TEST_CASE("encode: dimension mismatch is an error") {
  const AirRepModel m = identity_encoder(3);
  CHECK_THROWS_AS(encode(m, ex_of(0, {1.0})), UsageError);
}

TEST_CASE("encode: mlp1 encoder differs from affine and stays finite") {
  const AirRepModel m =
      AirRepModel::init(EncoderKind::kMlp1, 4, 3, 6, PoolingMode::kAttention, 9, 1.0);
  const Eigen::VectorXd out = encode(m, ex_of(0, {1.0, 0.5, -0.5, 2.0}));
  CHECK(out.size() == 3);
  CHECK(out.allFinite());
}

TEST_CASE("attention_pool: singleton subset gets weight one") {
  const AirRepModel m = identity_encoder(2);
  const Example x = ex_of(0, {1.0, 0.0});
  const Example z = ex_of(1, {0.3, 0.4});
  const auto [pooled, weights] = attention_pool(m, x, refs_of({&z}));
  REQUIRE(weights.alpha.size() == 1);
  CHECK(weights.alpha[0] == 1.0);
  CHECK(pooled == encode(m, z));
}

TEST_CASE("attention_pool: equal absolute inner products split evenly") {
  const AirRepModel m = identity_encoder(2);
  const Example x = ex_of(0, {1.0, 0.0});
  const Example z1 = ex_of(1, {2.0, 1.0});
  const Example z2 = ex_of(2, {-2.0, 5.0});  // dot -2: same magnitude
  const auto [pooled, weights] = attention_pool(m, x, refs_of({&z1, &z2}));
  CHECK(weights.alpha[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(weights.alpha[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("attention_pool: softmax of absolute inner products (2, 0)") {
  const AirRepModel m = identity_encoder(2);
  const Example x = ex_of(0, {1.0, 0.0});
  const Example z1 = ex_of(1, {2.0, 0.0});
  const Example z2 = ex_of(2, {0.0, 7.0});
  const auto [pooled, weights] = attention_pool(m, x, refs_of({&z1, &z2}));
  const double e2 = std::exp(2.0);
  CHECK(weights.alpha[0] == doctest::Approx(e2 / (e2 + 1.0)).epsilon(1e-12));
  CHECK(weights.alpha[1] == doctest::Approx(1.0 / (e2 + 1.0)).epsilon(1e-12));
  CHECK(weights.alpha[0] == doctest::Approx(0.8808).epsilon(1e-4));
}

TEST_CASE("attention_pool: weights are a distribution and permutation-equivariant") {
  RngStream rng(5);
  const AirRepModel m =
      AirRepModel::init(EncoderKind::kAffine, 3, 4, 0, PoolingMode::kAttention, 3, 1.0);
  const Example x = ex_of(0, {0.2, -0.7, 1.1});
  std::vector<Example> zs;
  for (int i = 0; i < 5; ++i) {
    zs.push_back(ex_of(i + 1, {rng.normal(), rng.normal(), rng.normal()}));
  }
  const auto [pooled, weights] =
      attention_pool(m, x, refs_of({&zs[0], &zs[1], &zs[2], &zs[3], &zs[4]}));
  CHECK(weights.alpha.minCoeff() >= 0.0);
  CHECK(std::abs(weights.alpha.sum() - 1.0) <= 1e-9);

  const auto [pooled_p, weights_p] =
      attention_pool(m, x, refs_of({&zs[3], &zs[0], &zs[4], &zs[2], &zs[1]}));
  const std::vector<int> perm = {3, 0, 4, 2, 1};
  for (int i = 0; i < 5; ++i) {
    CHECK(weights_p.alpha[i] == doctest::Approx(weights.alpha[perm[i]]).epsilon(1e-14));
  }
}

TEST_CASE("attention_pool: negating one member keeps its weight, flips its sign") {
  const AirRepModel m = identity_encoder(2);
  const Example x = ex_of(0, {1.0, 0.0});
  const Example z1 = ex_of(1, {2.0, 1.0});
  const Example z2 = ex_of(2, {0.5, -1.0});
  Example z2_neg = z2;
  z2_neg.features = -z2.features;

  const auto [pooled_a, wa] = attention_pool(m, x, refs_of({&z1, &z2}));
  const auto [pooled_b, wb] = attention_pool(m, x, refs_of({&z1, &z2_neg}));
  CHECK(wb.alpha[1] == doctest::Approx(wa.alpha[1]).epsilon(1e-14));
  // Member 2's contribution flips inside the pooled sum.
  const Eigen::VectorXd contrib_a = pooled_a - wa.alpha[0] * encode(m, z1);
  const Eigen::VectorXd contrib_b = pooled_b - wb.alpha[0] * encode(m, z1);
  CHECK((contrib_a + contrib_b).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("attention_pool: empty subset is an error") {
  const AirRepModel m = identity_encoder(2);
  CHECK_THROWS_WITH_AS(attention_pool(m, ex_of(0, {1.0, 0.0}), {}), "empty subset",
                       UsageError);
}

TEST_CASE("score_group: mean pooling over a singleton equals the pairwise score") {
  AirRepModel m = identity_encoder(2, PoolingMode::kMean);
  const Example x = ex_of(0, {1.0, 2.0});
  const Example z = ex_of(1, {0.5, -0.25});
  CHECK(score_group(m, x, refs_of({&z})) == x.features.dot(z.features));
}

TEST_CASE("score_group: mean pooling equals the average of pairwise scores exactly") {
  RngStream rng(11);
  const AirRepModel m =
      AirRepModel::init(EncoderKind::kAffine, 3, 5, 0, PoolingMode::kMean, 2, 1.0);
  const Example x = ex_of(0, {0.1, 0.2, 0.3});
  std::vector<Example> zs;
  for (int i = 0; i < 7; ++i) {
    zs.push_back(ex_of(i + 1, {rng.normal(), rng.normal(), rng.normal()}));
  }
  ExampleRefs refs;
  for (const auto& z : zs) refs.push_back(&z);

  const Eigen::VectorXd ex = encode(m, x);
  double sum = 0.0;
  for (const auto& z : zs) sum += ex.dot(encode(m, z));
  CHECK(score_group(m, x, refs) == sum / 7.0);  // bitwise
}

TEST_CASE("score_group: attention scoring is permutation-invariant to 1e-12") {
  RngStream rng(13);
  const AirRepModel m =
      AirRepModel::init(EncoderKind::kAffine, 3, 4, 0, PoolingMode::kAttention, 8, 1.0);
  const Example x = ex_of(0, {0.4, -0.1, 0.9});
  std::vector<Example> zs;
  for (int i = 0; i < 6; ++i) {
    zs.push_back(ex_of(i + 1, {rng.normal(), rng.normal(), rng.normal()}));
  }
  const double a = score_group(m, x, refs_of({&zs[0], &zs[1], &zs[2], &zs[3], &zs[4], &zs[5]}));
  const double b = score_group(m, x, refs_of({&zs[5], &zs[3], &zs[1], &zs[4], &zs[0], &zs[2]}));
  CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
}

TEST_CASE("score_group: duplicating the dominant member increases its mass") {
  const AirRepModel m = identity_encoder(2);
  const Example x = ex_of(0, {1.0, 0.0});
  const Example dom = ex_of(1, {2.0, 0.0});
  const Example other = ex_of(2, {0.2, 1.0});

  const auto [p1, w1] = attention_pool(m, x, refs_of({&dom, &other}));
  const auto [p2, w2] = attention_pool(m, x, refs_of({&dom, &dom, &other}));
  const double mass1 = w1.alpha[0];
  const double mass2 = w2.alpha[0] + w2.alpha[1];
  CHECK(mass2 > mass1);
  // Recomputed per the softmax definition: 2 e^2 / (2 e^2 + e^0.2).
  const double expect = 2.0 * std::exp(2.0) / (2.0 * std::exp(2.0) + std::exp(0.2));
  CHECK(mass2 == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("ranking_loss: worked two-score case gives log 2") {
  Eigen::VectorXd f(2), r(2);
  f << 0.0, 0.0;
  r << 1.0, 0.0;
  RankLossConfig cfg;
  cfg.t_min = 0.1;
  cfg.t_max = 5.0;
  const RankLossResult res = ranking_loss(f, r, cfg);
  CHECK(std::abs(res.loss - std::log(2.0)) <= 1e-12);
  CHECK(res.active_pairs == 1);
}

TEST_CASE("ranking_loss: labels inside t_min produce exactly zero") {
  Eigen::VectorXd f(3), r(3);
  f << 1.0, -2.0, 0.5;
  r << 0.00, 0.05, 0.09;  // all gaps below 0.1
  RankLossConfig cfg;
  const RankLossResult res = ranking_loss(f, r, cfg);
  CHECK(res.loss == 0.0);
  CHECK(res.grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(res.active_pairs == 0);
}

TEST_CASE("ranking_loss: gap clipping at t_max") {
  Eigen::VectorXd f(2), r(2);
  f << 0.0, 0.0;
  r << 7.0, 0.0;  // gap 7 clips to 5
  RankLossConfig cfg;
  cfg.t_min = 0.1;
  cfg.t_max = 5.0;
  const RankLossResult res = ranking_loss(f, r, cfg);
  CHECK(res.loss == doctest::Approx(5.0 * std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("ranking_loss: analytic gradient matches finite differences") {
  RngStream rng(17);
  RankLossConfig cfg;
  cfg.t_min = 0.05;
  cfg.t_max = 3.0;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd f =
        Eigen::VectorXd::NullaryExpr(6, [&](Eigen::Index) { return rng.normal(); });
    Eigen::VectorXd r =
        Eigen::VectorXd::NullaryExpr(6, [&](Eigen::Index) { return 2.0 * rng.normal(); });
    const RankLossResult res = ranking_loss(f, r, cfg);
    const double h = 1e-7;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      Eigen::VectorXd fp = f, fm = f;
      fp[i] += h;
      fm[i] -= h;
      const double fd =
          (ranking_loss(fp, r, cfg).loss - ranking_loss(fm, r, cfg).loss) / (2 * h);
      CHECK(std::abs(res.grad[i] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("ranking_loss: raising t_min never adds active pairs") {
  RngStream rng(23);
  Eigen::VectorXd f =
      Eigen::VectorXd::NullaryExpr(8, [&](Eigen::Index) { return rng.normal(); });
  Eigen::VectorXd r =
      Eigen::VectorXd::NullaryExpr(8, [&](Eigen::Index) { return rng.normal(); });
  int prev = std::numeric_limits<int>::max();
  for (double t_min : {0.0, 0.1, 0.3, 0.7, 1.5, 3.0}) {
    RankLossConfig cfg;
    cfg.t_min = t_min;
    cfg.t_max = 10.0;
    const int active = ranking_loss(f, r, cfg).active_pairs;
    CHECK(active <= prev);
    prev = active;
  }
}

TEST_CASE("encode: unit_normalize puts encodings on the unit sphere") {
  AirRepModel m =
      AirRepModel::init(EncoderKind::kAffine, 3, 4, 0, PoolingMode::kAttention, 7, 1.0);
  m.unit_normalize = true;
  const Eigen::VectorXd out = encode(m, ex_of(0, {1.0, -2.0, 0.5}));
  CHECK(out.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("step gradient matches finite differences through attention pooling") {
  const oracle::CrossValInstance inst = toy_instance(31);
  for (const bool normalize : {false, true}) {
  for (const auto pooling : {PoolingMode::kAttention, PoolingMode::kMean}) {
    for (const auto kind : {EncoderKind::kAffine, EncoderKind::kMlp1}) {
      AirRepModel model = AirRepModel::init(kind, 3, 4, 5, pooling, 21, 1.0);
      model.unit_normalize = normalize;
      StepBatch batch;
      batch.instance = &inst;
      batch.target_cols = {0, 2, 5};
      batch.subset_idx = {0, 1, 3, 4};
      RankLossConfig lcfg;
      lcfg.t_min = 0.05;
      lcfg.t_max = 5.0;

      Eigen::VectorXd grad(model.weight_count());
      const double loss = step_loss_and_grad(model, batch, lcfg, &grad);
      REQUIRE(std::isfinite(loss));

      const double h = 1e-6;
      for (Eigen::Index i = 0; i < model.weight_count(); ++i) {
        AirRepModel p = model, q = model;
        p.weights[i] += h;
        q.weights[i] -= h;
        const double fd = (step_loss_and_grad(p, batch, lcfg, nullptr) -
                           step_loss_and_grad(q, batch, lcfg, nullptr)) /
                          (2 * h);
        CHECK(std::abs(grad[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
      }
    }
  }
  }
}

TEST_CASE("train_airrep: zero steps returns the initialization unchanged") {
  const oracle::CrossValInstance inst = toy_instance(41);
  AirRepModel init =
      AirRepModel::init(EncoderKind::kAffine, 3, 4, 0, PoolingMode::kAttention, 5, 1.0);
  AirRepTrainConfig cfg;
  cfg.steps = 0;
  const AirRepModel out = airrep::train_airrep({&inst}, init, cfg, RankLossConfig{});
  CHECK(out.weights == init.weights);
}

TEST_CASE("train_airrep: planted structure halves the loss within 200 steps") {
  const oracle::CrossValInstance inst = toy_instance(51);
  AirRepModel init =
      AirRepModel::init(EncoderKind::kAffine, 3, 4, 0, PoolingMode::kAttention, 5, 1.0);
  AirRepTrainConfig cfg;
  cfg.steps = 200;
  cfg.lr = 3e-3;
  cfg.subsets_per_step = 6;
  cfg.targets_per_step = 8;
  cfg.seed = 4;
  TrainCurve curve;
  airrep::train_airrep({&inst}, init, cfg, RankLossConfig{}, &curve);
  REQUIRE(curve.step_loss.size() == 200);
  // Compare the first and last 10-step averages.
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 10; ++i) {
    head += curve.step_loss[static_cast<std::size_t>(i)].second;
    tail += curve.step_loss[curve.step_loss.size() - 1 - static_cast<std::size_t>(i)].second;
  }
  CHECK(tail <= 0.5 * head);
}

TEST_CASE("train_airrep: equal seeds give identical weights") {
  const oracle::CrossValInstance inst = toy_instance(61);
  AirRepModel init =
      AirRepModel::init(EncoderKind::kAffine, 3, 4, 0, PoolingMode::kAttention, 5, 1.0);
  AirRepTrainConfig cfg;
  cfg.steps = 50;
  cfg.subsets_per_step = 4;
  cfg.targets_per_step = 6;
  cfg.seed = 19;
  const AirRepModel a = airrep::train_airrep({&inst}, init, cfg, RankLossConfig{});
  const AirRepModel b = airrep::train_airrep({&inst}, init, cfg, RankLossConfig{});
  REQUIRE(a.weights.size() == b.weights.size());
  CHECK(std::memcmp(a.weights.data(), b.weights.data(),
                    sizeof(double) * a.weights.size()) == 0);
}

TEST_CASE("airrep persistence round-trips bit-exactly") {
  AirRepModel m =
      AirRepModel::init(EncoderKind::kMlp1, 4, 3, 6, PoolingMode::kMean, 77, 1.0);
  const auto dir = std::filesystem::temp_directory_path() / "tda_airrep_tests";
  std::filesystem::create_directories(dir);
  save_airrep(m, dir / "model.bin");
  const AirRepModel back = load_airrep(dir / "model.bin");
  CHECK(back.encoder == m.encoder);
  CHECK(back.pooling == m.pooling);
  CHECK(back.d == m.d);
  CHECK(back.e == m.e);
  CHECK(back.hidden == m.hidden);
  CHECK(std::memcmp(back.weights.data(), m.weights.data(),
                    sizeof(double) * m.weights.size()) == 0);
}

TEST_CASE("train log has one row per step") {
  TrainCurve curve;
  curve.step_loss = {{0, 1.5}, {1, 1.25}, {2, 1.0}};
  const auto dir = std::filesystem::temp_directory_path() / "tda_airrep_tests";
  std::filesystem::create_directories(dir);
  write_train_log(curve, dir / "log.csv");
  const std::string text = io::read_file(dir / "log.csv");
  CHECK(text == "step,loss\n0,1.5\n1,1.25\n2,1\n");
}

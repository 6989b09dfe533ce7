#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tda/eval.hpp"
#include "tda/models.hpp"
#include "tda/oracle.hpp"
#include "tda/sampling.hpp"

using namespace tda;
using namespace tda::eval;

namespace {

std::vector<double> vec(std::initializer_list<double> v) { return v; }

// Independent selection oracle: counting-based ranks instead of sorting.
SelectionResult brute_force_select(const Eigen::MatrixXd& scores, int k) {
  const auto cols = static_cast<std::size_t>(scores.cols());
  std::vector<int> best(cols, static_cast<int>(cols) + 1);
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    for (Eigen::Index z = 0; z < scores.cols(); ++z) {
      int rank = 1;
      for (Eigen::Index w = 0; w < scores.cols(); ++w) {
        if (scores(i, w) > scores(i, z)) ++rank;
        if (scores(i, w) == scores(i, z) && w < z) ++rank;
      }
      best[static_cast<std::size_t>(z)] =
          std::min(best[static_cast<std::size_t>(z)], rank);
    }
  }
  std::vector<std::int64_t> ids(cols);
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](std::int64_t a, std::int64_t b) {
    return best[static_cast<std::size_t>(a)] < best[static_cast<std::size_t>(b)];
  });
  SelectionResult out;
  out.selected_ids.assign(ids.begin(), ids.begin() + k);
  for (std::int64_t id : out.selected_ids) {
    out.best_rank.push_back(best[static_cast<std::size_t>(id)]);
  }
  return out;
}

// Independent classification oracle.
double brute_force_classify(const Eigen::MatrixXd& scores,
                            const std::vector<std::string>& train_tags,
                            const std::vector<std::string>& test_tags) {
  int hits = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    Eigen::Index arg = -1;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (scores(i, j) > best) {
        best = scores(i, j);
        arg = j;
      }
    }
    hits += train_tags[static_cast<std::size_t>(arg)] == test_tags[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(scores.rows());
}

models::TrainConfig tight_gd(RngSeed seed = 0) {
  models::TrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.epochs = 3000;
  cfg.grad_tol = 1e-12;
  cfg.init_scale = 0.1;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("spearman: identical and reversed rankings") {
  const auto a = vec({0.3, 1.2, -0.5, 2.0});
  CHECK(spearman(a, a).rho == 1.0);
  const auto rev = vec({-0.3, -1.2, 0.5, -2.0});
  CHECK(spearman(a, rev).rho == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("spearman: textbook value for one swapped pair") {
  const auto a = vec({1, 2, 3, 4});
  const auto b = vec({1, 3, 2, 4});
  // 1 - 6 * sum d^2 / (n (n^2 - 1)) with sum d^2 = 2.
  CHECK(spearman(a, b).rho == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("spearman: matches the textbook formula on tie-free vectors") {
  RngStream rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5 + static_cast<int>(rng.uniform_below(20));
    std::vector<double> a, b;
    for (int i = 0; i < n; ++i) {
      a.push_back(rng.normal());
      b.push_back(rng.normal());
    }
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    double d2 = 0.0;
    for (int i = 0; i < n; ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
    const double textbook = 1.0 - 6.0 * d2 / (n * (static_cast<double>(n) * n - 1.0));
    CHECK(std::abs(spearman(a, b).rho - textbook) <= 1e-12);
  }
}

TEST_CASE("spearman: ties take average ranks") {
  const auto ranks = average_ranks(vec({5.0, 1.0, 5.0, 0.0}));
  CHECK(ranks == std::vector<double>{3.5, 2.0, 3.5, 1.0});
  // Against scipy's value for these two vectors.
  const auto a = vec({1.0, 1.0, 2.0, 3.0});
  const auto b = vec({4.0, 3.0, 2.0, 1.0});
  CHECK(spearman(a, b).rho == doctest::Approx(-0.9486832980505138).epsilon(1e-12));
}

TEST_CASE("spearman: constant input is degenerate, not an error") {
  const auto a = vec({1.0, 1.0, 1.0});
  const auto b = vec({0.5, 0.2, 0.9});
  const auto res = spearman(a, b);
  CHECK(res.rho == 0.0);
  CHECK(res.degenerate);
  CHECK_THROWS_AS(spearman(vec({1.0}), vec({2.0})), UsageError);
}

TEST_CASE("spearman: invariant under strictly increasing transforms") {
  RngStream rng(19);
  std::vector<double> a, b;
  for (int i = 0; i < 15; ++i) {
    a.push_back(rng.normal());
    b.push_back(rng.normal());
  }
  const double base = spearman(a, b).rho;

  std::vector<double> a_exp = a, b_aff = b;
  for (auto& v : a_exp) v = std::exp(v);
  for (auto& v : b_aff) v = 3.0 * v + 11.0;
  CHECK(spearman(a_exp, b).rho == doctest::Approx(base).epsilon(1e-12));
  CHECK(spearman(a, b_aff).rho == doctest::Approx(base).epsilon(1e-12));
  CHECK(spearman(a_exp, b_aff).rho == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("lds: oracle against itself scores exactly one") {
  RngStream rng(23);
  Eigen::MatrixXd labels = Eigen::MatrixXd::NullaryExpr(
      30, 8, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  const LdsReport report = lds(labels, labels);
  CHECK(report.per_target.size() == 8);
  CHECK(report.degenerate_count == 0);
  CHECK(report.mean == 1.0);
  for (double rho : report.per_target) CHECK(rho == 1.0);
}

TEST_CASE("lds: random scores hover near zero") {
  RngStream rng(29);
  const Eigen::MatrixXd labels = Eigen::MatrixXd::NullaryExpr(
      100, 20, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  const Eigen::MatrixXd noise = Eigen::MatrixXd::NullaryExpr(
      100, 20, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  const LdsReport report = lds(noise, labels);
  CHECK(std::abs(report.mean) <= 0.1);
}

TEST_CASE("lds: degenerate targets are excluded and counted") {
  RngStream rng(31);
  Eigen::MatrixXd labels = Eigen::MatrixXd::NullaryExpr(
      10, 4, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  Eigen::MatrixXd scores = labels;
  scores.col(2).setConstant(0.25);  // constant estimator column
  const LdsReport report = lds(scores, labels);
  CHECK(report.degenerate_count == 1);
  CHECK(report.per_target.size() == 3);
  CHECK(report.mean == 1.0);

  Eigen::MatrixXd bad(9, 4);
  CHECK_THROWS_AS(lds(bad, labels), UsageError);
}

TEST_CASE("select_topk: unanimous dominant example is selected first with rank 1") {
  Eigen::MatrixXd scores(3, 4);
  scores << 9, 1, 2, 3, 9, 2, 1, 3, 9, 3, 2, 1;
  const SelectionResult sel = select_topk(scores, 2);
  CHECK(sel.selected_ids[0] == 0);
  CHECK(sel.best_rank[0] == 1);
}

TEST_CASE("select_topk: k equal to the pool returns everything") {
  Eigen::MatrixXd scores(2, 3);
  scores << 0.5, 0.1, 0.9, 0.2, 0.8, 0.3;
  const SelectionResult sel = select_topk(scores, 3);
  std::vector<std::int64_t> sorted = sel.selected_ids;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<std::int64_t>{0, 1, 2});
}

TEST_CASE("select_topk: hand-built 3x4 matrix matches exhaustive ranking") {
  Eigen::MatrixXd scores(3, 4);
  scores << 0.9, 0.1, 0.5, 0.5,
            0.2, 0.8, 0.2, 0.1,
            0.3, 0.3, 0.3, 0.9;
  // Per-row ranks with ties toward lower ids give best ranks 1, 1, 2, 1.
  const SelectionResult sel = select_topk(scores, 4);
  CHECK(sel.selected_ids == std::vector<std::int64_t>{0, 1, 3, 2});
  CHECK(sel.best_rank == std::vector<int>{1, 1, 1, 2});
  CHECK_THROWS_AS(select_topk(scores, 5), UsageError);
  CHECK_THROWS_AS(select_topk(scores, 0), UsageError);
}

TEST_CASE("select_topk: agrees with the brute-force oracle on random matrices") {
  RngStream rng(37);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd scores = Eigen::MatrixXd::NullaryExpr(
        5, 8, [&](Eigen::Index, Eigen::Index) {
          // Coarse grid: ties happen often.
          return std::floor(4.0 * rng.uniform01());
        });
    const int k = 1 + static_cast<int>(rng.uniform_below(8));
    const SelectionResult a = select_topk(scores, k);
    const SelectionResult b = brute_force_select(scores, k);
    CHECK(a.selected_ids == b.selected_ids);
    CHECK(a.best_rank == b.best_rank);
  }
}

TEST_CASE("select_topk: invariant under strictly increasing per-row transforms") {
  RngStream rng(41);
  Eigen::MatrixXd scores = Eigen::MatrixXd::NullaryExpr(
      4, 6, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  Eigen::MatrixXd warped = scores;
  for (Eigen::Index i = 0; i < warped.rows(); ++i) {
    const double scale = 1.0 + static_cast<double>(i);
    warped.row(i) = (scale * warped.row(i)).array().exp();
  }
  const SelectionResult a = select_topk(scores, 4);
  const SelectionResult b = select_topk(warped, 4);
  CHECK(a.selected_ids == b.selected_ids);
  CHECK(a.best_rank == b.best_rank);
}

TEST_CASE("classify_by_top1: perfect and adversarial matrices") {
  Eigen::MatrixXd scores(2, 2);
  scores << 1.0, 0.0, 0.0, 1.0;
  const std::vector<std::string> tags = {"a", "b"};
  CHECK(classify_by_top1(scores, tags, tags) == 1.0);

  Eigen::MatrixXd swapped(2, 2);
  swapped << 0.0, 1.0, 1.0, 0.0;
  CHECK(classify_by_top1(swapped, tags, tags) == 0.0);

  CHECK_THROWS_AS(classify_by_top1(scores, {"a"}, tags), UsageError);
}

TEST_CASE("classify_by_top1: matches brute force and ignores monotone warps") {
  RngStream rng(43);
  const std::vector<std::string> train_tags = {"x", "y", "x", "z", "y", "z", "x", "y"};
  const std::vector<std::string> test_tags = {"y", "z", "x", "x", "z"};
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd scores = Eigen::MatrixXd::NullaryExpr(
        5, 8, [&](Eigen::Index, Eigen::Index) { return std::floor(5.0 * rng.uniform01()); });
    CHECK(classify_by_top1(scores, train_tags, test_tags) ==
          brute_force_classify(scores, train_tags, test_tags));

    Eigen::MatrixXd warped = scores;
    for (Eigen::Index i = 0; i < warped.rows(); ++i) {
      warped.row(i) = (warped.row(i) * (2.0 + static_cast<double>(i))).array() + 1.0;
    }
    CHECK(classify_by_top1(warped, train_tags, test_tags) ==
          classify_by_top1(scores, train_tags, test_tags));
  }
}

TEST_CASE("synth_planted_dataset: structure, balance, determinism") {
  PlantedConfig cfg;
  cfg.num_tasks = 3;
  cfg.per_task = 10;
  cfg.d = 5;
  cfg.noise = 0.4;
  const Dataset a = synth_planted_dataset(cfg, 11);
  const Dataset b = synth_planted_dataset(cfg, 11);
  REQUIRE(a.size() == 30);
  CHECK(a.kind == TaskKind::kClassification);
  CHECK(a.num_classes == 3);
  for (std::int64_t i = 0; i < a.size(); ++i) {
    CHECK(a.examples[i].features == b.examples[i].features);
    CHECK(*a.examples[i].tag == "task" + std::to_string(static_cast<int>(a.examples[i].label)));
  }
  int counts[3] = {0, 0, 0};
  for (const auto& ex : a.examples) ++counts[static_cast<int>(ex.label)];
  CHECK(counts[0] == 10);
  CHECK(counts[1] == 10);
  CHECK(counts[2] == 10);
  CHECK_THROWS_AS(synth_planted_dataset(PlantedConfig{4, 5, 2, 0.1}, 0), UsageError);
}

TEST_CASE("synth_planted_dataset: zero noise is linearly separable") {
  PlantedConfig cfg;
  cfg.num_tasks = 3;
  cfg.per_task = 6;
  cfg.d = 4;
  cfg.noise = 0.0;
  const Dataset ds = synth_planted_dataset(cfg, 7);

  models::ModelSpec spec;
  spec.family = models::ModelFamily::kLogisticRegression;
  spec.d = 4;
  spec.num_classes = 3;
  const models::TrainedModel m =
      models::train(spec, models::full_subset(ds), ds, tight_gd());

  for (const Example& ex : ds.examples) {
    // Class logits from the packed [w(d), b] rows.
    int arg = 0;
    double best = -1e300;
    for (int c = 0; c < 3; ++c) {
      double logit = m.theta[c * 5 + 4];
      for (int i = 0; i < 4; ++i) logit += m.theta[c * 5 + i] * ex.features[i];
      if (logit > best) {
        best = logit;
        arg = c;
      }
    }
    CHECK(arg == static_cast<int>(ex.label));
  }
}

TEST_CASE("planted data: top-k selection for one task stays within the task") {
  // Test examples all come from task 0; greedy selection over loo-oracle pair
  // scores should pick mostly task-0 training examples.
  PlantedConfig cfg;
  cfg.num_tasks = 2;
  cfg.per_task = 20;
  cfg.d = 4;
  cfg.noise = 0.5;
  const Dataset pool = synth_planted_dataset(cfg, 8);
  cfg.per_task = 10;
  const Dataset both_tasks = synth_planted_dataset(cfg, 9);
  Dataset targets;
  targets.d = both_tasks.d;
  targets.kind = both_tasks.kind;
  targets.num_classes = both_tasks.num_classes;
  for (const Example& ex : both_tasks.examples) {
    if (ex.label != 0.0) continue;
    Example copy = ex;
    copy.id = targets.size();
    targets.examples.push_back(std::move(copy));
  }
  REQUIRE(targets.size() == 10);

  models::ModelSpec spec;
  spec.family = models::ModelFamily::kLogisticRegression;
  spec.d = 4;
  spec.num_classes = 2;
  spec.l2_reg = 0.1;
  const Eigen::MatrixXd loo =
      oracle::loo_influence_oracle(spec, pool, targets, tight_gd(6));

  const SelectionResult sel = select_topk(loo.transpose(), 10);
  int within = 0;
  for (std::int64_t id : sel.selected_ids) {
    if (pool.by_id(id).label == 0.0) ++within;
  }
  CHECK(within >= 8);
}

TEST_CASE("planted data: loo influence is higher within-task than across") {
  PlantedConfig cfg;
  cfg.num_tasks = 2;
  cfg.per_task = 15;
  cfg.d = 4;
  cfg.noise = 0.5;
  const Dataset pool = synth_planted_dataset(cfg, 3);
  cfg.per_task = 5;
  const Dataset targets = synth_planted_dataset(cfg, 4);

  models::ModelSpec spec;
  spec.family = models::ModelFamily::kLogisticRegression;
  spec.d = 4;
  spec.num_classes = 2;
  spec.l2_reg = 0.1;  // smooth fit: influence tracks cluster membership
  const Eigen::MatrixXd loo =
      oracle::loo_influence_oracle(spec, pool, targets, tight_gd(5));

  std::int64_t wins = 0, comparisons = 0;
  for (Eigen::Index j = 0; j < targets.size(); ++j) {
    const double task = targets.examples[static_cast<std::size_t>(j)].label;
    for (Eigen::Index w = 0; w < pool.size(); ++w) {
      if (pool.examples[static_cast<std::size_t>(w)].label != task) continue;
      for (Eigen::Index c = 0; c < pool.size(); ++c) {
        if (pool.examples[static_cast<std::size_t>(c)].label == task) continue;
        ++comparisons;
        if (loo(w, j) > loo(c, j)) ++wins;
      }
    }
  }
  REQUIRE(comparisons > 0);
  CHECK(static_cast<double>(wins) / static_cast<double>(comparisons) >= 0.9);
}

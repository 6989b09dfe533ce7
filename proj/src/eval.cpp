#include "tda/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "tda/io_util.hpp"

namespace tda::eval {

std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });

  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

SpearmanResult spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UsageError("spearman: length mismatch");
  if (a.size() < 2) throw UsageError("spearman needs at least two observations");

  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);

  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;  // ranks always average to this
  double num = 0.0, da = 0.0, db = 0.0;
  bool equal_ranks = true;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double xa = ra[i] - mean;
    const double xb = rb[i] - mean;
    num += xa * xb;
    da += xa * xa;
    db += xb * xb;
    equal_ranks = equal_ranks && ra[i] == rb[i];
  }
  if (da == 0.0 || db == 0.0) return {0.0, true};
  if (equal_ranks) return {1.0, false};  // identical rankings correlate exactly
  const double rho = num / std::sqrt(da * db);
  return {std::clamp(rho, -1.0, 1.0), false};
}

LdsReport lds(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& labels) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) {
    throw UsageError("lds: score/label shape mismatch");
  }
  if (scores.rows() < 2) throw UsageError("lds needs at least two subsets");

  LdsReport report;
  report.num_subsets = static_cast<int>(scores.rows());
  std::vector<double> f(static_cast<std::size_t>(scores.rows()));
  std::vector<double> r(f.size());
  double total = 0.0;
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      f[static_cast<std::size_t>(i)] = scores(i, j);
      r[static_cast<std::size_t>(i)] = labels(i, j);
    }
    const SpearmanResult res = spearman(f, r);
    if (res.degenerate) {
      ++report.degenerate_count;
      continue;
    }
    report.per_target.push_back(res.rho);
    total += res.rho;
  }
  report.mean = report.per_target.empty()
                    ? 0.0
                    : total / static_cast<double>(report.per_target.size());
  return report;
}

namespace {

// Rank of each training column within one test row: descending score, ties
// toward the lower column id. Returns 1-based ranks.
std::vector<int> row_ranks(const Eigen::MatrixXd& scores, Eigen::Index row) {
  const auto n = static_cast<std::size_t>(scores.cols());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (scores(row, a) != scores(row, b)) return scores(row, a) > scores(row, b);
    return a < b;
  });
  std::vector<int> ranks(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    ranks[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos) + 1;
  }
  return ranks;
}

}  // namespace

SelectionResult select_topk(const Eigen::MatrixXd& scores, int k) {
  if (scores.rows() < 1 || scores.cols() < 1) throw UsageError("select_topk: empty scores");
  if (k < 1 || k > scores.cols()) throw UsageError("select_topk: k out of range");

  std::vector<int> best(static_cast<std::size_t>(scores.cols()),
                        static_cast<int>(scores.cols()) + 1);
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const std::vector<int> ranks = row_ranks(scores, i);
    for (std::size_t z = 0; z < ranks.size(); ++z) best[z] = std::min(best[z], ranks[z]);
  }

  std::vector<std::int64_t> ids(static_cast<std::size_t>(scores.cols()));
  std::iota(ids.begin(), ids.end(), 0);
  std::sort(ids.begin(), ids.end(), [&](std::int64_t a, std::int64_t b) {
    if (best[static_cast<std::size_t>(a)] != best[static_cast<std::size_t>(b)]) {
      return best[static_cast<std::size_t>(a)] < best[static_cast<std::size_t>(b)];
    }
    return a < b;
  });

  SelectionResult out;
  out.selected_ids.assign(ids.begin(), ids.begin() + k);
  for (std::int64_t id : out.selected_ids) {
    out.best_rank.push_back(best[static_cast<std::size_t>(id)]);
  }
  return out;
}

double classify_by_top1(const Eigen::MatrixXd& scores,
                        const std::vector<std::string>& train_tags,
                        const std::vector<std::string>& test_tags) {
  if (static_cast<Eigen::Index>(train_tags.size()) != scores.cols() ||
      static_cast<Eigen::Index>(test_tags.size()) != scores.rows()) {
    throw UsageError("classify_by_top1: tag counts do not match score shape");
  }
  if (scores.rows() < 1) throw UsageError("classify_by_top1: empty scores");

  int correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, arg)) arg = j;  // ties keep the lower id
    }
    if (train_tags[static_cast<std::size_t>(arg)] == test_tags[static_cast<std::size_t>(i)]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

Dataset synth_planted_dataset(const PlantedConfig& cfg, RngSeed seed) {
  if (cfg.num_tasks < 1 || cfg.per_task < 1) throw UsageError("planted sizes must be positive");
  if (cfg.d < cfg.num_tasks) {
    throw UsageError("planted dataset needs d >= num_tasks for separable centers");
  }
  if (cfg.noise < 0) throw UsageError("planted noise must be >= 0");
  const double nuisance = cfg.nuisance < 0 ? cfg.noise : cfg.nuisance;

  constexpr double kSeparation = 3.0;
  Dataset ds;
  ds.d = cfg.d;
  ds.kind = TaskKind::kClassification;
  ds.num_classes = cfg.num_tasks;

  RngStream rng(seed);
  std::int64_t id = 0;
  for (int t = 0; t < cfg.num_tasks; ++t) {
    for (int i = 0; i < cfg.per_task; ++i) {
      Example ex;
      ex.id = id++;
      ex.features = Eigen::VectorXd::Zero(cfg.d);
      ex.features[t] = kSeparation;
      for (int j = 0; j < cfg.d; ++j) {
        ex.features[j] += (j < cfg.num_tasks ? cfg.noise : nuisance) * rng.normal();
      }
      ex.label = t;
      ex.tag = "task" + std::to_string(t);
      ds.examples.push_back(std::move(ex));
    }
  }
  ds.validate();
  return ds;
}

void write_lds_report(const LdsReport& report, const std::filesystem::path& path) {
  nlohmann::json j = {{"mean", report.mean},
                      {"per_target", report.per_target},
                      {"num_subsets", report.num_subsets},
                      {"degenerate_count", report.degenerate_count}};
  io::write_file(path, j.dump(2) + "\n");
}

void write_selection_csv(const SelectionResult& sel, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "train_id,best_rank\n";
  for (std::size_t i = 0; i < sel.selected_ids.size(); ++i) {
    out << sel.selected_ids[i] << ',' << sel.best_rank[i] << '\n';
  }
  io::write_file(path, out.str());
}

}  // namespace tda::eval

#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tda/types.hpp"

namespace tda::eval {

struct SpearmanResult {
  double rho = 0.0;
  bool degenerate = false;  // either input was constant
};

// Pearson correlation of rank vectors; ties receive average (fractional)
// ranks. Constant inputs are degenerate and score 0 so batch evaluation
// stays total.
SpearmanResult spearman(std::span<const double> a, std::span<const double> b);

// Average ranks (1-based); ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v);

struct LdsReport {
  std::vector<double> per_target;  // non-degenerate targets, in column order
  double mean = 0.0;
  int num_subsets = 0;
  int degenerate_count = 0;
};

// Per-target Spearman between estimator scores and oracle labels over the M
// subsets (both M x N_v), averaged across targets. Degenerate targets are
// counted and excluded from the mean.
LdsReport lds(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& labels);

struct SelectionResult {
  std::vector<std::int64_t> selected_ids;  // ordered by (best rank, id)
  std::vector<int> best_rank;              // aligned with selected_ids, 1-based
};

// Greedy selection: rank training columns per test row by descending score
// (ties toward the lower id); a training example's score is its best rank
// across test rows; keep the k best, ties toward the lower id.
SelectionResult select_topk(const Eigen::MatrixXd& scores, int k);

// Fraction of test rows whose argmax-scoring training example (ties toward
// the lower id) carries the same tag.
double classify_by_top1(const Eigen::MatrixXd& scores,
                        const std::vector<std::string>& train_tags,
                        const std::vector<std::string>& test_tags);

// Cluster-structured classification dataset: task t sits at 3 * e_t with
// isotropic gaussian noise; labels and tags carry the task. Examples of a
// task influence that task's test points, which gives evaluation protocols a
// known ground truth to recover. Dimensions beyond num_tasks carry
// task-independent noise at the nuisance scale (< 0 means "use noise"), so
// raw feature similarity can be made a weak attribution signal on purpose.
struct PlantedConfig {
  int num_tasks = 2;
  int per_task = 30;
  int d = 4;
  double noise = 0.3;
  double nuisance = -1.0;
};

Dataset synth_planted_dataset(const PlantedConfig& cfg, RngSeed seed);

void write_lds_report(const LdsReport& report, const std::filesystem::path& path);
void write_selection_csv(const SelectionResult& sel, const std::filesystem::path& path);

}  // namespace tda::eval

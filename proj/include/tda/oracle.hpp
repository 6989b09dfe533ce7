#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <vector>

#include "tda/models.hpp"
#include "tda/types.hpp"

namespace tda::oracle {

enum class NormalizeMode { kVariance, kStdDev };

// Columns whose loss variance across models falls below this are degenerate:
// their labels are zeroed and they are excluded from downstream pair building.
inline constexpr double kEpsVar = 1e-12;

struct RetrainOutcome {
  std::int64_t subset_id = 0;
  std::int64_t target_id = 0;
  double r = 0.0;  // evaluation loss of the subset-trained model on the target
};

// One cross-validation generation unit: a validation split, M subsets drawn
// from the training split, the M x N_v loss matrix, and normalized labels.
struct CrossValInstance {
  Dataset valid;
  Dataset train_pool;
  std::vector<SubsetRef> subsets;
  Eigen::MatrixXd losses;  // M x N_v
  Eigen::MatrixXd labels;  // M x N_v
  std::vector<std::uint8_t> degenerate;  // per validation column
  RngSeed seed = 0;

  Eigen::Index m_subsets() const { return losses.rows(); }
  Eigen::Index n_valid() const { return losses.cols(); }
};

struct NormalizedLabels {
  Eigen::MatrixXd labels;
  std::vector<std::uint8_t> degenerate;
};

struct GenConfig {
  std::int64_t n_valid = 0;
  std::int64_t n_train = 0;
  std::int64_t m_subsets = 0;
  std::int64_t n_per_subset = 0;
  models::ModelSpec model;
  models::TrainConfig train;
  NormalizeMode normalize = NormalizeMode::kVariance;
};

// Trains on the subset and evaluates the loss on every target.
std::vector<RetrainOutcome> retrain_and_eval(const models::ModelSpec& spec,
                                             const SubsetRef& subset, const Dataset& pool,
                                             const Dataset& targets,
                                             const models::TrainConfig& cfg);

// Per-column normalization over the M models: -(x - mean) / var by default
// (stddev mode divides by the standard deviation instead). Mean and variance
// are population statistics over the fixed set of M models. Columns with
// variance below eps_var come back zeroed and flagged.
NormalizedLabels normalize_labels(const Eigen::MatrixXd& losses,
                                  NormalizeMode mode = NormalizeMode::kVariance,
                                  double eps_var = kEpsVar);

// split_pool -> sample_subsets -> M retrainings -> losses -> labels.
// Retraining runs in parallel with per-subset seeds (train.seed ^ subset_id),
// so thread count cannot change the result.
CrossValInstance generate_instance(const Dataset& full, const GenConfig& cfg, RngSeed seed);

// Brute-force leave-one-out ground truth. Entry (i, j) is
// loss(x_j; theta trained without z_i) - loss(x_j; theta trained on the full
// pool): positive means removing z_i hurts x_j.
Eigen::MatrixXd loo_influence_oracle(const models::ModelSpec& spec, const Dataset& pool,
                                     const Dataset& targets, const models::TrainConfig& cfg);

// Instance directory layout: valid.jsonl, train_pool.jsonl, subsets.json,
// losses.bin, labels.bin, shape.json.
void save_instance(const CrossValInstance& inst, const std::filesystem::path& dir);
CrossValInstance load_instance(const std::filesystem::path& dir);

}  // namespace tda::oracle

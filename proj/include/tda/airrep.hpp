#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <utility>
#include <vector>

#include "tda/oracle.hpp"
#include "tda/types.hpp"

namespace tda::airrep {

enum class PoolingMode { kAttention, kMean };
enum class EncoderKind { kAffine, kMlp1 };  // mlp1 = one tanh hidden layer

// Trainable encoder plus pooling configuration. Weights are packed:
//   affine:  W (e x d, row-major), b (e)
//   mlp1:    W1 (h x d), b1 (h), W2 (e x h), b2 (e)
// unit_normalize rescales encoder outputs to the unit sphere before scoring
// and pooling; the default scores raw outputs.
struct AirRepModel {
  EncoderKind encoder = EncoderKind::kAffine;
  int d = 0;
  int e = 0;
  int hidden = 0;  // mlp1 only
  PoolingMode pooling = PoolingMode::kAttention;
  bool unit_normalize = false;
  RngSeed seed = 0;
  Eigen::VectorXd weights;

  int weight_count() const;
  Eigen::VectorXd encode_features(const Eigen::VectorXd& features) const;

  // Seeded init: weight matrices N(0, init_scale^2 / fan_in), biases zero.
  static AirRepModel init(EncoderKind encoder, int d, int e, int hidden,
                          PoolingMode pooling, RngSeed seed, double init_scale = 1.0);
};

struct AttentionWeights {
  Eigen::VectorXd alpha;  // nonnegative, sums to 1
};

using ExampleRefs = std::vector<const Example*>;

ExampleRefs gather_members(const Dataset& pool, const SubsetRef& subset);

Eigen::VectorXd encode(const AirRepModel& model, const Example& z);

// Softmax over absolute encoder inner products:
//   alpha_i = exp(|Enc(x)^T Enc(z_i)|) / sum_j exp(|Enc(x)^T Enc(z_j)|)
// Returns the pooled vector sum_i alpha_i Enc(z_i) and the weights.
std::pair<Eigen::VectorXd, AttentionWeights> attention_pool(const AirRepModel& model,
                                                            const Example& x,
                                                            const ExampleRefs& members);

// f(x, S): attention pooling scores Enc(x)^T sum_i alpha_i Enc(z_i); mean
// pooling averages the pairwise scores Enc(x)^T Enc(z_i).
double score_group(const AirRepModel& model, const Example& x, const ExampleRefs& members);

struct RankLossConfig {
  double t_min = 0.1;
  double t_max = 5.0;
  // Cap on active pairs per loss evaluation; 0 keeps every pair (the default
  // at desk scale, where subset counts per step are small).
  int pairs_per_step = 0;
};

struct RankLossResult {
  double loss = 0.0;
  Eigen::VectorXd grad;  // d loss / d f
  int active_pairs = 0;
};

// Weighted pairwise ranking loss over ordered pairs with r_i > r_j:
//   L = sum w_ij * -log sigmoid(f_i - f_j),
//   w_ij = 0 if |r_i - r_j| < t_min, else min(|r_i - r_j|, t_max).
// If rng is given and pairs_per_step > 0, at most that many active pairs are
// kept (deterministic draw).
RankLossResult ranking_loss(const Eigen::VectorXd& f, const Eigen::VectorXd& r,
                            const RankLossConfig& cfg, RngStream* rng = nullptr);

struct AirRepTrainConfig {
  enum class Optimizer { kAdamW, kGd };
  int steps = 500;
  double lr = 1e-3;
  int subsets_per_step = 8;
  int targets_per_step = 64;
  Optimizer optimizer = Optimizer::kAdamW;
  double weight_decay = 0.0;
  RngSeed seed = 0;
};

struct TrainCurve {
  std::vector<std::pair<int, double>> step_loss;
};

// One optimization batch: subset indices and validation columns of a single
// instance. Exposed so gradient checks can drive the same code path as the
// optimizer.
struct StepBatch {
  const oracle::CrossValInstance* instance = nullptr;
  std::vector<Eigen::Index> target_cols;
  std::vector<std::size_t> subset_idx;
};

// Mean over targets of the ranking loss across the batch subsets; writes the
// analytic weight gradient into grad_out when non-null.
double step_loss_and_grad(const AirRepModel& model, const StepBatch& batch,
                          const RankLossConfig& loss_cfg, Eigen::VectorXd* grad_out,
                          RngStream* pair_rng = nullptr);

// Per step: pick an instance, sample targets and subsets, score every
// (target, subset) pair, take one optimizer step on the ranking loss.
// Deterministic in cfg.seed. Degenerate label columns are never sampled.
AirRepModel train_airrep(const std::vector<const oracle::CrossValInstance*>& instances,
                         AirRepModel model, const AirRepTrainConfig& cfg,
                         const RankLossConfig& loss_cfg, TrainCurve* curve = nullptr);

// Estimator matrices for evaluation: subset scoring aligned with instance
// labels (M x N_v), and pairwise test x train scoring.
Eigen::MatrixXd score_matrix_subsets(const AirRepModel& model,
                                     const oracle::CrossValInstance& inst,
                                     PoolingMode pooling);
Eigen::MatrixXd score_matrix_pairs(const AirRepModel& model, const Dataset& tests,
                                   const Dataset& trains);

// JSON header line + little-endian float64 weight blob.
void save_airrep(const AirRepModel& model, const std::filesystem::path& path);
AirRepModel load_airrep(const std::filesystem::path& path);

void write_train_log(const TrainCurve& curve, const std::filesystem::path& path);

}  // namespace tda::airrep

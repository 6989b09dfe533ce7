#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

#include "tda/types.hpp"

namespace tda::models {

enum class ModelFamily { kLinearRegression, kLogisticRegression, kMlp };
enum class Activation { kTanh, kRelu };
enum class HessianMode { kExact, kFim };

// Dense p x p Hessians are materialized; keep p at desk scale.
inline constexpr int kHessianCap = 4096;

struct ModelSpec {
  ModelFamily family = ModelFamily::kLinearRegression;
  int d = 0;
  std::vector<int> hidden;  // mlp only; one or two layers, widths <= 32
  Activation activation = Activation::kTanh;
  int num_classes = 0;   // > 0 for classification outputs
  double l2_reg = 0.0;   // per-example (l2_reg / 2) * ||theta||^2 term
  bool with_bias = true;  // false gives pure-weight models (hand-checkable quadratics)

  int output_dim() const;
  int param_count() const;
  TaskKind task() const;
  void validate() const;
};

struct Provenance {
  std::int64_t subset_id = -1;
  RngSeed seed = 0;
  std::string optimizer;
  int epochs_run = 0;
};

struct TrainedModel {
  ModelSpec spec;
  Eigen::VectorXd theta;
  Provenance provenance;
};

struct TrainConfig {
  enum class Optimizer { kGd, kAdamW };
  Optimizer optimizer = Optimizer::kGd;
  double learning_rate = 0.1;
  int epochs = 100;
  int batch = 0;             // 0 = full batch
  double weight_decay = 0.0;  // adamw decoupled decay
  // Full-batch runs stop early once the mean-loss gradient inf-norm falls
  // below grad_tol (0 disables). Minibatch runs always run all epochs.
  double grad_tol = 0.0;
  double init_scale = 0.1;  // stddev of the seeded gaussian init; 0 = zeros
  RngSeed seed = 0;
};

// Per-example loss: squared error (1/2)(pred - y)^2 for regression,
// softmax cross-entropy for classification, plus (l2_reg/2)||theta||^2.
double loss(const TrainedModel& model, const Example& z);

// Analytic gradient of loss() at model.theta.
Eigen::VectorXd grad(const TrainedModel& model, const Example& z);

// Mean per-example Hessian over data plus damping * I. Exact mode
// differentiates the analytic gradient with forward-mode duals; fim mode
// averages per-example gradient outer products. Result is symmetric.
Eigen::MatrixXd hessian(const TrainedModel& model, const std::vector<Example>& data,
                        HessianMode mode, double damping);

// Trains on the subset members (duplicates are repeated examples) by
// minimizing the mean per-example loss. Deterministic in (spec, subset, cfg).
TrainedModel train(const ModelSpec& spec, const SubsetRef& subset, const Dataset& pool,
                   const TrainConfig& cfg);

// Mean training loss of the subset under the given parameters.
double mean_loss(const TrainedModel& model, const SubsetRef& subset, const Dataset& pool);

// Representation used by the representation-similarity baseline: raw features
// for linear families, last hidden activations for the mlp.
Eigen::VectorXd representation(const TrainedModel& model, const Example& z);

// SubsetRef covering every id of the dataset once, in id order.
SubsetRef full_subset(const Dataset& ds);

// Binary persistence: one JSON header line followed by the little-endian
// float64 parameter array. Round-trips bit-exactly.
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace tda::models

#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "tda/models.hpp"
#include "tda/types.hpp"

namespace tda::attr {

using models::HessianMode;

// Hessian-corrected (optionally projected and unit-normalized) loss gradient.
// The normalized flag records the flavor: pairwise scoring uses normalized
// embeddings, the group-influence recursion requires un-normalized ones, and
// the two must not be mixed.
struct GradientEmbedding {
  std::int64_t example_id = 0;
  Eigen::VectorXd phi;
  bool normalized = false;
};

struct Projection {
  Eigen::MatrixXd matrix;  // q x p
  RngSeed seed = 0;

  // Entries N(0, 1) scaled by 1/sqrt(q).
  static Projection random_gaussian(Eigen::Index q, Eigen::Index p, RngSeed seed);
  // Top-q principal components of the rows of grads (n x p).
  static Projection pca_of_gradients(const Eigen::MatrixXd& grads, Eigen::Index q);
};

// Per-example gradients as rows (n x p); used for PCA init and FIM paths.
Eigen::MatrixXd gradient_matrix(const models::TrainedModel& model,
                                const std::vector<Example>& examples);

// phi(z) = [norm2]( P (H + damping I)^{-1/2} grad(z) ). The inverse square
// root is computed once per model and shared across examples.
class GradientEmbedder {
 public:
  GradientEmbedder(const models::TrainedModel& model, const Dataset& train_pool,
                   HessianMode mode, double damping,
                   std::optional<Projection> proj, bool normalize);

  GradientEmbedding embed(const Example& z) const;
  std::vector<GradientEmbedding> embed_all(const std::vector<Example>& examples) const;

  Eigen::Index q() const;
  bool normalize() const { return normalize_; }

 private:
  models::TrainedModel model_;
  Eigen::MatrixXd corrector_;  // (H + damping I)^{-1/2}, p x p
  std::optional<Projection> proj_;
  bool normalize_;
};

// One-off convenience over GradientEmbedder (recomputes the Hessian).
GradientEmbedding embed_gradient(const models::TrainedModel& model, const Dataset& train_pool,
                                 const Example& z, const std::optional<Projection>& proj,
                                 HessianMode mode, double damping, bool normalize);

// Influence function value -grad(x)^T (H + damping I)^{-1} grad(z) with H the
// exact mean training Hessian over the pool. Negative values mean upweighting
// z is predicted to lower the loss on x.
double influence_exact(const models::TrainedModel& model, const Dataset& train_pool,
                       const Example& x, const Example& z, double damping);

// Batch form: entry (i, j) = influence_exact(tests[i], trains[j]).
Eigen::MatrixXd influence_matrix_exact(const models::TrainedModel& model,
                                       const Dataset& train_pool, const Dataset& tests,
                                       const Dataset& trains, double damping);

double score_dot(const GradientEmbedding& a, const GradientEmbedding& b);

// Gradient dot product without Hessian correction (identity corrector).
double tracin_score(const models::TrainedModel& model, const Example& x, const Example& z,
                    const std::optional<Projection>& proj, bool normalize);

// Cosine similarity of model representations (features for linear families,
// last hidden activations for the mlp).
double rds_score(const models::TrainedModel& model, const Example& x, const Example& z);

struct GroupInfluenceConfig {
  int order = 1;          // k
  std::int64_t n = 0;     // pool size
  std::int64_t m = 0;     // subset size
  HessianMode hessian_mode = HessianMode::kFim;
  double damping = 0.0;
};

// Order constants c^(k)_t. k = 1 keeps the plain first-order 1/(n-m); for
// k >= 2 the leading constant is n/(n-m) and each higher order multiplies by
// m/(n-m) once more: c_t = m^(t-1)/(n-m)^t. Values beyond t = 3 continue the
// same recursion rather than any closed form.
std::vector<double> group_constants(int k, std::int64_t n, std::int64_t m);

// k-order group influence via the alignment recursion
//   alpha_1(z) = 1,  alpha_t(z) = phi(z)^T sum_j alpha_{t-1}(z_j) phi(z_j),
// returning phi(x)^T sum_i sum_t c_t alpha_t(z_i) phi(z_i). Requires
// un-normalized embeddings of matching dimension.
double group_influence(const GroupInfluenceConfig& cfg,
                       std::span<const GradientEmbedding> subset_phis,
                       const GradientEmbedding& phi_x);

// Parameter-space expansion terms. delta[0] is
//   -(1/(n-m)) H^{-1} sum_{z in S} grad(z)
// and delta[t-1] for t >= 2 follows the signed recursion
//   delta_t = s_t (m/(n-m)) (I - H^{-1} H_S) delta_{t-1},  s_t = +1 for even
// t and -1 for odd t. H is the exact damped mean pool Hessian; H_S uses
// cfg.hessian_mode (exact mean subset Hessian or mean gradient outer
// products).
struct ExpansionTerms {
  std::vector<Eigen::VectorXd> delta;
  std::vector<double> constants;
};

ExpansionTerms expansion_terms(const models::TrainedModel& model, const Dataset& pool,
                               const SubsetRef& subset, const GroupInfluenceConfig& cfg);

// Embedding store: rows of embeddings.bin (float32) follow the order of the
// ids listed in the sidecar embeddings.json.
struct EmbeddingStoreMeta {
  bool normalized = false;
  std::string hessian_mode;
  std::optional<RngSeed> projection_seed;
};

void write_embedding_store(const std::filesystem::path& dir,
                           std::span<const GradientEmbedding> embeddings,
                           const EmbeddingStoreMeta& meta);
std::vector<GradientEmbedding> read_embedding_store(const std::filesystem::path& dir);

// Human-facing score dump: header x_id,z_id,score, one row per pair.
void write_scores_csv(const std::filesystem::path& path,
                      const std::vector<std::int64_t>& row_ids,
                      const std::vector<std::int64_t>& col_ids, const Eigen::MatrixXd& scores);

}  // namespace tda::attr

#include "tda/grad_attr.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <sstream>

#include "tda/io_util.hpp"
#include "tda/parallel.hpp"

namespace tda::attr {

using nlohmann::json;

Projection Projection::random_gaussian(Eigen::Index q, Eigen::Index p, RngSeed seed) {
  if (q < 1 || p < 1) throw UsageError("projection dims must be positive");
  Projection proj;
  proj.seed = seed;
  proj.matrix.resize(q, p);
  RngStream rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q));
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) proj.matrix(i, j) = scale * rng.normal();
  }
  return proj;
}

Projection Projection::pca_of_gradients(const Eigen::MatrixXd& grads, Eigen::Index q) {
  const Eigen::Index n = grads.rows();
  const Eigen::Index p = grads.cols();
  if (q < 1 || q > p) throw UsageError("pca projection dim out of range");
  if (n < 2) throw UsageError("pca needs at least two gradients");

  const Eigen::RowVectorXd mean = grads.colwise().mean();
  const Eigen::MatrixXd centered = grads.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("pca eigendecomposition failed");

  Projection proj;
  proj.matrix.resize(q, p);
  // Eigenvalues come back ascending; take the trailing q as components.
  for (Eigen::Index i = 0; i < q; ++i) {
    proj.matrix.row(i) = eig.eigenvectors().col(p - 1 - i).transpose();
  }
  return proj;
}

Eigen::MatrixXd gradient_matrix(const models::TrainedModel& model,
                                const std::vector<Example>& examples) {
  const int p = model.spec.param_count();
  Eigen::MatrixXd g(static_cast<Eigen::Index>(examples.size()), p);
  parallel_for(examples.size(), [&](std::size_t i) {
    g.row(static_cast<Eigen::Index>(i)) = models::grad(model, examples[i]).transpose();
  });
  return g;
}

namespace {

// Symmetric eigendecomposition helpers for the damped Hessian.
struct HessianEig {
  Eigen::MatrixXd vectors;
  Eigen::VectorXd values;
};

HessianEig decompose(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
  if (eig.info() != Eigen::Success) throw NumericError("hessian eigendecomposition failed");
  return {eig.eigenvectors(), eig.eigenvalues()};
}

Eigen::MatrixXd inverse_sqrt(const HessianEig& eig) {
  const double max_eig = eig.values.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (!(eig.values[i] > 0.0) || eig.values[i] < 1e-14 * std::max(1.0, max_eig)) {
      throw NumericError("hessian not positive definite; increase damping");
    }
  }
  return eig.vectors * eig.values.cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.vectors.transpose();
}

Eigen::MatrixXd inverse(const HessianEig& eig) {
  const double max_abs = eig.values.cwiseAbs().maxCoeff();
  if (max_abs == 0.0) throw NumericError("singular hessian");
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (std::abs(eig.values[i]) < 1e-12 * max_abs) throw NumericError("singular hessian");
  }
  return eig.vectors * eig.values.cwiseInverse().asDiagonal() * eig.vectors.transpose();
}

Eigen::VectorXd normalize_unit(Eigen::VectorXd v) {
  const double norm = v.norm();
  if (!(norm > 0.0)) throw NumericError("cannot unit-normalize a zero gradient");
  return v / norm;
}

}  // namespace

GradientEmbedder::GradientEmbedder(const models::TrainedModel& model,
                                   const Dataset& train_pool, HessianMode mode,
                                   double damping, std::optional<Projection> proj,
                                   bool normalize)
    : model_(model), proj_(std::move(proj)), normalize_(normalize) {
  const Eigen::MatrixXd h = models::hessian(model, train_pool.examples, mode, damping);
  corrector_ = inverse_sqrt(decompose(h));
  if (proj_ && proj_->matrix.cols() != corrector_.rows()) {
    throw UsageError("projection width does not match parameter count");
  }
}

Eigen::Index GradientEmbedder::q() const {
  return proj_ ? proj_->matrix.rows() : corrector_.rows();
}

GradientEmbedding GradientEmbedder::embed(const Example& z) const {
  Eigen::VectorXd v = corrector_ * models::grad(model_, z);
  if (proj_) v = proj_->matrix * v;
  if (normalize_) v = normalize_unit(std::move(v));
  return {z.id, std::move(v), normalize_};
}

std::vector<GradientEmbedding> GradientEmbedder::embed_all(
    const std::vector<Example>& examples) const {
  std::vector<GradientEmbedding> out(examples.size());
  parallel_for(examples.size(), [&](std::size_t i) { out[i] = embed(examples[i]); });
  return out;
}

GradientEmbedding embed_gradient(const models::TrainedModel& model, const Dataset& train_pool,
                                 const Example& z, const std::optional<Projection>& proj,
                                 HessianMode mode, double damping, bool normalize) {
  return GradientEmbedder(model, train_pool, mode, damping, proj, normalize).embed(z);
}

double influence_exact(const models::TrainedModel& model, const Dataset& train_pool,
                       const Example& x, const Example& z, double damping) {
  const Eigen::MatrixXd h =
      models::hessian(model, train_pool.examples, HessianMode::kExact, damping);
  const Eigen::MatrixXd hinv = inverse(decompose(h));
  return -models::grad(model, x).dot(hinv * models::grad(model, z));
}

Eigen::MatrixXd influence_matrix_exact(const models::TrainedModel& model,
                                       const Dataset& train_pool, const Dataset& tests,
                                       const Dataset& trains, double damping) {
  const Eigen::MatrixXd h =
      models::hessian(model, train_pool.examples, HessianMode::kExact, damping);
  const Eigen::MatrixXd hinv = inverse(decompose(h));
  const Eigen::MatrixXd g_test = gradient_matrix(model, tests.examples);
  const Eigen::MatrixXd g_train = gradient_matrix(model, trains.examples);
  return -(g_test * hinv * g_train.transpose());
}

double score_dot(const GradientEmbedding& a, const GradientEmbedding& b) {
  if (a.phi.size() != b.phi.size()) throw UsageError("embedding dimension mismatch");
  return a.phi.dot(b.phi);
}

double tracin_score(const models::TrainedModel& model, const Example& x, const Example& z,
                    const std::optional<Projection>& proj, bool normalize) {
  const auto make = [&](const Example& e) {
    Eigen::VectorXd v = models::grad(model, e);
    if (proj) {
      if (proj->matrix.cols() != v.size()) {
        throw UsageError("projection width does not match parameter count");
      }
      v = proj->matrix * v;
    }
    if (normalize) v = normalize_unit(std::move(v));
    return GradientEmbedding{e.id, std::move(v), normalize};
  };
  const GradientEmbedding ex = make(x);
  const GradientEmbedding ez = make(z);
  return score_dot(ex, ez);
}

double rds_score(const models::TrainedModel& model, const Example& x, const Example& z) {
  const Eigen::VectorXd rx = models::representation(model, x);
  const Eigen::VectorXd rz = models::representation(model, z);
  if (rx.size() != rz.size()) throw UsageError("representation dimension mismatch");
  const double nx = rx.norm();
  const double nz = rz.norm();
  if (nx == 0.0 || nz == 0.0) return 0.0;
  return rx.dot(rz) / (nx * nz);
}

std::vector<double> group_constants(int k, std::int64_t n, std::int64_t m) {
  if (k < 1) throw UsageError("group influence order must be >= 1");
  if (m < 1 || m >= n) throw UsageError("group influence needs 1 <= m < n");
  const double gap = static_cast<double>(n - m);
  if (k == 1) return {1.0 / gap};

  std::vector<double> c(static_cast<std::size_t>(k));
  c[0] = static_cast<double>(n) / gap;
  double high = 1.0 / gap;  // becomes m^(t-1)/(n-m)^t at order t
  const double ratio = static_cast<double>(m) / gap;
  for (int t = 2; t <= k; ++t) {
    high *= ratio;
    c[static_cast<std::size_t>(t - 1)] = high;
  }
  return c;
}

double group_influence(const GroupInfluenceConfig& cfg,
                       std::span<const GradientEmbedding> subset_phis,
                       const GradientEmbedding& phi_x) {
  if (subset_phis.empty()) throw UsageError("empty subset");
  if (phi_x.normalized) {
    throw UsageError("group influence requires un-normalized embeddings");
  }
  const Eigen::Index q = phi_x.phi.size();
  for (const GradientEmbedding& e : subset_phis) {
    if (e.normalized) throw UsageError("group influence requires un-normalized embeddings");
    if (e.phi.size() != q) throw UsageError("embedding dimension mismatch");
  }

  const std::vector<double> c = group_constants(cfg.order, cfg.n, cfg.m);
  const std::size_t count = subset_phis.size();

  std::vector<double> dots(count);
  for (std::size_t i = 0; i < count; ++i) dots[i] = phi_x.phi.dot(subset_phis[i].phi);

  // alpha_1 = 1 for every member.
  std::vector<double> alpha(count, 1.0);
  double score = 0.0;
  Eigen::VectorXd weighted_sum(q);
  for (int t = 1; t <= cfg.order; ++t) {
    if (t > 1) {
      std::vector<double> next(count);
      for (std::size_t i = 0; i < count; ++i) next[i] = subset_phis[i].phi.dot(weighted_sum);
      alpha = std::move(next);
    }
    double partial = 0.0;
    for (std::size_t i = 0; i < count; ++i) partial += alpha[i] * dots[i];
    score += c[static_cast<std::size_t>(t - 1)] * partial;

    if (t < cfg.order) {
      weighted_sum.setZero();
      for (std::size_t i = 0; i < count; ++i) weighted_sum += alpha[i] * subset_phis[i].phi;
    }
  }
  return score;
}

ExpansionTerms expansion_terms(const models::TrainedModel& model, const Dataset& pool,
                               const SubsetRef& subset, const GroupInfluenceConfig& cfg) {
  const std::int64_t n = pool.size();
  const std::int64_t m = subset.size();
  if (cfg.n != 0 && cfg.n != n) throw UsageError("cfg.n does not match pool size");
  if (cfg.m != 0 && cfg.m != m) throw UsageError("cfg.m does not match subset size");
  if (m < 1 || m >= n) throw UsageError("group influence needs 1 <= m < n");

  const Eigen::MatrixXd h =
      models::hessian(model, pool.examples, HessianMode::kExact, cfg.damping);
  const Eigen::MatrixXd hinv = inverse(decompose(h));

  std::vector<Example> members;
  members.reserve(static_cast<std::size_t>(m));
  for (std::int64_t id : subset.member_ids) members.push_back(pool.by_id(id));
  const Eigen::MatrixXd h_s = models::hessian(model, members, cfg.hessian_mode, 0.0);

  Eigen::VectorXd grad_sum = Eigen::VectorXd::Zero(model.spec.param_count());
  for (const Example& z : members) grad_sum += models::grad(model, z);

  ExpansionTerms terms;
  terms.constants = group_constants(cfg.order, n, m);
  terms.delta.reserve(static_cast<std::size_t>(cfg.order));
  const double gap = static_cast<double>(n - m);
  terms.delta.push_back(-(hinv * grad_sum) / gap);

  const double ratio = static_cast<double>(m) / gap;
  for (int t = 2; t <= cfg.order; ++t) {
    const Eigen::VectorXd& prev = terms.delta.back();
    Eigen::VectorXd next = ratio * (prev - hinv * (h_s * prev));
    if (t % 2 == 1) next = -next;  // sign alternates starting at +1 for t = 2
    terms.delta.push_back(std::move(next));
  }
  return terms;
}

void write_embedding_store(const std::filesystem::path& dir,
                           std::span<const GradientEmbedding> embeddings,
                           const EmbeddingStoreMeta& meta) {
  if (embeddings.empty()) throw UsageError("embedding store is empty");
  const Eigen::Index q = embeddings[0].phi.size();
  Eigen::MatrixXf rows(static_cast<Eigen::Index>(embeddings.size()), q);
  json ids = json::array();
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].phi.size() != q) throw UsageError("embedding dimension mismatch");
    rows.row(static_cast<Eigen::Index>(i)) = embeddings[i].phi.cast<float>().transpose();
    ids.push_back(embeddings[i].example_id);
  }
  std::filesystem::create_directories(dir);
  io::write_matrix_f32(dir / "embeddings.bin", rows);

  json sidecar = {{"q", q},
                  {"count", embeddings.size()},
                  {"normalized", meta.normalized},
                  {"hessian_mode", meta.hessian_mode},
                  {"example_ids", ids}};
  if (meta.projection_seed) sidecar["projection_seed"] = *meta.projection_seed;
  io::write_file(dir / "embeddings.json", sidecar.dump(2) + "\n");
}

std::vector<GradientEmbedding> read_embedding_store(const std::filesystem::path& dir) {
  json sidecar;
  try {
    sidecar = json::parse(io::read_file(dir / "embeddings.json"));
  } catch (const json::exception& e) {
    throw UsageError("malformed embeddings.json in " + dir.string() + ": " + e.what());
  }
  const auto q = sidecar.at("q").get<Eigen::Index>();
  const auto count = sidecar.at("count").get<Eigen::Index>();
  const bool normalized = sidecar.at("normalized").get<bool>();
  const auto ids = sidecar.at("example_ids").get<std::vector<std::int64_t>>();
  const Eigen::MatrixXf rows = io::read_matrix_f32(dir / "embeddings.bin", count, q);

  std::vector<GradientEmbedding> out(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) {
    out[static_cast<std::size_t>(i)] = {ids.at(static_cast<std::size_t>(i)),
                                        rows.row(i).transpose().cast<double>(), normalized};
  }
  return out;
}

void write_scores_csv(const std::filesystem::path& path,
                      const std::vector<std::int64_t>& row_ids,
                      const std::vector<std::int64_t>& col_ids, const Eigen::MatrixXd& scores) {
  if (scores.rows() != static_cast<Eigen::Index>(row_ids.size()) ||
      scores.cols() != static_cast<Eigen::Index>(col_ids.size())) {
    throw UsageError("score matrix shape does not match id lists");
  }
  std::ostringstream out;
  out << "x_id,z_id,score\n";
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      out << row_ids[static_cast<std::size_t>(i)] << ','
          << col_ids[static_cast<std::size_t>(j)] << ',' << io::format_double(scores(i, j))
          << '\n';
    }
  }
  io::write_file(path, out.str());
}

}  // namespace tda::attr

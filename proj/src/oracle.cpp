#include "tda/oracle.hpp"

#include <json.hpp>

#include <cmath>

#include "tda/dataset_io.hpp"
#include "tda/io_util.hpp"
#include "tda/parallel.hpp"
#include "tda/sampling.hpp"

namespace tda::oracle {

using nlohmann::json;

std::vector<RetrainOutcome> retrain_and_eval(const models::ModelSpec& spec,
                                             const SubsetRef& subset, const Dataset& pool,
                                             const Dataset& targets,
                                             const models::TrainConfig& cfg) {
  const models::TrainedModel model = models::train(spec, subset, pool, cfg);
  std::vector<RetrainOutcome> out;
  out.reserve(targets.examples.size());
  for (const Example& x : targets.examples) {
    out.push_back({subset.subset_id, x.id, models::loss(model, x)});
  }
  return out;
}

NormalizedLabels normalize_labels(const Eigen::MatrixXd& losses, NormalizeMode mode,
                                  double eps_var) {
  const Eigen::Index m = losses.rows();
  if (m < 2) throw UsageError("normalize_labels needs at least two models");
  if (!losses.allFinite()) throw NumericError("losses contain non-finite values");

  NormalizedLabels out;
  out.labels = Eigen::MatrixXd::Zero(m, losses.cols());
  out.degenerate.assign(static_cast<std::size_t>(losses.cols()), 0);

  for (Eigen::Index j = 0; j < losses.cols(); ++j) {
    const double mean = losses.col(j).mean();
    const double var = (losses.col(j).array() - mean).square().sum() / static_cast<double>(m);
    if (var < eps_var) {
      out.degenerate[static_cast<std::size_t>(j)] = 1;
      continue;  // column stays all-zero
    }
    const double denom = mode == NormalizeMode::kVariance ? var : std::sqrt(var);
    out.labels.col(j) = -(losses.col(j).array() - mean) / denom;
  }
  return out;
}

CrossValInstance generate_instance(const Dataset& full, const GenConfig& cfg, RngSeed seed) {
  if (cfg.m_subsets < 2) throw UsageError("gen config: m_subsets must be >= 2");

  CrossValInstance inst;
  inst.seed = seed;
  std::tie(inst.valid, inst.train_pool) = split_pool(full, cfg.n_valid, cfg.n_train, seed);
  inst.subsets = sample_subsets(inst.train_pool, cfg.m_subsets, cfg.n_per_subset,
                                seed ^ 0xa5a5a5a5a5a5a5a5ULL);

  inst.losses.resize(cfg.m_subsets, inst.valid.size());
  parallel_for(static_cast<std::size_t>(cfg.m_subsets), [&](std::size_t i) {
    models::TrainConfig sub_cfg = cfg.train;
    sub_cfg.seed = cfg.train.seed ^ static_cast<RngSeed>(inst.subsets[i].subset_id);
    const auto outcomes =
        retrain_and_eval(cfg.model, inst.subsets[i], inst.train_pool, inst.valid, sub_cfg);
    for (const RetrainOutcome& o : outcomes) {
      inst.losses(static_cast<Eigen::Index>(i), o.target_id) = o.r;
    }
  });

  NormalizedLabels norm = normalize_labels(inst.losses, cfg.normalize);
  inst.labels = std::move(norm.labels);
  inst.degenerate = std::move(norm.degenerate);
  return inst;
}

Eigen::MatrixXd loo_influence_oracle(const models::ModelSpec& spec, const Dataset& pool,
                                     const Dataset& targets, const models::TrainConfig& cfg) {
  constexpr std::int64_t kLooCap = 500;
  if (pool.size() > kLooCap) {
    throw UsageError("loo oracle pool too large: " + std::to_string(pool.size()) + " > " +
                     std::to_string(kLooCap));
  }
  if (pool.size() < 2) throw UsageError("loo oracle needs at least two examples");

  const models::TrainedModel base = models::train(spec, models::full_subset(pool), pool, cfg);
  Eigen::VectorXd base_loss(targets.size());
  for (Eigen::Index j = 0; j < targets.size(); ++j) {
    base_loss[j] = models::loss(base, targets.examples[static_cast<std::size_t>(j)]);
  }

  Eigen::MatrixXd out(pool.size(), targets.size());
  parallel_for(static_cast<std::size_t>(pool.size()), [&](std::size_t i) {
    SubsetRef loo;
    loo.subset_id = static_cast<std::int64_t>(i);
    loo.member_ids.reserve(static_cast<std::size_t>(pool.size() - 1));
    for (std::int64_t id = 0; id < pool.size(); ++id) {
      if (id != static_cast<std::int64_t>(i)) loo.member_ids.push_back(id);
    }
    const models::TrainedModel m = models::train(spec, loo, pool, cfg);
    for (Eigen::Index j = 0; j < targets.size(); ++j) {
      out(static_cast<Eigen::Index>(i), j) =
          models::loss(m, targets.examples[static_cast<std::size_t>(j)]) - base_loss[j];
    }
  });
  return out;
}

void save_instance(const CrossValInstance& inst, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_dataset_jsonl(inst.valid, dir / "valid.jsonl");
  io::write_dataset_jsonl(inst.train_pool, dir / "train_pool.jsonl");
  io::write_subset_manifest(inst.subsets, dir / "subsets.json");
  io::write_matrix_f64(dir / "losses.bin", inst.losses);
  io::write_matrix_f64(dir / "labels.bin", inst.labels);

  json shape = {{"m_subsets", inst.losses.rows()},
                {"n_valid", inst.losses.cols()},
                {"seed", inst.seed},
                {"degenerate_columns", json::array()}};
  for (std::size_t j = 0; j < inst.degenerate.size(); ++j) {
    if (inst.degenerate[j]) shape["degenerate_columns"].push_back(j);
  }
  io::write_file(dir / "shape.json", shape.dump(2) + "\n");
}

CrossValInstance load_instance(const std::filesystem::path& dir) {
  CrossValInstance inst;
  inst.valid = io::read_dataset_jsonl(dir / "valid.jsonl");
  inst.train_pool = io::read_dataset_jsonl(dir / "train_pool.jsonl");
  inst.subsets = io::read_subset_manifest(dir / "subsets.json");

  json shape;
  try {
    shape = json::parse(io::read_file(dir / "shape.json"));
  } catch (const json::exception& e) {
    throw UsageError("malformed shape.json in " + dir.string() + ": " + e.what());
  }
  const auto m = shape.at("m_subsets").get<Eigen::Index>();
  const auto nv = shape.at("n_valid").get<Eigen::Index>();
  inst.seed = shape.value("seed", RngSeed{0});
  inst.losses = io::read_matrix_f64(dir / "losses.bin", m, nv);
  inst.labels = io::read_matrix_f64(dir / "labels.bin", m, nv);
  inst.degenerate.assign(static_cast<std::size_t>(nv), 0);
  for (const auto& j : shape.value("degenerate_columns", std::vector<std::int64_t>{})) {
    inst.degenerate.at(static_cast<std::size_t>(j)) = 1;
  }
  return inst;
}

}  // namespace tda::oracle

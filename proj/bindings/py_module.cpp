#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tda/airrep.hpp"
#include "tda/dataset_io.hpp"
#include "tda/eval.hpp"
#include "tda/grad_attr.hpp"
#include "tda/oracle.hpp"
#include "tda/sampling.hpp"

namespace py = pybind11;
using namespace tda;

namespace {

TaskKind kind_from(const std::string& s) {
  if (s == "regression") return TaskKind::kRegression;
  if (s == "classification") return TaskKind::kClassification;
  throw UsageError("kind must be 'regression' or 'classification'");
}

models::ModelFamily family_from(const std::string& s) {
  if (s == "linear-regression") return models::ModelFamily::kLinearRegression;
  if (s == "logistic-regression") return models::ModelFamily::kLogisticRegression;
  if (s == "mlp") return models::ModelFamily::kMlp;
  throw UsageError("unknown model family: " + s);
}

models::HessianMode hessian_mode_from(const std::string& s) {
  if (s == "exact") return models::HessianMode::kExact;
  if (s == "fim") return models::HessianMode::kFim;
  throw UsageError("hessian mode must be 'exact' or 'fim'");
}

Dataset dataset_from_arrays(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                            const std::string& kind, int num_classes,
                            const std::vector<std::string>& tags) {
  if (features.rows() != labels.size()) {
    throw UsageError("features and labels disagree on the number of examples");
  }
  if (!tags.empty() && static_cast<Eigen::Index>(tags.size()) != features.rows()) {
    throw UsageError("tags must be empty or one per example");
  }
  Dataset ds;
  ds.d = features.cols();
  ds.kind = kind_from(kind);
  ds.num_classes = num_classes;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    Example ex;
    ex.id = i;
    ex.features = features.row(i).transpose();
    ex.label = labels[i];
    if (!tags.empty()) ex.tag = tags[static_cast<std::size_t>(i)];
    ds.examples.push_back(std::move(ex));
  }
  ds.validate();
  return ds;
}

SubsetRef subset_of(const std::vector<std::int64_t>& ids, std::int64_t subset_id = 0) {
  SubsetRef ref;
  ref.subset_id = subset_id;
  ref.member_ids = ids;
  return ref;
}

Example example_of(const Eigen::VectorXd& features, double label) {
  Example ex;
  ex.id = 0;
  ex.features = features;
  ex.label = label;
  return ex;
}

models::ModelSpec spec_of(const std::string& family, int d, const std::vector<int>& hidden,
                          const std::string& activation, int num_classes, double l2_reg,
                          bool with_bias) {
  models::ModelSpec spec;
  spec.family = family_from(family);
  spec.d = d;
  spec.hidden = hidden;
  spec.activation =
      activation == "relu" ? models::Activation::kRelu : models::Activation::kTanh;
  spec.num_classes = num_classes;
  spec.l2_reg = l2_reg;
  spec.with_bias = with_bias;
  spec.validate();
  return spec;
}

models::TrainConfig train_cfg_of(const std::string& optimizer, double lr, int epochs,
                                 int batch, double weight_decay, double grad_tol,
                                 double init_scale, RngSeed seed) {
  models::TrainConfig cfg;
  cfg.optimizer = optimizer == "adamw" ? models::TrainConfig::Optimizer::kAdamW
                                       : models::TrainConfig::Optimizer::kGd;
  cfg.learning_rate = lr;
  cfg.epochs = epochs;
  cfg.batch = batch;
  cfg.weight_decay = weight_decay;
  cfg.grad_tol = grad_tol;
  cfg.init_scale = init_scale;
  cfg.seed = seed;
  return cfg;
}

std::vector<attr::GradientEmbedding> embeddings_from(const Eigen::MatrixXd& phis) {
  std::vector<attr::GradientEmbedding> out;
  out.reserve(static_cast<std::size_t>(phis.rows()));
  for (Eigen::Index i = 0; i < phis.rows(); ++i) {
    out.push_back({i, phis.row(i).transpose(), false});
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Training-data attribution lab: retraining oracles, influence "
            "functions, learned attribution scoring, and rank-based evaluation.";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<Dataset>(m, "Dataset")
      .def_static("from_arrays", &dataset_from_arrays, py::arg("features"), py::arg("labels"),
                  py::arg("kind") = "regression", py::arg("num_classes") = 0,
                  py::arg("tags") = std::vector<std::string>{})
      .def_static("load", &io::read_dataset_jsonl, py::arg("path"))
      .def("save", [](const Dataset& ds, const std::filesystem::path& p) {
        io::write_dataset_jsonl(ds, p);
      })
      .def_property_readonly("size", &Dataset::size)
      .def_property_readonly("d", [](const Dataset& ds) { return ds.d; })
      .def_property_readonly("kind",
                             [](const Dataset& ds) {
                               return ds.kind == TaskKind::kRegression ? "regression"
                                                                       : "classification";
                             })
      .def_property_readonly("num_classes", [](const Dataset& ds) { return ds.num_classes; })
      .def("features",
           [](const Dataset& ds) {
             Eigen::MatrixXd f(ds.size(), ds.d);
             for (Eigen::Index i = 0; i < ds.size(); ++i) {
               f.row(i) = ds.examples[static_cast<std::size_t>(i)].features.transpose();
             }
             return f;
           })
      .def("labels",
           [](const Dataset& ds) {
             Eigen::VectorXd l(ds.size());
             for (Eigen::Index i = 0; i < ds.size(); ++i) {
               l[i] = ds.examples[static_cast<std::size_t>(i)].label;
             }
             return l;
           })
      .def("tags", [](const Dataset& ds) {
        std::vector<std::string> tags;
        for (const auto& ex : ds.examples) tags.push_back(ex.tag.value_or(""));
        return tags;
      });

  m.def("synth_planted_dataset",
        [](int num_tasks, int per_task, int d, double noise, double nuisance, RngSeed seed) {
          return eval::synth_planted_dataset({num_tasks, per_task, d, noise, nuisance}, seed);
        },
        py::arg("num_tasks"), py::arg("per_task"), py::arg("d"), py::arg("noise"),
        py::arg("nuisance") = -1.0, py::arg("seed") = 0);

  m.def("sample_subsets",
        [](const Dataset& pool, std::int64_t m_subsets, std::int64_t n_per_subset,
           RngSeed seed) {
          std::vector<std::vector<std::int64_t>> out;
          for (auto& s : sample_subsets(pool, m_subsets, n_per_subset, seed)) {
            out.push_back(std::move(s.member_ids));
          }
          return out;
        },
        py::arg("pool"), py::arg("m_subsets"), py::arg("n_per_subset"), py::arg("seed"));

  m.def("split_pool", &split_pool, py::arg("full"), py::arg("n_valid"), py::arg("n_train"),
        py::arg("seed"));

  py::class_<models::TrainedModel>(m, "Model")
      .def_property_readonly("theta",
                             [](const models::TrainedModel& m_) { return m_.theta; })
      .def("loss",
           [](const models::TrainedModel& m_, const Eigen::VectorXd& features, double label) {
             return models::loss(m_, example_of(features, label));
           },
           py::arg("features"), py::arg("label"))
      .def("grad",
           [](const models::TrainedModel& m_, const Eigen::VectorXd& features, double label) {
             return models::grad(m_, example_of(features, label));
           },
           py::arg("features"), py::arg("label"))
      .def("save", &models::save_model, py::arg("path"))
      .def_static("load", &models::load_model, py::arg("path"));

  m.def("train_model",
        [](const Dataset& pool, std::optional<std::vector<std::int64_t>> member_ids,
           const std::string& family, const std::vector<int>& hidden,
           const std::string& activation, int num_classes, double l2_reg, bool with_bias,
           const std::string& optimizer, double lr, int epochs, int batch,
           double weight_decay, double grad_tol, double init_scale, RngSeed seed) {
          const models::ModelSpec spec = spec_of(
              family, static_cast<int>(pool.d), hidden, activation, num_classes, l2_reg,
              with_bias);
          const SubsetRef subset =
              member_ids ? subset_of(*member_ids) : models::full_subset(pool);
          return models::train(spec, subset, pool,
                               train_cfg_of(optimizer, lr, epochs, batch, weight_decay,
                                            grad_tol, init_scale, seed));
        },
        py::arg("pool"), py::arg("member_ids") = std::nullopt,
        py::arg("family") = "logistic-regression", py::arg("hidden") = std::vector<int>{},
        py::arg("activation") = "tanh", py::arg("num_classes") = 0, py::arg("l2_reg") = 1e-3,
        py::arg("with_bias") = true, py::arg("optimizer") = "gd", py::arg("lr") = 0.5,
        py::arg("epochs") = 300, py::arg("batch") = 0, py::arg("weight_decay") = 0.0,
        py::arg("grad_tol") = 1e-9, py::arg("init_scale") = 0.1, py::arg("seed") = 0);

  m.def("hessian",
        [](const models::TrainedModel& model, const Dataset& data, const std::string& mode,
           double damping) {
          return models::hessian(model, data.examples, hessian_mode_from(mode), damping);
        },
        py::arg("model"), py::arg("data"), py::arg("mode") = "exact",
        py::arg("damping") = 0.0);

  m.def("influence_exact",
        [](const models::TrainedModel& model, const Dataset& pool,
           const Eigen::VectorXd& x_features, double x_label,
           const Eigen::VectorXd& z_features, double z_label, double damping) {
          return attr::influence_exact(model, pool, example_of(x_features, x_label),
                                       example_of(z_features, z_label), damping);
        },
        py::arg("model"), py::arg("pool"), py::arg("x_features"), py::arg("x_label"),
        py::arg("z_features"), py::arg("z_label"), py::arg("damping") = 1e-3);

  m.def("influence_matrix_exact", &attr::influence_matrix_exact, py::arg("model"),
        py::arg("pool"), py::arg("tests"), py::arg("trains"), py::arg("damping") = 1e-3);

  m.def("embed_gradients",
        [](const models::TrainedModel& model, const Dataset& pool, const Dataset& examples,
           const std::string& hessian_mode, double damping, bool normalize,
           std::optional<Eigen::Index> projection_q, RngSeed projection_seed) {
          std::optional<attr::Projection> proj;
          if (projection_q) {
            proj = attr::Projection::random_gaussian(*projection_q, model.spec.param_count(),
                                                     projection_seed);
          }
          attr::GradientEmbedder embedder(model, pool, hessian_mode_from(hessian_mode),
                                          damping, proj, normalize);
          const auto embs = embedder.embed_all(examples.examples);
          Eigen::MatrixXd out(static_cast<Eigen::Index>(embs.size()), embedder.q());
          for (std::size_t i = 0; i < embs.size(); ++i) {
            out.row(static_cast<Eigen::Index>(i)) = embs[i].phi.transpose();
          }
          return out;
        },
        py::arg("model"), py::arg("pool"), py::arg("examples"),
        py::arg("hessian_mode") = "exact", py::arg("damping") = 1e-3,
        py::arg("normalize") = true, py::arg("projection_q") = std::nullopt,
        py::arg("projection_seed") = 0);

  m.def("tracin_score",
        [](const models::TrainedModel& model, const Eigen::VectorXd& x_features,
           double x_label, const Eigen::VectorXd& z_features, double z_label,
           bool normalize) {
          return attr::tracin_score(model, example_of(x_features, x_label),
                                    example_of(z_features, z_label), std::nullopt, normalize);
        },
        py::arg("model"), py::arg("x_features"), py::arg("x_label"), py::arg("z_features"),
        py::arg("z_label"), py::arg("normalize") = true);

  m.def("rds_score",
        [](const models::TrainedModel& model, const Eigen::VectorXd& x_features,
           const Eigen::VectorXd& z_features) {
          return attr::rds_score(model, example_of(x_features, 0.0),
                                 example_of(z_features, 0.0));
        },
        py::arg("model"), py::arg("x_features"), py::arg("z_features"));

  m.def("group_influence",
        [](const Eigen::MatrixXd& subset_phis, const Eigen::VectorXd& phi_x, int k,
           std::int64_t n, std::int64_t m_) {
          attr::GroupInfluenceConfig cfg;
          cfg.order = k;
          cfg.n = n;
          cfg.m = m_;
          const auto subset = embeddings_from(subset_phis);
          return attr::group_influence(cfg, subset, {-1, phi_x, false});
        },
        py::arg("subset_phis"), py::arg("phi_x"), py::arg("k"), py::arg("n"), py::arg("m"));

  m.def("group_constants", &attr::group_constants, py::arg("k"), py::arg("n"), py::arg("m"));

  m.def("save_embeddings",
        [](const std::filesystem::path& dir, const Eigen::MatrixXd& phis,
           const std::vector<std::int64_t>& ids, bool normalized,
           const std::string& hessian_mode, std::optional<RngSeed> projection_seed) {
          if (static_cast<Eigen::Index>(ids.size()) != phis.rows()) {
            throw UsageError("ids must have one entry per embedding row");
          }
          std::vector<attr::GradientEmbedding> embs;
          embs.reserve(ids.size());
          for (Eigen::Index i = 0; i < phis.rows(); ++i) {
            embs.push_back({ids[static_cast<std::size_t>(i)], phis.row(i).transpose(),
                            normalized});
          }
          attr::EmbeddingStoreMeta meta;
          meta.normalized = normalized;
          meta.hessian_mode = hessian_mode;
          meta.projection_seed = projection_seed;
          attr::write_embedding_store(dir, embs, meta);
        },
        py::arg("dir"), py::arg("phis"), py::arg("ids"), py::arg("normalized") = false,
        py::arg("hessian_mode") = "exact", py::arg("projection_seed") = std::nullopt);

  m.def("load_embeddings",
        [](const std::filesystem::path& dir) {
          const auto embs = attr::read_embedding_store(dir);
          Eigen::MatrixXd phis(static_cast<Eigen::Index>(embs.size()), embs.at(0).phi.size());
          std::vector<std::int64_t> ids;
          for (std::size_t i = 0; i < embs.size(); ++i) {
            phis.row(static_cast<Eigen::Index>(i)) = embs[i].phi.transpose();
            ids.push_back(embs[i].example_id);
          }
          return py::make_tuple(phis, ids, embs.at(0).normalized);
        },
        py::arg("dir"));

  m.def("normalize_labels",
        [](const Eigen::MatrixXd& losses, const std::string& mode) {
          const auto norm = oracle::normalize_labels(
              losses, mode == "stddev" ? oracle::NormalizeMode::kStdDev
                                       : oracle::NormalizeMode::kVariance);
          std::vector<bool> degenerate(norm.degenerate.begin(), norm.degenerate.end());
          return py::make_tuple(norm.labels, degenerate);
        },
        py::arg("losses"), py::arg("mode") = "variance");

  m.def("loo_influence_oracle",
        [](const Dataset& pool, const Dataset& targets, const std::string& family,
           int num_classes, double l2_reg, double lr, int epochs, double grad_tol,
           RngSeed seed) {
          const models::ModelSpec spec = spec_of(family, static_cast<int>(pool.d), {}, "tanh",
                                                 num_classes, l2_reg, true);
          return oracle::loo_influence_oracle(
              spec, pool, targets, train_cfg_of("gd", lr, epochs, 0, 0.0, grad_tol, 0.1, seed));
        },
        py::arg("pool"), py::arg("targets"), py::arg("family") = "logistic-regression",
        py::arg("num_classes") = 0, py::arg("l2_reg") = 0.05, py::arg("lr") = 0.5,
        py::arg("epochs") = 3000, py::arg("grad_tol") = 1e-12, py::arg("seed") = 0);

  m.def("generate_instance",
        [](const Dataset& full, std::int64_t n_valid, std::int64_t n_train,
           std::int64_t m_subsets, std::int64_t n_per_subset, const std::string& family,
           int num_classes, double l2_reg, double lr, int epochs, double grad_tol,
           RngSeed train_seed, RngSeed seed,
           std::optional<std::filesystem::path> out_dir) {
          oracle::GenConfig gen;
          gen.n_valid = n_valid;
          gen.n_train = n_train;
          gen.m_subsets = m_subsets;
          gen.n_per_subset = n_per_subset;
          gen.model = spec_of(family, static_cast<int>(full.d), {}, "tanh", num_classes,
                              l2_reg, true);
          gen.train = train_cfg_of("gd", lr, epochs, 0, 0.0, grad_tol, 0.1, train_seed);
          const auto inst = oracle::generate_instance(full, gen, seed);
          if (out_dir) oracle::save_instance(inst, *out_dir);
          return py::make_tuple(inst.losses, inst.labels);
        },
        py::arg("full"), py::arg("n_valid"), py::arg("n_train"), py::arg("m_subsets"),
        py::arg("n_per_subset"), py::arg("family") = "logistic-regression",
        py::arg("num_classes") = 0, py::arg("l2_reg") = 0.05, py::arg("lr") = 0.5,
        py::arg("epochs") = 300, py::arg("grad_tol") = 1e-9, py::arg("train_seed") = 0,
        py::arg("seed") = 0, py::arg("out_dir") = std::nullopt);

  m.def("ranking_loss",
        [](const Eigen::VectorXd& f, const Eigen::VectorXd& r, double t_min, double t_max) {
          airrep::RankLossConfig cfg;
          cfg.t_min = t_min;
          cfg.t_max = t_max;
          const auto res = airrep::ranking_loss(f, r, cfg);
          return py::make_tuple(res.loss, res.grad, res.active_pairs);
        },
        py::arg("f"), py::arg("r"), py::arg("t_min") = 0.1, py::arg("t_max") = 5.0);

  py::class_<airrep::AirRepModel>(m, "AirRep")
      .def_property_readonly("e", [](const airrep::AirRepModel& a) { return a.e; })
      .def_property_readonly("d", [](const airrep::AirRepModel& a) { return a.d; })
      .def("encode",
           [](const airrep::AirRepModel& a, const Eigen::VectorXd& features) {
             return a.encode_features(features);
           },
           py::arg("features"))
      .def("score_group",
           [](const airrep::AirRepModel& a, const Eigen::VectorXd& x_features,
              const Eigen::MatrixXd& member_features) {
             std::vector<Example> members;
             airrep::ExampleRefs refs;
             members.reserve(static_cast<std::size_t>(member_features.rows()));
             for (Eigen::Index i = 0; i < member_features.rows(); ++i) {
               members.push_back(example_of(member_features.row(i).transpose(), 0.0));
             }
             for (const auto& e : members) refs.push_back(&e);
             return airrep::score_group(a, example_of(x_features, 0.0), refs);
           },
           py::arg("x_features"), py::arg("member_features"))
      .def("save", &airrep::save_airrep, py::arg("path"))
      .def_static("load", &airrep::load_airrep, py::arg("path"));

  m.def("init_airrep",
        [](int d, int e, const std::string& encoder, int hidden, const std::string& pooling,
           bool unit_normalize, RngSeed seed, double init_scale) {
          auto model = airrep::AirRepModel::init(
              encoder == "mlp1" ? airrep::EncoderKind::kMlp1 : airrep::EncoderKind::kAffine,
              d, e, hidden,
              pooling == "mean" ? airrep::PoolingMode::kMean
                                : airrep::PoolingMode::kAttention,
              seed, init_scale);
          model.unit_normalize = unit_normalize;
          return model;
        },
        py::arg("d"), py::arg("e"), py::arg("encoder") = "affine", py::arg("hidden") = 0,
        py::arg("pooling") = "attention", py::arg("unit_normalize") = false,
        py::arg("seed") = 0, py::arg("init_scale") = 1.0);

  m.def("train_airrep",
        [](const std::vector<std::filesystem::path>& instance_dirs,
           airrep::AirRepModel model, int steps, double lr, int subsets_per_step,
           int targets_per_step, const std::string& optimizer, double weight_decay,
           RngSeed seed, double t_min, double t_max) {
          std::vector<oracle::CrossValInstance> instances;
          instances.reserve(instance_dirs.size());
          for (const auto& dir : instance_dirs) {
            instances.push_back(oracle::load_instance(dir));
          }
          std::vector<const oracle::CrossValInstance*> ptrs;
          for (const auto& inst : instances) ptrs.push_back(&inst);

          airrep::AirRepTrainConfig cfg;
          cfg.steps = steps;
          cfg.lr = lr;
          cfg.subsets_per_step = subsets_per_step;
          cfg.targets_per_step = targets_per_step;
          cfg.optimizer = optimizer == "gd" ? airrep::AirRepTrainConfig::Optimizer::kGd
                                            : airrep::AirRepTrainConfig::Optimizer::kAdamW;
          cfg.weight_decay = weight_decay;
          cfg.seed = seed;
          airrep::RankLossConfig lcfg;
          lcfg.t_min = t_min;
          lcfg.t_max = t_max;
          airrep::TrainCurve curve;
          auto trained = airrep::train_airrep(ptrs, std::move(model), cfg, lcfg, &curve);
          std::vector<double> losses;
          for (const auto& [step, loss] : curve.step_loss) losses.push_back(loss);
          return py::make_tuple(std::move(trained), losses);
        },
        py::arg("instance_dirs"), py::arg("model"), py::arg("steps") = 500,
        py::arg("lr") = 1e-3, py::arg("subsets_per_step") = 8,
        py::arg("targets_per_step") = 64, py::arg("optimizer") = "adamw",
        py::arg("weight_decay") = 0.0, py::arg("seed") = 0, py::arg("t_min") = 0.1,
        py::arg("t_max") = 5.0);

  m.def("airrep_subset_scores",
        [](const airrep::AirRepModel& model, const std::filesystem::path& instance_dir,
           const std::string& pooling) {
          const auto inst = oracle::load_instance(instance_dir);
          return airrep::score_matrix_subsets(
              model, inst,
              pooling == "mean" ? airrep::PoolingMode::kMean
                                : airrep::PoolingMode::kAttention);
        },
        py::arg("model"), py::arg("instance_dir"), py::arg("pooling") = "attention");

  m.def("instance_labels",
        [](const std::filesystem::path& instance_dir) {
          const auto inst = oracle::load_instance(instance_dir);
          return inst.labels;
        },
        py::arg("instance_dir"));

  m.def("spearman",
        [](const std::vector<double>& a, const std::vector<double>& b) {
          return eval::spearman(a, b).rho;
        },
        py::arg("a"), py::arg("b"));

  m.def("lds",
        [](const Eigen::MatrixXd& scores, const Eigen::MatrixXd& labels) {
          const auto report = eval::lds(scores, labels);
          py::dict out;
          out["mean"] = report.mean;
          out["per_target"] = report.per_target;
          out["num_subsets"] = report.num_subsets;
          out["degenerate_count"] = report.degenerate_count;
          return out;
        },
        py::arg("scores"), py::arg("labels"));

  m.def("select_topk",
        [](const Eigen::MatrixXd& scores, int k) {
          const auto sel = eval::select_topk(scores, k);
          return py::make_tuple(sel.selected_ids, sel.best_rank);
        },
        py::arg("scores"), py::arg("k"));

  m.def("classify_by_top1", &eval::classify_by_top1, py::arg("scores"),
        py::arg("train_tags"), py::arg("test_tags"));
}

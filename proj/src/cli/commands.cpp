#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "tda/airrep.hpp"
#include "tda/config_json.hpp"
#include "tda/dataset_io.hpp"
#include "tda/eval.hpp"
#include "tda/grad_attr.hpp"
#include "tda/io_util.hpp"
#include "tda/oracle.hpp"
#include "tda/sampling.hpp"

namespace tda::cli {

using nlohmann::json;

namespace {

const std::vector<std::string> kCommands = {"gen-data", "attribute", "train-airrep",
                                            "eval",     "select",    "classify"};

// ---------------------------------------------------------------------------
// Config machinery

void check_known_keys(const json& defaults, const json& given, const std::string& prefix) {
  for (const auto& [key, value] : given.items()) {
    if (!defaults.contains(key)) throw UsageError("unknown config key: " + prefix + key);
    if (defaults.at(key).is_object()) {
      if (!value.is_object()) {
        throw UsageError("config key " + prefix + key + " must be an object");
      }
      check_known_keys(defaults.at(key), value, prefix + key + ".");
    }
  }
}

json merge(json base, const json& overlay) {
  for (const auto& [key, value] : overlay.items()) {
    if (value.is_object() && base.contains(key) && base.at(key).is_object()) {
      base[key] = merge(base.at(key), value);
    } else {
      base[key] = value;
    }
  }
  return base;
}

json parse_override_value(const std::string& raw) {
  const json parsed = json::parse(raw, nullptr, false);
  if (!parsed.is_discarded()) return parsed;
  return json(raw);
}

json overrides_to_tree(const std::vector<std::pair<std::string, std::string>>& overrides) {
  json tree = json::object();
  for (const auto& [key, raw] : overrides) {
    json* node = &tree;
    std::string rest = key;
    std::size_t dot;
    while ((dot = rest.find('.')) != std::string::npos) {
      const std::string head = rest.substr(0, dot);
      if (!node->contains(head)) (*node)[head] = json::object();
      node = &(*node)[head];
      rest = rest.substr(dot + 1);
    }
    (*node)[rest] = parse_override_value(raw);
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Provenance: resolved config plus content hashes of every input path.

std::string hash_path(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::string combined;
    for (const fs::path& f : files) {
      combined += fs::relative(f, path).generic_string();
      combined += ':';
      combined += io::sha256_file_hex(f);
      combined += '\n';
    }
    return io::sha256_hex(combined);
  }
  return io::sha256_file_hex(path);
}

void write_provenance(const std::filesystem::path& out_dir, const json& resolved,
                      const std::vector<std::filesystem::path>& inputs) {
  std::filesystem::create_directories(out_dir);
  io::write_file(out_dir / "resolved_config.json", resolved.dump(2) + "\n");
  json hashes = json::object();
  for (const auto& p : inputs) hashes[p.generic_string()] = hash_path(p);
  io::write_file(out_dir / "inputs.json", hashes.dump(2) + "\n");
}

std::filesystem::path required_path(const json& cfg, const std::string& key) {
  const std::string value = cfg.at(key).get<std::string>();
  if (value.empty()) throw UsageError("config key '" + key + "' is required");
  return value;
}

// ---------------------------------------------------------------------------
// Shared pieces

json model_defaults() {
  return {{"family", "logistic-regression"}, {"d", 0},           {"hidden", json::array()},
          {"activation", "tanh"},            {"num_classes", 0}, {"l2_reg", 1e-3},
          {"with_bias", true}};
}

json train_defaults() {
  return {{"optimizer", "gd"}, {"learning_rate", 0.5}, {"epochs", 300},
          {"batch", 0},        {"weight_decay", 0.0},  {"grad_tol", 1e-8},
          {"init_scale", 0.1}, {"seed", 0}};
}

// Fills d (and num_classes for classification data) from the dataset when the
// config leaves them at 0.
models::ModelSpec spec_from_config(const json& model_cfg, const Dataset& data) {
  models::ModelSpec spec = model_cfg.get<models::ModelSpec>();
  if (spec.d == 0) spec.d = static_cast<int>(data.d);
  if (spec.num_classes == 0 && data.kind == TaskKind::kClassification &&
      spec.family != models::ModelFamily::kLinearRegression) {
    spec.num_classes = data.num_classes;
  }
  spec.validate();
  return spec;
}

Dataset dataset_from_config(const json& data_cfg,
                            std::vector<std::filesystem::path>& inputs) {
  const std::string source = data_cfg.at("source").get<std::string>();
  if (source == "file") {
    const std::filesystem::path path = data_cfg.at("path").get<std::string>();
    if (path.empty()) throw UsageError("data.source=file needs data.path");
    inputs.push_back(path);
    return io::read_dataset_jsonl(path);
  }
  if (source != "synth") throw UsageError("data.source must be 'synth' or 'file'");
  const json& s = data_cfg.at("synth");
  eval::PlantedConfig planted;
  planted.num_tasks = s.at("num_tasks").get<int>();
  planted.per_task = s.at("per_task").get<int>();
  planted.d = s.at("d").get<int>();
  planted.noise = s.at("noise").get<double>();
  planted.nuisance = s.at("nuisance").get<double>();
  return eval::synth_planted_dataset(planted, s.at("seed").get<RngSeed>());
}

struct ScoreArtifact {
  Eigen::MatrixXd matrix;
  std::vector<std::int64_t> row_ids;
  std::vector<std::int64_t> col_ids;
  std::string level;  // "pair" (tests x trains) or "subset" (subsets x targets)
};

void write_scores(const std::filesystem::path& dir, const ScoreArtifact& art,
                  const std::string& method, const json& extra) {
  std::filesystem::create_directories(dir);
  io::write_matrix_f64(dir / "scores.bin", art.matrix);
  json sidecar = {{"rows", art.matrix.rows()},   {"cols", art.matrix.cols()},
                  {"row_ids", art.row_ids},      {"col_ids", art.col_ids},
                  {"level", art.level},          {"method", method}};
  sidecar.update(extra);
  io::write_file(dir / "scores.json", sidecar.dump(2) + "\n");
  if (art.level == "subset") {
    // Human-facing CSV lists (target, subset) pairs.
    attr::write_scores_csv(dir / "scores.csv", art.col_ids, art.row_ids,
                           art.matrix.transpose());
  } else {
    attr::write_scores_csv(dir / "scores.csv", art.row_ids, art.col_ids, art.matrix);
  }
}

ScoreArtifact read_scores(const std::filesystem::path& dir) {
  json sidecar;
  try {
    sidecar = json::parse(io::read_file(dir / "scores.json"));
  } catch (const json::exception& e) {
    throw UsageError("malformed scores.json in " + dir.string() + ": " + e.what());
  }
  ScoreArtifact art;
  art.level = sidecar.at("level").get<std::string>();
  art.row_ids = sidecar.at("row_ids").get<std::vector<std::int64_t>>();
  art.col_ids = sidecar.at("col_ids").get<std::vector<std::int64_t>>();
  art.matrix = io::read_matrix_f64(dir / "scores.bin", sidecar.at("rows").get<Eigen::Index>(),
                                   sidecar.at("cols").get<Eigen::Index>());
  return art;
}

std::vector<std::int64_t> ids_of(const Dataset& ds) {
  std::vector<std::int64_t> ids(static_cast<std::size_t>(ds.size()));
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

// ---------------------------------------------------------------------------
// gen-data

int cmd_gen_data(const json& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const std::filesystem::path out_dir = required_path(cfg, "out_dir");

  std::vector<std::filesystem::path> inputs;
  const Dataset full = dataset_from_config(cfg.at("data"), inputs);

  oracle::GenConfig gen;
  gen.n_valid = cfg.at("split").at("n_valid").get<std::int64_t>();
  gen.n_train = cfg.at("split").at("n_train").get<std::int64_t>();
  gen.m_subsets = cfg.at("subsets").at("m").get<std::int64_t>();
  gen.n_per_subset = cfg.at("subsets").at("n").get<std::int64_t>();
  gen.model = spec_from_config(cfg.at("model"), full);
  gen.train = cfg.at("train").get<models::TrainConfig>();
  gen.normalize = cfg.at("normalize").get<std::string>() == "stddev"
                      ? oracle::NormalizeMode::kStdDev
                      : oracle::NormalizeMode::kVariance;
  if (cfg.at("normalize").get<std::string>() != "variance" &&
      cfg.at("normalize").get<std::string>() != "stddev") {
    throw UsageError("normalize must be 'variance' or 'stddev'");
  }

  const int num_instances = cfg.at("num_instances").get<int>();
  if (num_instances < 1) throw UsageError("num_instances must be >= 1");
  const RngSeed base_seed = cfg.at("seed").get<RngSeed>();

  write_provenance(out_dir, cfg, inputs);

  int total_degenerate = 0;
  for (int i = 0; i < num_instances; ++i) {
    oracle::GenConfig inst_gen = gen;
    inst_gen.train.seed = gen.train.seed + static_cast<RngSeed>(i);
    const oracle::CrossValInstance inst =
        oracle::generate_instance(full, inst_gen, base_seed + static_cast<RngSeed>(i));
    std::ostringstream name;
    name << "instance_" << std::setw(3) << std::setfill('0') << i;
    oracle::save_instance(inst, out_dir / name.str());
    total_degenerate += static_cast<int>(
        std::count(inst.degenerate.begin(), inst.degenerate.end(), std::uint8_t{1}));
  }

  const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
  std::cout << "gen-data: instances=" << num_instances
            << " degenerate_columns=" << total_degenerate << " wall_time_s=" << elapsed.count()
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// attribute

Eigen::MatrixXd pairs_to_subsets(const Eigen::MatrixXd& pair_scores,
                                 const std::vector<SubsetRef>& subsets) {
  // f(x, S) as the sum of pairwise scores over members (duplicates counted).
  Eigen::MatrixXd out(static_cast<Eigen::Index>(subsets.size()), pair_scores.rows());
  for (std::size_t s = 0; s < subsets.size(); ++s) {
    for (Eigen::Index j = 0; j < pair_scores.rows(); ++j) {
      double acc = 0.0;
      for (const std::int64_t id : subsets[s].member_ids) acc += pair_scores(j, id);
      out(static_cast<Eigen::Index>(s), j) = acc;
    }
  }
  return out;
}

int cmd_attribute(const json& cfg) {
  const std::filesystem::path out_dir = required_path(cfg, "out_dir");
  const std::filesystem::path instance_dir = required_path(cfg, "instance_dir");
  const std::string method = cfg.at("method").get<std::string>();
  const std::string level = cfg.at("level").get<std::string>();
  if (level != "pair" && level != "subset") {
    throw UsageError("level must be 'pair' or 'subset'");
  }

  std::vector<std::filesystem::path> inputs = {instance_dir};
  const oracle::CrossValInstance inst = oracle::load_instance(instance_dir);
  const double damping = cfg.at("damping").get<double>();

  // Reference model for the gradient methods: either given or trained once on
  // the instance's full train pool.
  std::optional<models::TrainedModel> reference_cache;
  const auto reference_model = [&]() -> const models::TrainedModel& {
    if (!reference_cache) {
      const std::string model_path = cfg.at("model_path").get<std::string>();
      if (!model_path.empty()) {
        inputs.push_back(model_path);
        reference_cache = models::load_model(model_path);
      } else {
        const models::ModelSpec spec = spec_from_config(cfg.at("model"), inst.train_pool);
        reference_cache =
            models::train(spec, models::full_subset(inst.train_pool), inst.train_pool,
                          cfg.at("train").get<models::TrainConfig>());
      }
    }
    return *reference_cache;
  };

  const auto projection = [&](int p) -> std::optional<attr::Projection> {
    const json& pj = cfg.at("projection");
    const std::string kind = pj.at("kind").get<std::string>();
    if (kind == "none") return std::nullopt;
    const auto q = pj.at("q").get<Eigen::Index>();
    if (kind == "gaussian") {
      return attr::Projection::random_gaussian(q, p, pj.at("seed").get<RngSeed>());
    }
    if (kind == "pca") {
      const models::TrainedModel& model = reference_model();
      return attr::Projection::pca_of_gradients(
          attr::gradient_matrix(model, inst.train_pool.examples), q);
    }
    throw UsageError("projection.kind must be 'none', 'gaussian', or 'pca'");
  };

  ScoreArtifact art;
  art.level = level;
  json extra = {{"instance_dir", instance_dir.generic_string()}, {"damping", damping}};

  const auto hess_mode = cfg.at("hessian").get<models::HessianMode>();
  const bool normalize = cfg.at("normalize").get<bool>();

  if (method == "airrep") {
    const std::string airrep_path = cfg.at("airrep_path").get<std::string>();
    if (airrep_path.empty()) {
      throw UsageError("method=airrep requires a trained AirRepModel path (airrep_path)");
    }
    inputs.push_back(airrep_path);
    const airrep::AirRepModel model = airrep::load_airrep(airrep_path);
    if (level == "pair") {
      art.matrix = airrep::score_matrix_pairs(model, inst.valid, inst.train_pool);
      art.row_ids = ids_of(inst.valid);
      art.col_ids = ids_of(inst.train_pool);
    } else {
      art.matrix = airrep::score_matrix_subsets(model, inst, model.pooling);
      art.row_ids.resize(inst.subsets.size());
      std::iota(art.row_ids.begin(), art.row_ids.end(), 0);
      art.col_ids = ids_of(inst.valid);
    }
  } else if (method == "group-influence-k") {
    if (level != "subset") throw UsageError("group-influence-k requires level=subset");
    const int k = cfg.at("k").get<int>();
    const models::TrainedModel& model = reference_model();
    attr::GradientEmbedder embedder(model, inst.train_pool, hess_mode, damping,
                                    projection(model.spec.param_count()),
                                    /*normalize=*/false);
    const auto train_phis = embedder.embed_all(inst.train_pool.examples);
    const auto test_phis = embedder.embed_all(inst.valid.examples);

    art.matrix.resize(static_cast<Eigen::Index>(inst.subsets.size()), inst.valid.size());
    for (std::size_t s = 0; s < inst.subsets.size(); ++s) {
      attr::GroupInfluenceConfig gcfg;
      gcfg.order = k;
      gcfg.n = inst.train_pool.size();
      gcfg.m = inst.subsets[s].size();
      gcfg.hessian_mode = hess_mode;
      gcfg.damping = damping;
      std::vector<attr::GradientEmbedding> phis;
      phis.reserve(inst.subsets[s].member_ids.size());
      for (const std::int64_t id : inst.subsets[s].member_ids) {
        phis.push_back(train_phis[static_cast<std::size_t>(id)]);
      }
      for (Eigen::Index j = 0; j < inst.valid.size(); ++j) {
        art.matrix(static_cast<Eigen::Index>(s), j) = attr::group_influence(
            gcfg, phis, test_phis[static_cast<std::size_t>(j)]);
      }
    }
    art.row_ids.resize(inst.subsets.size());
    std::iota(art.row_ids.begin(), art.row_ids.end(), 0);
    art.col_ids = ids_of(inst.valid);
    extra["k"] = k;
  } else {
    // Pairwise gradient/representation methods; subset level sums members.
    const models::TrainedModel& model = reference_model();
    Eigen::MatrixXd pair_scores;
    if (method == "influence-exact") {
      // Oriented so that larger = the training example is predicted to help
      // the test example (negated raw influence-function value).
      pair_scores =
          -attr::influence_matrix_exact(model, inst.train_pool, inst.valid, inst.train_pool,
                                        damping);
    } else if (method == "grad-embed") {
      attr::GradientEmbedder embedder(model, inst.train_pool, hess_mode, damping,
                                      projection(model.spec.param_count()), normalize);
      const auto trains = embedder.embed_all(inst.train_pool.examples);
      const auto tests = embedder.embed_all(inst.valid.examples);
      pair_scores.resize(inst.valid.size(), inst.train_pool.size());
      for (Eigen::Index i = 0; i < inst.valid.size(); ++i) {
        for (Eigen::Index j = 0; j < inst.train_pool.size(); ++j) {
          pair_scores(i, j) = attr::score_dot(tests[static_cast<std::size_t>(i)],
                                              trains[static_cast<std::size_t>(j)]);
        }
      }
    } else if (method == "tracin") {
      const auto proj = projection(model.spec.param_count());
      pair_scores.resize(inst.valid.size(), inst.train_pool.size());
      for (Eigen::Index i = 0; i < inst.valid.size(); ++i) {
        for (Eigen::Index j = 0; j < inst.train_pool.size(); ++j) {
          pair_scores(i, j) = attr::tracin_score(
              model, inst.valid.examples[static_cast<std::size_t>(i)],
              inst.train_pool.examples[static_cast<std::size_t>(j)], proj, normalize);
        }
      }
    } else if (method == "rds") {
      pair_scores.resize(inst.valid.size(), inst.train_pool.size());
      for (Eigen::Index i = 0; i < inst.valid.size(); ++i) {
        for (Eigen::Index j = 0; j < inst.train_pool.size(); ++j) {
          pair_scores(i, j) =
              attr::rds_score(model, inst.valid.examples[static_cast<std::size_t>(i)],
                              inst.train_pool.examples[static_cast<std::size_t>(j)]);
        }
      }
    } else {
      throw UsageError("unknown method: " + method);
    }

    if (level == "pair") {
      art.matrix = std::move(pair_scores);
      art.row_ids = ids_of(inst.valid);
      art.col_ids = ids_of(inst.train_pool);
    } else {
      art.matrix = pairs_to_subsets(pair_scores, inst.subsets);
      art.row_ids.resize(inst.subsets.size());
      std::iota(art.row_ids.begin(), art.row_ids.end(), 0);
      art.col_ids = ids_of(inst.valid);
    }
  }

  write_provenance(out_dir, cfg, inputs);
  write_scores(out_dir, art, method, extra);
  std::cout << "attribute: method=" << method << " level=" << level << " rows="
            << art.matrix.rows() << " cols=" << art.matrix.cols() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-airrep

int cmd_train_airrep(const json& cfg) {
  const std::filesystem::path out_dir = required_path(cfg, "out_dir");
  const auto instance_dirs = cfg.at("instances").get<std::vector<std::string>>();
  if (instance_dirs.empty()) throw UsageError("train-airrep needs at least one instance dir");

  std::vector<std::filesystem::path> inputs;
  std::vector<oracle::CrossValInstance> instances;
  instances.reserve(instance_dirs.size());
  for (const std::string& dir : instance_dirs) {
    inputs.push_back(dir);
    instances.push_back(oracle::load_instance(dir));
  }

  const json& mj = cfg.at("model");
  const airrep::EncoderKind kind = mj.at("encoder").get<std::string>() == "mlp1"
                                       ? airrep::EncoderKind::kMlp1
                                       : airrep::EncoderKind::kAffine;
  if (mj.at("encoder").get<std::string>() != "affine" &&
      mj.at("encoder").get<std::string>() != "mlp1") {
    throw UsageError("model.encoder must be 'affine' or 'mlp1'");
  }
  const airrep::PoolingMode pooling = mj.at("pooling").get<std::string>() == "mean"
                                          ? airrep::PoolingMode::kMean
                                          : airrep::PoolingMode::kAttention;
  if (mj.at("pooling").get<std::string>() != "attention" &&
      mj.at("pooling").get<std::string>() != "mean") {
    throw UsageError("model.pooling must be 'attention' or 'mean'");
  }
  airrep::AirRepModel model = airrep::AirRepModel::init(
      kind, static_cast<int>(instances.front().valid.d), mj.at("e").get<int>(),
      mj.at("hidden").get<int>(), pooling, mj.at("seed").get<RngSeed>(),
      mj.at("init_scale").get<double>());
  model.unit_normalize = mj.at("unit_normalize").get<bool>();

  const json& tj = cfg.at("train");
  airrep::AirRepTrainConfig tcfg;
  tcfg.steps = tj.at("steps").get<int>();
  tcfg.lr = tj.at("lr").get<double>();
  tcfg.subsets_per_step = tj.at("subsets_per_step").get<int>();
  tcfg.targets_per_step = tj.at("targets_per_step").get<int>();
  tcfg.optimizer = tj.at("optimizer").get<std::string>() == "gd"
                       ? airrep::AirRepTrainConfig::Optimizer::kGd
                       : airrep::AirRepTrainConfig::Optimizer::kAdamW;
  tcfg.weight_decay = tj.at("weight_decay").get<double>();
  tcfg.seed = tj.at("seed").get<RngSeed>();

  const json& lj = cfg.at("loss");
  airrep::RankLossConfig lcfg;
  lcfg.t_min = lj.at("t_min").get<double>();
  lcfg.t_max = lj.at("t_max").get<double>();
  lcfg.pairs_per_step = lj.at("pairs_per_step").get<int>();

  std::vector<const oracle::CrossValInstance*> ptrs;
  for (const auto& inst : instances) ptrs.push_back(&inst);

  airrep::TrainCurve curve;
  model = airrep::train_airrep(ptrs, std::move(model), tcfg, lcfg, &curve);

  write_provenance(out_dir, cfg, inputs);
  airrep::save_airrep(model, out_dir / "airrep.bin");
  airrep::write_train_log(curve, out_dir / "train_log.csv");

  const double final_loss = curve.step_loss.empty() ? 0.0 : curve.step_loss.back().second;
  std::cout << "train-airrep: steps=" << tcfg.steps << " final_loss=" << final_loss << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval / select / classify

int cmd_eval(const json& cfg) {
  const std::filesystem::path out_dir = required_path(cfg, "out_dir");
  const std::filesystem::path scores_dir = required_path(cfg, "scores");
  const std::filesystem::path instance_dir = required_path(cfg, "instance_dir");

  const ScoreArtifact art = read_scores(scores_dir);
  if (art.level != "subset") throw UsageError("eval needs subset-level scores");
  const oracle::CrossValInstance inst = oracle::load_instance(instance_dir);
  if (art.matrix.rows() != inst.m_subsets() || art.matrix.cols() != inst.n_valid()) {
    throw UsageError("score matrix shape does not match instance");
  }

  const eval::LdsReport report = eval::lds(art.matrix, inst.labels);
  write_provenance(out_dir, cfg, {scores_dir, instance_dir});
  eval::write_lds_report(report, out_dir / "lds_report.json");
  std::cout << "eval: mean_lds_x100=" << 100.0 * report.mean
            << " targets=" << report.per_target.size()
            << " degenerate=" << report.degenerate_count << "\n";
  return 0;
}

int cmd_select(const json& cfg) {
  const std::filesystem::path out_dir = required_path(cfg, "out_dir");
  const std::filesystem::path scores_dir = required_path(cfg, "scores");
  const int k = cfg.at("k").get<int>();

  const ScoreArtifact art = read_scores(scores_dir);
  if (art.level != "pair") throw UsageError("select needs pair-level scores");
  const eval::SelectionResult sel = eval::select_topk(art.matrix, k);

  write_provenance(out_dir, cfg, {scores_dir});
  eval::write_selection_csv(sel, out_dir / "selection.csv");
  std::cout << "select: k=" << k << " first_id="
            << (sel.selected_ids.empty() ? -1 : sel.selected_ids.front()) << "\n";
  return 0;
}

int cmd_classify(const json& cfg) {
  const std::filesystem::path out_dir = required_path(cfg, "out_dir");
  const std::filesystem::path scores_dir = required_path(cfg, "scores");
  const std::filesystem::path train_path = required_path(cfg, "train_dataset");
  const std::filesystem::path test_path = required_path(cfg, "test_dataset");

  const ScoreArtifact art = read_scores(scores_dir);
  if (art.level != "pair") throw UsageError("classify needs pair-level scores");
  const Dataset trains = io::read_dataset_jsonl(train_path);
  const Dataset tests = io::read_dataset_jsonl(test_path);

  const auto tags_of = [](const Dataset& ds) {
    std::vector<std::string> tags;
    tags.reserve(ds.examples.size());
    for (const Example& ex : ds.examples) {
      if (!ex.tag) throw UsageError("example " + std::to_string(ex.id) + " is missing a tag");
      tags.push_back(*ex.tag);
    }
    return tags;
  };
  const std::vector<std::string> train_tags = tags_of(trains);
  const std::vector<std::string> test_tags = tags_of(tests);
  const double accuracy = eval::classify_by_top1(art.matrix, train_tags, test_tags);

  write_provenance(out_dir, cfg, {scores_dir, train_path, test_path});

  std::ostringstream csv;
  csv << "test_id,top1_train_id,test_tag,train_tag,match\n";
  for (Eigen::Index i = 0; i < art.matrix.rows(); ++i) {
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < art.matrix.cols(); ++j) {
      if (art.matrix(i, j) > art.matrix(i, arg)) arg = j;
    }
    const auto& tt = test_tags[static_cast<std::size_t>(i)];
    const auto& zt = train_tags[static_cast<std::size_t>(arg)];
    csv << art.row_ids[static_cast<std::size_t>(i)] << ','
        << art.col_ids[static_cast<std::size_t>(arg)] << ',' << tt << ',' << zt << ','
        << (tt == zt ? 1 : 0) << '\n';
  }
  io::write_file(out_dir / "classification.csv", csv.str());
  io::write_file(out_dir / "classification.json",
                 json{{"accuracy", accuracy}, {"num_tests", art.matrix.rows()}}.dump(2) + "\n");
  std::cout << "classify: accuracy=" << accuracy << "\n";
  return 0;
}

}  // namespace

bool is_command(const std::string& name) {
  return std::find(kCommands.begin(), kCommands.end(), name) != kCommands.end();
}

std::vector<std::string> command_names() { return kCommands; }

json default_config(const std::string& command) {
  if (command == "gen-data") {
    return {{"out_dir", ""},
            {"seed", 0},
            {"num_instances", 4},
            {"data",
             {{"source", "synth"},
              {"path", ""},
              {"synth",
               {{"num_tasks", 4},
                {"per_task", 150},
                {"d", 8},
                {"noise", 0.5},
                {"nuisance", -1.0},
                {"seed", 1}}}}},
            {"split", {{"n_valid", 50}, {"n_train", 500}}},
            {"subsets", {{"m", 60}, {"n", 50}}},
            {"model", model_defaults()},
            {"train", train_defaults()},
            {"normalize", "variance"}};
  }
  if (command == "attribute") {
    return {{"out_dir", ""},
            {"instance_dir", ""},
            {"method", "grad-embed"},
            {"level", "pair"},
            {"model", model_defaults()},
            {"train", train_defaults()},
            {"model_path", ""},
            {"airrep_path", ""},
            {"damping", 1e-3},
            {"hessian", "exact"},
            {"normalize", true},
            {"projection", {{"kind", "none"}, {"q", 32}, {"seed", 13}}},
            {"k", 2}};
  }
  if (command == "train-airrep") {
    return {{"out_dir", ""},
            {"instances", json::array()},
            {"model",
             {{"encoder", "affine"},
              {"e", 32},
              {"hidden", 16},
              {"pooling", "attention"},
              {"unit_normalize", false},
              {"seed", 7},
              {"init_scale", 1.0}}},
            {"train",
             {{"steps", 500},
              {"lr", 1e-3},
              {"subsets_per_step", 8},
              {"targets_per_step", 64},
              {"optimizer", "adamw"},
              {"weight_decay", 0.0},
              {"seed", 7}}},
            {"loss", {{"t_min", 0.1}, {"t_max", 5.0}, {"pairs_per_step", 0}}}};
  }
  if (command == "eval") {
    return {{"out_dir", ""}, {"scores", ""}, {"instance_dir", ""}};
  }
  if (command == "select") {
    return {{"out_dir", ""}, {"scores", ""}, {"k", 10}};
  }
  if (command == "classify") {
    return {{"out_dir", ""}, {"scores", ""}, {"train_dataset", ""}, {"test_dataset", ""}};
  }
  throw UsageError("unknown command: " + command);
}

json resolve_config(const std::string& command,
                    const std::optional<std::filesystem::path>& config_file,
                    const std::vector<std::pair<std::string, std::string>>& overrides) {
  const json defaults = default_config(command);
  json resolved = defaults;
  if (config_file) {
    json from_file;
    try {
      from_file = json::parse(io::read_file(*config_file));
    } catch (const json::exception& e) {
      throw UsageError("malformed config " + config_file->string() + ": " + e.what());
    }
    check_known_keys(defaults, from_file, "");
    resolved = merge(resolved, from_file);
  }
  const json tree = overrides_to_tree(overrides);
  check_known_keys(defaults, tree, "");
  resolved = merge(resolved, tree);
  return resolved;
}

int run_command(const std::string& command, const json& cfg) {
  if (command == "gen-data") return cmd_gen_data(cfg);
  if (command == "attribute") return cmd_attribute(cfg);
  if (command == "train-airrep") return cmd_train_airrep(cfg);
  if (command == "eval") return cmd_eval(cfg);
  if (command == "select") return cmd_select(cfg);
  if (command == "classify") return cmd_classify(cfg);
  throw UsageError("unknown command: " + command);
}

}  // namespace tda::cli

#include "tda/airrep.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "tda/io_util.hpp"
#include "tda/parallel.hpp"

namespace tda::airrep {

using nlohmann::json;

int AirRepModel::weight_count() const {
  if (encoder == EncoderKind::kAffine) return e * d + e;
  return hidden * d + hidden + e * hidden + e;
}

namespace {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct AffineView {
  RowMajorMap w;
  Eigen::Map<const Eigen::VectorXd> b;
};

AffineView affine_at(const double* base, int rows, int cols) {
  return {RowMajorMap(base, rows, cols),
          Eigen::Map<const Eigen::VectorXd>(base + static_cast<std::size_t>(rows) * cols, rows)};
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double ex = std::exp(x);
  return ex / (1.0 + ex);
}

// -log sigmoid(x) = softplus(-x), computed without overflow.
double neg_log_sigmoid(double x) {
  if (x >= 0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

}  // namespace

namespace {

Eigen::VectorXd encode_raw(const AirRepModel& m, const Eigen::VectorXd& features) {
  if (m.encoder == EncoderKind::kAffine) {
    const AffineView v = affine_at(m.weights.data(), m.e, m.d);
    return v.w * features + v.b;
  }
  const AffineView l1 = affine_at(m.weights.data(), m.hidden, m.d);
  const AffineView l2 = affine_at(
      m.weights.data() + static_cast<std::size_t>(m.hidden) * m.d + m.hidden, m.e, m.hidden);
  const Eigen::VectorXd h = (l1.w * features + l1.b).array().tanh();
  return l2.w * h + l2.b;
}

}  // namespace

Eigen::VectorXd AirRepModel::encode_features(const Eigen::VectorXd& features) const {
  if (features.size() != d) {
    throw UsageError("encoder expects " + std::to_string(d) + " features, got " +
                     std::to_string(features.size()));
  }
  Eigen::VectorXd out = encode_raw(*this, features);
  if (unit_normalize) {
    const double norm = out.norm();
    if (!(norm > 0.0)) throw NumericError("cannot unit-normalize a zero encoding");
    out /= norm;
  }
  return out;
}

AirRepModel AirRepModel::init(EncoderKind encoder, int d, int e, int hidden,
                              PoolingMode pooling, RngSeed seed, double init_scale) {
  if (d < 1 || e < 1) throw UsageError("encoder dims must be positive");
  if (encoder == EncoderKind::kMlp1 && hidden < 1) {
    throw UsageError("mlp1 encoder needs a positive hidden width");
  }
  AirRepModel m;
  m.encoder = encoder;
  m.d = d;
  m.e = e;
  m.hidden = encoder == EncoderKind::kMlp1 ? hidden : 0;
  m.pooling = pooling;
  m.seed = seed;
  m.weights = Eigen::VectorXd::Zero(m.weight_count());

  RngStream rng(seed);
  const auto fill_matrix = [&](double* base, int rows, int cols, int fan_in) {
    const double scale = init_scale / std::sqrt(static_cast<double>(fan_in));
    for (int i = 0; i < rows * cols; ++i) base[i] = scale * rng.normal();
  };
  if (encoder == EncoderKind::kAffine) {
    fill_matrix(m.weights.data(), e, d, d);
  } else {
    fill_matrix(m.weights.data(), hidden, d, d);
    fill_matrix(m.weights.data() + static_cast<std::size_t>(hidden) * d + hidden, e, hidden,
                hidden);
  }
  return m;
}

ExampleRefs gather_members(const Dataset& pool, const SubsetRef& subset) {
  ExampleRefs refs;
  refs.reserve(subset.member_ids.size());
  for (std::int64_t id : subset.member_ids) {
    if (id < 0 || id >= pool.size()) {
      throw UsageError("subset member " + std::to_string(id) + " not in pool");
    }
    refs.push_back(&pool.examples[static_cast<std::size_t>(id)]);
  }
  return refs;
}

Eigen::VectorXd encode(const AirRepModel& model, const Example& z) {
  return model.encode_features(z.features);
}

namespace {

// Attention weights over precomputed pairwise scores d_i = Enc(x)^T Enc(z_i).
Eigen::VectorXd attention_from_dots(const Eigen::VectorXd& dots) {
  const Eigen::VectorXd mags = dots.cwiseAbs();
  const double mx = mags.maxCoeff();
  Eigen::VectorXd alpha = (mags.array() - mx).exp();
  alpha /= alpha.sum();
  return alpha;
}

}  // namespace

std::pair<Eigen::VectorXd, AttentionWeights> attention_pool(const AirRepModel& model,
                                                            const Example& x,
                                                            const ExampleRefs& members) {
  if (members.empty()) throw UsageError("empty subset");
  const Eigen::VectorXd ex = encode(model, x);
  Eigen::MatrixXd enc(model.e, static_cast<Eigen::Index>(members.size()));
  Eigen::VectorXd dots(static_cast<Eigen::Index>(members.size()));
  for (std::size_t i = 0; i < members.size(); ++i) {
    enc.col(static_cast<Eigen::Index>(i)) = encode(model, *members[i]);
    dots[static_cast<Eigen::Index>(i)] = ex.dot(enc.col(static_cast<Eigen::Index>(i)));
  }
  const Eigen::VectorXd alpha = attention_from_dots(dots);
  return {enc * alpha, AttentionWeights{alpha}};
}

double score_group(const AirRepModel& model, const Example& x, const ExampleRefs& members) {
  if (members.empty()) throw UsageError("empty subset");
  const Eigen::VectorXd ex = encode(model, x);
  Eigen::VectorXd dots(static_cast<Eigen::Index>(members.size()));
  for (std::size_t i = 0; i < members.size(); ++i) {
    dots[static_cast<Eigen::Index>(i)] = ex.dot(encode(model, *members[i]));
  }
  if (model.pooling == PoolingMode::kMean) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < dots.size(); ++i) sum += dots[i];
    return sum / static_cast<double>(members.size());
  }
  const Eigen::VectorXd alpha = attention_from_dots(dots);
  return alpha.dot(dots);
}

RankLossResult ranking_loss(const Eigen::VectorXd& f, const Eigen::VectorXd& r,
                            const RankLossConfig& cfg, RngStream* rng) {
  if (f.size() != r.size()) throw UsageError("ranking loss: score/label size mismatch");
  if (f.size() < 2) throw UsageError("ranking loss needs at least two scores");
  if (cfg.t_min < 0 || cfg.t_max < cfg.t_min) {
    throw UsageError("ranking loss needs 0 <= t_min <= t_max");
  }

  struct Pair {
    Eigen::Index hi, lo;
    double w;
  };
  std::vector<Pair> pairs;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    for (Eigen::Index j = 0; j < r.size(); ++j) {
      if (!(r[i] > r[j])) continue;
      const double gap = r[i] - r[j];
      if (gap < cfg.t_min) continue;
      pairs.push_back({i, j, std::min(gap, cfg.t_max)});
    }
  }
  if (rng != nullptr && cfg.pairs_per_step > 0 &&
      pairs.size() > static_cast<std::size_t>(cfg.pairs_per_step)) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.pairs_per_step); ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng->uniform_below(pairs.size() - i));
      std::swap(pairs[i], pairs[j]);
    }
    pairs.resize(static_cast<std::size_t>(cfg.pairs_per_step));
  }

  RankLossResult out;
  out.grad = Eigen::VectorXd::Zero(f.size());
  out.active_pairs = static_cast<int>(pairs.size());
  for (const Pair& p : pairs) {
    const double margin = f[p.hi] - f[p.lo];
    out.loss += p.w * neg_log_sigmoid(margin);
    const double slope = p.w * sigmoid(-margin);
    out.grad[p.hi] -= slope;
    out.grad[p.lo] += slope;
  }
  return out;
}

namespace {

// Per-dataset backprop state for one step: cached encodings and accumulated
// output-gradients keyed by example id. Validation targets and train-pool
// members use separate tapes because their id spaces are independent.
struct PoolTape {
  const AirRepModel* model = nullptr;
  const Dataset* pool = nullptr;
  std::map<std::int64_t, Eigen::VectorXd> enc;
  std::map<std::int64_t, Eigen::VectorXd> denc;

  const Eigen::VectorXd& encoding(const Example& z) {
    auto it = enc.find(z.id);
    if (it == enc.end()) it = enc.emplace(z.id, encode(*model, z)).first;
    return it->second;
  }

  void add_grad(const Example& z, const Eigen::VectorXd& g) {
    auto it = denc.find(z.id);
    if (it == denc.end()) {
      denc.emplace(z.id, g);
    } else {
      it->second += g;
    }
  }
};

// d Enc / d weights, applied to the accumulated output gradient of one
// example; adds into the packed weight gradient.
void backprop_encoder(const AirRepModel& model, const Eigen::VectorXd& features,
                      const Eigen::VectorXd& denc_in, Eigen::VectorXd& wgrad) {
  Eigen::VectorXd denc = denc_in;
  if (model.unit_normalize) {
    // Chain through v -> v / ||v||: J = (I - u u^T) / ||v||.
    const Eigen::VectorXd raw = encode_raw(model, features);
    const double norm = raw.norm();
    const Eigen::VectorXd unit = raw / norm;
    denc = (denc_in - unit * unit.dot(denc_in)) / norm;
  }
  if (model.encoder == EncoderKind::kAffine) {
    RowMajorMutMap gw(wgrad.data(), model.e, model.d);
    Eigen::Map<Eigen::VectorXd> gb(wgrad.data() + static_cast<std::size_t>(model.e) * model.d,
                                   model.e);
    gw.noalias() += denc * features.transpose();
    gb += denc;
    return;
  }
  const int h = model.hidden;
  const AffineView l1 = affine_at(model.weights.data(), h, model.d);
  const std::size_t l2_off = static_cast<std::size_t>(h) * model.d + h;
  const AffineView l2 = affine_at(model.weights.data() + l2_off, model.e, h);

  const Eigen::VectorXd hidden_act = (l1.w * features + l1.b).array().tanh();
  RowMajorMutMap gw2(wgrad.data() + l2_off, model.e, h);
  Eigen::Map<Eigen::VectorXd> gb2(wgrad.data() + l2_off + static_cast<std::size_t>(model.e) * h,
                                  model.e);
  gw2.noalias() += denc * hidden_act.transpose();
  gb2 += denc;

  const Eigen::VectorXd dhidden =
      (l2.w.transpose() * denc).cwiseProduct((1.0 - hidden_act.array().square()).matrix());
  RowMajorMutMap gw1(wgrad.data(), h, model.d);
  Eigen::Map<Eigen::VectorXd> gb1(wgrad.data() + static_cast<std::size_t>(h) * model.d, h);
  gw1.noalias() += dhidden * features.transpose();
  gb1 += dhidden;
}

}  // namespace

double step_loss_and_grad(const AirRepModel& model, const StepBatch& batch,
                          const RankLossConfig& loss_cfg, Eigen::VectorXd* grad_out,
                          RngStream* pair_rng) {
  const oracle::CrossValInstance& inst = *batch.instance;
  const auto num_subsets = batch.subset_idx.size();
  const auto num_targets = batch.target_cols.size();
  if (num_subsets < 2) throw UsageError("step needs at least two subsets");
  if (num_targets < 1) throw UsageError("step needs at least one target");

  PoolTape targets{&model, &inst.valid, {}, {}};
  PoolTape pool{&model, &inst.train_pool, {}, {}};
  std::vector<ExampleRefs> members(num_subsets);
  for (std::size_t b = 0; b < num_subsets; ++b) {
    members[b] = gather_members(inst.train_pool, inst.subsets[batch.subset_idx[b]]);
  }

  double total_loss = 0.0;
  const double target_scale = 1.0 / static_cast<double>(num_targets);

  for (Eigen::Index col : batch.target_cols) {
    const Example& x = inst.valid.examples[static_cast<std::size_t>(col)];
    const Eigen::VectorXd& ex = targets.encoding(x);

    // Forward: per-subset dots, attention weights, scores.
    Eigen::VectorXd f(static_cast<Eigen::Index>(num_subsets));
    std::vector<Eigen::VectorXd> dots(num_subsets), alphas(num_subsets);
    for (std::size_t b = 0; b < num_subsets; ++b) {
      Eigen::VectorXd db(static_cast<Eigen::Index>(members[b].size()));
      for (std::size_t i = 0; i < members[b].size(); ++i) {
        db[static_cast<Eigen::Index>(i)] = ex.dot(pool.encoding(*members[b][i]));
      }
      if (model.pooling == PoolingMode::kMean) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < db.size(); ++i) sum += db[i];
        f[static_cast<Eigen::Index>(b)] = sum / static_cast<double>(members[b].size());
      } else {
        alphas[b] = attention_from_dots(db);
        f[static_cast<Eigen::Index>(b)] = alphas[b].dot(db);
      }
      dots[b] = std::move(db);
    }

    Eigen::VectorXd r(static_cast<Eigen::Index>(num_subsets));
    for (std::size_t b = 0; b < num_subsets; ++b) {
      r[static_cast<Eigen::Index>(b)] =
          inst.labels(static_cast<Eigen::Index>(batch.subset_idx[b]), col);
    }

    const RankLossResult rl = ranking_loss(f, r, loss_cfg, pair_rng);
    total_loss += target_scale * rl.loss;
    if (grad_out == nullptr) continue;

    // Backward into the encodings.
    for (std::size_t b = 0; b < num_subsets; ++b) {
      const double gf = target_scale * rl.grad[static_cast<Eigen::Index>(b)];
      if (gf == 0.0) continue;
      const Eigen::VectorXd& db = dots[b];
      Eigen::VectorXd gdots(db.size());
      if (model.pooling == PoolingMode::kMean) {
        gdots.setConstant(gf / static_cast<double>(members[b].size()));
      } else {
        const Eigen::VectorXd& alpha = alphas[b];
        const double fb = f[static_cast<Eigen::Index>(b)];
        for (Eigen::Index i = 0; i < db.size(); ++i) {
          const double sgn = db[i] > 0.0 ? 1.0 : (db[i] < 0.0 ? -1.0 : 0.0);
          gdots[i] = gf * alpha[i] * (1.0 + sgn * (db[i] - fb));
        }
      }
      Eigen::VectorXd dex = Eigen::VectorXd::Zero(model.e);
      for (std::size_t i = 0; i < members[b].size(); ++i) {
        const Example& z = *members[b][i];
        const double g = gdots[static_cast<Eigen::Index>(i)];
        dex += g * pool.encoding(z);
        pool.add_grad(z, g * ex);
      }
      targets.add_grad(x, dex);
    }
  }

  if (grad_out != nullptr) {
    grad_out->setZero();
    // Ordered maps fix the accumulation order regardless of batch layout.
    for (const PoolTape* tape : {&targets, &pool}) {
      for (const auto& [id, denc] : tape->denc) {
        backprop_encoder(model, tape->pool->by_id(id).features, denc, *grad_out);
      }
    }
  }
  return total_loss;
}

AirRepModel train_airrep(const std::vector<const oracle::CrossValInstance*>& instances,
                         AirRepModel model, const AirRepTrainConfig& cfg,
                         const RankLossConfig& loss_cfg, TrainCurve* curve) {
  if (instances.empty()) throw UsageError("train_airrep needs at least one instance");
  if (cfg.lr <= 0 || cfg.steps < 0 || cfg.subsets_per_step < 2 || cfg.targets_per_step < 1) {
    throw UsageError("bad airrep train config");
  }

  // Usable (non-degenerate) label columns per instance.
  std::vector<std::vector<Eigen::Index>> usable(instances.size());
  for (std::size_t k = 0; k < instances.size(); ++k) {
    const auto& inst = *instances[k];
    if (inst.m_subsets() < 2) throw UsageError("instance has fewer than two subsets");
    for (Eigen::Index j = 0; j < inst.n_valid(); ++j) {
      if (!inst.degenerate[static_cast<std::size_t>(j)]) usable[k].push_back(j);
    }
    if (usable[k].empty()) {
      throw UsageError("instance " + std::to_string(k) + " has no usable label columns");
    }
    if (inst.valid.d != model.d || inst.train_pool.d != model.d) {
      throw UsageError("instance feature dimension does not match encoder");
    }
  }

  RngStream rng(cfg.seed);
  Eigen::VectorXd grad(model.weight_count());
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(model.weight_count());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(model.weight_count());
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  for (int step = 0; step < cfg.steps; ++step) {
    const std::size_t k = static_cast<std::size_t>(rng.uniform_below(instances.size()));
    const auto& inst = *instances[k];

    StepBatch batch;
    batch.instance = &inst;
    // Distinct draws via partial Fisher-Yates over index copies.
    std::vector<Eigen::Index> cols = usable[k];
    const std::size_t n_targets =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.targets_per_step), cols.size());
    for (std::size_t i = 0; i < n_targets; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(cols.size() - i));
      std::swap(cols[i], cols[j]);
    }
    batch.target_cols.assign(cols.begin(), cols.begin() + static_cast<std::ptrdiff_t>(n_targets));

    std::vector<std::size_t> subs(static_cast<std::size_t>(inst.m_subsets()));
    for (std::size_t i = 0; i < subs.size(); ++i) subs[i] = i;
    const std::size_t n_subs =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.subsets_per_step), subs.size());
    for (std::size_t i = 0; i < n_subs; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(subs.size() - i));
      std::swap(subs[i], subs[j]);
    }
    batch.subset_idx.assign(subs.begin(), subs.begin() + static_cast<std::ptrdiff_t>(n_subs));

    const double loss = step_loss_and_grad(model, batch, loss_cfg, &grad,
                                           loss_cfg.pairs_per_step > 0 ? &rng : nullptr);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      throw NumericError("airrep training diverged at step " + std::to_string(step) +
                         " (instance " + std::to_string(k) + ")");
    }

    if (cfg.optimizer == AirRepTrainConfig::Optimizer::kGd) {
      model.weights -= cfg.lr * grad;
    } else {
      m1 = kBeta1 * m1 + (1.0 - kBeta1) * grad;
      m2 = kBeta2 * m2 + (1.0 - kBeta2) * grad.cwiseProduct(grad).eval();
      const double bc1 = 1.0 - std::pow(kBeta1, step + 1);
      const double bc2 = 1.0 - std::pow(kBeta2, step + 1);
      for (Eigen::Index i = 0; i < model.weights.size(); ++i) {
        const double mhat = m1[i] / bc1;
        const double vhat = m2[i] / bc2;
        model.weights[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + kEps) +
                                      cfg.weight_decay * model.weights[i]);
      }
    }
    if (curve != nullptr) curve->step_loss.emplace_back(step, loss);
  }
  return model;
}

Eigen::MatrixXd score_matrix_subsets(const AirRepModel& model,
                                     const oracle::CrossValInstance& inst,
                                     PoolingMode pooling) {
  AirRepModel scored = model;
  scored.pooling = pooling;
  Eigen::MatrixXd scores(inst.m_subsets(), inst.n_valid());
  std::vector<ExampleRefs> members(static_cast<std::size_t>(inst.m_subsets()));
  for (std::size_t i = 0; i < members.size(); ++i) {
    members[i] = gather_members(inst.train_pool, inst.subsets[i]);
  }
  parallel_for(static_cast<std::size_t>(inst.n_valid()), [&](std::size_t j) {
    const Example& x = inst.valid.examples[j];
    for (Eigen::Index i = 0; i < inst.m_subsets(); ++i) {
      scores(i, static_cast<Eigen::Index>(j)) =
          score_group(scored, x, members[static_cast<std::size_t>(i)]);
    }
  });
  return scores;
}

Eigen::MatrixXd score_matrix_pairs(const AirRepModel& model, const Dataset& tests,
                                   const Dataset& trains) {
  Eigen::MatrixXd enc_train(model.e, trains.size());
  for (Eigen::Index j = 0; j < trains.size(); ++j) {
    enc_train.col(j) = encode(model, trains.examples[static_cast<std::size_t>(j)]);
  }
  Eigen::MatrixXd scores(tests.size(), trains.size());
  parallel_for(static_cast<std::size_t>(tests.size()), [&](std::size_t i) {
    const Eigen::VectorXd ex = encode(model, tests.examples[i]);
    scores.row(static_cast<Eigen::Index>(i)) = (ex.transpose() * enc_train).row(0);
  });
  return scores;
}

namespace {

NLOHMANN_JSON_SERIALIZE_ENUM(PoolingMode, {
    {PoolingMode::kAttention, "attention"},
    {PoolingMode::kMean, "mean"},
})

NLOHMANN_JSON_SERIALIZE_ENUM(EncoderKind, {
    {EncoderKind::kAffine, "affine"},
    {EncoderKind::kMlp1, "mlp1"},
})

}  // namespace

void save_airrep(const AirRepModel& model, const std::filesystem::path& path) {
  const json header = {{"format", "tda-airrep-v1"}, {"encoder", model.encoder},
                       {"d", model.d},              {"e", model.e},
                       {"hidden", model.hidden},    {"pooling", model.pooling},
                       {"unit_normalize", model.unit_normalize},
                       {"seed", model.seed},        {"count", model.weights.size()}};
  std::string bytes = header.dump();
  bytes.push_back('\n');
  bytes.append(reinterpret_cast<const char*>(model.weights.data()),
               sizeof(double) * static_cast<std::size_t>(model.weights.size()));
  io::write_file(path, bytes);
}

AirRepModel load_airrep(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string::npos) throw UsageError("airrep file has no header: " + path.string());
  AirRepModel model;
  Eigen::Index count = 0;
  try {
    const json header = json::parse(bytes.substr(0, nl));
    model.encoder = header.at("encoder").get<EncoderKind>();
    model.d = header.at("d").get<int>();
    model.e = header.at("e").get<int>();
    model.hidden = header.value("hidden", 0);
    model.pooling = header.at("pooling").get<PoolingMode>();
    model.unit_normalize = header.value("unit_normalize", false);
    model.seed = header.value("seed", RngSeed{0});
    count = header.at("count").get<Eigen::Index>();
  } catch (const json::exception& e) {
    throw UsageError("malformed airrep header " + path.string() + ": " + e.what());
  }
  const std::size_t want = sizeof(double) * static_cast<std::size_t>(count);
  if (bytes.size() - nl - 1 != want) {
    throw UsageError("airrep weight blob size mismatch: " + path.string());
  }
  model.weights.resize(count);
  std::memcpy(model.weights.data(), bytes.data() + nl + 1, want);
  if (model.weights.size() != model.weight_count()) {
    throw UsageError("airrep weight count does not match header dims: " + path.string());
  }
  return model;
}

void write_train_log(const TrainCurve& curve, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "step,loss\n";
  for (const auto& [step, loss] : curve.step_loss) {
    out << step << ',' << io::format_double(loss) << '\n';
  }
  io::write_file(path, out.str());
}

}  // namespace tda::airrep

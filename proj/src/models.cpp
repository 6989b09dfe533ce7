#include "tda/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "tda/config_json.hpp"
#include "tda/dual.hpp"
#include "tda/io_util.hpp"

namespace tda::models {

int ModelSpec::output_dim() const {
  return task() == TaskKind::kClassification ? num_classes : 1;
}

TaskKind ModelSpec::task() const {
  switch (family) {
    case ModelFamily::kLinearRegression:
      return TaskKind::kRegression;
    case ModelFamily::kLogisticRegression:
      return TaskKind::kClassification;
    case ModelFamily::kMlp:
      return num_classes > 0 ? TaskKind::kClassification : TaskKind::kRegression;
  }
  throw UsageError("bad model family");
}

int ModelSpec::param_count() const {
  const int b = with_bias ? 1 : 0;
  switch (family) {
    case ModelFamily::kLinearRegression:
      return d + b;
    case ModelFamily::kLogisticRegression:
      return num_classes * (d + b);
    case ModelFamily::kMlp: {
      int p = 0;
      int in = d;
      for (int h : hidden) {
        p += (in + b) * h;
        in = h;
      }
      p += (in + b) * output_dim();
      return p;
    }
  }
  throw UsageError("bad model family");
}

void ModelSpec::validate() const {
  if (d < 1) throw UsageError("model spec: d must be >= 1");
  if (l2_reg < 0) throw UsageError("model spec: l2_reg must be >= 0");
  if (family == ModelFamily::kLogisticRegression && num_classes < 2) {
    throw UsageError("logistic regression needs num_classes >= 2");
  }
  if (family == ModelFamily::kMlp) {
    if (hidden.empty() || hidden.size() > 2) {
      throw UsageError("mlp supports one or two hidden layers");
    }
    for (int h : hidden) {
      if (h < 1 || h > 32) throw UsageError("mlp hidden widths must be in [1, 32]");
    }
    if (num_classes == 1) throw UsageError("mlp num_classes must be 0 or >= 2");
  } else if (!hidden.empty()) {
    throw UsageError("hidden layers are mlp-only");
  }
  if (family == ModelFamily::kLinearRegression && num_classes != 0) {
    throw UsageError("linear regression does not take num_classes");
  }
}

namespace {

void check_features(const ModelSpec& spec, const Example& z) {
  if (z.features.size() != spec.d) {
    throw UsageError("feature dimension mismatch: example has " +
                     std::to_string(z.features.size()) + ", model expects " +
                     std::to_string(spec.d));
  }
}

void check_example(const ModelSpec& spec, const Example& z) {
  check_features(spec, z);
  if (spec.task() == TaskKind::kClassification) {
    const double lbl = z.label;
    if (lbl != std::floor(lbl) || lbl < 0 || lbl >= spec.output_dim()) {
      throw UsageError("classification label out of range for example " +
                       std::to_string(z.id));
    }
  }
}

// --- templated evaluation core -------------------------------------------
// T is double or Dual; with Dual the same code yields exact Hessian columns.

template <typename T>
T l2_term(const ModelSpec& spec, const T* theta) {
  if (spec.l2_reg == 0.0) return T{0.0};
  const int p = spec.param_count();
  T acc{0.0};
  for (int i = 0; i < p; ++i) acc += theta[i] * theta[i];
  return T{0.5 * spec.l2_reg} * acc;
}

// Stable softmax cross-entropy on logits[0..k); returns loss, writes probs.
template <typename T>
T softmax_ce(const std::vector<T>& logits, int label, std::vector<T>& probs) {
  using std::exp;
  using std::log;
  const int k = static_cast<int>(logits.size());
  int arg = 0;
  for (int i = 1; i < k; ++i) {
    if (value_of(logits[i]) > value_of(logits[arg])) arg = i;
  }
  const T mx = logits[arg];
  T sum{0.0};
  probs.resize(logits.size());
  for (int i = 0; i < k; ++i) {
    probs[i] = exp(logits[i] - mx);
    sum += probs[i];
  }
  for (int i = 0; i < k; ++i) probs[i] = probs[i] / sum;
  return log(sum) + mx - logits[label];
}

template <typename T>
struct MlpTrace {
  // Activations per layer, input included; preactivations per non-input layer.
  std::vector<std::vector<T>> act;
  std::vector<std::vector<T>> pre;
};

template <typename T>
void mlp_forward(const ModelSpec& spec, const T* theta, const Eigen::VectorXd& x,
                 MlpTrace<T>& trace) {
  using std::tanh;
  std::vector<int> widths;
  widths.push_back(spec.d);
  for (int h : spec.hidden) widths.push_back(h);
  widths.push_back(spec.output_dim());

  trace.act.assign(widths.size(), {});
  trace.pre.assign(widths.size(), {});
  trace.act[0].resize(spec.d);
  for (int i = 0; i < spec.d; ++i) trace.act[0][i] = T{x[i]};

  std::size_t off = 0;
  for (std::size_t layer = 1; layer < widths.size(); ++layer) {
    const int in = widths[layer - 1];
    const int out = widths[layer];
    auto& pre = trace.pre[layer];
    auto& act = trace.act[layer];
    pre.resize(out);
    act.resize(out);
    const bool is_head = layer + 1 == widths.size();
    for (int o = 0; o < out; ++o) {
      T acc = spec.with_bias ? theta[off + static_cast<std::size_t>(out) * in + o] : T{0.0};
      const T* row = theta + off + static_cast<std::size_t>(o) * in;
      const auto& prev = trace.act[layer - 1];
      for (int i = 0; i < in; ++i) acc += row[i] * prev[i];
      pre[o] = acc;
      if (is_head) {
        act[o] = acc;
      } else {
        act[o] = spec.activation == Activation::kTanh ? tanh(acc) : relu(acc);
      }
    }
    off += static_cast<std::size_t>(in + (spec.with_bias ? 1 : 0)) * out;
  }
}

template <typename T>
T eval_loss_t(const ModelSpec& spec, const T* theta, const Eigen::VectorXd& x,
              double label) {
  switch (spec.family) {
    case ModelFamily::kLinearRegression: {
      T pred = spec.with_bias ? theta[spec.d] : T{0.0};
      for (int i = 0; i < spec.d; ++i) pred += theta[i] * T{x[i]};
      const T r = pred - T{label};
      return T{0.5} * r * r + l2_term(spec, theta);
    }
    case ModelFamily::kLogisticRegression: {
      const int k = spec.num_classes;
      const int stride = spec.d + (spec.with_bias ? 1 : 0);
      std::vector<T> logits(k), probs;
      for (int c = 0; c < k; ++c) {
        const T* row = theta + static_cast<std::size_t>(c) * stride;
        T acc = spec.with_bias ? row[spec.d] : T{0.0};
        for (int i = 0; i < spec.d; ++i) acc += row[i] * T{x[i]};
        logits[c] = acc;
      }
      return softmax_ce(logits, static_cast<int>(label), probs) + l2_term(spec, theta);
    }
    case ModelFamily::kMlp: {
      MlpTrace<T> trace;
      mlp_forward(spec, theta, x, trace);
      const auto& out = trace.act.back();
      if (spec.task() == TaskKind::kClassification) {
        std::vector<T> probs;
        return softmax_ce(out, static_cast<int>(label), probs) + l2_term(spec, theta);
      }
      const T r = out[0] - T{label};
      return T{0.5} * r * r + l2_term(spec, theta);
    }
  }
  throw UsageError("bad model family");
}

template <typename T>
void eval_grad_t(const ModelSpec& spec, const T* theta, const Eigen::VectorXd& x,
                 double label, T* g) {
  const int p = spec.param_count();
  for (int i = 0; i < p; ++i) g[i] = T{0.0};

  switch (spec.family) {
    case ModelFamily::kLinearRegression: {
      T pred = spec.with_bias ? theta[spec.d] : T{0.0};
      for (int i = 0; i < spec.d; ++i) pred += theta[i] * T{x[i]};
      const T r = pred - T{label};
      for (int i = 0; i < spec.d; ++i) g[i] = r * T{x[i]};
      if (spec.with_bias) g[spec.d] = r;
      break;
    }
    case ModelFamily::kLogisticRegression: {
      const int k = spec.num_classes;
      const int stride = spec.d + (spec.with_bias ? 1 : 0);
      std::vector<T> logits(k), probs;
      for (int c = 0; c < k; ++c) {
        const T* row = theta + static_cast<std::size_t>(c) * stride;
        T acc = spec.with_bias ? row[spec.d] : T{0.0};
        for (int i = 0; i < spec.d; ++i) acc += row[i] * T{x[i]};
        logits[c] = acc;
      }
      softmax_ce(logits, static_cast<int>(label), probs);
      const int y = static_cast<int>(label);
      for (int c = 0; c < k; ++c) {
        const T dlogit = probs[c] - T{c == y ? 1.0 : 0.0};
        T* row = g + static_cast<std::size_t>(c) * stride;
        for (int i = 0; i < spec.d; ++i) row[i] = dlogit * T{x[i]};
        if (spec.with_bias) row[spec.d] = dlogit;
      }
      break;
    }
    case ModelFamily::kMlp: {
      MlpTrace<T> trace;
      mlp_forward(spec, theta, x, trace);

      std::vector<int> widths;
      widths.push_back(spec.d);
      for (int h : spec.hidden) widths.push_back(h);
      widths.push_back(spec.output_dim());

      // Head delta.
      std::vector<T> delta;
      if (spec.task() == TaskKind::kClassification) {
        std::vector<T> probs;
        softmax_ce(trace.act.back(), static_cast<int>(label), probs);
        const int y = static_cast<int>(label);
        delta.resize(probs.size());
        for (std::size_t c = 0; c < probs.size(); ++c) {
          delta[c] = probs[c] - T{c == static_cast<std::size_t>(y) ? 1.0 : 0.0};
        }
      } else {
        delta = {trace.act.back()[0] - T{label}};
      }

      // Layer offsets into the packed parameter vector.
      const int b = spec.with_bias ? 1 : 0;
      std::vector<std::size_t> offsets(widths.size(), 0);
      std::size_t off = 0;
      for (std::size_t layer = 1; layer < widths.size(); ++layer) {
        offsets[layer] = off;
        off += static_cast<std::size_t>(widths[layer - 1] + b) * widths[layer];
      }

      for (std::size_t layer = widths.size() - 1; layer >= 1; --layer) {
        const int in = widths[layer - 1];
        const int out = widths[layer];
        const std::size_t base = offsets[layer];
        const auto& prev = trace.act[layer - 1];
        for (int o = 0; o < out; ++o) {
          T* row = g + base + static_cast<std::size_t>(o) * in;
          for (int i = 0; i < in; ++i) row[i] = delta[o] * prev[i];
          if (spec.with_bias) g[base + static_cast<std::size_t>(out) * in + o] = delta[o];
        }
        if (layer == 1) break;
        // Propagate through the previous activation.
        std::vector<T> next(in, T{0.0});
        const T* w = theta + base;
        for (int o = 0; o < out; ++o) {
          for (int i = 0; i < in; ++i) next[i] += w[static_cast<std::size_t>(o) * in + i] * delta[o];
        }
        for (int i = 0; i < in; ++i) {
          if (spec.activation == Activation::kTanh) {
            const T a = trace.act[layer - 1][i];
            next[i] = next[i] * (T{1.0} - a * a);
          } else {
            next[i] = value_of(trace.pre[layer - 1][i]) > 0.0 ? next[i] : T{0.0};
          }
        }
        delta = std::move(next);
      }
      break;
    }
  }

  if (spec.l2_reg != 0.0) {
    for (int i = 0; i < p; ++i) g[i] += T{spec.l2_reg} * theta[i];
  }
}

}  // namespace

double loss(const TrainedModel& model, const Example& z) {
  check_example(model.spec, z);
  return eval_loss_t<double>(model.spec, model.theta.data(), z.features, z.label);
}

Eigen::VectorXd grad(const TrainedModel& model, const Example& z) {
  check_example(model.spec, z);
  Eigen::VectorXd g(model.spec.param_count());
  eval_grad_t<double>(model.spec, model.theta.data(), z.features, z.label, g.data());
  return g;
}

Eigen::MatrixXd hessian(const TrainedModel& model, const std::vector<Example>& data,
                        HessianMode mode, double damping) {
  const int p = model.spec.param_count();
  if (p > kHessianCap) throw UsageError("hessian too large");
  if (data.empty()) throw UsageError("hessian needs at least one example");
  if (damping < 0) throw UsageError("damping must be >= 0");

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
  if (mode == HessianMode::kFim) {
    for (const Example& z : data) {
      const Eigen::VectorXd g = grad(model, z);
      h.noalias() += g * g.transpose();
    }
  } else {
    std::vector<Dual> theta(static_cast<std::size_t>(p));
    std::vector<Dual> g(static_cast<std::size_t>(p));
    for (const Example& z : data) {
      check_example(model.spec, z);
      for (int j = 0; j < p; ++j) {
        for (int i = 0; i < p; ++i) theta[i] = {model.theta[i], i == j ? 1.0 : 0.0};
        eval_grad_t<Dual>(model.spec, theta.data(), z.features, z.label, g.data());
        for (int i = 0; i < p; ++i) h(i, j) += g[i].t;
      }
    }
  }
  h /= static_cast<double>(data.size());

  const double asym = (h - h.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if (!(asym <= 1e-8 * scale)) {
    throw NumericError("internal: hessian asymmetry " + std::to_string(asym));
  }
  h = ((h + h.transpose()) / 2.0).eval();
  h.diagonal().array() += damping;
  return h;
}

namespace {

std::vector<const Example*> resolve_members(const SubsetRef& subset, const Dataset& pool) {
  std::vector<const Example*> members;
  members.reserve(subset.member_ids.size());
  for (std::int64_t id : subset.member_ids) {
    if (id < 0 || id >= pool.size()) {
      throw UsageError("subset member " + std::to_string(id) + " not in pool of size " +
                       std::to_string(pool.size()));
    }
    members.push_back(&pool.examples[static_cast<std::size_t>(id)]);
  }
  if (members.empty()) throw UsageError("subset is empty");
  return members;
}

struct AdamState {
  Eigen::VectorXd m, v;
  int t = 0;
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit AdamState(int p) : m(Eigen::VectorXd::Zero(p)), v(Eigen::VectorXd::Zero(p)) {}

  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& g, double lr, double wd) {
    ++t;
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g).eval();
    const double bc1 = 1.0 - std::pow(kBeta1, t);
    const double bc2 = 1.0 - std::pow(kBeta2, t);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= lr * (mhat / (std::sqrt(vhat) + kEps) + wd * theta[i]);
    }
  }
};

}  // namespace

TrainedModel train(const ModelSpec& spec, const SubsetRef& subset, const Dataset& pool,
                   const TrainConfig& cfg) {
  spec.validate();
  if (cfg.learning_rate <= 0) throw UsageError("learning_rate must be > 0");
  if (cfg.epochs < 1) throw UsageError("epochs must be >= 1");
  const auto members = resolve_members(subset, pool);
  const int p = spec.param_count();

  TrainedModel model;
  model.spec = spec;
  model.theta.resize(p);
  {
    RngStream init_rng(cfg.seed);
    for (int i = 0; i < p; ++i) model.theta[i] = cfg.init_scale * init_rng.normal();
  }

  const auto batch_grad = [&](const std::vector<const Example*>& batch, Eigen::VectorXd& g,
                              double* loss_out) {
    g.setZero();
    double total = 0.0;
    Eigen::VectorXd gi(p);
    for (const Example* z : batch) {
      total += eval_loss_t<double>(spec, model.theta.data(), z->features, z->label);
      eval_grad_t<double>(spec, model.theta.data(), z->features, z->label, gi.data());
      g += gi;
    }
    g /= static_cast<double>(batch.size());
    if (loss_out) *loss_out = total / static_cast<double>(batch.size());
  };

  AdamState adam(p);
  Eigen::VectorXd g(p);
  RngStream shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  int epochs_run = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ++epochs_run;
    if (cfg.batch <= 0) {
      double mean = 0.0;
      batch_grad(members, g, &mean);
      if (!std::isfinite(mean) || !g.allFinite()) throw NumericError("training diverged");
      if (cfg.grad_tol > 0 && g.cwiseAbs().maxCoeff() < cfg.grad_tol) break;
      if (cfg.optimizer == TrainConfig::Optimizer::kGd) {
        model.theta -= cfg.learning_rate * g;
      } else {
        adam.step(model.theta, g, cfg.learning_rate, cfg.weight_decay);
      }
    } else {
      std::vector<const Example*> order = members;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const std::size_t j =
            i + static_cast<std::size_t>(shuffle_rng.uniform_below(order.size() - i));
        std::swap(order[i], order[j]);
      }
      for (std::size_t begin = 0; begin < order.size();
           begin += static_cast<std::size_t>(cfg.batch)) {
        const std::size_t end =
            std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch));
        std::vector<const Example*> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
        batch_grad(batch, g, nullptr);
        if (!g.allFinite()) throw NumericError("training diverged");
        if (cfg.optimizer == TrainConfig::Optimizer::kGd) {
          model.theta -= cfg.learning_rate * g;
        } else {
          adam.step(model.theta, g, cfg.learning_rate, cfg.weight_decay);
        }
      }
    }
  }

  if (!model.theta.allFinite()) throw NumericError("training diverged");
  model.provenance.subset_id = subset.subset_id;
  model.provenance.seed = cfg.seed;
  model.provenance.optimizer =
      cfg.optimizer == TrainConfig::Optimizer::kGd ? "gd" : "adamw";
  model.provenance.epochs_run = epochs_run;
  return model;
}

double mean_loss(const TrainedModel& model, const SubsetRef& subset, const Dataset& pool) {
  const auto members = resolve_members(subset, pool);
  double total = 0.0;
  for (const Example* z : members) total += loss(model, *z);
  return total / static_cast<double>(members.size());
}

Eigen::VectorXd representation(const TrainedModel& model, const Example& z) {
  check_features(model.spec, z);  // labels play no role here
  if (model.spec.family != ModelFamily::kMlp) return z.features;
  MlpTrace<double> trace;
  mlp_forward<double>(model.spec, model.theta.data(), z.features, trace);
  const auto& hidden = trace.act[trace.act.size() - 2];
  return Eigen::Map<const Eigen::VectorXd>(hidden.data(),
                                           static_cast<Eigen::Index>(hidden.size()));
}

SubsetRef full_subset(const Dataset& ds) {
  SubsetRef ref;
  ref.subset_id = -1;
  ref.member_ids.resize(static_cast<std::size_t>(ds.size()));
  std::iota(ref.member_ids.begin(), ref.member_ids.end(), 0);
  return ref;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  nlohmann::json header = {{"format", "tda-model-v1"},
                           {"spec", model.spec},
                           {"provenance", model.provenance},
                           {"p", model.theta.size()}};
  std::string bytes = header.dump();
  bytes.push_back('\n');
  bytes.append(reinterpret_cast<const char*>(model.theta.data()),
               sizeof(double) * static_cast<std::size_t>(model.theta.size()));
  io::write_file(path, bytes);
}

TrainedModel load_model(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string::npos) throw UsageError("model file has no header: " + path.string());
  TrainedModel model;
  try {
    const nlohmann::json header = nlohmann::json::parse(bytes.substr(0, nl));
    model.spec = header.at("spec").get<ModelSpec>();
    model.provenance = header.at("provenance").get<Provenance>();
    const auto p = header.at("p").get<Eigen::Index>();
    const std::size_t want = sizeof(double) * static_cast<std::size_t>(p);
    if (bytes.size() - nl - 1 != want) {
      throw UsageError("model parameter blob size mismatch: " + path.string());
    }
    model.theta.resize(p);
    std::memcpy(model.theta.data(), bytes.data() + nl + 1, want);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("malformed model header " + path.string() + ": " + e.what());
  }
  if (model.theta.size() != model.spec.param_count()) {
    throw UsageError("model parameter count does not match spec: " + path.string());
  }
  return model;
}

}  // namespace tda::models

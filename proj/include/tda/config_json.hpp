#pragma once

#include <json.hpp>

#include "tda/models.hpp"

// JSON conversions for config structs shared by model persistence, the CLI,
// and the python bindings. Enum spellings here are the on-disk contract.

namespace tda::models {

NLOHMANN_JSON_SERIALIZE_ENUM(ModelFamily, {
    {ModelFamily::kLinearRegression, "linear-regression"},
    {ModelFamily::kLogisticRegression, "logistic-regression"},
    {ModelFamily::kMlp, "mlp"},
})

NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {
    {Activation::kTanh, "tanh"},
    {Activation::kRelu, "relu"},
})

NLOHMANN_JSON_SERIALIZE_ENUM(HessianMode, {
    {HessianMode::kExact, "exact"},
    {HessianMode::kFim, "fim"},
})

NLOHMANN_JSON_SERIALIZE_ENUM(TrainConfig::Optimizer, {
    {TrainConfig::Optimizer::kGd, "gd"},
    {TrainConfig::Optimizer::kAdamW, "adamw"},
})

inline void to_json(nlohmann::json& j, const ModelSpec& spec) {
  j = nlohmann::json{{"family", spec.family},           {"d", spec.d},
                     {"hidden", spec.hidden},           {"activation", spec.activation},
                     {"num_classes", spec.num_classes}, {"l2_reg", spec.l2_reg},
                     {"with_bias", spec.with_bias}};
}

inline void from_json(const nlohmann::json& j, ModelSpec& spec) {
  j.at("family").get_to(spec.family);
  j.at("d").get_to(spec.d);
  spec.hidden = j.value("hidden", std::vector<int>{});
  spec.activation = j.value("activation", Activation::kTanh);
  spec.num_classes = j.value("num_classes", 0);
  spec.l2_reg = j.value("l2_reg", 0.0);
  spec.with_bias = j.value("with_bias", true);
}

inline void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = nlohmann::json{{"optimizer", cfg.optimizer},
                     {"learning_rate", cfg.learning_rate},
                     {"epochs", cfg.epochs},
                     {"batch", cfg.batch},
                     {"weight_decay", cfg.weight_decay},
                     {"grad_tol", cfg.grad_tol},
                     {"init_scale", cfg.init_scale},
                     {"seed", cfg.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  cfg.optimizer = j.value("optimizer", TrainConfig::Optimizer::kGd);
  cfg.learning_rate = j.value("learning_rate", 0.1);
  cfg.epochs = j.value("epochs", 100);
  cfg.batch = j.value("batch", 0);
  cfg.weight_decay = j.value("weight_decay", 0.0);
  cfg.grad_tol = j.value("grad_tol", 0.0);
  cfg.init_scale = j.value("init_scale", 0.1);
  cfg.seed = j.value("seed", RngSeed{0});
}

inline void to_json(nlohmann::json& j, const Provenance& p) {
  j = nlohmann::json{{"subset_id", p.subset_id},
                     {"seed", p.seed},
                     {"optimizer", p.optimizer},
                     {"epochs_run", p.epochs_run}};
}

inline void from_json(const nlohmann::json& j, Provenance& p) {
  p.subset_id = j.value("subset_id", std::int64_t{-1});
  p.seed = j.value("seed", RngSeed{0});
  p.optimizer = j.value("optimizer", "");
  p.epochs_run = j.value("epochs_run", 0);
}

}  // namespace tda::models

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tda/rng.hpp"

namespace tda {

// Malformed arguments, configs, or files. The CLI maps this to exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure (divergence, singular matrices, non-finite values).
// The CLI maps this to exit code 2.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TaskKind { kRegression, kClassification };

// One datapoint: dense features plus a scalar target. For classification
// datasets the label holds the class index. The tag is an optional
// annotation (task, source, safety label) used only by evaluation.
struct Example {
  std::int64_t id = 0;
  Eigen::VectorXd features;
  double label = 0.0;
  std::optional<std::string> tag;
};

struct Dataset {
  std::vector<Example> examples;
  Eigen::Index d = 0;
  TaskKind kind = TaskKind::kRegression;
  int num_classes = 0;  // meaningful when kind == kClassification

  std::int64_t size() const { return static_cast<std::int64_t>(examples.size()); }
  bool empty() const { return examples.empty(); }

  // Valid only after validate(): ids are dense, so id == index.
  const Example& by_id(std::int64_t id) const { return examples.at(static_cast<std::size_t>(id)); }

  // Checks the structural invariants: dense unique ids, fixed finite feature
  // dimension, class labels in range. Throws UsageError on violation.
  void validate() const;
};

// Reference to a sampled subset of a dataset. Members are ids, not copies;
// duplicates are allowed (sampling with replacement) and downstream training
// treats them as repeated examples.
struct SubsetRef {
  std::int64_t subset_id = 0;
  std::int64_t dataset_id = 0;
  std::vector<std::int64_t> member_ids;

  std::int64_t size() const { return static_cast<std::int64_t>(member_ids.size()); }
};

}  // namespace tda

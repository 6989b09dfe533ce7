#include "tda/sampling.hpp"

#include <cmath>
#include <numeric>
#include <unordered_set>

namespace tda {

void Dataset::validate() const {
  if (d <= 0) throw UsageError("dataset feature dimension must be positive");
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Example& ex = examples[i];
    if (ex.id != static_cast<std::int64_t>(i)) {
      throw UsageError("dataset ids must be dense in [0, n): found id " +
                       std::to_string(ex.id) + " at position " + std::to_string(i));
    }
    if (ex.features.size() != d) {
      throw UsageError("example " + std::to_string(ex.id) + " has " +
                       std::to_string(ex.features.size()) + " features, dataset d = " +
                       std::to_string(d));
    }
    if (!ex.features.allFinite()) {
      throw UsageError("example " + std::to_string(ex.id) + " has non-finite features");
    }
    if (kind == TaskKind::kClassification) {
      const double lbl = ex.label;
      if (!(lbl == std::floor(lbl)) || lbl < 0 || lbl >= num_classes) {
        throw UsageError("example " + std::to_string(ex.id) +
                         " classification label out of range");
      }
    } else if (!std::isfinite(ex.label)) {
      throw UsageError("example " + std::to_string(ex.id) + " has non-finite label");
    }
  }
  if (kind == TaskKind::kClassification && num_classes < 2) {
    throw UsageError("classification dataset needs num_classes >= 2");
  }
}

std::vector<SubsetRef> sample_subsets(const Dataset& pool, std::int64_t m_subsets,
                                      std::int64_t n_per_subset, RngSeed seed) {
  if (pool.empty()) throw UsageError("empty pool");
  if (m_subsets < 1) throw UsageError("m_subsets must be >= 1");
  if (n_per_subset < 1) throw UsageError("n_per_subset must be >= 1");

  RngStream rng(seed);
  const auto pool_size = static_cast<std::uint64_t>(pool.size());
  std::vector<SubsetRef> out;
  out.reserve(static_cast<std::size_t>(m_subsets));
  for (std::int64_t s = 0; s < m_subsets; ++s) {
    SubsetRef ref;
    ref.subset_id = s;
    ref.member_ids.reserve(static_cast<std::size_t>(n_per_subset));
    for (std::int64_t i = 0; i < n_per_subset; ++i) {
      ref.member_ids.push_back(static_cast<std::int64_t>(rng.uniform_below(pool_size)));
    }
    out.push_back(std::move(ref));
  }
  return out;
}

namespace {

Dataset take(const Dataset& src, const std::vector<std::int64_t>& order, std::size_t begin,
             std::size_t count) {
  Dataset out;
  out.d = src.d;
  out.kind = src.kind;
  out.num_classes = src.num_classes;
  out.examples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Example ex = src.examples[static_cast<std::size_t>(order[begin + i])];
    ex.id = static_cast<std::int64_t>(i);
    out.examples.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

std::pair<Dataset, Dataset> split_pool(const Dataset& full, std::int64_t n_valid,
                                       std::int64_t n_train, RngSeed seed) {
  if (n_valid < 0 || n_train < 0 || n_valid + n_train > full.size()) {
    throw UsageError("split sizes exceed pool: " + std::to_string(n_valid) + " + " +
                     std::to_string(n_train) + " > " + std::to_string(full.size()));
  }
  std::vector<std::int64_t> order(static_cast<std::size_t>(full.size()));
  std::iota(order.begin(), order.end(), 0);

  // Partial Fisher-Yates: only the first n_valid + n_train slots are needed.
  RngStream rng(seed);
  const std::size_t need = static_cast<std::size_t>(n_valid + n_train);
  for (std::size_t i = 0; i < need && i + 1 < order.size(); ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.uniform_below(order.size() - i));
    std::swap(order[i], order[j]);
  }

  Dataset valid = take(full, order, 0, static_cast<std::size_t>(n_valid));
  Dataset train = take(full, order, static_cast<std::size_t>(n_valid),
                       static_cast<std::size_t>(n_train));
  return {std::move(valid), std::move(train)};
}

}  // namespace tda

#pragma once

#include <utility>
#include <vector>

#include "tda/types.hpp"

namespace tda {

// Uniform sampling with replacement: m_subsets subsets of n_per_subset ids
// each, drawn from the pool. Deterministic in the seed.
std::vector<SubsetRef> sample_subsets(const Dataset& pool, std::int64_t m_subsets,
                                      std::int64_t n_per_subset, RngSeed seed);

// Disjoint (validation, training) split of the requested sizes, ids
// re-densified in each output. Deterministic in the seed.
std::pair<Dataset, Dataset> split_pool(const Dataset& full, std::int64_t n_valid,
                                       std::int64_t n_train, RngSeed seed);

}  // namespace tda

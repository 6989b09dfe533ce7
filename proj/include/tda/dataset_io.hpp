#pragma once

#include <filesystem>
#include <vector>

#include "tda/types.hpp"

namespace tda::io {

// Line-delimited dataset format: one header object
//   {"d": int, "kind": "regression"|"classification", "num_classes": int}
// followed by one record per line:
//   {"id": int, "features": [...], "label": number, "tag": optional string}
void write_dataset_jsonl(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset_jsonl(const std::filesystem::path& path);

// Subset manifest: JSON array of {"subset_id": int, "member_ids": [int...]}.
void write_subset_manifest(const std::vector<SubsetRef>& subsets,
                           const std::filesystem::path& path);
std::vector<SubsetRef> read_subset_manifest(const std::filesystem::path& path);

}  // namespace tda::io

#include "tda/dataset_io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

#include "tda/io_util.hpp"

namespace tda::io {

using nlohmann::json;

namespace {

const char* kind_name(TaskKind k) {
  return k == TaskKind::kRegression ? "regression" : "classification";
}

TaskKind kind_from_name(const std::string& s) {
  if (s == "regression") return TaskKind::kRegression;
  if (s == "classification") return TaskKind::kClassification;
  throw UsageError("unknown dataset kind: " + s);
}

}  // namespace

void write_dataset_jsonl(const Dataset& ds, const std::filesystem::path& path) {
  std::ostringstream out;
  json header = {{"d", ds.d}, {"kind", kind_name(ds.kind)}};
  if (ds.kind == TaskKind::kClassification) header["num_classes"] = ds.num_classes;
  out << header.dump() << '\n';
  for (const Example& ex : ds.examples) {
    json rec;
    rec["id"] = ex.id;
    std::vector<double> feats(ex.features.data(), ex.features.data() + ex.features.size());
    rec["features"] = feats;
    rec["label"] = ex.label;
    if (ex.tag) rec["tag"] = *ex.tag;
    out << rec.dump() << '\n';
  }
  write_file(path, out.str());
}

Dataset read_dataset_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open dataset: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw UsageError("dataset file is empty: " + path.string());

  Dataset ds;
  try {
    const json header = json::parse(line);
    ds.d = header.at("d").get<Eigen::Index>();
    ds.kind = kind_from_name(header.at("kind").get<std::string>());
    ds.num_classes = header.value("num_classes", 0);

    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json rec = json::parse(line);
      Example ex;
      ex.id = rec.at("id").get<std::int64_t>();
      const auto feats = rec.at("features").get<std::vector<double>>();
      ex.features = Eigen::Map<const Eigen::VectorXd>(feats.data(),
                                                      static_cast<Eigen::Index>(feats.size()));
      ex.label = rec.at("label").get<double>();
      if (rec.contains("tag")) ex.tag = rec.at("tag").get<std::string>();
      ds.examples.push_back(std::move(ex));
    }
  } catch (const json::exception& e) {
    throw UsageError("malformed dataset " + path.string() + ": " + e.what());
  }
  ds.validate();
  return ds;
}

void write_subset_manifest(const std::vector<SubsetRef>& subsets,
                           const std::filesystem::path& path) {
  json arr = json::array();
  for (const SubsetRef& s : subsets) {
    arr.push_back({{"subset_id", s.subset_id}, {"member_ids", s.member_ids}});
  }
  write_file(path, arr.dump(2) + "\n");
}

std::vector<SubsetRef> read_subset_manifest(const std::filesystem::path& path) {
  std::vector<SubsetRef> out;
  try {
    const json arr = json::parse(read_file(path));
    for (const json& item : arr) {
      SubsetRef s;
      s.subset_id = item.at("subset_id").get<std::int64_t>();
      s.member_ids = item.at("member_ids").get<std::vector<std::int64_t>>();
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw UsageError("malformed subset manifest " + path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace tda::io

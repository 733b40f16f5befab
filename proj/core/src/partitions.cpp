#include "zerodiff/partitions.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>

#include <json.hpp>

#include "zerodiff/errors.hpp"

namespace zdiff {

namespace detail {
const char* builtin_partitions_json();
}

namespace {

using nlohmann::ordered_json;

const ordered_json& partition_table() {
  static const ordered_json table = [] {
    if (const char* override_path = std::getenv("ZERODIFF_PARTITIONS_FILE")) {
      std::ifstream in(override_path);
      if (!in) throw DataError(std::string("cannot open ZERODIFF_PARTITIONS_FILE ") + override_path);
      return ordered_json::parse(in);
    }
    return ordered_json::parse(detail::builtin_partitions_json());
  }();
  return table;
}

const ordered_json& dataset_entry(std::string_view dataset) {
  const auto& table = partition_table();
  auto it = table.find(std::string(dataset));
  if (it == table.end()) {
    std::string known;
    for (const auto& [k, _] : table.items()) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError("unknown dataset '" + std::string(dataset) + "'; known: " + known);
  }
  return *it;
}

std::vector<std::string> resolve_group(const ordered_json& group,
                                       const std::vector<std::string>& labels,
                                       std::string_view dataset) {
  std::vector<std::string> out;
  for (const auto& item : group) {
    if (item.is_number_integer()) {
      const auto idx = item.get<long long>();
      if (idx < 0 || static_cast<std::size_t>(idx) >= labels.size()) {
        throw DataError("partition table for " + std::string(dataset) + ": class id " +
                        std::to_string(idx) + " out of range");
      }
      out.push_back(labels[static_cast<std::size_t>(idx)]);
    } else {
      out.push_back(item.get<std::string>());
    }
  }
  return out;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

void PartitionSpec::validate() const {
  if (seen.empty()) throw ConfigError("partition '" + name + "': no seen classes");
  if (unseen.empty()) throw ConfigError("partition '" + name + "': no unseen classes");
  std::set<std::string> s(seen.begin(), seen.end());
  std::set<std::string> u(unseen.begin(), unseen.end());
  if (s.size() != seen.size() || u.size() != unseen.size()) {
    throw ConfigError("partition '" + name + "': duplicate class label");
  }
  for (const auto& l : unseen) {
    if (s.count(l) != 0) {
      throw ConfigError("partition '" + name + "': class '" + l + "' is both seen and unseen");
    }
  }
}

std::vector<std::string> builtin_dataset_names() {
  std::vector<std::string> names;
  for (const auto& [k, _] : partition_table().items()) names.push_back(k);
  return names;
}

std::vector<std::string> builtin_labels(std::string_view dataset) {
  const auto& entry = dataset_entry(dataset);
  if (auto it = entry.find("labels"); it != entry.end()) return it->get<std::vector<std::string>>();
  // Label-named groups: the universe is the groups in table order.
  std::vector<std::string> labels;
  for (const auto& [_, group] : entry.at("groups").items())
    for (const auto& l : group) labels.push_back(l.get<std::string>());
  return labels;
}

std::vector<PartitionSpec> builtin_partitions(std::string_view dataset) {
  const auto& entry = dataset_entry(dataset);
  const auto labels = builtin_labels(dataset);
  const std::string scheme = entry.at("scheme").get<std::string>();
  const auto& groups = entry.at("groups");

  std::vector<PartitionSpec> out;
  if (scheme == "kfold") {
    std::vector<std::pair<std::string, std::vector<std::string>>> folds;
    for (const auto& [name, group] : groups.items())
      folds.emplace_back(name, resolve_group(group, labels, dataset));
    for (std::size_t i = 0; i < folds.size(); ++i) {
      PartitionSpec p{folds[i].first, {}, folds[i].second};
      for (std::size_t j = 0; j < folds.size(); ++j)
        if (j != i) p.seen = concat(std::move(p.seen), folds[j].second);
      out.push_back(std::move(p));
    }
  } else if (scheme == "train_val" || scheme == "train_val_test") {
    const auto train = resolve_group(groups.at("train"), labels, dataset);
    const auto val = resolve_group(groups.at("val"), labels, dataset);
    out.push_back({"val", train, val});
    if (scheme == "train_val_test") {
      out.push_back({"test", concat(train, val), resolve_group(groups.at("test"), labels, dataset)});
    }
  } else {
    throw DataError("partition table for " + std::string(dataset) + ": unknown scheme '" + scheme + "'");
  }

  for (const auto& p : out) {
    p.validate();
    for (const auto& l : concat(p.seen, p.unseen)) {
      if (std::find(labels.begin(), labels.end(), l) == labels.end()) {
        throw DataError("partition table for " + std::string(dataset) + ": label '" + l +
                        "' is not in the dataset's label list");
      }
    }
  }
  return out;
}

PartitionSpec load_partition(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  PartitionSpec p;
  try {
    p.name = j.at("name").get<std::string>();
    p.seen = j.at("seen").get<std::vector<std::string>>();
    p.unseen = j.at("unseen").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  p.validate();
  return p;
}

void write_partition(const std::filesystem::path& path, const PartitionSpec& spec) {
  spec.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  nlohmann::ordered_json j;
  j["name"] = spec.name;
  j["seen"] = spec.seen;
  j["unseen"] = spec.unseen;
  out << j.dump(2) << '\n';
}

}  // namespace zdiff

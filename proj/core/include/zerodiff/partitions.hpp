#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace zdiff {

struct PartitionSpec {
  std::string name;
  std::vector<std::string> seen;
  std::vector<std::string> unseen;

  // Both sides non-empty, no duplicates, seen and unseen disjoint.
  void validate() const;

  friend bool operator==(const PartitionSpec&, const PartitionSpec&) = default;
};

// Dataset keys understood by builtin_partitions():
// esc50, arca23k_fsd, fsc22, urbansound8k, tau2019, gtzan.
std::vector<std::string> builtin_dataset_names();

// Label universe of a builtin dataset, in the order its numeric class ids
// index into.
std::vector<std::string> builtin_labels(std::string_view dataset);

// k-fold datasets (esc50, arca23k_fsd): one partition per fold, the fold's
// classes unseen and every other class seen. train/val datasets: one "val"
// partition. fsc22 additionally has "test", whose seen side is train + val.
//
// The table ships with the library; setting ZERODIFF_PARTITIONS_FILE to a JSON
// file of the same layout replaces it at runtime.
std::vector<PartitionSpec> builtin_partitions(std::string_view dataset);

// {"name": "...", "seen": [...], "unseen": [...]}
PartitionSpec load_partition(const std::filesystem::path& path);
void write_partition(const std::filesystem::path& path, const PartitionSpec& spec);

}  // namespace zdiff

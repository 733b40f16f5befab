#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zerodiff/classifier.hpp"
#include "zerodiff/diffusion.hpp"
#include "zerodiff/embedding_io.hpp"
#include "zerodiff/partitions.hpp"
#include "zerodiff/synth.hpp"

namespace zdiff {

enum class Method { zerodiffusion, ale };
enum class StdKind { population, sample };
enum class AccuracyKind { micro, class_balanced };
enum class ReportFormat { text, json, markdown };

struct SyntheticSource {
  SynthConfig config;
  std::uint64_t seed = 0;
  // Draw a fresh benchmark for every repetition (seed + run index) instead
  // of sharing one across runs.
  bool reseed_per_run = true;
};

struct DataSource {
  std::optional<SyntheticSource> synthetic;
  std::filesystem::path features;
  std::filesystem::path classes;
};

// Builtin table (dataset + optional fold names, empty = all), a partition
// file, or neither for synthetic data, which carries its own partition.
struct PartitionSelector {
  std::string builtin;
  std::vector<std::string> folds;
  std::filesystem::path file;
};

struct ExperimentConfig {
  Method method = Method::zerodiffusion;
  DataSource data;
  PartitionSelector partition;
  std::size_t repetitions = 10;
  std::uint64_t root_seed = 0;
  std::size_t threads = 1;  // 0 = hardware concurrency
  DiffusionTrainConfig diffusion;
  ClassifierTrainConfig classifier;
  std::optional<std::size_t> generation_count;  // default: dataset average per class
  double generation_noise_std = kDefaultNoiseStd;
  std::size_t refinement_steps = 0;
  StdKind std_kind = StdKind::population;
  AccuracyKind accuracy_kind = AccuracyKind::micro;
  std::filesystem::path out_dir;
  ReportFormat format = ReportFormat::text;

  void validate() const;
};

// Defaults for a method: the ALE baseline trains its classifier with WARP
// and weight decay 1e-4, ZeroDiffusion with cross-entropy and 1e-5.
ExperimentConfig default_config(Method method);

// JSON config; unknown keys are rejected with ConfigError. Relative paths are
// resolved against base_dir.
ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical JSON of every setting that influences results (output location,
// format and thread count excluded) and its FNV-1a hash.
std::string canonical_config_json(const ExperimentConfig& config);
std::string config_fingerprint(const ExperimentConfig& config);

struct RunResult {
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double wall_seconds = 0.0;
  std::vector<std::string> stages;  // stages entered, in order
  std::size_t synthetic_count = 0;
  std::vector<double> diffusion_loss_trace;  // per-epoch total loss
  std::string failed_stage;                  // empty on success
  std::string error;
  std::string error_kind;  // config | data | numerical | other

  bool ok() const { return failed_stage.empty(); }
  friend bool operator==(const RunResult&, const RunResult&) = default;
};

struct ExperimentReport {
  std::string method;
  std::string partition;
  std::string config_fingerprint;
  StdKind std_kind = StdKind::population;
  AccuracyKind accuracy_kind = AccuracyKind::micro;
  std::vector<RunResult> runs;  // sorted by seed
  double mean = 0.0;            // over successful runs
  double std = 0.0;
  bool complete = true;

  std::vector<double> accuracies() const;
  friend bool operator==(const ExperimentReport&, const ExperimentReport&) = default;
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;
};

// Arithmetic mean and standard deviation (divide by N, or N-1 for sample;
// a single value has std 0 either way).
Aggregate aggregate(std::span<const double> values, StdKind kind = StdKind::population);

struct Dataset {
  FeatureTable features;
  ClassTable classes;
  std::vector<PartitionSpec> partitions;
};

Dataset load_dataset(const ExperimentConfig& config);

// One repetition of the pipeline on one partition:
// [train diffusion -> generate ->] train classifier -> evaluate on unseen.
// Stage errors are caught and recorded in the result.
RunResult run_once(const ExperimentConfig& config, const Dataset& data, const PartitionSpec& partition,
                   std::uint64_t seed);

// Runs seeds root_seed .. root_seed + repetitions - 1 on every selected
// partition, one report per partition.
std::vector<ExperimentReport> run_experiment(const ExperimentConfig& config);

// "0.3138 ± 0.0132"
std::string format_mean_std(double mean, double std);

std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(std::string_view json_text);
std::string render_reports(std::span<const ExperimentReport> reports, ReportFormat format);
std::vector<ExperimentReport> reports_from_json(std::string_view json_text);

// Writes render_reports() to `path`, creating parent directories.
void emit_report(std::span<const ExperimentReport> reports, ReportFormat format,
                 const std::filesystem::path& path);

std::string to_string(Method m);
Method parse_method(std::string_view s);
ReportFormat parse_format(std::string_view s);
std::string to_string(ReportFormat f);

}  // namespace zdiff

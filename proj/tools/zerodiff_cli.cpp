#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "zerodiff/embedding_io.hpp"
#include "zerodiff/errors.hpp"
#include "zerodiff/harness.hpp"
#include "zerodiff/partitions.hpp"
#include "zerodiff/rng.hpp"
#include "zerodiff/selfcheck.hpp"
#include "zerodiff/synth.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct RunOptions {
  std::string config;
  std::string method;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  std::optional<std::size_t> threads;
  std::string out;
  std::string format;
};

struct SynthOptions {
  std::string out = "synthetic";
  std::uint64_t seed = 0;
  zdiff::SynthConfig config;
  bool binary = false;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw zdiff::ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string extension(zdiff::ReportFormat f) {
  switch (f) {
    case zdiff::ReportFormat::json: return "json";
    case zdiff::ReportFormat::markdown: return "md";
    case zdiff::ReportFormat::text: break;
  }
  return "txt";
}

int cmd_run(const RunOptions& o) {
  // Command-line overrides are applied to the JSON before parsing so that a
  // --method switch also picks up that method's classifier defaults.
  nlohmann::json j = nlohmann::json::object();
  std::filesystem::path base;
  if (!o.config.empty()) {
    try {
      j = nlohmann::json::parse(read_file(o.config));
    } catch (const nlohmann::json::parse_error& e) {
      throw zdiff::ConfigError(o.config + " is not valid JSON: " + e.what());
    }
    base = std::filesystem::path(o.config).parent_path();
  } else {
    j["data"]["synthetic"] = nlohmann::json::object();
  }
  if (!o.method.empty()) j["method"] = o.method;
  if (o.seed) j["root_seed"] = *o.seed;
  if (o.reps) j["repetitions"] = *o.reps;
  if (o.threads) j["threads"] = *o.threads;
  if (!o.format.empty()) j["report"]["format"] = o.format;
  if (!o.out.empty()) j["report"]["out_dir"] = std::filesystem::absolute(o.out).string();

  const zdiff::ExperimentConfig config = zdiff::parse_config(j.dump(), base);
  const auto reports = zdiff::run_experiment(config);
  std::cout << zdiff::render_reports(reports, config.format);
  if (!config.out_dir.empty()) {
    const auto path = config.out_dir / ("report." + extension(config.format));
    zdiff::emit_report(reports, config.format, path);
    if (config.format != zdiff::ReportFormat::json) {
      zdiff::emit_report(reports, zdiff::ReportFormat::json, config.out_dir / "report.json");
    }
    std::cerr << "report written to " << path.string() << "\n";
  }

  int code = 0;
  for (const auto& r : reports) {
    for (const auto& run : r.runs) {
      if (run.ok()) continue;
      std::cerr << "partition " << r.partition << ", seed " << run.seed << ": " << run.failed_stage
                << " failed: " << run.error << "\n";
      const int c = run.error_kind == "numerical" ? kExitNumerical
                    : run.error_kind == "config"  ? kExitConfig
                                                  : kExitData;
      code = std::max(code, c);
    }
  }
  return code;
}

int cmd_synth(const SynthOptions& o) {
  zdiff::Rng rng(o.seed);
  const zdiff::SynthBenchmark b = zdiff::synth_benchmark(o.config, rng);
  const std::filesystem::path dir(o.out);
  std::filesystem::create_directories(dir);
  if (o.binary) {
    zdiff::write_feature_table_binary(dir / "features.zdem", b.features);
  } else {
    zdiff::write_feature_table(dir / "features.jsonl", b.features);
  }
  zdiff::write_class_table(dir / "classes.jsonl", b.classes);
  zdiff::write_partition(dir / "partition.json", b.partition);
  std::cout << "wrote " << b.features.size() << " records, " << b.classes.size() << " classes to "
            << dir.string() << "\n";
  return 0;
}

int cmd_check(std::uint64_t seed) {
  bool all = true;
  for (const auto& c : zdiff::run_self_checks(seed)) {
    std::printf("%s  %-45s %s (%.2fs)\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str(),
                c.seconds);
    all = all && c.passed;
  }
  return all ? 0 : kExitNumerical;
}

int cmd_partitions(const std::string& dataset, bool as_json) {
  const auto names = dataset.empty() ? zdiff::builtin_dataset_names() : std::vector<std::string>{dataset};
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& name : names) {
    const auto parts = zdiff::builtin_partitions(name);
    if (as_json) {
      auto& arr = out[name] = nlohmann::ordered_json::array();
      for (const auto& p : parts) arr.push_back({{"name", p.name}, {"seen", p.seen}, {"unseen", p.unseen}});
      continue;
    }
    std::cout << name << " (" << zdiff::builtin_labels(name).size() << " classes)\n";
    for (const auto& p : parts) {
      std::cout << "  " << p.name << ": " << p.seen.size() << " seen, " << p.unseen.size() << " unseen:";
      for (const auto& u : p.unseen) std::cout << ' ' << u;
      std::cout << '\n';
    }
  }
  if (as_json) std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot audio classification with embedding-space diffusion"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Run a seeded multi-repetition experiment");
  run_cmd->add_option("--config", run.config, "Experiment config (JSON); default: synthetic benchmark")
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--method", run.method, "zerodiffusion | ale");
  run_cmd->add_option("--seed", run.seed, "Root seed");
  run_cmd->add_option("--reps", run.reps, "Number of repetitions");
  run_cmd->add_option("--threads", run.threads, "Worker threads (0 = all cores)");
  run_cmd->add_option("--out", run.out, "Directory for report files");
  run_cmd->add_option("--format", run.format, "text | json | markdown");

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic benchmark in the interchange format");
  synth_cmd->add_option("--out", synth.out, "Output directory")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--seen", synth.config.seen_classes)->capture_default_str();
  synth_cmd->add_option("--unseen", synth.config.unseen_classes)->capture_default_str();
  synth_cmd->add_option("--samples", synth.config.samples_per_class, "Records per class")->capture_default_str();
  synth_cmd->add_option("--feature-dim", synth.config.feature_dim)->capture_default_str();
  synth_cmd->add_option("--class-dim", synth.config.class_dim)->capture_default_str();
  synth_cmd->add_option("--latent-dim", synth.config.latent_dim)->capture_default_str();
  synth_cmd->add_option("--feature-noise", synth.config.feature_noise)->capture_default_str();
  synth_cmd->add_flag("--binary", synth.binary, "Write features as binary (ZDEM) instead of JSONL");

  std::uint64_t check_seed = 0;
  auto* check_cmd = app.add_subcommand("check", "Gradient oracles and invariant self-tests");
  check_cmd->add_option("--seed", check_seed)->capture_default_str();

  std::string dataset;
  bool partitions_json = false;
  auto* part_cmd = app.add_subcommand("partitions", "Print the builtin partition tables");
  part_cmd->add_option("dataset", dataset, "Dataset key (default: all)");
  part_cmd->add_flag("--json", partitions_json, "Print as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*synth_cmd) return cmd_synth(synth);
    if (*check_cmd) return cmd_check(check_seed);
    if (*part_cmd) return cmd_partitions(dataset, partitions_json);
  } catch (const zdiff::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const zdiff::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const zdiff::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}

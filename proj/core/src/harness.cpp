#include "zerodiff/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "zerodiff/errors.hpp"
#include "zerodiff/rng.hpp"

namespace zdiff {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void allow_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [k, _] : obj.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      std::string msg = std::string(where) + ": unknown key '" + k + "' (allowed:";
      for (auto a : keys) msg += " " + std::string(a);
      throw ConfigError(msg + ")");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& dst, std::string_view where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return;
  try {
    dst = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

std::string to_string(ClassifierLoss l) { return l == ClassifierLoss::warp ? "warp" : "cross_entropy"; }
std::string to_string(CompatibilityVariant v) {
  return v == CompatibilityVariant::bilinear ? "bilinear" : "nonlinear";
}
std::string to_string(StdKind k) { return k == StdKind::sample ? "sample" : "population"; }
std::string to_string(AccuracyKind k) { return k == AccuracyKind::class_balanced ? "class_balanced" : "micro"; }

StdKind parse_std(std::string_view s) {
  if (s == "population") return StdKind::population;
  if (s == "sample") return StdKind::sample;
  throw ConfigError("unknown std kind '" + std::string(s) + "' (population|sample)");
}

AccuracyKind parse_accuracy(std::string_view s) {
  if (s == "micro") return AccuracyKind::micro;
  if (s == "class_balanced") return AccuracyKind::class_balanced;
  throw ConfigError("unknown accuracy kind '" + std::string(s) + "' (micro|class_balanced)");
}

void parse_synth(const json& j, SyntheticSource& s) {
  allow_keys(j, "data.synthetic",
             {"seen_classes", "unseen_classes", "samples_per_class", "feature_dim", "class_dim",
              "latent_dim", "centroid_bound", "feature_noise", "coupling_noise", "class_scale",
              "seed", "reseed_per_run"});
  auto& c = s.config;
  const char* w = "data.synthetic";
  read(j, "seen_classes", c.seen_classes, w);
  read(j, "unseen_classes", c.unseen_classes, w);
  read(j, "samples_per_class", c.samples_per_class, w);
  read(j, "feature_dim", c.feature_dim, w);
  read(j, "class_dim", c.class_dim, w);
  read(j, "latent_dim", c.latent_dim, w);
  read(j, "centroid_bound", c.centroid_bound, w);
  read(j, "feature_noise", c.feature_noise, w);
  read(j, "coupling_noise", c.coupling_noise, w);
  read(j, "class_scale", c.class_scale, w);
  read(j, "seed", s.seed, w);
  read(j, "reseed_per_run", s.reseed_per_run, w);
}

void parse_diffusion(const json& j, DiffusionTrainConfig& d) {
  allow_keys(j, "diffusion",
             {"learning_rate", "weight_decay", "batch_size", "epochs", "clip_max_norm", "noise_std",
              "jitter_std", "hidden_dim", "dropout_rate", "leaky_slope", "loss_weights"});
  const char* w = "diffusion";
  read(j, "learning_rate", d.learning_rate, w);
  read(j, "weight_decay", d.weight_decay, w);
  read(j, "batch_size", d.batch_size, w);
  read(j, "epochs", d.epochs, w);
  read(j, "clip_max_norm", d.clip_max_norm, w);
  read(j, "noise_std", d.noise_std, w);
  read(j, "jitter_std", d.jitter_std, w);
  read(j, "hidden_dim", d.hidden_dim, w);
  read(j, "dropout_rate", d.dropout_rate, w);
  read(j, "leaky_slope", d.leaky_slope, w);
  if (auto it = j.find("loss_weights"); it != j.end()) {
    allow_keys(*it, "diffusion.loss_weights", {"reconstruction", "mmd", "variance", "centroid", "cosine"});
    const char* lw = "diffusion.loss_weights";
    read(*it, "reconstruction", d.weights.reconstruction, lw);
    read(*it, "mmd", d.weights.mmd, lw);
    read(*it, "variance", d.weights.variance, lw);
    read(*it, "centroid", d.weights.centroid, lw);
    read(*it, "cosine", d.weights.cosine, lw);
  }
}

void parse_classifier(const json& j, ClassifierTrainConfig& c) {
  allow_keys(j, "classifier",
             {"loss", "variant", "hidden_dim", "learning_rate", "weight_decay", "batch_size", "epochs"});
  const char* w = "classifier";
  std::string loss = to_string(c.loss);
  std::string variant = to_string(c.variant);
  read(j, "loss", loss, w);
  read(j, "variant", variant, w);
  if (loss == "cross_entropy") c.loss = ClassifierLoss::cross_entropy;
  else if (loss == "warp") c.loss = ClassifierLoss::warp;
  else throw ConfigError("classifier.loss: unknown loss '" + loss + "' (cross_entropy|warp)");
  if (variant == "nonlinear") c.variant = CompatibilityVariant::nonlinear;
  else if (variant == "bilinear") c.variant = CompatibilityVariant::bilinear;
  else throw ConfigError("classifier.variant: unknown variant '" + variant + "' (nonlinear|bilinear)");
  read(j, "hidden_dim", c.hidden_dim, w);
  read(j, "learning_rate", c.learning_rate, w);
  read(j, "weight_decay", c.weight_decay, w);
  read(j, "batch_size", c.batch_size, w);
  read(j, "epochs", c.epochs, w);
}

ordered_json run_to_json(const RunResult& r) {
  ordered_json j;
  j["seed"] = r.seed;
  j["accuracy"] = r.accuracy;
  j["wall_seconds"] = r.wall_seconds;
  j["stages"] = r.stages;
  j["synthetic_count"] = r.synthetic_count;
  j["diffusion_loss_trace"] = r.diffusion_loss_trace;
  j["failed_stage"] = r.failed_stage;
  j["error"] = r.error;
  j["error_kind"] = r.error_kind;
  return j;
}

ordered_json report_json(const ExperimentReport& r) {
  ordered_json j;
  j["method"] = r.method;
  j["partition"] = r.partition;
  j["config_fingerprint"] = r.config_fingerprint;
  j["std_kind"] = to_string(r.std_kind);
  j["accuracy_kind"] = to_string(r.accuracy_kind);
  j["repetitions"] = r.runs.size();
  j["mean"] = r.mean;
  j["std"] = r.std;
  j["summary"] = format_mean_std(r.mean, r.std);
  j["complete"] = r.complete;
  j["accuracies"] = r.accuracies();
  ordered_json runs = ordered_json::array();
  for (const auto& run : r.runs) runs.push_back(run_to_json(run));
  j["runs"] = std::move(runs);
  return j;
}

ExperimentReport report_from(const json& j) {
  ExperimentReport r;
  try {
    r.method = j.at("method").get<std::string>();
    r.partition = j.at("partition").get<std::string>();
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    r.std_kind = parse_std(j.at("std_kind").get<std::string>());
    r.accuracy_kind = parse_accuracy(j.at("accuracy_kind").get<std::string>());
    r.mean = j.at("mean").get<double>();
    r.std = j.at("std").get<double>();
    r.complete = j.at("complete").get<bool>();
    for (const auto& rj : j.at("runs")) {
      RunResult run;
      run.seed = rj.at("seed").get<std::uint64_t>();
      run.accuracy = rj.at("accuracy").get<double>();
      run.wall_seconds = rj.at("wall_seconds").get<double>();
      run.stages = rj.at("stages").get<std::vector<std::string>>();
      run.synthetic_count = rj.at("synthetic_count").get<std::size_t>();
      run.diffusion_loss_trace = rj.at("diffusion_loss_trace").get<std::vector<double>>();
      run.failed_stage = rj.at("failed_stage").get<std::string>();
      run.error = rj.at("error").get<std::string>();
      run.error_kind = rj.at("error_kind").get<std::string>();
      r.runs.push_back(std::move(run));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("report JSON: ") + e.what());
  }
  return r;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return "config";
  if (dynamic_cast<const DataError*>(&e) != nullptr) return "data";
  if (dynamic_cast<const NumericalError*>(&e) != nullptr) return "numerical";
  if (dynamic_cast<const DimensionError*>(&e) != nullptr) return "data";
  return "other";
}

ClassTable subset_classes(const ClassTable& classes, const std::vector<std::string>& labels) {
  ClassTable out;
  std::vector<std::string> missing;
  for (const auto& l : labels) {
    const auto* c = find_class(classes, l);
    if (c == nullptr) missing.push_back(l);
    else out.push_back(*c);
  }
  if (!missing.empty()) {
    std::string msg = "no class embedding for:";
    for (const auto& m : missing) msg += " '" + m + "'";
    throw DataError(msg);
  }
  return out;
}

FeatureTable records_of(const FeatureTable& table, const std::vector<std::string>& labels) {
  std::set<std::string> want(labels.begin(), labels.end());
  FeatureTable out;
  for (const auto& r : table)
    if (want.count(r.class_label) != 0) out.push_back(r);
  return out;
}

Dataset synthetic_dataset(const SyntheticSource& s, std::uint64_t seed) {
  Rng rng(seed);
  SynthBenchmark b = synth_benchmark(s.config, rng);
  return {std::move(b.features), std::move(b.classes), {std::move(b.partition)}};
}

}  // namespace

std::string to_string(Method m) { return m == Method::ale ? "ale" : "zerodiffusion"; }

Method parse_method(std::string_view s) {
  if (s == "zerodiffusion") return Method::zerodiffusion;
  if (s == "ale") return Method::ale;
  throw ConfigError("unknown method '" + std::string(s) + "' (zerodiffusion|ale)");
}

ReportFormat parse_format(std::string_view s) {
  if (s == "text") return ReportFormat::text;
  if (s == "json") return ReportFormat::json;
  if (s == "markdown") return ReportFormat::markdown;
  throw ConfigError("unknown report format '" + std::string(s) + "' (text|json|markdown)");
}

std::string to_string(ReportFormat f) {
  switch (f) {
    case ReportFormat::json: return "json";
    case ReportFormat::markdown: return "markdown";
    case ReportFormat::text: break;
  }
  return "text";
}

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (data.synthetic) {
    if (!partition.builtin.empty() || !partition.file.empty()) {
      throw ConfigError("synthetic data carries its own partition; remove \"partition\"");
    }
  } else {
    if (data.features.empty() || data.classes.empty()) {
      throw ConfigError("data: need either \"synthetic\" or both \"features\" and \"classes\"");
    }
    for (const auto& p : {data.features, data.classes}) {
      if (!std::filesystem::exists(p)) throw ConfigError("data file does not exist: " + p.string());
    }
    if (partition.builtin.empty() == partition.file.empty()) {
      throw ConfigError("partition: give exactly one of \"builtin\" or \"file\"");
    }
    if (!partition.file.empty() && !std::filesystem::exists(partition.file)) {
      throw ConfigError("partition file does not exist: " + partition.file.string());
    }
  }
  if (method == Method::zerodiffusion) diffusion.validate();
  classifier.validate();
  if (generation_noise_std < 0.0) throw ConfigError("generation.noise_std must be >= 0");
}

ExperimentConfig default_config(Method method) {
  ExperimentConfig c;
  c.method = method;
  if (method == Method::ale) {
    c.classifier.loss = ClassifierLoss::warp;
    c.classifier.weight_decay = 1e-4;
  } else {
    c.classifier.loss = ClassifierLoss::cross_entropy;
    c.classifier.weight_decay = 1e-5;
  }
  return c;
}

ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  allow_keys(j, "config",
             {"method", "data", "partition", "repetitions", "root_seed", "threads", "diffusion",
              "generation", "classifier", "report"});

  std::string method = "zerodiffusion";
  read(j, "method", method, "config");
  ExperimentConfig c = default_config(parse_method(method));
  read(j, "repetitions", c.repetitions, "config");
  read(j, "root_seed", c.root_seed, "config");
  read(j, "threads", c.threads, "config");

  if (auto it = j.find("data"); it != j.end()) {
    allow_keys(*it, "data", {"synthetic", "features", "classes"});
    if (auto s = it->find("synthetic"); s != it->end()) {
      c.data.synthetic.emplace();
      parse_synth(*s, *c.data.synthetic);
    }
    std::string f, k;
    read(*it, "features", f, "data");
    read(*it, "classes", k, "data");
    if (!f.empty()) c.data.features = resolve(base_dir, f);
    if (!k.empty()) c.data.classes = resolve(base_dir, k);
    if (c.data.synthetic && (!f.empty() || !k.empty())) {
      throw ConfigError("data: \"synthetic\" and file sources are mutually exclusive");
    }
  } else {
    throw ConfigError("config: missing \"data\"");
  }

  if (auto it = j.find("partition"); it != j.end()) {
    allow_keys(*it, "partition", {"builtin", "folds", "file"});
    read(*it, "builtin", c.partition.builtin, "partition");
    read(*it, "folds", c.partition.folds, "partition");
    std::string file;
    read(*it, "file", file, "partition");
    if (!file.empty()) c.partition.file = resolve(base_dir, file);
  }

  if (auto it = j.find("diffusion"); it != j.end()) parse_diffusion(*it, c.diffusion);
  if (auto it = j.find("classifier"); it != j.end()) parse_classifier(*it, c.classifier);

  if (auto it = j.find("generation"); it != j.end()) {
    allow_keys(*it, "generation", {"count_per_class", "noise_std", "refinement_steps"});
    if (auto n = it->find("count_per_class"); n != it->end() && !n->is_null()) {
      std::size_t count = 0;
      read(*it, "count_per_class", count, "generation");
      c.generation_count = count;
    }
    read(*it, "noise_std", c.generation_noise_std, "generation");
    read(*it, "refinement_steps", c.refinement_steps, "generation");
  }

  if (auto it = j.find("report"); it != j.end()) {
    allow_keys(*it, "report", {"std", "accuracy", "format", "out_dir"});
    std::string std_kind = to_string(c.std_kind), acc = to_string(c.accuracy_kind),
                fmt = to_string(c.format), out;
    read(*it, "std", std_kind, "report");
    read(*it, "accuracy", acc, "report");
    read(*it, "format", fmt, "report");
    read(*it, "out_dir", out, "report");
    c.std_kind = parse_std(std_kind);
    c.accuracy_kind = parse_accuracy(acc);
    c.format = parse_format(fmt);
    if (!out.empty()) c.out_dir = resolve(base_dir, out);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string canonical_config_json(const ExperimentConfig& c) {
  json j;
  j["method"] = to_string(c.method);
  j["repetitions"] = c.repetitions;
  j["root_seed"] = c.root_seed;
  if (c.data.synthetic) {
    const auto& s = *c.data.synthetic;
    j["data"]["synthetic"] = {{"seen_classes", s.config.seen_classes},
                              {"unseen_classes", s.config.unseen_classes},
                              {"samples_per_class", s.config.samples_per_class},
                              {"feature_dim", s.config.feature_dim},
                              {"class_dim", s.config.class_dim},
                              {"latent_dim", s.config.latent_dim},
                              {"centroid_bound", s.config.centroid_bound},
                              {"feature_noise", s.config.feature_noise},
                              {"coupling_noise", s.config.coupling_noise},
                              {"class_scale", s.config.class_scale},
                              {"seed", s.seed},
                              {"reseed_per_run", s.reseed_per_run}};
  } else {
    j["data"] = {{"features", c.data.features.string()}, {"classes", c.data.classes.string()}};
    j["partition"] = {{"builtin", c.partition.builtin},
                      {"folds", c.partition.folds},
                      {"file", c.partition.file.string()}};
  }
  if (c.method == Method::zerodiffusion) {
    const auto& d = c.diffusion;
    j["diffusion"] = {{"learning_rate", d.learning_rate},
                      {"weight_decay", d.weight_decay},
                      {"batch_size", d.batch_size},
                      {"epochs", d.epochs},
                      {"clip_max_norm", d.clip_max_norm},
                      {"noise_std", d.noise_std},
                      {"jitter_std", d.jitter_std},
                      {"hidden_dim", d.hidden_dim},
                      {"dropout_rate", d.dropout_rate},
                      {"leaky_slope", d.leaky_slope},
                      {"loss_weights",
                       {{"reconstruction", d.weights.reconstruction},
                        {"mmd", d.weights.mmd},
                        {"variance", d.weights.variance},
                        {"centroid", d.weights.centroid},
                        {"cosine", d.weights.cosine}}}};
    j["generation"] = {{"count_per_class", c.generation_count ? json(*c.generation_count) : json()},
                       {"noise_std", c.generation_noise_std},
                       {"refinement_steps", c.refinement_steps}};
  }
  const auto& k = c.classifier;
  j["classifier"] = {{"loss", to_string(k.loss)},
                     {"variant", to_string(k.variant)},
                     {"hidden_dim", k.hidden_dim},
                     {"learning_rate", k.learning_rate},
                     {"weight_decay", k.weight_decay},
                     {"batch_size", k.batch_size},
                     {"epochs", k.epochs}};
  j["report"] = {{"std", to_string(c.std_kind)}, {"accuracy", to_string(c.accuracy_kind)}};
  return j.dump();  // object keys are sorted, so the dump is canonical
}

std::string config_fingerprint(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_config_json(config))));
  return buf;
}

std::vector<double> ExperimentReport::accuracies() const {
  std::vector<double> out;
  for (const auto& r : runs)
    if (r.ok()) out.push_back(r.accuracy);
  return out;
}

Aggregate aggregate(std::span<const double> values, StdKind kind) {
  if (values.empty()) throw DataError("aggregate: no values");
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  Aggregate a;
  a.mean = sum / n;
  if (values.size() < 2) return a;
  double ss = 0.0;
  for (double v : values) ss += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(ss / (kind == StdKind::sample ? n - 1.0 : n));
  return a;
}

Dataset load_dataset(const ExperimentConfig& config) {
  if (config.data.synthetic) return synthetic_dataset(*config.data.synthetic, config.data.synthetic->seed);

  Dataset d;
  d.features = load_feature_table(config.data.features);
  d.classes = load_class_table(config.data.classes);
  if (d.features.empty()) throw DataError("feature table " + config.data.features.string() + " is empty");
  if (!config.partition.file.empty()) {
    d.partitions.push_back(load_partition(config.partition.file));
  } else {
    auto all = builtin_partitions(config.partition.builtin);
    if (config.partition.folds.empty()) {
      d.partitions = std::move(all);
    } else {
      for (const auto& name : config.partition.folds) {
        auto it = std::find_if(all.begin(), all.end(), [&](const auto& p) { return p.name == name; });
        if (it == all.end()) {
          throw ConfigError("partition: dataset '" + config.partition.builtin + "' has no fold '" + name + "'");
        }
        d.partitions.push_back(*it);
      }
    }
  }
  return d;
}

RunResult run_once(const ExperimentConfig& config, const Dataset& data, const PartitionSpec& partition,
                   std::uint64_t seed) {
  RunResult r;
  r.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  Rng rng(seed);
  std::string stage = "prepare";
  try {
    partition.validate();
    const FeatureTable seen = records_of(data.features, partition.seen);
    const FeatureTable unseen = records_of(data.features, partition.unseen);
    if (seen.empty()) throw DataError("partition '" + partition.name + "': no seen records");
    if (unseen.empty()) throw DataError("partition '" + partition.name + "': no unseen records");
    const ClassTable unseen_classes = subset_classes(data.classes, partition.unseen);

    FeatureTable synthetic;
    if (config.method == Method::zerodiffusion) {
      const std::size_t count =
          config.generation_count.value_or(generation_count(dataset_stats(data.features)));
      if (count > 0) {
        stage = "train_diffusion";
        r.stages.push_back(stage);
        Rng diffusion_rng = rng.derive("stage.diffusion");
        DiffusionTrainResult trained = train_diffusion(seen, data.classes, config.diffusion, diffusion_rng);
        for (const auto& e : trained.trace) r.diffusion_loss_trace.push_back(e.total);

        stage = "generate";
        r.stages.push_back(stage);
        Rng gen_rng = rng.derive("stage.generate");
        synthetic = generate_unseen(trained.model, unseen_classes,
                                    {count, config.generation_noise_std, config.refinement_steps}, gen_rng);
        r.synthetic_count = synthetic.size();
      }
    }

    stage = "train_classifier";
    r.stages.push_back(stage);
    Rng cls_rng = rng.derive("stage.classifier");
    const CompatibilityModel model = train_classifier(seen, synthetic, data.classes, config.classifier, cls_rng);

    stage = "evaluate";
    r.stages.push_back(stage);
    const Evaluation e = evaluate(model, unseen, unseen_classes);
    r.accuracy = config.accuracy_kind == AccuracyKind::micro ? e.accuracy : e.balanced_accuracy;
  } catch (const std::exception& e) {
    r.failed_stage = stage;
    r.error = e.what();
    r.error_kind = error_kind(e);
  }
  r.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<ExperimentReport> run_experiment(const ExperimentConfig& config) {
  config.validate();
  const bool per_run_data = config.data.synthetic && config.data.synthetic->reseed_per_run;
  const Dataset shared = load_dataset(config);
  const std::string fingerprint = config_fingerprint(config);

  std::vector<ExperimentReport> reports;
  for (std::size_t pi = 0; pi < shared.partitions.size(); ++pi) {
    ExperimentReport report;
    report.method = to_string(config.method);
    report.partition = shared.partitions[pi].name;
    report.config_fingerprint = fingerprint;
    report.std_kind = config.std_kind;
    report.accuracy_kind = config.accuracy_kind;
    report.runs.resize(config.repetitions);

    auto job = [&](std::size_t i) {
      const std::uint64_t seed = config.root_seed + i;
      if (per_run_data) {
        const Dataset own = synthetic_dataset(*config.data.synthetic, config.data.synthetic->seed + i);
        report.runs[i] = run_once(config, own, own.partitions.front(), seed);
      } else {
        report.runs[i] = run_once(config, shared, shared.partitions[pi], seed);
      }
    };

    std::size_t threads = config.threads == 0 ? std::thread::hardware_concurrency() : config.threads;
    threads = std::clamp<std::size_t>(threads, 1, config.repetitions);
    if (threads == 1) {
      for (std::size_t i = 0; i < config.repetitions; ++i) job(i);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
          for (std::size_t i = next++; i < config.repetitions; i = next++) job(i);
        });
      }
    }

    std::sort(report.runs.begin(), report.runs.end(),
              [](const RunResult& a, const RunResult& b) { return a.seed < b.seed; });
    report.complete = std::all_of(report.runs.begin(), report.runs.end(),
                                  [](const RunResult& r) { return r.ok(); });
    const auto acc = report.accuracies();
    if (!acc.empty()) {
      const Aggregate a = aggregate(acc, config.std_kind);
      report.mean = a.mean;
      report.std = a.std;
    }
    reports.push_back(std::move(report));
  }
  return reports;
}

std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f ± %.4f", mean, std);
  return buf;
}

std::string report_to_json(const ExperimentReport& report) { return report_json(report).dump(2); }

ExperimentReport report_from_json(std::string_view json_text) {
  try {
    return report_from(json::parse(json_text));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("report JSON: ") + e.what());
  }
}

std::vector<ExperimentReport> reports_from_json(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("report JSON: ") + e.what());
  }
  std::vector<ExperimentReport> out;
  if (!j.contains("reports")) throw FormatError("report JSON: missing \"reports\"");
  for (const auto& r : j.at("reports")) out.push_back(report_from(r));
  return out;
}

std::string render_reports(std::span<const ExperimentReport> reports, ReportFormat format) {
  std::ostringstream out;
  switch (format) {
    case ReportFormat::json: {
      ordered_json j;
      j["reports"] = ordered_json::array();
      for (const auto& r : reports) j["reports"].push_back(report_json(r));
      out << j.dump(2) << '\n';
      break;
    }
    case ReportFormat::markdown: {
      out << "| Partition | Method | Accuracy |\n";
      out << "|---|---|---|\n";
      for (const auto& r : reports) {
        out << "| " << r.partition << " | " << r.method << " | " << format_mean_std(r.mean, r.std)
            << (r.complete ? "" : " (incomplete)") << " |\n";
      }
      break;
    }
    case ReportFormat::text: {
      for (const auto& r : reports) {
        out << r.method << " " << r.partition << ": " << format_mean_std(r.mean, r.std) << " over "
            << r.accuracies().size() << " run(s), " << to_string(r.std_kind) << " std, "
            << to_string(r.accuracy_kind) << " accuracy [" << r.config_fingerprint << "]\n";
        for (const auto& run : r.runs) {
          char line[96];
          if (run.ok()) {
            std::snprintf(line, sizeof line, "  seed %llu: %.4f (%.2fs)\n",
                          static_cast<unsigned long long>(run.seed), run.accuracy, run.wall_seconds);
            out << line;
          } else {
            out << "  seed " << run.seed << ": FAILED in " << run.failed_stage << ": " << run.error << '\n';
          }
        }
      }
      break;
    }
  }
  return out.str();
}

void emit_report(std::span<const ExperimentReport> reports, ReportFormat format,
                 const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << render_reports(reports, format);
}

}  // namespace zdiff

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "zerodiff/errors.hpp"
#include "zerodiff/harness.hpp"
#include "zerodiff/rng.hpp"

using namespace zdiff;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small synthetic experiment that runs in well under a second per seed.
ExperimentConfig quick(Method method) {
  ExperimentConfig c = default_config(method);
  SyntheticSource s;
  s.config.samples_per_class = 20;
  s.config.feature_dim = 24;
  s.config.class_dim = 8;
  c.data.synthetic = s;
  c.repetitions = 3;
  c.diffusion.epochs = 4;
  c.classifier.hidden_dim = 16;
  c.classifier.epochs = 4;
  return c;
}

ExperimentReport sample_report() {
  ExperimentReport r;
  r.method = "zerodiffusion";
  r.partition = "fold 0";
  r.config_fingerprint = "0123456789abcdef";
  RunResult a;
  a.seed = 0;
  a.accuracy = 0.25;
  a.wall_seconds = 1.5;
  a.stages = {"train_diffusion", "generate", "train_classifier", "evaluate"};
  a.synthetic_count = 80;
  a.diffusion_loss_trace = {3.25, 2.0, 1.0 / 3.0};
  RunResult b = a;
  b.seed = 1;
  b.accuracy = 0.0;
  b.failed_stage = "train_diffusion";
  b.error = "train_diffusion: non-finite loss at epoch 3, batch 0";
  b.error_kind = "numerical";
  r.runs = {a, b};
  r.mean = 0.25;
  r.complete = false;
  return r;
}

}  // namespace

TEST_CASE("aggregate") {
  const std::vector<double> one{0.5};
  CHECK(aggregate(one).mean == 0.5);
  CHECK(aggregate(one).std == 0.0);
  const std::vector<double> two{0.0, 1.0};
  CHECK(aggregate(two).mean == 0.5);
  CHECK(aggregate(two).std == 0.5);
  const std::vector<double> pair{0.2, 0.4};
  CHECK(aggregate(pair).mean == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(aggregate(pair).std == doctest::Approx(0.1).epsilon(1e-14));
  CHECK_THROWS_AS(aggregate(std::vector<double>{}), DataError);
}

TEST_CASE("aggregate matches an exact-arithmetic computation of the fixture") {
  const auto j = nlohmann::json::parse(slurp(fs::path(ZERODIFF_FIXTURE_DIR) / "accuracies.json"));
  const auto values = j["accuracies"].get<std::vector<double>>();
  REQUIRE(values.size() == 10);
  const Aggregate pop = aggregate(values, StdKind::population);
  const Aggregate sample = aggregate(values, StdKind::sample);
  CHECK(std::abs(pop.mean - j["mean"].get<double>()) < 1e-12);
  CHECK(std::abs(pop.std - j["population_std"].get<double>()) < 1e-12);
  CHECK(std::abs(sample.std - j["sample_std"].get<double>()) < 1e-12);
}

TEST_CASE("format_mean_std") {
  CHECK(format_mean_std(0.3138, 0.0132) == "0.3138 ± 0.0132");
  CHECK(format_mean_std(1.0, 0.0) == "1.0000 ± 0.0000");
}

TEST_CASE("reports") {
  SUBCASE("JSON round-trips to an equal report") {
    const ExperimentReport r = sample_report();
    CHECK(report_from_json(report_to_json(r)) == r);
    const std::vector<ExperimentReport> both{r, r};
    CHECK(reports_from_json(render_reports(both, ReportFormat::json)) == both);
  }
  SUBCASE("markdown has a header and one row per partition") {
    ExperimentReport a = sample_report(), b = sample_report();
    b.partition = "fold 1";
    b.runs.pop_back();
    b.complete = true;
    b.mean = 0.3138;
    b.std = 0.0132;
    const std::vector<ExperimentReport> rs{a, b};
    const std::string md = render_reports(rs, ReportFormat::markdown);
    std::vector<std::string> lines;
    std::istringstream in(md);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "| Partition | Method | Accuracy |");
    CHECK(lines[3] == "| fold 1 | zerodiffusion | 0.3138 ± 0.0132 |");
  }
  SUBCASE("text names failed seeds and stages") {
    const std::vector<ExperimentReport> rs{sample_report()};
    const std::string text = render_reports(rs, ReportFormat::text);
    CHECK(text.find("0.2500 ± 0.0000") != std::string::npos);
    CHECK(text.find("seed 1: FAILED in train_diffusion") != std::string::npos);
  }
  SUBCASE("emit_report writes the file") {
    const fs::path p = fs::temp_directory_path() / "zerodiff_unit_report" / "r.md";
    const std::vector<ExperimentReport> rs{sample_report()};
    emit_report(rs, ReportFormat::markdown, p);
    CHECK(slurp(p) == render_reports(rs, ReportFormat::markdown));
    fs::remove_all(p.parent_path());
  }
  SUBCASE("malformed report JSON") { CHECK_THROWS_AS(report_from_json("{\"method\": 1}"), FormatError); }
}

TEST_CASE("config parsing") {
  SUBCASE("defaults per method") {
    const auto ale = parse_config(R"({"method": "ale", "data": {"synthetic": {}}})");
    CHECK(ale.classifier.loss == ClassifierLoss::warp);
    CHECK(ale.classifier.weight_decay == 1e-4);
    const auto zd = parse_config(R"({"data": {"synthetic": {}}})");
    CHECK(zd.method == Method::zerodiffusion);
    CHECK(zd.classifier.loss == ClassifierLoss::cross_entropy);
    CHECK(zd.classifier.weight_decay == 1e-5);
    CHECK(zd.repetitions == 10);
    CHECK(zd.diffusion.epochs == 50);
    CHECK(zd.diffusion.weights.cosine == 2.0);
  }
  SUBCASE("every section is read") {
    const auto c = parse_config(R"({
      "method": "zerodiffusion", "repetitions": 4, "root_seed": 9, "threads": 2,
      "data": {"synthetic": {"seen_classes": 5, "feature_noise": 0.2, "seed": 3}},
      "diffusion": {"epochs": 7, "loss_weights": {"mmd": 0.5}},
      "generation": {"count_per_class": 12, "refinement_steps": 1},
      "classifier": {"loss": "warp", "variant": "bilinear", "epochs": 2},
      "report": {"std": "sample", "accuracy": "class_balanced", "format": "markdown"}})");
    CHECK(c.repetitions == 4);
    CHECK(c.root_seed == 9);
    CHECK(c.data.synthetic->config.seen_classes == 5);
    CHECK(c.data.synthetic->seed == 3);
    CHECK(c.diffusion.epochs == 7);
    CHECK(c.diffusion.weights.mmd == 0.5);
    CHECK(c.diffusion.weights.reconstruction == 1.0);
    CHECK(c.generation_count == std::optional<std::size_t>(12));
    CHECK(c.refinement_steps == 1);
    CHECK(c.classifier.variant == CompatibilityVariant::bilinear);
    CHECK(c.std_kind == StdKind::sample);
    CHECK(c.accuracy_kind == AccuracyKind::class_balanced);
    CHECK(c.format == ReportFormat::markdown);
  }
  SUBCASE("unknown keys are rejected at every level") {
    CHECK_THROWS_WITH_AS(parse_config(R"({"data": {"synthetic": {}}, "epochs": 3})"), doctest::Contains("epochs"),
                         ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data": {"synthetic": {"noise": 1}}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data": {"synthetic": {}}, "diffusion": {"lr": 1}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data": {"synthetic": {}}, "diffusion": {"loss_weights": {"kl": 1}}})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data": {"synthetic": {}}, "report": {"colour": "red"}})"), ConfigError);
  }
  SUBCASE("invalid values") {
    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"method": "vae", "data": {"synthetic": {}}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data": {"synthetic": {}}, "repetitions": "ten"})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data": {"synthetic": {}}, "classifier": {"loss": "hinge"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"repetitions": 1})"), ConfigError);
    auto zero = parse_config(R"({"data": {"synthetic": {}}, "repetitions": 0})");
    CHECK_THROWS_AS(zero.validate(), ConfigError);
  }
  SUBCASE("file sources must exist and need a partition") {
    auto c = parse_config(R"({"data": {"features": "nope.jsonl", "classes": "nope2.jsonl"},
                              "partition": {"builtin": "esc50"}})",
                          "/nonexistent");
    CHECK(c.data.features == fs::path("/nonexistent/nope.jsonl"));
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("fingerprint ignores output settings only") {
    auto a = parse_config(R"({"data": {"synthetic": {}}})");
    auto b = a;
    b.out_dir = "/tmp/x";
    b.format = ReportFormat::json;
    b.threads = 4;
    CHECK(config_fingerprint(a) == config_fingerprint(b));
    b.root_seed = 1;
    CHECK(config_fingerprint(a) != config_fingerprint(b));
    CHECK(config_fingerprint(a).size() == 16);
  }
}

TEST_CASE("run_experiment") {
  SUBCASE("ZeroDiffusion trace, seeds and statistics") {
    const auto reports = run_experiment(quick(Method::zerodiffusion));
    REQUIRE(reports.size() == 1);
    const auto& r = reports[0];
    CHECK(r.partition == "synthetic");
    CHECK(r.complete);
    REQUIRE(r.runs.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(r.runs[i].seed == i);
      CHECK(r.runs[i].stages ==
            std::vector<std::string>{"train_diffusion", "generate", "train_classifier", "evaluate"});
      CHECK(r.runs[i].synthetic_count == 40);  // 20 per class on average, two unseen classes
      CHECK(r.runs[i].diffusion_loss_trace.size() == 4);
    }
    const Aggregate a = aggregate(r.accuracies());
    CHECK(std::abs(a.mean - r.mean) <= 1e-12);
    CHECK(std::abs(a.std - r.std) <= 1e-12);
  }
  SUBCASE("ALE never enters the diffusion stages") {
    const auto r = run_experiment(quick(Method::ale)).front();
    for (const auto& run : r.runs) {
      CHECK(run.stages == std::vector<std::string>{"train_classifier", "evaluate"});
      CHECK(run.synthetic_count == 0);
    }
  }
  SUBCASE("a single repetition has zero spread") {
    auto c = quick(Method::ale);
    c.repetitions = 1;
    CHECK(run_experiment(c).front().std == 0.0);
  }
  SUBCASE("threads do not change results") {
    auto c = quick(Method::zerodiffusion);
    const auto serial = run_experiment(c).front();
    c.threads = 3;
    const auto parallel = run_experiment(c).front();
    CHECK(serial.accuracies() == parallel.accuracies());
    CHECK(report_from_json(report_to_json(serial)).config_fingerprint == parallel.config_fingerprint);
  }
  SUBCASE("stage failures are recorded per seed") {
    auto c = quick(Method::zerodiffusion);
    c.diffusion.learning_rate = std::numeric_limits<double>::infinity();
    const auto r = run_experiment(c).front();
    CHECK_FALSE(r.complete);
    for (const auto& run : r.runs) {
      CHECK(run.failed_stage == "train_diffusion");
      CHECK(run.error_kind == "numerical");
    }
  }
  SUBCASE("builtin partition with file data") {
    // Tiny GTZAN-shaped files: 10 labels, 4 records each, 3-dim vectors.
    const fs::path dir = fs::temp_directory_path() / "zerodiff_unit_gtzan";
    fs::create_directories(dir);
    FeatureTable features;
    ClassTable classes;
    Rng rng(1);
    for (const auto& label : builtin_labels("gtzan")) {
      classes.push_back({label, {}, {rng.normal(), rng.normal()}});
      for (int i = 0; i < 4; ++i)
        features.push_back({label + std::to_string(i), label, {rng.normal(), rng.normal(), rng.normal()}});
    }
    write_feature_table(dir / "f.jsonl", features);
    write_class_table(dir / "c.jsonl", classes);
    std::ofstream(dir / "cfg.json") << R"({"repetitions": 2, "data": {"features": "f.jsonl", "classes": "c.jsonl"},
      "partition": {"builtin": "gtzan"}, "diffusion": {"epochs": 2, "batch_size": 8},
      "classifier": {"hidden_dim": 4, "epochs": 2}})";
    const auto reports = run_experiment(load_config(dir / "cfg.json"));
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].partition == "val");
    CHECK(reports[0].complete);
    CHECK(reports[0].runs[0].synthetic_count == 12);
    fs::remove_all(dir);
  }
}

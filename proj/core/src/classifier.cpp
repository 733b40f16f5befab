#include "zerodiff/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "batching.hpp"
#include "binary_io.hpp"
#include "zerodiff/errors.hpp"
#include "zerodiff/rng.hpp"

namespace zdiff {

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double limit) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-limit, limit);
  return m;
}

void check_targets(const Matrix& logits, std::span<const std::size_t> targets) {
  if (targets.size() != logits.rows()) {
    throw DimensionError("loss: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(logits.rows()) + " logit rows");
  }
  for (std::size_t t : targets) {
    if (t >= logits.cols()) throw DimensionError("loss: target index " + std::to_string(t) + " out of range");
  }
}

}  // namespace

CompatibilityModel CompatibilityModel::initialized(CompatibilityVariant variant,
                                                   std::size_t feature_dim, std::size_t class_dim,
                                                   std::size_t hidden_dim, Rng& rng) {
  CompatibilityModel m;
  m.variant = variant;
  m.feature_dim = feature_dim;
  m.class_dim = class_dim;
  const double lf = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  if (variant == CompatibilityVariant::nonlinear) {
    if (hidden_dim == 0) throw ConfigError("compatibility model: hidden_dim must be >= 1");
    m.hidden_dim = hidden_dim;
    m.a = uniform_matrix(rng, feature_dim, hidden_dim, lf);
    m.b = uniform_matrix(rng, hidden_dim, class_dim, 1.0 / std::sqrt(static_cast<double>(hidden_dim)));
  } else {
    m.w = uniform_matrix(rng, feature_dim, class_dim, lf);
  }
  return m;
}

ParamList CompatibilityModel::parameters() {
  if (variant == CompatibilityVariant::nonlinear) return {{"compat.A", a}, {"compat.B", b}};
  return {{"compat.W", w}};
}

Matrix project_features(const CompatibilityModel& model, const Matrix& features,
                        ProjectionCache* cache) {
  if (features.cols() != model.feature_dim) {
    throw DimensionError("compatibility model expects feature dimension " +
                         std::to_string(model.feature_dim) + ", got " + features.shape_string());
  }
  Matrix projected;
  if (model.variant == CompatibilityVariant::nonlinear) {
    Matrix hidden = tanh_act(matmul(features, model.a)).value;
    projected = matmul(hidden, model.b);
    if (cache != nullptr) cache->hidden = std::move(hidden);
  } else {
    projected = matmul(features, model.w);
  }
  if (cache != nullptr) {
    cache->features = features;
    cache->projected = projected;
  }
  return projected;
}

double score(const CompatibilityModel& model, std::span<const double> feature,
             std::span<const double> class_vec) {
  if (class_vec.size() != model.class_dim) {
    throw DimensionError("score: class dimension " + std::to_string(class_vec.size()) +
                         ", model expects " + std::to_string(model.class_dim));
  }
  const Matrix p = project_features(model, Matrix::row_vector(feature));
  double s = 0.0;
  for (std::size_t k = 0; k < class_vec.size(); ++k) s += p(0, k) * class_vec[k];
  return s;
}

Matrix logits(const CompatibilityModel& model, const Matrix& features, const Matrix& classes) {
  if (classes.cols() != model.class_dim) {
    throw DimensionError("logits: class matrix " + classes.shape_string() + ", model expects " +
                         std::to_string(model.class_dim) + " columns");
  }
  if (classes.rows() == 0) throw DimensionError("logits: no candidate classes");
  return matmul_nt(project_features(model, features), classes);
}

std::vector<double> logits(const CompatibilityModel& model, std::span<const double> feature,
                           const Matrix& classes) {
  const Matrix l = logits(model, Matrix::row_vector(feature), classes);
  return {l.row(0).begin(), l.row(0).end()};
}

void logits_backward(const CompatibilityModel& model, const ProjectionCache& cache,
                     const Matrix& classes, const Matrix& grad_logits, GradientTape& grads) {
  const Matrix d_proj = matmul(grad_logits, classes);
  if (model.variant == CompatibilityVariant::nonlinear) {
    grads.accumulate(1, matmul_tn(cache.hidden, d_proj));
    Matrix d_hidden = matmul_nt(d_proj, model.b);
    auto g = d_hidden.values();
    auto h = cache.hidden.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - h[i] * h[i];
    grads.accumulate(0, matmul_tn(cache.features, d_hidden));
  } else {
    grads.accumulate(0, matmul_tn(cache.features, d_proj));
  }
}

LossAndGrad cross_entropy_loss(const Matrix& logits, std::span<const std::size_t> targets) {
  check_targets(logits, targets);
  LossAndGrad out{0.0, Matrix(logits.rows(), logits.cols())};
  const double nb = static_cast<double>(logits.rows());
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    auto row = logits.row(b);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = std::log(z);
    out.loss += -(row[targets[b]] - mx - log_z);
    auto g = out.grad.row(b);
    for (std::size_t c = 0; c < row.size(); ++c) g[c] = std::exp(row[c] - mx - log_z) / nb;
    g[targets[b]] -= 1.0 / nb;
  }
  out.loss /= nb;
  return out;
}

LossAndGrad warp_loss(const Matrix& logits, std::span<const std::size_t> targets, Rng& rng) {
  check_targets(logits, targets);
  const std::size_t C = logits.cols();
  if (C < 2) throw DimensionError("warp_loss: need at least 2 classes");
  LossAndGrad out{0.0, Matrix(logits.rows(), C)};
  const double nb = static_cast<double>(logits.rows());

  for (std::size_t b = 0; b < logits.rows(); ++b) {
    const std::size_t t = targets[b];
    const double s_true = logits(b, t);
    // Rivals in random order: a permutation of the C-1 non-target classes.
    std::vector<std::size_t> order = rng.permutation(C - 1);
    std::size_t visits = 0;
    for (std::size_t k : order) {
      const std::size_t rival = k < t ? k : k + 1;
      ++visits;
      const double margin = 1.0 + logits(b, rival) - s_true;
      if (margin > 0.0) {
        const std::size_t rank = (C - 1) / visits;
        double weight = 0.0;
        for (std::size_t i = 1; i <= rank; ++i) weight += 1.0 / static_cast<double>(i);
        out.loss += weight * margin;
        out.grad(b, rival) += weight / nb;
        out.grad(b, t) -= weight / nb;
        break;
      }
    }
  }
  out.loss /= nb;
  return out;
}

void ClassifierTrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("classifier: learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("classifier: weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("classifier: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("classifier: epochs must be >= 1");
  if (variant == CompatibilityVariant::nonlinear && hidden_dim < 1) {
    throw ConfigError("classifier: hidden_dim must be >= 1");
  }
}

CompatibilityModel train_classifier(const FeatureTable& seen, const FeatureTable& synthetic,
                                    const ClassTable& classes, const ClassifierTrainConfig& config,
                                    Rng& rng) {
  config.validate();
  FeatureTable combined = seen;
  combined.insert(combined.end(), synthetic.begin(), synthetic.end());
  if (combined.empty()) throw DataError("train_classifier: no training records");
  validate_feature_table(combined);

  std::vector<std::string> labels;
  std::map<std::string, std::size_t> label_index;
  std::vector<std::size_t> targets(combined.size());
  for (std::size_t i = 0; i < combined.size(); ++i) {
    auto [it, inserted] = label_index.try_emplace(combined[i].class_label, labels.size());
    if (inserted) labels.push_back(combined[i].class_label);
    targets[i] = it->second;
  }
  const Matrix class_rows = class_matrix(classes, labels);
  const Matrix features = feature_matrix(combined);
  if (config.loss == ClassifierLoss::warp && labels.size() < 2) {
    throw DataError("train_classifier: WARP needs at least 2 classes");
  }

  Rng init_rng = rng.derive("classifier.init");
  Rng shuffle_rng = rng.derive("classifier.shuffle");
  Rng warp_rng = rng.derive("classifier.warp");

  CompatibilityModel model = CompatibilityModel::initialized(
      config.variant, features.cols(), class_rows.cols(), config.hidden_dim, init_rng);
  ParamList params = model.parameters();
  GradientTape tape(params);
  AdamState adam(params, AdamConfig{.learning_rate = config.learning_rate,
                                    .weight_decay = config.weight_decay});
  const auto batches = detail::make_batches(combined.size(), config.batch_size);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffle_rng.permutation(combined.size());
    for (const auto& [begin, end] : batches) {
      Matrix x(end - begin, features.cols());
      std::vector<std::size_t> y(end - begin);
      for (std::size_t k = begin; k < end; ++k) {
        auto src = features.row(order[k]);
        std::copy(src.begin(), src.end(), x.row(k - begin).begin());
        y[k - begin] = targets[order[k]];
      }
      ProjectionCache cache;
      const Matrix l = matmul_nt(project_features(model, x, &cache), class_rows);
      const LossAndGrad lg = config.loss == ClassifierLoss::cross_entropy
                                 ? cross_entropy_loss(l, y)
                                 : warp_loss(l, y, warp_rng);
      if (!std::isfinite(lg.loss)) {
        throw NumericalError("train_classifier: non-finite loss at epoch " + std::to_string(epoch));
      }
      tape.zero();
      logits_backward(model, cache, class_rows, lg.grad, tape);
      adam_step(params, tape, adam);
    }
  }
  return model;
}

std::size_t predict_top1_index(const CompatibilityModel& model, std::span<const double> feature,
                               const Matrix& candidates) {
  const auto l = logits(model, feature, candidates);
  return static_cast<std::size_t>(std::max_element(l.begin(), l.end()) - l.begin());
}

std::string predict_top1(const CompatibilityModel& model, std::span<const double> feature,
                         const ClassTable& candidates) {
  if (candidates.empty()) throw DataError("predict_top1: empty candidate set");
  std::vector<std::string> labels;
  for (const auto& c : candidates) labels.push_back(c.label);
  return candidates[predict_top1_index(model, feature, class_matrix(candidates, labels))].label;
}

Evaluation evaluate(const CompatibilityModel& model, const FeatureTable& records,
                    const ClassTable& candidates) {
  if (candidates.empty()) throw DataError("evaluate: empty candidate set");
  if (records.empty()) throw DataError("evaluate: no test records");
  std::vector<std::string> labels;
  for (const auto& c : candidates) labels.push_back(c.label);
  const Matrix cand = class_matrix(candidates, labels);
  const Matrix l = logits(model, feature_matrix(records), cand);

  std::map<std::string, std::pair<std::size_t, std::size_t>> per_class;  // correct, total
  Evaluation e;
  for (std::size_t r = 0; r < records.size(); ++r) {
    auto row = l.row(r);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const bool ok = labels[best] == records[r].class_label;
    e.correct += ok ? 1 : 0;
    auto& pc = per_class[records[r].class_label];
    pc.first += ok ? 1 : 0;
    pc.second += 1;
  }
  e.total = records.size();
  e.accuracy = static_cast<double>(e.correct) / static_cast<double>(e.total);
  double sum = 0.0;
  for (const auto& [_, pc] : per_class) sum += static_cast<double>(pc.first) / static_cast<double>(pc.second);
  e.balanced_accuracy = sum / static_cast<double>(per_class.size());
  return e;
}

void save_classifier_checkpoint(const std::filesystem::path& path, const CompatibilityModel& model,
                                const CheckpointMeta& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    detail::write_magic(out, "ZDCM");
    detail::write_le<std::uint16_t>(out, kCheckpointVersion);
    detail::write_le<std::uint8_t>(out, model.variant == CompatibilityVariant::nonlinear ? 0 : 1);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.feature_dim));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.class_dim));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.hidden_dim));
    if (model.variant == CompatibilityVariant::nonlinear) {
      detail::write_matrix_f32(out, model.a);
      detail::write_matrix_f32(out, model.b);
    } else {
      detail::write_matrix_f32(out, model.w);
    }
  }
  nlohmann::ordered_json side;
  side["format"] = "ZDCM";
  side["variant"] = model.variant == CompatibilityVariant::nonlinear ? "nonlinear" : "bilinear";
  side["config_fingerprint"] = meta.config_fingerprint;
  side["seed"] = meta.seed;
  side["config"] = nlohmann::ordered_json::parse(meta.config_json);
  std::ofstream js(path.string() + ".json", std::ios::trunc);
  if (!js) throw DataError("cannot write " + path.string() + ".json");
  js << side.dump(2) << '\n';
}

CompatibilityModel load_classifier_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  detail::expect_magic(in, "ZDCM");
  const auto version = detail::read_le<std::uint16_t>(in, "version");
  if (version != kCheckpointVersion) throw FormatError("unsupported ZDCM version " + std::to_string(version));
  const auto tag = detail::read_le<std::uint8_t>(in, "variant");
  if (tag > 1) throw FormatError("unknown ZDCM variant tag " + std::to_string(tag));
  CompatibilityModel m;
  m.variant = tag == 0 ? CompatibilityVariant::nonlinear : CompatibilityVariant::bilinear;
  m.feature_dim = detail::read_le<std::uint32_t>(in, "feature_dim");
  m.class_dim = detail::read_le<std::uint32_t>(in, "class_dim");
  m.hidden_dim = detail::read_le<std::uint32_t>(in, "hidden_dim");
  if (m.variant == CompatibilityVariant::nonlinear) {
    m.a = detail::read_matrix_f32(in, m.feature_dim, m.hidden_dim, "A");
    m.b = detail::read_matrix_f32(in, m.hidden_dim, m.class_dim, "B");
  } else {
    m.w = detail::read_matrix_f32(in, m.feature_dim, m.class_dim, "W");
  }
  return m;
}

}  // namespace zdiff

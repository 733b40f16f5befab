#include "zerodiff/diffusion.hpp"

#include <cstdio>
#include <fstream>
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

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto s = src.row(idx[i]);
    std::copy(s.begin(), s.end(), out.row(i).begin());
  }
  return out;
}

void check_p(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError("corrupt: epoch percentage must lie in [0, 1], got " + std::to_string(p));
  }
}

}  // namespace

DiffusionModel DiffusionModel::zeros(DiffusionDims dims, double dropout_rate, double leaky_slope) {
  DiffusionModel m;
  m.dims = dims;
  m.dropout_rate = dropout_rate;
  m.leaky_slope = leaky_slope;
  m.w1 = Matrix(dims.input_dim(), dims.hidden_dim);
  m.b1 = Matrix(1, dims.hidden_dim);
  m.w2 = Matrix(dims.hidden_dim, dims.feature_dim);
  m.b2 = Matrix(1, dims.feature_dim);
  return m;
}

DiffusionModel DiffusionModel::initialized(DiffusionDims dims, Rng& rng, double dropout_rate,
                                           double leaky_slope) {
  DiffusionModel m = zeros(dims, dropout_rate, leaky_slope);
  const double l1 = 1.0 / std::sqrt(static_cast<double>(dims.input_dim()));
  const double l2 = 1.0 / std::sqrt(static_cast<double>(dims.hidden_dim));
  m.w1 = uniform_matrix(rng, dims.input_dim(), dims.hidden_dim, l1);
  m.b1 = uniform_matrix(rng, 1, dims.hidden_dim, l1);
  m.w2 = uniform_matrix(rng, dims.hidden_dim, dims.feature_dim, l2);
  m.b2 = uniform_matrix(rng, 1, dims.feature_dim, l2);
  return m;
}

ParamList DiffusionModel::parameters() {
  return {{"diffusion.w1", w1}, {"diffusion.b1", b1}, {"diffusion.w2", w2}, {"diffusion.b2", b2}};
}

bool DiffusionModel::all_finite() const {
  return w1.all_finite() && b1.all_finite() && w2.all_finite() && b2.all_finite();
}

double NoiseSchedule::percentage(std::size_t epoch) const {
  if (total_epochs <= 1) return 0.0;
  if (epoch >= total_epochs) throw ConfigError("NoiseSchedule: epoch out of range");
  return static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
}

std::vector<double> corrupt(std::span<const double> feature, double p, Rng& rng, double noise_std) {
  check_p(p);
  std::vector<double> out(feature.begin(), feature.end());
  if (p == 0.0) return out;
  for (double& v : out) v += p * rng.normal(0.0, noise_std);
  return out;
}

Matrix corrupt(const Matrix& features, double p, Rng& rng, double noise_std) {
  check_p(p);
  Matrix out = features;
  if (p == 0.0) return out;
  for (double& v : out.values()) v += p * rng.normal(0.0, noise_std);
  return out;
}

std::vector<double> jitter_class(std::span<const double> class_vec, Rng& rng, double noise_std) {
  std::vector<double> out(class_vec.begin(), class_vec.end());
  if (noise_std == 0.0) return out;
  for (double& v : out) v += rng.normal(0.0, noise_std);
  return out;
}

Matrix jitter_class(const Matrix& class_vecs, Rng& rng, double noise_std) {
  Matrix out = class_vecs;
  if (noise_std == 0.0) return out;
  for (double& v : out.values()) v += rng.normal(0.0, noise_std);
  return out;
}

Matrix denoise_forward(const DiffusionModel& model, const Matrix& noisy_features,
                       const Matrix& class_vecs, Rng& dropout_rng, bool training,
                       DenoiseCache* cache) {
  if (noisy_features.cols() != model.dims.feature_dim || class_vecs.cols() != model.dims.class_dim ||
      noisy_features.rows() != class_vecs.rows()) {
    throw DimensionError("denoise_forward: features " + noisy_features.shape_string() +
                         " and classes " + class_vecs.shape_string() + " do not fit model " +
                         std::to_string(model.dims.feature_dim) + "+" +
                         std::to_string(model.dims.class_dim));
  }
  Matrix input = hconcat(noisy_features, class_vecs);
  Activation act = leaky_relu(affine_forward(input, model.w1, model.b1), model.leaky_slope);
  DropoutResult drop = dropout(act.value, model.dropout_rate, dropout_rng, training);
  Activation out = tanh_act(affine_forward(drop.value, model.w2, model.b2));
  if (cache != nullptr) {
    cache->input = std::move(input);
    cache->hidden_derivative = std::move(act.derivative);
    cache->dropout_mask = std::move(drop.mask);
    cache->dropout_scale = drop.scale;
    cache->hidden = std::move(drop.value);
    cache->output = out.value;
  }
  return std::move(out.value);
}

void denoise_backward(const DiffusionModel& model, const DenoiseCache& cache,
                      const Matrix& grad_output, GradientTape& grads) {
  if (!grad_output.same_shape(cache.output)) {
    throw DimensionError("denoise_backward: gradient shape " + grad_output.shape_string());
  }
  Matrix d_pre2 = grad_output;
  {
    auto g = d_pre2.values();
    auto o = cache.output.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - o[i] * o[i];
  }
  AffineGrads l2 = affine_backward(cache.hidden, model.w2, d_pre2);
  Matrix d_pre1 = std::move(l2.input);
  {
    auto g = d_pre1.values();
    auto m = cache.dropout_mask.values();
    auto s = cache.hidden_derivative.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= m[i] * cache.dropout_scale * s[i];
  }
  AffineGrads l1 = affine_backward(cache.input, model.w1, d_pre1);
  grads.accumulate(0, l1.weight);
  grads.accumulate(1, l1.bias);
  grads.accumulate(2, l2.weight);
  grads.accumulate(3, l2.bias);
}

void DiffusionTrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("diffusion: learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("diffusion: weight_decay must be >= 0");
  if (batch_size < 2) throw ConfigError("diffusion: batch_size must be >= 2");
  if (epochs < 1) throw ConfigError("diffusion: epochs must be >= 1");
  if (!(clip_max_norm > 0.0)) throw ConfigError("diffusion: clip_max_norm must be positive");
  if (noise_std < 0.0 || jitter_std < 0.0) throw ConfigError("diffusion: noise must be >= 0");
  if (hidden_dim < 1) throw ConfigError("diffusion: hidden_dim must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("diffusion: dropout_rate must lie in [0, 1)");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("diffusion: leaky_slope must lie in (0, 1)");
  weights.validate();
}

DiffusionTrainResult train_diffusion(const FeatureTable& seen, const ClassTable& classes,
                                     const DiffusionTrainConfig& config, Rng& rng) {
  config.validate();
  if (seen.size() < 2) throw DataError("train_diffusion: need at least 2 seen records");
  validate_feature_table(seen);

  // Map each record to a row of the class matrix.
  std::vector<std::string> labels;
  std::map<std::string, std::size_t> label_row;
  std::vector<std::size_t> record_class(seen.size());
  for (std::size_t i = 0; i < seen.size(); ++i) {
    auto [it, inserted] = label_row.try_emplace(seen[i].class_label, labels.size());
    if (inserted) {
      if (find_class(classes, seen[i].class_label) == nullptr) {
        throw DataError("train_diffusion: no class embedding for class '" + seen[i].class_label + "'");
      }
      labels.push_back(seen[i].class_label);
    }
    record_class[i] = it->second;
  }
  const Matrix class_rows = class_matrix(classes, labels);
  const Matrix features = feature_matrix(seen);

  DiffusionDims dims{features.cols(), class_rows.cols(), config.hidden_dim};
  Rng init_rng = rng.derive("diffusion.init");
  Rng shuffle_rng = rng.derive("diffusion.shuffle");
  Rng noise_rng = rng.derive("diffusion.noise");
  Rng jitter_rng = rng.derive("diffusion.jitter");
  Rng dropout_rng = rng.derive("diffusion.dropout");

  DiffusionTrainResult result;
  result.model = DiffusionModel::initialized(dims, init_rng, config.dropout_rate, config.leaky_slope);
  ParamList params = result.model.parameters();
  GradientTape tape(params);
  AdamState adam(params, AdamConfig{.learning_rate = config.learning_rate,
                                    .weight_decay = config.weight_decay});
  const NoiseSchedule schedule{config.epochs};
  const auto batches = detail::make_batches(seen.size(), config.batch_size, 2);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochStats stats;
    stats.epoch = epoch;
    stats.p = schedule.percentage(epoch);
    const auto order = shuffle_rng.permutation(seen.size());

    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto [begin, end] = batches[bi];
      std::span<const std::size_t> idx(order.data() + begin, end - begin);
      std::vector<std::size_t> cls_idx(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) cls_idx[k] = record_class[idx[k]];

      const Matrix clean = gather_rows(features, idx);
      const Matrix noisy = corrupt(clean, stats.p, noise_rng, config.noise_std);
      const Matrix cond = jitter_class(gather_rows(class_rows, cls_idx), jitter_rng, config.jitter_std);

      DenoiseCache cache;
      const Matrix generated = denoise_forward(result.model, noisy, cond, dropout_rng, true, &cache);
      const std::string where = " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi);
      if (!generated.all_finite()) throw NumericalError("train_diffusion: non-finite output" + where);
      const DiffusionLoss loss = diffusion_loss(generated, clean, config.weights);
      if (!std::isfinite(loss.total)) throw NumericalError("train_diffusion: non-finite loss" + where);

      tape.zero();
      denoise_backward(result.model, cache, loss.grad, tape);
      stats.grad_norm += clip_global_norm(tape, config.clip_max_norm);
      adam_step(params, tape, adam);

      stats.components.reconstruction += loss.components.reconstruction;
      stats.components.mmd += loss.components.mmd;
      stats.components.variance += loss.components.variance;
      stats.components.centroid += loss.components.centroid;
      stats.components.cosine += loss.components.cosine;
      stats.total += loss.total;
      ++stats.batches;
    }

    const double n = static_cast<double>(stats.batches);
    stats.components.reconstruction /= n;
    stats.components.mmd /= n;
    stats.components.variance /= n;
    stats.components.centroid /= n;
    stats.components.cosine /= n;
    stats.total /= n;
    stats.grad_norm /= n;
    result.trace.push_back(stats);
  }
  if (!result.model.all_finite()) throw NumericalError("train_diffusion: non-finite parameters");
  return result;
}

FeatureTable generate_unseen(const DiffusionModel& model, const ClassTable& unseen_classes,
                             const GenerationConfig& config, Rng& rng) {
  if (config.noise_std < 0.0) throw ConfigError("generate_unseen: noise_std must be >= 0");
  FeatureTable out;
  if (config.count_per_class == 0) return out;
  Rng noise_rng = rng.derive("generate.noise");
  Rng unused_dropout = rng.derive("generate.dropout");
  out.reserve(unseen_classes.size() * config.count_per_class);

  for (const auto& cls : unseen_classes) {
    if (cls.vector.size() != model.dims.class_dim) {
      throw DimensionError("generate_unseen: class '" + cls.label + "' has dimension " +
                           std::to_string(cls.vector.size()));
    }
    Matrix cond(config.count_per_class, model.dims.class_dim);
    for (std::size_t r = 0; r < cond.rows(); ++r)
      std::copy(cls.vector.begin(), cls.vector.end(), cond.row(r).begin());

    Matrix x = gaussian_sample(noise_rng, config.count_per_class, model.dims.feature_dim, 0.0,
                               config.noise_std);
    x = denoise_forward(model, x, cond, unused_dropout, false);
    const std::size_t k = config.refinement_steps;
    for (std::size_t s = 1; s <= k; ++s) {
      const double p = static_cast<double>(k - s + 1) / static_cast<double>(k + 1);
      x = denoise_forward(model, corrupt(x, p, noise_rng, config.noise_std), cond, unused_dropout, false);
    }

    for (std::size_t r = 0; r < x.rows(); ++r) {
      char id[32];
      std::snprintf(id, sizeof id, "/%06zu", r);
      out.push_back({"synthetic/" + cls.label + id, cls.label,
                     std::vector<double>(x.row(r).begin(), x.row(r).end())});
    }
  }
  return out;
}

void save_diffusion_checkpoint(const std::filesystem::path& path, const DiffusionModel& model,
                               const CheckpointMeta& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    detail::write_magic(out, "ZDDM");
    detail::write_le<std::uint16_t>(out, kCheckpointVersion);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.dims.feature_dim));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.dims.class_dim));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.dims.hidden_dim));
    detail::write_matrix_f32(out, model.w1);
    detail::write_matrix_f32(out, model.b1);
    detail::write_matrix_f32(out, model.w2);
    detail::write_matrix_f32(out, model.b2);
  }
  nlohmann::ordered_json side;
  side["format"] = "ZDDM";
  side["dropout_rate"] = model.dropout_rate;
  side["leaky_slope"] = model.leaky_slope;
  side["config_fingerprint"] = meta.config_fingerprint;
  side["seed"] = meta.seed;
  side["config"] = nlohmann::ordered_json::parse(meta.config_json);
  std::ofstream js(path.string() + ".json", std::ios::trunc);
  if (!js) throw DataError("cannot write " + path.string() + ".json");
  js << side.dump(2) << '\n';
}

DiffusionModel load_diffusion_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  detail::expect_magic(in, "ZDDM");
  const auto version = detail::read_le<std::uint16_t>(in, "version");
  if (version != kCheckpointVersion) throw FormatError("unsupported ZDDM version " + std::to_string(version));
  DiffusionDims dims;
  dims.feature_dim = detail::read_le<std::uint32_t>(in, "feature_dim");
  dims.class_dim = detail::read_le<std::uint32_t>(in, "class_dim");
  dims.hidden_dim = detail::read_le<std::uint32_t>(in, "hidden_dim");
  DiffusionModel m = DiffusionModel::zeros(dims);
  m.w1 = detail::read_matrix_f32(in, dims.input_dim(), dims.hidden_dim, "w1");
  m.b1 = detail::read_matrix_f32(in, 1, dims.hidden_dim, "b1");
  m.w2 = detail::read_matrix_f32(in, dims.hidden_dim, dims.feature_dim, "w2");
  m.b2 = detail::read_matrix_f32(in, 1, dims.feature_dim, "b2");

  std::ifstream js(path.string() + ".json");
  if (js) {
    const auto side = nlohmann::json::parse(js);
    m.dropout_rate = side.value("dropout_rate", m.dropout_rate);
    m.leaky_slope = side.value("leaky_slope", m.leaky_slope);
  }
  return m;
}

}  // namespace zdiff

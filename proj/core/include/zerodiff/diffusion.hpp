#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "zerodiff/diffusion_loss.hpp"
#include "zerodiff/embedding_io.hpp"
#include "zerodiff/matrix.hpp"
#include "zerodiff/optim.hpp"

namespace zdiff {

class Rng;

// Standard deviation of N(0, 0.1): the noise is specified by its variance.
inline const double kDefaultNoiseStd = std::sqrt(0.1);

struct DiffusionDims {
  std::size_t feature_dim = 128;
  std::size_t class_dim = 300;
  std::size_t hidden_dim = 128;

  std::size_t input_dim() const { return feature_dim + class_dim; }
  friend bool operator==(const DiffusionDims&, const DiffusionDims&) = default;
};

// Conditional denoiser:
//   concat(noisy feature, class) -> affine(hidden) -> leaky ReLU -> dropout
//   -> affine(feature_dim) -> tanh
struct DiffusionModel {
  DiffusionDims dims;
  double dropout_rate = 0.3;
  double leaky_slope = 0.01;
  Matrix w1;  // [input_dim x hidden_dim]
  Matrix b1;  // [1 x hidden_dim]
  Matrix w2;  // [hidden_dim x feature_dim]
  Matrix b2;  // [1 x feature_dim]

  static DiffusionModel zeros(DiffusionDims dims, double dropout_rate = 0.3,
                              double leaky_slope = 0.01);
  // Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static DiffusionModel initialized(DiffusionDims dims, Rng& rng, double dropout_rate = 0.3,
                                    double leaky_slope = 0.01);

  ParamList parameters();
  bool all_finite() const;
};

// Epoch percentage p = epoch / (total_epochs - 1): 0 on the first epoch, 1 on
// the last, 0 throughout when there is a single epoch.
struct NoiseSchedule {
  std::size_t total_epochs = 50;

  double percentage(std::size_t epoch) const;
};

// feature + p * eps with eps ~ N(0, noise_std^2). p must lie in [0, 1]; p == 0
// returns the input unchanged (no draws are consumed).
std::vector<double> corrupt(std::span<const double> feature, double p, Rng& rng,
                            double noise_std = kDefaultNoiseStd);
Matrix corrupt(const Matrix& features, double p, Rng& rng, double noise_std = kDefaultNoiseStd);

// class_vec + eps with eps ~ N(0, noise_std^2). Training only.
std::vector<double> jitter_class(std::span<const double> class_vec, Rng& rng,
                                 double noise_std = kDefaultNoiseStd);
Matrix jitter_class(const Matrix& class_vecs, Rng& rng, double noise_std = kDefaultNoiseStd);

struct DenoiseCache {
  Matrix input;
  Matrix hidden_derivative;  // leaky ReLU slope per element
  Matrix dropout_mask;
  double dropout_scale = 1.0;
  Matrix hidden;  // after dropout
  Matrix output;
};

Matrix denoise_forward(const DiffusionModel& model, const Matrix& noisy_features,
                       const Matrix& class_vecs, Rng& dropout_rng, bool training,
                       DenoiseCache* cache = nullptr);

// Accumulates parameter gradients into `grads`, ordered as model.parameters().
void denoise_backward(const DiffusionModel& model, const DenoiseCache& cache,
                      const Matrix& grad_output, GradientTape& grads);

struct DiffusionTrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  double clip_max_norm = 1.0;
  LossWeights weights;
  double noise_std = kDefaultNoiseStd;
  double jitter_std = kDefaultNoiseStd;
  std::size_t hidden_dim = 128;
  double dropout_rate = 0.3;
  double leaky_slope = 0.01;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double p = 0.0;
  LossComponents components;  // means over the epoch's batches
  double total = 0.0;
  double grad_norm = 0.0;  // mean pre-clip norm
  std::size_t batches = 0;
};

struct DiffusionTrainResult {
  DiffusionModel model;
  std::vector<EpochStats> trace;
};

// Trains on seen-class records. Random streams are derived from `rng` by
// purpose: diffusion.init, diffusion.shuffle, diffusion.noise,
// diffusion.jitter, diffusion.dropout.
DiffusionTrainResult train_diffusion(const FeatureTable& seen, const ClassTable& classes,
                                     const DiffusionTrainConfig& config, Rng& rng);

struct GenerationConfig {
  std::size_t count_per_class = 1;
  double noise_std = kDefaultNoiseStd;
  // Extra denoising passes; pass s of k re-corrupts the previous output at
  // p = (k - s + 1) / (k + 1) before denoising again.
  std::size_t refinement_steps = 0;
};

// Synthetic records for each class: pure noise in the feature slot, the exact
// class vector in the class slot, one forward pass with dropout disabled.
FeatureTable generate_unseen(const DiffusionModel& model, const ClassTable& unseen_classes,
                             const GenerationConfig& config, Rng& rng);

struct CheckpointMeta {
  std::string config_fingerprint;
  std::uint64_t seed = 0;
  std::string config_json = "{}";
};

// Binary "ZDDM": magic, u16 version, u32 feature/class/hidden dims, then
// w1, b1, w2, b2 as little-endian float32. A JSON sidecar (path + ".json")
// records dropout, slope, fingerprint, seed and the training config.
void save_diffusion_checkpoint(const std::filesystem::path& path, const DiffusionModel& model,
                               const CheckpointMeta& meta);
DiffusionModel load_diffusion_checkpoint(const std::filesystem::path& path);

}  // namespace zdiff

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "zerodiff/diffusion.hpp"
#include "zerodiff/embedding_io.hpp"
#include "zerodiff/matrix.hpp"
#include "zerodiff/optim.hpp"

namespace zdiff {

class Rng;

enum class CompatibilityVariant { nonlinear, bilinear };

// Bias-free compatibility scorer, defined for any class vector:
//   nonlinear: f(w, z) = (B^T tanh(A^T w))^T z   A: [feature x hidden], B: [hidden x class]
//   bilinear:  f(w, z) = w^T W z                  W: [feature x class]
// A, B and W are stored input-major so a batch of features maps through them
// by right multiplication.
struct CompatibilityModel {
  CompatibilityVariant variant = CompatibilityVariant::nonlinear;
  std::size_t feature_dim = 0;
  std::size_t class_dim = 0;
  std::size_t hidden_dim = 0;
  Matrix a;
  Matrix b;
  Matrix w;

  // Entries ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static CompatibilityModel initialized(CompatibilityVariant variant, std::size_t feature_dim,
                                        std::size_t class_dim, std::size_t hidden_dim, Rng& rng);

  ParamList parameters();
};

// Projection of features into class space, [batch x class_dim]; logits are
// this projection times the class vectors.
struct ProjectionCache {
  Matrix features;
  Matrix hidden;  // tanh(features * A), nonlinear only
  Matrix projected;
};

Matrix project_features(const CompatibilityModel& model, const Matrix& features,
                        ProjectionCache* cache = nullptr);

double score(const CompatibilityModel& model, std::span<const double> feature,
             std::span<const double> class_vec);

// [batch x C] with logits(b, c) = score(features[b], classes[c]).
Matrix logits(const CompatibilityModel& model, const Matrix& features, const Matrix& classes);
std::vector<double> logits(const CompatibilityModel& model, std::span<const double> feature,
                           const Matrix& classes);

// Accumulates d loss / d params, given d loss / d logits, into `grads`
// (ordered as model.parameters()).
void logits_backward(const CompatibilityModel& model, const ProjectionCache& cache,
                     const Matrix& classes, const Matrix& grad_logits, GradientTape& grads);

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;  // d loss / d logits
};

// Softmax cross-entropy averaged over the batch (max-subtracted).
LossAndGrad cross_entropy_loss(const Matrix& logits, std::span<const std::size_t> targets);

// WARP: for each sample the rivals are visited in a random order until the
// first margin violation 1 + s_rival - s_true > 0; with N visits the rank is
// estimated as floor((C - 1) / N) and the sample loss is
// L(rank) * (1 + s_rival - s_true), L(k) = sum_{i<=k} 1/i. Averaged over the
// batch. Visiting without replacement means a sample scores 0 only when every
// rival is beaten by the margin.
LossAndGrad warp_loss(const Matrix& logits, std::span<const std::size_t> targets, Rng& rng);

enum class ClassifierLoss { cross_entropy, warp };

struct ClassifierTrainConfig {
  ClassifierLoss loss = ClassifierLoss::cross_entropy;
  CompatibilityVariant variant = CompatibilityVariant::nonlinear;
  std::size_t hidden_dim = 300;
  double learning_rate = 1e-4;
  double weight_decay = 1e-5;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;

  void validate() const;
};

// Trains on seen + synthetic records together; the class universe is every
// class present in the combined table. Random streams: classifier.init,
// classifier.shuffle, classifier.warp.
CompatibilityModel train_classifier(const FeatureTable& seen, const FeatureTable& synthetic,
                                    const ClassTable& classes, const ClassifierTrainConfig& config,
                                    Rng& rng);

// Index of the highest-scoring candidate row; ties go to the lowest index.
std::size_t predict_top1_index(const CompatibilityModel& model, std::span<const double> feature,
                               const Matrix& candidates);
std::string predict_top1(const CompatibilityModel& model, std::span<const double> feature,
                         const ClassTable& candidates);

struct Evaluation {
  double accuracy = 0.0;           // micro-averaged over records
  double balanced_accuracy = 0.0;  // mean of per-class accuracies
  std::size_t correct = 0;
  std::size_t total = 0;
};

// Top-1 accuracy of `records` against the candidate classes only.
Evaluation evaluate(const CompatibilityModel& model, const FeatureTable& records,
                    const ClassTable& candidates);

// Binary "ZDCM": magic, u16 version, u8 variant (0 nonlinear, 1 bilinear),
// u32 feature/class/hidden dims, then A, B (nonlinear) or W (bilinear) as
// little-endian float32. JSON sidecar at path + ".json".
void save_classifier_checkpoint(const std::filesystem::path& path, const CompatibilityModel& model,
                                const CheckpointMeta& meta);
CompatibilityModel load_classifier_checkpoint(const std::filesystem::path& path);

}  // namespace zdiff

#pragma once

#include <optional>

#include "zerodiff/matrix.hpp"

namespace zdiff {

struct LossComponents {
  double reconstruction = 0.0;  // mean squared error
  double mmd = 0.0;             // biased RBF MMD^2
  double variance = 0.0;        // one-sided per-dimension variance deficit
  double centroid = 0.0;        // squared error of batch means
  double cosine = 0.0;          // mean (1 - cos)
};

struct LossWeights {
  double reconstruction = 1.0;
  double mmd = 1.0;
  double variance = 0.1;
  double centroid = 0.2;
  double cosine = 2.0;

  void validate() const;
};

double total_loss(const LossComponents& c, const LossWeights& w);

// Median Euclidean distance over all pairs of the joint batch
// rows(a) + rows(b), floored at 1e-6.
double median_pairwise_distance(const Matrix& a, const Matrix& b);

// Biased (V-statistic) MMD^2 with k(a,b) = exp(-|a-b|^2 / (2 h^2)).
double rbf_mmd2(const Matrix& x, const Matrix& y, double bandwidth);

struct DiffusionLoss {
  LossComponents components;
  double total = 0.0;
  double bandwidth = 0.0;
  Matrix grad;  // d total / d generated
};

// Five-term reconstruction loss of `generated` against `real` (both [B x D],
// B >= 2). With no explicit bandwidth the median heuristic is used; either
// way the bandwidth is a constant for the gradient. A zero-norm row in either
// batch contributes 0 to the cosine term.
DiffusionLoss diffusion_loss(const Matrix& generated, const Matrix& real,
                             const LossWeights& weights,
                             std::optional<double> bandwidth = std::nullopt);

LossComponents loss_components(const Matrix& generated, const Matrix& real,
                               std::optional<double> bandwidth = std::nullopt);

}  // namespace zdiff

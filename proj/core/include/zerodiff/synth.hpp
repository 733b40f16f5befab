#pragma once

#include <cstddef>

#include "zerodiff/embedding_io.hpp"
#include "zerodiff/matrix.hpp"
#include "zerodiff/partitions.hpp"

namespace zdiff {

class Rng;

// Gaussian-cluster stand-in for a real embedding dataset.
//
// Centroids are mu_c = L u_c with u_c ~ U(-1,1)^latent_dim and L a fixed
// random [feature_dim x latent_dim] map whose rows have L1 norm below
// centroid_bound, so every coordinate lies strictly inside
// (-centroid_bound, centroid_bound). latent_dim == 0 draws every coordinate
// independently from U(-centroid_bound, centroid_bound) instead.
//
// Class vectors are z_c = G mu_c + N(0, coupling_noise^2) for a fixed random
// [class_dim x feature_dim] map G, scaled so the noise-free class vectors
// have RMS entry class_scale. Records are mu_c + N(0, feature_noise^2).
struct SynthConfig {
  std::size_t seen_classes = 8;
  std::size_t unseen_classes = 2;
  std::size_t samples_per_class = 100;
  std::size_t feature_dim = 128;
  std::size_t class_dim = 32;
  std::size_t latent_dim = 4;
  double centroid_bound = 0.8;
  double feature_noise = 0.5;
  double coupling_noise = 0.05;
  double class_scale = 1.0;
};

struct SynthBenchmark {
  FeatureTable features;
  ClassTable classes;
  PartitionSpec partition;  // first seen_classes labels seen, rest unseen
  Matrix coupling;          // G, [class_dim x feature_dim]
  Matrix centroids;         // [classes x feature_dim], one row per label
};

SynthBenchmark synth_benchmark(const SynthConfig& config, Rng& rng);

}  // namespace zdiff

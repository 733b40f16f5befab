#include "zerodiff/synth.hpp"

#include <cmath>
#include <cstdio>

#include "zerodiff/errors.hpp"
#include "zerodiff/rng.hpp"

namespace zdiff {

namespace {

std::string class_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "class_%02zu", i);
  return buf;
}

void check(const SynthConfig& c) {
  if (c.seen_classes < 2) throw ConfigError("synth: need at least 2 seen classes");
  if (c.unseen_classes < 2) throw ConfigError("synth: need at least 2 unseen classes");
  if (c.samples_per_class < 1) throw ConfigError("synth: samples_per_class must be >= 1");
  if (c.feature_dim < 1 || c.class_dim < 1) throw ConfigError("synth: dimensions must be >= 1");
  if (c.latent_dim > c.feature_dim) throw ConfigError("synth: latent_dim exceeds feature_dim");
  if (!(c.centroid_bound > 0.0 && c.centroid_bound <= 1.0)) {
    throw ConfigError("synth: centroid_bound must lie in (0, 1]");
  }
  if (c.feature_noise < 0.0 || c.coupling_noise < 0.0 || !(c.class_scale > 0.0)) {
    throw ConfigError("synth: noise levels must be >= 0 and class_scale > 0");
  }
}

}  // namespace

SynthBenchmark synth_benchmark(const SynthConfig& config, Rng& rng) {
  check(config);
  const std::size_t n_classes = config.seen_classes + config.unseen_classes;
  Rng centroid_rng = rng.derive("synth.centroids");
  Rng coupling_rng = rng.derive("synth.coupling");
  Rng class_noise_rng = rng.derive("synth.class_noise");
  Rng feature_rng = rng.derive("synth.features");

  SynthBenchmark b;
  b.centroids = Matrix(n_classes, config.feature_dim);
  if (config.latent_dim == 0) {
    for (double& v : b.centroids.values())
      v = centroid_rng.uniform(-config.centroid_bound, config.centroid_bound);
  } else {
    // Strict inequality: |L u| <= sum |L_ij| < bound since |L_ij| < bound/k.
    const double lim = config.centroid_bound / static_cast<double>(config.latent_dim);
    Matrix loading(config.latent_dim, config.feature_dim);
    for (double& v : loading.values()) v = centroid_rng.uniform(-lim, lim);
    Matrix latent(n_classes, config.latent_dim);
    for (double& v : latent.values()) v = centroid_rng.uniform(-1.0, 1.0);
    b.centroids = matmul(latent, loading);
  }

  b.coupling = gaussian_sample(coupling_rng, config.class_dim, config.feature_dim, 0.0, 1.0);
  Matrix clean = matmul_nt(b.centroids, b.coupling);  // [classes x class_dim]
  const double rms = std::sqrt(sum_of_squares(clean) / static_cast<double>(clean.size()));
  const double gain = rms > 0.0 ? config.class_scale / rms : 1.0;
  for (double& v : b.coupling.values()) v *= gain;
  for (double& v : clean.values()) v *= gain;

  for (std::size_t c = 0; c < n_classes; ++c) {
    ClassEmbedding ce;
    ce.label = class_name(c);
    ce.vector.assign(clean.row(c).begin(), clean.row(c).end());
    for (double& v : ce.vector) v += class_noise_rng.normal(0.0, config.coupling_noise);
    b.classes.push_back(std::move(ce));
    (c < config.seen_classes ? b.partition.seen : b.partition.unseen).push_back(class_name(c));
  }
  b.partition.name = "synthetic";

  b.features.reserve(n_classes * config.samples_per_class);
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t i = 0; i < config.samples_per_class; ++i) {
      EmbeddingRecord r;
      char id[48];
      std::snprintf(id, sizeof id, "%s/%04zu", class_name(c).c_str(), i);
      r.id = id;
      r.class_label = class_name(c);
      r.vector.assign(b.centroids.row(c).begin(), b.centroids.row(c).end());
      if (config.feature_noise > 0.0)
        for (double& v : r.vector) v += feature_rng.normal(0.0, config.feature_noise);
      b.features.push_back(std::move(r));
    }
  }
  return b;
}

}  // namespace zdiff

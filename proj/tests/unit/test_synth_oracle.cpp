#include <doctest.h>

#include "support/linear_oracle.hpp"
#include "zerodiff/classifier.hpp"
#include "zerodiff/rng.hpp"

using namespace zdiff;

TEST_CASE("the default benchmark is decodable by a linear map") {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    total += testing::linear_decoder_accuracy(synth_benchmark({}, rng));
  }
  CHECK(total / 10.0 >= 0.9);
}

TEST_CASE("zero noise makes the oracle exact") {
  SynthConfig c;
  c.feature_noise = 0.0;
  c.coupling_noise = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    CHECK(testing::linear_decoder_accuracy(synth_benchmark(c, rng)) == 1.0);
  }
}

TEST_CASE("a compatibility model built from the oracle map classifies every zero-noise unseen record") {
  // A bilinear model whose W is the fitted class-to-feature decoder scores a
  // record against a candidate as w . mu_hat. Normalising each candidate so its
  // decoded mean has unit norm turns that into |w| cos(w, mu_hat), which the
  // true class maximises when records sit exactly on their means.
  SynthConfig c;
  c.feature_noise = 0.0;
  c.coupling_noise = 0.0;
  c.samples_per_class = 3;
  Rng rng(8);
  const SynthBenchmark b = synth_benchmark(c, rng);

  // Decoder from class space to feature space, fitted on seen classes.
  const auto& part = b.partition;
  Eigen::MatrixXd z(part.seen.size(), c.class_dim), m(part.seen.size(), c.feature_dim);
  for (std::size_t i = 0; i < part.seen.size(); ++i) {
    const auto* e = find_class(b.classes, part.seen[i]);
    for (std::size_t j = 0; j < c.class_dim; ++j) z(i, j) = e->vector[j];
    const std::size_t k = i;  // seen labels come first, in centroid order
    for (std::size_t j = 0; j < c.feature_dim; ++j) m(i, j) = b.centroids(k, j);
  }
  const Eigen::MatrixXd dec = z.completeOrthogonalDecomposition().solve(m);  // [class x feature]

  CompatibilityModel model;
  model.variant = CompatibilityVariant::bilinear;
  model.feature_dim = c.feature_dim;
  model.class_dim = c.class_dim;
  model.w = Matrix(c.feature_dim, c.class_dim);
  for (std::size_t i = 0; i < c.feature_dim; ++i)
    for (std::size_t j = 0; j < c.class_dim; ++j) model.w(i, j) = dec(j, i);

  ClassTable candidates;
  for (const auto& label : part.unseen) {
    ClassEmbedding e = *find_class(b.classes, label);
    Eigen::RowVectorXd zz(c.class_dim);
    for (std::size_t j = 0; j < c.class_dim; ++j) zz(j) = e.vector[j];
    const double norm = (zz * dec).norm();
    for (auto& v : e.vector) v /= norm;
    candidates.push_back(std::move(e));
  }
  FeatureTable unseen;
  for (const auto& r : b.features)
    if (r.class_label == part.unseen[0] || r.class_label == part.unseen[1]) unseen.push_back(r);
  const Evaluation e = evaluate(model, unseen, candidates);
  CHECK(e.accuracy == 1.0);
}

#pragma once

#include <algorithm>

#include <Eigen/Dense>

#include "zerodiff/embedding_io.hpp"
#include "zerodiff/synth.hpp"

namespace zdiff::testing {

// Brute-force baseline for the synthetic benchmark, independent of the
// library's models: the minimum-norm least-squares linear map from seen class
// vectors to seen class means, applied to the unseen class vectors, then
// nearest predicted mean among the unseen classes.
inline double linear_decoder_accuracy(const SynthBenchmark& b) {
  const auto& part = b.partition;
  const auto f = static_cast<Eigen::Index>(b.features.front().vector.size());
  const auto k = static_cast<Eigen::Index>(b.classes.front().vector.size());
  auto class_row = [&](const std::string& label) {
    const auto* c = find_class(b.classes, label);
    return Eigen::Map<const Eigen::RowVectorXd>(c->vector.data(), k);
  };

  const auto seen = static_cast<Eigen::Index>(part.seen.size());
  Eigen::MatrixXd z(seen, k);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(seen, f);
  for (Eigen::Index i = 0; i < seen; ++i) {
    const auto& label = part.seen[static_cast<std::size_t>(i)];
    z.row(i) = class_row(label);
    double n = 0.0;
    for (const auto& r : b.features) {
      if (r.class_label != label) continue;
      m.row(i) += Eigen::Map<const Eigen::RowVectorXd>(r.vector.data(), f);
      n += 1.0;
    }
    m.row(i) /= n;
  }
  const Eigen::MatrixXd w = z.completeOrthogonalDecomposition().solve(m);

  const auto unseen = static_cast<Eigen::Index>(part.unseen.size());
  Eigen::MatrixXd predicted(unseen, f);
  for (Eigen::Index u = 0; u < unseen; ++u) predicted.row(u) = class_row(part.unseen[static_cast<std::size_t>(u)]) * w;

  std::size_t correct = 0, total = 0;
  for (const auto& r : b.features) {
    const auto it = std::find(part.unseen.begin(), part.unseen.end(), r.class_label);
    if (it == part.unseen.end()) continue;
    const Eigen::Map<const Eigen::RowVectorXd> x(r.vector.data(), f);
    Eigen::Index best = 0;
    (predicted.rowwise() - x).rowwise().squaredNorm().minCoeff(&best);
    correct += best == it - part.unseen.begin();
    ++total;
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace zdiff::testing

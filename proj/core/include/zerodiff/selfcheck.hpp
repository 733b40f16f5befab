#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zerodiff/classifier.hpp"
#include "zerodiff/gradcheck.hpp"

namespace zdiff {

// Finite-difference check of the full five-term diffusion loss through the
// denoiser (dropout off, bandwidth frozen at the starting point) on a toy
// model: feature dim 6, class dim 8, hidden 5, batch 4.
GradCheckResult check_diffusion_gradient(std::uint64_t seed, double epsilon = 1e-4);

// Finite-difference check of a classifier loss through the compatibility
// function on a toy problem (feature 5, class 4, hidden 3, batch 6, 5 classes).
// WARP rivals are redrawn from the same seed on every evaluation.
GradCheckResult check_classifier_gradient(ClassifierLoss loss, CompatibilityVariant variant,
                                          std::uint64_t seed, double epsilon = 1e-4);

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// Gradient oracles plus the cheap invariants (noise identity at p = 0, MMD
// properties, tanh output bounds, argmax scale invariance).
std::vector<CheckOutcome> run_self_checks(std::uint64_t seed = 0);

}  // namespace zdiff

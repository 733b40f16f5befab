#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "zerodiff/optim.hpp"

namespace zdiff {

// Evaluates the loss at the current parameter values. When `grads` is not
// null the function must also write the analytic gradient into it (the tape
// is zeroed by the caller). Must be deterministic.
using LossFunction = std::function<double(GradientTape* grads)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// Compares the analytic gradient against a fourth-order central difference
//   (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h
// for every parameter entry. The relative error of one entry is
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// Parameters are restored afterwards. Throws NumericalError if two
// evaluations at the same point disagree.
GradCheckResult finite_diff_check(const LossFunction& loss, const ParamList& params,
                                  double epsilon = 1e-4);

}  // namespace zdiff

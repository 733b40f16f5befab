#include "zerodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "zerodiff/errors.hpp"

namespace zdiff {

GradCheckResult finite_diff_check(const LossFunction& loss, const ParamList& params,
                                  double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("finite_diff_check: epsilon must be positive");

  GradientTape analytic(params);
  analytic.zero();
  const double base = loss(&analytic);
  const double again = loss(nullptr);
  if (base != again) {
    throw NumericalError("finite_diff_check: loss is not deterministic at a fixed point");
  }

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].get().values();
    auto grad = analytic[p].values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double original = values[k];
      auto at = [&](double offset) {
        values[k] = original + offset;
        return loss(nullptr);
      };
      const double f_p2 = at(2.0 * epsilon);
      const double f_p1 = at(epsilon);
      const double f_m1 = at(-epsilon);
      const double f_m2 = at(-2.0 * epsilon);
      values[k] = original;

      const double numeric = (-f_p2 + 8.0 * f_p1 - 8.0 * f_m1 + f_m2) / (12.0 * epsilon);
      const double denom = std::max({std::abs(grad[k]), std::abs(numeric), 1e-8});
      const double rel = std::abs(grad[k] - numeric) / denom;
      ++result.checked;
      if (rel > result.max_relative_error || result.checked == 1) {
        result.max_relative_error = rel;
        result.worst_parameter = params[p].name;
        result.worst_index = k;
        result.analytic = grad[k];
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace zdiff

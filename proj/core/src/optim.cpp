#include "zerodiff/optim.hpp"

#include <cmath>

#include "zerodiff/errors.hpp"

namespace zdiff {

GradientTape::GradientTape(const ParamList& params) {
  grads_.reserve(params.size());
  for (const auto& p : params) grads_.emplace_back(p.get().rows(), p.get().cols());
}

void GradientTape::zero() {
  for (auto& g : grads_) g.fill(0.0);
}

void GradientTape::accumulate(std::size_t i, const Matrix& grad) {
  Matrix& slot = grads_.at(i);
  if (!slot.same_shape(grad)) {
    throw DimensionError("GradientTape: slot " + std::to_string(i) + " is " +
                         slot.shape_string() + ", got " + grad.shape_string());
  }
  auto dst = slot.values();
  auto src = grad.values();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

double GradientTape::global_norm() const {
  double s = 0.0;
  for (const auto& g : grads_) s += sum_of_squares(g);
  return std::sqrt(s);
}

AdamState::AdamState(const ParamList& params, AdamConfig config) : config_(config) {
  for (const auto& p : params) {
    m_.emplace_back(p.get().rows(), p.get().cols());
    v_.emplace_back(p.get().rows(), p.get().cols());
  }
}

void adam_step(const ParamList& params, const GradientTape& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m_.size()) {
    throw DimensionError("adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].get().same_shape(grads[i]) || !params[i].get().same_shape(state.m_[i])) {
      throw DimensionError("adam_step: shape mismatch for " + params[i].name);
    }
    if (!grads[i].all_finite()) {
      throw NumericalError("adam_step: non-finite gradient in parameter block '" +
                           params[i].name + "'");
    }
  }

  const AdamConfig& c = state.config_;
  state.step_ += 1;
  const double t = static_cast<double>(state.step_);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const double decay = c.learning_rate * c.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].get().values();
    auto g = grads[i].values();
    auto m = state.m_[i].values();
    auto v = state.v_[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] -= decay * p[k];
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

double clip_global_norm(GradientTape& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_global_norm: max_norm must be positive");
  const double norm = grads.global_norm();
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (std::size_t i = 0; i < grads.size(); ++i)
      for (double& v : grads[i].values()) v *= scale;
  }
  return norm;
}

}  // namespace zdiff

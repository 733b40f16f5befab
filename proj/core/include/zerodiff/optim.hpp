#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "zerodiff/matrix.hpp"

namespace zdiff {

// Named, mutable view onto one trainable tensor of a model.
struct ParamRef {
  std::string name;
  std::reference_wrapper<Matrix> value;

  Matrix& get() const { return value.get(); }
};

using ParamList = std::vector<ParamRef>;

// Gradient accumulators shape-matched to a ParamList.
class GradientTape {
 public:
  GradientTape() = default;
  explicit GradientTape(const ParamList& params);

  void zero();
  std::size_t size() const { return grads_.size(); }
  Matrix& operator[](std::size_t i) { return grads_[i]; }
  const Matrix& operator[](std::size_t i) const { return grads_[i]; }

  // Adds `grad` into slot i; shapes must agree.
  void accumulate(std::size_t i, const Matrix& grad);

  double global_norm() const;

 private:
  std::vector<Matrix> grads_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

class AdamState {
 public:
  AdamState(const ParamList& params, AdamConfig config);

  const AdamConfig& config() const { return config_; }
  std::uint64_t step() const { return step_; }
  const Matrix& first_moment(std::size_t i) const { return m_[i]; }
  const Matrix& second_moment(std::size_t i) const { return v_[i]; }

 private:
  friend void adam_step(const ParamList&, const GradientTape&, AdamState&);

  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::uint64_t step_ = 0;
};

// Decoupled weight decay (p -= lr*wd*p) followed by the bias-corrected Adam
// update. Throws NumericalError naming the first parameter block whose
// gradient is not finite; parameters are left untouched in that case.
void adam_step(const ParamList& params, const GradientTape& grads, AdamState& state);

// Rescales all gradients together when their joint L2 norm exceeds max_norm.
// Returns the norm before clipping.
double clip_global_norm(GradientTape& grads, double max_norm);

}  // namespace zdiff

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace zdiff {

class Rng;

// Dense row-major matrix of doubles. Shapes are checked on every kernel;
// mismatches raise DimensionError.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double value);
  bool all_finite() const;
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix transpose(const Matrix& m);
Matrix matmul(const Matrix& a, const Matrix& b);     // a * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix hconcat(const Matrix& left, const Matrix& right);
Matrix hadamard(const Matrix& a, const Matrix& b);
double sum_of_squares(const Matrix& m);

// ---- layer kernels ---------------------------------------------------------

// output[b] = input[b] * weight + bias; weight is [in x out], bias is [1 x out].
Matrix affine_forward(const Matrix& input, const Matrix& weight, const Matrix& bias);

struct AffineGrads {
  Matrix input;   // upstream * weight^T
  Matrix weight;  // input^T * upstream
  Matrix bias;    // column sums of upstream, [1 x out]
};

AffineGrads affine_backward(const Matrix& input, const Matrix& weight, const Matrix& upstream);

struct Activation {
  Matrix value;
  Matrix derivative;  // elementwise d value / d input
};

// Derivative at exactly 0 takes the negative-branch slope.
Activation leaky_relu(const Matrix& x, double slope = 0.01);
Activation tanh_act(const Matrix& x);

struct DropoutResult {
  Matrix value;
  Matrix mask;  // 1 for kept elements, 0 for dropped
  double scale = 1.0;
};

// Inverted dropout: survivors are scaled by 1/(1-rate) while training and
// inference is the identity.
DropoutResult dropout(const Matrix& x, double rate, Rng& rng, bool training);

Matrix gaussian_sample(Rng& rng, std::size_t rows, std::size_t cols, double mean, double stddev);

}  // namespace zdiff

#include "zerodiff/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "zerodiff/errors.hpp"
#include "zerodiff/rng.hpp"

namespace zdiff {

namespace {

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul", a, b);
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn", a, b);
  Matrix out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* brow = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* o = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += aki * brow[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt", a, b);
  Matrix out(a.rows(), b.rows());
  const std::size_t inner = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.row(j).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += arow[k] * brow[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix hconcat(const Matrix& left, const Matrix& right) {
  require(left.rows() == right.rows(), "hconcat", left, right);
  Matrix out(left.rows(), left.cols() + right.cols());
  for (std::size_t r = 0; r < left.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(left.row(r).begin(), left.row(r).end(), dst.begin());
    std::copy(right.row(r).begin(), right.row(r).end(), dst.begin() + left.cols());
  }
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "hadamard", a, b);
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

double sum_of_squares(const Matrix& m) {
  double s = 0.0;
  for (double v : m.values()) s += v * v;
  return s;
}

Matrix affine_forward(const Matrix& input, const Matrix& weight, const Matrix& bias) {
  require(input.cols() == weight.rows(), "affine_forward", input, weight);
  require(bias.rows() == 1 && bias.cols() == weight.cols(), "affine_forward(bias)", weight, bias);
  Matrix out = matmul(input, weight);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias(0, c);
  }
  return out;
}

AffineGrads affine_backward(const Matrix& input, const Matrix& weight, const Matrix& upstream) {
  require(input.cols() == weight.rows(), "affine_backward", input, weight);
  require(upstream.rows() == input.rows() && upstream.cols() == weight.cols(),
          "affine_backward(upstream)", input, upstream);
  AffineGrads g;
  g.weight = matmul_tn(input, upstream);
  g.input = matmul_nt(upstream, weight);
  g.bias = Matrix(1, upstream.cols());
  for (std::size_t r = 0; r < upstream.rows(); ++r)
    for (std::size_t c = 0; c < upstream.cols(); ++c) g.bias(0, c) += upstream(r, c);
  return g;
}

Activation leaky_relu(const Matrix& x, double slope) {
  Activation a{x, Matrix(x.rows(), x.cols())};
  auto v = a.value.values();
  auto d = a.derivative.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > 0.0) {
      d[i] = 1.0;
    } else {
      v[i] *= slope;
      d[i] = slope;
    }
  }
  return a;
}

Activation tanh_act(const Matrix& x) {
  Activation a{x, Matrix(x.rows(), x.cols())};
  auto v = a.value.values();
  auto d = a.derivative.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = std::tanh(v[i]);
    d[i] = 1.0 - v[i] * v[i];
  }
  return a;
}

DropoutResult dropout(const Matrix& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must lie in [0, 1)");
  DropoutResult r{x, Matrix(x.rows(), x.cols(), 1.0), 1.0};
  if (!training || rate == 0.0) return r;
  r.scale = 1.0 / (1.0 - rate);
  auto v = r.value.values();
  auto m = r.mask.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (rng.bernoulli(rate)) {
      m[i] = 0.0;
      v[i] = 0.0;
    } else {
      v[i] *= r.scale;
    }
  }
  return r;
}

Matrix gaussian_sample(Rng& rng, std::size_t rows, std::size_t cols, double mean, double stddev) {
  if (stddev < 0.0) throw ConfigError("gaussian_sample: negative standard deviation");
  Matrix m(rows, cols, mean);
  if (stddev == 0.0) return m;
  for (double& v : m.values()) v = rng.normal(mean, stddev);
  return m;
}

}  // namespace zdiff

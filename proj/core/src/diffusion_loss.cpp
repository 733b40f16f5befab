#include "zerodiff/diffusion_loss.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "zerodiff/errors.hpp"

namespace zdiff {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

Matrix rbf_kernel(const Matrix& x, const Matrix& y, double bandwidth) {
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  Matrix k(x.rows(), y.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j)
      k(i, j) = std::exp(-squared_distance(x.row(i), y.row(j)) * inv);
  return k;
}

double mean(const Matrix& m) {
  double s = 0.0;
  for (double v : m.values()) s += v;
  return s / static_cast<double>(m.size());
}

}  // namespace

void LossWeights::validate() const {
  if (reconstruction < 0.0 || mmd < 0.0 || variance < 0.0 || centroid < 0.0 || cosine < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  return w.reconstruction * c.reconstruction + w.mmd * c.mmd + w.variance * c.variance +
         w.centroid * c.centroid + w.cosine * c.cosine;
}

double median_pairwise_distance(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("median_pairwise_distance: column mismatch");
  std::vector<std::span<const double>> rows;
  for (std::size_t i = 0; i < a.rows(); ++i) rows.push_back(a.row(i));
  for (std::size_t i = 0; i < b.rows(); ++i) rows.push_back(b.row(i));
  std::vector<double> d;
  d.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      d.push_back(std::sqrt(squared_distance(rows[i], rows[j])));
  if (d.empty()) return 1e-6;
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double med = d[mid];
  if (d.size() % 2 == 0) {
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  return std::max(med, 1e-6);
}

double rbf_mmd2(const Matrix& x, const Matrix& y, double bandwidth) {
  if (x.cols() != y.cols()) throw DimensionError("rbf_mmd2: column mismatch");
  const double v = mean(rbf_kernel(x, x, bandwidth)) + mean(rbf_kernel(y, y, bandwidth)) -
                   2.0 * mean(rbf_kernel(x, y, bandwidth));
  return std::max(v, 0.0);
}

DiffusionLoss diffusion_loss(const Matrix& generated, const Matrix& real,
                             const LossWeights& weights, std::optional<double> bandwidth) {
  if (!generated.same_shape(real)) {
    throw DimensionError("diffusion_loss: generated " + generated.shape_string() + " vs real " +
                         real.shape_string());
  }
  const std::size_t B = generated.rows();
  const std::size_t D = generated.cols();
  if (B < 2) throw ConfigError("diffusion_loss: batch size must be >= 2, got " + std::to_string(B));
  if (!generated.all_finite() || !real.all_finite()) {
    throw NumericalError("diffusion_loss: non-finite values in the generated or real batch");
  }

  const double nb = static_cast<double>(B);
  const double nd = static_cast<double>(D);
  DiffusionLoss out;
  out.grad = Matrix(B, D);
  LossComponents& c = out.components;

  // reconstruction
  {
    const double scale = 2.0 * weights.reconstruction / (nb * nd);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = generated(b, d) - real(b, d);
        c.reconstruction += diff * diff;
        out.grad(b, d) += scale * diff;
      }
    c.reconstruction /= nb * nd;
  }

  // MMD
  {
    const double h = bandwidth.value_or(median_pairwise_distance(generated, real));
    if (!(h > 0.0)) throw ConfigError("diffusion_loss: bandwidth must be positive");
    out.bandwidth = h;
    const Matrix kxx = rbf_kernel(generated, generated, h);
    const Matrix kyy = rbf_kernel(real, real, h);
    const Matrix kxy = rbf_kernel(generated, real, h);
    c.mmd = std::max(mean(kxx) + mean(kyy) - 2.0 * mean(kxy), 0.0);

    const double scale = weights.mmd * 2.0 / (nb * nb * h * h);
    for (std::size_t i = 0; i < B; ++i) {
      auto g = out.grad.row(i);
      auto xi = generated.row(i);
      for (std::size_t j = 0; j < B; ++j) {
        const double wxx = kxx(i, j);
        const double wxy = kxy(i, j);
        auto xj = generated.row(j);
        auto yj = real.row(j);
        for (std::size_t d = 0; d < D; ++d) {
          g[d] += scale * (-wxx * (xi[d] - xj[d]) + wxy * (xi[d] - yj[d]));
        }
      }
    }
  }

  // variance deficit and centroid alignment share the per-dimension means
  {
    for (std::size_t d = 0; d < D; ++d) {
      double mg = 0.0, mr = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        mg += generated(b, d);
        mr += real(b, d);
      }
      mg /= nb;
      mr /= nb;
      double vg = 0.0, vr = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        vg += (generated(b, d) - mg) * (generated(b, d) - mg);
        vr += (real(b, d) - mr) * (real(b, d) - mr);
      }
      vg /= nb;
      vr /= nb;

      const double deficit = vr - vg;
      if (deficit > 0.0) {
        c.variance += deficit;
        const double scale = -weights.variance * 2.0 / (nd * nb);
        for (std::size_t b = 0; b < B; ++b) out.grad(b, d) += scale * (generated(b, d) - mg);
      }

      const double shift = mg - mr;
      c.centroid += shift * shift;
      const double cscale = weights.centroid * 2.0 * shift / (nd * nb);
      for (std::size_t b = 0; b < B; ++b) out.grad(b, d) += cscale;
    }
    c.variance /= nd;
    c.centroid /= nd;
  }

  // cosine
  {
    const double scale = weights.cosine / nb;
    for (std::size_t b = 0; b < B; ++b) {
      auto g = generated.row(b);
      auto r = real.row(b);
      double gg = 0.0, rr = 0.0, gr = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        gg += g[d] * g[d];
        rr += r[d] * r[d];
        gr += g[d] * r[d];
      }
      if (gg == 0.0 || rr == 0.0) continue;
      const double ng = std::sqrt(gg);
      const double nr = std::sqrt(rr);
      const double cos = std::clamp(gr / (ng * nr), -1.0, 1.0);
      c.cosine += 1.0 - cos;
      // d(1 - cos)/dg = -(r / (|g||r|) - cos * g / |g|^2)
      auto grow = out.grad.row(b);
      for (std::size_t d = 0; d < D; ++d) {
        grow[d] += -scale * (r[d] / (ng * nr) - cos * g[d] / gg);
      }
    }
    c.cosine /= nb;
  }

  out.total = total_loss(c, weights);
  return out;
}

LossComponents loss_components(const Matrix& generated, const Matrix& real,
                               std::optional<double> bandwidth) {
  return diffusion_loss(generated, real, LossWeights{}, bandwidth).components;
}

}  // namespace zdiff

#include "zerodiff/selfcheck.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "zerodiff/diffusion.hpp"
#include "zerodiff/diffusion_loss.hpp"
#include "zerodiff/errors.hpp"
#include "zerodiff/rng.hpp"

namespace zdiff {

GradCheckResult check_diffusion_gradient(std::uint64_t seed, double epsilon) {
  Rng rng(seed);
  DiffusionModel model = DiffusionModel::initialized({6, 8, 5}, rng, 0.0);
  const std::size_t batch = 4;
  const Matrix real = gaussian_sample(rng, batch, 6, 0.0, 0.5);
  const Matrix noisy = gaussian_sample(rng, batch, 6, 0.0, 0.5);
  const Matrix cls = gaussian_sample(rng, batch, 8, 0.0, 1.0);
  const LossWeights weights;

  Rng unused(seed);
  const double bandwidth =
      median_pairwise_distance(denoise_forward(model, noisy, cls, unused, false), real);

  ParamList params = model.parameters();
  LossFunction loss = [&](GradientTape* grads) {
    Rng dropout_rng(seed);
    DenoiseCache cache;
    const Matrix out = denoise_forward(model, noisy, cls, dropout_rng, false, &cache);
    const DiffusionLoss l = diffusion_loss(out, real, weights, bandwidth);
    if (grads != nullptr) denoise_backward(model, cache, l.grad, *grads);
    return l.total;
  };
  return finite_diff_check(loss, params, epsilon);
}

GradCheckResult check_classifier_gradient(ClassifierLoss loss_kind, CompatibilityVariant variant,
                                          std::uint64_t seed, double epsilon) {
  Rng rng(seed);
  const std::size_t feature_dim = 5, class_dim = 4, hidden = 3, batch = 6, classes = 5;
  CompatibilityModel model = CompatibilityModel::initialized(variant, feature_dim, class_dim, hidden, rng);
  const Matrix features = gaussian_sample(rng, batch, feature_dim, 0.0, 1.0);
  const Matrix class_vecs = gaussian_sample(rng, classes, class_dim, 0.0, 1.0);
  std::vector<std::size_t> targets(batch);
  for (auto& t : targets) t = rng.uniform_index(classes);

  ParamList params = model.parameters();
  LossFunction loss = [&](GradientTape* grads) {
    ProjectionCache cache;
    const Matrix projected = project_features(model, features, &cache);
    const Matrix scores = matmul_nt(projected, class_vecs);
    Rng warp_rng(seed ^ 0x5741525055ULL);
    const LossAndGrad l = loss_kind == ClassifierLoss::warp ? warp_loss(scores, targets, warp_rng)
                                                            : cross_entropy_loss(scores, targets);
    if (grads != nullptr) logits_backward(model, cache, class_vecs, l.grad, *grads);
    return l.loss;
  };
  return finite_diff_check(loss, params, epsilon);
}

namespace {

std::string describe(const GradCheckResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "max rel err %.3e over %zu entries (worst %s[%zu])",
                r.max_relative_error, r.checked, r.worst_parameter.c_str(), r.worst_index);
  return buf;
}

CheckOutcome timed(std::string name, const std::function<std::pair<bool, std::string>()>& body) {
  CheckOutcome o;
  o.name = std::move(name);
  const auto start = std::chrono::steady_clock::now();
  try {
    auto [ok, detail] = body();
    o.passed = ok;
    o.detail = std::move(detail);
  } catch (const std::exception& e) {
    o.passed = false;
    o.detail = std::string("threw: ") + e.what();
  }
  o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return o;
}

}  // namespace

std::vector<CheckOutcome> run_self_checks(std::uint64_t seed) {
  std::vector<CheckOutcome> out;

  out.push_back(timed("diffusion loss gradient", [&] {
    const auto r = check_diffusion_gradient(seed);
    return std::pair{r.max_relative_error < 1e-4, describe(r)};
  }));

  for (auto loss : {ClassifierLoss::cross_entropy, ClassifierLoss::warp}) {
    for (auto variant : {CompatibilityVariant::nonlinear, CompatibilityVariant::bilinear}) {
      std::string name = std::string(loss == ClassifierLoss::warp ? "warp" : "cross-entropy") +
                         " gradient (" + (variant == CompatibilityVariant::bilinear ? "bilinear" : "nonlinear") +
                         ")";
      out.push_back(timed(name, [&] {
        const auto r = check_classifier_gradient(loss, variant, seed);
        return std::pair{r.max_relative_error < 1e-6, describe(r)};
      }));
    }
  }

  out.push_back(timed("corrupt at p = 0 is the identity", [&] {
    Rng rng(seed);
    for (int i = 0; i < 100; ++i) {
      Matrix x = gaussian_sample(rng, 1, 128, 0.0, 1.0);
      if (corrupt(x, 0.0, rng) != x) return std::pair{false, std::string("vector changed")};
    }
    return std::pair{true, std::string("100 vectors unchanged")};
  }));

  out.push_back(timed("MMD properties", [&] {
    Rng rng(seed);
    double worst_self = 0.0;
    for (int i = 0; i < 20; ++i) {
      const Matrix x = gaussian_sample(rng, 16, 8, 0.0, 1.0);
      worst_self = std::max(worst_self, rbf_mmd2(x, x, median_pairwise_distance(x, x)));
    }
    Matrix near_a = gaussian_sample(rng, 16, 8, 0.0, 0.1);
    Matrix near_b = gaussian_sample(rng, 16, 8, 0.0, 0.1);
    Matrix far_b = gaussian_sample(rng, 16, 8, 10.0 / std::sqrt(8.0), 0.1);
    const double overlap = rbf_mmd2(near_a, near_b, median_pairwise_distance(near_a, near_b));
    const double separated = rbf_mmd2(near_a, far_b, median_pairwise_distance(near_a, far_b));
    char buf[160];
    std::snprintf(buf, sizeof buf, "max MMD2(X,X) %.2e, overlapping %.3e, separated %.3e", worst_self,
                  overlap, separated);
    return std::pair{worst_self < 1e-10 && overlap >= 0.0 && separated > overlap, std::string(buf)};
  }));

  out.push_back(timed("generated outputs lie in [-1, 1]", [&] {
    Rng rng(seed);
    DiffusionModel model = DiffusionModel::initialized({16, 12, 8}, rng);
    for (auto& v : model.w2.values()) v *= 50.0;  // push the output layer into saturation
    ClassTable classes;
    for (int c = 0; c < 4; ++c) {
      ClassEmbedding e;
      e.label = "c" + std::to_string(c);
      const Matrix v = gaussian_sample(rng, 1, 12, 0.0, 3.0);
      e.vector.assign(v.values().begin(), v.values().end());
      classes.push_back(std::move(e));
    }
    const FeatureTable generated = generate_unseen(model, classes, {250, kDefaultNoiseStd, 0}, rng);
    for (const auto& r : generated)
      for (double v : r.vector)
        if (!(v >= -1.0 && v <= 1.0)) return std::pair{false, std::string("component outside [-1, 1]")};
    return std::pair{true, std::to_string(generated.size()) + " samples in range"};
  }));

  out.push_back(timed("top-1 invariant to class-vector scaling", [&] {
    Rng rng(seed);
    int changed = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const auto variant = trial % 2 == 0 ? CompatibilityVariant::nonlinear : CompatibilityVariant::bilinear;
      const CompatibilityModel model = CompatibilityModel::initialized(variant, 10, 6, 7, rng);
      const Matrix candidates = gaussian_sample(rng, 5, 6, 0.0, 1.0);
      Matrix scaled = candidates;
      for (auto& v : scaled.values()) v *= 7.3;
      const Matrix f = gaussian_sample(rng, 1, 10, 0.0, 1.0);
      if (predict_top1_index(model, f.row(0), candidates) != predict_top1_index(model, f.row(0), scaled)) {
        ++changed;
      }
    }
    return std::pair{changed == 0, std::to_string(changed) + " of 50 predictions changed"};
  }));

  return out;
}

}  // namespace zdiff

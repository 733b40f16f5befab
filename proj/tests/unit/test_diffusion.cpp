#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include "zerodiff/diffusion.hpp"
#include "zerodiff/diffusion_loss.hpp"
#include "zerodiff/errors.hpp"
#include "zerodiff/rng.hpp"
#include "zerodiff/selfcheck.hpp"
#include "zerodiff/synth.hpp"

using namespace zdiff;

namespace {

FeatureTable seen_records(const SynthBenchmark& b) {
  FeatureTable out;
  for (const auto& r : b.features)
    if (std::find(b.partition.seen.begin(), b.partition.seen.end(), r.class_label) != b.partition.seen.end())
      out.push_back(r);
  return out;
}

ClassTable unseen_classes(const SynthBenchmark& b) {
  ClassTable out;
  for (const auto& l : b.partition.unseen) out.push_back(*find_class(b.classes, l));
  return out;
}

}  // namespace

TEST_CASE("noise schedule") {
  CHECK(NoiseSchedule{50}.percentage(0) == 0.0);
  CHECK(NoiseSchedule{50}.percentage(49) == 1.0);
  CHECK(NoiseSchedule{5}.percentage(2) == 0.5);
  CHECK(NoiseSchedule{1}.percentage(0) == 0.0);
}

TEST_CASE("corrupt") {
  Rng rng(1);
  std::vector<double> x(64);
  for (auto& v : x) v = rng.normal(0.0, 1.0);
  SUBCASE("p = 0 returns the input exactly") { CHECK(corrupt(x, 0.0, rng) == x); }
  SUBCASE("p = 1 on zeros has the noise standard deviation") {
    const auto y = corrupt(std::vector<double>(100000, 0.0), 1.0, rng);
    double ss = 0.0;
    for (double v : y) ss += v * v;
    CHECK(std::abs(std::sqrt(ss / 100000.0) - std::sqrt(0.1)) < 0.01);
  }
  SUBCASE("deterministic under a seed") {
    Rng a(9), b(9);
    CHECK(corrupt(x, 0.4, a) == corrupt(x, 0.4, b));
  }
  SUBCASE("p outside [0, 1]") {
    CHECK_THROWS_AS(corrupt(x, 1.5, rng), ConfigError);
    CHECK_THROWS_AS(corrupt(x, -0.1, rng), ConfigError);
  }
}

TEST_CASE("jitter_class") {
  Rng rng(2);
  const std::vector<double> z{0.5, -1.0, 2.0};
  CHECK(jitter_class(z, rng, 0.0) == z);
  std::vector<double> mean(3, 0.0);
  for (int i = 0; i < 10000; ++i) {
    const auto j = jitter_class(z, rng);
    for (std::size_t k = 0; k < 3; ++k) mean[k] += j[k] / 10000.0;
  }
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(mean[k] - z[k]) < 0.01);
  const Rng root(3);
  Rng a = root.derive("jitter.a"), b = root.derive("jitter.b");
  CHECK(jitter_class(z, a) != jitter_class(z, b));
}

TEST_CASE("denoise_forward") {
  Rng rng(4);
  const Matrix noisy = gaussian_sample(rng, 5, 6, 0.0, 3.0);
  const Matrix cls = gaussian_sample(rng, 5, 8, 0.0, 3.0);
  SUBCASE("zero model outputs zeros") {
    const DiffusionModel zero = DiffusionModel::zeros({6, 8, 4});
    CHECK(denoise_forward(zero, noisy, cls, rng, true) == Matrix(5, 6, 0.0));
  }
  SUBCASE("outputs stay within [-1, 1] and inference is deterministic") {
    DiffusionModel m = DiffusionModel::initialized({6, 8, 4}, rng);
    for (auto& v : m.w2.values()) v *= 100.0;
    const Matrix a = denoise_forward(m, noisy, cls, rng, false);
    const Matrix b = denoise_forward(m, noisy, cls, rng, false);
    CHECK(a == b);
    for (double v : a.values()) CHECK(std::abs(v) <= 1.0);
  }
  SUBCASE("dimension mismatch") {
    const DiffusionModel m = DiffusionModel::zeros({6, 8, 4});
    CHECK_THROWS_AS(denoise_forward(m, cls, noisy, rng, false), DimensionError);
  }
  SUBCASE("default architecture is 428 -> 128 -> 128") {
    const DiffusionModel m = DiffusionModel::initialized({}, rng);
    CHECK(m.w1.rows() == 428);
    CHECK(m.w1.cols() == 128);
    CHECK(m.w2.rows() == 128);
    CHECK(m.w2.cols() == 128);
    const double bound = 1.0 / std::sqrt(428.0);
    for (double v : m.w1.values()) CHECK(std::abs(v) <= bound);
  }
}

TEST_CASE("loss components") {
  Rng rng(5);
  SUBCASE("perfect reconstruction is zero on every term") {
    const Matrix real = gaussian_sample(rng, 6, 4, 0.0, 1.0);
    const LossComponents c = loss_components(real, real);
    CHECK(c.reconstruction == 0.0);
    CHECK(std::abs(c.mmd) < 1e-10);
    CHECK(c.variance == 0.0);
    CHECK(c.centroid == 0.0);
    CHECK(std::abs(c.cosine) < 1e-12);
  }
  SUBCASE("antipodal unit vectors give cosine loss 2") {
    const Matrix real{{1.0, 0.0}, {0.0, 1.0}, {0.6, 0.8}};
    Matrix gen = real;
    for (auto& v : gen.values()) v = -v;
    CHECK(loss_components(gen, real).cosine == doctest::Approx(2.0));
  }
  SUBCASE("B = 2, dim 1 by hand") {
    const LossComponents c = loss_components(Matrix{{0.0}, {0.0}}, Matrix{{-1.0}, {1.0}});
    CHECK(c.reconstruction == 1.0);
    CHECK(c.centroid == 0.0);
    CHECK(c.variance == 1.0);
  }
  SUBCASE("zero rows contribute nothing to the cosine term") {
    const LossComponents c = loss_components(Matrix{{0.0, 0.0}, {1.0, 0.0}}, Matrix{{1.0, 1.0}, {1.0, 0.0}});
    CHECK(c.cosine == 0.0);
  }
  SUBCASE("cosine term stays in [0, 2]") {
    for (int i = 0; i < 50; ++i) {
      const LossComponents c = loss_components(gaussian_sample(rng, 4, 3, 0, 1), gaussian_sample(rng, 4, 3, 0, 1));
      CHECK(c.cosine >= 0.0);
      CHECK(c.cosine <= 2.0);
    }
  }
  SUBCASE("a single-row batch is rejected") {
    CHECK_THROWS_AS(diffusion_loss(Matrix{{1.0}}, Matrix{{1.0}}, {}), ConfigError);
  }
}

TEST_CASE("total_loss weights") {
  const LossWeights w;
  CHECK(total_loss({}, w) == 0.0);
  CHECK(total_loss({1, 1, 1, 1, 1}, w) == doctest::Approx(4.3));
  CHECK_THROWS_AS((LossWeights{1, -1, 0, 0, 0}.validate()), ConfigError);
}

TEST_CASE("MMD and bandwidth") {
  SUBCASE("median of pairwise distances") {
    // Joint batch {0, 1, 3} in 1-D: distances 1, 3, 2 -> median 2.
    CHECK(median_pairwise_distance(Matrix{{0.0}, {1.0}}, Matrix{{3.0}}) == 2.0);
    // Joint batch {0, 1, 3, 7}: distances 1,3,7,2,6,4 -> median (3 + 4) / 2.
    CHECK(median_pairwise_distance(Matrix{{0.0}, {1.0}}, Matrix{{3.0}, {7.0}}) == 3.5);
    CHECK(median_pairwise_distance(Matrix{{1.0}, {1.0}}, Matrix{{1.0}}) == 1e-6);
  }
  SUBCASE("biased estimator by hand") {
    // x = {0}, y = {1}, h = 1: 1 + 1 - 2 exp(-1/2)
    CHECK(rbf_mmd2(Matrix{{0.0}}, Matrix{{1.0}}, 1.0) == doctest::Approx(2.0 - 2.0 * std::exp(-0.5)));
  }
  SUBCASE("self distance is zero and cross distance non-negative") {
    Rng rng(6);
    for (int i = 0; i < 20; ++i) {
      const Matrix x = gaussian_sample(rng, 10, 5, 0, 1);
      CHECK(rbf_mmd2(x, x, 1.3) < 1e-10);
      CHECK(rbf_mmd2(x, gaussian_sample(rng, 10, 5, 0.1, 1), 1.3) >= 0.0);
    }
  }
}

TEST_CASE("diffusion loss gradient through the denoiser") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) CHECK(check_diffusion_gradient(seed).max_relative_error < 1e-4);
}

TEST_CASE("train_diffusion") {
  SynthConfig sc;
  sc.samples_per_class = 24;
  Rng data_rng(7);
  const SynthBenchmark b = synth_benchmark(sc, data_rng);
  const FeatureTable seen = seen_records(b);
  DiffusionTrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 32;

  SUBCASE("one epoch runs at p = 0") {
    cfg.epochs = 1;
    Rng rng(1);
    const auto r = train_diffusion(seen, b.classes, cfg, rng);
    REQUIRE(r.trace.size() == 1);
    CHECK(r.trace[0].p == 0.0);
    CHECK(r.trace[0].batches == 6);
  }
  SUBCASE("same seed, same trace and model") {
    Rng a(2), c(2);
    const auto x = train_diffusion(seen, b.classes, cfg, a);
    const auto y = train_diffusion(seen, b.classes, cfg, c);
    REQUIRE(x.trace.size() == y.trace.size());
    for (std::size_t i = 0; i < x.trace.size(); ++i) CHECK(x.trace[i].total == y.trace[i].total);
    CHECK(x.model.w1 == y.model.w1);
    CHECK(x.trace.back().p == 1.0);
  }
  SUBCASE("missing class embedding") {
    ClassTable partial(b.classes.begin() + 1, b.classes.end());
    Rng rng(3);
    CHECK_THROWS_AS(train_diffusion(seen, partial, cfg, rng), DataError);
  }
  SUBCASE("invalid configuration") {
    cfg.epochs = 0;
    Rng rng(4);
    CHECK_THROWS_AS(train_diffusion(seen, b.classes, cfg, rng), ConfigError);
  }
  SUBCASE("a diverging run reports a numerical error") {
    cfg.learning_rate = std::numeric_limits<double>::infinity();
    Rng rng(5);
    CHECK_THROWS_AS(train_diffusion(seen, b.classes, cfg, rng), NumericalError);
  }
}

TEST_CASE("training reduces the reconstruction loss") {
  // Default configuration on the default benchmark, ten seeds; at least nine
  // must end with a lower reconstruction term than they started with.
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng data_rng(seed);
    const SynthBenchmark b = synth_benchmark({}, data_rng);
    Rng rng(seed);
    const auto r = train_diffusion(seen_records(b), b.classes, {}, rng);
    improved += r.trace.back().components.reconstruction < r.trace.front().components.reconstruction;
  }
  CHECK(improved >= 9);
}

TEST_CASE("generate_unseen") {
  Rng rng(8);
  SynthConfig sc;
  sc.samples_per_class = 10;
  const SynthBenchmark b = synth_benchmark(sc, rng);
  const DiffusionModel m = DiffusionModel::initialized({128, 32, 16}, rng);
  const ClassTable unseen = unseen_classes(b);
  const FeatureTable g = generate_unseen(m, unseen, {40, kDefaultNoiseStd, 0}, rng);
  CHECK(g.size() == 80);
  std::map<std::string, int> per;
  for (const auto& r : g) {
    ++per[r.class_label];
    CHECK(r.vector.size() == 128);
    for (double v : r.vector) CHECK(std::abs(v) <= 1.0);
  }
  CHECK(per.size() == 2);
  for (const auto& [label, n] : per) CHECK(n == 40);
  CHECK(generate_unseen(m, unseen, {0, kDefaultNoiseStd, 0}, rng).empty());

  Rng a(1), c(1);
  CHECK(generate_unseen(m, unseen, {3, kDefaultNoiseStd, 2}, a) == generate_unseen(m, unseen, {3, kDefaultNoiseStd, 2}, c));
}

TEST_CASE("diffusion checkpoints round-trip at float32") {
  Rng rng(9);
  const DiffusionModel m = DiffusionModel::initialized({6, 8, 5}, rng, 0.25, 0.02);
  const auto path = std::filesystem::temp_directory_path() / "zerodiff_unit_ckpt.zddm";
  save_diffusion_checkpoint(path, m, {"abc", 7, "{}"});
  const DiffusionModel back = load_diffusion_checkpoint(path);
  CHECK(back.dims == m.dims);
  CHECK(back.dropout_rate == 0.25);
  CHECK(back.leaky_slope == 0.02);
  for (std::size_t i = 0; i < m.w1.size(); ++i)
    CHECK(back.w1.values()[i] == static_cast<double>(static_cast<float>(m.w1.values()[i])));
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
  CHECK_THROWS_AS(load_diffusion_checkpoint(path), DataError);
}

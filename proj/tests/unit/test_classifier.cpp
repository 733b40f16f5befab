#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "zerodiff/classifier.hpp"
#include "zerodiff/errors.hpp"
#include "zerodiff/rng.hpp"
#include "zerodiff/selfcheck.hpp"
#include "zerodiff/synth.hpp"

using namespace zdiff;

TEST_CASE("score") {
  Rng rng(1);
  SUBCASE("zero feature scores zero under the nonlinear form") {
    const auto m = CompatibilityModel::initialized(CompatibilityVariant::nonlinear, 5, 4, 3, rng);
    const std::vector<double> zero(5, 0.0);
    for (int i = 0; i < 5; ++i) {
      const Matrix z = gaussian_sample(rng, 1, 4, 0, 1);
      CHECK(score(m, zero, z.row(0)) == 0.0);
    }
  }
  SUBCASE("bilinear with a padded identity gives the squared norm") {
    CompatibilityModel m;
    m.variant = CompatibilityVariant::bilinear;
    m.feature_dim = 3;
    m.class_dim = 5;
    m.w = Matrix(3, 5, 0.0);
    for (std::size_t i = 0; i < 3; ++i) m.w(i, i) = 1.0;
    const std::vector<double> w{1.0, -2.0, 0.5};
    const std::vector<double> z{1.0, -2.0, 0.5, 9.0, -9.0};
    CHECK(score(m, w, z) == doctest::Approx(1.0 + 4.0 + 0.25));
  }
  SUBCASE("batched and per-sample scores agree") {
    for (auto v : {CompatibilityVariant::nonlinear, CompatibilityVariant::bilinear}) {
      const auto m = CompatibilityModel::initialized(v, 7, 6, 5, rng);
      const Matrix f = gaussian_sample(rng, 4, 7, 0, 1);
      const Matrix z = gaussian_sample(rng, 3, 6, 0, 1);
      const Matrix l = logits(m, f, z);
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(l(i, c) - score(m, f.row(i), z.row(c))) < 1e-10);
    }
  }
}

TEST_CASE("logits") {
  Rng rng(2);
  const auto m = CompatibilityModel::initialized(CompatibilityVariant::nonlinear, 6, 4, 5, rng);
  const Matrix f = gaussian_sample(rng, 1, 6, 0, 1);
  const Matrix one = gaussian_sample(rng, 1, 4, 0, 1);
  CHECK(logits(m, f.row(0), one).size() == 1);

  Matrix dup(2, 4);
  for (std::size_t j = 0; j < 4; ++j) dup(0, j) = dup(1, j) = one(0, j);
  const auto d = logits(m, f.row(0), dup);
  CHECK(d[0] == d[1]);

  const Matrix z = gaussian_sample(rng, 5, 4, 0, 1);
  Matrix scaled = z;
  for (auto& v : scaled.values()) v *= 2.5;
  const auto a = logits(m, f.row(0), z), b = logits(m, f.row(0), scaled);
  for (std::size_t c = 0; c < 5; ++c) CHECK(b[c] == doctest::Approx(2.5 * a[c]).epsilon(1e-12));
}

TEST_CASE("cross_entropy_loss") {
  const std::vector<std::size_t> t{1, 0};
  const LossAndGrad u = cross_entropy_loss(Matrix(2, 7, 0.3), t);
  CHECK(u.loss == doctest::Approx(std::log(7.0)));
  Matrix peaked(2, 4, 0.0);
  peaked(0, 1) = 50.0;
  peaked(1, 0) = 50.0;
  const LossAndGrad p = cross_entropy_loss(peaked, t);
  CHECK(p.loss >= 0.0);
  CHECK(p.loss < 1e-12);
  // Gradient rows of softmax cross-entropy sum to zero.
  Rng rng(3);
  const LossAndGrad r = cross_entropy_loss(gaussian_sample(rng, 2, 4, 0, 3), t);
  for (std::size_t i = 0; i < 2; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) s += r.grad(i, c);
    CHECK(std::abs(s) < 1e-15);
  }
  CHECK_THROWS_AS(cross_entropy_loss(Matrix(1, 3, 0.0), std::vector<std::size_t>{3}), DimensionError);
}

TEST_CASE("warp_loss") {
  Rng rng(4);
  SUBCASE("margin satisfied everywhere gives zero") {
    const Matrix s{{2.0, 0.9, 0.5}, {-3.0, -1.0, -4.5}};
    const LossAndGrad l = warp_loss(s, std::vector<std::size_t>{0, 1}, rng);
    CHECK(l.loss == 0.0);
    CHECK(sum_of_squares(l.grad) == 0.0);
  }
  SUBCASE("two classes at equal scores") {
    const LossAndGrad l = warp_loss(Matrix{{0.0, 0.0}}, std::vector<std::size_t>{0}, rng);
    CHECK(l.loss == 1.0);
    CHECK(l.grad == Matrix{{-1.0, 1.0}});
  }
  SUBCASE("a single violation with the true class beating all other rivals") {
    // C = 4; only class 3 violates. Whatever the visiting order, the number
    // of visits N until the violation decides rank floor(3 / N).
    const Matrix s{{5.0, 1.0, 1.0, 5.5}};
    for (int rep = 0; rep < 20; ++rep) {
      const LossAndGrad l = warp_loss(s, std::vector<std::size_t>{0}, rng);
      const double margin = 1.0 + 5.5 - 5.0;
      const bool ok = std::abs(l.loss - margin * 1.0) < 1e-12 ||          // N = 3 or 2 -> rank 1
                      std::abs(l.loss - margin * (1.0 + 0.5 + 1.0 / 3.0)) < 1e-12;  // N = 1 -> rank 3
      CHECK(ok);
    }
  }
  SUBCASE("non-increasing in the true score") {
    const Matrix base = gaussian_sample(rng, 1, 6, 0, 1);
    double prev = 1e300;
    for (double bump = 0.0; bump < 4.0; bump += 0.25) {
      Matrix s = base;
      s(0, 2) += bump;
      Rng fixed(11);
      const double l = warp_loss(s, std::vector<std::size_t>{2}, fixed).loss;
      CHECK(l <= prev + 1e-12);
      prev = l;
    }
    CHECK(prev == 0.0);
  }
}

TEST_CASE("classifier gradients through the compatibility function") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (auto v : {CompatibilityVariant::nonlinear, CompatibilityVariant::bilinear}) {
      CHECK(check_classifier_gradient(ClassifierLoss::cross_entropy, v, seed).max_relative_error < 1e-6);
      CHECK(check_classifier_gradient(ClassifierLoss::warp, v, seed).max_relative_error < 1e-6);
    }
  }
}

TEST_CASE("predict_top1") {
  Rng rng(5);
  const auto m = CompatibilityModel::initialized(CompatibilityVariant::nonlinear, 6, 4, 5, rng);
  const Matrix f = gaussian_sample(rng, 1, 6, 0, 1);
  const ClassTable single{{"only", {}, {0.1, 0.2, 0.3, 0.4}}};
  CHECK(predict_top1(m, f.row(0), single) == "only");
  const ClassTable tied{{"first", {}, {0.1, 0.2, 0.3, 0.4}}, {"second", {}, {0.1, 0.2, 0.3, 0.4}}};
  CHECK(predict_top1(m, f.row(0), tied) == "first");

  int changed = 0;
  for (int i = 0; i < 200; ++i) {
    const Matrix z = gaussian_sample(rng, 6, 4, 0, 1);
    Matrix s = z;
    const double c = rng.uniform(0.01, 50.0);
    for (auto& v : s.values()) v *= c;
    const Matrix x = gaussian_sample(rng, 1, 6, 0, 1);
    changed += predict_top1_index(m, x.row(0), z) != predict_top1_index(m, x.row(0), s);
  }
  CHECK(changed == 0);
}

TEST_CASE("train_classifier") {
  SynthConfig sc;
  sc.samples_per_class = 20;
  Rng data_rng(6);
  const SynthBenchmark b = synth_benchmark(sc, data_rng);
  FeatureTable seen, unseen;
  for (const auto& r : b.features)
    (std::find(b.partition.seen.begin(), b.partition.seen.end(), r.class_label) != b.partition.seen.end() ? seen
                                                                                                          : unseen)
        .push_back(r);
  ClassifierTrainConfig cfg;
  cfg.hidden_dim = 16;
  cfg.epochs = 3;

  SUBCASE("same seed, same parameters") {
    for (auto loss : {ClassifierLoss::cross_entropy, ClassifierLoss::warp}) {
      cfg.loss = loss;
      Rng a(1), c(1);
      const auto x = train_classifier(seen, {}, b.classes, cfg, a);
      const auto y = train_classifier(seen, {}, b.classes, cfg, c);
      CHECK(x.a == y.a);
      CHECK(x.b == y.b);
    }
  }
  SUBCASE("bilinear variant shapes") {
    cfg.variant = CompatibilityVariant::bilinear;
    Rng rng(2);
    const auto m = train_classifier(seen, unseen, b.classes, cfg, rng);
    CHECK(m.w.rows() == 128);
    CHECK(m.w.cols() == 32);
    CHECK(m.a.empty());
  }
  SUBCASE("seen-class fit improves over chance") {
    cfg.learning_rate = 1e-3;
    cfg.epochs = 10;
    Rng rng(3);
    const auto m = train_classifier(seen, {}, b.classes, cfg, rng);
    ClassTable seen_classes;
    for (const auto& l : b.partition.seen) seen_classes.push_back(*find_class(b.classes, l));
    CHECK(evaluate(m, seen, seen_classes).accuracy > 0.5);
  }
  SUBCASE("unknown class label") {
    FeatureTable bad = seen;
    bad[0].class_label = "nope";
    Rng rng(4);
    CHECK_THROWS_AS(train_classifier(bad, {}, b.classes, cfg, rng), DataError);
  }
}

TEST_CASE("evaluate") {
  CompatibilityModel m;
  m.variant = CompatibilityVariant::bilinear;
  m.feature_dim = 2;
  m.class_dim = 2;
  m.w = Matrix{{1.0, 0.0}, {0.0, 1.0}};
  const ClassTable cands{{"x", {}, {1.0, 0.0}}, {"y", {}, {0.0, 1.0}}};
  const FeatureTable recs{{"1", "x", {2.0, 0.0}}, {"2", "x", {0.0, 1.0}}, {"3", "x", {3.0, 1.0}}, {"4", "y", {0.0, 5.0}}};
  const Evaluation e = evaluate(m, recs, cands);
  CHECK(e.correct == 3);
  CHECK(e.total == 4);
  CHECK(e.accuracy == 0.75);
  CHECK(e.balanced_accuracy == doctest::Approx((2.0 / 3.0 + 1.0) / 2.0));
}

TEST_CASE("classifier checkpoints") {
  Rng rng(7);
  const auto path = std::filesystem::temp_directory_path() / "zerodiff_unit_ckpt.zdcm";
  for (auto v : {CompatibilityVariant::nonlinear, CompatibilityVariant::bilinear}) {
    const auto m = CompatibilityModel::initialized(v, 5, 4, 3, rng);
    save_classifier_checkpoint(path, m, {});
    const auto back = load_classifier_checkpoint(path);
    CHECK(back.variant == v);
    CHECK(back.feature_dim == 5);
    const Matrix& src = v == CompatibilityVariant::bilinear ? m.w : m.a;
    const Matrix& dst = v == CompatibilityVariant::bilinear ? back.w : back.a;
    for (std::size_t i = 0; i < src.size(); ++i)
      CHECK(dst.values()[i] == static_cast<double>(static_cast<float>(src.values()[i])));
  }
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
}

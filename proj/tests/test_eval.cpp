#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gama/defenses.hpp"
#include "gama/evaluate.hpp"
#include "gama/losses.hpp"
#include "gama/metrics.hpp"
#include "gama/pca.hpp"
#include "gama/scene.hpp"
#include "support/grad_cases.hpp"
#include "support/oracles.hpp"
#include "support/scratch_dir.hpp"

using namespace gama;
using namespace gama::testing;

TEST_CASE("hamming score matches the set-based oracle") {
  Pcg64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 2 + static_cast<int>(rng.below(6)), n = 1 + static_cast<int>(rng.below(10));
    std::vector<uint8_t> y(n * c), yh(n * c);
    for (auto& v : y) v = rng.uniform() < 0.4;
    for (auto& v : yh) v = rng.uniform() < 0.4;
    CHECK(hamming_score(yh, y, c) == doctest::Approx(hamming_by_sets(yh, y, c)).epsilon(1e-12));
  }
  CHECK(hamming_score({0, 0}, {0, 0}, 2) == 100.0);
  CHECK(hamming_score({1, 0, 0, 1}, {1, 1, 0, 1}, 2) == doctest::Approx(75.0));
  CHECK_THROWS_AS(hamming_score({}, {}, 2), Error);
  CHECK_THROWS_AS(hamming_score({1}, {1, 0}, 2), Error);
}

TEST_CASE("top-1 accuracy and thresholding") {
  const auto scores = Tensor<float>::from({3, 3}, {0.1f, 0.8f, 0.1f, 0.5f, 0.5f, 0.0f, 0.2f, 0.3f, 0.9f});
  CHECK(argmax_rows(scores) == std::vector<int>{1, 0, 2});
  CHECK(top1_accuracy(scores, {1, 1, 2}) == doctest::Approx(200.0 / 3.0));
  CHECK(threshold_predictions(scores) == std::vector<uint8_t>{0, 1, 0, 1, 1, 0, 0, 0, 1});
}

TEST_CASE("context consistency score is the harmonic mean of precision and misclassification") {
  Pcg64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const double p = rng.uniform(), m = rng.uniform();
    CHECK(std::abs(harmonic_context(p, m) - 2 * p * m / (p + m)) < 1e-9);
  }
  CHECK(harmonic_context(0, 0) == 0.0);

  // Predicted pairs {0,1} (in O) and {1,2} (not in O): p = 1/2.
  const auto o = CooccurrenceMatrix::from_pairs(4, {{0, 1}, {2, 3}});
  const std::vector<uint8_t> pred{1, 1, 0, 0, 0, 1, 1, 0};
  const auto s = context_consistency_score(pred, 4, o, 0.25);
  CHECK(s.precision == doctest::Approx(0.5));
  CHECK(s.misclassification == doctest::Approx(0.75));
  CHECK(s.score == doctest::Approx(2 * 0.5 * 0.75 / 1.25));
}

TEST_CASE("median blur equals a sort-per-window oracle") {
  Pcg64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 3 + static_cast<int>(rng.below(8)), w = 3 + static_cast<int>(rng.below(8));
    std::vector<float> v(3 * h * w);
    for (auto& p : v) p = static_cast<float>(rng.uniform());
    for (int window : {3, 5}) {
      const auto got = median_blur(Tensor<float>::from({3, h, w}, v), window);
      CHECK(std::ranges::equal(got.vec(), median_by_sort(v, 3, h, w, window)));
    }
  }
  CHECK_THROWS_AS(median_blur(Tensor<float>::zeros({3, 4, 4}), 2), Error);
  CHECK_THROWS_AS(median_blur(Tensor<float>::zeros({3, 4, 4}), 1), Error);
}

TEST_CASE("power-iteration PCA matches the Jacobi oracle") {
  Pcg64 rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(7)), n = 10 + static_cast<int>(rng.below(30));
    Eigen::MatrixXd x(n, k);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) x(i, j) = rng.normal() * (1.0 + j);
    const auto r = pca_top2(x);
    const auto ev = jacobi_eigenvalues(sample_covariance(x));
    CHECK(std::abs(r.eigenvalues(0) - ev[0]) < 1e-6);
    CHECK(std::abs(r.eigenvalues(1) - ev[1]) < 1e-6);
    CHECK((r.components.transpose() * r.components - Eigen::Matrix2d::Identity()).norm() < 1e-8);
  }
}

TEST_CASE("PCA edge cases") {
  Eigen::MatrixXd line(5, 3);
  for (int i = 0; i < 5; ++i) line.row(i) << i, 2.0 * i, -1.0 * i;
  const auto r = pca_top2(line);
  CHECK(r.explained(0) == doctest::Approx(1.0));
  CHECK(r.explained(1) < 1e-9);
  CHECK_THROWS_WITH_AS(pca_top2(Eigen::MatrixXd::Ones(4, 3)), doctest::Contains("rank < 2"), Error);
  CHECK_THROWS_AS(pca_top2(Eigen::MatrixXd::Zero(2, 3)), Error);
}

TEST_CASE("closed-form loss identities on unit vectors") {
  Pcg64 rng(25);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 64;
    const auto a = unit_rows(rng, 1, k), b = unit_rows(rng, 1, k), rho = unit_rows(rng, 1, k);
    double cs = 0, d2 = 0;
    for (int j = 0; j < k; ++j) {
      cs += a.ptr()[j] * b.ptr()[j];
      d2 += (a.ptr()[j] - rho.ptr()[j]) * (a.ptr()[j] - rho.ptr()[j]);
    }
    CHECK(std::abs(loss_img(a, b).item() + (2 - 2 * cs) / k) < 1e-6);
    CHECK(std::abs(loss_txt(a, a, rho, 1.0).item() - (d2 + 1.0) / k) < 1e-6);
    CHECK(std::abs(loss_s(a, b).item() - cs) < 1e-12);
  }
}

TEST_CASE("total_loss sums exactly the active terms") {
  LossParts<double> parts;
  parts.l_s = Tensor<double>::scalar(0.5);
  parts.l_img = Tensor<double>::scalar(-0.25);
  parts.l_txt = Tensor<double>::scalar(0.125);
  CHECK(total_loss(AttackMethod::gama, parts).breakdown.total == doctest::Approx(0.375));
  CHECK(total_loss(AttackMethod::ablate_img_txt, parts).breakdown.total == doctest::Approx(-0.125));
  CHECK(total_loss(AttackMethod::ablate_img_only, parts).breakdown.total == doctest::Approx(-0.25));
  CHECK(total_loss(AttackMethod::ls_only, parts).breakdown.total == doctest::Approx(0.5));
  CHECK_THROWS_AS(total_loss(AttackMethod::gap_bce, parts), Error);
}

TEST_CASE("budget verification rejects a violation") {
  auto x = Tensor<float>::full({1, 3, 4, 4}, 0.5f);
  auto y = x.clone();
  verify_budget(x, y, 0.01f);
  y.ptr()[5] += 0.02f;
  CHECK_THROWS_WITH_AS(verify_budget(x, y, 0.01f), doctest::Contains("budget violation"), Error);
  CHECK(linf_distance(x, y) == doctest::Approx(0.02));
}

TEST_CASE("PGD stays within its budget") {
  DatasetConfig dc;
  dc.num_samples = 24;
  const auto ds = generate_dataset(dc);
  SurrogateClassifier f(SurrogateConfig{}, 3);
  const std::vector<int> idx{0, 1, 2, 3};
  const auto x = ds.batch_images(idx);
  PgdConfig pc;
  const auto adv = pgd_attack(f, x, ds.batch_labels(idx), pc);
  CHECK(linf_distance(x, adv) <= pc.epsilon + 1e-6);
  CHECK_FALSE(f.params().any_grad());
}

TEST_CASE("report CSV round-trips") {
  ScratchDir dir("report");
  AttackRow r{"gama_s1", "s0", "v1", "multi_label", "none", "black", "hamming", 99.5, 40.25, 10.0 / 255};
  write_report_csv({r, r}, dir / "r.csv");
  const auto back = read_report_csv(dir / "r.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].generator_id == "gama_s1");
  CHECK(back[1].attacked == doctest::Approx(40.25));
  CHECK(format_report({r}).rfind(kReportHeader, 0) == 0);
}

#include "fsar/metrics.hpp"
#include "gradcheck.hpp"

#include <catch_amalgamated.hpp>

using namespace fsar;
using fsar::testing::gradient_error;

namespace {

Matrix random_cost(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 2.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("cost matrix endpoints") {
  Matrix eye = Matrix::Identity(3, 3);
  const Matrix self = cost_matrix(eye, eye);
  CHECK(self.diagonal().cwiseAbs().maxCoeff() == 0.0);
  Matrix a(2, 4), b(2, 4);
  a << 1, 0, 0, 0, 0, 1, 0, 0;
  b << 0, 0, 1, 0, 0, 0, 0, 1;
  CHECK((cost_matrix(a, b).array() == 1.0).all());
  CHECK(cost_matrix(a, Matrix(-a))(0, 0) == 2.0);
}

TEST_CASE("OTAM hand examples") {
  CHECK(otam_score(Matrix::Zero(3, 4), 0.0, true) == 0.0);
  CHECK(otam_score(mat({{0, 1}, {1, 0}}), 0.0, false) == 0.0);
  CHECK(otam_score(mat({{0.5}}), 0.0, true) == -1.0);
  CHECK(brute_force_otam(mat({{0.7}}), false) == -0.7);
  CHECK(brute_force_otam(Matrix::Zero(4, 4), true) == 0.0);
}

TEST_CASE("OTAM relaxation lets leading query frames rest in the pad column") {
  // Row 0 is expensive everywhere; the relaxed path stays in the left pad
  // for it and aligns row 1 for free.
  const Matrix c = mat({{5, 5}, {0, 0}});
  CHECK(otam_score(c, 0.0, false) == 0.0);
  OtamOptions strict{0.0, false, false};
  CHECK(otam_score(c, strict) == -5.0);  // plain DTW must start at (0, 0)
  CHECK(brute_force_otam(c, false, false) == -5.0);
  // A single query row still walks every support column.
  CHECK(otam_score(mat({{2, 0, 2}}), 0.0, false) == -4.0);
}

TEST_CASE("OTAM programme matches exhaustive enumeration") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> size(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix c = random_cost(size(rng), size(rng), rng);
    for (bool bidir : {false, true}) {
      CHECK(std::abs(otam_score(c, 0.0, bidir) - brute_force_otam(c, bidir)) <= 1e-12);
      OtamOptions strict{0.0, bidir, false};
      CHECK(std::abs(otam_score(c, strict) - brute_force_otam(c, bidir, false)) <= 1e-12);
    }
  }
}

TEST_CASE("soft OTAM bounds and converges to the hard score") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix c = random_cost(1 + trial % 6, 1 + (trial / 6) % 6, rng);
    const double hard = otam_score(c, 0.0, true);
    CHECK(otam_score(c, 0.1, true) >= hard);
    CHECK(std::abs(otam_score(c, 1e-4, true) - hard) <= 1e-3);
  }
}

TEST_CASE("oracle refuses large inputs") {
  try {
    brute_force_otam(Matrix::Zero(8, 3), true);
    FAIL("expected size-exceeded");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::size_exceeded);
  }
}

TEST_CASE("soft OTAM gradient matches finite differences") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix c = random_cost(2 + trial % 3, 2 + (trial + 1) % 4, rng);
    for (bool relax : {true, false}) {
      const OtamOptions opt{0.1, true, relax};
      CHECK(gradient_error({c}, [opt](const auto& v) { return otam_score(v[0], opt); }) < 1e-6);
    }
  }
}

TEST_CASE("cost matrix gradient through features") {
  std::mt19937_64 rng(14);
  const Matrix fq = fsar::testing::random_matrix(3, 5, rng);
  const Matrix fs = fsar::testing::random_matrix(4, 5, rng);
  CHECK(gradient_error({fq, fs}, [](const auto& v) {
          return otam_score(cost_matrix(v[0], v[1]), OtamOptions{0.1, true, true});
        }) < 1e-6);
  CHECK(gradient_error({fq, fs}, [](const auto& v) { return mean_cosine_score(v[0], v[1]); }) < 1e-6);
}

TEST_CASE("Bi-MHM hand examples and symmetry") {
  CHECK(bi_mhm_score(Matrix::Zero(3, 2)) == 0.0);
  CHECK(bi_mhm_score(mat({{0, 1}, {1, 0}})) == 0.0);
  CHECK(bi_mhm_score(mat({{0.2, 1.0}, {0.6, 0.4}})) == Catch::Approx(-(0.3 + 0.3)));
  std::mt19937_64 rng(15);
  const Matrix c = random_cost(4, 5, rng);
  Matrix shuffled(4, 5);
  const int perm[5] = {2, 4, 0, 3, 1};
  for (int j = 0; j < 5; ++j) shuffled.col(j) = c.col(perm[j]);
  CHECK(bi_mhm_score(shuffled) == Catch::Approx(bi_mhm_score(c)).epsilon(1e-15));
}

TEST_CASE("Bi-MHM subgradient at a unique minimum") {
  const Matrix c = mat({{0.2, 1.0}, {0.6, 0.4}});
  CHECK(gradient_error({c}, [](const auto& v) { return bi_mhm_score(v[0]); }) < 1e-8);
}

TEST_CASE("mean cosine examples") {
  std::mt19937_64 rng(16);
  const Matrix f = fsar::testing::random_matrix(4, 6, rng);
  CHECK(mean_cosine_score(f, f) == Catch::Approx(1.0).margin(1e-14));
  CHECK(mean_cosine_score(f, Matrix(3.0 * f)) == Catch::Approx(1.0).margin(1e-14));
  Matrix a = Matrix::Zero(2, 3), b = Matrix::Zero(2, 3);
  a(0, 0) = a(1, 0) = 1.0;
  b(0, 1) = b(1, 2) = 1.0;
  CHECK(mean_cosine_score(a, b) == 0.0);
}

TEST_CASE("metric selection and parsing") {
  CHECK(parse_metric("otam") == MetricKind::otam);
  CHECK(parse_metric(metric_name(MetricKind::bi_mhm)) == MetricKind::bi_mhm);
  CHECK(parse_metric(metric_name(MetricKind::mean_cosine)) == MetricKind::mean_cosine);
  CHECK_THROWS_AS(parse_metric("euclid"), Error);
  std::mt19937_64 rng(17);
  const Matrix f = fsar::testing::random_matrix(3, 4, rng);
  MetricConfig cfg;
  cfg.otam.lambda = 0.0;
  CHECK(similarity(cfg, f, f) == otam_score(cost_matrix(f, f), cfg.otam));
}

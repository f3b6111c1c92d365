#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <algorithm>
#include <sstream>

#include "featedit/pca.hpp"
#include "support/fixtures.hpp"
#include "support/reference_solvers.hpp"

using namespace featedit;

namespace {

void expect_orthonormal(const Matrix& b) {
  for (std::size_t i = 0; i < b.rows(); ++i) {
    double n = 0;
    for (double v : b.row(i)) n += v * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-10);
    for (std::size_t j = i + 1; j < b.rows(); ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < b.cols(); ++k) dot += b(i, k) * b(j, k);
      EXPECT_LE(std::abs(dot), 1e-10);
    }
  }
}

}  // namespace

TEST(Pca, CollinearDataHasOneComponent) {
  Matrix x(7, 3);
  for (std::size_t i = 0; i < 7; ++i) {
    const double t = static_cast<double>(i) - 2.5;
    x(i, 0) = 1 + 2 * t;
    x(i, 1) = -t;
    x(i, 2) = 0.5 * t;
  }
  const auto r = pca_project(x);
  double total = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 7; ++i) m += x(i, k) / 7;
    for (std::size_t i = 0; i < 7; ++i) v += (x(i, k) - m) * (x(i, k) - m) / 7;
    total += v;
  }
  EXPECT_NEAR(r.variances[0], total, 1e-10 * total);
  EXPECT_LE(r.variances[1], 1e-10 * total);
}

TEST(Pca, AxisAlignedCorners) {
  // Corners (+-2, +-1): population variances 4 and 1, no covariance.
  Matrix x(4, 2, {2, 1, 2, -1, -2, 1, -2, -1});
  const auto r = pca_project(x);
  EXPECT_NEAR(r.variances[0], 4.0, 1e-10);
  EXPECT_NEAR(r.variances[1], 1.0, 1e-10);
  EXPECT_NEAR(std::abs(r.basis(0, 0)), 1.0, 1e-10);
  EXPECT_NEAR(std::abs(r.basis(1, 1)), 1.0, 1e-10);
  expect_orthonormal(r.basis);
}

TEST(Pca, MatchesDenseEigensolver) {
  Rng rng(17);
  std::normal_distribution<double> nd(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix x(20, 10);
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t k = 0; k < 10; ++k) x(i, k) = nd(rng) * (1.0 + k);
    const auto r = pca_project(x);
    const auto ev = reference::covariance_eigenvalues(fixtures::rows_of(x));
    EXPECT_NEAR(r.variances[0], ev[0], 1e-8 * ev[0]);
    EXPECT_NEAR(r.variances[1], ev[1], 1e-8 * ev[1]);
    expect_orthonormal(r.basis);
  }
}

TEST(Pca, ProjectionsAreCenteredDataTimesBasis) {
  Rng rng(2);
  std::normal_distribution<double> nd(0, 1);
  Matrix x(12, 5);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t k = 0; k < 5; ++k) x(i, k) = nd(rng) + k;
  const auto r = pca_project(x);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      double p = 0;
      for (std::size_t k = 0; k < 5; ++k) p += (x(i, k) - r.mean[k]) * r.basis(c, k);
      EXPECT_NEAR(r.projections(i, c), p, 1e-12);
    }
  for (std::size_t c = 0; c < 2; ++c) {
    std::size_t arg = 0;
    for (std::size_t k = 1; k < 5; ++k)
      if (std::abs(r.basis(c, k)) > std::abs(r.basis(c, arg))) arg = k;
    EXPECT_GT(r.basis(c, arg), 0.0);
  }
}

TEST(Pca, Errors) {
  EXPECT_THROW(pca_project(Matrix(1, 3)), InsufficientDataError);
  Matrix bad(3, 2, 1.0);
  bad(1, 1) = std::nan("");
  EXPECT_THROW(pca_project(bad), ValueError);
}

TEST(Pca, CsvLayout) {
  Matrix x(4, 2, {2, 1, 2, -1, -2, 1, -2, -1});
  const std::vector<std::uint32_t> labels{0, 1, 0, 1};
  std::ostringstream s;
  write_pca_csv(s, pca_project(x), labels);
  const auto text = s.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "sample_index,pc1,pc2,class_id");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "featedit/featedit.hpp"
#include "support/fixtures.hpp"
#include "support/reference_solvers.hpp"

using namespace featedit;

TEST(BoxTargets, IdentityAndHandCase) {
  const Box p{0, 0, 10, 10};
  for (double t : box_targets(p, p)) EXPECT_EQ(t, 0.0);
  const auto t = box_targets(p, {5, 0, 15, 10});
  EXPECT_DOUBLE_EQ(t[0], 0.5);
  EXPECT_EQ(t[1], 0.0);
  EXPECT_EQ(t[2], 0.0);
  EXPECT_EQ(t[3], 0.0);
  EXPECT_THROW(box_targets({0, 0, 0, 5}, p), GeometryError);
}

TEST(BoxTargets, RoundTrip) {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const Box p = fixtures::random_box(rng), g = fixtures::random_box(rng);
    const Box back = apply_transform(p, box_targets(p, g));
    EXPECT_NEAR(back.x1, g.x1, 1e-9 * std::max(1.0, std::abs(g.x1)));
    EXPECT_NEAR(back.y2, g.y2, 1e-9 * std::max(1.0, std::abs(g.y2)));
  }
}

namespace {

struct Planted {
  Matrix x;
  std::vector<BoxDelta> t;
  std::array<std::vector<double>, 4> w;
  BoxDelta b;
};

Planted planted(std::uint64_t seed, std::size_t n, std::size_t d) {
  Rng rng(seed);
  std::normal_distribution<double> nd(0, 1);
  Planted p{Matrix(n, d), {}, {}, {}};
  for (auto& row : p.w) {
    row.resize(d);
    for (auto& v : row) v = nd(rng);
  }
  for (auto& v : p.b) v = nd(rng);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) p.x(i, k) = nd(rng);
    BoxDelta t = p.b;
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t k = 0; k < d; ++k) t[r] += p.w[r][k] * p.x(i, k);
    p.t.push_back(t);
  }
  return p;
}

}  // namespace

TEST(Ridge, RecoversPlantedLinearMap) {
  for (auto [n, d] : {std::pair<std::size_t, std::size_t>{60, 12}, {40, 30}}) {
    const auto p = planted(n + d, n, d);
    const auto reg = train_regressor(p.x, p.t, 1e-8, 0);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(reg.weights[r][k], p.w[r][k], 1e-6);
      EXPECT_NEAR(reg.bias[r], p.b[r], 1e-6);
    }
  }
}

TEST(Ridge, NullTargets) {
  const auto p = planted(1, 20, 5);
  const std::vector<BoxDelta> zeros(20, BoxDelta{});
  const auto reg = train_regressor(p.x, zeros, 1e-4, 0);
  for (const auto& row : reg.weights)
    for (double v : row) EXPECT_LE(std::abs(v), 1e-6);
  const Box box{1, 2, 30, 40};
  const Box out = apply_transform(box, reg.predict(p.x.row(0)));
  EXPECT_NEAR(out.x1, box.x1, 1e-6);
  EXPECT_NEAR(out.y2, box.y2, 1e-6);
}

TEST(Ridge, MatchesNormalEquationsOracle) {
  for (std::size_t d : {8u, 45u}) {
    auto p = planted(3 + d, 30, d);
    Rng rng(d);
    std::normal_distribution<double> nd(0, 0.3);
    for (auto& t : p.t)
      for (auto& v : t) v += nd(rng);
    const double lambda = 0.5;
    const auto reg = train_regressor(p.x, p.t, lambda, 0);
    const auto rows = fixtures::rows_of(p.x);
    for (std::size_t r = 0; r < 4; ++r) {
      std::vector<double> t;
      for (const auto& v : p.t) t.push_back(v[r]);
      const auto sol = reference::ridge_normal_equations(rows, t, lambda);
      BoxRegressor ref = reg;
      ref.weights[r].assign(sol.begin(), sol.end() - 1);
      ref.bias[r] = sol.back();
      EXPECT_NEAR(ridge_objective(reg, p.x, p.t, r), ridge_objective(ref, p.x, p.t, r), 1e-8);
    }
  }
}

TEST(Ridge, LargerLambdaShrinksWeights) {
  const auto p = planted(5, 25, 10);
  double prev = std::numeric_limits<double>::infinity();
  for (double lambda : {1e-4, 1e-2, 1.0}) {
    const auto reg = train_regressor(p.x, p.t, lambda, 0);
    double n = 0;
    for (const auto& row : reg.weights)
      for (double v : row) n += v * v;
    EXPECT_LT(n, prev);
    prev = n;
  }
}

TEST(Ridge, Errors) {
  const auto p = planted(5, 10, 3);
  std::vector<BoxDelta> short_t(p.t.begin(), p.t.end() - 1);
  EXPECT_THROW(train_regressor(p.x, short_t, 1.0, 0), ShapeError);
  EXPECT_THROW(train_regressor(p.x, p.t, 0.0, 0), ConfigError);
}

TEST(RegressorFile, RoundTrip) {
  const auto p = planted(5, 10, 3);
  const auto reg = train_regressor(p.x, p.t, 0.1, 2);
  const auto bytes = encode_regressor(reg);
  EXPECT_EQ(bytes.substr(0, 5), "LREG1");
  EXPECT_EQ(decode_regressor(bytes), reg);
}

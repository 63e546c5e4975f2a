#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "polyseg/geometry.hpp"
#include "polyseg/params.hpp"
#include "support/oracles.hpp"

namespace polyseg {
namespace {

constexpr double kPi = std::numbers::pi;

TEST(MakeParams, CriticalExponent) {
  EXPECT_DOUBLE_EQ(make_params(4, 1, 2, 3).two_star, 4.0);
  EXPECT_DOUBLE_EQ(make_params(5, 2, 3, 3).two_star, 10.0);
  const auto p = make_params(7, 2, 4, 4);
  EXPECT_DOUBLE_EQ(p.two_star * (p.N - 2 * p.m), 2.0 * p.N);
}

TEST(MakeParams, RejectsEachViolatedHypothesisDistinctly) {
  auto message = [](auto&& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  const auto low_n = message([] { make_params(4, 2, 2, 3); });
  const auto bad_sum = message([] { make_params(4, 1, 2, 2); });
  const auto small_block = message([] { make_params(4, 1, 1, 4); });
  EXPECT_NE(low_n.find("N <= 2m"), std::string::npos);
  EXPECT_NE(bad_sum.find("n1 + n2 != N + 1"), std::string::npos);
  EXPECT_NE(small_block.find("n1 < 2 or n2 < 2"), std::string::npos);
}

TEST(ConformalCoefficients, Examples) {
  auto c = conformal_coefficients(make_params(4, 1, 2, 3));
  ASSERT_EQ(c.c.size(), 1u);
  EXPECT_DOUBLE_EQ(c.c[0], 2.0);
  EXPECT_DOUBLE_EQ(c.a[0], 2.0);
  EXPECT_DOUBLE_EQ(c.a[1], 1.0);

  c = conformal_coefficients(make_params(5, 2, 3, 3));
  EXPECT_DOUBLE_EQ(c.c[0], 3.75);
  EXPECT_DOUBLE_EQ(c.c[1], 1.75);
  EXPECT_DOUBLE_EQ(c.a[0], 6.5625);
  EXPECT_DOUBLE_EQ(c.a[1], 5.5);
  EXPECT_DOUBLE_EQ(c.a[2], 1.0);
  EXPECT_EQ(c.k, c.a);

  c = conformal_coefficients(make_params(3, 1, 2, 2));
  EXPECT_DOUBLE_EQ(c.c[0], 0.75);
  EXPECT_DOUBLE_EQ(c.a[0], 0.75);
}

TEST(ConformalCoefficients, ProductMatchesExpansionAtRandomPoints) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lam(-5.0, 5.0);
  for (auto [N, m] : {std::pair{9, 4}, std::pair{7, 3}, std::pair{5, 2}}) {
    const auto c = conformal_coefficients(make_params(N, m, 2, N - 1));
    for (int s = 0; s < 20; ++s) {
      const double x = lam(rng);
      double prod = 1.0;
      for (double ck : c.c) prod *= x + ck;
      double sum = 0.0;
      for (int i = 0; i <= m; ++i) sum += c.a[i] * std::pow(x, i);
      EXPECT_NEAR(prod, sum, 1e-12 * std::max(1.0, std::abs(prod)));
    }
    for (double ck : c.c) EXPECT_GT(ck, 0.0);
    EXPECT_DOUBLE_EQ(c.a[m], 1.0);
  }
}

TEST(SphereArea, ClosedForms) {
  EXPECT_NEAR(sphere_area(1), 2 * kPi, 1e-14);
  EXPECT_NEAR(sphere_area(3), 2 * kPi * kPi, 1e-13);
  EXPECT_NEAR(sphere_area(4), 8 * kPi * kPi / 3, 1e-13);
  EXPECT_THROW(sphere_area(0), ValidationError);
}

TEST(WeightH, Examples) {
  const auto p22 = make_params(3, 1, 2, 2);
  EXPECT_NEAR(weight_h(kPi / 2, p22), 4 * kPi * kPi, 1e-12);
  EXPECT_EQ(weight_h(0.0, make_params(4, 1, 2, 3)), 0.0);
  EXPECT_EQ(weight_h(kPi, make_params(4, 1, 2, 3)), 0.0);
}

TEST(WeightH, MassMatchesMonteCarloSphereVolume) {
  // (1/4) int h dt over (0, pi) against a Monte Carlo estimate of |S^4| from the
  // fraction of the 5-cube inside the unit ball: |S^4| = 5 |B^5|.
  const auto p = make_params(4, 1, 2, 3);
  const double quad = testing_support::adaptive_simpson([&](double t) { return 0.25 * weight_h(t, p); }, 0.0, kPi, 1e-12);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int n = 400000;
  int inside = 0;
  for (int s = 0; s < n; ++s) {
    double r2 = 0;
    for (int d = 0; d < 5; ++d) {
      const double x = u(rng);
      r2 += x * x;
    }
    inside += r2 <= 1.0;
  }
  const double frac = static_cast<double>(inside) / n;
  const double mc = 5.0 * 32.0 * frac;
  const double se = 5.0 * 32.0 * std::sqrt(frac * (1 - frac) / n);
  EXPECT_NEAR(quad, 8 * kPi * kPi / 3, 1e-9);
  EXPECT_NEAR(mc, quad, 4 * se);
}

TEST(WeightPhi, Examples) {
  const auto p23 = make_params(4, 1, 2, 3);
  const auto p33 = make_params(5, 1, 3, 3);
  EXPECT_NEAR(weight_phi(kPi / 2, p33), 0.0, 1e-14);
  EXPECT_NEAR(weight_phi(kPi / 2, p33, PhiConvention::paper_literal), 0.0, 1e-14);
  EXPECT_NEAR(weight_phi(kPi / 2, p23), 2.0, 1e-14);
  EXPECT_NEAR(weight_phi(kPi / 2, p23, PhiConvention::paper_literal), -2.0, 1e-14);
  const auto p22 = make_params(3, 1, 2, 2);
  EXPECT_NEAR(weight_phi(kPi / 4, p22), 4.0, 1e-13);
  EXPECT_NEAR(weight_phi(kPi / 4, p22, PhiConvention::paper_literal), 4.0, 1e-13);
  EXPECT_THROW(weight_phi(0.0, p22), ValidationError);
  EXPECT_THROW(weight_phi(kPi, p22), ValidationError);
}

TEST(WeightDerivatives, ClosedFormsForEqualBlocks) {
  const auto p22 = make_params(3, 1, 2, 2);
  const auto d = weight_derivatives(kPi / 2, p22);
  EXPECT_NEAR(d.dh, 0.0, 1e-12);
  EXPECT_NEAR(d.ddh, -4 * kPi * kPi, 1e-11);
  const auto p33 = make_params(5, 1, 3, 3);
  EXPECT_NEAR(weight_derivatives(kPi / 2, p33).dphi, -2.0 * 4, 1e-12);
  EXPECT_THROW(weight_derivatives(0.0, p33), ValidationError);
}

TEST(WeightDerivatives, MatchCentralDifferences) {
  for (const auto& p : {make_params(4, 1, 2, 3), make_params(5, 2, 3, 3), make_params(6, 1, 4, 3)}) {
    for (auto conv : {PhiConvention::selfadjoint, PhiConvention::paper_literal}) {
      const double t = 1.0;
      const double e = 1e-4;
      const auto d = weight_derivatives(t, p, conv);
      const double hp = (weight_h(t + e, p) - weight_h(t - e, p)) / (2 * e);
      const double hpp = (weight_h(t + e, p) - 2 * weight_h(t, p) + weight_h(t - e, p)) / (e * e);
      EXPECT_NEAR(d.dh, hp, 1e-6 * std::abs(hp));
      EXPECT_NEAR(d.ddh, hpp, 1e-6 * std::abs(hpp));
      const double fp = (weight_phi(t + e, p, conv) - weight_phi(t - e, p, conv)) / (2 * e);
      const double fpp =
          (weight_phi(t + e, p, conv) - 2 * weight_phi(t, p, conv) + weight_phi(t - e, p, conv)) / (e * e);
      EXPECT_NEAR(d.dphi, fp, 1e-6 * std::abs(fp));
      EXPECT_NEAR(d.ddphi, fpp, 1e-5 * std::abs(fpp));
    }
  }
}

TEST(WeightPhi, SelfadjointEqualsFourLogDerivativeOfH) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1e-3, kPi - 1e-3);
  for (const auto& p : {make_params(4, 1, 2, 3), make_params(5, 2, 3, 3), make_params(8, 3, 2, 7)}) {
    for (int s = 0; s < 200; ++s) {
      const double t = u(rng);
      const double lhs = weight_phi(t, p) * weight_h(t, p);
      const double rhs = 4.0 * weight_derivatives(t, p).dh;
      EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(rhs)));
    }
  }
}

TEST(WeightPhi, SphereLaplacianOfCosineIdentity) {
  // 4 w'' + phi w' for w = cos t equals the restricted Laplacian of |x|^2 - |y|^2.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(1e-2, kPi - 1e-2);
  for (const auto& p : {make_params(4, 1, 2, 3), make_params(6, 1, 2, 5), make_params(5, 2, 3, 3)}) {
    for (int s = 0; s < 100; ++s) {
      const double t = u(rng);
      const double lw = -4 * std::cos(t) - weight_phi(t, p) * std::sin(t);
      const double expected = -2.0 * (p.N + 1) * std::cos(t) + 2.0 * (p.n1 - p.n2);
      EXPECT_NEAR(lw, expected, 1e-12 * (1 + std::abs(expected)));
    }
  }
}

TEST(OrbitMap, Examples) {
  const auto p = make_params(4, 1, 2, 3);
  std::vector<double> x0(4, 0.0);
  EXPECT_NEAR(orbit_map_euclidean(x0, p), kPi, 1e-15);
  std::vector<double> e1{1.0, 0.0, 0.0, 0.0};
  EXPECT_NEAR(orbit_map_euclidean(e1, p), 0.0, 1e-7);
  std::vector<double> e2{0.6, 0.8, 0.0, 0.0};
  EXPECT_FALSE(std::isnan(orbit_map_euclidean(e2, p)));
}

TEST(OrbitMap, ClampsRoundingAboveOne) {
  std::vector<double> z{1.0 + 1e-17, 0.0, 0.0};
  EXPECT_EQ(orbit_angle(z, 2), 0.0);
  std::vector<double> z2{std::sqrt(1.0 + 4e-16), 0.0, 0.0};
  EXPECT_EQ(orbit_angle(z2, 1), 0.0);
}

TEST(OrbitMap, InvariantUnderFirstBlockRotation) {
  // Rotating x' in R^{n1} changes neither |x'| nor the other ambient blocks.
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.5);
  const auto p = make_params(5, 1, 3, 3);
  for (int s = 0; s < 200; ++s) {
    std::vector<double> x(5);
    for (auto& xi : x) xi = g(rng);
    // random rotation of the first n1 = 3 coordinates via a random orthogonal matrix (Gram-Schmidt)
    double Q[3][3];
    for (auto& row : Q)
      for (auto& q : row) q = g(rng);
    for (int i = 0; i < 3; ++i) {
      for (int k = 0; k < i; ++k) {
        double d = 0;
        for (int j = 0; j < 3; ++j) d += Q[i][j] * Q[k][j];
        for (int j = 0; j < 3; ++j) Q[i][j] -= d * Q[k][j];
      }
      double n = 0;
      for (int j = 0; j < 3; ++j) n += Q[i][j] * Q[i][j];
      for (int j = 0; j < 3; ++j) Q[i][j] /= std::sqrt(n);
    }
    std::vector<double> y = x;
    for (int i = 0; i < 3; ++i) {
      y[i] = 0;
      for (int j = 0; j < 3; ++j) y[i] += Q[i][j] * x[j];
    }
    EXPECT_NEAR(orbit_map_euclidean(x, p), orbit_map_euclidean(y, p), 1e-10);
  }
}

TEST(ConformalFactor, AtOrigin) {
  const auto p = make_params(4, 1, 2, 3);
  std::vector<double> x0(4, 0.0);
  EXPECT_DOUBLE_EQ(conformal_factor(x0, p), 2.0);
}

}  // namespace
}  // namespace polyseg

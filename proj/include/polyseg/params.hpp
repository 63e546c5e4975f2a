#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "polyseg/error.hpp"

namespace polyseg {

/// Dimensional context of the problem: R^N, operator order m, and the
/// O(n1) x O(n2) block split of R^{N+1}.
struct ProblemParams {
  int N = 4;
  int m = 1;
  int n1 = 2;
  int n2 = 3;
  double two_star = 4.0;  ///< critical exponent 2N/(N-2m)

  /// Exponent (N-2m)/2 of the conformal factor psi.
  double conformal_power() const { return 0.5 * (N - 2 * m); }
};

inline ProblemParams make_params(int N, int m, int n1, int n2) {
  if (N <= 0 || m <= 0 || n1 <= 0 || n2 <= 0) {
    throw ValidationError("dimensions must be positive integers");
  }
  if (N <= 2 * m) {
    throw ValidationError("N <= 2m: need N > 2m for a critical exponent (N=" + std::to_string(N) +
                          ", m=" + std::to_string(m) + ")");
  }
  if (n1 + n2 != N + 1) {
    throw ValidationError("n1 + n2 != N + 1 (n1=" + std::to_string(n1) + ", n2=" + std::to_string(n2) +
                          ", N=" + std::to_string(N) + ")");
  }
  if (n1 < 2 || n2 < 2) {
    throw ValidationError("n1 < 2 or n2 < 2: each symmetry block needs dimension >= 2");
  }
  ProblemParams p;
  p.N = N;
  p.m = m;
  p.n1 = n1;
  p.n2 = n2;
  p.two_star = 2.0 * N / static_cast<double>(N - 2 * m);
  return p;
}

/// Coefficients of the conformal operator prod_k (-Delta_g + c_k) = sum_i a_i (-Delta_g)^i,
/// plus the weights k_i of the norm actually assembled (defaults to a).
struct OperatorCoefficients {
  std::vector<double> c;  ///< c_1..c_m
  std::vector<double> a;  ///< a_0..a_m
  std::vector<double> k;  ///< k_0..k_m

  int order() const { return static_cast<int>(c.size()); }
};

inline OperatorCoefficients conformal_coefficients(const ProblemParams& params) {
  OperatorCoefficients out;
  const int N = params.N;
  const int m = params.m;
  out.c.resize(m);
  for (int k = 1; k <= m; ++k) {
    out.c[k - 1] = static_cast<double>(N - 2 * k) * static_cast<double>(N + 2 * k - 2) / 4.0;
  }
  // Expand prod (lambda + c_k) one factor at a time; poly[i] is the lambda^i coefficient.
  std::vector<double> poly{1.0};
  for (double ck : out.c) {
    std::vector<double> next(poly.size() + 1, 0.0);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      next[i] += ck * poly[i];
      next[i + 1] += poly[i];
    }
    poly = std::move(next);
  }
  out.a = poly;
  out.k = poly;
  return out;
}

/// Same coefficients with user-chosen norm weights.
inline OperatorCoefficients with_norm_weights(OperatorCoefficients coeffs, std::vector<double> k) {
  if (k.size() != coeffs.a.size()) {
    throw ValidationError("norm weights need m+1 entries");
  }
  for (double ki : k) {
    if (!(ki > 0.0) || !std::isfinite(ki)) throw ValidationError("norm weights must be positive");
  }
  coeffs.k = std::move(k);
  return coeffs;
}

}  // namespace polyseg

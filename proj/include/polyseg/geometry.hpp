#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "polyseg/error.hpp"
#include "polyseg/params.hpp"

namespace polyseg {

/// Sign of the (n2 - n1) term in the drift phi.
///  - selfadjoint: phi = 4 h'/h, so that L = (4/h) d/dt (h d/dt).
///  - paper_literal: the opposite sign on (n2 - n1); kept for auditing only.
enum class PhiConvention { selfadjoint, paper_literal };

inline const char* to_string(PhiConvention c) {
  return c == PhiConvention::selfadjoint ? "selfadjoint" : "paper_literal";
}

/// Surface measure of the unit sphere S^d in R^{d+1}.
inline double sphere_area(int d) {
  if (d <= 0) throw ValidationError("sphere_area: dimension must be >= 1");
  const double half = 0.5 * (d + 1);
  return 2.0 * std::pow(std::numbers::pi, half) / std::tgamma(half);
}

/// Orbit-space density h(t) = 2|S^{n1-1}||S^{n2-1}| cos^{n1-1}(t/2) sin^{n2-1}(t/2).
inline double weight_h(double t, const ProblemParams& p) {
  if (t < 0.0 || t > std::numbers::pi) throw ValidationError("weight_h: t outside [0, pi]");
  if (t == 0.0 || t == std::numbers::pi) return 0.0;
  const double pref = 2.0 * sphere_area(p.n1 - 1) * sphere_area(p.n2 - 1);
  return pref * std::pow(std::cos(0.5 * t), p.n1 - 1) * std::pow(std::sin(0.5 * t), p.n2 - 1);
}

namespace detail {

inline void require_open_interval(double t, const char* who) {
  if (!(t > 0.0 && t < std::numbers::pi)) {
    throw ValidationError(std::string(who) + ": t must lie in the open interval (0, pi)");
  }
}

// g = (log h)' and its first two derivatives; phi_selfadjoint = 4g.
struct LogWeight {
  double g, dg, ddg;
};

inline LogWeight log_weight(double t, const ProblemParams& p) {
  const double a = p.n1 - 1;
  const double b = p.n2 - 1;
  const double half = 0.5 * t;
  const double tn = std::tan(half);
  const double ct = 1.0 / tn;
  const double sec2 = 1.0 + tn * tn;
  const double csc2 = 1.0 + ct * ct;
  LogWeight lw;
  lw.g = -0.5 * a * tn + 0.5 * b * ct;
  lw.dg = -0.25 * a * sec2 - 0.25 * b * csc2;
  lw.ddg = -0.25 * a * sec2 * tn + 0.25 * b * csc2 * ct;
  return lw;
}

}  // namespace detail

inline double weight_phi(double t, const ProblemParams& p,
                         PhiConvention convention = PhiConvention::selfadjoint) {
  detail::require_open_interval(t, "weight_phi");
  const double sum = p.n1 + p.n2 - 2;
  const double diff = p.n2 - p.n1;
  const double sign = convention == PhiConvention::selfadjoint ? 1.0 : -1.0;
  return 2.0 / std::sin(t) * (sum * std::cos(t) + sign * diff);
}

struct WeightDerivatives {
  double dh = 0, ddh = 0;
  double dphi = 0, ddphi = 0;
};

/// Closed-form h', h'', phi', phi'' at an interior angle.
inline WeightDerivatives weight_derivatives(double t, const ProblemParams& p,
                                            PhiConvention convention = PhiConvention::selfadjoint) {
  detail::require_open_interval(t, "weight_derivatives");
  const double h = weight_h(t, p);
  const auto lw = detail::log_weight(t, p);
  WeightDerivatives d;
  d.dh = h * lw.g;
  d.ddh = h * (lw.g * lw.g + lw.dg);
  d.dphi = 4.0 * lw.dg;
  d.ddphi = 4.0 * lw.ddg;
  if (convention == PhiConvention::paper_literal) {
    // phi_literal = phi_selfadjoint - 4 (n2 - n1) / sin t
    const double diff = p.n2 - p.n1;
    const double s = std::sin(t);
    const double c = std::cos(t);
    d.dphi += 4.0 * diff * c / (s * s);
    d.ddphi -= 4.0 * diff * (1.0 + c * c) / (s * s * s);
  }
  return d;
}

/// Inverse stereographic projection R^N -> S^N \ {north pole}, pole on the last axis.
inline std::vector<double> inverse_stereographic(std::span<const double> x) {
  double r2 = 0.0;
  for (double xi : x) r2 += xi * xi;
  std::vector<double> z(x.size() + 1);
  const double denom = 1.0 + r2;
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = 2.0 * x[i] / denom;
  z.back() = (r2 - 1.0) / denom;
  return z;
}

/// f(z) = |z'|^2 - |z''|^2 for the first n1 and last n2 ambient coordinates.
inline double block_contrast(std::span<const double> z, int n1) {
  double f = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double sq = z[i] * z[i];
    f += static_cast<int>(i) < n1 ? sq : -sq;
  }
  return f;
}

/// Orbit angle arccos(f) of a point on S^N; f is clamped to [-1, 1].
inline double orbit_angle(std::span<const double> z, int n1) {
  return std::acos(std::clamp(block_contrast(z, n1), -1.0, 1.0));
}

/// Orbit angle of x in R^N, i.e. q composed with the inverse stereographic map.
inline double orbit_map_euclidean(std::span<const double> x, const ProblemParams& p) {
  if (static_cast<int>(x.size()) != p.N) throw ValidationError("orbit_map_euclidean: point must lie in R^N");
  const auto z = inverse_stereographic(x);
  return orbit_angle(z, p.n1);
}

/// Conformal factor psi(x) = (2 / (1 + |x|^2))^{(N-2m)/2}.
inline double conformal_factor(std::span<const double> x, const ProblemParams& p) {
  double r2 = 0.0;
  for (double xi : x) r2 += xi * xi;
  return std::pow(2.0 / (1.0 + r2), p.conformal_power());
}

}  // namespace polyseg

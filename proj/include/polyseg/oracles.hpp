#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "polyseg/energy.hpp"
#include "polyseg/error.hpp"
#include "polyseg/geometry.hpp"
#include "polyseg/grid.hpp"
#include "polyseg/jet.hpp"
#include "polyseg/operators.hpp"
#include "polyseg/random.hpp"

namespace polyseg {

/// Outcome of one independent check. pass == (discrepancy <= tolerance) unless skipped.
struct OracleReport {
  std::string name;
  std::vector<double> computed;
  std::vector<double> reference;
  double discrepancy = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  bool skipped = false;
  long samples = 0;
  std::uint64_t seed = 0;
  std::string note;

  void decide() { pass = skipped || discrepancy <= tolerance; }
};

/// (1/4) int h dt against |S^N|; the quadrature side of every sphere integral.
inline OracleReport mass_identity(const Grid& grid) {
  OracleReport r;
  r.name = "mass_identity";
  const double area = sphere_area(grid.params.N);
  const double q = 0.25 * node_quadrature(Vector::Ones(grid.M), grid);
  r.computed = {q};
  r.reference = {area};
  r.discrepancy = std::abs(q - area) / area;
  r.tolerance = 1e-3;
  r.decide();
  return r;
}

/// Monte Carlo int_{S^N} w(q(z)) dV against (1/4) int w h dt.
inline OracleReport mc_sphere_integral(const Profile& w, const Grid& grid, long samples, std::uint64_t seed) {
  if (samples < 10000) throw ValidationError("mc_sphere_integral: need at least 1e4 samples");
  if (w.values.size() != grid.M) throw ValidationError("mc_sphere_integral: profile not on grid");
  const auto& p = grid.params;
  Rng rng(seed);
  std::vector<double> z(p.N + 1);
  double sum = 0.0, sum_sq = 0.0;
  for (long k = 0; k < samples; ++k) {
    double norm_sq = 0.0;
    for (double& c : z) {
      c = rng.normal();
      norm_sq += c * c;
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& c : z) c *= inv;
    const double v = interpolate(grid, w.values, orbit_angle(z, p.n1));
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(samples);
  const double mean = sum / n;
  const double var = std::max(sum_sq / n - mean * mean, 0.0) * n / (n - 1.0);
  const double area = sphere_area(p.N);

  OracleReport r;
  r.name = "mc_sphere_integral";
  r.samples = samples;
  r.seed = seed;
  const double estimate = area * mean;
  const double stderr_ = area * std::sqrt(var / n);
  const double quad = 0.25 * node_quadrature(w.values, grid);
  r.computed = {estimate, stderr_};
  r.reference = {quad};
  r.discrepancy = std::abs(estimate - quad);
  // The sampled profile is the piecewise-linear interpolant, the quadrature is midpoint:
  // both are O(dt^2) away from the exact integral.
  const double floor = 4.0 * grid.dt * grid.dt * area * w.values.cwiseAbs().maxCoeff();
  r.tolerance = 4.0 * stderr_ + floor;
  r.decide();
  return r;
}

/// L cos t against the restriction formula 2(n1 - n2) - 2(N + 1) cos t under both phi
/// conventions, and |grad f|^2 = 4(1 - f^2) at random sphere points.
inline OracleReport check_orbit_identities(const ProblemParams& p, int M, std::uint64_t seed, int points = 1000) {
  OracleReport r;
  r.name = "orbit_identities";
  r.seed = seed;
  r.samples = points;
  double err[2] = {0.0, 0.0};
  const PhiConvention conv[2] = {PhiConvention::selfadjoint, PhiConvention::paper_literal};
  for (int c = 0; c < 2; ++c) {
    const Grid grid = make_grid(M, p, conv[c]);
    // Closed-form L applied to cos, so the identity is tested without discretization error.
    for (int j = 0; j < grid.M; ++j) {
      const double t = grid.nodes[j];
      const double Lcos = -4.0 * std::cos(t) - grid.phi[j] * std::sin(t);
      const double ref = 2.0 * (p.n1 - p.n2) - 2.0 * (p.N + 1) * std::cos(t);
      err[c] = std::max(err[c], std::abs(Lcos - ref) / (1.0 + std::abs(ref)));
    }
  }
  Rng rng(seed);
  std::vector<double> z(p.N + 1);
  double grad_err = 0.0;
  for (int k = 0; k < points; ++k) {
    double norm_sq = 0.0;
    for (double& c : z) {
      c = rng.normal();
      norm_sq += c * c;
    }
    for (double& c : z) c /= std::sqrt(norm_sq);
    const double f = block_contrast(z, p.n1);
    // Ambient gradient of |x|^2 - |y|^2 projected onto the tangent space.
    double tangent_sq = 0.0;
    for (int i = 0; i <= p.N; ++i) {
      const double g = (i < p.n1 ? 2.0 : -2.0) * z[i];
      const double proj = g - 2.0 * f * z[i];
      tangent_sq += proj * proj;
    }
    grad_err = std::max(grad_err, std::abs(tangent_sq - 4.0 * (1.0 - f * f)));
  }
  r.computed = {err[0], err[1], grad_err};
  r.reference = {0.0, 0.0, 0.0};
  const double tol_L = 1e-6;
  const double tol_grad = 1e-12;
  r.discrepancy = std::max(err[0] / tol_L, grad_err / tol_grad);
  r.tolerance = 1.0;
  const bool literal_ok = err[1] <= tol_L;
  r.note = std::string("selfadjoint ") + (err[0] <= tol_L ? "consistent" : "inconsistent") + "; paper_literal " +
           (literal_ok ? "consistent" : "inconsistent, max error " + std::to_string(err[1]));
  r.decide();
  return r;
}

namespace detail {

/// Smooth random direction: low cosine modes restricted to the mask.
inline Vector smooth_direction(const Grid& grid, const CellMask& mask, Rng& rng) {
  Vector v = Vector::Zero(grid.M);
  for (int q = 0; q <= 8; ++q) {
    const double c = rng.normal() / (1.0 + q);
    for (int j = 0; j < grid.M; ++j) v[j] += c * std::cos(q * grid.nodes[j]);
  }
  apply_mask(v, mask);
  return v;
}

inline double fd_relative(double fd, double an, double value) {
  return std::abs(fd - an) / std::max(std::abs(an), 1e-8 * (1.0 + std::abs(value)));
}

/// Fourth-order central difference of f at 0; f(s) may return NaN to signal an
/// undefined point, which propagates.
template <class F>
double central_difference(F&& f, double eps) {
  return (8.0 * (f(eps) - f(-eps)) - (f(2.0 * eps) - f(-2.0 * eps))) / (12.0 * eps);
}

inline void check_fd_epsilon(double eps) {
  if (!(eps >= 1e-8 && eps <= 1e-4)) throw ValidationError("fd check: epsilon must lie in [1e-8, 1e-4]");
}

}  // namespace detail

inline constexpr int kFdDirections = 32;

/// Central differences of the single-species energy against its coordinate gradient.
inline OracleReport fd_check_single(const Profile& w, double mu, const EnergyModel& model, double eps,
                                    std::uint64_t seed) {
  detail::check_fd_epsilon(eps);
  const auto& grid = model.grid();
  const CellMask mask = model.mask(w);
  const auto base = single_energy(w, mu, model);
  Rng rng(seed);
  OracleReport r;
  r.name = "fd_single";
  r.seed = seed;
  r.samples = kFdDirections;
  r.tolerance = 1e-5;
  for (int d = 0; d < kFdDirections; ++d) {
    const Vector v = detail::smooth_direction(grid, mask, rng);
    const double fd = detail::central_difference(
        [&](double s) {
          Profile x = w;
          x.values += s * v;
          return single_energy(x, mu, model).energy;
        },
        eps);
    const double an = base.gradient.dot(v);
    r.discrepancy = std::max(r.discrepancy, detail::fd_relative(fd, an, base.energy));
  }
  r.computed = {r.discrepancy};
  r.reference = {0.0};
  r.decide();
  return r;
}

/// Central differences of J on a bundle against the coordinate gradient.
inline OracleReport fd_check_system(const ProfileBundle& wb, const CouplingMatrix& cm, const EnergyModel& model,
                                    double eps, std::uint64_t seed) {
  detail::check_fd_epsilon(eps);
  const auto& grid = model.grid();
  const auto grad = system_gradient(wb, cm, model);
  const double value = system_energy_value(wb, cm, model);
  Rng rng(seed);
  OracleReport r;
  r.name = "fd_system";
  r.seed = seed;
  r.samples = kFdDirections;
  r.tolerance = 1e-5;
  for (int d = 0; d < kFdDirections; ++d) {
    std::vector<Vector> v(cm.ell);
    double an = 0.0;
    for (int i = 0; i < cm.ell; ++i) {
      v[i] = detail::smooth_direction(grid, model.mask(wb.components[i]), rng);
      an += grad[i].dot(v[i]);
    }
    const double fd = detail::central_difference(
        [&](double s) {
          ProfileBundle x = wb;
          for (int i = 0; i < cm.ell; ++i) x.components[i].values += s * v[i];
          return system_energy_value(x, cm, model);
        },
        eps);
    r.discrepancy = std::max(r.discrepancy, detail::fd_relative(fd, an, value));
  }
  r.computed = {r.discrepancy};
  r.reference = {0.0};
  r.decide();
  return r;
}

/// Psi along retraction curves normalize(w + s v), v tangent, against sum_i B(grad_i, v_i).
/// Outside the admissible set the check reports skipped.
inline OracleReport fd_check_psi(const ProfileBundle& unit, const CouplingMatrix& cm, const EnergyModel& model,
                                 double eps, std::uint64_t seed) {
  detail::check_fd_epsilon(eps);
  const auto& grid = model.grid();
  OracleReport r;
  r.name = "fd_psi";
  r.seed = seed;
  r.tolerance = 1e-4;
  const ProfileBundle w = normalized(unit, model);
  const auto base = psi_value_grad(w, cm, model);
  if (!base.in_U) {
    r.skipped = true;
    r.note = "bundle outside the admissible set";
    r.decide();
    return r;
  }
  Rng rng(seed);
  int skipped = 0;
  for (int d = 0; d < kFdDirections; ++d) {
    std::vector<Vector> v(cm.ell);
    double an = 0.0;
    for (int i = 0; i < cm.ell; ++i) {
      const Vector& wi = w.components[i].values;
      v[i] = detail::smooth_direction(grid, model.mask(w.components[i]), rng);
      v[i] -= model.inner(v[i], wi) / model.norm_sq(wi) * wi;
      an += model.inner(base.gradient[i], v[i]);
    }
    const double fd = detail::central_difference(
        [&](double s) {
          ProfileBundle x = w;
          for (int i = 0; i < cm.ell; ++i) x.components[i].values += s * v[i];
          const auto e = psi_value_grad(normalized(x, model), cm, model);
          return e.in_U ? e.value : std::numeric_limits<double>::quiet_NaN();
        },
        eps);
    if (std::isnan(fd)) {
      ++skipped;
      continue;
    }
    r.discrepancy = std::max(r.discrepancy, detail::fd_relative(fd, an, base.value));
  }
  r.samples = kFdDirections - skipped;
  if (skipped == kFdDirections) {
    r.skipped = true;
    r.note = "every direction left the admissible set";
  } else if (skipped > 0) {
    r.note = std::to_string(skipped) + " directions left the admissible set";
  }
  r.computed = {r.discrepancy};
  r.reference = {0.0};
  r.decide();
  return r;
}

inline constexpr int kOdeEndExclusion = 5;

enum class OdeForm { energy, printed };

/// Linear part of the strong Euler-Lagrange operator at the nodes, for m = 1, 2:
///   m = 1: -k1 (h w')' + (k0/4) h w
///   m = 2: k2 (4 h w'''' + 8 h' w''') + C1 w'' + C2 w' + (k0/4) h w
/// with C1 = k2 (4h'' + (h phi)' - h phi^2/4) - k1 h and
///      C2 = k2 ((h phi)'' - (h phi^2)'/4) - k1 h' from differentiating the energy.
/// OdeForm::printed adds (h phi)' to C1 and (h phi)'' to C2, the alternative coefficients
/// in circulation for this equation, so the two can be compared on data.
inline Vector ode_operator(const Vector& u, const Grid& grid, const OperatorCoefficients& coeffs,
                           OdeForm form = OdeForm::energy) {
  const int m = grid.params.m;
  if (m != 1 && m != 2) {
    throw ValidationError("ode_residual: strong form only for m = 1, 2 (got m = " + std::to_string(m) + ")");
  }
  if (u.size() != grid.M) throw ValidationError("ode_residual: profile not on grid");
  const Vector d1 = grid.diff * u;
  const Vector d2 = grid.diff2 * u;
  const Vector d3 = grid.diff * d2;
  const Vector d4 = grid.diff2 * d2;
  const auto& k = coeffs.k;
  Vector out(grid.M);
  for (int j = 0; j < grid.M; ++j) {
    const double h = grid.h[j], dh = grid.dh[j], ddh = grid.ddh[j];
    const double ph = grid.phi[j], dph = grid.dphi[j], ddph = grid.ddphi[j];
    if (m == 1) {
      out[j] = -k[1] * (h * d2[j] + dh * d1[j]) + 0.25 * k[0] * h * u[j];
      continue;
    }
    const double hphi1 = dh * ph + h * dph;
    const double hphi2 = ddh * ph + 2.0 * dh * dph + h * ddph;
    double C1 = k[2] * (4.0 * ddh + hphi1 - 0.25 * h * ph * ph) - k[1] * h;
    double C2 = k[2] * (hphi2 - 0.25 * dh * ph * ph - 0.5 * h * ph * dph) - k[1] * dh;
    if (form == OdeForm::printed) {
      C1 += k[2] * hphi1;
      C2 += k[2] * hphi2;
    }
    out[j] = k[2] * (4.0 * h * d4[j] + 8.0 * dh * d3[j]) + C1 * d2[j] + C2 * d1[j] + 0.25 * k[0] * h * u[j];
  }
  return out;
}

/// h-weighted L2 norm of f / h over nodes at least kOdeEndExclusion away from the ends.
inline double ode_norm(const Vector& f, const Grid& grid) {
  double s = 0.0;
  for (int j = kOdeEndExclusion; j < grid.M - kOdeEndExclusion; ++j) s += f[j] * f[j] / grid.h[j];
  return std::sqrt(s * grid.dt);
}

/// Strong residual of the reduced single equation relative to the nonlinear term.
/// computed = {energy-form residual, printed-form residual}; only the first decides pass.
inline OracleReport ode_residual(const Profile& w, const Grid& grid, const OperatorCoefficients& coeffs,
                                 double tolerance = 1e-3) {
  const double p = grid.params.two_star;
  Vector nonlinear(grid.M);
  for (int j = 0; j < grid.M; ++j) nonlinear[j] = 0.25 * grid.h[j] * detail::signed_pow(w.values[j], p - 1.0);
  const Vector derived = ode_operator(w.values, grid, coeffs) - nonlinear;
  const Vector printed = ode_operator(w.values, grid, coeffs, OdeForm::printed) - nonlinear;
  const double scale = ode_norm(nonlinear, grid);
  const double denom = scale > 0.0 ? scale : 1.0;
  OracleReport r;
  r.name = "ode_residual";
  r.computed = {ode_norm(derived, grid) / denom, ode_norm(printed, grid) / denom};
  r.reference = {0.0};
  r.discrepancy = r.computed[0];
  r.tolerance = tolerance;
  if (grid.params.m == 2 && r.computed[1] > tolerance) {
    r.note = "printed coefficients disagree with the energy form (residual " + std::to_string(r.computed[1]) + ")";
  }
  r.decide();
  return r;
}

/// Constants of the pointwise coercivity bounds on a window [eps, pi - eps].
struct CoercivityConstants {
  double eps = 0.0;
  double min_h = 0.0;
  double max_h = 0.0;
  std::vector<double> eta;  ///< eta_0..eta_m
  std::vector<double> mu;   ///< mu_0..mu_m (mu_0, mu_1 unused, set to 1)
  double eta_common = 0.0;
  double mu_common = 1.0;
  std::vector<double> k;  ///< k_i = (2 mu)^{-i}
  double A = 0.0;
};

namespace detail {

inline Jet phi_jet(double t0, int order, const ProblemParams& p, PhiConvention conv) {
  const double sum = p.n1 + p.n2 - 2;
  const double sign = conv == PhiConvention::selfadjoint ? 1.0 : -1.0;
  const Jet num = sum * Jet::cos(t0, order) + Jet::constant(sign * (p.n2 - p.n1), order);
  return 2.0 * (num / Jet::sin(t0, order));
}

/// The order-i term operator: L^{i/2} for even i, (L^{(i-1)/2})' for odd i.
inline Jet term_operator(Jet w, int i, const Jet& phi) {
  for (int r = 0; r < i / 2; ++r) {
    const Jet d1 = w.derivative();
    w = 4.0 * d1.derivative() + phi * d1;
  }
  if (i % 2 == 1) w = w.derivative();
  return w;
}

/// Pointwise integrand of term i: (1/4)(L^{i/2} w)^2 h or ((L^{(i-1)/2} w)')^2 h.
inline double term_density(const Jet& w, int i, const Jet& phi, double h) {
  const double v = term_operator(w, i, phi)[0];
  return (i % 2 == 0 ? 0.25 : 1.0) * v * v * h;
}

/// Taylor jet at t0 of the polynomial sum_n a_n (t - c)^n.
inline Jet polynomial_jet(const std::vector<double>& a, double c, double t0, int order) {
  Jet j(order);
  const double x = t0 - c;
  for (int k = 0; k <= order; ++k) {
    double s = 0.0;
    double binom = 1.0;  // C(n, k) for n = k
    for (int n = k; n < static_cast<int>(a.size()); ++n) {
      if (n > k) binom = binom * n / (n - k);
      s += a[n] * binom * std::pow(x, n - k);
    }
    j[k] = s;
  }
  return j;
}

inline constexpr int kWindowSamples = 4001;

}  // namespace detail

inline CoercivityConstants coercivity_constants(double eps, const ProblemParams& p,
                                                PhiConvention conv = PhiConvention::selfadjoint) {
  if (!(eps > 0.0 && eps < 0.5 * std::numbers::pi)) {
    throw ValidationError("coercivity: need 0 < epsilon < pi/2");
  }
  const int m = p.m;
  CoercivityConstants c;
  c.eps = eps;
  c.min_h = std::numeric_limits<double>::infinity();
  c.max_h = 0.0;
  std::vector<double> mu1(m + 1, 0.0);
  const int order = 2 * m + 2;
  for (int s = 0; s < detail::kWindowSamples; ++s) {
    const double t = eps + (std::numbers::pi - 2.0 * eps) * s / (detail::kWindowSamples - 1);
    const double h = weight_h(t, p);
    c.min_h = std::min(c.min_h, h);
    c.max_h = std::max(c.max_h, h);
    const Jet phi = detail::phi_jet(t, order, p, conv);
    for (int i = 2; i <= m; ++i) {
      // Coefficient of w^{(k)} in the term operator, read off from the jet s^k / k!.
      double fact = 1.0;
      for (int kk = 1; kk < i; ++kk) {
        fact *= kk;
        Jet e(order);
        e[kk] = 1.0 / fact;
        mu1[i] = std::max(mu1[i], std::abs(detail::term_operator(e, i, phi)[0]));
      }
    }
  }
  c.eta.assign(m + 1, 0.0);
  c.mu.assign(m + 1, 1.0);
  c.eta[0] = 0.25 * c.min_h;
  for (int i = 1; i <= m; ++i) {
    const double r = 1.01 * mu1[i];
    if (i == 1) {
      c.eta[i] = c.min_h;
    } else if (i % 2 == 0) {
      c.eta[i] = (std::pow(4.0, i - 1) - std::pow(2.0, i - 2)) * c.min_h;
      c.mu[i] = c.max_h * std::pow(2.0, i) * r * r * (i - 1) / (4.0 * c.eta[i]);
    } else {
      c.eta[i] = (std::pow(4.0, i - 1) - std::pow(2.0, i - 1)) * c.min_h;
      c.mu[i] = c.max_h * std::pow(2.0, i - 1) * r * r * (i - 1) / c.eta[i];
    }
    c.mu[i] = std::max(c.mu[i], 1.0);
  }
  c.eta_common = *std::min_element(c.eta.begin(), c.eta.end());
  c.mu_common = 1.0;
  for (int i = 1; i <= m; ++i) c.mu_common = std::max(c.mu_common, c.eta[i] * c.mu[i] / c.eta_common);
  c.k.assign(m + 1, 1.0);
  for (int i = 1; i <= m; ++i) c.k[i] = std::pow(2.0 * c.mu_common, -i);
  double amin = std::pow(2.0 * c.mu_common, -m);
  for (int i = 1; i < m; ++i) {
    double ai = std::pow(2.0 * c.mu_common, -i);
    for (int j = i + 1; j <= m; ++j) ai -= std::pow(2.0, -j) * std::pow(c.mu_common, 1 - j);
    amin = std::min(amin, ai);
  }
  c.A = c.eta_common * amin;
  return c;
}

/// Random-polynomial probe of the pointwise bound
///   term_i(w) >= eta_i (|w^{(i)}|^2 - mu_i sum_{j=1}^{i-1} |w^{(j)}|^2)
/// and of the integrated bound sum_i k_i int term_i >= A ||w||^2_{H^m(eps, pi - eps)}.
inline OracleReport coercivity_probe(double eps, int i, const ProblemParams& p, int trials, std::uint64_t seed,
                                     PhiConvention conv = PhiConvention::selfadjoint) {
  if (i < 1 || i > p.m) throw ValidationError("coercivity_probe: need 1 <= i <= m");
  if (trials < 1) throw ValidationError("coercivity_probe: trials must be positive");
  const auto c = coercivity_constants(eps, p, conv);
  const int m = p.m;
  const int degree = 2 * m + 2;
  const int order = degree;
  const double center = 0.5 * std::numbers::pi;
  const double len = std::numbers::pi - 2.0 * eps;
  constexpr int kPoints = 64;
  constexpr int kPanels = 400;
  Rng rng(seed);
  double pointwise = -std::numeric_limits<double>::infinity();
  double integrated = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<double> a(degree + 1);
    for (double& x : a) x = rng.normal();
    for (int s = 0; s < kPoints; ++s) {
      const double t = eps + len * rng.uniform();
      const Jet w = detail::polynomial_jet(a, center, t, order);
      const Jet phi = detail::phi_jet(t, order, p, conv);
      const double lhs = detail::term_density(w, i, phi, weight_h(t, p));
      double lower = std::pow(w.derivative_at(i), 2);
      double sub = 0.0;
      for (int j = 1; j < i; ++j) sub += std::pow(w.derivative_at(j), 2);
      const double rhs = c.eta[i] * (lower - c.mu[i] * sub);
      pointwise = std::max(pointwise, (rhs - lhs) / (1.0 + std::abs(lhs) + std::abs(rhs)));
    }
    // Composite Simpson on the window for both sides of the integrated bound.
    double norm = 0.0, sobolev = 0.0;
    for (int q = 0; q <= 2 * kPanels; ++q) {
      const double t = eps + len * q / (2.0 * kPanels);
      const double wq = (q == 0 || q == 2 * kPanels) ? 1.0 : (q % 2 == 1 ? 4.0 : 2.0);
      const Jet w = detail::polynomial_jet(a, center, t, order);
      const Jet phi = detail::phi_jet(t, order, p, conv);
      const double h = weight_h(t, p);
      for (int j = 0; j <= m; ++j) {
        norm += wq * c.k[j] * detail::term_density(w, j, phi, h);
        sobolev += wq * std::pow(w.derivative_at(j), 2);
      }
    }
    const double step = len / (6.0 * kPanels);
    norm *= step;
    sobolev *= step;
    integrated = std::max(integrated, (c.A * sobolev - norm) / (norm + c.A * sobolev));
  }
  OracleReport r;
  r.name = "coercivity_probe";
  r.seed = seed;
  r.samples = trials;
  r.computed = {pointwise, integrated};
  r.reference = {c.eta[i], c.mu[i], c.eta_common, c.mu_common, c.A};
  // Violations are positive; a small slack absorbs round-off in the jets.
  r.discrepancy = std::max(pointwise, integrated);
  r.tolerance = 1e-12;
  r.decide();
  return r;
}

}  // namespace polyseg

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "polyseg/error.hpp"
#include "polyseg/grid.hpp"
#include "polyseg/operators.hpp"
#include "polyseg/params.hpp"

namespace polyseg {

using Matrix = Eigen::MatrixXd;

/// Couplings of the l-species system: self-interaction mu_i and competitive
/// couplings lambda_ij |u_j|^alpha_ij |u_i|^beta_ij.
struct CouplingMatrix {
  int ell = 1;
  std::vector<double> mu{1.0};
  Matrix lambda = Matrix::Zero(1, 1);
  Matrix alpha = Matrix::Zero(1, 1);
  Matrix beta = Matrix::Zero(1, 1);

  /// Throws on any violated invariant. two_star is the critical exponent.
  void validate(double two_star) const {
    const auto n = static_cast<Eigen::Index>(ell);
    if (ell < 1) throw ValidationError("couplings: ell must be >= 1");
    if (static_cast<int>(mu.size()) != ell) throw ValidationError("couplings: mu needs ell entries");
    if (lambda.rows() != n || lambda.cols() != n || alpha.rows() != n || alpha.cols() != n || beta.rows() != n ||
        beta.cols() != n) {
      throw ValidationError("couplings: lambda, alpha, beta must be ell x ell");
    }
    for (double m : mu) {
      if (!(m > 0.0) || !std::isfinite(m)) throw ValidationError("couplings: mu_i must be positive");
    }
    for (int i = 0; i < ell; ++i) {
      for (int j = 0; j < ell; ++j) {
        if (i == j) continue;
        if (!(lambda(i, j) < 0.0) || !std::isfinite(lambda(i, j))) {
          throw ValidationError("couplings: lambda_ij must be negative for i != j");
        }
        if (lambda(i, j) != lambda(j, i)) throw ValidationError("couplings: lambda must be symmetric");
        if (!(alpha(i, j) > 1.0) || !(beta(i, j) > 1.0)) {
          throw ValidationError("couplings: alpha_ij and beta_ij must exceed 1");
        }
        if (alpha(i, j) != beta(j, i)) throw ValidationError("couplings: need alpha_ij = beta_ji");
        if (std::abs(alpha(i, j) + beta(i, j) - two_star) > 1e-12 * two_star) {
          throw ValidationError("couplings: need alpha_ij + beta_ij = 2*_m");
        }
      }
    }
  }
};

/// Uniform couplings: every off-diagonal lambda_ij = lambda, alpha = beta = 2*/2.
inline CouplingMatrix uniform_coupling(int ell, double mu, double lambda, double two_star) {
  CouplingMatrix cm;
  cm.ell = ell;
  cm.mu.assign(ell, mu);
  cm.lambda = Matrix::Constant(ell, ell, lambda);
  cm.alpha = Matrix::Constant(ell, ell, 0.5 * two_star);
  cm.beta = Matrix::Constant(ell, ell, 0.5 * two_star);
  cm.lambda.diagonal().setZero();
  cm.alpha.diagonal().setZero();
  cm.beta.diagonal().setZero();
  if (ell > 1) cm.validate(two_star);
  return cm;
}

/// Same couplings with every off-diagonal lambda replaced.
inline CouplingMatrix with_lambda(CouplingMatrix cm, double lambda) {
  for (int i = 0; i < cm.ell; ++i)
    for (int j = 0; j < cm.ell; ++j)
      if (i != j) cm.lambda(i, j) = lambda;
  return cm;
}

struct ProfileBundle {
  std::vector<Profile> components;

  int size() const { return static_cast<int>(components.size()); }
};

struct EnergyReport {
  double energy = 0.0;
  std::vector<double> norm_sq;      ///< B(u_i, u_i)
  std::vector<double> nonlinear;    ///< mu_i (1/4) int |u_i|^p h
  Matrix overlap;                   ///< (1/4) int |u_j|^alpha_ij |u_i|^beta_ij h
  Matrix weighted_overlap;          ///< beta_ij * overlap_ij
  std::vector<double> nehari_residual;  ///< d_i J(u) u_i
  double gradient_norm = 0.0;       ///< B-norm of the Riesz gradient

  /// (m/N) sum_i ||u_i||^2
  double nehari_energy(const ProblemParams& p) const {
    double s = 0.0;
    for (double n : norm_sq) s += n;
    return static_cast<double>(p.m) / p.N * s;
  }
};

/// Energy functional on a fixed grid: the assembled stiffness plus cached cell factorizations.
class EnergyModel {
 public:
  EnergyModel(Grid grid, OperatorCoefficients coeffs)
      : grid_(std::move(grid)), coeffs_(std::move(coeffs)), stiffness_(grid_, coeffs_) {}

  const Grid& grid() const { return grid_; }
  const OperatorCoefficients& coeffs() const { return coeffs_; }
  const Stiffness& stiffness() const { return stiffness_; }
  const ProblemParams& params() const { return grid_.params; }
  double exponent() const { return grid_.params.two_star; }

  double inner(const Vector& w, const Vector& v) const { return stiffness_.inner(w, v); }
  double norm_sq(const Vector& w) const { return stiffness_.norm_sq(w); }

  /// Factorized K on a cell; built once per distinct mask and shared afterwards.
  std::shared_ptr<const CellSolver> solver(const CellMask& mask) const {
    std::lock_guard lock(mutex_);
    for (const auto& [key, s] : cache_)
      if (key == mask) return s;
    auto s = std::make_shared<const CellSolver>(stiffness_, mask);
    cache_.emplace_back(mask, s);
    return s;
  }

  CellMask mask(const Profile& w) const { return mask_of(grid_, w); }

 private:
  Grid grid_;
  OperatorCoefficients coeffs_;
  Stiffness stiffness_;
  mutable std::mutex mutex_;
  mutable std::vector<std::pair<CellMask, std::shared_ptr<const CellSolver>>> cache_;
};

namespace detail {

// sign(x) |x|^q
inline double signed_pow(double x, double q) {
  if (x == 0.0) return 0.0;
  return std::copysign(std::pow(std::abs(x), q), x);
}

inline void check_bundle(const ProfileBundle& wb, const CouplingMatrix& cm, const Grid& grid) {
  if (wb.size() != cm.ell) {
    throw ValidationError("bundle has " + std::to_string(wb.size()) + " components but couplings expect " +
                          std::to_string(cm.ell));
  }
  for (const auto& w : wb.components) require_on_grid(w.values, grid, "bundle");
}

inline double pair_overlap(const Vector& wi, const Vector& wj, double alpha, double beta, const Grid& grid) {
  double sum = 0.0;
  for (int k = 0; k < grid.M; ++k) {
    if (wi[k] == 0.0 || wj[k] == 0.0) continue;
    sum += std::pow(std::abs(wj[k]), alpha) * std::pow(std::abs(wi[k]), beta) * grid.h[k];
  }
  return 0.25 * grid.dt * sum;
}

}  // namespace detail

/// Coordinate gradient dJ/dw_j of the single-species energy, restricted to the cell.
struct SingleEnergy {
  double energy = 0.0;
  Vector gradient;
};

inline SingleEnergy single_energy(const Profile& w, double mu, const EnergyModel& model) {
  const auto& grid = model.grid();
  detail::require_on_grid(w.values, grid, "single_energy");
  const double p = model.exponent();
  const Vector Kw = model.stiffness().apply(w.values);
  SingleEnergy out;
  out.energy = 0.5 * model.norm_sq(w.values) - mu / p * weighted_lp(w.values, p, grid);
  out.gradient = Kw;
  for (int j = 0; j < grid.M; ++j) {
    out.gradient[j] -= mu * 0.25 * grid.dt * grid.h[j] * detail::signed_pow(w.values[j], p - 1.0);
  }
  apply_mask(out.gradient, model.mask(w));
  return out;
}

inline SingleEnergy single_energy(const Profile& w, double mu, const Grid& grid, const OperatorCoefficients& coeffs) {
  return single_energy(w, mu, EnergyModel(grid, coeffs));
}

/// Nonlinear part of the coordinate gradient: component i is the dual vector of
/// v -> mu_i (1/4) Q[|w_i|^{p-2} w_i v h] + sum_j lambda_ij beta_ij (1/4) Q[|w_j|^alpha |w_i|^{beta-2} w_i v h].
inline std::vector<Vector> system_forces(const ProfileBundle& wb, const CouplingMatrix& cm, const EnergyModel& model) {
  const auto& grid = model.grid();
  detail::check_bundle(wb, cm, grid);
  const double p = model.exponent();
  std::vector<Vector> out;
  out.reserve(cm.ell);
  for (int i = 0; i < cm.ell; ++i) {
    const Vector& wi = wb.components[i].values;
    Vector f = Vector::Zero(grid.M);
    for (int k = 0; k < grid.M; ++k) {
      if (wi[k] == 0.0) continue;
      double force = cm.mu[i] * detail::signed_pow(wi[k], p - 1.0);
      for (int j = 0; j < cm.ell; ++j) {
        if (j == i) continue;
        const double wj = wb.components[j].values[k];
        if (wj == 0.0) continue;
        force += cm.lambda(i, j) * cm.beta(i, j) * std::pow(std::abs(wj), cm.alpha(i, j)) *
                 detail::signed_pow(wi[k], cm.beta(i, j) - 1.0);
      }
      f[k] = 0.25 * grid.dt * grid.h[k] * force;
    }
    apply_mask(f, model.mask(wb.components[i]));
    out.push_back(std::move(f));
  }
  return out;
}

/// Coordinate gradients of the system energy, one per component (zero outside each cell).
inline std::vector<Vector> system_gradient(const ProfileBundle& wb, const CouplingMatrix& cm,
                                           const EnergyModel& model) {
  auto grads = system_forces(wb, cm, model);
  for (int i = 0; i < cm.ell; ++i) {
    Vector g = model.stiffness().apply(wb.components[i].values);
    apply_mask(g, model.mask(wb.components[i]));
    grads[i] = g - grads[i];
  }
  return grads;
}

/// Riesz gradients K_cell^{-1} g_i = u_i - K_cell^{-1} f_i. Written this way it avoids
/// forming K u, whose round-off grows with the condition number of K.
inline std::vector<Vector> riesz_gradient(const ProfileBundle& wb, const CouplingMatrix& cm, const EnergyModel& model) {
  auto forces = system_forces(wb, cm, model);
  for (int i = 0; i < cm.ell; ++i) {
    const auto solver = model.solver(model.mask(wb.components[i]));
    forces[i] = wb.components[i].values - solver->solve(forces[i]);
  }
  return forces;
}

inline std::vector<Vector> system_gradient(const ProfileBundle& wb, const CouplingMatrix& cm, const Grid& grid,
                                           const OperatorCoefficients& coeffs) {
  return system_gradient(wb, cm, EnergyModel(grid, coeffs));
}

/// The energy J(wb) alone, without the gradient solves of system_energy.
inline double system_energy_value(const ProfileBundle& wb, const CouplingMatrix& cm, const EnergyModel& model) {
  const auto& grid = model.grid();
  detail::check_bundle(wb, cm, grid);
  const double p = model.exponent();
  double energy = 0.0;
  for (int i = 0; i < cm.ell; ++i) {
    const Vector& wi = wb.components[i].values;
    energy += 0.5 * model.norm_sq(wi) - cm.mu[i] / p * weighted_lp(wi, p, grid);
    for (int j = 0; j < cm.ell; ++j) {
      if (j == i) continue;
      energy -= 0.5 * cm.lambda(i, j) *
                detail::pair_overlap(wi, wb.components[j].values, cm.alpha(i, j), cm.beta(i, j), grid);
    }
  }
  return energy;
}

inline EnergyReport system_energy(const ProfileBundle& wb, const CouplingMatrix& cm, const EnergyModel& model) {
  const auto& grid = model.grid();
  detail::check_bundle(wb, cm, grid);
  const double p = model.exponent();
  const int ell = cm.ell;
  EnergyReport r;
  r.norm_sq.resize(ell);
  r.nonlinear.resize(ell);
  r.nehari_residual.resize(ell);
  r.overlap = Matrix::Zero(ell, ell);
  r.weighted_overlap = Matrix::Zero(ell, ell);
  double energy = 0.0;
  for (int i = 0; i < ell; ++i) {
    const Vector& wi = wb.components[i].values;
    r.norm_sq[i] = model.norm_sq(wi);
    r.nonlinear[i] = cm.mu[i] * weighted_lp(wi, p, grid);
    energy += 0.5 * r.norm_sq[i] - r.nonlinear[i] / p;
  }
  for (int i = 0; i < ell; ++i) {
    for (int j = 0; j < ell; ++j) {
      if (i == j) continue;
      r.overlap(i, j) = detail::pair_overlap(wb.components[i].values, wb.components[j].values, cm.alpha(i, j),
                                             cm.beta(i, j), grid);
      r.weighted_overlap(i, j) = cm.beta(i, j) * r.overlap(i, j);
      energy -= 0.5 * cm.lambda(i, j) * r.overlap(i, j);
    }
  }
  r.energy = energy;
  const auto riesz = riesz_gradient(wb, cm, model);
  double gsq = 0.0;
  for (int i = 0; i < ell; ++i) {
    // d_i J(u) u_i from the scalar pieces; going through the Riesz gradient would lose
    // about log10(cond K) digits.
    double res = r.norm_sq[i] - r.nonlinear[i];
    for (int j = 0; j < ell; ++j)
      if (j != i) res -= cm.lambda(i, j) * r.weighted_overlap(i, j);
    r.nehari_residual[i] = res;
    gsq += model.norm_sq(riesz[i]);
  }
  r.gradient_norm = std::sqrt(std::max(0.0, gsq));
  return r;
}

inline EnergyReport system_energy(const ProfileBundle& wb, const CouplingMatrix& cm, const Grid& grid,
                                  const OperatorCoefficients& coeffs) {
  return system_energy(wb, cm, EnergyModel(grid, coeffs));
}

/// Scale s with s w on the Nehari manifold of the single equation.
inline double nehari_scale_single(const Profile& w, double mu, const EnergyModel& model) {
  const double b = model.norm_sq(w.values);
  const double lp = mu * weighted_lp(w.values, model.exponent(), model.grid());
  if (!(lp > 0.0) || !(b > 0.0)) throw ValidationError("nehari_scale_single: zero profile");
  return std::pow(b / lp, 1.0 / (model.exponent() - 2.0));
}

inline double nehari_scale_single(const Profile& w, double mu, const Grid& grid, const OperatorCoefficients& coeffs) {
  return nehari_scale_single(w, mu, EnergyModel(grid, coeffs));
}

/// Scalar data of a bundle that the scaling problem s -> J(s u) depends on.
struct ScalingData {
  std::vector<double> norm_sq;    // A_i
  std::vector<double> nonlinear;  // b_i = mu_i (1/4) int |w_i|^p h
  Matrix overlap;                 // O_ij
};

inline ScalingData scaling_data(const ProfileBundle& wb, const CouplingMatrix& cm, const EnergyModel& model) {
  const auto& grid = model.grid();
  detail::check_bundle(wb, cm, grid);
  ScalingData d;
  d.norm_sq.resize(cm.ell);
  d.nonlinear.resize(cm.ell);
  d.overlap = Matrix::Zero(cm.ell, cm.ell);
  for (int i = 0; i < cm.ell; ++i) {
    const Vector& wi = wb.components[i].values;
    if (!wi.allFinite()) throw ValidationError("nehari_scale_multi: non-finite profile values");
    d.norm_sq[i] = model.norm_sq(wi);
    d.nonlinear[i] = cm.mu[i] * weighted_lp(wi, model.exponent(), grid);
    for (int j = 0; j < cm.ell; ++j) {
      if (j != i) d.overlap(i, j) = detail::pair_overlap(wi, wb.components[j].values, cm.alpha(i, j), cm.beta(i, j), grid);
    }
  }
  return d;
}

/// Result of maximizing s -> J(s u) over (0, inf)^l. in_U is false when the maximizer
/// does not exist (the scaling blows up) or Newton fails to settle.
struct NehariScaling {
  bool in_U = false;
  std::vector<double> s;
  int iterations = 0;
  double residual = 0.0;
};

inline constexpr double kNotInUThreshold = 1e6;
inline constexpr int kNehariMaxIterations = 60;

/// Newton ascent on x = log s for the stationarity system d_i J(s u)[s_i u_i] = 0,
/// started from the decoupled single scalings unless a start is given.
inline NehariScaling nehari_scale_multi(const ScalingData& d, const CouplingMatrix& cm, double p,
                                        const std::optional<std::vector<double>>& start = std::nullopt) {
  const int ell = cm.ell;
  for (int i = 0; i < ell; ++i) {
    if (!(d.norm_sq[i] > 0.0) || !(d.nonlinear[i] > 0.0)) {
      throw ValidationError("nehari_scale_multi: component " + std::to_string(i) + " is zero");
    }
  }
  Eigen::VectorXd x(ell);
  for (int i = 0; i < ell; ++i) x[i] = std::log(d.norm_sq[i] / d.nonlinear[i]) / (p - 2.0);
  if (start) {
    if (static_cast<int>(start->size()) != ell) throw ValidationError("nehari_scale_multi: start needs ell entries");
    for (int i = 0; i < ell; ++i) {
      if (!((*start)[i] > 0.0) || !std::isfinite((*start)[i])) {
        throw ValidationError("nehari_scale_multi: start must be positive");
      }
      x[i] = std::log((*start)[i]);
    }
  }

  auto value = [&](const Eigen::VectorXd& y) {
    double j = 0.0;
    for (int i = 0; i < ell; ++i) {
      j += 0.5 * d.norm_sq[i] * std::exp(2.0 * y[i]) - d.nonlinear[i] / p * std::exp(p * y[i]);
      for (int k = 0; k < ell; ++k) {
        if (k == i || d.overlap(i, k) == 0.0) continue;
        j -= 0.5 * cm.lambda(i, k) * d.overlap(i, k) * std::exp(cm.alpha(i, k) * y[k] + cm.beta(i, k) * y[i]);
      }
    }
    return j;
  };

  NehariScaling out;
  Eigen::VectorXd F(ell);
  Matrix H(ell, ell);
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  for (int iter = 0; iter <= kNehariMaxIterations; ++iter) {
    double residual = 0.0;
    H.setZero();
    for (int i = 0; i < ell; ++i) {
      const double quad = d.norm_sq[i] * std::exp(2.0 * x[i]);
      const double pw = d.nonlinear[i] * std::exp(p * x[i]);
      F[i] = quad - pw;
      H(i, i) = 2.0 * quad - p * pw;
      for (int k = 0; k < ell; ++k) {
        if (k == i || d.overlap(i, k) == 0.0) continue;
        const double c = cm.lambda(i, k) * d.overlap(i, k) * std::exp(cm.alpha(i, k) * x[k] + cm.beta(i, k) * x[i]);
        F[i] -= cm.beta(i, k) * c;
        H(i, i) -= cm.beta(i, k) * cm.beta(i, k) * c;
        H(i, k) = -cm.beta(i, k) * cm.alpha(i, k) * c;
      }
      residual = std::max(residual, std::abs(F[i]) / quad);
    }
    out.iterations = iter;
    out.residual = residual;
    if (!std::isfinite(residual)) break;
    if (residual < 1e-13) {
      out.in_U = true;
      break;
    }
    if (iter == kNehariMaxIterations) break;

    Eigen::VectorXd dir;
    Eigen::LLT<Matrix> llt(-H);
    if (llt.info() == Eigen::Success) {
      dir = llt.solve(F);
    } else {
      dir.resize(ell);
      for (int i = 0; i < ell; ++i) dir[i] = F[i] / std::max(std::abs(H(i, i)), d.norm_sq[i] * std::exp(2.0 * x[i]));
    }
    const double cap = dir.cwiseAbs().maxCoeff();
    if (cap > 1.0) dir /= cap;
    const double j0 = value(x);
    const double slope = F.dot(dir);
    double tau = 1.0;
    Eigen::VectorXd trial = x + dir;
    for (int bt = 0; bt < 40; ++bt) {
      trial = x + tau * dir;
      // The slack keeps round-off in j from rejecting the final Newton steps.
      if (value(trial) >= j0 + 1e-4 * tau * slope - 64.0 * kEps * std::abs(j0)) break;
      tau *= 0.5;
    }
    x = trial;
    if (x.maxCoeff() > std::log(kNotInUThreshold)) break;
  }
  out.s.resize(ell);
  for (int i = 0; i < ell; ++i) out.s[i] = std::exp(x[i]);
  for (double s : out.s)
    if (!(s <= kNotInUThreshold)) out.in_U = false;
  return out;
}

inline NehariScaling nehari_scale_multi(const ProfileBundle& wb, const CouplingMatrix& cm, const EnergyModel& model) {
  return nehari_scale_multi(scaling_data(wb, cm, model), cm, model.exponent());
}

inline NehariScaling nehari_scale_multi(const ProfileBundle& wb, const CouplingMatrix& cm, const Grid& grid,
                                        const OperatorCoefficients& coeffs) {
  return nehari_scale_multi(wb, cm, EnergyModel(grid, coeffs));
}

inline ProfileBundle scaled(const ProfileBundle& wb, const std::vector<double>& s) {
  ProfileBundle out = wb;
  for (std::size_t i = 0; i < s.size(); ++i) out.components[i].values *= s[i];
  return out;
}

/// Psi(u) = J(s_u u) on the product of B-unit spheres, with its Riemannian gradient.
struct PsiEvaluation {
  bool in_U = false;
  double value = 0.0;
  std::vector<double> s;
  std::vector<Vector> gradient;   ///< tangent Riesz gradient per component
  std::vector<Vector> riesz;      ///< s_i K^{-1} g_i(s u) before projection
  double gradient_norm = 0.0;
};

inline PsiEvaluation psi_value_grad(const ProfileBundle& unit, const CouplingMatrix& cm, const EnergyModel& model) {
  PsiEvaluation out;
  const auto scaling = nehari_scale_multi(unit, cm, model);
  out.s = scaling.s;
  if (!scaling.in_U) return out;
  out.in_U = true;
  const ProfileBundle on_nehari = scaled(unit, scaling.s);
  // On the Nehari set J = (m/N) sum ||s_i u_i||^2, but evaluate J directly so that
  // Psi stays exact even when the scaling is only converged to round-off.
  const auto riesz = riesz_gradient(on_nehari, cm, model);
  const double energy = system_energy_value(on_nehari, cm, model);
  out.value = energy;
  double gsq = 0.0;
  for (int i = 0; i < cm.ell; ++i) {
    const Vector& wi = unit.components[i].values;
    Vector g = scaling.s[i] * riesz[i];
    out.riesz.push_back(g);
    const double wnorm = model.norm_sq(wi);
    g -= (model.inner(g, wi) / wnorm) * wi;
    gsq += model.norm_sq(g);
    out.gradient.push_back(std::move(g));
  }
  out.gradient_norm = std::sqrt(gsq);
  return out;
}

inline PsiEvaluation psi_value_grad(const ProfileBundle& unit, const CouplingMatrix& cm, const Grid& grid,
                                    const OperatorCoefficients& coeffs) {
  return psi_value_grad(unit, cm, EnergyModel(grid, coeffs));
}

/// Rescale every component to unit B-norm.
inline ProfileBundle normalized(ProfileBundle wb, const EnergyModel& model) {
  for (auto& w : wb.components) {
    const double n = std::sqrt(model.norm_sq(w.values));
    if (!(n > 0.0)) throw ValidationError("normalized: zero component");
    w.values /= n;
  }
  return wb;
}

}  // namespace polyseg

#pragma once

#include <Eigen/SparseCholesky>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "polyseg/error.hpp"
#include "polyseg/grid.hpp"
#include "polyseg/params.hpp"

namespace polyseg {

namespace detail {

inline void require_on_grid(const Vector& v, const Grid& grid, const char* who) {
  if (v.size() != grid.M) {
    throw ValidationError(std::string(who) + ": profile has " + std::to_string(v.size()) +
                          " values but the grid has " + std::to_string(grid.M) + " nodes");
  }
}

}  // namespace detail

/// w' at the nodes. Cell profiles are zero outside their cell, so the stencils see
/// a zero extension across clamped endpoints.
inline Vector derivative(const Vector& values, const Grid& grid) {
  detail::require_on_grid(values, grid, "derivative");
  return grid.diff * values;
}

inline Vector derivative(const Profile& w, const Grid& grid) { return derivative(w.values, grid); }

/// w' at the interior faces t = k dt, k = 1..M-1.
inline Vector face_derivative(const Vector& values, const Grid& grid) {
  detail::require_on_grid(values, grid, "face_derivative");
  return grid.face_diff * values;
}

/// reps-fold application of L = 4 d^2/dt^2 + phi d/dt. Each application loses two
/// orders of smoothness, so accuracy degrades quickly for reps > 2.
inline Vector apply_L(const Vector& values, const Grid& grid, int reps) {
  if (reps < 0) throw ValidationError("apply_L: repetition count must be >= 0");
  detail::require_on_grid(values, grid, "apply_L");
  Vector out = values;
  for (int i = 0; i < reps; ++i) out = grid.L * out;
  return out;
}

inline Vector apply_L(const Profile& w, const Grid& grid, int reps) { return apply_L(w.values, grid, reps); }

/// Midpoint quadrature of f h over (0, pi).
inline double node_quadrature(const Vector& f, const Grid& grid) { return grid.dt * f.dot(grid.h); }

/// Quadrature of f h over the interior faces (trapezoid rule; h vanishes at 0 and pi).
inline double face_quadrature(const Vector& f, const Grid& grid) {
  return grid.dt * f.dot(grid.face_h.segment(1, grid.M - 1));
}

/// Discrete weighted form
///   sum_{i even} k_i/4 int (L^{i/2} w)(L^{i/2} v) h + sum_{i odd} k_i int (L^{(i-1)/2} w)'(L^{(i-1)/2} v)' h.
/// Even terms use nodes; odd terms use the staggered face derivative.
inline double bilinear_form(const Vector& w, const Vector& v, const Grid& grid, const OperatorCoefficients& coeffs) {
  detail::require_on_grid(w, grid, "bilinear_form");
  detail::require_on_grid(v, grid, "bilinear_form");
  const int m = static_cast<int>(coeffs.k.size()) - 1;
  double total = 0.0;
  Vector Lw = w;
  Vector Lv = v;
  for (int i = 0; i <= m; ++i) {
    if (i % 2 == 0) {
      if (i > 0) {
        Lw = grid.L * Lw;
        Lv = grid.L * Lv;
      }
      total += 0.25 * coeffs.k[i] * node_quadrature(Lw.cwiseProduct(Lv), grid);
    } else {
      const Vector dw = grid.face_diff * Lw;
      const Vector dv = grid.face_diff * Lv;
      total += coeffs.k[i] * face_quadrature(dw.cwiseProduct(dv), grid);
    }
  }
  return total;
}

inline double bilinear_form(const Profile& w, const Profile& v, const Grid& grid, const OperatorCoefficients& coeffs) {
  return bilinear_form(w.values, v.values, grid, coeffs);
}

/// (1/4) int |w|^p h dt, the reduced form of int_{R^N} |u|^p.
inline double weighted_lp(const Vector& values, double p, const Grid& grid) {
  if (!(p >= 1.0)) throw ValidationError("weighted_lp: exponent must be >= 1");
  detail::require_on_grid(values, grid, "weighted_lp");
  return 0.25 * node_quadrature(values.cwiseAbs().array().pow(p).matrix(), grid);
}

inline double weighted_lp(const Profile& w, double p, const Grid& grid) { return weighted_lp(w.values, p, grid); }

/// Assembled matrix K of the bilinear form, B(w, v) = w^T K v.
///
/// K = sum_i F_i^T W_i F_i with F_i the i-th derivative-type operator and W_i a
/// positive diagonal weight. Inner products are evaluated through the factors: for
/// smooth w the product w^T (K w) cancels about log10(cond K) digits, which is
/// enough to swamp late line-search decreases.
class Stiffness {
 public:
  Stiffness(const Grid& grid, const OperatorCoefficients& coeffs) : M_(grid.M) {
    const int m = static_cast<int>(coeffs.k.size()) - 1;
    Vector node_w = grid.dt * grid.h;
    Vector face_w = grid.dt * grid.face_h.segment(1, grid.M - 1);
    SparseMatrix power(grid.M, grid.M);
    power.setIdentity();
    K_.resize(grid.M, grid.M);
    for (int i = 0; i <= m; ++i) {
      Factor f;
      if (i % 2 == 0) {
        if (i > 0) power = SparseMatrix(grid.L * power);
        f.op = power;
        f.weight = (0.25 * coeffs.k[i]) * node_w;
      } else {
        f.op = SparseMatrix(grid.face_diff * power);
        f.weight = coeffs.k[i] * face_w;
      }
      f.op_t = SparseMatrix(f.op.transpose());
      K_ += SparseMatrix(f.op_t * f.weight.asDiagonal() * f.op);
      factors_.push_back(std::move(f));
    }
    K_.prune(0.0);
  }

  const SparseMatrix& matrix() const { return K_; }
  int size() const { return M_; }

  /// K w through the factors, so it is the exact derivative of norm_sq as computed.
  Vector apply(const Vector& w) const {
    Vector out = Vector::Zero(M_);
    for (const auto& f : factors_) out += f.op_t * f.weight.cwiseProduct(f.op * w);
    return out;
  }

  double inner(const Vector& w, const Vector& v) const {
    double total = 0.0;
    for (const auto& f : factors_) {
      const Vector fw = f.op * w;
      const Vector fv = f.op * v;
      total += fw.dot(f.weight.cwiseProduct(fv));
    }
    return total;
  }

  double norm_sq(const Vector& w) const {
    double total = 0.0;
    for (const auto& f : factors_) {
      const Vector fw = f.op * w;
      total += fw.dot(f.weight.cwiseProduct(fw));
    }
    return total;
  }

 private:
  struct Factor {
    SparseMatrix op;
    SparseMatrix op_t;
    Vector weight;
  };
  int M_;
  SparseMatrix K_;
  std::vector<Factor> factors_;
};

/// Factorization of K restricted to the free nodes of one cell. Solves return
/// full-length vectors that vanish outside the cell.
class CellSolver {
 public:
  CellSolver(const Stiffness& stiffness, const CellMask& mask) : mask_(mask), M_(stiffness.size()) {
    const int n = mask.count();
    Eigen::SparseMatrix<double> block = stiffness.matrix().block(mask.first, mask.first, n, n);
    auto ldlt = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
    ldlt->compute(block);
    if (ldlt->info() != Eigen::Success) throw ValidationError("CellSolver: stiffness block is not factorizable");
    if ((ldlt->vectorD().array() <= 0.0).any()) {
      throw ValidationError("CellSolver: stiffness block is not positive definite");
    }
    ldlt_ = std::move(ldlt);
  }

  const CellMask& mask() const { return mask_; }

  /// K_cell^{-1} applied to the cell part of a dual vector.
  Vector solve(const Vector& rhs) const {
    Vector out = Vector::Zero(M_);
    out.segment(mask_.first, mask_.count()) = ldlt_->solve(rhs.segment(mask_.first, mask_.count()));
    return out;
  }

 private:
  CellMask mask_;
  int M_;
  std::shared_ptr<const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
};

}  // namespace polyseg

#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "polyseg/error.hpp"
#include "polyseg/geometry.hpp"
#include "polyseg/params.hpp"

namespace polyseg {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Midpoint discretization of (0, pi) with precomputed weights.
///
/// Nodes t_j = (j + 1/2) dt carry the unknowns. Faces t = k dt, k = 0..M, carry the
/// staggered first derivative used by the odd-order energy terms; h vanishes at the
/// two outer faces so they never contribute.
struct Grid {
  ProblemParams params;
  PhiConvention convention = PhiConvention::selfadjoint;
  int M = 0;
  double dt = 0.0;
  Vector nodes;
  Vector h, phi, dh, ddh, dphi, ddphi;  // at nodes
  Vector face_h;                        // at faces 0..M

  // Discrete operators (M x M, except face_diff which is (M-1) x M for faces 1..M-1).
  SparseMatrix diff;       // 4th-order collocated d/dt, one-sided at the two outer nodes per end
  SparseMatrix diff2;      // 4th-order collocated d^2/dt^2
  SparseMatrix face_diff;  // 4th-order staggered d/dt at interior faces, even ghosts at 0 and pi
  SparseMatrix L;          // 4 d^2/dt^2 + phi d/dt

  int size() const { return M; }
};

inline constexpr int kMinGridNodes = 16;

namespace detail {

using Triplets = std::vector<Eigen::Triplet<double>>;

inline void add_row(Triplets& t, int row, int first_col, std::initializer_list<double> coeffs, double scale) {
  int col = first_col;
  for (double c : coeffs) {
    if (c != 0.0) t.emplace_back(row, col, c * scale);
    ++col;
  }
}

inline void add_row_reversed(Triplets& t, int row, int last_col, std::initializer_list<double> coeffs,
                             double scale) {
  int col = last_col;
  for (double c : coeffs) {
    if (c != 0.0) t.emplace_back(row, col, c * scale);
    --col;
  }
}

inline SparseMatrix first_derivative_matrix(int M, double dt) {
  Triplets t;
  const double s = 1.0 / (12.0 * dt);
  add_row(t, 0, 0, {-25, 48, -36, 16, -3}, s);
  add_row(t, 1, 0, {-3, -10, 18, -6, 1}, s);
  for (int j = 2; j < M - 2; ++j) add_row(t, j, j - 2, {1, -8, 0, 8, -1}, s);
  add_row_reversed(t, M - 1, M - 1, {-25, 48, -36, 16, -3}, -s);
  add_row_reversed(t, M - 2, M - 1, {-3, -10, 18, -6, 1}, -s);
  SparseMatrix D(M, M);
  D.setFromTriplets(t.begin(), t.end());
  return D;
}

inline SparseMatrix second_derivative_matrix(int M, double dt) {
  Triplets t;
  const double s = 1.0 / (12.0 * dt * dt);
  add_row(t, 0, 0, {45, -154, 214, -156, 61, -10}, s);
  add_row(t, 1, 0, {10, -15, -4, 14, -6, 1}, s);
  for (int j = 2; j < M - 2; ++j) add_row(t, j, j - 2, {-1, 16, -30, 16, -1}, s);
  add_row_reversed(t, M - 1, M - 1, {45, -154, 214, -156, 61, -10}, s);
  add_row_reversed(t, M - 2, M - 1, {10, -15, -4, 14, -6, 1}, s);
  SparseMatrix D2(M, M);
  D2.setFromTriplets(t.begin(), t.end());
  return D2;
}

inline SparseMatrix face_derivative_matrix(int M, double dt) {
  Triplets t;
  const double s = 1.0 / (24.0 * dt);
  const double w[4] = {1.0, -27.0, 27.0, -1.0};
  for (int k = 1; k <= M - 1; ++k) {
    // face k sits between nodes k-1 and k; stencil nodes k-2 .. k+1
    for (int q = 0; q < 4; ++q) {
      int col = k - 2 + q;
      if (col < 0) col = -col - 1;            // even reflection about t = 0
      if (col > M - 1) col = 2 * M - 1 - col;  // even reflection about t = pi
      t.emplace_back(k - 1, col, w[q] * s);
    }
  }
  SparseMatrix F(M - 1, M);
  F.setFromTriplets(t.begin(), t.end());  // duplicates are summed
  return F;
}

}  // namespace detail

/// Midpoints (j + 1/2) pi / M, j = 0..M-1.
inline Vector grid_nodes(int M) {
  Vector t(M);
  for (int j = 0; j < M; ++j) t[j] = (j + 0.5) * std::numbers::pi / M;
  return t;
}

inline Grid make_grid(int M, const ProblemParams& params,
                      PhiConvention convention = PhiConvention::selfadjoint) {
  if (M < kMinGridNodes) {
    throw ValidationError("make_grid: need at least " + std::to_string(kMinGridNodes) + " nodes, got " +
                          std::to_string(M));
  }
  Grid g;
  g.params = params;
  g.convention = convention;
  g.M = M;
  g.dt = std::numbers::pi / M;
  g.nodes = grid_nodes(M);
  g.h.resize(M);
  g.phi.resize(M);
  g.dh.resize(M);
  g.ddh.resize(M);
  g.dphi.resize(M);
  g.ddphi.resize(M);
  for (int j = 0; j < M; ++j) {
    const double t = g.nodes[j];
    g.h[j] = weight_h(t, params);
    g.phi[j] = weight_phi(t, params, convention);
    const auto d = weight_derivatives(t, params, convention);
    g.dh[j] = d.dh;
    g.ddh[j] = d.ddh;
    g.dphi[j] = d.dphi;
    g.ddphi[j] = d.ddphi;
  }
  g.face_h.resize(M + 1);
  g.face_h[0] = 0.0;
  g.face_h[M] = 0.0;
  for (int k = 1; k < M; ++k) g.face_h[k] = weight_h(k * g.dt, params);

  g.diff = detail::first_derivative_matrix(M, g.dt);
  g.diff2 = detail::second_derivative_matrix(M, g.dt);
  g.face_diff = detail::face_derivative_matrix(M, g.dt);
  SparseMatrix phi_diag(M, M);
  {
    detail::Triplets t;
    for (int j = 0; j < M; ++j) t.emplace_back(j, j, g.phi[j]);
    phi_diag.setFromTriplets(t.begin(), t.end());
  }
  g.L = 4.0 * g.diff2 + SparseMatrix(phi_diag * g.diff);
  return g;
}

/// Support interval of a profile, when it is not the whole of (0, pi).
struct Cell {
  double a = 0.0;
  double b = std::numbers::pi;
};

enum class EndpointKind { natural, clamped };

/// Boundary behavior per endpoint; clamped means w = ... = w^{(m-1)} = 0 there.
struct CellBC {
  EndpointKind left = EndpointKind::natural;
  EndpointKind right = EndpointKind::natural;
  friend bool operator==(const CellBC&, const CellBC&) = default;
};

/// Contiguous node range [first, last) strictly inside a cell.
struct CellMask {
  int first = 0;
  int last = 0;
  CellBC bc;

  int count() const { return last - first; }
  bool contains(int j) const { return j >= first && j < last; }
  friend bool operator==(const CellMask&, const CellMask&) = default;
};

/// Nodal values of a reduced profile w on a grid, optionally confined to a cell.
struct Profile {
  Vector values;
  std::optional<Cell> cell;
};

inline constexpr double kEndpointTol = 1e-12;

inline CellMask cell_mask(const Grid& grid, double a, double b, int m) {
  if (!(a >= -kEndpointTol && b <= std::numbers::pi + kEndpointTol && a < b)) {
    throw ValidationError("cell_mask: need 0 <= a < b <= pi");
  }
  if (b - a < 4.0 * grid.dt * m) throw ValidationError("cell_mask: interval too thin");
  CellMask mask;
  mask.bc.left = a <= kEndpointTol ? EndpointKind::natural : EndpointKind::clamped;
  mask.bc.right = b >= std::numbers::pi - kEndpointTol ? EndpointKind::natural : EndpointKind::clamped;
  const auto begin = grid.nodes.data();
  const auto end = begin + grid.M;
  mask.first = static_cast<int>(std::upper_bound(begin, end, a) - begin);
  mask.last = static_cast<int>(std::lower_bound(begin, end, b) - begin);
  if (mask.count() <= 0) throw ValidationError("cell_mask: interval too thin");
  return mask;
}

inline CellMask full_mask(const Grid& grid) { return CellMask{0, grid.M, {}}; }

inline CellMask mask_of(const Grid& grid, const Profile& w) {
  if (!w.cell) return full_mask(grid);
  return cell_mask(grid, w.cell->a, w.cell->b, grid.params.m);
}

/// Zero every node outside the mask.
inline void apply_mask(Vector& v, const CellMask& mask) {
  for (int j = 0; j < mask.first; ++j) v[j] = 0.0;
  for (int j = mask.last; j < v.size(); ++j) v[j] = 0.0;
}

/// Piecewise-linear interpolation of nodal values; flat outside the outermost nodes.
inline double interpolate(const Grid& grid, const Vector& values, double t) {
  const double s = t / grid.dt - 0.5;
  if (s <= 0.0) return values[0];
  if (s >= grid.M - 1) return values[grid.M - 1];
  const int j = static_cast<int>(s);
  const double frac = s - j;
  return (1.0 - frac) * values[j] + frac * values[j + 1];
}

template <class F>
Profile sample_profile(const Grid& grid, F&& fn, std::optional<Cell> cell = std::nullopt) {
  Profile w;
  w.values.resize(grid.M);
  for (int j = 0; j < grid.M; ++j) w.values[j] = fn(grid.nodes[j]);
  w.cell = cell;
  if (cell) apply_mask(w.values, cell_mask(grid, cell->a, cell->b, grid.params.m));
  return w;
}

}  // namespace polyseg

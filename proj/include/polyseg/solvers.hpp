#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "polyseg/energy.hpp"
#include "polyseg/error.hpp"
#include "polyseg/parallel.hpp"
#include "polyseg/random.hpp"

namespace polyseg {

struct SolveOptions {
  int max_iters = 20000;
  double tol_grad = 1e-8;    ///< on ||grad Psi||_B / |Psi|
  double tol_energy = 1e-10; ///< relative energy change counted as stagnation
  int stall_window = 50;     ///< consecutive stagnant iterations before stopping
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  double step_cap = 1.0;
  int multistart = 1;
  std::uint64_t seed = 1;
  int jobs = 1;
  /// Add the coupling term's diagonal Hessian to K in the descent metric. Without it
  /// the conditioning grows like |lambda| and strongly coupled solves stall.
  bool coupling_preconditioner = true;

  void validate() const {
    if (max_iters < 1) throw ValidationError("solver: max_iters must be >= 1");
    if (!(tol_grad > 0.0) || !(tol_energy > 0.0)) throw ValidationError("solver: tolerances must be positive");
    if (stall_window < 1) throw ValidationError("solver: stall_window must be >= 1");
    if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw ValidationError("solver: armijo_c must lie in (0, 1)");
    if (!(backtrack > 0.0 && backtrack < 1.0)) throw ValidationError("solver: backtrack must lie in (0, 1)");
    if (!(step_cap > 0.0)) throw ValidationError("solver: step_cap must be positive");
    if (multistart < 1) throw ValidationError("solver: multistart must be >= 1");
    if (jobs < 1) throw ValidationError("solver: jobs must be >= 1");
  }
};

/// Relative evaluation noise of Psi tolerated by the line-search fallback.
inline constexpr double kPsiNoise = 1e-11;

/// Outcome of one Riemannian descent run on the product of B-unit spheres.
struct DescentResult {
  ProfileBundle unit;      ///< final point on the spheres
  ProfileBundle bundle;    ///< s * unit, a point of the Nehari set
  std::vector<double> s;
  double energy = 0.0;
  double residual = 0.0;   ///< ||grad Psi||_B / |Psi|
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
  std::vector<double> history;  ///< Psi per accepted iterate
};

namespace detail {

inline double bundle_inner(const EnergyModel& model, const std::vector<Vector>& a, const std::vector<Vector>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += model.inner(a[i], b[i]);
  return s;
}

inline ProfileBundle retract(const ProfileBundle& unit, const std::vector<Vector>& dir, double tau,
                             const EnergyModel& model) {
  ProfileBundle out = unit;
  for (std::size_t i = 0; i < dir.size(); ++i) {
    out.components[i].values -= tau * dir[i];
    out.components[i].values /= std::sqrt(model.norm_sq(out.components[i].values));
  }
  return out;
}

/// Per-component metric P_i = K + D_i on the cell, D_i the (positive) diagonal of the
/// coupling Hessian at the Nehari point. Symbolic analysis is done once.
class CouplingMetric {
 public:
  CouplingMetric(const EnergyModel& model, const ProfileBundle& unit) : model_(&model) {
    for (const auto& w : unit.components) {
      Slot& slot = slots_.emplace_back();
      slot.mask = model.mask(w);
      const int n = slot.mask.count();
      slot.base = model.stiffness().matrix().block(slot.mask.first, slot.mask.first, n, n);
      slot.ldlt.analyzePattern(slot.base);
    }
  }

  /// Tangent descent direction for component i (before the minus sign).
  Vector direction(int i, const ProfileBundle& unit, const PsiEvaluation& ev, const CouplingMatrix& cm) {
    Slot& slot = slots_[i];
    const auto& grid = model_->grid();
    const int n = slot.mask.count();
    Eigen::SparseMatrix<double> P = slot.base;
    const Vector& wi = unit.components[i].values;
    for (int k = 0; k < n; ++k) {
      const int node = slot.mask.first + k;
      const double ui = ev.s[i] * wi[node];
      double d = 0.0;
      for (int j = 0; j < cm.ell; ++j) {
        if (j == i) continue;
        const double uj = ev.s[j] * unit.components[j].values[node];
        if (uj == 0.0) continue;
        const double b = cm.beta(i, j);
        const double ai = std::abs(ui);
        // |u_i|^{beta-2} blows up at zeros when beta < 2; cap it by the local scale.
        const double pw = b >= 2.0 ? std::pow(ai, b - 2.0) : std::pow(std::max(ai, 1e-3 * std::abs(uj)), b - 2.0);
        d += -cm.lambda(i, j) * b * (b - 1.0) * std::pow(std::abs(uj), cm.alpha(i, j)) * pw;
      }
      P.coeffRef(k, k) += 0.25 * grid.dt * grid.h[node] * d;
    }
    slot.ldlt.factorize(P);
    slot.P = std::move(P);
    const Vector dual = model_->stiffness().apply(ev.riesz[i]);
    Vector out = Vector::Zero(grid.M);
    out.segment(slot.mask.first, n) = slot.ldlt.solve(dual.segment(slot.mask.first, n));
    out -= (model_->inner(out, wi) / model_->norm_sq(wi)) * wi;
    return out;
  }

  /// a^T P_i b with the metric built by the last direction() call for component i.
  double inner(int i, const Vector& a, const Vector& b) const {
    const Slot& slot = slots_[i];
    const int n = slot.mask.count();
    return a.segment(slot.mask.first, n).dot(slot.P * b.segment(slot.mask.first, n));
  }

 private:
  struct Slot {
    CellMask mask;
    Eigen::SparseMatrix<double> base;
    Eigen::SparseMatrix<double> P;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  };
  const EnergyModel* model_;
  std::deque<Slot> slots_;
};

inline bool has_coupling(const CouplingMatrix& cm) {
  for (int i = 0; i < cm.ell; ++i)
    for (int j = 0; j < cm.ell; ++j)
      if (i != j && cm.lambda(i, j) != 0.0) return true;
  return false;
}

}  // namespace detail

/// Minimizes Psi from `init` by preconditioned Riemannian gradient descent with
/// Barzilai-Borwein trial steps and Armijo backtracking.
inline DescentResult minimize_psi(const EnergyModel& model, const CouplingMatrix& cm, const ProfileBundle& init,
                                  const SolveOptions& opts) {
  opts.validate();
  DescentResult out;
  ProfileBundle unit = normalized(init, model);
  PsiEvaluation ev = psi_value_grad(unit, cm, model);
  if (!ev.in_U) throw ValidationError("initialization outside U");

  double tau = 0.0;
  {
    double smax = 0.0;
    for (double s : ev.s) smax = std::max(smax, s);
    tau = std::min(opts.step_cap, 1.0 / (smax * smax));
  }
  std::optional<detail::CouplingMetric> metric;
  if (opts.coupling_preconditioner && detail::has_coupling(cm)) metric.emplace(model, unit);
  int stagnant = 0;
  double best_residual = std::numeric_limits<double>::infinity();
  std::vector<Vector> prev_dir, prev_dw;
  out.history.push_back(ev.value);
  int iter = 0;
  for (;; ++iter) {
    out.residual = ev.gradient_norm / std::abs(ev.value);
    if (out.residual < opts.tol_grad) {
      out.converged = true;
      out.stop_reason = "gradient";
      break;
    }
    if (stagnant >= opts.stall_window) {
      out.converged = true;
      out.stop_reason = "energy";
      break;
    }
    if (iter >= opts.max_iters) {
      out.stop_reason = "max_iters";
      break;
    }
    std::vector<Vector> dir = ev.gradient;
    if (metric) {
      for (int i = 0; i < cm.ell; ++i) dir[i] = metric->direction(i, unit, ev, cm);
      // Barzilai-Borwein in the metric: <dw, P dw> / <dw, P (dir - dir_prev)>.
      if (!prev_dw.empty()) {
        double ss = 0.0, sy = 0.0;
        for (int i = 0; i < cm.ell; ++i) {
          ss += metric->inner(i, prev_dw[i], prev_dw[i]);
          sy += metric->inner(i, prev_dw[i], Vector(dir[i] - prev_dir[i]));
        }
        if (sy > 0.0) tau = std::min(opts.step_cap, ss / sy);
      }
    }
    // Psi'(u)[dir] = sum_i B(s_i K^{-1} g_i, dir_i)
    double slope = 0.0;
    for (int i = 0; i < cm.ell; ++i) slope += model.inner(ev.riesz[i], dir[i]);
    if (!(slope > 0.0)) {
      dir = ev.gradient;
      slope = ev.gradient_norm * ev.gradient_norm;
    }
    double trial_tau = tau;
    bool accepted = false;
    ProfileBundle next_unit;
    PsiEvaluation next;
    for (int bt = 0; bt < 60; ++bt) {
      next_unit = detail::retract(unit, dir, trial_tau, model);
      next = psi_value_grad(next_unit, cm, model);
      // Round-off slack: near the minimum the Armijo decrease falls below the
      // precision of Psi itself.
      const double slack = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(ev.value);
      if (next.in_U && next.value <= ev.value - opts.armijo_c * trial_tau * slope + slack) {
        accepted = true;
        break;
      }
      trial_tau *= opts.backtrack;
    }
    if (!accepted) {
      // Decrease below the noise of Psi (high-order stencils lose ~1e-13 of it for
      // m = 2): fall back to steps that shrink the gradient without raising Psi
      // beyond that noise. Try the plain gradient too, its steps are shorter.
      const double floor = kPsiNoise * std::abs(ev.value);
      for (const auto* d : {&dir, &ev.gradient}) {
        trial_tau = d == &dir ? tau : std::min(tau, 1.0 / (ev.gradient_norm + 1.0));
        for (int bt = 0; bt < 40 && !accepted; ++bt) {
          next_unit = detail::retract(unit, *d, trial_tau, model);
          next = psi_value_grad(next_unit, cm, model);
          accepted = next.in_U && next.value <= ev.value + floor && next.gradient_norm < ev.gradient_norm;
          if (!accepted) trial_tau *= opts.backtrack;
        }
        if (accepted) {
          if (d != &dir) dir = ev.gradient;
          break;
        }
      }
    }
    if (!accepted) {
      out.stop_reason = "line search";
      break;
    }
    // Barzilai-Borwein step from the change in iterate and tangent gradient. With the
    // coupling metric the ideal step is close to 1, so only grow the accepted one.
    if (metric) {
      tau = std::min(opts.step_cap, 2.0 * trial_tau);
      prev_dir = dir;
      prev_dw.resize(cm.ell);
      for (int i = 0; i < cm.ell; ++i) prev_dw[i] = next_unit.components[i].values - unit.components[i].values;
    } else {
      std::vector<Vector> dw(cm.ell), dg(cm.ell);
      for (int i = 0; i < cm.ell; ++i) {
        dw[i] = next_unit.components[i].values - unit.components[i].values;
        dg[i] = next.gradient[i] - ev.gradient[i];
      }
      const double sy = detail::bundle_inner(model, dw, dg);
      const double ss = detail::bundle_inner(model, dw, dw);
      tau = sy > 0.0 ? std::min(opts.step_cap, ss / sy) : std::min(opts.step_cap, 2.0 * trial_tau);
    }

    // Stagnation needs both a flat energy and no real progress in the gradient, since
    // the energy settles at round-off long before the gradient does.
    const double change = std::abs(next.value - ev.value);
    const double next_residual = next.gradient_norm / std::abs(next.value);
    if (next_residual < 0.5 * best_residual) {
      best_residual = next_residual;
      stagnant = 0;
    } else {
      stagnant = change <= opts.tol_energy * std::abs(ev.value) ? stagnant + 1 : 0;
    }
    unit = std::move(next_unit);
    ev = std::move(next);
    out.history.push_back(ev.value);
  }
  out.iterations = iter;
  out.unit = unit;
  out.s = ev.s;
  out.bundle = scaled(unit, ev.s);
  out.energy = ev.value;
  return out;
}

/// Default initialization: [(t - a)(b - t)]^m_+ on each cell.
inline Profile bump_profile(const Grid& grid, double a, double b) {
  const int m = grid.params.m;
  std::optional<Cell> cell;
  if (a > kEndpointTol || b < std::numbers::pi - kEndpointTol) cell = Cell{a, b};
  return sample_profile(
      grid, [&](double t) { return (t > a && t < b) ? std::pow((t - a) * (b - t), m) : 0.0; }, cell);
}

/// Multiplicative smooth perturbation that keeps the support and boundary order.
inline Profile perturbed(const Profile& w, const Grid& grid, Rng& rng, double amplitude = 0.5) {
  double xi[4];
  for (double& x : xi) x = rng.normal();
  Profile out = w;
  for (int j = 0; j < grid.M; ++j) {
    double f = 1.0;
    for (int q = 0; q < 4; ++q) f += amplitude * xi[q] * std::cos((q + 1) * grid.nodes[j]) / (q + 1);
    out.values[j] *= f;
  }
  return out;
}

struct CellSolution {
  double c = 0.0;     ///< (m/N) B(w, w) at the Nehari point
  Profile profile;    ///< minimizer scaled onto the Nehari manifold
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

/// Least-energy level of the cell (a, b) with clamped interior endpoints.
inline CellSolution solve_cell(double a, double b, double mu, const EnergyModel& model, const SolveOptions& opts,
                               const std::optional<Profile>& warm = std::nullopt) {
  const auto& grid = model.grid();
  (void)cell_mask(grid, a, b, grid.params.m);  // validates the interval
  if (!(mu > 0.0)) throw ValidationError("solve_cell: mu must be positive");
  CouplingMatrix cm;
  cm.mu = {mu};
  ProfileBundle init;
  Profile start = bump_profile(grid, a, b);
  if (warm) {
    // Reuse the shape, restricted to the requested cell.
    Profile w = start;
    const CellMask mask = mask_of(grid, start);
    for (int j = 0; j < grid.M; ++j) w.values[j] = mask.contains(j) ? interpolate(grid, warm->values, grid.nodes[j]) : 0.0;
    if (model.norm_sq(w.values) > 0.0 && weighted_lp(w.values, 2.0, grid) > 1e-12 * weighted_lp(start.values, 2.0, grid))
      start = w;
  }
  init.components.push_back(start);
  const DescentResult r = minimize_psi(model, cm, init, opts);
  if (!r.converged) {
    throw ConvergenceError("solve_cell(" + std::to_string(a) + ", " + std::to_string(b) + ") did not converge (" +
                               r.stop_reason + ")",
                           r.residual);
  }
  CellSolution out;
  out.profile = r.bundle.components[0];
  out.c = static_cast<double>(grid.params.m) / grid.params.N * model.norm_sq(out.profile.values);
  out.iterations = r.iterations;
  out.residual = r.residual;
  out.converged = r.converged;
  return out;
}

inline CellSolution solve_cell(double a, double b, double mu, const Grid& grid, const OperatorCoefficients& coeffs,
                               const SolveOptions& opts) {
  return solve_cell(a, b, mu, EnergyModel(grid, coeffs), opts);
}

/// Sign pattern of a converged component (the solver does not assume positivity).
struct SignStats {
  double positive_fraction = 0.0;  ///< of nodes in the support with w > 0
  double min_value = 0.0;
  double max_value = 0.0;
  bool sign_changing = false;
};

inline SignStats sign_stats(const Profile& w, const Grid& grid) {
  SignStats st;
  const CellMask mask = mask_of(grid, w);
  const double peak = w.values.cwiseAbs().maxCoeff();
  int pos = 0;
  int neg = 0;
  st.min_value = w.values.segment(mask.first, mask.count()).minCoeff();
  st.max_value = w.values.segment(mask.first, mask.count()).maxCoeff();
  for (int j = mask.first; j < mask.last; ++j) {
    if (w.values[j] > 1e-8 * peak) ++pos;
    if (w.values[j] < -1e-8 * peak) ++neg;
  }
  st.positive_fraction = static_cast<double>(pos) / mask.count();
  st.sign_changing = pos > 0 && neg > 0;
  return st;
}

struct SystemSolution {
  ProfileBundle bundle;
  EnergyReport report;
  std::vector<SignStats> signs;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  std::string stop_reason;
  int best_start = 0;
  std::vector<double> start_energies;
};

/// ell disjoint bumps on the uniform partition of (0, pi).
inline ProfileBundle default_init(const Grid& grid, int ell) {
  ProfileBundle wb;
  for (int i = 0; i < ell; ++i) {
    const double a = std::numbers::pi * i / ell;
    const double b = std::numbers::pi * (i + 1) / ell;
    Profile w = bump_profile(grid, a, b);
    w.cell.reset();  // components may spread over the whole interval
    wb.components.push_back(std::move(w));
  }
  return wb;
}

/// Least-energy solution of the coupled system; best of opts.multistart runs.
inline SystemSolution solve_system(const CouplingMatrix& cm, const EnergyModel& model,
                                   const std::optional<ProfileBundle>& init, const SolveOptions& opts) {
  opts.validate();
  cm.validate(model.exponent());
  const auto& grid = model.grid();
  const ProfileBundle base = init ? *init : default_init(grid, cm.ell);
  if (base.size() != cm.ell) throw ValidationError("solve_system: init has the wrong number of components");

  std::vector<std::optional<DescentResult>> runs(opts.multistart);
  parallel_for(opts.multistart, opts.jobs, [&](int k) {
    ProfileBundle start = base;
    if (k > 0) {
      Rng rng(derive_seed(opts.seed, k));
      for (auto& w : start.components) w = perturbed(w, grid, rng);
    }
    if (k > 0 && !nehari_scale_multi(normalized(start, model), cm, model).in_U) return;
    runs[k] = minimize_psi(model, cm, start, opts);
  });

  SystemSolution out;
  int best = -1;
  for (int k = 0; k < opts.multistart; ++k) {
    out.start_energies.push_back(runs[k] ? runs[k]->energy : std::numeric_limits<double>::quiet_NaN());
    if (!runs[k]) continue;
    const bool better = best < 0 || (runs[k]->converged && !runs[best]->converged) ||
                        (runs[k]->converged == runs[best]->converged && runs[k]->energy < runs[best]->energy);
    if (better) best = k;
  }
  const DescentResult& r = *runs[best];
  out.best_start = best;
  out.bundle = r.bundle;
  out.iterations = r.iterations;
  out.residual = r.residual;
  out.converged = r.converged;
  out.stop_reason = r.stop_reason;
  out.report = system_energy(out.bundle, cm, model);
  for (const auto& w : out.bundle.components) out.signs.push_back(sign_stats(w, grid));
  return out;
}

struct SweepSchedule {
  std::vector<double> lambdas;
  SolveOptions options;
  bool warm_start = true;

  void validate() const {
    if (lambdas.empty()) throw ValidationError("sweep: empty lambda schedule");
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
      if (!(lambdas[k] < 0.0) || !std::isfinite(lambdas[k])) throw ValidationError("sweep: lambdas must be negative");
      if (k > 0 && !(lambdas[k] < lambdas[k - 1])) throw ValidationError("sweep: lambdas must strictly decrease");
    }
    options.validate();
  }
};

/// lambda_k = -base^k for k = 0..count-1.
inline std::vector<double> geometric_lambdas(double base, int count) {
  std::vector<double> out;
  for (int k = 0; k < count; ++k) out.push_back(-std::pow(base, k));
  return out;
}

struct SweepStep {
  double lambda = 0.0;
  SystemSolution solution;
  bool warm_started = false;
  bool fresh_fallback = false;
};

/// Continuation in lambda. Warm starts reuse the previous minimizer; a failed warm
/// start is retried from a fresh multistart, and a failure there is recorded.
inline std::vector<SweepStep> lambda_sweep(const SweepSchedule& schedule, const CouplingMatrix& cm_template,
                                           const EnergyModel& model) {
  schedule.validate();
  std::vector<SweepStep> steps;
  std::optional<ProfileBundle> previous;
  for (double lambda : schedule.lambdas) {
    const CouplingMatrix cm = with_lambda(cm_template, lambda);
    SweepStep step;
    step.lambda = lambda;
    bool done = false;
    if (schedule.warm_start && previous && nehari_scale_multi(normalized(*previous, model), cm, model).in_U) {
      SolveOptions single = schedule.options;
      single.multistart = 1;
      step.solution = solve_system(cm, model, previous, single);
      step.warm_started = true;
      done = step.solution.converged;
    }
    if (!done) {
      step.fresh_fallback = step.warm_started;
      step.solution = solve_system(cm, model, std::nullopt, schedule.options);
    }
    if (step.solution.converged) previous = step.solution.bundle;
    steps.push_back(std::move(step));
  }
  return steps;
}

}  // namespace polyseg

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "polyseg/energy.hpp"
#include "polyseg/error.hpp"
#include "polyseg/parallel.hpp"
#include "polyseg/random.hpp"
#include "polyseg/solvers.hpp"

namespace polyseg {

/// Sorted breakpoints 0 < a_1 < ... < a_{l-1} < pi; cell i is (a_{i-1}, a_i) with a_0 = 0, a_l = pi.
struct Partition {
  std::vector<double> points;

  int ell() const { return static_cast<int>(points.size()) + 1; }

  Cell cell(int i) const {
    const double a = i == 0 ? 0.0 : points[i - 1];
    const double b = i == static_cast<int>(points.size()) ? std::numbers::pi : points[i];
    return Cell{a, b};
  }

  std::vector<Cell> cells() const {
    std::vector<Cell> out;
    for (int i = 0; i < ell(); ++i) out.push_back(cell(i));
    return out;
  }

  /// Every cell at least 4 m dt wide.
  void validate(const Grid& grid) const {
    const double gap = 4.0 * grid.dt * grid.params.m;
    for (int i = 0; i < ell(); ++i) {
      const Cell c = cell(i);
      if (!(c.b - c.a >= gap - 1e-12)) {
        throw ValidationError("partition: cell " + std::to_string(i) + " is narrower than 4 m dt");
      }
    }
  }
};

/// Topology of the cell preimage in R^N.
inline std::string cell_topology(int index, int ell, const ProblemParams& p) {
  const std::string s1 = "S^" + std::to_string(p.n1 - 1);
  if (ell == 1) return "R^" + std::to_string(p.N);
  if (index == 0) return s1 + " x B^" + std::to_string(p.n2);
  if (index == ell - 1) return "B^" + std::to_string(p.n1) + " x R^" + std::to_string(p.n2 - 1);
  return s1 + " x S^" + std::to_string(p.n2 - 1) + " x (0,1)";
}

struct PartitionReport {
  std::vector<double> energies;
  double total = 0.0;
  std::vector<Profile> profiles;
  std::vector<std::string> topology;
  std::vector<int> iterations;
};

/// One cell solve per interval; cells run in parallel with opts.jobs workers.
inline PartitionReport partition_energy(const Partition& part, double mu, const EnergyModel& model,
                                        const SolveOptions& opts,
                                        const std::vector<std::optional<Profile>>& warm = {}) {
  part.validate(model.grid());
  const int ell = part.ell();
  std::vector<CellSolution> sols(ell);
  parallel_for(ell, opts.jobs, [&](int i) {
    const Cell c = part.cell(i);
    SolveOptions single = opts;
    single.jobs = 1;
    const std::optional<Profile> w = i < static_cast<int>(warm.size()) ? warm[i] : std::nullopt;
    try {
      sols[i] = solve_cell(c.a, c.b, mu, model, single, w);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("cell " + std::to_string(i) + ": " + e.what(), e.last_residual());
    } catch (const ValidationError& e) {
      throw ValidationError("cell " + std::to_string(i) + ": " + e.what());
    }
  });
  PartitionReport r;
  for (int i = 0; i < ell; ++i) {
    r.energies.push_back(sols[i].c);
    r.total += sols[i].c;
    r.profiles.push_back(std::move(sols[i].profile));
    r.topology.push_back(cell_topology(i, ell, model.params()));
    r.iterations.push_back(sols[i].iterations);
  }
  return r;
}

inline PartitionReport partition_energy(const Partition& part, double mu, const Grid& grid,
                                        const OperatorCoefficients& coeffs, const SolveOptions& opts) {
  return partition_energy(part, mu, EnergyModel(grid, coeffs), opts);
}

struct PartitionSearchOptions {
  int random_starts = 2;
  int max_sweeps = 100;
  std::optional<Partition> initial;  ///< replaces the uniform start when given
};

struct OptimizedPartition {
  Partition partition;
  PartitionReport report;
  std::vector<Partition> starts;
  std::vector<Partition> results;   ///< optimum reached from each start
  std::vector<double> totals;
  int best_start = 0;
  bool starts_disagree = false;     ///< some start ended more than one face away
  bool converged = true;
  int cell_solves = 0;
};

namespace detail {

/// Coordinate descent over breakpoints restricted to faces k dt. Cell energies are
/// memoized by their face pair, so revisiting a candidate costs nothing.
class BreakpointSearch {
 public:
  BreakpointSearch(const EnergyModel& model, double mu, const SolveOptions& opts)
      : model_(model), mu_(mu), opts_(opts), min_gap_(4 * model.params().m) {
    opts_.jobs = 1;
  }

  double cell_energy(int fa, int fb) {
    const auto key = std::make_pair(fa, fb);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second.c;
    const double dt = model_.grid().dt;
    const double a = fa == 0 ? 0.0 : fa * dt;
    const double b = fb == model_.grid().M ? std::numbers::pi : fb * dt;
    CellSolution s = solve_cell(a, b, mu_, model_, opts_);
    ++solves_;
    const double c = s.c;
    memo_.emplace(key, std::move(s));
    return c;
  }

  double total(const std::vector<int>& faces) {
    double t = 0.0;
    for (std::size_t i = 0; i + 1 < faces.size(); ++i) t += cell_energy(faces[i], faces[i + 1]);
    return t;
  }

  /// faces includes the end faces 0 and M. Returns true if the sweep limit was not hit.
  bool run(std::vector<int>& faces, int max_sweeps) {
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      bool moved = false;
      for (std::size_t k = 1; k + 1 < faces.size(); ++k) {
        const int lo = faces[k - 1] + min_gap_;
        const int hi = faces[k + 1] - min_gap_;
        auto f = [&](int x) { return cell_energy(faces[k - 1], x) + cell_energy(x, faces[k + 1]); };
        const int best = golden_section(f, lo, hi, faces[k]);
        if (best != faces[k]) {
          faces[k] = best;
          moved = true;
        }
      }
      if (!moved) return true;
    }
    return false;
  }

  int solves() const { return solves_; }

 private:
  /// Integer golden-section search on [lo, hi]; the current point wins ties.
  template <class F>
  static int golden_section(F& f, int lo, int hi, int current) {
    constexpr double r = 0.6180339887498949;
    int a = lo;
    int b = hi;
    while (b - a > 4) {
      const int x1 = b - static_cast<int>(std::lround(r * (b - a)));
      const int x2 = a + static_cast<int>(std::lround(r * (b - a)));
      if (f(x1) <= f(x2)) {
        b = x2;
      } else {
        a = x1;
      }
    }
    int best = std::clamp(current, lo, hi);
    double fbest = f(best);
    for (int x = a; x <= b; ++x) {
      const double v = f(x);
      if (v < fbest) {
        fbest = v;
        best = x;
      }
    }
    return best;
  }

  const EnergyModel& model_;
  double mu_;
  SolveOptions opts_;
  int min_gap_;
  int solves_ = 0;
  std::map<std::pair<int, int>, CellSolution> memo_;
};

inline std::vector<int> to_faces(const Partition& p, const Grid& grid) {
  std::vector<int> faces{0};
  for (double a : p.points) faces.push_back(static_cast<int>(std::lround(a / grid.dt)));
  faces.push_back(grid.M);
  return faces;
}

inline Partition from_faces(const std::vector<int>& faces, const Grid& grid) {
  Partition p;
  for (std::size_t k = 1; k + 1 < faces.size(); ++k) p.points.push_back(faces[k] * grid.dt);
  return p;
}

inline Partition random_partition(int ell, const Grid& grid, Rng& rng) {
  const int gap = 4 * grid.params.m;
  // Draw ell-1 sorted faces with every cell at least `gap` faces wide.
  const int slack = grid.M - ell * gap;
  std::vector<int> offs;
  for (int k = 0; k < ell - 1; ++k) offs.push_back(static_cast<int>(rng.uniform() * (slack + 1)));
  std::sort(offs.begin(), offs.end());
  std::vector<int> faces{0};
  for (int k = 0; k < ell - 1; ++k) faces.push_back(offs[k] + (k + 1) * gap);
  faces.push_back(grid.M);
  return from_faces(faces, grid);
}

}  // namespace detail

inline Partition uniform_partition(int ell) {
  Partition p;
  for (int k = 1; k < ell; ++k) p.points.push_back(std::numbers::pi * k / ell);
  return p;
}

/// Minimizes the sum of cell levels over breakpoints by cyclic coordinate descent
/// with an integer golden-section line search per breakpoint.
inline OptimizedPartition optimize_partition(int ell, double mu, const EnergyModel& model, const SolveOptions& opts,
                                             const PartitionSearchOptions& search = {}) {
  if (ell < 2) throw ValidationError("optimize_partition: ell must be >= 2");
  opts.validate();
  const auto& grid = model.grid();
  if (ell * 4 * grid.params.m > grid.M) throw ValidationError("optimize_partition: grid too coarse for ell cells");
  OptimizedPartition out;
  out.starts.push_back(search.initial ? *search.initial : uniform_partition(ell));
  out.starts.front().validate(grid);
  for (int k = 0; k < search.random_starts; ++k) {
    Rng rng(derive_seed(opts.seed, 1000 + k));
    out.starts.push_back(detail::random_partition(ell, grid, rng));
  }
  const int n = static_cast<int>(out.starts.size());
  std::vector<std::vector<int>> faces(n);
  std::vector<double> totals(n);
  std::vector<int> solves(n);
  std::vector<char> ok(n);
  parallel_for(n, opts.jobs, [&](int s) {
    detail::BreakpointSearch bs(model, mu, opts);
    faces[s] = detail::to_faces(out.starts[s], grid);
    ok[s] = bs.run(faces[s], search.max_sweeps);
    totals[s] = bs.total(faces[s]);
    solves[s] = bs.solves();
  });
  for (int s = 0; s < n; ++s) {
    out.results.push_back(detail::from_faces(faces[s], grid));
    out.totals.push_back(totals[s]);
    out.cell_solves += solves[s];
    out.converged = out.converged && ok[s];
    if (totals[s] < totals[out.best_start]) out.best_start = s;
  }
  for (int s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < faces[s].size(); ++k) {
      if (std::abs(faces[s][k] - faces[out.best_start][k]) > 1) out.starts_disagree = true;
    }
  }
  out.partition = out.results[out.best_start];
  out.report = partition_energy(out.partition, mu, model, opts);
  return out;
}

inline OptimizedPartition optimize_partition(int ell, double mu, const Grid& grid, const OperatorCoefficients& coeffs,
                                             const SolveOptions& opts) {
  return optimize_partition(ell, mu, EnergyModel(grid, coeffs), opts);
}

/// Breakpoints between the supports {|w_i| > theta * max_j |w_j|} of a segregated bundle.
inline Partition extract_supports(const ProfileBundle& wb, double theta, const Grid& grid) {
  if (!(theta > 0.0 && theta < 1.0)) throw ValidationError("extract_supports: theta must lie in (0, 1)");
  if (wb.size() < 1) throw ValidationError("extract_supports: empty bundle");
  double peak = 0.0;
  for (const auto& w : wb.components) {
    if (w.values.size() != grid.M) throw ValidationError("extract_supports: profile not on grid");
    peak = std::max(peak, w.values.cwiseAbs().maxCoeff());
  }
  if (!(peak > 0.0)) throw ValidationError("extract_supports: all components vanish");
  struct Range {
    int first, last;  // inclusive
  };
  std::vector<Range> ranges;
  for (int i = 0; i < wb.size(); ++i) {
    const Vector& w = wb.components[i].values;
    int first = -1;
    int last = -1;
    int count = 0;
    for (int j = 0; j < grid.M; ++j) {
      if (std::abs(w[j]) > theta * peak) {
        if (first < 0) first = j;
        last = j;
        ++count;
      }
    }
    if (first < 0) throw ValidationError("extract_supports: component " + std::to_string(i) + " has empty support");
    if (count != last - first + 1) {
      throw ValidationError("extract_supports: support not an interval (component " + std::to_string(i) + ")");
    }
    ranges.push_back({first, last});
  }
  std::sort(ranges.begin(), ranges.end(), [](const Range& a, const Range& b) { return a.first < b.first; });
  Partition p;
  for (std::size_t k = 0; k + 1 < ranges.size(); ++k) {
    if (ranges[k].last >= ranges[k + 1].first) {
      throw ValidationError("extract_supports: supports overlap (nodes " + std::to_string(ranges[k + 1].first) + ".." +
                            std::to_string(ranges[k].last) + ")");
    }
    p.points.push_back(0.5 * (grid.nodes[ranges[k].last] + grid.nodes[ranges[k + 1].first]));
  }
  return p;
}

struct PartitionComparison {
  std::optional<Partition> extracted;
  std::string extraction_error;
  std::vector<double> distances;         ///< |a_k(extracted) - a_k(optimal)|
  double optimal_total = 0.0;
  std::optional<double> extracted_total; ///< sum of cell levels of the extracted partition
  double sweep_energy = 0.0;             ///< energy of the last sweep step
  double sweep_gap = 0.0;                ///< optimal_total - sweep_energy
  double relative_sweep_gap = 0.0;
  struct Row {
    double lambda, energy, max_overlap;
  };
  std::vector<Row> table;
};

/// Compares the last (most strongly coupled) sweep step with an optimal partition.
inline PartitionComparison compare_partition(const std::vector<SweepStep>& sweep, const Partition& optimal,
                                             double optimal_total, double theta, double mu, const EnergyModel& model,
                                             const SolveOptions& opts) {
  if (sweep.empty()) throw ValidationError("compare_partition: empty sweep");
  const auto& last = sweep.back().solution;
  if (last.bundle.size() != optimal.ell()) throw ValidationError("compare_partition: ell mismatch");
  PartitionComparison out;
  out.optimal_total = optimal_total;
  for (const auto& s : sweep) {
    double mo = 0.0;
    const auto& O = s.solution.report.overlap;
    for (Eigen::Index i = 0; i < O.rows(); ++i)
      for (Eigen::Index j = 0; j < O.cols(); ++j)
        if (i != j) mo = std::max(mo, O(i, j));
    out.table.push_back({s.lambda, s.solution.report.energy, mo});
  }
  out.sweep_energy = last.report.energy;
  out.sweep_gap = optimal_total - out.sweep_energy;
  out.relative_sweep_gap = out.sweep_gap / optimal_total;
  try {
    out.extracted = extract_supports(last.bundle, theta, model.grid());
  } catch (const ValidationError& e) {
    out.extraction_error = e.what();
  }
  if (out.extracted) {
    for (std::size_t k = 0; k < optimal.points.size(); ++k)
      out.distances.push_back(std::abs(out.extracted->points[k] - optimal.points[k]));
    try {
      out.extracted_total = partition_energy(*out.extracted, mu, model, opts).total;
    } catch (const std::exception&) {
      // A degenerate extracted cell leaves the total unset.
    }
  }
  return out;
}

}  // namespace polyseg

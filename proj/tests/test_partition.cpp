#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "polyseg/partition.hpp"
#include "support/partition_scan.hpp"

using namespace polyseg;
using std::numbers::pi;

namespace {

ProblemParams p4() { return make_params(4, 1, 2, 3); }
ProblemParams p3() { return make_params(3, 1, 2, 2); }

SolveOptions parallel_opts() {
  SolveOptions o;
  o.jobs = 4;
  return o;
}

double cell(double a, double b, const EnergyModel& model) {
  return solve_cell(a, b, 1.0, model, SolveOptions{}).c;
}

}  // namespace

TEST(PartitionEnergy, SingleCellIsFullInterval) {
  const EnergyModel model(make_grid(1024, p4()), conformal_coefficients(p4()));
  const auto r = partition_energy(Partition{}, 1.0, model, SolveOptions{});
  ASSERT_EQ(r.energies.size(), 1u);
  EXPECT_LT(std::abs(r.total - 8.0 * pi * pi / 3.0) / r.total, 5e-3);
  EXPECT_EQ(r.topology[0], "R^4");
}

TEST(PartitionEnergy, SymmetricSplitHasEqualCells) {
  const EnergyModel model(make_grid(1024, p3()), conformal_coefficients(p3()));
  const auto r = partition_energy(Partition{{pi / 2}}, 1.0, model, parallel_opts());
  EXPECT_NEAR(r.energies[0], r.energies[1], 1e-6 * r.energies[0]);
  EXPECT_DOUBLE_EQ(r.total, r.energies[0] + r.energies[1]);
}

TEST(PartitionEnergy, SplittingRaisesEnergy) {
  const EnergyModel model(make_grid(512, p4()), conformal_coefficients(p4()));
  const double whole = cell(0.0, pi, model);
  for (double a : {0.4, 1.0, 1.6, 2.5}) {
    const auto r = partition_energy(Partition{{a}}, 1.0, model, parallel_opts());
    EXPECT_GT(r.total, whole) << "a=" << a;
    EXPECT_GT(r.energies[0], whole);
    EXPECT_GT(r.energies[1], whole);
  }
}

TEST(PartitionEnergy, TopologyLabelsByPosition) {
  const auto p = p4();
  EXPECT_EQ(cell_topology(0, 3, p), "S^1 x B^3");
  EXPECT_EQ(cell_topology(1, 3, p), "S^1 x S^2 x (0,1)");
  EXPECT_EQ(cell_topology(2, 3, p), "B^2 x R^2");
  const Grid g = make_grid(256, p);
  const Partition part{{1.0, 2.0}};
  EXPECT_LT(part.cell(0).a, g.nodes[0]);
  EXPECT_GT(part.cell(2).b, g.nodes[g.M - 1]);
}

TEST(PartitionEnergy, RejectsNarrowCells) {
  const EnergyModel model(make_grid(256, p4()), conformal_coefficients(p4()));
  EXPECT_THROW(partition_energy(Partition{{1.0, 1.01}}, 1.0, model, SolveOptions{}), ValidationError);
}

TEST(CellLevels, StrictSubadditivity) {
  const EnergyModel model(make_grid(512, p4()), conformal_coefficients(p4()));
  Rng rng(3);
  for (int k = 0; k < 10; ++k) {
    double x[3];
    for (double& v : x) v = 0.1 + (pi - 0.2) * rng.uniform();
    std::sort(x, x + 3);
    if (x[1] - x[0] < 0.15 || x[2] - x[1] < 0.15) {
      --k;
      continue;
    }
    const double whole = cell(x[0], x[2], model);
    EXPECT_LT(whole, std::min(cell(x[0], x[1], model), cell(x[1], x[2], model)) - 1e-8) << "triple " << k;
  }
}

TEST(CellLevels, DomainMonotonicity) {
  const EnergyModel model(make_grid(512, p4()), conformal_coefficients(p4()));
  double prev_left = std::numeric_limits<double>::infinity();
  double prev_right = 0.0;
  for (int k = 1; k <= 16; ++k) {
    const double a = pi * k / 17.0;
    const double left = cell(0.0, a, model);
    const double right = cell(a, pi, model);
    EXPECT_LT(left, prev_left - 1e-8) << "a=" << a;
    EXPECT_GT(right, prev_right + 1e-8) << "a=" << a;
    prev_left = left;
    prev_right = right;
  }
}

TEST(OptimizePartition, SymmetricTwoCells) {
  const EnergyModel model(make_grid(1024, p3()), conformal_coefficients(p3()));
  const auto r = optimize_partition(2, 1.0, model, parallel_opts());
  const double dt = model.grid().dt;
  EXPECT_NEAR(r.partition.points[0], pi / 2, 2.0 * dt);
  EXPECT_NEAR(r.report.energies[0], r.report.energies[1], 1e-6 * r.report.energies[0]);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.starts.size(), 3u);
}

TEST(OptimizePartition, MatchesBruteForceScan) {
  for (auto p : {p4(), p3()}) {
    const EnergyModel model(make_grid(512, p), conformal_coefficients(p));
    const auto r = optimize_partition(2, 1.0, model, parallel_opts());
    const auto scan = testing_support::scan_two_cells(1.0, model, parallel_opts());
    EXPECT_NEAR(r.partition.points[0], scan.points[scan.best], scan.step) << "N=" << p.N;
    for (double t : scan.totals) EXPECT_LE(r.report.total, t + 1e-9 * t);
    if (p.n1 != p.n2) EXPECT_GT(std::abs(r.partition.points[0] - pi / 2), scan.step);
  }
}

TEST(OptimizePartition, ThreeSymmetricCells) {
  const EnergyModel model(make_grid(512, p3()), conformal_coefficients(p3()));
  const auto r = optimize_partition(3, 1.0, model, parallel_opts());
  EXPECT_NEAR(r.partition.points[0] + r.partition.points[1], pi, 4.0 * model.grid().dt);
  const auto uniform = partition_energy(uniform_partition(3), 1.0, model, parallel_opts());
  EXPECT_LE(r.report.total, uniform.total + 1e-9 * uniform.total);
}

TEST(OptimizePartition, MirroredStartsGiveMirroredOptima) {
  const EnergyModel model(make_grid(512, p3()), conformal_coefficients(p3()));
  PartitionSearchOptions s;
  s.random_starts = 0;
  s.initial = Partition{{1.0}};
  const double a = optimize_partition(2, 1.0, model, SolveOptions{}, s).partition.points[0];
  s.initial = Partition{{pi - 1.0}};
  const double b = optimize_partition(2, 1.0, model, SolveOptions{}, s).partition.points[0];
  EXPECT_LT(std::abs(a + b - pi), 4.0 * model.grid().dt);
}

TEST(OptimizePartition, BelowUniformTotal) {
  const EnergyModel model(make_grid(512, p4()), conformal_coefficients(p4()));
  const auto r = optimize_partition(2, 1.0, model, parallel_opts());
  const auto uniform = partition_energy(uniform_partition(2), 1.0, model, parallel_opts());
  EXPECT_LE(r.report.total, uniform.total + 1e-9 * uniform.total);
  EXPECT_DOUBLE_EQ(r.totals[r.best_start], *std::min_element(r.totals.begin(), r.totals.end()));
}

TEST(OptimizePartition, RejectsSingleCell) {
  const EnergyModel model(make_grid(256, p4()), conformal_coefficients(p4()));
  EXPECT_THROW(optimize_partition(1, 1.0, model, SolveOptions{}), ValidationError);
}

TEST(ExtractSupports, RecoversCells) {
  const EnergyModel model(make_grid(512, p4()), conformal_coefficients(p4()));
  const Partition part{{0.9, 2.0}};
  const auto r = partition_energy(part, 1.0, model, parallel_opts());
  // Cell profiles vanish linearly at clamped ends, so only a threshold near zero
  // sees the whole cell.
  const auto got = extract_supports(ProfileBundle{r.profiles}, 1e-6, model.grid());
  ASSERT_EQ(got.points.size(), 2u);
  for (int k = 0; k < 2; ++k) EXPECT_NEAR(got.points[k], part.points[k], model.grid().dt);
}

TEST(ExtractSupports, Errors) {
  const Grid g = make_grid(128, p4());
  const Profile zero{Vector::Zero(g.M), std::nullopt};
  EXPECT_THROW(extract_supports(ProfileBundle{{zero, zero}}, 1e-2, g), ValidationError);
  const Profile one = sample_profile(g, [](double) { return 1.0; });
  try {
    extract_supports(ProfileBundle{{one, one}}, 1e-2, g);
    FAIL() << "expected overlap error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("supports overlap"), std::string::npos);
  }
  const Profile two_bumps = sample_profile(g, [](double t) { return std::abs(std::cos(t)) > 0.5 ? 1.0 : 0.0; });
  try {
    extract_supports(ProfileBundle{{two_bumps}}, 1e-2, g);
    FAIL() << "expected interval error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("support not an interval"), std::string::npos);
  }
  EXPECT_THROW(extract_supports(ProfileBundle{{one}}, 1.0, g), ValidationError);
}

TEST(ComparePartition, IdenticalAndWeaklyCoupled) {
  const EnergyModel model(make_grid(512, p4()), conformal_coefficients(p4()));
  const auto opt = optimize_partition(2, 1.0, model, parallel_opts());

  // A "sweep" whose last step is the optimal partition itself.
  SweepStep exact;
  exact.lambda = -1e9;
  exact.solution.bundle = ProfileBundle{opt.report.profiles};
  exact.solution.report = system_energy(exact.solution.bundle, uniform_coupling(2, 1.0, -1e9, 4.0), model);
  const auto same = compare_partition({exact}, opt.partition, opt.report.total, 1e-2, 1.0, model, SolveOptions{});
  ASSERT_TRUE(same.extracted.has_value());
  EXPECT_NEAR(same.distances[0], 0.0, model.grid().dt);

  SweepSchedule s;
  s.lambdas = {-1.0};
  const auto weak = lambda_sweep(s, uniform_coupling(2, 1.0, -1.0, 4.0), model);
  const auto cmp = compare_partition(weak, opt.partition, opt.report.total, 1e-2, 1.0, model, SolveOptions{});
  EXPECT_GT(cmp.relative_sweep_gap, 0.3);
  EXPECT_EQ(cmp.table.size(), 1u);

  EXPECT_THROW(compare_partition(weak, uniform_partition(3), 1.0, 1e-2, 1.0, model, SolveOptions{}), ValidationError);
}

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "polyseg/oracles.hpp"
#include "polyseg/partition.hpp"
#include "polyseg/solvers.hpp"

using namespace polyseg;
using std::numbers::pi;

namespace {

ProblemParams p4() { return make_params(4, 1, 2, 3); }
ProblemParams p3() { return make_params(3, 1, 2, 2); }
ProblemParams p5() { return make_params(5, 2, 3, 3); }

// Closed-form level of the constant solution: (m/N) a0^{N/(2m)} |S^N|.
double constant_level(const ProblemParams& p) {
  const auto co = conformal_coefficients(p);
  return static_cast<double>(p.m) / p.N * std::pow(co.a[0], p.N / (2.0 * p.m)) * sphere_area(p.N);
}

double constant_value(const ProblemParams& p) {
  return std::pow(conformal_coefficients(p).a[0], (p.N - 2.0 * p.m) / (4.0 * p.m));
}

}  // namespace

TEST(SolveCell, ConstantAnchorM1) {
  const ProblemParams p = p4();
  const EnergyModel model(make_grid(2048, p), conformal_coefficients(p));
  const auto cs = solve_cell(0.0, pi, 1.0, model, SolveOptions{});
  EXPECT_NEAR(constant_level(p), 8.0 * pi * pi / 3.0, 1e-12);
  EXPECT_LT(std::abs(cs.c - constant_level(p)) / constant_level(p), 5e-3);
  const double v0 = std::sqrt(2.0);
  EXPECT_NEAR(constant_value(p), v0, 1e-15);
  EXPECT_LT((cs.profile.values.array().abs() - v0).abs().maxCoeff() / v0, 1e-2);
}

TEST(SolveCell, ConstantAnchorM2) {
  const ProblemParams p = p5();
  const EnergyModel model(make_grid(1024, p), conformal_coefficients(p));
  const auto cs = solve_cell(0.0, pi, 1.0, model, SolveOptions{});
  const double level = 0.4 * std::pow(105.0 / 16.0, 1.25) * pi * pi * pi;
  EXPECT_NEAR(constant_level(p), level, 1e-10 * level);
  EXPECT_LT(std::abs(cs.c - level) / level, 1e-2);
  const double v0 = std::pow(105.0 / 16.0, 0.125);
  EXPECT_LT((cs.profile.values.array().abs() - v0).abs().maxCoeff() / v0, 1e-2);
}

TEST(SolveCell, DomainMonotonicity) {
  const EnergyModel model(make_grid(1024, p4()), conformal_coefficients(p4()));
  const double big = solve_cell(0.0, 0.6 * pi, 1.0, model, SolveOptions{}).c;
  const double small = solve_cell(0.0, 0.5 * pi, 1.0, model, SolveOptions{}).c;
  EXPECT_LT(big, small);
}

TEST(SolveCell, ReflectionSymmetryForEqualBlocks) {
  const EnergyModel model(make_grid(1024, p3()), conformal_coefficients(p3()));
  for (double x : {0.7, 1.3, 2.2}) {
    const double left = solve_cell(0.0, x, 1.0, model, SolveOptions{}).c;
    const double right = solve_cell(pi - x, pi, 1.0, model, SolveOptions{}).c;
    EXPECT_NEAR(left, right, 1e-6 * left) << "x=" << x;
  }
}

TEST(SolveCell, RefinementChangesLessThanOnePercent) {
  const ProblemParams p = p4();
  const auto co = conformal_coefficients(p);
  const double coarse = solve_cell(0.3, 2.1, 1.0, EnergyModel(make_grid(512, p), co), SolveOptions{}).c;
  const double fine = solve_cell(0.3, 2.1, 1.0, EnergyModel(make_grid(1024, p), co), SolveOptions{}).c;
  EXPECT_LT(std::abs(fine - coarse) / fine, 1e-2);
}

TEST(SolveCell, WeakResidualAgainstClampedTestFunctions) {
  for (auto p : {p4(), p5()}) {
    const EnergyModel model(make_grid(512, p), conformal_coefficients(p));
    const auto cs = solve_cell(0.4, 2.3, 1.0, model, SolveOptions{});
    const auto e = single_energy(cs.profile, 1.0, model);
    const CellMask mask = model.mask(cs.profile);
    Rng rng(17);
    for (int k = 0; k < 50; ++k) {
      Vector v = Vector::Zero(model.grid().M);
      double c[4];
      for (double& x : c) x = rng.normal();
      for (int j = mask.first; j < mask.last; ++j) {
        const double t = model.grid().nodes[j];
        const double s = (t - 0.4) / 1.9;
        double f = 0.0;
        for (int q = 0; q < 4; ++q) f += c[q] * std::sin((q + 1) * pi * s);
        v[j] = f * std::pow(s * (1.0 - s), p.m);
      }
      EXPECT_LT(std::abs(e.gradient.dot(v)), 1e-6 * std::sqrt(model.norm_sq(v))) << "k=" << k;
    }
  }
}

TEST(SolveCell, StrongResidualM2) {
  const ProblemParams p = p5();
  const EnergyModel model(make_grid(1024, p), conformal_coefficients(p));
  const auto cs = solve_cell(0.0, pi, 1.0, model, SolveOptions{});
  EXPECT_LT(ode_residual(cs.profile, model.grid(), model.coeffs()).discrepancy, 1e-3);
}

TEST(SolveCell, NonconvergenceCarriesResidual) {
  const EnergyModel model(make_grid(256, p4()), conformal_coefficients(p4()));
  SolveOptions o;
  o.max_iters = 1;
  try {
    solve_cell(0.2, 2.0, 1.0, model, o);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.last_residual(), 0.0);
  }
}

TEST(SolveCell, RejectsThinCell) {
  const EnergyModel model(make_grid(64, p4()), conformal_coefficients(p4()));
  EXPECT_THROW(solve_cell(1.0, 1.05, 1.0, model, SolveOptions{}), ValidationError);
}

TEST(SolveSystem, SingleSpeciesMatchesCell) {
  const EnergyModel model(make_grid(1024, p4()), conformal_coefficients(p4()));
  CouplingMatrix cm;
  cm.mu = {1.0};
  const auto sol = solve_system(cm, model, std::nullopt, SolveOptions{});
  const auto cs = solve_cell(0.0, pi, 1.0, model, SolveOptions{});
  EXPECT_NEAR(sol.report.energy, cs.c, 1e-6 * cs.c);
}

TEST(SolveSystem, SignFlipLeavesEnergy) {
  const EnergyModel model(make_grid(512, p4()), conformal_coefficients(p4()));
  const auto cm = uniform_coupling(2, 1.0, -4.0, 4.0);
  ProfileBundle init = default_init(model.grid(), 2);
  const auto a = solve_system(cm, model, init, SolveOptions{});
  init.components[1].values *= -1.0;
  const auto b = solve_system(cm, model, init, SolveOptions{});
  EXPECT_NEAR(a.report.energy, b.report.energy, 1e-8 * a.report.energy);
}

TEST(SolveSystem, ConvergedBundleIsOnNehariSet) {
  for (auto p : {p4(), p5()}) {
    const EnergyModel model(make_grid(512, p), conformal_coefficients(p));
    const auto cm = uniform_coupling(2, 1.0, -2.0, p.two_star);
    const auto sol = solve_system(cm, model, std::nullopt, SolveOptions{});
    ASSERT_TRUE(sol.converged) << "N=" << p.N << " stop=" << sol.stop_reason << " it=" << sol.iterations << " res=" << sol.residual;
    const auto& r = sol.report;
    for (int i = 0; i < 2; ++i) EXPECT_LT(std::abs(r.nehari_residual[i]), 1e-8 * r.norm_sq[i]);
    EXPECT_LT(std::abs(r.energy - r.nehari_energy(p)), 1e-8 * std::abs(r.energy));
    EXPECT_EQ(sol.signs.size(), 2u);
  }
}

TEST(SolveSystem, InitOutsideAdmissibleSetRejected) {
  const EnergyModel model(make_grid(256, p4()), conformal_coefficients(p4()));
  const auto cm = uniform_coupling(2, 1.0, -50.0, 4.0);
  const Profile one = sample_profile(model.grid(), [](double) { return 1.0; });
  try {
    solve_system(cm, model, ProfileBundle{{one, one}}, SolveOptions{});
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("initialization outside U"), std::string::npos);
  }
}

TEST(SolveSystem, MultistartIsDeterministic) {
  const EnergyModel model(make_grid(256, p4()), conformal_coefficients(p4()));
  const auto cm = uniform_coupling(2, 1.0, -3.0, 4.0);
  SolveOptions o;
  o.multistart = 3;
  o.seed = 42;
  const auto a = solve_system(cm, model, std::nullopt, o);
  o.jobs = 3;
  const auto b = solve_system(cm, model, std::nullopt, o);
  EXPECT_EQ(a.start_energies.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    if (std::isnan(a.start_energies[k])) {
      EXPECT_TRUE(std::isnan(b.start_energies[k]));
    } else {
      EXPECT_EQ(a.start_energies[k], b.start_energies[k]);
    }
  }
  EXPECT_EQ(a.bundle.components[0].values, b.bundle.components[0].values);
}

TEST(SolveSystem, StrongCouplingApproachesPartitionFromBelow) {
  // Equal blocks, N = 3: the gap to the optimal partition shrinks with |lambda| but
  // slowly; only the bound and the trend are asserted here.
  const ProblemParams p = p3();
  const EnergyModel model(make_grid(512, p), conformal_coefficients(p));
  const auto opt = optimize_partition(2, 1.0, model, SolveOptions{});
  double prev_gap = 1.0;
  for (double lambda : {-1.0, -1e2, -1e4}) {
    const auto sol = solve_system(uniform_coupling(2, 1.0, lambda, p.two_star), model, std::nullopt, SolveOptions{});
    ASSERT_TRUE(sol.converged);
    const double gap = (opt.report.total - sol.report.energy) / opt.report.total;
    EXPECT_GT(gap, 0.0);
    EXPECT_LT(gap, prev_gap);
    prev_gap = gap;
  }
}

class Sweep : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const ProblemParams p = p4();
    model_ = new EnergyModel(make_grid(1024, p), conformal_coefficients(p));
    SweepSchedule s;
    s.lambdas = geometric_lambdas(4.0, 6);
    steps_ = new std::vector<SweepStep>(lambda_sweep(s, uniform_coupling(2, 1.0, -1.0, 4.0), *model_));
    c0_ = optimize_partition(2, 1.0, *model_, SolveOptions{}).report.total;
    d0_ = model_->norm_sq(solve_cell(0.0, pi, 1.0, *model_, SolveOptions{}).profile.values);
  }
  static void TearDownTestSuite() {
    delete steps_;
    delete model_;
  }
  static EnergyModel* model_;
  static std::vector<SweepStep>* steps_;
  static double c0_;
  static double d0_;
};

EnergyModel* Sweep::model_ = nullptr;
std::vector<SweepStep>* Sweep::steps_ = nullptr;
double Sweep::c0_ = 0.0;
double Sweep::d0_ = 0.0;

TEST_F(Sweep, EveryStepConverges) {
  for (const auto& s : *steps_) EXPECT_TRUE(s.solution.converged) << s.lambda;
  for (std::size_t k = 1; k < steps_->size(); ++k) EXPECT_TRUE((*steps_)[k].warm_started);
}

TEST_F(Sweep, OverlapsDecrease) {
  for (std::size_t k = 1; k < steps_->size(); ++k) {
    EXPECT_LE((*steps_)[k].solution.report.overlap(0, 1), (*steps_)[k - 1].solution.report.overlap(0, 1) + 1e-8);
  }
}

TEST_F(Sweep, WeightedOverlapBound) {
  for (const auto& s : *steps_) {
    const auto& r = s.solution.report;
    for (int i = 0; i < 2; ++i) {
      EXPECT_LE(r.weighted_overlap(i, 1 - i), r.nonlinear[i] / std::abs(s.lambda)) << s.lambda;
    }
  }
}

TEST_F(Sweep, EnergiesNondecreasingAndBelowPartitionValue) {
  for (std::size_t k = 0; k < steps_->size(); ++k) {
    const double e = (*steps_)[k].solution.report.energy;
    EXPECT_LE(e, c0_);
    if (k > 0) EXPECT_GE(e, (*steps_)[k - 1].solution.report.energy - 1e-8 * e);
  }
}

TEST_F(Sweep, UniformLowerBoundOnComponentNorms) {
  for (const auto& s : *steps_) {
    for (double n : s.solution.report.norm_sq) EXPECT_GE(n, d0_ * (1.0 - 1e-8)) << s.lambda;
  }
}

TEST(SweepSchedule, RejectsBadSchedules) {
  SweepSchedule s;
  EXPECT_THROW(s.validate(), ValidationError);
  s.lambdas = {-1.0, -1.0};
  EXPECT_THROW(s.validate(), ValidationError);
  s.lambdas = {-1.0, 2.0};
  EXPECT_THROW(s.validate(), ValidationError);
  s.lambdas = {-1.0, -4.0};
  EXPECT_NO_THROW(s.validate());
}

TEST(Determinism, IdenticalTrajectories) {
  const EnergyModel model(make_grid(256, p4()), conformal_coefficients(p4()));
  const auto cm = uniform_coupling(2, 1.0, -8.0, 4.0);
  const auto a = minimize_psi(model, cm, default_init(model.grid(), 2), SolveOptions{});
  const auto b = minimize_psi(model, cm, default_init(model.grid(), 2), SolveOptions{});
  EXPECT_EQ(a.history, b.history);
}

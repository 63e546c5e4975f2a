#pragma once

#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "polyseg/oracles.hpp"
#include "polyseg/solvers.hpp"

namespace polyseg {

struct BatterySettings {
  int M = 1024;
  long mc_samples = 100000;
  double fd_epsilon = 1e-4;
  int coercivity_trials = 100;
  std::vector<double> coercivity_eps{0.3, 0.7};
  std::uint64_t seed = 1;
  PhiConvention convention = PhiConvention::selfadjoint;
};

inline const std::vector<std::string>& battery_suites() {
  static const std::vector<std::string> names{"mass", "mc", "orbit", "fd", "ode", "coercivity"};
  return names;
}

namespace detail {

/// Smooth, non-critical test profiles for the isometry and gradient checks.
inline std::vector<Profile> battery_profiles(const Grid& g) {
  return {
      sample_profile(g, [](double) { return 1.0; }),
      sample_profile(g, [](double t) { return std::cos(t); }),
      sample_profile(g, [](double t) { return std::cos(t) * std::cos(t); }),
      sample_profile(g, [](double t) { return 1.0 + 0.5 * std::sin(2.0 * t) - 0.3 * std::cos(3.0 * t); }),
      bump_profile(g, 0.5, 2.4),
  };
}

inline ProfileBundle battery_bundle(const Grid& g) {
  return ProfileBundle{{sample_profile(g, [](double t) { return 1.0 + 0.8 * std::cos(t); }),
                        sample_profile(g, [](double t) { return 1.0 - 0.7 * std::cos(t) + 0.1 * std::sin(2.0 * t); })}};
}

}  // namespace detail

/// Runs the named suites ("all" or empty for every suite). Each oracle gets its own
/// seed derived from settings.seed, so suites can be run separately with the same result.
inline std::vector<OracleReport> run_battery(const ProblemParams& p, const BatterySettings& s,
                                             const std::vector<std::string>& suites = {}) {
  std::set<std::string> want(suites.begin(), suites.end());
  for (const auto& name : want) {
    if (name == "all") continue;
    bool known = false;
    for (const auto& k : battery_suites()) known = known || k == name;
    if (!known) throw ValidationError("verify: unknown suite '" + name + "'");
  }
  const bool all = want.empty() || want.count("all");
  auto on = [&](const char* name) { return all || want.count(name) > 0; };

  const EnergyModel model(make_grid(s.M, p, s.convention), conformal_coefficients(p));
  const Grid& g = model.grid();
  std::vector<OracleReport> out;
  auto tag = [](OracleReport r, const std::string& label) {
    r.name += "[" + label + "]";
    return r;
  };

  if (on("mass")) out.push_back(mass_identity(g));
  if (on("mc")) {
    const auto profiles = detail::battery_profiles(g);
    for (std::size_t k = 0; k < profiles.size(); ++k) {
      out.push_back(tag(mc_sphere_integral(profiles[k], g, s.mc_samples, derive_seed(s.seed, 100 + k)),
                        "profile " + std::to_string(k)));
    }
  }
  if (on("orbit")) out.push_back(check_orbit_identities(p, s.M, derive_seed(s.seed, 200)));
  if (on("fd")) {
    const auto profiles = detail::battery_profiles(g);
    out.push_back(tag(fd_check_single(Profile{Vector::Zero(g.M), std::nullopt}, 1.0, model, s.fd_epsilon,
                                      derive_seed(s.seed, 300)),
                      "single zero"));
    out.push_back(tag(fd_check_single(profiles[3], 1.0, model, s.fd_epsilon, derive_seed(s.seed, 301)), "single"));
    out.push_back(tag(fd_check_single(profiles[4], 1.0, model, s.fd_epsilon, derive_seed(s.seed, 302)),
                      "single clamped"));
    const auto cm = uniform_coupling(2, 1.0, -1.0, p.two_star);
    const ProfileBundle wb = detail::battery_bundle(g);
    out.push_back(tag(fd_check_system(wb, cm, model, s.fd_epsilon, derive_seed(s.seed, 303)), "system"));
    out.push_back(tag(fd_check_psi(normalized(wb, model), cm, model, s.fd_epsilon, derive_seed(s.seed, 304)), "psi"));
  }
  if (on("ode")) {
    if (p.m > 2) {
      OracleReport r;
      r.name = "ode_residual";
      r.skipped = true;
      r.note = "no strong form for m >= 3";
      r.decide();
      out.push_back(r);
    } else {
      const auto cs = solve_cell(0.0, std::numbers::pi, 1.0, model, SolveOptions{});
      out.push_back(ode_residual(cs.profile, g, model.coeffs()));
    }
  }
  if (on("coercivity")) {
    for (double eps : s.coercivity_eps) {
      for (int i = 1; i <= p.m; ++i) {
        const auto seed = derive_seed(s.seed, 400 + 100 * i + static_cast<std::uint64_t>(std::lround(eps * 100)));
        char label[48];
        std::snprintf(label, sizeof label, "eps %.3g, i %d", eps, i);
        out.push_back(tag(coercivity_probe(eps, i, p, s.coercivity_trials, seed, s.convention), label));
      }
    }
  }
  return out;
}

}  // namespace polyseg

#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "polyseg/battery.hpp"
#include "polyseg/euclidean.hpp"
#include "polyseg/io/config.hpp"
#include "polyseg/io/output.hpp"
#include "polyseg/partition.hpp"
#include "polyseg/solvers.hpp"

namespace polyseg::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kNonconvergence = 2, kOracleFailure = 3 };

namespace detail {

using io::Json;
namespace fs = std::filesystem;

struct Context {
  io::RunConfig config;
  fs::path out;
  std::optional<std::vector<double>> ray;
  std::ostream* log = nullptr;
};

inline std::vector<double> parse_direction(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("--euclidean-ray: cannot read '" + item + "' as a number");
    }
  }
  double n = 0.0;
  for (double x : out) n += x * x;
  if (!(n > 0.0)) throw ValidationError("--euclidean-ray: direction must be nonzero");
  for (double& x : out) x /= std::sqrt(n);
  return out;
}

inline Json summary_head(const Context& ctx, const std::string& command) {
  return Json{{"command", command}, {"config", io::config_to_json(ctx.config)}};
}

inline void emit_profiles(const Context& ctx, const Grid& grid, const std::vector<Profile>& profiles,
                          const std::string& title, Json& summary) {
  io::write_text(ctx.out / "profiles.csv", io::profiles_csv(grid, profiles));
  summary["files"].push_back("profiles.csv");
  if (ctx.config.svg) {
    io::write_text(ctx.out / "profiles.svg", io::profiles_svg(title, grid, profiles));
    summary["files"].push_back("profiles.svg");
  }
  if (ctx.ray) {
    std::vector<double> radii;
    const int n = ctx.config.ray_points;
    for (int k = 0; k < n; ++k) radii.push_back(ctx.config.ray_radius * k / (n - 1));
    std::vector<std::vector<double>> values;
    for (const auto& w : profiles) values.push_back(euclidean_ray(w, grid, *ctx.ray, radii));
    io::write_text(ctx.out / "ray.csv", io::ray_csv(radii, values));
    summary["euclidean_ray"] = *ctx.ray;
    summary["files"].push_back("ray.csv");
  }
}

inline void finish(const Context& ctx, Json summary) {
  summary["files"].push_back("summary.json");
  io::write_text(ctx.out / "summary.json", summary.dump(2) + "\n");
}

inline EnergyModel make_model(const io::RunConfig& c) {
  return EnergyModel(make_grid(c.M, c.params(), c.convention), conformal_coefficients(c.params()));
}

inline Json solution_json(const SystemSolution& s) {
  Json signs = Json::array();
  for (const auto& st : s.signs) signs.push_back(io::to_json(st));
  return Json{{"converged", s.converged},          {"stop_reason", s.stop_reason},
              {"iterations", s.iterations},        {"residual", s.residual},
              {"report", io::to_json(s.report)},   {"signs", signs},
              {"best_start", s.best_start},        {"start_energies", s.start_energies}};
}

inline int solve_cell_cmd(const Context& ctx, double a, double b) {
  const auto& c = ctx.config;
  const EnergyModel model = make_model(c);
  const double mu = c.mu.empty() ? 1.0 : c.mu.front();
  const CellSolution cs = solve_cell(a, b, mu, model, c.solver);
  Json s = summary_head(ctx, "solve-cell");
  s["result"] = {{"a", a},
                 {"b", b},
                 {"mu", mu},
                 {"c", cs.c},
                 {"converged", cs.converged},
                 {"iterations", cs.iterations},
                 {"residual", cs.residual},
                 {"sign", io::to_json(sign_stats(cs.profile, model.grid()))}};
  s["files"] = Json::array();
  emit_profiles(ctx, model.grid(), {cs.profile}, "cell profile", s);
  finish(ctx, s);
  *ctx.log << "c = " << io::format_double(cs.c) << "\n";
  return cs.converged ? kOk : kNonconvergence;
}

inline int solve_system_cmd(const Context& ctx) {
  const auto& c = ctx.config;
  const EnergyModel model = make_model(c);
  const auto sol = solve_system(c.couplings(), model, std::nullopt, c.solver);
  Json s = summary_head(ctx, "solve-system");
  s["result"] = solution_json(sol);
  s["files"] = Json::array();
  emit_profiles(ctx, model.grid(), sol.bundle.components, "system profiles", s);
  finish(ctx, s);
  *ctx.log << "energy = " << io::format_double(sol.report.energy) << (sol.converged ? "" : " (not converged)") << "\n";
  return sol.converged ? kOk : kNonconvergence;
}

inline int sweep_cmd(const Context& ctx) {
  const auto& c = ctx.config;
  if (c.ell < 2) throw ValidationError("sweep-lambda: needs couplings.ell >= 2");
  const EnergyModel model = make_model(c);
  const auto steps = lambda_sweep(c.schedule(), c.couplings(), model);
  Json s = summary_head(ctx, "sweep-lambda");
  Json rows = Json::array();
  bool ok = true;
  io::Series energy{"energy", {}, {}};
  for (const auto& st : steps) {
    ok = ok && st.solution.converged;
    Json row = solution_json(st.solution);
    row["lambda"] = st.lambda;
    row["warm_started"] = st.warm_started;
    row["fresh_fallback"] = st.fresh_fallback;
    rows.push_back(row);
    energy.x.push_back(std::log10(-st.lambda));
    energy.y.push_back(st.solution.report.energy);
  }
  s["steps"] = rows;
  if (c.compare_partition) {
    const auto opt = optimize_partition(c.ell, c.mu.empty() ? 1.0 : c.mu.front(), model, c.solver, c.search);
    const auto cmp = compare_partition(steps, opt.partition, opt.report.total, c.theta,
                                       c.mu.empty() ? 1.0 : c.mu.front(), model, c.solver);
    Json j{{"optimal_points", io::to_json(opt.partition)},
           {"optimal_total", opt.report.total},
           {"optimal_converged", opt.converged},
           {"theta", c.theta},
           {"extracted_points", cmp.extracted ? io::to_json(*cmp.extracted) : Json(nullptr)},
           {"extraction_error", cmp.extraction_error},
           {"distances", cmp.distances},
           {"max_distance_in_dt", nullptr},
           {"extracted_total", cmp.extracted_total ? Json(*cmp.extracted_total) : Json(nullptr)},
           {"sweep_energy", cmp.sweep_energy},
           {"energy_gap", cmp.sweep_gap},
           {"relative_energy_gap", cmp.relative_sweep_gap}};
    if (!cmp.distances.empty()) {
      j["max_distance_in_dt"] = *std::max_element(cmp.distances.begin(), cmp.distances.end()) / model.grid().dt;
    }
    s["comparison"] = j;
    ok = ok && opt.converged;
    energy.label = "sweep";
    io::Series level{"partition", {energy.x.front(), energy.x.back()}, {opt.report.total, opt.report.total}};
    if (c.svg) {
      io::write_text(ctx.out / "energy.svg", io::svg_plot("energy along the sweep", "log10 |lambda|", "energy",
                                                          {energy, level}));
    }
  } else if (c.svg) {
    io::write_text(ctx.out / "energy.svg", io::svg_plot("energy along the sweep", "log10 |lambda|", "energy", {energy}));
  }
  s["files"] = Json::array();
  if (c.svg) s["files"].push_back("energy.svg");
  emit_profiles(ctx, model.grid(), steps.back().solution.bundle.components, "profiles at the last lambda", s);
  finish(ctx, s);
  *ctx.log << "final energy = " << io::format_double(steps.back().solution.report.energy) << "\n";
  return ok ? kOk : kNonconvergence;
}

inline int partition_cmd(const Context& ctx) {
  const auto& c = ctx.config;
  const EnergyModel model = make_model(c);
  const auto opt = optimize_partition(c.ell, c.mu.empty() ? 1.0 : c.mu.front(), model, c.solver, c.search);
  Json starts = Json::array();
  for (std::size_t k = 0; k < opt.starts.size(); ++k) {
    starts.push_back(
        {{"start", io::to_json(opt.starts[k])}, {"result", io::to_json(opt.results[k])}, {"total", opt.totals[k]}});
  }
  Json s = summary_head(ctx, "optimal-partition");
  s["result"] = {{"points", io::to_json(opt.partition)},
                 {"energies", opt.report.energies},
                 {"total", opt.report.total},
                 {"topology", opt.report.topology},
                 {"converged", opt.converged},
                 {"starts_disagree", opt.starts_disagree},
                 {"best_start", opt.best_start},
                 {"cell_solves", opt.cell_solves},
                 {"starts", starts}};
  s["files"] = Json::array();
  emit_profiles(ctx, model.grid(), opt.report.profiles, "optimal partition cells", s);
  finish(ctx, s);
  *ctx.log << "total = " << io::format_double(opt.report.total) << "\n";
  return opt.converged ? kOk : kNonconvergence;
}

inline int verify_cmd(const Context& ctx, const std::vector<std::string>& suites) {
  const auto& c = ctx.config;
  const auto reports = run_battery(c.params(), c.battery(), suites);
  Json s = summary_head(ctx, "verify");
  s["suites"] = suites.empty() ? Json(std::vector<std::string>{"all"}) : Json(suites);
  Json list = Json::array();
  bool ok = true;
  for (const auto& r : reports) {
    ok = ok && r.pass;
    list.push_back(io::to_json(r));
    *ctx.log << (r.pass ? (r.skipped ? "SKIP " : "PASS ") : "FAIL ") << r.name << "\n";
  }
  s["reports"] = list;
  s["pass"] = ok;
  s["files"] = Json::array();
  finish(ctx, s);
  return ok ? kOk : kOracleFailure;
}

}  // namespace detail

/// Parses argv and runs one subcommand; returns the process exit code.
inline int run_command(int argc, const char* const* argv, std::ostream& log = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"Symmetric polyharmonic systems: cell levels, coupled solves, segregation and partitions", "polyseg"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string ray;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "random seed");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--euclidean-ray", ray, "also sample u(x) along this direction of R^N (comma separated)");

  double a = 0.0, b = 0.0;
  auto* cell = app.add_subcommand("solve-cell", "least-energy level of one cell (a, b)");
  cell->add_option("a", a, "left endpoint")->required();
  cell->add_option("b", b, "right endpoint")->required();
  auto* system = app.add_subcommand("solve-system", "least-energy solution of the coupled system");
  auto* sweep = app.add_subcommand("sweep-lambda", "continuation to strong competition");
  int ell = 0;
  auto* part = app.add_subcommand("optimal-partition", "optimal partition into ell cells");
  part->add_option("--ell", ell, "number of cells")->required()->check(CLI::Range(2, 64));
  std::vector<std::string> suites;
  auto* verify = app.add_subcommand("verify", "run the oracle battery");
  verify->add_option("--suite", suites, "mass, mc, orbit, fd, ode, coercivity or all (repeatable)");
  for (auto* sub : {cell, system, sweep, part, verify}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, log, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, log, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, log, err);
    return kValidation;
  }

  try {
    detail::Context ctx;
    ctx.log = &log;
    ctx.config = config_path.empty() ? io::RunConfig{} : io::load_config(config_path);
    if (jobs) ctx.config.solver.jobs = *jobs;
    if (seed) ctx.config.solver.seed = *seed;
    if (!out_dir.empty()) ctx.config.out_dir = out_dir;
    if (*part) ctx.config.ell = ell;
    ctx.config.validate();
    ctx.out = ctx.config.out_dir;
    if (!ray.empty()) {
      ctx.ray = detail::parse_direction(ray);
      if (static_cast<int>(ctx.ray->size()) != ctx.config.N) {
        throw ValidationError("--euclidean-ray: need N = " + std::to_string(ctx.config.N) + " components");
      }
    }
    if (*cell) return detail::solve_cell_cmd(ctx, a, b);
    if (*system) return detail::solve_system_cmd(ctx);
    if (*sweep) return detail::sweep_cmd(ctx);
    if (*part) return detail::partition_cmd(ctx);
    return detail::verify_cmd(ctx, suites);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const ConvergenceError& e) {
    err << "not converged: " << e.what() << " (last residual " << e.last_residual() << ")\n";
    return kNonconvergence;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }
}

}  // namespace polyseg::cli

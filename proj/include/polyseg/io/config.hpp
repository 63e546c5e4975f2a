#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "polyseg/battery.hpp"
#include "polyseg/partition.hpp"
#include "polyseg/solvers.hpp"

namespace polyseg::io {

using Json = nlohmann::ordered_json;

/// Everything one run needs. Missing keys take the defaults below; unknown keys are errors.
struct RunConfig {
  int N = 4, m = 1, n1 = 2, n2 = 3;
  int M = 2048;
  PhiConvention convention = PhiConvention::selfadjoint;

  int ell = 2;
  std::vector<double> mu;  ///< empty: 1 for every species
  double lambda = -1.0;
  std::optional<double> alpha;  ///< off-diagonal exponents; default 2*/2 each

  std::vector<double> sweep_lambdas = geometric_lambdas(4.0, 8);
  bool warm_start = true;
  bool compare_partition = true;

  SolveOptions solver;
  PartitionSearchOptions search;
  double theta = 1e-2;

  long mc_samples = 100000;
  double fd_epsilon = 1e-4;
  int coercivity_trials = 100;
  std::vector<double> coercivity_eps{0.3, 0.7};

  std::string out_dir = "out";
  bool svg = true;
  int ray_points = 201;
  double ray_radius = 10.0;

  ProblemParams params() const { return make_params(N, m, n1, n2); }

  /// Couplings for the configured lambda (or the one given).
  CouplingMatrix couplings(std::optional<double> lam = std::nullopt) const {
    const ProblemParams p = params();
    CouplingMatrix cm = uniform_coupling(ell, 1.0, -1.0, p.two_star);
    cm.mu = mu.empty() ? std::vector<double>(ell, 1.0) : mu;
    if (ell > 1) {
      cm = with_lambda(cm, lam.value_or(lambda));
      if (alpha) {
        for (int i = 0; i < ell; ++i)
          for (int j = 0; j < ell; ++j)
            if (i != j) {
              cm.alpha(i, j) = i < j ? *alpha : p.two_star - *alpha;
              cm.beta(i, j) = i < j ? p.two_star - *alpha : *alpha;
            }
      }
    }
    cm.validate(p.two_star);
    return cm;
  }

  SweepSchedule schedule() const {
    SweepSchedule s;
    s.lambdas = sweep_lambdas;
    s.options = solver;
    s.warm_start = warm_start;
    return s;
  }

  BatterySettings battery() const {
    BatterySettings b;
    b.M = M;
    b.mc_samples = mc_samples;
    b.fd_epsilon = fd_epsilon;
    b.coercivity_trials = coercivity_trials;
    b.coercivity_eps = coercivity_eps;
    b.seed = solver.seed;
    b.convention = convention;
    return b;
  }

  /// Re-checks every module-level invariant; throws ValidationError.
  void validate() const {
    const ProblemParams p = params();
    if (M < kMinGridNodes) throw ValidationError("grid.M: need at least " + std::to_string(kMinGridNodes) + " nodes");
    if (ell < 1) throw ValidationError("couplings.ell: must be >= 1");
    if (!mu.empty() && static_cast<int>(mu.size()) != ell) throw ValidationError("couplings.mu: need ell entries");
    if (alpha && !(*alpha > 1.0 && p.two_star - *alpha > 1.0)) {
      throw ValidationError("couplings.alpha: need alpha > 1 and 2* - alpha > 1");
    }
    couplings();
    solver.validate();
    schedule().validate();
    if (search.random_starts < 0) throw ValidationError("partition.random_starts: must be >= 0");
    if (search.max_sweeps < 1) throw ValidationError("partition.max_sweeps: must be >= 1");
    if (!(theta > 0.0 && theta < 1.0)) throw ValidationError("partition.theta: must lie in (0, 1)");
    if (mc_samples < 10000) throw ValidationError("verify.mc_samples: need at least 1e4");
    if (!(fd_epsilon >= 1e-8 && fd_epsilon <= 1e-4)) throw ValidationError("verify.fd_epsilon: must lie in [1e-8, 1e-4]");
    if (coercivity_trials < 1) throw ValidationError("verify.coercivity_trials: must be >= 1");
    for (double e : coercivity_eps) {
      if (!(e > 0.0 && e < std::numbers::pi / 2)) throw ValidationError("verify.coercivity_eps: need 0 < eps < pi/2");
    }
    if (out_dir.empty()) throw ValidationError("output.dir: must not be empty");
    if (ray_points < 2) throw ValidationError("output.ray_points: must be >= 2");
    if (!(ray_radius > 0.0)) throw ValidationError("output.ray_radius: must be positive");
  }
};

namespace detail {

/// Reads the keys of one JSON object, remembering which were consumed.
class ObjectReader {
 public:
  ObjectReader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ValidationError(where() + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(where(key) + ": wrong type (" + std::string(it->type_name()) + ")");
    }
  }

  void get_optional(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return;
    if (!it->is_number()) throw ValidationError(where(key) + ": expected a number");
    out = it->get<double>();
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key = "") const {
    std::string p = path_.empty() ? key : key.empty() ? path_ : path_ + "." + key;
    return "config key '" + (p.empty() ? std::string("<root>") : p) + "'";
  }

  /// Throws on the first key that no getter asked for.
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ValidationError(where(it.key()) + ": unknown key");
    }
  }

 private:
  const Json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
void section(ObjectReader& parent, const char* key, F&& body) {
  if (const Json* j = parent.child(key)) {
    ObjectReader r(*j, key);
    body(r);
    r.finish();
  }
}

}  // namespace detail

inline RunConfig config_from_json(const Json& j) {
  RunConfig c;
  detail::ObjectReader root(j, "");
  detail::section(root, "params", [&](auto& r) {
    r.get("N", c.N);
    r.get("m", c.m);
    r.get("n1", c.n1);
    r.get("n2", c.n2);
  });
  detail::section(root, "grid", [&](auto& r) {
    r.get("M", c.M);
    std::string phi = to_string(c.convention);
    r.get("phi", phi);
    if (phi == "selfadjoint") {
      c.convention = PhiConvention::selfadjoint;
    } else if (phi == "paper_literal") {
      c.convention = PhiConvention::paper_literal;
    } else {
      throw ValidationError(r.where("phi") + ": expected \"selfadjoint\" or \"paper_literal\"");
    }
  });
  detail::section(root, "couplings", [&](auto& r) {
    r.get("ell", c.ell);
    r.get("mu", c.mu);
    r.get("lambda", c.lambda);
    r.get_optional("alpha", c.alpha);
  });
  detail::section(root, "sweep", [&](auto& r) {
    r.get("lambdas", c.sweep_lambdas);
    r.get("warm_start", c.warm_start);
    r.get("compare_partition", c.compare_partition);
  });
  detail::section(root, "solver", [&](auto& r) {
    auto& s = c.solver;
    r.get("max_iters", s.max_iters);
    r.get("tol_grad", s.tol_grad);
    r.get("tol_energy", s.tol_energy);
    r.get("stall_window", s.stall_window);
    r.get("armijo_c", s.armijo_c);
    r.get("backtrack", s.backtrack);
    r.get("step_cap", s.step_cap);
    r.get("multistart", s.multistart);
    r.get("coupling_preconditioner", s.coupling_preconditioner);
  });
  detail::section(root, "partition", [&](auto& r) {
    r.get("random_starts", c.search.random_starts);
    r.get("max_sweeps", c.search.max_sweeps);
    r.get("theta", c.theta);
  });
  detail::section(root, "verify", [&](auto& r) {
    r.get("mc_samples", c.mc_samples);
    r.get("fd_epsilon", c.fd_epsilon);
    r.get("coercivity_trials", c.coercivity_trials);
    r.get("coercivity_eps", c.coercivity_eps);
  });
  detail::section(root, "output", [&](auto& r) {
    r.get("dir", c.out_dir);
    r.get("svg", c.svg);
    r.get("ray_points", c.ray_points);
    r.get("ray_radius", c.ray_radius);
  });
  root.get("seed", c.solver.seed);
  root.get("jobs", c.solver.jobs);
  root.finish();
  c.validate();
  return c;
}

/// Parses JSON text; syntax errors carry the line and column.
inline RunConfig parse_config(const std::string& text, const std::string& source = "config") {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(source + ": " + e.what());
  }
  return config_from_json(j);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

/// Complete config with every default spelled out; parses back to the same RunConfig.
inline Json config_to_json(const RunConfig& c) {
  Json j;
  j["params"] = {{"N", c.N}, {"m", c.m}, {"n1", c.n1}, {"n2", c.n2}};
  j["grid"] = {{"M", c.M}, {"phi", to_string(c.convention)}};
  j["couplings"] = {{"ell", c.ell},
                    {"mu", c.mu.empty() ? std::vector<double>(c.ell, 1.0) : c.mu},
                    {"lambda", c.lambda},
                    {"alpha", c.alpha ? Json(*c.alpha) : Json(nullptr)}};
  j["sweep"] = {{"lambdas", c.sweep_lambdas}, {"warm_start", c.warm_start}, {"compare_partition", c.compare_partition}};
  const auto& s = c.solver;
  j["solver"] = {{"max_iters", s.max_iters},     {"tol_grad", s.tol_grad},
                 {"tol_energy", s.tol_energy},   {"stall_window", s.stall_window},
                 {"armijo_c", s.armijo_c},       {"backtrack", s.backtrack},
                 {"step_cap", s.step_cap},       {"multistart", s.multistart},
                 {"coupling_preconditioner", s.coupling_preconditioner}};
  j["partition"] = {{"random_starts", c.search.random_starts}, {"max_sweeps", c.search.max_sweeps}, {"theta", c.theta}};
  j["verify"] = {{"mc_samples", c.mc_samples},
                 {"fd_epsilon", c.fd_epsilon},
                 {"coercivity_trials", c.coercivity_trials},
                 {"coercivity_eps", c.coercivity_eps}};
  j["output"] = {{"dir", c.out_dir}, {"svg", c.svg}, {"ray_points", c.ray_points}, {"ray_radius", c.ray_radius}};
  j["seed"] = s.seed;
  j["jobs"] = s.jobs;
  return j;
}

}  // namespace polyseg::io

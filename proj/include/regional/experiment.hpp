#ifndef REGIONAL_EXPERIMENT_HPP
#define REGIONAL_EXPERIMENT_HPP

// Experiment configuration, orchestration and artifact output.

#include <nlohmann/json.hpp>

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "regional/concentration.hpp"
#include "regional/errors.hpp"
#include "regional/functionals.hpp"
#include "regional/model.hpp"
#include "regional/parallel.hpp"
#include "regional/solver.hpp"

namespace regional {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutDirEnv = "REGIONAL_OUT_DIR";
inline constexpr const char* kDefaultOutDir = "regional_out";

class ConfigParseError : public std::runtime_error {
 public:
  ConfigParseError(const std::string& what, std::size_t line, std::size_t column)
      : std::runtime_error(what), line_(line), column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"solve", "limit", "sweep", "concentration", "sobolev",
                                                 "lambda-scan"};
  return names;
}

struct ScopeDescriptor {
  ScopeKind kind = ScopeKind::radial_well;
  double rho0 = 1.0;
  double rho_inf = 2.0;
  double sigma = 1.0;
  double value = 1.0;
  double slope = 0.0;
  double a = 0.5;
  Point center{};

  ScopeFunction build() const {
    switch (kind) {
      case ScopeKind::constant: return ScopeFunction::constant(value);
      case ScopeKind::radial_well: return ScopeFunction::radial_well(rho0, rho_inf, sigma, center);
      case ScopeKind::radial_bump: return ScopeFunction::radial_bump(rho0, rho_inf, sigma, center);
      case ScopeKind::linear_growth: return ScopeFunction::linear_growth(rho0, slope, a, center);
    }
    throw ValidationError("scope.kind", "unknown");
  }
};

struct ExperimentConfig {
  std::string experiment = "solve";
  int n = 1;
  double alpha = 0.4;
  double lambda = 10.0;
  double q = 3.0;
  double eps = 1.0;
  ScopeDescriptor scope{};
  double extent = 8.0;
  int points = 257;
  SolverConfig solver{};
  std::uint64_t seed = 0;
  std::vector<double> eps_list = {0.5, 0.35, 0.25, 0.18, 0.125};
  std::vector<double> lambdas = {0.5, 1.0, 2.0, 5.0, 10.0, 20.0};
  HSearch h_search{};
  std::optional<std::string> out_dir;

  ProblemParams params() const { return ProblemParams(n, alpha, lambda, q, eps); }
  GridSpec grid() const { return GridSpec(n, extent, points); }
  SolverConfig solver_config() const {
    SolverConfig c = solver;
    c.seed = seed;
    return c;
  }
};

// ---------------------------------------------------------------------------
// JSON <-> config
// ---------------------------------------------------------------------------

namespace detail {

inline void reject_unknown(const json& obj, const std::string& prefix, std::initializer_list<const char*> keys) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ValidationError(prefix + it.key(), "unknown key");
  }
}

template <class T>
T get_field(const json& obj, const char* key, const std::string& path, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(path + key, "has the wrong type");
  }
}

inline Point point_from_json(const json& j, const std::string& field) {
  Point p{};
  if (!j.is_array() || j.size() > static_cast<std::size_t>(kMaxDim))
    throw ValidationError(field, "must be an array of at most 3 numbers");
  for (std::size_t d = 0; d < j.size(); ++d) {
    if (!j[d].is_number()) throw ValidationError(field, "must contain numbers");
    p[d] = j[d].get<double>();
  }
  return p;
}

inline json point_to_json(const Point& p, int n) {
  json a = json::array();
  for (int d = 0; d < n; ++d) a.push_back(p[d]);
  return a;
}

}  // namespace detail

inline json to_json(const ExperimentConfig& c) {
  json seeds = json::array();
  for (const auto& s : c.solver.seeds)
    seeds.push_back({{"kind", to_string(s.kind)}, {"width", s.width}, {"shift", s.shift}});
  json j;
  j["experiment"] = c.experiment;
  j["params"] = {{"n", c.n}, {"alpha", c.alpha}, {"lambda", c.lambda}, {"q", c.q}, {"eps", c.eps}};
  j["scope"] = {{"kind", to_string(c.scope.kind)}, {"rho0", c.scope.rho0},   {"rho_inf", c.scope.rho_inf},
                {"sigma", c.scope.sigma},           {"value", c.scope.value}, {"slope", c.scope.slope},
                {"a", c.scope.a},                   {"center", detail::point_to_json(c.scope.center, c.n)}};
  j["grid"] = {{"extent", c.extent}, {"points", c.points}};
  j["solver"] = {{"max_iters", c.solver.max_iters},   {"armijo_c1", c.solver.armijo_c1},
                 {"initial_step", c.solver.initial_step}, {"max_halvings", c.solver.max_halvings},
                 {"grad_tol", c.solver.grad_tol},     {"nehari_tol", c.solver.nehari_tol},
                 {"jitter", c.solver.jitter},         {"seeds", seeds}};
  j["seed"] = c.seed;
  j["sweep"] = {{"eps", c.eps_list}};
  j["lambda_scan"] = {{"lambdas", c.lambdas}};
  j["concentration"] = {{"half_width", c.h_search.half_width}, {"coarse", c.h_search.coarse},
                        {"levels", c.h_search.levels},         {"angular", c.h_search.quad.angular},
                        {"radial", c.h_search.quad.radial}};
  j["output"] = c.out_dir ? json{{"dir", *c.out_dir}} : json::object();
  j["schema_version"] = kSchemaVersion;
  return j;
}

inline void validate(const ExperimentConfig& c) {
  bool known = false;
  for (const auto& e : experiment_names()) known = known || e == c.experiment;
  if (!known) throw ValidationError("experiment", "unknown experiment '" + c.experiment + "'");
  if (c.n < 1 || c.n > kMaxDim) throw ValidationError("params.n", "must be 1, 2 or 3");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ValidationError("params.alpha", "must lie in (0, 1)");
  if (!(2.0 * c.alpha < c.n)) throw ValidationError("params.alpha", "must satisfy 2 alpha < n");
  const double crit = 2.0 * c.n / (c.n - 2.0 * c.alpha);
  if (!(c.q > 1.0 && c.q < crit - 1.0)) throw ValidationError("params.q", "must lie in (1, 2*-1)");
  if (!(c.lambda >= 0.0)) throw ValidationError("params.lambda", "must be >= 0");
  if (!(c.eps > 0.0)) throw ValidationError("params.eps", "must be > 0");
  if (!(c.extent > 0.0)) throw ValidationError("grid.extent", "must be > 0");
  if (c.points < 8) throw ValidationError("grid.points", "must be >= 8");
  try {
    (void)c.scope.build();
  } catch (const DomainError& e) {
    throw ValidationError("scope", e.what());
  }
  c.solver.validate();
  for (std::size_t i = 0; i < c.eps_list.size(); ++i) {
    if (!(c.eps_list[i] > 0.0)) throw ValidationError("sweep.eps", "values must be > 0");
    if (i > 0 && !(c.eps_list[i] < c.eps_list[i - 1])) throw ValidationError("sweep.eps", "must be strictly decreasing");
  }
  if (c.eps_list.empty()) throw ValidationError("sweep.eps", "must not be empty");
  if (c.lambdas.empty()) throw ValidationError("lambda_scan.lambdas", "must not be empty");
  for (std::size_t i = 0; i < c.lambdas.size(); ++i) {
    if (!(c.lambdas[i] > 0.0)) throw ValidationError("lambda_scan.lambdas", "values must be > 0");
    if (i > 0 && !(c.lambdas[i] > c.lambdas[i - 1])) throw ValidationError("lambda_scan.lambdas", "must be strictly increasing");
  }
  if (!(c.h_search.half_width > 0.0)) throw ValidationError("concentration.half_width", "must be > 0");
  if (c.h_search.coarse < 5) throw ValidationError("concentration.coarse", "must be >= 5");
  if (c.h_search.levels < 0) throw ValidationError("concentration.levels", "must be >= 0");
  if (c.h_search.quad.angular < 4) throw ValidationError("concentration.angular", "must be >= 4");
  if (c.h_search.quad.radial < 8) throw ValidationError("concentration.radial", "must be >= 8");
}

inline ExperimentConfig config_from_json(const json& j) {
  using detail::get_field;
  if (!j.is_object()) throw ValidationError("<root>", "config must be a JSON object");
  detail::reject_unknown(j, "", {"experiment", "params", "scope", "grid", "solver", "seed", "sweep",
                                 "lambda_scan", "concentration", "output", "schema_version"});
  ExperimentConfig c;
  c.experiment = get_field<std::string>(j, "experiment", "", c.experiment);
  if (j.contains("schema_version") && get_field<int>(j, "schema_version", "", kSchemaVersion) != kSchemaVersion)
    throw ValidationError("schema_version", "unsupported schema version");
  auto section = [&](const char* key) -> json {
    if (!j.contains(key)) return json::object();
    if (!j.at(key).is_object()) throw ValidationError(key, "must be an object");
    return j.at(key);
  };
  const json p = section("params");
  detail::reject_unknown(p, "params.", {"n", "alpha", "lambda", "q", "eps"});
  c.n = get_field<int>(p, "n", "params.", c.n);
  c.alpha = get_field<double>(p, "alpha", "params.", c.alpha);
  c.lambda = get_field<double>(p, "lambda", "params.", c.lambda);
  c.q = get_field<double>(p, "q", "params.", c.q);
  c.eps = get_field<double>(p, "eps", "params.", c.eps);

  const json s = section("scope");
  detail::reject_unknown(s, "scope.", {"kind", "rho0", "rho_inf", "sigma", "value", "slope", "a", "center"});
  if (s.contains("kind")) {
    try {
      c.scope.kind = scope_kind_from_string(get_field<std::string>(s, "kind", "scope.", ""));
    } catch (const DomainError& e) {
      throw ValidationError("scope.kind", e.what());
    }
  }
  c.scope.rho0 = get_field<double>(s, "rho0", "scope.", c.scope.rho0);
  c.scope.rho_inf = get_field<double>(s, "rho_inf", "scope.", c.scope.rho_inf);
  c.scope.sigma = get_field<double>(s, "sigma", "scope.", c.scope.sigma);
  c.scope.value = get_field<double>(s, "value", "scope.", c.scope.value);
  c.scope.slope = get_field<double>(s, "slope", "scope.", c.scope.slope);
  c.scope.a = get_field<double>(s, "a", "scope.", c.scope.a);
  if (s.contains("center")) c.scope.center = detail::point_from_json(s.at("center"), "scope.center");

  const json g = section("grid");
  detail::reject_unknown(g, "grid.", {"extent", "points"});
  c.extent = get_field<double>(g, "extent", "grid.", c.extent);
  c.points = get_field<int>(g, "points", "grid.", c.points);

  const json sv = section("solver");
  detail::reject_unknown(sv, "solver.", {"max_iters", "armijo_c1", "initial_step", "max_halvings", "grad_tol",
                                         "nehari_tol", "jitter", "seeds"});
  c.solver.max_iters = get_field<int>(sv, "max_iters", "solver.", c.solver.max_iters);
  c.solver.armijo_c1 = get_field<double>(sv, "armijo_c1", "solver.", c.solver.armijo_c1);
  c.solver.initial_step = get_field<double>(sv, "initial_step", "solver.", c.solver.initial_step);
  c.solver.max_halvings = get_field<int>(sv, "max_halvings", "solver.", c.solver.max_halvings);
  c.solver.grad_tol = get_field<double>(sv, "grad_tol", "solver.", c.solver.grad_tol);
  c.solver.nehari_tol = get_field<double>(sv, "nehari_tol", "solver.", c.solver.nehari_tol);
  c.solver.jitter = get_field<double>(sv, "jitter", "solver.", c.solver.jitter);
  if (sv.contains("seeds")) {
    const json& arr = sv.at("seeds");
    if (!arr.is_array()) throw ValidationError("solver.seeds", "must be an array");
    c.solver.seeds.clear();
    for (const auto& e : arr) {
      if (!e.is_object()) throw ValidationError("solver.seeds", "entries must be objects");
      detail::reject_unknown(e, "solver.seeds.", {"kind", "width", "shift"});
      SeedSpec spec;
      spec.kind = seed_kind_from_string(get_field<std::string>(e, "kind", "solver.seeds.", "gaussian"));
      spec.width = get_field<double>(e, "width", "solver.seeds.", spec.width);
      spec.shift = get_field<double>(e, "shift", "solver.seeds.", spec.shift);
      c.solver.seeds.push_back(spec);
    }
  }
  c.seed = get_field<std::uint64_t>(j, "seed", "", c.seed);

  const json sw = section("sweep");
  detail::reject_unknown(sw, "sweep.", {"eps"});
  c.eps_list = get_field<std::vector<double>>(sw, "eps", "sweep.", c.eps_list);
  const json ls = section("lambda_scan");
  detail::reject_unknown(ls, "lambda_scan.", {"lambdas"});
  c.lambdas = get_field<std::vector<double>>(ls, "lambdas", "lambda_scan.", c.lambdas);
  const json hc = section("concentration");
  detail::reject_unknown(hc, "concentration.", {"half_width", "coarse", "levels", "angular", "radial"});
  c.h_search.half_width = get_field<double>(hc, "half_width", "concentration.", c.h_search.half_width);
  c.h_search.coarse = get_field<int>(hc, "coarse", "concentration.", c.h_search.coarse);
  c.h_search.levels = get_field<int>(hc, "levels", "concentration.", c.h_search.levels);
  c.h_search.quad.angular = get_field<int>(hc, "angular", "concentration.", c.h_search.quad.angular);
  c.h_search.quad.radial = get_field<int>(hc, "radial", "concentration.", c.h_search.quad.radial);
  const json out = section("output");
  detail::reject_unknown(out, "output.", {"dir"});
  if (out.contains("dir")) c.out_dir = get_field<std::string>(out, "dir", "output.", "");
  validate(c);
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, column = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::ostringstream msg;
    msg << "config parse error at line " << line << ", column " << column << ": " << e.what();
    throw ConfigParseError(msg.str(), line, column);
  }
  return config_from_json(j);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config", "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

/// FNV-1a over the canonical JSON echo of the config.
inline std::string config_hash(const ExperimentConfig& c) {
  const std::string canon = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

/// --out beats the config, which beats the environment.
inline std::filesystem::path resolve_out_dir(const std::optional<std::string>& cli, const ExperimentConfig& c) {
  if (cli && !cli->empty()) return *cli;
  if (c.out_dir && !c.out_dir->empty()) return *c.out_dir;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return kDefaultOutDir;
}

// ---------------------------------------------------------------------------
// Report serialisation
// ---------------------------------------------------------------------------

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json grid_function_json(const GridFunction& u) {
  return {{"grid", {{"n", u.spec().n()}, {"extent", u.spec().extent()}, {"points", u.spec().points()}}},
          {"values", std::vector<double>(u.values().begin(), u.values().end())}};
}

inline json to_json(const SolveReport& r, int n) {
  json seeds = json::array();
  for (const auto& s : r.seeds)
    seeds.push_back({{"kind", to_string(s.kind)}, {"c_value", s.c_value}, {"grad_norm", s.grad_norm},
                     {"iters", s.iters}, {"converged", s.converged}, {"stop_reason", s.stop_reason}});
  return {{"c_value", r.c_value},
          {"grad_norm", r.grad_norm},
          {"iters", r.iters},
          {"maximizer", detail::point_to_json(r.maximizer, n)},
          {"mass", r.mass},
          {"positivity_violation", r.positivity_violation},
          {"nehari_residual", r.nehari_residual},
          {"converged", r.converged},
          {"best_seed", r.best_seed},
          {"noise", r.noise},
          {"clamp_events", r.clamp_events},
          {"seeds", seeds},
          {"u_star", grid_function_json(r.u_star)}};
}

inline json to_json(const SobolevEstimate& s) {
  return {{"S_est", s.S_est},
          {"S_extremal", s.S_extremal},
          {"S_minimized", s.S_minimized},
          {"method", s.method == SobolevMethod::minimized ? "minimized" : "extremal-eval"},
          {"iterations", s.iterations},
          {"theta", s.theta},
          {"minimizer", grid_function_json(s.minimizer)}};
}

inline json to_json(const ConcentrationField& f) {
  json pts = json::array();
  for (const auto& p : f.points) pts.push_back(detail::point_to_json(p, f.n));
  return {{"argmin", detail::point_to_json(f.argmin, f.n)},
          {"min_value", f.min_value},
          {"boundary_max", f.boundary_max},
          {"cell", f.cell},
          {"points", pts},
          {"H_values", f.values}};
}

inline json to_json(const SweepReport& r, int n) {
  json entries = json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"eps", e.eps},
                       {"c_value", e.c_value},
                       {"noise", e.noise},
                       {"grad_norm", e.grad_norm},
                       {"iters", e.iters},
                       {"y_eps", detail::point_to_json(e.y_eps, n)},
                       {"eps_y_eps", detail::point_to_json(e.eps_y_eps, n)},
                       {"mass", e.mass},
                       {"local_mass", e.local_mass},
                       {"nondegenerate", e.nondegenerate},
                       {"H_at_eps_y", e.H_at_eps_y},
                       {"recentring_gap", e.recentring_gap},
                       {"ratio", e.ratio.ratio},
                       {"prediction", e.ratio.prediction},
                       {"ratio_gap", e.ratio.gap},
                       {"ratio_truncated", e.ratio.truncated}});
  json j = {{"entries", entries},
            {"C", r.limit.c_value},
            {"C_noise", r.limit.noise},
            {"S_est", r.sobolev.S_est},
            {"bound", r.bound},
            {"R", r.R},
            {"beta", r.beta},
            {"all_below_C", r.all_below_C}};
  if (r.field) j["H_field"] = to_json(*r.field);
  if (!r.field_error.empty()) j["H_field_error"] = r.field_error;
  return j;
}

inline json to_json(const LambdaScan& s) {
  json rows = json::array();
  for (const auto& r : s.rows)
    rows.push_back({{"lambda", r.lambda}, {"c_value", r.c_value}, {"bound", r.bound}, {"satisfied", r.satisfied}});
  json j = {{"rows", rows}, {"monotone", s.monotone}, {"S_est", s.S_est}};
  j["lambda0"] = s.lambda0 ? json(*s.lambda0) : json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

class CsvTable {
 public:
  CsvTable(const std::string& hash, std::vector<std::string> columns) : columns_(std::move(columns)) {
    text_ << "# config_hash: " << hash << "\n";
    for (std::size_t i = 0; i < columns_.size(); ++i) text_ << (i ? "," : "") << columns_[i];
    text_ << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size()) throw std::logic_error("csv row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) text_ << (i ? "," : "") << cells[i];
    text_ << "\n";
  }
  std::string str() const { return text_.str(); }

 private:
  std::vector<std::string> columns_;
  std::ostringstream text_;
};

class PlotData {
 public:
  explicit PlotData(const std::string& hash) { text_ << "# config_hash: " << hash << "\n"; }
  void curve(const std::string& name, const std::vector<double>& x, const std::vector<double>& y) {
    if (curves_++) text_ << "\n\n";
    text_ << "# curve: " << name << "\n";
    for (std::size_t i = 0; i < x.size(); ++i) text_ << fmt17(x[i]) << " " << fmt17(y[i]) << "\n";
  }
  std::string str() const { return text_.str(); }

 private:
  int curves_ = 0;
  std::ostringstream text_;
};

struct RunOptions {
  std::optional<std::string> out_dir;
  unsigned threads = 1;
  bool verbose = false;
  std::ostream* log = &std::cerr;
};

struct RunResult {
  int status = 0;
  std::filesystem::path out_dir;
  std::vector<std::string> artifacts;
  std::vector<std::string> warnings;
};

namespace detail {

struct Artifacts {
  json result;
  std::string csv_name;
  std::string csv;
  std::string plot;
  std::vector<std::string> warnings;
};

// Values along the first axis through the given grid index.
inline std::pair<std::vector<double>, std::vector<double>> axis_slice(const GridFunction& u, std::size_t through) {
  const auto& g = u.spec();
  auto mi = g.multi_index(through);
  std::vector<double> xs, ys;
  for (int i = 0; i < g.points(); ++i) {
    mi[0] = i;
    xs.push_back(g.coordinate(i));
    ys.push_back(u[g.linear_index(mi)]);
  }
  return {xs, ys};
}

inline void seed_warnings(const SolveReport& r, const std::string& label, std::vector<std::string>& w) {
  for (const auto& s : r.seeds)
    if (!s.converged) w.push_back(label + "seed " + to_string(s.kind) + " did not converge: " + s.stop_reason);
}

inline Artifacts run_solve(const ExperimentConfig& c, const std::string& hash, bool limit) {
  const ProblemParams params = c.params();
  const GridSpec grid = c.grid();
  const SolveReport r = limit ? solve_limit_ground_state(params, grid, c.solver_config())
                              : solve_ground_state(params, c.scope.build(), grid, c.solver_config());
  Artifacts a;
  a.result = to_json(r, c.n);
  seed_warnings(r, "", a.warnings);
  std::vector<std::string> cols;
  for (int d = 0; d < c.n; ++d) cols.push_back(c.n == 1 ? "x" : "x" + std::to_string(d));
  cols.push_back("u");
  CsvTable csv(hash, cols);
  for (std::size_t i = 0; i < r.u_star.size(); ++i) {
    const Point x = grid.point(i);
    std::vector<std::string> cells;
    for (int d = 0; d < c.n; ++d) cells.push_back(fmt17(x[d]));
    cells.push_back(fmt17(r.u_star[i]));
    csv.row(cells);
  }
  a.csv_name = limit ? "limit.csv" : "solution.csv";
  a.csv = csv.str();
  PlotData plot(hash);
  const auto [xs, ys] = axis_slice(r.u_star, r.maximizer_index);
  plot.curve("u_star", xs, ys);
  std::vector<double> it(r.energy_trace.size());
  for (std::size_t k = 0; k < it.size(); ++k) it[k] = double(k);
  plot.curve("energy_trace", it, r.energy_trace);
  a.plot = plot.str();
  return a;
}

inline Artifacts run_sweep(const ExperimentConfig& c, const std::string& hash) {
  SweepOptions opt;
  opt.eps = c.eps_list;
  opt.h_search = c.h_search;
  const SweepReport r = run_eps_sweep(c.params(), c.scope.build(), c.grid(), c.solver_config(), opt);
  Artifacts a;
  a.result = to_json(r, c.n);
  if (!r.field_error.empty()) a.warnings.push_back("H decay check: " + r.field_error);
  if (!r.all_below_C) a.warnings.push_back("some C_rho_eps is not below C");
  CsvTable csv(hash, {"eps", "c_value", "y_eps", "eps_y_eps", "mass", "ratio", "prediction"});
  std::vector<double> eps, cv, gap, ey;
  for (const auto& e : r.entries) {
    csv.row({fmt17(e.eps), fmt17(e.c_value), fmt17(e.y_eps[0]), fmt17(e.eps_y_eps[0]), fmt17(e.mass),
             fmt17(e.ratio.ratio), fmt17(e.ratio.prediction)});
    eps.push_back(e.eps);
    cv.push_back(e.c_value);
    gap.push_back(std::abs(r.limit.c_value - e.c_value));
    ey.push_back(e.eps_y_eps[0]);
  }
  a.csv_name = "sweep.csv";
  a.csv = csv.str();
  PlotData plot(hash);
  plot.curve("c_value", eps, cv);
  plot.curve("gap_to_C", eps, gap);
  plot.curve("eps_y_eps", eps, ey);
  a.plot = plot.str();
  return a;
}

inline Artifacts run_concentration(const ExperimentConfig& c, const std::string& hash) {
  const ConcentrationField f = find_H_minimum(c.scope.build(), c.n, c.alpha, c.h_search);
  Artifacts a;
  a.result = to_json(f);
  std::vector<std::size_t> order(f.points.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return f.points[i] < f.points[j]; });
  std::vector<std::string> cols;
  for (int d = 0; d < c.n; ++d) cols.push_back(c.n == 1 ? "x" : "x" + std::to_string(d));
  cols.push_back("H");
  CsvTable csv(hash, cols);
  std::vector<double> xs, hs;
  for (std::size_t k : order) {
    std::vector<std::string> cells;
    for (int d = 0; d < c.n; ++d) cells.push_back(fmt17(f.points[k][d]));
    cells.push_back(fmt17(f.values[k]));
    csv.row(cells);
    bool on_axis = true;
    for (int d = 1; d < c.n; ++d) on_axis = on_axis && f.points[k][d] == 0.0;
    if (on_axis) {
      xs.push_back(f.points[k][0]);
      hs.push_back(f.values[k]);
    }
  }
  a.csv_name = "concentration.csv";
  a.csv = csv.str();
  PlotData plot(hash);
  plot.curve("H", xs, hs);
  a.plot = plot.str();
  return a;
}

inline Artifacts run_sobolev(const ExperimentConfig& c, const std::string& hash) {
  const SobolevEstimate s = estimate_sobolev_constant(c.params(), c.grid());
  Artifacts a;
  a.result = to_json(s);
  a.result["bound"] = critical_bound(c.params(), s.S_est);
  CsvTable csv(hash, {"method", "S"});
  csv.row({"extremal-eval", fmt17(s.S_extremal)});
  csv.row({"minimized", fmt17(s.S_minimized)});
  a.csv_name = "sobolev.csv";
  a.csv = csv.str();
  PlotData plot(hash);
  const auto [xs, ys] = axis_slice(s.minimizer, s.minimizer.argmax());
  plot.curve("minimizer", xs, ys);
  a.plot = plot.str();
  return a;
}

inline Artifacts run_lambda_scan(const ExperimentConfig& c, const std::string& hash) {
  const SobolevEstimate s = estimate_sobolev_constant(c.params(), c.grid());
  const LambdaScan scan = lambda_scan(c.params(), c.lambdas, c.scope.build(), c.grid(), c.solver_config(), s.S_est);
  Artifacts a;
  a.result = to_json(scan);
  if (!scan.monotone) a.warnings.push_back("c_value is not nonincreasing in lambda");
  CsvTable csv(hash, {"lambda", "c_value", "bound", "satisfied"});
  std::vector<double> ls, cs, bs;
  for (const auto& r : scan.rows) {
    csv.row({fmt17(r.lambda), fmt17(r.c_value), fmt17(r.bound), r.satisfied ? "true" : "false"});
    ls.push_back(r.lambda);
    cs.push_back(r.c_value);
    bs.push_back(r.bound);
  }
  a.csv_name = "lambda.csv";
  a.csv = csv.str();
  PlotData plot(hash);
  plot.curve("c_value", ls, cs);
  plot.curve("bound", ls, bs);
  a.plot = plot.str();
  return a;
}

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ConfigParseError*>(&e)) return 2;
  if (dynamic_cast<const ConvergenceError*>(&e)) return 3;
  if (dynamic_cast<const DomainError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return 4;
  return 1;
}

inline std::string error_type(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e)) return "validation";
  if (dynamic_cast<const ConfigParseError*>(&e)) return "parse";
  if (dynamic_cast<const ConvergenceError*>(&e)) return "convergence";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  return "runtime";
}

}  // namespace detail

/// Writes a machine-readable error file; used for failures before a config exists.
inline void write_error(const std::filesystem::path& dir, const std::exception& e, const std::string& hash = "") {
  std::filesystem::create_directories(dir);
  json err = {{"schema_version", kSchemaVersion}, {"error_type", detail::error_type(e)}, {"message", e.what()}};
  if (!hash.empty()) err["config_hash"] = hash;
  if (const auto* v = dynamic_cast<const ValidationError*>(&e)) err["field"] = v->field();
  if (const auto* p = dynamic_cast<const ConfigParseError*>(&e)) {
    err["line"] = p->line();
    err["column"] = p->column();
  }
  atomic_write(dir / "error.json", err.dump(2) + "\n");
}

inline RunResult run_experiment(const ExperimentConfig& c, const RunOptions& opt = {}) {
  RunResult res;
  res.out_dir = resolve_out_dir(opt.out_dir, c);
  const std::string hash = config_hash(c);
  const auto t0 = std::chrono::steady_clock::now();
  set_num_threads(opt.threads);
  auto log = [&](const std::string& m) {
    if (opt.verbose && opt.log) *opt.log << "[regional] " << m << "\n";
  };
  std::filesystem::create_directories(res.out_dir);
  json manifest = {{"config_hash", hash}, {"schema_version", kSchemaVersion}, {"tool_version", kToolVersion},
                   {"experiment", c.experiment}, {"threads", opt.threads}};
  try {
    validate(c);
    log("experiment " + c.experiment + ", config " + hash + ", out " + res.out_dir.string());
    detail::Artifacts a;
    if (c.experiment == "solve") a = detail::run_solve(c, hash, false);
    else if (c.experiment == "limit") a = detail::run_solve(c, hash, true);
    else if (c.experiment == "sweep") a = detail::run_sweep(c, hash);
    else if (c.experiment == "concentration") a = detail::run_concentration(c, hash);
    else if (c.experiment == "sobolev") a = detail::run_sobolev(c, hash);
    else a = detail::run_lambda_scan(c, hash);
    json report = {{"config_hash", hash}, {"schema_version", kSchemaVersion}, {"experiment", c.experiment},
                   {"config", to_json(c)}, {"result", a.result}};
    atomic_write(res.out_dir / "report.json", report.dump(2) + "\n");
    atomic_write(res.out_dir / a.csv_name, a.csv);
    atomic_write(res.out_dir / "plot.dat", a.plot);
    res.artifacts = {"report.json", a.csv_name, "plot.dat"};
    res.warnings = a.warnings;
    for (const auto& w : a.warnings) log("warning: " + w);
    manifest["status"] = "ok";
    manifest["partial"] = false;
  } catch (const std::exception& e) {
    res.status = detail::exit_code_for(e);
    log(std::string("error: ") + e.what());
    write_error(res.out_dir, e, hash);
    res.artifacts.push_back("error.json");
    manifest["status"] = "failed";
    manifest["partial"] = true;
    manifest["error"] = e.what();
    if (std::string(e.what()).find("clamp") != std::string::npos) res.warnings.push_back(e.what());
  }
  manifest["artifacts"] = res.artifacts;
  manifest["warnings"] = res.warnings;
  manifest["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  atomic_write(res.out_dir / "manifest.json", manifest.dump(2) + "\n");
  log("done, status " + std::to_string(res.status));
  return res;
}

}  // namespace regional

#endif  // REGIONAL_EXPERIMENT_HPP

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdds/blackbox.hpp"
#include "sdds/diagnostics.hpp"
#include "sdds/engine.hpp"
#include "sdds/errors.hpp"
#include "sdds/parallel.hpp"
#include "sdds/poll_geometry.hpp"
#include "sdds/renewal.hpp"
#include "sdds/trace_io.hpp"

namespace sdds {

using json = nlohmann::json;

inline constexpr const char* kOutputDirEnv = "SDDS_OUTPUT_DIR";
inline constexpr const char* kDefaultOutputDir = "sdds_out";

// Renewal-process grid. Axis lists are combined as a cartesian product in the
// order q, lambda, delta_eps, phi0, eta; each cell starts at delta0 = delta_eps
// with delta_max = delta0 e^(lambda j_max). Explicit cells are appended after.
struct RRGrid {
  std::vector<double> q, lambda, delta_eps, phi0, eta;
  int j_max = 1;
  std::vector<RRParams> cells;
  double h_exponent = 2.0;
  double decrement_noise = 0.0;
  std::int64_t horizon = 10'000'000;
  std::size_t n_reps = 10'000;
  std::uint64_t seed = 1;
};

struct VerifySettings {
  std::size_t drift_reps = 200;
  std::size_t estimator_constructions = 200;
  std::size_t decrease_steps = 2000;
  std::vector<double> eps_prime = {0.1, 0.3, 0.6, 0.9};
  std::uint64_t seed = 7;
};

struct ExperimentConfig {
  ProblemSpec problem;
  std::vector<double> x0;  // empty: all ones
  SddsConfig sdds;
  StoppingRule stop;
  bool grad_tol_given = false;
  std::size_t replications = 1;
  std::uint64_t seed_base = 1;
  std::vector<double> epsilons;
  std::string output_dir;  // empty: environment or default
  std::vector<std::string> checks;
  RRGrid rrsim;
  VerifySettings verify;
  json source;  // the merged document, for the record

  std::uint64_t seed_for(std::size_t rep) const { return seed_base + rep; }
};

namespace detail {

inline std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

// Typed, strict access to one JSON object; unknown keys are rejected.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(field(key), "expected a number");
    out = v.get<double>();
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (v.is_number_unsigned()) {
      out = static_cast<Int>(v.get<std::uint64_t>());
    } else if (v.is_number_integer()) {
      const auto i = v.get<std::int64_t>();
      if (i < 0 && !std::is_signed_v<Int>) throw ConfigError(field(key), "expected a non-negative integer");
      out = static_cast<Int>(i);
    } else if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d != std::floor(d) || std::abs(d) > 9e18) throw ConfigError(field(key), "expected an integer");
      if (d < 0 && !std::is_signed_v<Int>) throw ConfigError(field(key), "expected a non-negative integer");
      out = static_cast<Int>(d);
    } else {
      throw ConfigError(field(key), "expected an integer");
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    if (!j_.at(key).is_boolean()) throw ConfigError(field(key), "expected true or false");
    out = j_.at(key).get<bool>();
  }

  void string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    if (!j_.at(key).is_string()) throw ConfigError(field(key), "expected a string");
    out = j_.at(key).get<std::string>();
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (v.is_number()) {
      out = {v.get<double>()};
      return;
    }
    if (!v.is_array()) throw ConfigError(field(key), "expected a list of numbers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(field(key), "expected a list of numbers");
      out.push_back(e.get<double>());
    }
  }

  void strings(const std::string& key, std::vector<std::string>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (v.is_string()) {
      out = {v.get<std::string>()};
      return;
    }
    if (!v.is_array()) throw ConfigError(field(key), "expected a list of strings");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_string()) throw ConfigError(field(key), "expected a list of strings");
      out.push_back(e.get<std::string>());
    }
  }

  std::optional<ObjectReader> object(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return ObjectReader(j_.at(key), field(key));
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError(field(key), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
auto wrap_field(const std::string& field, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(field, e.what());
  }
}

inline NoiseModel read_noise(ObjectReader& r) {
  std::string kind = "zero";
  double parameter = 0.0;
  r.string("kind", kind);
  r.number("parameter", parameter);
  r.finish();
  const std::string f = r.field("kind");
  return wrap_field(f, [&] {
    if (kind == "zero") return NoiseModel::zero();
    if (kind == "gaussian") return NoiseModel::gaussian(parameter);
    if (kind == "uniform") return NoiseModel::uniform(parameter);
    throw ConfigError(f, "unknown noise kind '" + kind + "' (zero, gaussian, uniform)");
  });
}

inline void read_problem(ObjectReader& r, ProblemSpec& p) {
  r.string("name", p.name);
  r.integer("dimension", p.dimension);
  r.number("condition_number", p.condition_number);
  if (auto n = r.object("noise")) p.noise = read_noise(*n);
  if (r.has("box")) {
    std::vector<double> box;
    r.numbers("box", box);
    if (box.size() != 2) throw ConfigError(r.field("box"), "expected [lower, upper]");
    p.box_lower = box[0];
    p.box_upper = box[1];
  }
  r.number("variance_bound", p.variance_bound);
  r.finish();
}

inline void read_sdds(ObjectReader& r, SddsConfig& c) {
  r.number("delta0", c.delta0);
  r.number("eps_f", c.eps_f);
  r.number("gamma", c.gamma);
  r.number("c", c.c);
  r.number("p", c.p);
  r.number("tau", c.tau);
  r.integer("j_max", c.j_max);
  r.number("beta", c.beta);
  r.number("nu", c.nu);
  std::string s;
  if (r.has("poll_scheme")) {
    r.string("poll_scheme", s);
    c.poll_scheme = wrap_field(r.field("poll_scheme"), [&] { return parse_poll_scheme(s); });
  }
  if (r.has("poll_mode")) {
    r.string("poll_mode", s);
    c.poll_mode = wrap_field(r.field("poll_mode"), [&] { return parse_poll_mode(s); });
  }
  r.boolean("randomize_poll_order", c.randomize_poll_order);
  r.integer("max_iterations", c.max_iterations);
  r.integer("sample_cap", c.sample_cap);
  if (r.has("seed")) throw ConfigError(r.field("seed"), "set seed_base at the top level instead");
  r.finish();
}

inline RRParams read_rr_cell(ObjectReader& r, const RRGrid& g) {
  RRParams p;
  p.h_exponent = g.h_exponent;
  p.decrement_noise = g.decrement_noise;
  p.horizon = g.horizon;
  r.number("q", p.q);
  r.number("lambda", p.lambda);
  bool has_delta0 = r.has("delta0");
  r.number("delta0", p.delta0);
  r.number("delta_eps", p.delta_eps);
  if (!has_delta0) p.delta0 = p.delta_eps;
  if (r.has("delta_max")) {
    r.number("delta_max", p.delta_max);
  } else {
    p.delta_max = p.delta0 * std::exp(p.lambda * g.j_max);
  }
  r.number("phi0", p.phi0);
  r.number("eta", p.eta);
  r.number("h_exponent", p.h_exponent);
  r.finish();
  return p;
}

inline void read_rrsim(ObjectReader& r, RRGrid& g) {
  r.number("h_exponent", g.h_exponent);
  r.number("decrement_noise", g.decrement_noise);
  r.integer("horizon", g.horizon);
  r.integer("n_reps", g.n_reps);
  r.integer("seed", g.seed);
  r.integer("j_max", g.j_max);
  if (auto grid = r.object("grid")) {
    grid->numbers("q", g.q);
    grid->numbers("lambda", g.lambda);
    grid->numbers("delta_eps", g.delta_eps);
    grid->numbers("phi0", g.phi0);
    grid->numbers("eta", g.eta);
    grid->finish();
  }
  if (r.has("cells")) {
    const json& cells = r.raw("cells");
    if (!cells.is_array()) throw ConfigError(r.field("cells"), "expected a list of objects");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      ObjectReader c(cells[i], r.field("cells") + "[" + std::to_string(i) + "]");
      g.cells.push_back(read_rr_cell(c, g));
    }
  }
  r.finish();
}

inline void read_verify(ObjectReader& r, VerifySettings& v) {
  r.integer("drift_reps", v.drift_reps);
  r.integer("estimator_constructions", v.estimator_constructions);
  r.integer("decrease_steps", v.decrease_steps);
  r.numbers("eps_prime", v.eps_prime);
  r.integer("seed", v.seed);
  r.finish();
}

}  // namespace detail

// Parses JSON text (comments allowed). Errors carry the offending field, or
// the line number for syntax errors.
inline json parse_config_text(const std::string& text) {
  try {
    return json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("line " + std::to_string(detail::line_of(text, e.byte)), e.what());
  }
}

inline json load_config_json(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError(path.string(), "cannot read config file");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

// key=value with a dotted key; the value is read as JSON when it parses,
// otherwise as a bare string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must have the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "empty path component in override");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError(key, "override descends into a non-object value");
      *node = json::object();
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

inline ExperimentConfig parse_experiment(const json& doc) {
  ExperimentConfig cfg;
  cfg.source = doc;
  detail::ObjectReader r(doc, "");
  if (auto p = r.object("problem")) detail::read_problem(*p, cfg.problem);
  r.numbers("x0", cfg.x0);
  if (auto s = r.object("sdds")) detail::read_sdds(*s, cfg.sdds);
  if (auto s = r.object("stop")) {
    if (s->has("grad_tol")) {
      double g = 0.0;
      s->number("grad_tol", g);
      cfg.stop.grad_tol = g;
      cfg.grad_tol_given = true;
    }
    s->number("delta_floor", cfg.stop.delta_floor);
    s->finish();
  }
  r.integer("replications", cfg.replications);
  r.integer("seed_base", cfg.seed_base);
  r.numbers("epsilons", cfg.epsilons);
  r.string("output_dir", cfg.output_dir);
  r.strings("checks", cfg.checks);
  if (auto s = r.object("rrsim")) detail::read_rrsim(*s, cfg.rrsim);
  if (auto s = r.object("verify")) detail::read_verify(*s, cfg.verify);
  r.finish();

  if (cfg.replications < 1) throw ConfigError("replications", "must be >= 1");
  if (cfg.seed_base > std::numeric_limits<std::uint64_t>::max() - cfg.replications)
    throw ConfigError("seed_base", "seed_base + replication index overflows");
  for (double e : cfg.epsilons)
    if (!(e > 0.0 && e < 1.0)) throw ConfigError("epsilons", "every epsilon must lie in (0, 1)");
  if (!cfg.x0.empty() && static_cast<int>(cfg.x0.size()) != cfg.problem.dimension)
    throw ConfigError("x0", "length does not match problem.dimension");
  if (!cfg.grad_tol_given && !cfg.epsilons.empty())
    cfg.stop.grad_tol = *std::min_element(cfg.epsilons.begin(), cfg.epsilons.end());
  return cfg;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides = {}) {
  json doc = load_config_json(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_experiment(doc);
}

inline std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return kDefaultOutputDir;
}

inline Vector starting_point(const ExperimentConfig& cfg) {
  if (cfg.x0.empty()) return Vector::Ones(cfg.problem.dimension);
  return Eigen::Map<const Vector>(cfg.x0.data(), static_cast<Eigen::Index>(cfg.x0.size()));
}

// ---------------------------------------------------------------------------
// Checks

struct CheckResult {
  std::string name;
  bool pass = false;
  json detail;
};

inline json to_json(const CheckResult& c) { return {{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}}; }

inline bool all_pass(const std::vector<CheckResult>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

inline const std::vector<std::string>& run_check_names() {
  static const std::vector<std::string> names = {"trace_rules", "complexity_bound", "slope", "cap_fraction",
                                                 "saturation"};
  return names;
}

inline const std::vector<std::string>& verify_check_names() {
  static const std::vector<std::string> names = {"config",    "spanning",  "phi_dominance", "trace_rules",
                                                 "estimator", "decrease",  "forced_success", "drift"};
  return names;
}

inline constexpr double kCapFractionLimit = 0.05;
inline constexpr double kSaturationLimit = 0.01;
inline constexpr double kSlopeSlack = 0.5;

// ---------------------------------------------------------------------------
// run / sweep

struct RunSummary {
  std::filesystem::path output_dir;
  std::vector<std::filesystem::path> trace_files;
  std::vector<StoppingTimeRow> rows;
  double phi0 = 0.0;
  TheoryConstants constants;
  std::int64_t total_evals = 0;
  std::int64_t total_iterations = 0;
  std::int64_t cap_hits = 0;
  std::optional<double> slope;
  std::vector<CheckResult> checks;
  json document;

  bool ok() const { return all_pass(checks); }
};

inline std::string trace_stem(std::size_t rep) {
  std::string s = std::to_string(rep);
  return "trace_rep" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

inline std::vector<CheckResult> run_checks(const ExperimentConfig& cfg, const std::vector<RunTrace>& traces,
                                           const RunSummary& s) {
  std::vector<CheckResult> out;
  for (const auto& name : cfg.checks) {
    CheckResult c{name, false, json::object()};
    if (name == "trace_rules") {
      c.pass = true;
      json per = json::array();
      for (const auto& t : traces) {
        const TraceRuleReport r = check_trace_rules(t);
        c.pass = c.pass && r.ok();
        per.push_back({{"failures", r.failures},
                       {"failure_decrement_violations", r.failure_decrement_violations},
                       {"max_failure_rel_error", r.max_failure_rel_error},
                       {"step_rule_violations", r.step_rule_violations},
                       {"grid_violations", r.grid_violations},
                       {"cap_violations", r.cap_violations},
                       {"fixed_iterate_violations", r.fixed_iterate_violations}});
      }
      c.detail["replications"] = per;
    } else if (name == "complexity_bound") {
      c.pass = !s.rows.empty();
      for (const auto& row : s.rows) {
        const bool ok = row.reached == row.replications && row.mean <= row.bound;
        c.pass = c.pass && ok;
        c.detail["rows"].push_back({{"eps", row.eps}, {"mean", row.mean}, {"bound", row.bound}, {"pass", ok}});
      }
    } else if (name == "slope") {
      const double limit = cfg.sdds.p / std::min(cfg.sdds.p - 1.0, 1.0) + kSlopeSlack;
      c.detail["limit"] = limit;
      c.detail["slope"] = s.slope ? json(*s.slope) : json();
      c.pass = s.slope && *s.slope <= limit;
    } else if (name == "cap_fraction") {
      const double frac = s.total_iterations ? static_cast<double>(s.cap_hits) / s.total_iterations : 0.0;
      c.detail = {{"cap_hits", s.cap_hits}, {"iterations", s.total_iterations}, {"fraction", frac},
                  {"limit", kCapFractionLimit}};
      c.pass = frac < kCapFractionLimit;
    } else if (name == "saturation") {
      c.pass = !traces.empty();
      for (const auto& t : traces) {
        const double sat = delta_power_sum(t, cfg.sdds.p).saturation;
        c.pass = c.pass && sat < kSaturationLimit;
        c.detail["saturation"].push_back(sat);
      }
      c.detail["limit"] = kSaturationLimit;
    } else {
      throw ConfigError("checks", "unknown check '" + name + "' for run");
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline RunSummary cmd_run(const ExperimentConfig& cfg, unsigned jobs = 1) {
  for (const auto& name : cfg.checks)
    if (std::find(run_check_names().begin(), run_check_names().end(), name) == run_check_names().end())
      throw ConfigError("checks", "unknown check '" + name + "' for run");
  require_valid(cfg.sdds);
  const StochasticProblem problem = make_problem(cfg.problem);
  const Vector x0 = starting_point(cfg);
  const int n = problem.dimension();

  RunSummary s;
  s.output_dir = resolve_output_dir(cfg);
  std::vector<RunTrace> traces(cfg.replications);
  parallel_for(cfg.replications, jobs, [&](std::size_t rep) {
    SddsConfig c = cfg.sdds;
    c.seed = cfg.seed_for(rep);
    traces[rep] = run(problem, x0, c, cfg.stop);
    const std::string stem = trace_stem(rep);
    write_file_atomic(s.output_dir / (stem + ".csv"), trace_to_csv(traces[rep], n));
    write_file_atomic(s.output_dir / (stem + ".json"), trace_sidecar(traces[rep], n).dump(2) + "\n");
  });

  s.phi0 = phi(problem.true_value(x0), problem.lower_bound(), cfg.sdds.delta0, cfg.sdds);
  s.constants = make_theory_constants(cfg.sdds, problem);
  s.rows = summarize_stopping_times(traces, cfg.epsilons, s.constants, s.phi0);
  std::vector<double> eps, mean;
  for (const auto& row : s.rows)
    if (row.reached == row.replications && row.reached > 0 && row.mean > 0.0) {
      eps.push_back(row.eps);
      mean.push_back(row.mean);
    }
  if (eps.size() >= 2) s.slope = loglog_slope(eps, mean);

  json reps = json::array();
  for (std::size_t rep = 0; rep < traces.size(); ++rep) {
    const auto& t = traces[rep];
    s.trace_files.push_back(s.output_dir / (trace_stem(rep) + ".csv"));
    s.total_evals += t.total_blackbox_evals;
    s.total_iterations += static_cast<std::int64_t>(t.records.size());
    s.cap_hits += t.cap_hits;
    json st = json::object();
    for (double e : cfg.epsilons) {
      const auto T = stopping_time(t, e);
      st[format_real(e)] = T ? json(*T) : json("not-reached");
    }
    reps.push_back({{"replication", rep},
                    {"seed", cfg.seed_for(rep)},
                    {"trace", trace_stem(rep) + ".csv"},
                    {"iterations", t.records.size()},
                    {"termination", to_string(t.termination)},
                    {"total_blackbox_evals", t.total_blackbox_evals},
                    {"cap_hits", t.cap_hits},
                    {"stopping_times", st}});
  }
  s.checks = run_checks(cfg, traces, s);

  json rows = json::array();
  for (const auto& row : s.rows) {
    rows.push_back({{"eps", row.eps},
                    {"replications", row.replications},
                    {"reached", row.reached},
                    {"status", row.reached == 0 ? "not-reached"
                                                : (row.reached < row.replications ? "partial" : "reached")},
                    {"mean_T", row.reached ? json(row.mean) : json()},
                    {"median_T", row.reached ? json(row.median) : json()},
                    {"stderr_T", row.reached ? json(row.stats.stderr_) : json()},
                    {"bound", row.bound}});
  }
  const auto& k = s.constants;
  json doc;
  doc["problem"] = {{"name", problem.name()},
                    {"dimension", n},
                    {"noise", problem.noise().name()},
                    {"noise_parameter", problem.noise().parameter},
                    {"variance_bound", problem.variance_bound()},
                    {"lipschitz_grad", problem.lipschitz_grad()},
                    {"f_min", problem.lower_bound()}};
  doc["config"] = config_to_json(cfg.sdds);
  doc["config"].erase("seed");
  doc["seed_base"] = cfg.seed_base;
  doc["replications"] = cfg.replications;
  doc["phi0"] = s.phi0;
  doc["theory"] = {{"kappa_min", k.kappa_min}, {"d_min", k.d_min}, {"d_max", k.d_max}, {"L", k.L},
                   {"p_hat", k.p_hat},         {"L1", k.L1},       {"L2", k.L2},       {"zeta", k.zeta},
                   {"eta", k.eta}};
  doc["stopping_times"] = rows;
  doc["loglog_slope"] = s.slope ? json(*s.slope) : json();
  doc["total_blackbox_evals"] = s.total_evals;
  doc["total_iterations"] = s.total_iterations;
  doc["cap_hits"] = s.cap_hits;
  doc["runs"] = reps;
  doc["checks"] = json::array();
  for (const auto& c : s.checks) doc["checks"].push_back(to_json(c));
  doc["ok"] = s.ok();
  write_file_atomic(s.output_dir / "summary.json", doc.dump(2) + "\n");
  s.document = std::move(doc);
  return s;
}

// ---------------------------------------------------------------------------
// rrsim

inline const std::vector<std::string>& rrsim_columns() {
  static const std::vector<std::string> cols = {"q",  "lambda", "delta_eps", "phi0",  "eta",
                                                "p",  "mean_T", "stderr",    "bound", "margin"};
  return cols;
}

inline std::vector<RRParams> expand_grid(const RRGrid& g) {
  std::vector<RRParams> cells;
  for (double q : g.q)
    for (double lambda : g.lambda)
      for (double de : g.delta_eps)
        for (double phi0 : g.phi0)
          for (double eta : g.eta) {
            RRParams p;
            p.q = q;
            p.lambda = lambda;
            p.delta0 = de;
            p.delta_eps = de;
            p.delta_max = de * std::exp(lambda * g.j_max);
            p.phi0 = phi0;
            p.eta = eta;
            p.h_exponent = g.h_exponent;
            p.decrement_noise = g.decrement_noise;
            p.horizon = g.horizon;
            cells.push_back(p);
          }
  cells.insert(cells.end(), g.cells.begin(), g.cells.end());
  return cells;
}

struct RRSimResult {
  std::filesystem::path csv_path;
  std::vector<RRSummary> cells;
  std::vector<CheckResult> checks;

  bool ok() const { return all_pass(checks); }
};

inline std::string rrsim_to_csv(const std::vector<RRSummary>& cells) {
  std::ostringstream os;
  const auto& cols = rrsim_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\r\n";
  for (const auto& c : cells) {
    const auto& r = c.params;
    os << format_real(r.q) << ',' << format_real(r.lambda) << ',' << format_real(r.delta_eps) << ','
       << format_real(r.phi0) << ',' << format_real(r.eta) << ',' << format_real(r.h_exponent) << ','
       << format_real(c.mean_T) << ',' << format_real(c.stderr_T) << ',' << format_real(c.bound) << ','
       << format_real(c.margin) << "\r\n";
  }
  return os.str();
}

// T of the deterministic q = 1 process started at delta_eps.
inline double rr_closed_form(const RRParams& r) { return std::ceil(r.phi0 / (r.eta * r.h(r.delta_eps))); }

inline RRSimResult cmd_rrsim(const ExperimentConfig& cfg, unsigned jobs = 1) {
  for (const auto& name : cfg.checks)
    if (name != "rrsim_bound") throw ConfigError("checks", "unknown check '" + name + "' for rrsim");
  const auto cells = expand_grid(cfg.rrsim);
  for (std::size_t i = 0; i < cells.size(); ++i)
    detail::wrap_field("rrsim cell " + std::to_string(i), [&] { validate(cells[i]); });
  RRSimResult out;
  const RandomStream base(cfg.rrsim.seed);
  for (std::size_t i = 0; i < cells.size(); ++i)
    out.cells.push_back(monte_carlo(cells[i], cfg.rrsim.n_reps, base.child(i), jobs));
  out.csv_path = resolve_output_dir(cfg) / "rrsim.csv";
  write_file_atomic(out.csv_path, rrsim_to_csv(out.cells));

  if (!cfg.checks.empty()) {
    CheckResult c{"rrsim_bound", true, json::object()};
    for (const auto& s : out.cells) {
      bool ok = s.margin >= -3.0 * s.stderr_T && s.horizon_exceeded == 0;
      const bool degenerate = s.params.q >= 1.0 && s.params.delta0 == s.params.delta_eps;
      if (degenerate) ok = ok && s.mean_T == rr_closed_form(s.params);
      c.pass = c.pass && ok;
      c.detail["cells"].push_back({{"q", s.params.q},
                                   {"delta_eps", s.params.delta_eps},
                                   {"phi0", s.params.phi0},
                                   {"mean_T", s.mean_T},
                                   {"stderr", s.stderr_T},
                                   {"bound", s.bound},
                                   {"horizon_exceeded", s.horizon_exceeded},
                                   {"closed_form", degenerate ? json(rr_closed_form(s.params)) : json()},
                                   {"pass", ok}});
    }
    out.checks.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// kappa

inline std::vector<Vector> read_direction_matrix(const std::string& text) {
  std::vector<Vector> dirs;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      double v = 0.0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw ConfigError("line " + std::to_string(lineno), "not a number: '" + tok + "'");
      row.push_back(v);
    }
    if (row.empty()) continue;
    if (!dirs.empty() && static_cast<std::size_t>(dirs.front().size()) != row.size())
      throw ConfigError("line " + std::to_string(lineno), "row length differs from the first row");
    dirs.push_back(Eigen::Map<const Vector>(row.data(), static_cast<Eigen::Index>(row.size())));
  }
  if (dirs.empty()) throw ConfigError("matrix", "no directions found");
  return dirs;
}

inline json cmd_kappa(const std::vector<Vector>& dirs, double tol = kDefaultKappaTol) {
  const CosineInterval k = cosine_measure(dirs, tol);
  std::vector<double> w(k.witness.data(), k.witness.data() + k.witness.size());
  return {{"lower", k.lower},
          {"upper", k.upper},
          {"width", k.width()},
          {"tol", tol},
          {"positive_spanning", k.positive_spanning},
          {"dimension", dirs.front().size()},
          {"directions", dirs.size()},
          {"witness", w}};
}

inline json cmd_kappa(const std::filesystem::path& path, double tol = kDefaultKappaTol) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError(path.string(), "cannot read matrix file");
  std::ostringstream ss;
  ss << is.rdbuf();
  return cmd_kappa(read_direction_matrix(ss.str()), tol);
}

// ---------------------------------------------------------------------------
// validate

inline json validation_to_json(const SddsConfig& c, const ConfigValidation& v) {
  json viol = json::array();
  for (const auto& x : v.violations)
    viol.push_back({{"condition", x.condition}, {"slack", x.slack}, {"message", x.message}});
  return {{"ok", v.ok},
          {"violations", viol},
          {"tau_upper", v.tau_upper},
          {"nu_ratio_required", v.nu_ratio_required},
          {"beta_ratio_required", v.beta_ratio_required},
          {"delta_max", c.delta_max()}};
}

inline json cmd_validate(const ExperimentConfig& cfg) { return validation_to_json(cfg.sdds, validate_config(cfg.sdds)); }

// ---------------------------------------------------------------------------
// verify

// States for the single-step checks: x0 scaled towards the minimizer crossed
// with the first three step sizes delta0 tau^m.
inline std::vector<DriftState> verify_state_grid(const ExperimentConfig& cfg) {
  const Vector x0 = starting_point(cfg);
  std::vector<DriftState> states;
  for (double scale : {1.0, 0.5, 0.1})
    for (int m = 0; m < 3; ++m) states.push_back({x0 * scale, cfg.sdds.delta0 * std::pow(cfg.sdds.tau, m)});
  return states;
}

inline CheckResult verify_config(const ExperimentConfig& cfg) {
  const ConfigValidation v = validate_config(cfg.sdds);
  return {"config", v.ok, validation_to_json(cfg.sdds, v)};
}

inline CheckResult verify_spanning(const ExperimentConfig& cfg, const StochasticProblem& problem) {
  const DirectionSet family = reference_poll_family(cfg.sdds, problem.dimension());
  const SpanningReport r = validate_spanning(family, 0.99 * family.kappa, family.d_min, family.d_max);
  return {"spanning", r.ok,
          {{"kappa_lower", r.kappa.lower}, {"kappa_upper", r.kappa.upper}, {"kappa_min", 0.99 * family.kappa},
           {"failures", r.failures}}};
}

inline CheckResult verify_phi_dominance(const ExperimentConfig& cfg) {
  const auto& c = cfg.sdds;
  const double eta = 0.5 * c.beta * (1.0 - c.nu) * (1.0 - std::pow(c.tau, c.p));
  return {"phi_dominance", eta > 0.0 && success_dominates_failure(c),
          {{"eta", eta},
           {"success_coefficient", -0.5 * c.nu * (c.gamma - 2.0)},
           {"failure_coefficient", -(1.0 - c.nu) * (1.0 - std::pow(c.tau, c.p))}}};
}

inline CheckResult verify_trace_rules(const ExperimentConfig& cfg, const StochasticProblem& problem) {
  SddsConfig c = cfg.sdds;
  c.seed = cfg.seed_for(0);
  const RunTrace t = run(problem, starting_point(cfg), c, cfg.stop);
  const TraceRuleReport r = check_trace_rules(t);
  return {"trace_rules", r.ok(),
          {{"iterations", t.records.size()},
           {"failures", r.failures},
           {"max_failure_rel_error", r.max_failure_rel_error},
           {"failure_decrement_violations", r.failure_decrement_violations},
           {"step_rule_violations", r.step_rule_violations},
           {"grid_violations", r.grid_violations},
           {"cap_violations", r.cap_violations},
           {"fixed_iterate_violations", r.fixed_iterate_violations}}};
}

inline CheckResult verify_estimator(const ExperimentConfig& cfg, const StochasticProblem& problem) {
  CheckResult c{"estimator", true, json::object()};
  const RandomStream base(cfg.verify.seed);
  const auto states = verify_state_grid(cfg);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& st = states[i];
    EstimateProbe probe{st.x, st.x + st.delta * Vector::Unit(problem.dimension(), 0), st.delta};
    if (!problem.in_domain(probe.x_plus_s)) continue;
    const EstimatorReport r = estimator_check(problem, cfg.sdds.estimate_settings(), probe,
                                              cfg.verify.estimator_constructions, base.child({1, i}));
    c.pass = c.pass && r.pass();
    c.detail["probes"].push_back({{"delta", r.delta},
                                  {"n_samples", r.n_samples},
                                  {"joint_accuracy", r.joint_accuracy.mean},
                                  {"sq_err_f0", r.sq_err_f0.mean},
                                  {"variance_target", r.variance_target},
                                  {"bad_err_f0", r.bad_err_f0.mean},
                                  {"bad_target", r.bad_target},
                                  {"pass", r.pass()}});
  }
  return c;
}

inline CheckResult verify_decrease(const ExperimentConfig& cfg, const StochasticProblem& problem) {
  DecreaseImplicationReport rep;
  const RandomStream base(cfg.verify.seed);
  const auto states = verify_state_grid(cfg);
  for (std::size_t i = 0; i < cfg.verify.decrease_steps; ++i) {
    const auto& st = states[i % states.size()];
    const StepResult r = step(State{st.x, st.delta, 0}, problem, cfg.sdds, base.child({2, i}));
    accumulate_decrease_implications(problem, cfg.sdds, r, rep);
  }
  return {"decrease", rep.ok(),
          {{"steps", rep.steps},
           {"pairs", rep.pairs},
           {"joint_good", rep.joint_good},
           {"good_success", rep.good_success},
           {"good_failure", rep.good_failure},
           {"success_violations", rep.success_violations},
           {"failure_violations", rep.failure_violations}}};
}

// Noiseless states below delta_eps' away from the small-gradient region.
inline CheckResult verify_forced_success(const ExperimentConfig& cfg, const StochasticProblem& problem) {
  const StochasticProblem exact = problem.with_noise(NoiseModel::zero());
  const TheoryConstants t = make_theory_constants(cfg.sdds, exact);
  const Vector x0 = starting_point(cfg);
  const Vector dir = x0.norm() > 0.0 ? Vector(x0.normalized()) : Vector(Vector::Unit(exact.dimension(), 0));
  CheckResult c{"forced_success", true, json::object()};
  for (double eps_prime : cfg.verify.eps_prime) {
    std::vector<DriftState> states;
    const double de = t.delta_eps_prime(eps_prime);
    for (double scale : {1.01, 1.5, 3.0, 10.0})
      for (int m = 0; m < 5; ++m) {
        const Vector x = dir * scale * std::pow(eps_prime, t.p_hat);
        if (exact.in_domain(x)) states.push_back({x, de * std::pow(cfg.sdds.tau, m)});
      }
    const ForcedSuccessReport r = forced_success_check(exact, cfg.sdds, t, eps_prime, states, cfg.verify.seed);
    c.pass = c.pass && r.ok();
    c.detail["eps_prime"].push_back(
        {{"eps_prime", eps_prime}, {"delta_eps_prime", de}, {"eligible", r.eligible}, {"successes", r.successes}});
  }
  return c;
}

inline CheckResult verify_drift(const ExperimentConfig& cfg, const StochasticProblem& problem, unsigned jobs) {
  const auto reports =
      drift_check(problem, cfg.sdds, verify_state_grid(cfg), cfg.verify.drift_reps, cfg.verify.seed, jobs);
  CheckResult c{"drift", !reports.empty(), json::object()};
  for (const auto& r : reports) {
    c.pass = c.pass && r.pass;
    c.detail["states"].push_back({{"x_norm", r.x.norm()},
                                  {"delta", r.delta},
                                  {"mean_change", r.change.mean},
                                  {"stderr", r.change.stderr_},
                                  {"bound", r.bound},
                                  {"success_rate", r.success_rate},
                                  {"insufficient", r.insufficient},
                                  {"pass", r.pass}});
  }
  return c;
}

struct VerifyResult {
  std::vector<CheckResult> checks;
  json document;

  bool ok() const { return all_pass(checks); }
};

inline VerifyResult cmd_verify(const ExperimentConfig& cfg, unsigned jobs = 1) {
  const auto& known = verify_check_names();
  const std::vector<std::string> names = cfg.checks.empty() ? known : cfg.checks;
  for (const auto& name : names)
    if (std::find(known.begin(), known.end(), name) == known.end())
      throw ConfigError("checks", "unknown check '" + name + "' for verify");
  const StochasticProblem problem = make_problem(cfg.problem);
  const bool valid = validate_config(cfg.sdds).ok;

  VerifyResult out;
  for (const auto& name : names) {
    if (name == "config") {
      out.checks.push_back(verify_config(cfg));
      continue;
    }
    if (name == "spanning") {
      out.checks.push_back(verify_spanning(cfg, problem));
      continue;
    }
    if (!valid) {
      out.checks.push_back({name, false, {{"skipped", "invalid configuration"}}});
      continue;
    }
    if (name == "phi_dominance") out.checks.push_back(verify_phi_dominance(cfg));
    else if (name == "trace_rules") out.checks.push_back(verify_trace_rules(cfg, problem));
    else if (name == "estimator") out.checks.push_back(verify_estimator(cfg, problem));
    else if (name == "decrease") out.checks.push_back(verify_decrease(cfg, problem));
    else if (name == "forced_success") out.checks.push_back(verify_forced_success(cfg, problem));
    else if (name == "drift") out.checks.push_back(verify_drift(cfg, problem, jobs));
  }
  out.document["problem"] = problem.name();
  out.document["config"] = config_to_json(cfg.sdds);
  out.document["checks"] = json::array();
  for (const auto& c : out.checks) out.document["checks"].push_back(to_json(c));
  out.document["ok"] = out.ok();
  write_file_atomic(resolve_output_dir(cfg) / "verify.json", out.document.dump(2) + "\n");
  return out;
}

}  // namespace sdds

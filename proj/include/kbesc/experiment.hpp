#pragma once

#include <kbesc/esc.hpp>
#include <kbesc/expression.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace kbesc {

/// Batch experiment read from a flat `key = value` file. The tuning symbols
/// (c_v, mu_tilde, T, delta_bar, Gamma, c, mu_min, mu_max, rho, sigma) map
/// directly onto EscConfig.
struct ExperimentConfig {
  std::string name = "experiment";
  /// benchmark_eq34 | static | ode
  std::string plant = "benchmark_eq34";
  Vector theta_star;
  Vector theta0;
  Vector x0;
  EscConfig esc;
  double dt = 1e-3;
  std::vector<std::string> arms{"standard", "kbesc"};
  std::size_t timeseries_decimation = 100;
  bool emit_plots = true;
  /// Recorded in the report; the algorithm itself draws no random numbers.
  std::uint64_t seed = 0;
  /// Optional dataset CSV that seeds the kbesc arm.
  std::string warm_start;

  std::string static_map;
  std::string truth;
  std::size_t ode_dim = 0;
  std::vector<std::string> ode_rhs;
  std::string ode_output;

  /// Directory of the config file; relative paths resolve against it.
  std::filesystem::path base_dir;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (trim(v.substr(pos)).empty()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
}

inline std::size_t to_count(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d < 0 || d != std::floor(d) || d > 1e12) throw ConfigError("key '" + key + "': expected a nonnegative integer");
  return static_cast<std::size_t>(d);
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

inline std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline Vector to_vector(const std::string& key, const std::string& v) {
  const auto items = to_list(v);
  if (items.empty()) throw ConfigError("key '" + key + "': empty vector");
  Vector out(static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) out(static_cast<Eigen::Index>(i)) = to_double(key, items[i]);
  return out;
}

}  // namespace config_detail

inline ExperimentConfig parse_config(std::istream& in, const std::string& origin = "<config>") {
  using namespace config_detail;
  ExperimentConfig cfg;
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }

  std::optional<double> sigma;
  std::optional<double> rq_alpha;
  std::string kernel_name = "squared_exponential";
  std::map<std::size_t, std::string> rhs;
  for (const auto& [key, v] : kv) {
    if (key == "name") {
      cfg.name = v;
    } else if (key == "plant") {
      cfg.plant = v;
    } else if (key == "theta_star") {
      cfg.theta_star = to_vector(key, v);
    } else if (key == "theta0") {
      cfg.theta0 = to_vector(key, v);
    } else if (key == "x0") {
      cfg.x0 = to_vector(key, v);
    } else if (key == "k_max") {
      cfg.esc.k_max = to_count(key, v);
    } else if (key == "n_v") {
      cfg.esc.n_v = to_count(key, v);
    } else if (key == "c_v") {
      cfg.esc.c_v = to_double(key, v);
    } else if (key == "mu_tilde") {
      cfg.esc.mu_tilde = to_double(key, v);
    } else if (key == "T") {
      cfg.esc.T = to_double(key, v);
    } else if (key == "delta_bar") {
      cfg.esc.delta_bar = to_double(key, v);
    } else if (key == "Gamma") {
      cfg.esc.gamma = to_double(key, v);
    } else if (key == "c") {
      cfg.esc.armijo_c = to_double(key, v);
    } else if (key == "mu_min") {
      cfg.esc.mu_min = to_double(key, v);
    } else if (key == "mu_max") {
      cfg.esc.mu_max = to_double(key, v);
    } else if (key == "rho") {
      cfg.esc.rho = to_double(key, v);
    } else if (key == "sigma") {
      sigma = to_double(key, v);
    } else if (key == "kernel") {
      kernel_name = v;
    } else if (key == "rq_alpha") {
      rq_alpha = to_double(key, v);
    } else if (key == "dt") {
      cfg.dt = to_double(key, v);
    } else if (key == "arms") {
      cfg.arms = to_list(v);
    } else if (key == "timeseries_decimation") {
      cfg.timeseries_decimation = to_count(key, v);
    } else if (key == "emit_plots") {
      cfg.emit_plots = to_bool(key, v);
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(to_count(key, v));
    } else if (key == "warm_start") {
      cfg.warm_start = v;
    } else if (key == "parallel_line_search") {
      cfg.esc.parallel_line_search = to_bool(key, v);
    } else if (key == "stop_tol") {
      cfg.esc.stop_tol = to_double(key, v);
    } else if (key == "stop_patience") {
      cfg.esc.stop_patience = to_count(key, v);
    } else if (key == "static_map") {
      cfg.static_map = v;
    } else if (key == "truth") {
      cfg.truth = v;
    } else if (key == "ode_dim") {
      cfg.ode_dim = to_count(key, v);
    } else if (key == "ode_output") {
      cfg.ode_output = v;
    } else if (key.rfind("ode_rhs_", 0) == 0) {
      const std::size_t i = to_count(key, key.substr(8));
      if (i < 1) throw ConfigError("key '" + key + "': indices start at 1");
      rhs[i] = v;
    } else {
      throw ConfigError(origin + ": unknown key '" + key + "'");
    }
  }

  const auto kind = parse_kernel_kind(kernel_name);
  if (!kind) throw ConfigError("unknown kernel '" + kernel_name + "'");
  cfg.esc.kernel = KernelSpec{*kind, sigma.value_or(cfg.esc.kernel.length_scale), rq_alpha.value_or(1.0)};
  for (std::size_t i = 1; i <= rhs.size(); ++i) {
    if (!rhs.count(i)) throw ConfigError("ode_rhs_" + std::to_string(i) + " is missing");
    cfg.ode_rhs.push_back(rhs[i]);
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  auto cfg = parse_config(in, path.string());
  cfg.base_dir = path.parent_path();
  return cfg;
}

inline PlantModel build_plant(const ExperimentConfig& cfg) {
  const auto n = cfg.theta0.size();
  if (cfg.plant == "benchmark_eq34") {
    return benchmark_plant(cfg.theta_star.size() ? cfg.theta_star : Vector());
  }
  const auto truth_from = [&](Eigen::Index n_theta) -> PlantModel::Map {
    if (cfg.truth.empty()) return {};
    auto e = Expression::compile(cfg.truth, plant_variables(n_theta, 0));
    return [e](const Vector& th) { return e(plant_slots(th, Vector())); };
  };
  if (cfg.plant == "static") {
    if (cfg.static_map.empty()) throw ConfigError("plant = static requires static_map");
    auto f = Expression::compile(cfg.static_map, plant_variables(n, 0));
    auto m = static_map([f](const Vector& th) { return f(plant_slots(th, Vector())); }, n, truth_from(n));
    m.name = "static";
    return m;
  }
  if (cfg.plant == "ode") {
    const auto nx = static_cast<Eigen::Index>(cfg.ode_dim);
    if (nx < 1) throw ConfigError("plant = ode requires ode_dim >= 1");
    if (cfg.ode_rhs.size() != cfg.ode_dim) throw ConfigError("plant = ode requires ode_rhs_1..ode_rhs_<ode_dim>");
    if (cfg.ode_output.empty()) throw ConfigError("plant = ode requires ode_output");
    const auto vars = plant_variables(n, nx);
    std::vector<Expression> f;
    for (const auto& r : cfg.ode_rhs) f.push_back(Expression::compile(r, vars));
    const auto h = Expression::compile(cfg.ode_output, vars);
    PlantModel m;
    m.name = "ode";
    m.state_dim = nx;
    m.input_dim = n;
    m.dynamics = [f](const Vector& x, const Vector& th) {
      const auto s = plant_slots(th, x);
      Vector dx(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) dx(i) = f[static_cast<std::size_t>(i)](s);
      return dx;
    };
    m.output = [h](const Vector& x, const Vector& th) { return h(plant_slots(th, x)); };
    m.truth = truth_from(n);
    return m;
  }
  throw ConfigError("unknown plant '" + cfg.plant + "' (expected benchmark_eq34, static or ode)");
}

inline std::filesystem::path resolve(const ExperimentConfig& cfg, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || cfg.base_dir.empty() ? path : cfg.base_dir / path;
}

/// Checks everything a run needs without running it.
inline void validate(const ExperimentConfig& cfg) {
  if (cfg.name.empty()) throw ConfigError("name must not be empty");
  if (cfg.name.find_first_of("/\\") != std::string::npos) throw ConfigError("name must not contain path separators");
  if (cfg.theta0.size() == 0) throw ConfigError("theta0 is required");
  if (!cfg.theta0.allFinite()) throw ConfigError("theta0 must be finite");
  if (cfg.plant == "benchmark_eq34" && cfg.theta0.size() != 2) throw ConfigError("benchmark plant needs 2-dim theta0");
  const PlantModel model = build_plant(cfg);
  if (cfg.x0.size() != 0 && cfg.x0.size() != model.state_dim) {
    throw ConfigError("x0 has " + std::to_string(cfg.x0.size()) + " entries, plant state has " +
                      std::to_string(model.state_dim));
  }
  cfg.esc.validate(cfg.theta0.size());
  if (!(cfg.dt > 0.0) || cfg.dt > cfg.esc.T) throw ConfigError("dt must satisfy 0 < dt <= T");
  if (cfg.timeseries_decimation < 1) throw ConfigError("timeseries_decimation must be at least 1");
  if (cfg.arms.empty()) throw ConfigError("arms must list at least one of standard, kbesc");
  std::set<std::string> seen;
  for (const auto& a : cfg.arms) {
    if (a != "standard" && a != "kbesc") throw ConfigError("unknown arm '" + a + "' (expected standard or kbesc)");
    if (!seen.insert(a).second) throw ConfigError("arm '" + a + "' listed twice");
  }
  if (!cfg.warm_start.empty()) {
    const auto d = load_dataset(resolve(cfg, cfg.warm_start).string());
    if (!d.empty() && d.dim() != cfg.theta0.size()) throw ConfigError("warm_start dataset dimension differs from theta0");
  }
  // Expressions are compiled by build_plant above; probe them once for totality.
  const Vector x = cfg.x0.size() ? cfg.x0 : Vector::Zero(model.state_dim);
  if (!model.dynamics(x, cfg.theta0).allFinite() || !std::isfinite(model.output(x, cfg.theta0))) {
    throw ConfigError("plant expressions are not finite at theta0, x0");
  }
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct ArmSummary {
  std::string name;
  std::size_t updates = 0;
  std::size_t measurements = 0;
  std::size_t kernel_steps = 0;
  std::vector<double> kernel_gains;
  Vector final_theta;
  std::optional<double> final_f;
  std::optional<double> final_distance;
  /// First update whose truth value is no worse than the reference arm's final value.
  std::optional<std::size_t> reach_updates;
  std::optional<std::size_t> reach_measurements;
  std::optional<std::string> error;
};

struct Report {
  std::string name;
  std::string reference;
  std::optional<double> f_threshold;
  std::vector<ArmSummary> arms;
  /// Per non-reference arm: 100 (1 - reach / reference reach).
  std::map<std::string, double> measurement_reduction;
  std::map<std::string, double> update_reduction;
  std::optional<std::uint64_t> seed;
};

inline double reduction_percent(std::size_t value, std::size_t reference) {
  return reference == 0 ? 0.0 : 100.0 * (1.0 - static_cast<double>(value) / static_cast<double>(reference));
}

/// `reference` names the arm the others are compared against; an empty name
/// picks "standard" when present, else the first arm.
inline Report make_report(const std::string& name, const std::vector<std::pair<std::string, RunTrace>>& traces,
                          const std::optional<Vector>& theta_star = std::nullopt, std::string reference = {}) {
  if (traces.empty()) throw Error("report: no traces");
  Report rep;
  rep.name = name;
  if (reference.empty()) {
    reference = traces.front().first;
    for (const auto& [arm, _] : traces) {
      if (arm == "standard") reference = arm;
    }
  }
  rep.reference = reference;
  const RunTrace* ref = nullptr;
  for (const auto& [arm, t] : traces) {
    if (arm == reference) ref = &t;
  }
  if (!ref) throw Error("report: reference arm '" + reference + "' not found");
  if (!ref->records.empty() && ref->records.back().f_true) rep.f_threshold = ref->records.back().f_true;

  for (const auto& [arm, t] : traces) {
    ArmSummary s;
    s.name = arm;
    s.updates = t.records.size();
    s.measurements = t.measurements();
    s.kernel_steps = t.kernel_steps();
    for (const auto& r : t.records) {
      if (r.kind == StepKind::Kernel && r.mu) s.kernel_gains.push_back(*r.mu);
    }
    s.final_theta = t.final_theta();
    s.final_f = t.records.empty() ? t.f0 : t.records.back().f_true;
    if (theta_star && theta_star->size() == s.final_theta.size()) s.final_distance = (s.final_theta - *theta_star).norm();
    if (rep.f_threshold) {
      for (const auto& r : t.records) {
        if (r.f_true && *r.f_true <= *rep.f_threshold) {
          s.reach_updates = r.k;
          s.reach_measurements = r.measurements;
          break;
        }
      }
    }
    rep.arms.push_back(std::move(s));
  }
  const ArmSummary* rs = nullptr;
  for (const auto& s : rep.arms) {
    if (s.name == reference) rs = &s;
  }
  for (const auto& s : rep.arms) {
    if (s.name == reference || !s.reach_updates || !rs->reach_updates) continue;
    rep.measurement_reduction[s.name] = reduction_percent(*s.reach_measurements, *rs->reach_measurements);
    rep.update_reduction[s.name] = reduction_percent(*s.reach_updates, *rs->reach_updates);
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const Report& rep) {
  using nlohmann::ordered_json;
  auto opt = [](const auto& v) -> ordered_json { return v ? ordered_json(*v) : ordered_json(nullptr); };
  ordered_json j;
  j["name"] = rep.name;
  if (rep.seed) j["seed"] = *rep.seed;
  j["reference_arm"] = rep.reference;
  j["f_threshold"] = opt(rep.f_threshold);
  ordered_json arms = ordered_json::object();
  for (const auto& s : rep.arms) {
    ordered_json a;
    a["updates"] = s.updates;
    a["measurements"] = s.measurements;
    a["kernel_steps"] = s.kernel_steps;
    a["kernel_gains"] = s.kernel_gains;
    a["final_theta"] = std::vector<double>(s.final_theta.data(), s.final_theta.data() + s.final_theta.size());
    a["final_f"] = opt(s.final_f);
    a["final_distance"] = opt(s.final_distance);
    a["reach"] = {{"updates", opt(s.reach_updates)}, {"measurements", opt(s.reach_measurements)}};
    if (s.error) a["error"] = *s.error;
    arms[s.name] = a;
  }
  j["arms"] = arms;
  ordered_json red = ordered_json::object();
  for (const auto& [arm, v] : rep.measurement_reduction) {
    red[arm] = {{"measurement_reduction_percent", v}, {"update_reduction_percent", rep.update_reduction.at(arm)}};
  }
  j["reductions"] = red;
  return j;
}

// ---------------------------------------------------------------------------
// Convergence plot: parameter estimates against measurements and updates
// ---------------------------------------------------------------------------

inline std::string render_svg(const std::string& title, const RunTrace& trace) {
  const auto n = trace.theta0.size();
  std::vector<double> ks{0.0}, ns{static_cast<double>(trace.initial_measurements)};
  std::vector<Vector> th{trace.theta0};
  std::vector<bool> kernel{false};
  for (const auto& r : trace.records) {
    ks.push_back(static_cast<double>(r.k));
    ns.push_back(static_cast<double>(r.measurements));
    th.push_back(r.theta_after);
    kernel.push_back(r.kind == StepKind::Kernel);
  }
  double lo = th.front().minCoeff(), hi = th.front().maxCoeff();
  for (const auto& v : th) {
    lo = std::min(lo, v.minCoeff());
    hi = std::max(hi, v.maxCoeff());
  }
  if (hi - lo < 1e-12) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const double W = 420, H = 300, ML = 55, MR = 15, MT = 35, MB = 45;
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  auto panel = [&](double x0, const std::vector<double>& xs, const char* xlabel) {
    const double xmax = std::max(1.0, *std::max_element(xs.begin(), xs.end()));
    const double xmin = std::min(0.0, *std::min_element(xs.begin(), xs.end()));
    auto px = [&](double x) { return x0 + ML + (x - xmin) / (xmax - xmin) * (W - ML - MR); };
    auto py = [&](double y) { return MT + (hi - y) / (hi - lo) * (H - MT - MB); };
    o << "<rect x=\"" << x0 + ML << "\" y=\"" << MT << "\" width=\"" << W - ML - MR << "\" height=\"" << H - MT - MB
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double yv = lo + (hi - lo) * t / 4.0;
      const double xv = xmin + (xmax - xmin) * t / 4.0;
      o << "<text x=\"" << x0 + ML - 5 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
      o << "<text x=\"" << px(xv) << "\" y=\"" << H - MB + 15 << "\" text-anchor=\"middle\">" << xv << "</text>\n";
    }
    o << "<text x=\"" << x0 + ML + (W - ML - MR) / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\">" << xlabel
      << "</text>\n";
    for (Eigen::Index j = 0; j < n; ++j) {
      o << "<polyline fill=\"none\" stroke=\"" << colors[j % 6] << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < xs.size(); ++i) o << px(xs[i]) << ',' << py(th[i](j)) << ' ';
      o << "\"/>\n";
      for (std::size_t i = 0; i < xs.size(); ++i) {
        o << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(th[i](j)) << "\" r=\"" << (kernel[i] ? 3.5 : 2)
          << "\" fill=\"" << (kernel[i] ? "white" : colors[j % 6]) << "\" stroke=\"" << colors[j % 6] << "\"/>\n";
      }
      o << "<text x=\"" << x0 + W - MR - 5 << "\" y=\"" << MT + 14 + 14 * static_cast<double>(j)
        << "\" text-anchor=\"end\" fill=\"" << colors[j % 6] << "\">theta_hat_" << j + 1 << "</text>\n";
    }
  };
  o << "<text x=\"" << W << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << title
    << " (open markers: kernel-based updates)</text>\n";
  panel(0, ns, "measurements N_k");
  panel(W, ks, "update k");
  o << "</svg>\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Running an experiment
// ---------------------------------------------------------------------------

struct ArmOutcome {
  std::string name;
  RunTrace trace;
  std::optional<std::string> error;
};

struct ExperimentResult {
  std::vector<ArmOutcome> arms;
  Report report;
  bool ok() const {
    return std::all_of(arms.begin(), arms.end(), [](const auto& a) { return !a.error; });
  }
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

inline RunTrace load_trace(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open trace file " + p.string());
  return read_trace_csv(in);
}

/// Runs every configured arm concurrently and writes trace_<arm>.csv,
/// timeseries_<arm>.csv, fig_<arm>.svg (optional) and report.json into `out_dir`.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                       bool emit_plots) {
  validate(cfg);
  std::filesystem::create_directories(out_dir);
  const PlantModel model = build_plant(cfg);
  const Vector x0 = cfg.x0.size() ? cfg.x0 : Vector::Zero(model.state_dim);
  Dataset warm;
  if (!cfg.warm_start.empty()) warm = load_dataset(resolve(cfg, cfg.warm_start).string());

  auto run_arm = [&](const std::string& arm) {
    ArmOutcome out;
    out.name = arm;
    EscConfig esc = cfg.esc;
    esc.kb_enabled = arm == "kbesc";

    std::ofstream ts(out_dir / ("timeseries_" + arm + ".csv"), std::ios::binary);
    if (!ts) throw Error("cannot write timeseries for arm " + arm);
    ts << "t";
    for (Eigen::Index i = 1; i <= model.state_dim; ++i) ts << ",x_" << i;
    for (Eigen::Index i = 1; i <= model.input_dim; ++i) ts << ",theta_" << i;
    ts << ",y\n";
    PlantSession plant(model, x0, cfg.dt);
    plant.set_trace_hook(
        [&ts](const TracePoint& p) {
          ts << csv::format_double(p.t);
          for (Eigen::Index i = 0; i < p.x.size(); ++i) ts << ',' << csv::format_double(p.x(i));
          for (Eigen::Index i = 0; i < p.theta.size(); ++i) ts << ',' << csv::format_double(p.theta(i));
          ts << ',' << csv::format_double(p.y) << '\n';
        },
        cfg.timeseries_decimation);

    try {
      out.trace = run(plant, esc, cfg.theta0, esc.kb_enabled ? warm : Dataset{});
    } catch (const RunError& e) {
      out.trace = e.partial();
      out.error = e.cause() + ": " + e.what();
    }
    const auto trace_path = out_dir / ("trace_" + arm + ".csv");
    {
      std::ofstream tf(trace_path, std::ios::binary);
      if (!tf) throw Error("cannot write " + trace_path.string());
      write_trace_csv(tf, out.trace, model.has_truth());
    }
    if (emit_plots) write_text(out_dir / ("fig_" + arm + ".svg"), render_svg(cfg.name + ": " + arm, load_trace(trace_path)));
    return out;
  };

  std::vector<std::future<ArmOutcome>> jobs;
  for (const auto& arm : cfg.arms) jobs.push_back(std::async(std::launch::async, run_arm, arm));
  ExperimentResult res;
  for (auto& j : jobs) res.arms.push_back(j.get());

  std::vector<std::pair<std::string, RunTrace>> traces;
  for (const auto& a : res.arms) traces.emplace_back(a.name, a.trace);
  std::optional<Vector> star;
  if (cfg.plant == "benchmark_eq34") {
    star = cfg.theta_star.size() ? cfg.theta_star : Vector((Vector(2) << 3.0, 1.0).finished());
  }
  res.report = make_report(cfg.name, traces, star);
  res.report.seed = cfg.seed;
  for (auto& s : res.report.arms) {
    for (const auto& a : res.arms) {
      if (a.name == s.name) s.error = a.error;
    }
  }
  write_text(out_dir / "report.json", to_json(res.report).dump(2) + "\n");
  return res;
}

}  // namespace kbesc

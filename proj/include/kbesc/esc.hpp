#pragma once

#include <kbesc/approximator.hpp>
#include <kbesc/certifier.hpp>
#include <kbesc/plant.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace kbesc {

struct EscConfig {
  /// Dither amplitude of the central-difference probes.
  double c_v = 1e-2;
  /// Gain of the measurement-based update.
  double mu_tilde = 5.0;
  /// Waiting time before each sample.
  double T = 10.0;
  double delta_bar = 2.5e-3;
  double gamma = 1.05;
  /// Armijo sufficient-decrease constant.
  double armijo_c = 1e-4;
  double mu_min = 0.1;
  double mu_max = 50.0;
  double rho = 0.9;
  std::size_t k_max = 25;
  KernelSpec kernel = KernelSpec::squared_exponential(5.0);
  /// Measurements per standard update; must equal 2 n_theta. Zero means "derive".
  std::size_t n_v = 0;
  /// When false every update is a standard step.
  bool kb_enabled = true;
  /// Evaluate line-search trials concurrently (same result as sequential).
  bool parallel_line_search = false;
  /// Optional early stop once |theta_{k+1} - theta_k| <= stop_tol for
  /// stop_patience consecutive updates.
  std::optional<double> stop_tol;
  std::size_t stop_patience = 1;

  std::size_t measurements_per_step(Eigen::Index n_theta) const { return 2 * static_cast<std::size_t>(n_theta); }

  void validate(Eigen::Index n_theta) const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive and finite");
    };
    positive(c_v, "c_v");
    positive(mu_tilde, "mu_tilde");
    positive(T, "T");
    positive(gamma, "Gamma");
    positive(mu_min, "mu_min");
    positive(mu_max, "mu_max");
    if (!(delta_bar >= 0.0) || !std::isfinite(delta_bar)) throw ConfigError("delta_bar must be nonnegative");
    if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw ConfigError("c must lie in (0, 1)");
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
    if (!(mu_min <= mu_max)) throw ConfigError("mu_min must not exceed mu_max");
    if (n_theta < 1) throw ConfigError("parameter dimension must be at least 1");
    if (n_v != 0 && n_v != measurements_per_step(n_theta)) {
      throw ConfigError("n_v must equal 2 * dim(theta) for the central-difference dither");
    }
    if (stop_tol && !(*stop_tol >= 0.0)) throw ConfigError("stop_tol must be nonnegative");
    if (stop_patience < 1) throw ConfigError("stop_patience must be at least 1");
    try {
      kernel.validate();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
};

enum class StepKind { Standard, Kernel };

inline std::string to_string(StepKind k) { return k == StepKind::Standard ? "STANDARD" : "KERNEL"; }

struct UpdateRecord {
  std::size_t k = 0;
  StepKind kind = StepKind::Standard;
  Vector theta_before;
  Vector theta_after;
  std::optional<double> mu;
  /// Cumulative measurement count after this update.
  std::size_t measurements = 0;
  std::optional<double> b_lower;
  /// Last Armijo bound evaluated during the line search.
  std::optional<double> b_upper;
  std::optional<double> f_true;
  std::size_t certificate_solves = 0;
  double wall_seconds = 0.0;
};

struct RunTrace {
  Vector theta0;
  std::optional<double> f0;
  std::size_t initial_measurements = 0;
  std::vector<UpdateRecord> records;

  std::size_t measurements() const { return records.empty() ? initial_measurements : records.back().measurements; }
  std::size_t kernel_steps() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const auto& r) { return r.kind == StepKind::Kernel; }));
  }
  const Vector& final_theta() const { return records.empty() ? theta0 : records.back().theta_after; }
};

/// Error raised inside `run`, carrying the updates completed so far.
class RunError : public Error {
 public:
  RunError(const std::string& what, RunTrace partial, std::string cause)
      : Error(what), partial_(std::move(partial)), cause_(std::move(cause)) {}
  const RunTrace& partial() const { return partial_; }
  /// Name of the underlying error type.
  const std::string& cause() const { return cause_; }

 private:
  RunTrace partial_;
  std::string cause_;
};

struct StandardStep {
  Vector theta_next;
  Vector gradient_estimate;
  std::vector<Sample> samples;
};

/// Central-difference update: probes theta -/+ c_v e_j in that order, waits T
/// before each sample, and steps against the estimated gradient.
inline StandardStep standard_step(PlantSession& plant, const Vector& theta, const EscConfig& cfg,
                                  std::size_t update = 0) {
  const auto n = theta.size();
  StandardStep out;
  out.gradient_estimate.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double y[2];
    for (int side = 0; side < 2; ++side) {
      Vector probe = theta;
      probe(j) += side == 0 ? -cfg.c_v : cfg.c_v;
      y[side] = plant.hold_and_sample(probe, cfg.T);
      out.samples.push_back({probe, y[side], update});
    }
    out.gradient_estimate(j) = (y[1] - y[0]) / (2.0 * cfg.c_v);
  }
  out.theta_next = theta - cfg.mu_tilde * out.gradient_estimate;
  return out;
}

struct LineSearchResult {
  std::optional<double> mu;
  std::optional<double> last_b_upper;
  std::size_t solves = 0;
};

/// Backtracking over mu_max, rho mu_max, rho^2 mu_max, ... while mu >= mu_min;
/// returns the first gain whose Armijo bound is nonpositive.
inline LineSearchResult line_search(const Approximation& m, const Dataset& data, const Vector& theta,
                                    const EscConfig& cfg) {
  std::vector<double> trials;
  for (double mu = cfg.mu_max; mu >= cfg.mu_min; mu *= cfg.rho) trials.push_back(mu);

  LineSearchResult out;
  auto bound = [&](double mu) { return armijo_upper_bound(m, data, theta, mu, cfg.armijo_c, cfg.gamma, cfg.delta_bar); };

  if (!cfg.parallel_line_search) {
    for (double mu : trials) {
      ++out.solves;
      try {
        const double b = bound(mu).value;
        out.last_b_upper = b;
        if (b <= 0.0) {
          out.mu = mu;
          return out;
        }
      } catch (const CertificationUnavailable&) {
        return out;
      }
    }
    return out;
  }

  // Batches are scanned in sequence order, so the first qualifying gain wins
  // exactly as in the sequential loop.
  const std::size_t batch = std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t start = 0; start < trials.size(); start += batch) {
    const std::size_t stop = std::min(trials.size(), start + batch);
    std::vector<std::future<std::optional<double>>> jobs;
    for (std::size_t i = start; i < stop; ++i) {
      jobs.push_back(std::async(std::launch::async, [&, mu = trials[i]]() -> std::optional<double> {
        try {
          return bound(mu).value;
        } catch (const CertificationUnavailable&) {
          return std::nullopt;
        }
      }));
    }
    std::vector<std::optional<double>> values;
    for (auto& j : jobs) values.push_back(j.get());
    for (std::size_t i = start; i < stop; ++i) {
      ++out.solves;
      const auto& b = values[i - start];
      if (!b) return out;
      out.last_b_upper = *b;
      if (*b <= 0.0) {
        out.mu = trials[i];
        return out;
      }
    }
  }
  return out;
}

inline Vector kernel_step(const Vector& theta, const Approximation& m, double mu) {
  return theta - mu * grad(m, theta);
}

/// Called after each completed update.
using UpdateObserver = std::function<void(const UpdateRecord&)>;

/// Kernel-based extremum-seeking loop. If `initial` is empty one standard step
/// is taken first; the trace holds k_max updates in total (at least one).
inline RunTrace run(PlantSession& plant, const EscConfig& cfg, const Vector& theta0, Dataset initial = {},
                    const UpdateObserver& observer = {}) {
  const auto n = theta0.size();
  cfg.validate(n);
  if (!theta0.allFinite()) throw Error("run: initial parameter is not finite");
  if (plant.model().input_dim != n) throw DimensionMismatch("run: plant input dimension differs from theta0");
  if (!initial.empty() && initial.dim() != n) throw DimensionMismatch("run: initial dataset dimension");

  const PlantModel& model = plant.model();
  auto truth = [&](const Vector& th) -> std::optional<double> {
    if (!model.has_truth()) return std::nullopt;
    return model.truth(th);
  };

  RunTrace trace;
  trace.theta0 = theta0;
  trace.f0 = truth(theta0);
  Dataset data = std::move(initial);
  // N_k counts every sample in the dataset, including warm-start data.
  trace.initial_measurements = data.size();
  Vector theta = theta0;
  std::size_t measured = data.size();
  std::size_t still = 0;

  auto do_standard = [&](UpdateRecord& rec) {
    const auto step = standard_step(plant, theta, cfg, rec.k);
    for (const auto& s : step.samples) data.append(s);
    measured += step.samples.size();
    rec.kind = StepKind::Standard;
    rec.theta_after = step.theta_next;
  };

  auto fail = [&](const std::string& what, const char* cause) -> RunError {
    return RunError(what, trace, cause);
  };

  try {
    for (std::size_t k = 1; k <= std::max<std::size_t>(cfg.k_max, data.empty() ? 1 : 0); ++k) {
      const auto start = std::chrono::steady_clock::now();
      UpdateRecord rec;
      rec.k = k;
      rec.theta_before = theta;
      bool kernel_done = false;

      if (cfg.kb_enabled && !data.empty()) {
        try {
          const Approximation m = fit(data, cfg.kernel, cfg.delta_bar, cfg.gamma);
          const auto lower = descent_lower_bound(m, data, theta, cfg.gamma, cfg.delta_bar);
          ++rec.certificate_solves;
          rec.b_lower = lower.value;
          if (lower.value > 0.0) {
            const auto ls = line_search(m, data, theta, cfg);
            rec.certificate_solves += ls.solves;
            rec.b_upper = ls.last_b_upper;
            if (ls.mu) {
              rec.kind = StepKind::Kernel;
              rec.mu = ls.mu;
              rec.theta_after = kernel_step(theta, m, *ls.mu);
              kernel_done = true;
            }
          }
        } catch (const CertificationUnavailable&) {
          // falls through to a standard step
        }
      }
      if (!kernel_done) do_standard(rec);

      rec.measurements = measured;
      rec.f_true = truth(rec.theta_after);
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const double moved = (rec.theta_after - rec.theta_before).norm();
      theta = rec.theta_after;
      trace.records.push_back(std::move(rec));
      if (observer) observer(trace.records.back());

      if (cfg.stop_tol) {
        still = moved <= *cfg.stop_tol ? still + 1 : 0;
        if (still >= cfg.stop_patience) break;
      }
    }
  } catch (const DataInconsistency& e) {
    throw fail(e.what(), "DataInconsistency");
  } catch (const SimulationDivergence& e) {
    throw fail(e.what(), "SimulationDivergence");
  }
  return trace;
}

// ---------------------------------------------------------------------------
// CSV: k,kind,theta_hat_1..n,mu,N_k,b_lower,b_upper[,f_true]
// Row k = 0 (kind INIT) holds the initial parameter.
// ---------------------------------------------------------------------------

inline void write_trace_csv(std::ostream& out, const RunTrace& trace, bool with_truth) {
  const auto n = trace.theta0.size();
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
  out << "k,kind";
  for (Eigen::Index j = 1; j <= n; ++j) out << ",theta_hat_" << j;
  out << ",mu,N_k,b_lower,b_upper";
  if (with_truth) out << ",f_true";
  out << '\n';
  out << "0,INIT";
  for (Eigen::Index j = 0; j < n; ++j) out << ',' << csv::format_double(trace.theta0(j));
  out << ",," << trace.initial_measurements << ",,";
  if (with_truth) out << ',' << opt(trace.f0);
  out << '\n';
  for (const auto& r : trace.records) {
    out << r.k << ',' << to_string(r.kind);
    for (Eigen::Index j = 0; j < n; ++j) out << ',' << csv::format_double(r.theta_after(j));
    out << ',' << opt(r.mu) << ',' << r.measurements << ',' << opt(r.b_lower) << ',' << opt(r.b_upper);
    if (with_truth) out << ',' << opt(r.f_true);
    out << '\n';
  }
}

inline RunTrace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("trace csv: missing header");
  const auto header = csv::split(csv::strip_cr(line));
  if (header.size() < 7 || header[0] != "k" || header[1] != "kind") throw Error("trace csv: unexpected header");
  const bool with_truth = header.back() == "f_true";
  const auto n = static_cast<Eigen::Index>(header.size() - 6 - (with_truth ? 1 : 0));
  if (n < 1) throw Error("trace csv: no theta columns");
  for (Eigen::Index j = 0; j < n; ++j) {
    if (header[2 + static_cast<std::size_t>(j)] != "theta_hat_" + std::to_string(j + 1)) {
      throw Error("trace csv: unexpected column '" + header[2 + static_cast<std::size_t>(j)] + "'");
    }
  }
  auto opt = [](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    return csv::parse_double(s, "trace");
  };
  RunTrace trace;
  Vector prev;
  bool seen_init = false;
  while (std::getline(in, line)) {
    line = csv::strip_cr(line);
    if (line.empty()) continue;
    const auto c = csv::split(line);
    if (c.size() != header.size()) throw Error("trace csv: row has wrong number of columns");
    Vector th(n);
    for (Eigen::Index j = 0; j < n; ++j) th(j) = csv::parse_double(c[2 + static_cast<std::size_t>(j)], "theta");
    const std::size_t base = 2 + static_cast<std::size_t>(n);
    const auto count = static_cast<std::size_t>(csv::parse_double(c[base + 1], "N_k"));
    if (c[1] == "INIT") {
      trace.theta0 = th;
      trace.initial_measurements = count;
      if (with_truth) trace.f0 = opt(c.back());
      prev = th;
      seen_init = true;
      continue;
    }
    if (!seen_init) throw Error("trace csv: first row must be INIT");
    UpdateRecord r;
    r.k = static_cast<std::size_t>(csv::parse_double(c[0], "k"));
    if (c[1] == "STANDARD") {
      r.kind = StepKind::Standard;
    } else if (c[1] == "KERNEL") {
      r.kind = StepKind::Kernel;
    } else {
      throw Error("trace csv: unknown step kind '" + c[1] + "'");
    }
    r.theta_before = prev;
    r.theta_after = th;
    r.mu = opt(c[base]);
    r.measurements = count;
    r.b_lower = opt(c[base + 2]);
    r.b_upper = opt(c[base + 3]);
    if (with_truth) r.f_true = opt(c.back());
    prev = th;
    trace.records.push_back(std::move(r));
  }
  if (!seen_init) throw Error("trace csv: no rows");
  return trace;
}

}  // namespace kbesc

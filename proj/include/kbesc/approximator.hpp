#pragma once

#include <kbesc/conic.hpp>
#include <kbesc/kernel.hpp>
#include <kbesc/types.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace kbesc {

struct Sample {
  Vector input;
  double output = 0.0;
  /// Update index during which the sample was taken.
  std::size_t update = 0;
};

/// Append-only list of input/output samples; indices stay stable for a run.
class Dataset {
 public:
  Dataset() = default;

  void append(Sample s) {
    if (!s.input.allFinite() || !std::isfinite(s.output)) throw Error("dataset: non-finite sample");
    if (!samples_.empty()) require_same_dim(s.input, samples_.front().input, "dataset");
    if (s.input.size() == 0) throw DimensionMismatch("dataset: empty input vector");
    samples_.push_back(std::move(s));
  }

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  Eigen::Index dim() const { return samples_.empty() ? 0 : samples_.front().input.size(); }
  const Sample& operator[](std::size_t i) const { return samples_.at(i); }
  const std::vector<Sample>& samples() const { return samples_; }
  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

  std::vector<Vector> inputs() const {
    std::vector<Vector> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(s.input);
    return out;
  }

 private:
  std::vector<Sample> samples_;
};

struct FitConfig {
  double delta_bar = 0.0;
  double gamma = 1.0;
};

/// m(.) = sum_i weights_i k(., centers_i), the minimum-norm element within
/// delta_bar of the data.
struct Approximation {
  KernelSpec kernel;
  std::vector<Vector> centers;
  Vector weights;
  FitConfig config;

  double operator()(const Vector& theta) const { return eval(theta); }

  double eval(const Vector& theta) const {
    double v = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      v += weights(static_cast<Eigen::Index>(i)) * kernel::eval(kernel, theta, centers[i]);
    }
    return v;
  }

  /// Zero vector of dim(theta) when there are no centers.
  Vector grad(const Vector& theta) const {
    Vector g = Vector::Zero(theta.size());
    for (std::size_t i = 0; i < centers.size(); ++i) {
      g += weights(static_cast<Eigen::Index>(i)) * kernel::grad1(kernel, theta, centers[i]);
    }
    return g;
  }

  double rkhs_norm() const {
    if (centers.empty()) return 0.0;
    const Matrix K = assemble_gram(kernel, centers).matrix;
    return std::sqrt(std::max(0.0, weights.dot(K * weights)));
  }
};

/// Inputs within kDedupTol are merged; each merged input carries the
/// intersection of its samples' tubes.
struct MergedTubes {
  std::vector<Vector> inputs;
  std::vector<double> lower;
  std::vector<double> upper;
};

inline MergedTubes merge_tubes(const Dataset& data, double delta_bar) {
  MergedTubes m;
  for (const auto& s : data) {
    std::size_t r = 0;
    while (r < m.inputs.size() && (s.input - m.inputs[r]).norm() > kDedupTol) ++r;
    if (r == m.inputs.size()) {
      m.inputs.push_back(s.input);
      m.lower.push_back(s.output - delta_bar);
      m.upper.push_back(s.output + delta_bar);
    } else {
      m.lower[r] = std::max(m.lower[r], s.output - delta_bar);
      m.upper[r] = std::min(m.upper[r], s.output + delta_bar);
      if (m.lower[r] > m.upper[r]) {
        throw DataInconsistency("repeated measurements at one input differ by more than 2*delta_bar");
      }
    }
  }
  return m;
}

inline Approximation fit(const Dataset& data, const KernelSpec& k, double delta_bar, double gamma) {
  k.validate();
  if (!(delta_bar >= 0.0)) throw Error("fit: delta_bar must be nonnegative");
  if (!(gamma > 0.0)) throw Error("fit: Gamma must be positive");
  Approximation m{k, {}, Vector(), {delta_bar, gamma}};
  if (data.empty()) return m;

  const MergedTubes tubes = merge_tubes(data, delta_bar);
  const Matrix K = assemble_gram(k, tubes.inputs).matrix;
  conic::QpProblem qp{K, {}};
  for (std::size_t i = 0; i < tubes.inputs.size(); ++i) {
    const double lo = tubes.lower[i], hi = tubes.upper[i];
    qp.constraints.push_back({K.row(static_cast<Eigen::Index>(i)).transpose(), 0.5 * (lo + hi), 0.5 * (hi - lo)});
  }
  const auto res = conic::solve_qp(qp);
  switch (res.status) {
    case conic::SolveStatus::Optimal:
      break;
    case conic::SolveStatus::Infeasible:
      throw DataInconsistency("fit: no function meets every measurement tube");
    case conic::SolveStatus::NumericFailure:
      throw CertificationUnavailable("fit: quadratic program did not converge");
  }
  m.centers = tubes.inputs;
  m.weights = res.solution;
  return m;
}

inline double eval(const Approximation& m, const Vector& theta) {
  if (!m.centers.empty()) require_same_dim(theta, m.centers.front(), "eval");
  return m.eval(theta);
}

inline Vector grad(const Approximation& m, const Vector& theta) {
  if (!m.centers.empty()) require_same_dim(theta, m.centers.front(), "grad");
  return m.grad(theta);
}

inline double rkhs_norm(const Approximation& m) { return m.rkhs_norm(); }

// ---------------------------------------------------------------------------
// CSV: i,theta_1,...,theta_n,y,update_k
// ---------------------------------------------------------------------------

namespace csv {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  // from_chars accepts subnormals, which std::stod reports as out of range.
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) throw Error("csv: cannot parse " + what + " value '" + s + "'");
  return v;
}

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace csv

inline void write_dataset_csv(std::ostream& out, const Dataset& data) {
  const auto n = data.dim();
  out << "i";
  for (Eigen::Index j = 1; j <= n; ++j) out << ",theta_" << j;
  out << ",y,update_k\n";
  std::size_t i = 1;
  for (const auto& s : data) {
    out << i++;
    for (Eigen::Index j = 0; j < n; ++j) out << ',' << csv::format_double(s.input(j));
    out << ',' << csv::format_double(s.output) << ',' << s.update << '\n';
  }
}

inline Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("dataset csv: missing header");
  const auto header = csv::split(csv::strip_cr(line));
  if (header.size() < 4 || header.front() != "i" || header[header.size() - 2] != "y" || header.back() != "update_k") {
    throw Error("dataset csv: expected header i,theta_1,...,theta_n,y,update_k");
  }
  const auto n = static_cast<Eigen::Index>(header.size() - 3);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (header[static_cast<std::size_t>(j) + 1] != "theta_" + std::to_string(j + 1)) {
      throw Error("dataset csv: unexpected column '" + header[static_cast<std::size_t>(j) + 1] + "'");
    }
  }
  Dataset d;
  while (std::getline(in, line)) {
    line = csv::strip_cr(line);
    if (line.empty()) continue;
    const auto cells = csv::split(line);
    if (cells.size() != header.size()) throw Error("dataset csv: row has wrong number of columns");
    Sample s;
    s.input.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) s.input(j) = csv::parse_double(cells[static_cast<std::size_t>(j) + 1], "theta");
    s.output = csv::parse_double(cells[cells.size() - 2], "y");
    s.update = static_cast<std::size_t>(csv::parse_double(cells.back(), "update_k"));
    d.append(std::move(s));
  }
  return d;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset file " + path);
  return read_dataset_csv(in);
}

inline void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset file " + path);
  write_dataset_csv(out, data);
}

}  // namespace kbesc

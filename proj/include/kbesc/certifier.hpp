#pragma once

#include <kbesc/approximator.hpp>
#include <kbesc/conic.hpp>
#include <kbesc/kernel.hpp>

#include <optional>

namespace kbesc {

enum class BoundKind { DescentLower, ArmijoUpper };

/// Worst case over every function in the Gamma-ball that agrees with the data
/// to within delta_bar.
struct CertificateBound {
  double value = 0.0;
  BoundKind kind = BoundKind::DescentLower;
  Vector theta;
  std::optional<double> mu;
  conic::SolveStatus status = conic::SolveStatus::Optimal;
  double kkt_residual = 0.0;
  double max_violation = 0.0;
  int iterations = 0;
};

namespace detail {

inline CertificateBound solve_certificate(const GramBlock& g, const Vector& weights, const Dataset& data,
                                          double gamma, double delta_bar, conic::Sense sense) {
  if (!(gamma > 0.0)) throw Error("certificate: Gamma must be positive");
  if (!(delta_bar >= 0.0)) throw Error("certificate: delta_bar must be nonnegative");
  conic::BallLpProblem p{g.matrix, g.matrix * weights, gamma, {}, sense};
  for (std::size_t i = 0; i < data.size(); ++i) p.constraints.push_back({g.row_of_data(i), data[i].output, delta_bar});

  const auto r = conic::solve_ball_lp(p);
  switch (r.status) {
    case conic::SolveStatus::Optimal:
      break;
    case conic::SolveStatus::Infeasible:
      throw DataInconsistency("certificate: data tubes do not meet the Gamma-ball");
    case conic::SolveStatus::NumericFailure:
      throw CertificationUnavailable("certificate: conic solver did not converge");
  }
  CertificateBound b;
  b.value = r.objective;
  b.status = r.status;
  b.kkt_residual = r.kkt_residual;
  b.max_violation = r.max_violation;
  b.iterations = r.iterations;
  return b;
}

}  // namespace detail

/// Lower bound on grad f(theta)' grad m(theta) over all admissible f.
inline CertificateBound descent_lower_bound(const Approximation& m, const Dataset& data, const Vector& theta,
                                            double gamma, double delta_bar) {
  const Vector gm = grad(m, theta);
  const GramBlock g = assemble_cert_matrix(m.kernel, data.inputs(), theta);
  Vector w = Vector::Zero(g.size());
  w.tail(theta.size()) = gm;
  auto b = detail::solve_certificate(g, w, data, gamma, delta_bar, conic::Sense::Min);
  b.kind = BoundKind::DescentLower;
  b.theta = theta;
  return b;
}

/// Upper bound on f(theta+) - f(theta) + c mu grad f(theta)' grad m(theta)
/// with theta+ = theta - mu grad m(theta).
inline CertificateBound armijo_upper_bound(const Approximation& m, const Dataset& data, const Vector& theta,
                                           double mu, double c, double gamma, double delta_bar) {
  if (!(mu > 0.0)) throw Error("armijo bound: mu must be positive");
  if (!(c > 0.0 && c < 1.0)) throw Error("armijo bound: c must lie in (0, 1)");
  const Vector gm = grad(m, theta);
  const Vector theta_plus = theta - mu * gm;
  const GramBlock g = assemble_cert_matrix_prime(m.kernel, data.inputs(), theta, theta_plus);
  Vector w = Vector::Zero(g.size());
  const std::size_t n_data = data.size();
  w(static_cast<Eigen::Index>(g.value_row[n_data])) -= 1.0;
  w(static_cast<Eigen::Index>(g.value_row[n_data + 1])) += 1.0;
  w.tail(theta.size()) = c * mu * gm;
  auto b = detail::solve_certificate(g, w, data, gamma, delta_bar, conic::Sense::Max);
  b.kind = BoundKind::ArmijoUpper;
  b.theta = theta;
  b.mu = mu;
  return b;
}

}  // namespace kbesc

#pragma once

#include <kbesc/approximator.hpp>
#include <kbesc/plant.hpp>

#include <initializer_list>
#include <random>

namespace kbesc::testing {

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline Dataset dataset(const std::vector<Vector>& inputs, const std::vector<double>& outputs) {
  Dataset d;
  for (std::size_t i = 0; i < inputs.size(); ++i) d.append({inputs[i], outputs[i], 0});
  return d;
}

/// Steady-state map of the benchmark plant with optimizer [3, 1].
inline double benchmark_truth(const Vector& theta) { return benchmark_plant().truth(theta); }

inline Vector benchmark_truth_grad(const Vector& theta) {
  return -kernel::grad1(KernelSpec::squared_exponential(5.0), theta, vec({3.0, 1.0}));
}

inline Vector uniform_vector(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

}  // namespace kbesc::testing

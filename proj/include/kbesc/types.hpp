#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace kbesc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Inputs closer than this (Euclidean) are treated as the same point when
/// assembling Gram/certificate matrices and when merging repeated samples.
inline constexpr double kDedupTol = 1e-9;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Measured data admit no function within the tube (contradictory repeated
/// measurements, or tubes that cannot be met inside the norm ball).
class DataInconsistency : public Error {
 public:
  using Error::Error;
};

/// The conic solver failed numerically; callers fall back to a standard step.
class CertificationUnavailable : public Error {
 public:
  using Error::Error;
};

class SimulationDivergence : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

inline void require_same_dim(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size() || a.size() == 0) {
    throw DimensionMismatch(std::string(what) + ": dimension mismatch (" + std::to_string(a.size()) +
                            " vs " + std::to_string(b.size()) + ")");
  }
}

}  // namespace kbesc

#pragma once

#include <kbesc/types.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace kbesc {

enum class KernelKind { SquaredExponential, RationalQuadratic };

/// Isotropic stationary kernel k(a, b) = phi(|a - b|^2). Every kind supplies
/// phi and its first two derivatives in closed form, which is all that is
/// needed for value, gradient and mixed second-derivative slices.
struct KernelSpec {
  KernelKind kind = KernelKind::SquaredExponential;
  double length_scale = 1.0;
  /// Shape parameter, rational-quadratic only.
  double rq_alpha = 1.0;

  static KernelSpec squared_exponential(double sigma) {
    KernelSpec k{KernelKind::SquaredExponential, sigma, 1.0};
    k.validate();
    return k;
  }
  static KernelSpec rational_quadratic(double sigma, double alpha) {
    KernelSpec k{KernelKind::RationalQuadratic, sigma, alpha};
    k.validate();
    return k;
  }

  void validate() const {
    if (!(length_scale > 0.0) || !std::isfinite(length_scale)) {
      throw Error("kernel length scale must be positive and finite");
    }
    if (kind == KernelKind::RationalQuadratic && !(rq_alpha > 0.0)) {
      throw Error("rational-quadratic alpha must be positive");
    }
  }

  struct Profile {
    double phi, d1, d2;
  };

  /// phi(s), phi'(s), phi''(s) at squared distance s.
  Profile profile(double s) const {
    const double l2 = length_scale * length_scale;
    switch (kind) {
      case KernelKind::SquaredExponential: {
        const double phi = std::exp(-s / (2.0 * l2));
        return {phi, -phi / (2.0 * l2), phi / (4.0 * l2 * l2)};
      }
      case KernelKind::RationalQuadratic: {
        const double u = 1.0 + s / (2.0 * rq_alpha * l2);
        const double phi = std::pow(u, -rq_alpha);
        return {phi, -phi / u / (2.0 * l2), (rq_alpha + 1.0) * phi / (u * u) / (4.0 * rq_alpha * l2 * l2)};
      }
    }
    throw Error("unknown kernel kind");
  }
};

inline std::string to_string(KernelKind k) {
  return k == KernelKind::SquaredExponential ? "squared_exponential" : "rational_quadratic";
}

inline std::optional<KernelKind> parse_kernel_kind(const std::string& s) {
  if (s == "squared_exponential" || s == "se") return KernelKind::SquaredExponential;
  if (s == "rational_quadratic" || s == "rq") return KernelKind::RationalQuadratic;
  return std::nullopt;
}

namespace kernel {

inline double eval(const KernelSpec& k, const Vector& a, const Vector& b) {
  require_same_dim(a, b, "kernel::eval");
  return k.profile((a - b).squaredNorm()).phi;
}

/// Gradient with respect to the first argument, D^(e_i,0) k(a, b).
inline Vector grad1(const KernelSpec& k, const Vector& a, const Vector& b) {
  require_same_dim(a, b, "kernel::grad1");
  const Vector d = a - b;
  return 2.0 * k.profile(d.squaredNorm()).d1 * d;
}

/// Gradient with respect to the second argument, D^(0,e_i) k(a, b).
inline Vector grad2(const KernelSpec& k, const Vector& a, const Vector& b) { return -grad1(k, a, b); }

/// (i, j) entry is D^(e_i,e_j) k(a, b): derivative in a_i and b_j.
inline Matrix cross_hessian(const KernelSpec& k, const Vector& a, const Vector& b) {
  require_same_dim(a, b, "kernel::cross_hessian");
  const Vector d = a - b;
  const auto p = k.profile(d.squaredNorm());
  Matrix h = -4.0 * p.d2 * (d * d.transpose());
  h.diagonal().array() -= 2.0 * p.d1;
  return h;
}

}  // namespace kernel

enum class SliceKind { Value, Derivative };
enum class SliceSource { Data, Theta, ThetaPlus };

/// Tags one row/column of a Gram block: either the value slice k(., z) at an
/// input z, or the derivative slice D^(0,e_j) k(., theta).
struct SliceLabel {
  SliceKind kind = SliceKind::Value;
  SliceSource source = SliceSource::Data;
  /// Data index for value slices of data inputs; coordinate j for derivative slices.
  std::size_t index = 0;

  friend bool operator==(const SliceLabel&, const SliceLabel&) = default;
};

struct GramBlock {
  Matrix matrix;
  /// Row and column labels coincide (the blocks are symmetric).
  std::vector<SliceLabel> labels;
  /// Value slices dropped because their input duplicates an earlier one.
  std::vector<SliceLabel> removed;
  /// For every value-slice input in generating order (data..., theta, theta+),
  /// the row that represents it after duplicate removal.
  std::vector<std::size_t> value_row;

  Eigen::Index size() const { return matrix.rows(); }

  std::size_t row_of_data(std::size_t i) const { return value_row.at(i); }
};

namespace detail {

struct ValueInput {
  const Vector* point;
  SliceSource source;
  std::size_t index;
};

/// Builds the Gram matrix of value slices at `inputs` (deduplicated in order)
/// followed by the derivative slices at `theta` when present.
inline GramBlock assemble(const KernelSpec& k, const std::vector<ValueInput>& inputs, const Vector* theta) {
  GramBlock out;
  std::vector<const Vector*> kept;
  out.value_row.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (!kept.empty()) require_same_dim(*in.point, *kept.front(), "assemble");
    std::optional<std::size_t> dup;
    for (std::size_t r = 0; r < kept.size(); ++r) {
      if ((*in.point - *kept[r]).norm() <= kDedupTol) {
        dup = r;
        break;
      }
    }
    if (dup) {
      out.value_row.push_back(*dup);
      out.removed.push_back({SliceKind::Value, in.source, in.index});
    } else {
      out.value_row.push_back(kept.size());
      kept.push_back(in.point);
      out.labels.push_back({SliceKind::Value, in.source, in.index});
    }
  }
  const auto nv = static_cast<Eigen::Index>(kept.size());
  const Eigen::Index nd = theta ? theta->size() : 0;
  if (theta && !kept.empty()) require_same_dim(*theta, *kept.front(), "assemble");

  out.matrix.resize(nv + nd, nv + nd);
  for (Eigen::Index i = 0; i < nv; ++i) {
    out.matrix(i, i) = kernel::eval(k, *kept[i], *kept[i]);
    for (Eigen::Index j = i + 1; j < nv; ++j) {
      out.matrix(i, j) = out.matrix(j, i) = kernel::eval(k, *kept[i], *kept[j]);
    }
  }
  if (theta) {
    for (Eigen::Index i = 0; i < nv; ++i) {
      // <D^(0,e_j) k(., theta), k(., p)> = D^(e_j,0) k(theta, p)
      const Vector g = kernel::grad1(k, *theta, *kept[i]);
      out.matrix.block(nv, i, nd, 1) = g;
      out.matrix.block(i, nv, 1, nd) = g.transpose();
    }
    out.matrix.bottomRightCorner(nd, nd) = kernel::cross_hessian(k, *theta, *theta);
    for (Eigen::Index j = 0; j < nd; ++j) {
      out.labels.push_back({SliceKind::Derivative, SliceSource::Theta, static_cast<std::size_t>(j)});
    }
  }
  return out;
}

}  // namespace detail

/// K_OmegaOmega without duplicate removal.
inline GramBlock assemble_gram(const KernelSpec& k, const std::vector<Vector>& omega) {
  if (omega.empty()) throw Error("assemble_gram: empty input set");
  GramBlock out;
  const auto n = static_cast<Eigen::Index>(omega.size());
  out.matrix.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    require_same_dim(omega[i], omega[0], "assemble_gram");
    for (Eigen::Index j = 0; j <= i; ++j) {
      out.matrix(i, j) = out.matrix(j, i) = kernel::eval(k, omega[i], omega[j]);
    }
    out.labels.push_back({SliceKind::Value, SliceSource::Data, static_cast<std::size_t>(i)});
    out.value_row.push_back(static_cast<std::size_t>(i));
  }
  return out;
}

/// [[K_OmegaOmega, dK_Omega(theta)^T], [dK_Omega(theta), D2_12 k(theta, theta)]]
inline GramBlock assemble_cert_matrix(const KernelSpec& k, const std::vector<Vector>& omega, const Vector& theta) {
  std::vector<detail::ValueInput> in;
  in.reserve(omega.size());
  for (std::size_t i = 0; i < omega.size(); ++i) in.push_back({&omega[i], SliceSource::Data, i});
  return detail::assemble(k, in, &theta);
}

/// Value slices at Omega, theta, theta+ followed by derivative slices at
/// theta; duplicated inputs keep only their first occurrence.
inline GramBlock assemble_cert_matrix_prime(const KernelSpec& k, const std::vector<Vector>& omega, const Vector& theta,
                                            const Vector& theta_plus) {
  std::vector<detail::ValueInput> in;
  in.reserve(omega.size() + 2);
  for (std::size_t i = 0; i < omega.size(); ++i) in.push_back({&omega[i], SliceSource::Data, i});
  in.push_back({&theta, SliceSource::Theta, 0});
  in.push_back({&theta_plus, SliceSource::ThetaPlus, 0});
  return detail::assemble(k, in, &theta);
}

}  // namespace kbesc

#pragma once

#include <kbesc/types.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace kbesc::conic {

enum class SolveStatus { Optimal, Infeasible, NumericFailure };

inline std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal:
      return "OPTIMAL";
    case SolveStatus::Infeasible:
      return "INFEASIBLE";
    case SolveStatus::NumericFailure:
      return "NUMERIC_FAILURE";
  }
  return "?";
}

/// Tolerances shared by the two public problem shapes.
inline constexpr int kMaxIter = 200;
inline constexpr double kFeasTol = 1e-8;
inline constexpr double kKktTol = 1e-7;
/// Eigenvalues of the (PSD) problem matrix below this fraction of the largest
/// one are raised to it before changing to whitened coordinates.
inline constexpr double kEigClip = 1e-10;

// ---------------------------------------------------------------------------
// Generic cone program
//
//   minimize c'x  subject to  G x + s = h,  A x = b,  s in K
//
// with K = R_+^orthant x Q^{soc[0]} x Q^{soc[1]} x ...
// ---------------------------------------------------------------------------

struct ConeDims {
  Eigen::Index orthant = 0;
  std::vector<Eigen::Index> soc;

  Eigen::Index total() const {
    Eigen::Index n = orthant;
    for (auto q : soc) n += q;
    return n;
  }
  Eigen::Index degree() const { return orthant + static_cast<Eigen::Index>(soc.size()); }
};

struct ConeProgram {
  Vector c;
  Matrix G;
  Vector h;
  Matrix A;  // may have zero rows
  Vector b;
  ConeDims dims;
};

struct IpmSettings {
  int max_iter = kMaxIter;
  double feastol = 1e-10;
  double abstol = 1e-10;
  double reltol = 1e-10;
  /// Accepted when the iteration stalls before reaching the targets above.
  double reduced_feastol = kFeasTol;
  double reduced_gaptol = 1e-8;
  double step_fraction = 0.99;
  int refine_steps = 10;
  double static_reg = 1e-8;
};

struct ConeSolution {
  SolveStatus status = SolveStatus::NumericFailure;
  Vector x, s, y, z;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double pres = 0.0;
  double dres = 0.0;
  double gap = 0.0;
  int iterations = 0;
};

namespace detail {

/// Jordan-algebra helpers over the product cone. Vectors are laid out as
/// [orthant | soc_0 | soc_1 | ...].
class Cone {
 public:
  explicit Cone(ConeDims dims) : dims_(std::move(dims)) {}

  const ConeDims& dims() const { return dims_; }

  Vector identity() const {
    Vector e = Vector::Zero(dims_.total());
    e.head(dims_.orthant).setOnes();
    Eigen::Index off = dims_.orthant;
    for (auto q : dims_.soc) {
      e(off) = 1.0;
      off += q;
    }
    return e;
  }

  /// Smallest "eigenvalue": min_i u_i on the orthant, u0 - |u1| on each SOC.
  double min_eig(const Vector& u) const {
    double m = std::numeric_limits<double>::infinity();
    if (dims_.orthant > 0) m = u.head(dims_.orthant).minCoeff();
    Eigen::Index off = dims_.orthant;
    for (auto q : dims_.soc) {
      m = std::min(m, u(off) - u.segment(off + 1, q - 1).norm());
      off += q;
    }
    return m;
  }

  Vector product(const Vector& u, const Vector& v) const {
    Vector r(u.size());
    const auto l = dims_.orthant;
    r.head(l) = u.head(l).cwiseProduct(v.head(l));
    Eigen::Index off = l;
    for (auto q : dims_.soc) {
      r(off) = u.segment(off, q).dot(v.segment(off, q));
      r.segment(off + 1, q - 1) = u(off) * v.segment(off + 1, q - 1) + v(off) * u.segment(off + 1, q - 1);
      off += q;
    }
    return r;
  }

  /// Solves lambda o x = r for x.
  Vector inverse_product(const Vector& lambda, const Vector& r) const {
    Vector x(r.size());
    const auto l = dims_.orthant;
    x.head(l) = r.head(l).cwiseQuotient(lambda.head(l));
    Eigen::Index off = l;
    for (auto q : dims_.soc) {
      const double l0 = lambda(off);
      const auto l1 = lambda.segment(off + 1, q - 1);
      const double det = l0 * l0 - l1.squaredNorm();
      const double x0 = (l0 * r(off) - l1.dot(r.segment(off + 1, q - 1))) / det;
      x(off) = x0;
      x.segment(off + 1, q - 1) = (r.segment(off + 1, q - 1) - x0 * l1) / l0;
      off += q;
    }
    return x;
  }

  /// Largest alpha with u + alpha d in the cone (u interior); +inf if unbounded.
  double max_step(const Vector& u, const Vector& d) const {
    double a = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < dims_.orthant; ++i) {
      if (d(i) < 0.0) a = std::min(a, -u(i) / d(i));
    }
    Eigen::Index off = dims_.orthant;
    for (auto q : dims_.soc) {
      const double u0 = u(off), d0 = d(off);
      const auto u1 = u.segment(off + 1, q - 1);
      const auto d1 = d.segment(off + 1, q - 1);
      // f(t) = (u0 + t d0)^2 - |u1 + t d1|^2 = qa t^2 + qb t + qc, qc > 0
      const double qa = d0 * d0 - d1.squaredNorm();
      const double qb = 2.0 * (u0 * d0 - u1.dot(d1));
      const double qc = u0 * u0 - u1.squaredNorm();
      double root = std::numeric_limits<double>::infinity();
      const double disc = qb * qb - 4.0 * qa * qc;
      if (qa == 0.0) {
        if (qb < 0.0) root = -qc / qb;
      } else if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        const double qq = -0.5 * (qb + (qb >= 0.0 ? sq : -sq));
        for (double t : {qq / qa, qq != 0.0 ? qc / qq : std::numeric_limits<double>::infinity()}) {
          if (t > 0.0) root = std::min(root, t);
        }
      }
      // The branch where u0 + t d0 turns negative is crossed only after f hits zero.
      if (d0 < 0.0) root = std::min(root, -u0 / d0);
      a = std::min(a, root);
      off += q;
    }
    return a;
  }

 private:
  ConeDims dims_;
};

/// Nesterov-Todd scaling W (symmetric, block diagonal) with W z = W^{-1} s = lambda.
struct NtScaling {
  Vector orth_d;  // sqrt(s / z)
  struct Soc {
    double beta;
    Vector w;  // normalized scaling point, w0^2 - |w1|^2 = 1
  };
  std::vector<Soc> soc;
  Vector lambda;

  static NtScaling compute(const Cone& cone, const Vector& s, const Vector& z) {
    NtScaling W;
    const auto& dims = cone.dims();
    const auto l = dims.orthant;
    W.orth_d = (s.head(l).cwiseQuotient(z.head(l))).cwiseSqrt();
    W.lambda.resize(s.size());
    W.lambda.head(l) = (s.head(l).cwiseProduct(z.head(l))).cwiseSqrt();
    Eigen::Index off = l;
    for (auto q : dims.soc) {
      const Vector ss = s.segment(off, q);
      const Vector zz = z.segment(off, q);
      const double sn = std::sqrt(std::max(ss(0) * ss(0) - ss.tail(q - 1).squaredNorm(), 0.0));
      const double zn = std::sqrt(std::max(zz(0) * zz(0) - zz.tail(q - 1).squaredNorm(), 0.0));
      const Vector sb = ss / sn;
      const Vector zb = zz / zn;
      const double gamma = std::sqrt(0.5 * (1.0 + sb.dot(zb)));
      Vector w(q);
      w(0) = (sb(0) + zb(0)) / (2.0 * gamma);
      w.tail(q - 1) = (sb.tail(q - 1) - zb.tail(q - 1)) / (2.0 * gamma);
      Soc blk{std::sqrt(sn / zn), w};
      W.soc.push_back(blk);
      W.lambda.segment(off, q) = apply_soc(blk, zz, false);
      off += q;
    }
    return W;
  }

  static Vector apply_soc(const Soc& b, const Vector& u, bool inverse) {
    const auto q = u.size();
    const double w0 = b.w(0);
    const auto w1 = b.w.tail(q - 1);
    const double sign = inverse ? -1.0 : 1.0;
    const double w1u1 = w1.dot(u.tail(q - 1));
    Vector r(q);
    r(0) = w0 * u(0) + sign * w1u1;
    r.tail(q - 1) = sign * u(0) * w1 + u.tail(q - 1) + (w1u1 / (1.0 + w0)) * w1;
    return inverse ? Vector(r / b.beta) : Vector(r * b.beta);
  }

  Vector apply(const Cone& cone, const Vector& u, bool inverse) const {
    Vector r(u.size());
    const auto l = cone.dims().orthant;
    if (inverse) {
      r.head(l) = u.head(l).cwiseQuotient(orth_d);
    } else {
      r.head(l) = u.head(l).cwiseProduct(orth_d);
    }
    Eigen::Index off = l;
    for (std::size_t k = 0; k < soc.size(); ++k) {
      const auto q = cone.dims().soc[k];
      r.segment(off, q) = apply_soc(soc[k], u.segment(off, q), inverse);
      off += q;
    }
    return r;
  }

};

/// Solves  [0 A' G'; A 0 0; G 0 -W^2] [dx; dy; dz] = [r1; r2; r3]
/// by LU on the statically regularized system plus iterative refinement
/// against the unregularized one.
class KktSolver {
 public:
  KktSolver(const ConeProgram& p, const Cone& cone, const NtScaling& W, double reg, int refine)
      : p_(p), cone_(cone), W_(W), refine_(refine) {
    const auto n = p.G.cols();
    const auto m = p.A.rows();
    const auto k = p.G.rows();
    Matrix K = Matrix::Zero(n + m + k, n + m + k);
    K.topLeftCorner(n, n).diagonal().setConstant(reg);
    K.block(0, n, n, m) = p.A.transpose();
    K.block(n, 0, m, n) = p.A;
    K.block(n, n, m, m).diagonal().setConstant(-reg);
    K.block(0, n + m, n, k) = p.G.transpose();
    K.block(n + m, 0, k, n) = p.G;
    for (Eigen::Index j = 0; j < k; ++j) {
      const Vector ej = Vector::Unit(k, j);
      K.block(n + m, n + m + j, k, 1) = -W.apply(cone, W.apply(cone, ej, false), false);
    }
    K.bottomRightCorner(k, k).diagonal().array() -= reg;
    lu_.compute(K);
  }

  void solve(const Vector& r1, const Vector& r2, const Vector& r3, Vector& dx, Vector& dy, Vector& dz) const {
    const auto n = p_.G.cols();
    const auto m = p_.A.rows();
    const auto k = p_.G.rows();
    Vector rhs(n + m + k);
    rhs << r1, r2, r3;
    Vector sol = lu_.solve(rhs);
    for (int it = 0; it < refine_; ++it) {
      const auto x = sol.head(n);
      const auto y = sol.segment(n, m);
      const Vector z = sol.tail(k);
      Vector err(n + m + k);
      err << r1 - p_.A.transpose() * y - p_.G.transpose() * z, r2 - p_.A * x,
          r3 - (p_.G * x - W_.apply(cone_, W_.apply(cone_, z, false), false));
      if (!(err.lpNorm<Eigen::Infinity>() > 1e-14 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>()))) break;
      sol += lu_.solve(err);
    }
    dx = sol.head(n);
    dy = sol.segment(n, m);
    dz = sol.tail(k);
  }

 private:
  const ConeProgram& p_;
  const Cone& cone_;
  const NtScaling& W_;
  int refine_;
  Eigen::PartialPivLU<Matrix> lu_;
};

}  // namespace detail

/// Primal-dual interior-point method on the homogeneous self-dual embedding
/// with Nesterov-Todd scaling and Mehrotra predictor-corrector steps.
inline ConeSolution solve_cone_program(const ConeProgram& p, const IpmSettings& set = {}) {
  using detail::Cone;
  using detail::KktSolver;
  using detail::NtScaling;

  const auto n = p.G.cols();
  const auto mA = p.A.rows();
  const auto mG = p.G.rows();
  if (p.c.size() != n || p.h.size() != mG || p.dims.total() != mG || (mA > 0 && p.A.cols() != n) ||
      p.b.size() != mA) {
    throw DimensionMismatch("cone program: inconsistent dimensions");
  }
  const Cone cone(p.dims);
  const Vector e = cone.identity();
  const double deg = static_cast<double>(p.dims.degree());

  const double resx0 = std::max(1.0, p.c.norm());
  const double resy0 = std::max(1.0, p.b.size() ? p.b.norm() : 0.0);
  const double resz0 = std::max(1.0, p.h.norm());

  ConeSolution out;

  // Starting point: least-squares primal and dual estimates with W = I.
  Vector x, y, z, s;
  {
    NtScaling I;
    I.orth_d = Vector::Ones(p.dims.orthant);
    for (auto q : p.dims.soc) {
      Vector w = Vector::Zero(q);
      w(0) = 1.0;
      I.soc.push_back({1.0, w});
    }
    const KktSolver kkt(p, cone, I, set.static_reg, set.refine_steps);
    Vector dz;
    kkt.solve(Vector::Zero(n), p.b, p.h, x, y, dz);
    s = -dz;
    Vector dx;
    kkt.solve(-p.c, Vector::Zero(mA), Vector::Zero(mG), dx, y, z);
    const double ts = -cone.min_eig(s);
    if (ts >= 0.0) s += (1.0 + ts) * e;
    const double tz = -cone.min_eig(z);
    if (tz >= 0.0) z += (1.0 + tz) * e;
  }
  double tau = 1.0, kappa = 1.0;

  struct Best {
    bool valid = false;
    double merit = std::numeric_limits<double>::infinity();
    Vector x, s, y, z;
    double pcost = 0, dcost = 0, pres = 0, dres = 0, gap = 0;
  } best;

  auto finish_optimal = [&](const Vector& xv, const Vector& sv, const Vector& yv, const Vector& zv, double pc, double dc,
                            double pr, double dr, double g, int it) {
    out.status = SolveStatus::Optimal;
    out.x = xv;
    out.s = sv;
    out.y = yv;
    out.z = zv;
    out.primal_objective = pc;
    out.dual_objective = dc;
    out.pres = pr;
    out.dres = dr;
    out.gap = g;
    out.iterations = it;
  };

  for (int iter = 0; iter <= set.max_iter; ++iter) {
    const Vector hrx = -p.A.transpose() * y - p.G.transpose() * z;
    const Vector rx = hrx - p.c * tau;
    const Vector hry = p.A * x;
    const Vector ry = hry - p.b * tau;
    const Vector hrz = s + p.G * x;
    const Vector rz = hrz - p.h * tau;
    const double cx = p.c.dot(x), by = p.b.dot(y), hz = p.h.dot(z);
    const double rt = kappa + cx + by + hz;

    const double gap_raw = s.dot(z);
    const double pcost = cx / tau;
    const double dcost = -(by + hz) / tau;
    const double gap = gap_raw / (tau * tau);
    double relgap = std::numeric_limits<double>::infinity();
    if (pcost < 0.0) relgap = gap / -pcost;
    else if (dcost > 0.0) relgap = gap / dcost;
    const double pres = std::max(ry.size() ? ry.norm() / resy0 : 0.0, rz.norm() / resz0) / tau;
    const double dres = rx.norm() / resx0 / tau;

    if (!std::isfinite(pres) || !std::isfinite(dres) || !std::isfinite(gap)) break;

    const bool optimal = pres <= set.feastol && dres <= set.feastol && (gap <= set.abstol || relgap <= set.reltol);
    if (optimal) {
      finish_optimal(x / tau, s / tau, y / tau, z / tau, pcost, dcost, pres, dres, gap, iter);
      return out;
    }
    // Primal infeasibility certificate: A'y + G'z = 0, z in K, h'z + b'y < 0.
    if (hz + by < 0.0) {
      const double pinf = hrx.norm() / resx0 / -(hz + by);
      if (pinf <= set.feastol) {
        out.status = SolveStatus::Infeasible;
        out.y = y / -(hz + by);
        out.z = z / -(hz + by);
        out.iterations = iter;
        return out;
      }
    }

    {
      const double merit = std::max({pres, dres, std::min(gap, std::isfinite(relgap) ? relgap : gap)});
      if (merit < best.merit) {
        best = {true, merit, x / tau, s / tau, y / tau, z / tau, pcost, dcost, pres, dres, gap};
      }
    }
    if (iter == set.max_iter) break;

    const NtScaling W = NtScaling::compute(cone, s, z);
    const Vector& lam = W.lambda;
    const double mu = (gap_raw + tau * kappa) / (deg + 1.0);

    const KktSolver kkt(p, cone, W, set.static_reg, set.refine_steps);

    Vector x1, y1, z1;
    kkt.solve(-p.c, p.b, p.h, x1, y1, z1);
    const double den = p.c.dot(x1) + p.b.dot(y1) + p.h.dot(z1) - kappa / tau;

    struct Dir {
      Vector dx, dy, dz, ds;
      double dtau, dkappa;
    };
    auto direction = [&](double sigma, const Vector& rs, double rk) {
      const double f = 1.0 - sigma;
      Dir d;
      const Vector u = cone.inverse_product(lam, rs);
      const Vector Wu = W.apply(cone, u, false);
      Vector x2, y2, z2;
      kkt.solve(f * rx, -f * ry, -f * rz - Wu, x2, y2, z2);
      const double etau = -f * rt;
      d.dtau = (etau - rk / tau - (p.c.dot(x2) + p.b.dot(y2) + p.h.dot(z2))) / den;
      d.dx = x2 + d.dtau * x1;
      d.dy = y2 + d.dtau * y1;
      d.dz = z2 + d.dtau * z1;
      d.ds = W.apply(cone, u - W.apply(cone, d.dz, false), false);
      d.dkappa = (rk - kappa * d.dtau) / tau;
      return d;
    };
    auto step_to_boundary = [&](const Dir& d) {
      double a = std::min(cone.max_step(s, d.ds), cone.max_step(z, d.dz));
      if (d.dtau < 0.0) a = std::min(a, -tau / d.dtau);
      if (d.dkappa < 0.0) a = std::min(a, -kappa / d.dkappa);
      return a;
    };

    const Vector lamlam = cone.product(lam, lam);
    const Dir aff = direction(0.0, -lamlam, -tau * kappa);
    const double a_aff = std::min(1.0, step_to_boundary(aff));
    const double sigma = std::clamp(std::pow(1.0 - a_aff, 3), 1e-8, 1.0);

    const Vector ds_s = W.apply(cone, aff.ds, true);
    const Vector dz_s = W.apply(cone, aff.dz, false);
    const Vector rs = -lamlam - cone.product(ds_s, dz_s) + sigma * mu * e;
    const double rk = -tau * kappa - aff.dtau * aff.dkappa + sigma * mu;
    const Dir d = direction(sigma, rs, rk);

    const double amax = step_to_boundary(d);
    const double alpha = set.step_fraction * std::min(1.0, amax);
    if (!(alpha > 1e-14)) break;

    x += alpha * d.dx;
    y += alpha * d.dy;
    z += alpha * d.dz;
    s += alpha * d.ds;
    tau += alpha * d.dtau;
    kappa += alpha * d.dkappa;
    out.iterations = iter + 1;

    if (!(tau > 0.0) || !(kappa > 0.0) || !x.allFinite() || !z.allFinite() || !s.allFinite()) break;
  }

  if (best.valid && best.pres <= set.reduced_feastol && best.dres <= set.reduced_feastol &&
      (best.gap <= set.reduced_gaptol ||
       best.gap <= set.reduced_gaptol * std::max(std::abs(best.pcost), std::abs(best.dcost)))) {
    finish_optimal(best.x, best.s, best.y, best.z, best.pcost, best.dcost, best.pres, best.dres, best.gap,
                   out.iterations);
    return out;
  }
  out.status = SolveStatus::NumericFailure;
  return out;
}

// ---------------------------------------------------------------------------
// Problem shapes used by the approximator and the certifier
// ---------------------------------------------------------------------------

/// |a' x - target| <= half_width
struct TubeRow {
  Vector a;
  double target = 0.0;
  double half_width = 0.0;
};

/// minimize x' P x  subject to  |a_i' x - y_i| <= d_i
struct QpProblem {
  Matrix P;
  std::vector<TubeRow> constraints;
};

/// |xi_i' M beta - target| <= half_width, i.e. a tube on entry `index` of M beta.
struct SelectorTube {
  std::size_t index = 0;
  double target = 0.0;
  double half_width = 0.0;
};

enum class Sense { Min, Max };

/// optimize q' beta  subject to  beta' M beta <= radius^2  and selector tubes.
struct BallLpProblem {
  Matrix M;
  Vector q;
  double radius = 1.0;
  std::vector<SelectorTube> constraints;
  Sense sense = Sense::Min;
};

struct SolveResult {
  SolveStatus status = SolveStatus::NumericFailure;
  double objective = 0.0;
  Vector solution;
  /// max(primal, dual) scaled residual of the final interior-point iterate.
  double kkt_residual = 0.0;
  /// Largest constraint violation of `solution` in the original coordinates.
  double max_violation = 0.0;
  int iterations = 0;
};

namespace detail {

inline void check_symmetric(const Matrix& M, const char* what) {
  if (M.rows() != M.cols()) throw DimensionMismatch(std::string(what) + ": matrix is not square");
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(std::string(what) + ": matrix is not symmetric");
  }
}

/// M = V diag(lam) V' with a clipped copy lam_c >= kEigClip * lam_max used for
/// the whitening beta = V diag(lam_c^{-1/2}) w.
struct Whitening {
  Matrix V;
  Vector lam;
  Vector lam_c;

  explicit Whitening(const Matrix& M) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()));
    V = es.eigenvectors();
    lam = es.eigenvalues();
    const double lmax = lam.size() ? std::max(lam.maxCoeff(), 0.0) : 0.0;
    const double floor = lmax > 0.0 ? kEigClip * lmax : 1.0;
    lam_c = lam.cwiseMax(floor);
  }

  /// Maps whitened coordinates back: beta = V diag(lam_c^{-1/2}) w.
  Vector unwhiten(const Vector& w) const { return V * w.cwiseQuotient(lam_c.cwiseSqrt()); }
  /// Row-vector functional a' beta expressed on w.
  Vector pull_back(const Vector& a) const { return (V.transpose() * a).cwiseQuotient(lam_c.cwiseSqrt()); }
};

inline void add_tubes(ConeProgram& p, const std::vector<Vector>& rows, const std::vector<double>& targets,
                      const std::vector<double>& widths, Eigen::Index offset, Eigen::Index nvar) {
  std::vector<std::size_t> ineq, eq;
  for (std::size_t i = 0; i < rows.size(); ++i) (widths[i] > 0.0 ? ineq : eq).push_back(i);
  const auto ni = static_cast<Eigen::Index>(ineq.size());
  const auto ne = static_cast<Eigen::Index>(eq.size());
  p.A = Matrix::Zero(ne, nvar);
  p.b = Vector::Zero(ne);
  for (Eigen::Index k = 0; k < ne; ++k) {
    p.A.block(k, offset, 1, rows[eq[k]].size()) = rows[eq[k]].transpose();
    p.b(k) = targets[eq[k]];
  }
  // Orthant rows come first in G: +a'x <= y + d, -a'x <= -(y - d).
  p.G.topRows(2 * ni).setZero();
  for (Eigen::Index k = 0; k < ni; ++k) {
    const auto i = ineq[k];
    p.G.block(2 * k, offset, 1, rows[i].size()) = rows[i].transpose();
    p.G.block(2 * k + 1, offset, 1, rows[i].size()) = -rows[i].transpose();
    p.h(2 * k) = targets[i] + widths[i];
    p.h(2 * k + 1) = -(targets[i] - widths[i]);
  }
  p.dims.orthant = 2 * ni;
}

inline double qp_violation(const QpProblem& prob, const Vector& x) {
  double v = 0.0;
  for (const auto& c : prob.constraints) v = std::max(v, std::abs(c.a.dot(x) - c.target) - c.half_width);
  return v;
}

/// Equality-constrained minimizer of x'Px on the constraints the interior-point
/// solution reports as active (dual larger than slack).
inline std::optional<Vector> polish_qp(const QpProblem& prob, const ConeSolution& sol) {
  const auto N = prob.P.rows();
  std::vector<const Vector*> rows;
  std::vector<double> values;
  Eigen::Index k = 0;
  for (const auto& c : prob.constraints) {
    if (c.half_width > 0.0) {
      if (sol.z(2 * k) > sol.s(2 * k)) {
        rows.push_back(&c.a);
        values.push_back(c.target + c.half_width);
      } else if (sol.z(2 * k + 1) > sol.s(2 * k + 1)) {
        rows.push_back(&c.a);
        values.push_back(c.target - c.half_width);
      }
      ++k;
    } else {
      rows.push_back(&c.a);
      values.push_back(c.target);
    }
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  if (m == 0) return Vector::Zero(N);
  Matrix K = Matrix::Zero(N + m, N + m);
  K.topLeftCorner(N, N) = 2.0 * prob.P;
  Vector rhs = Vector::Zero(N + m);
  for (Eigen::Index i = 0; i < m; ++i) {
    K.block(N + i, 0, 1, N) = rows[i]->transpose();
    K.block(0, N + i, N, 1) = *rows[i];
    rhs(N + i) = values[i];
  }
  const Vector x = K.completeOrthogonalDecomposition().solve(rhs).head(N);
  if (!x.allFinite()) return std::nullopt;
  return x;
}

inline Eigen::Index count_inequalities(const std::vector<double>& widths) {
  return static_cast<Eigen::Index>(std::count_if(widths.begin(), widths.end(), [](double w) { return w > 0.0; }));
}

}  // namespace detail

inline SolveResult solve_qp(const QpProblem& prob, const IpmSettings& set = {}) {
  detail::check_symmetric(prob.P, "solve_qp");
  const auto N = prob.P.rows();
  for (const auto& c : prob.constraints) {
    if (c.a.size() != N) throw DimensionMismatch("solve_qp: constraint row has wrong dimension");
    if (!(c.half_width >= 0.0)) throw Error("solve_qp: negative tube half-width");
  }
  SolveResult res;
  if (N == 0) {
    res.status = SolveStatus::Optimal;
    res.solution = Vector();
    return res;
  }
  const detail::Whitening wh(prob.P);

  // Variables (t, w): minimize t subject to |w| <= t and the tubes on w.
  std::vector<Vector> rows;
  std::vector<double> targets, widths;
  for (const auto& c : prob.constraints) {
    rows.push_back(wh.pull_back(c.a));
    targets.push_back(c.target);
    widths.push_back(c.half_width);
  }
  const Eigen::Index nvar = N + 1;
  const Eigen::Index ni = detail::count_inequalities(widths);
  ConeProgram cp;
  cp.c = Vector::Zero(nvar);
  cp.c(0) = 1.0;
  cp.G = Matrix::Zero(2 * ni + nvar, nvar);
  cp.h = Vector::Zero(2 * ni + nvar);
  detail::add_tubes(cp, rows, targets, widths, 1, nvar);
  cp.G.bottomRows(nvar) = -Matrix::Identity(nvar, nvar);
  cp.dims.soc = {nvar};

  const ConeSolution sol = solve_cone_program(cp, set);
  res.status = sol.status;
  res.iterations = sol.iterations;
  if (sol.status != SolveStatus::Optimal) return res;
  res.solution = wh.unwhiten(sol.x.tail(N));
  res.objective = res.solution.dot(prob.P * res.solution);
  res.kkt_residual = std::max(sol.pres, sol.dres);
  res.max_violation = detail::qp_violation(prob, res.solution);

  // Interior-point iterates pin directions that no constraint touches only to
  // about sqrt(gap); re-solve on the detected active set and keep the result
  // if it is feasible and not worse beyond solver tolerance.
  if (auto polished = detail::polish_qp(prob, sol)) {
    const double obj = polished->dot(prob.P * *polished);
    const double viol = detail::qp_violation(prob, *polished);
    if (viol <= std::max(res.max_violation, 1e-12) && obj <= res.objective + kFeasTol * std::max(1.0, res.objective)) {
      res.solution = *polished;
      res.objective = obj;
      res.max_violation = viol;
    }
  }
  if (res.max_violation > kFeasTol || res.kkt_residual > kKktTol) res.status = SolveStatus::NumericFailure;
  return res;
}

inline SolveResult solve_ball_lp(const BallLpProblem& prob, const IpmSettings& set = {}) {
  detail::check_symmetric(prob.M, "solve_ball_lp");
  const auto N = prob.M.rows();
  if (prob.q.size() != N) throw DimensionMismatch("solve_ball_lp: objective has wrong dimension");
  if (!(prob.radius > 0.0)) throw Error("solve_ball_lp: radius must be positive");
  for (const auto& c : prob.constraints) {
    if (c.index >= static_cast<std::size_t>(N)) throw DimensionMismatch("solve_ball_lp: selector out of range");
    if (!(c.half_width >= 0.0)) throw Error("solve_ball_lp: negative tube half-width");
  }
  const detail::Whitening wh(prob.M);
  // Rows of M V diag(lam_c^{-1/2}) = V diag(lam / sqrt(lam_c)).
  const Matrix B = wh.V * (wh.lam.cwiseQuotient(wh.lam_c.cwiseSqrt())).asDiagonal();

  std::vector<Vector> rows;
  std::vector<double> targets, widths;
  for (const auto& c : prob.constraints) {
    rows.push_back(B.row(static_cast<Eigen::Index>(c.index)).transpose());
    targets.push_back(c.target);
    widths.push_back(c.half_width);
  }
  const double sgn = prob.sense == Sense::Min ? 1.0 : -1.0;
  const Eigen::Index ni = detail::count_inequalities(widths);
  ConeProgram cp;
  cp.c = sgn * wh.pull_back(prob.q);
  cp.G = Matrix::Zero(2 * ni + N + 1, N);
  cp.h = Vector::Zero(2 * ni + N + 1);
  detail::add_tubes(cp, rows, targets, widths, 0, N);
  // (radius, w) in Q
  cp.h(2 * ni) = prob.radius;
  cp.G.bottomRows(N) = -Matrix::Identity(N, N);
  cp.dims.soc = {N + 1};

  const ConeSolution sol = solve_cone_program(cp, set);
  SolveResult res;
  res.status = sol.status;
  res.iterations = sol.iterations;
  if (sol.status != SolveStatus::Optimal) return res;
  res.solution = wh.unwhiten(sol.x);
  res.objective = prob.q.dot(res.solution);
  res.kkt_residual = std::max(sol.pres, sol.dres);
  const Vector Mb = prob.M * res.solution;
  for (const auto& c : prob.constraints) {
    res.max_violation =
        std::max(res.max_violation, std::abs(Mb(static_cast<Eigen::Index>(c.index)) - c.target) - c.half_width);
  }
  res.max_violation = std::max({res.max_violation, sol.x.norm() - prob.radius, 0.0});
  if (res.max_violation > kFeasTol || res.kkt_residual > kKktTol) res.status = SolveStatus::NumericFailure;
  return res;
}

}  // namespace kbesc::conic

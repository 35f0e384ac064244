#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "errors.hpp"

namespace tclcoord {

using ColSparse = Eigen::SparseMatrix<double, Eigen::ColMajor>;

/**
 * @brief Convex QP  min 1/2 |F x|^2 + q'x  s.t.  l <= A x <= u.
 *
 * The Hessian is kept in factor form F'F so that rank-deficient least-squares
 * objectives stay sparse inside the KKT system.
 */
struct QpProblem
{
  ColSparse F;
  Eigen::VectorXd q;
  ColSparse A;
  Eigen::VectorXd l;
  Eigen::VectorXd u;

  int num_variables() const { return static_cast<int>(A.cols()); }
  int num_constraints() const { return static_cast<int>(A.rows()); }
  double objective(const Eigen::VectorXd & x) const
  {
    return 0.5 * (F * x).squaredNorm() + q.dot(x);
  }
};

struct AdmmSettings
{
  double rho{0.1};               ///< initial step size
  double rho_eq_scale{1e3};      ///< rho multiplier on equality rows
  double sigma{1e-6};            ///< primal regularization
  double alpha{1.6};             ///< over-relaxation
  double eps_abs{1e-6};
  double eps_rel{1e-6};
  int max_iter{200000};
  int scaling_iter{10};          ///< Ruiz equilibration passes
  int check_every{25};           ///< iterations between residual checks
  bool adaptive_rho{true};
  double adaptive_rho_tolerance{2.0};
  int adaptive_rho_interval{50}; ///< minimum iterations between refactorizations
  std::function<void(int, double, double, double)> progress;  ///< (iter, prim, dual, rho)
};

struct AdmmResult
{
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd z;
  int iterations{0};
  int factorizations{0};
  double prim_res{0};
  double dual_res{0};
  double objective{0};
  double seconds{0};
  bool converged{false};
};

/// Iteration cap reached; carries the last iterate.
class SolverMaxIterations : public Error
{
public:
  SolverMaxIterations(const std::string & what, AdmmResult best) : Error(what), best_(std::move(best)) {}
  const AdmmResult & best() const noexcept { return best_; }

private:
  AdmmResult best_;
};

/// Same problem with variables reordered: new variable i is old variable perm[i].
inline QpProblem permute_variables(const QpProblem & qp, const std::vector<int> & perm)
{
  const int n = qp.num_variables();
  if (static_cast<int>(perm.size()) != n) { throw DimensionMismatch("permutation length"); }
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> Pm(n);
  // column perm[i] of the old matrix becomes column i
  for (int i = 0; i < n; ++i) { Pm.indices()[perm[i]] = i; }
  QpProblem out;
  out.F = qp.F * Pm.transpose();
  out.A = qp.A * Pm.transpose();
  out.q.resize(n);
  for (int i = 0; i < n; ++i) { out.q(i) = qp.q(perm[i]); }
  out.l = qp.l;
  out.u = qp.u;
  return out;
}

namespace detail {

inline double inf_norm(const Eigen::VectorXd & v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

inline Eigen::VectorXd col_inf_norms(const ColSparse & M)
{
  Eigen::VectorXd out = Eigen::VectorXd::Zero(M.cols());
  for (int j = 0; j < M.outerSize(); ++j) {
    for (ColSparse::InnerIterator it(M, j); it; ++it) { out(j) = std::max(out(j), std::abs(it.value())); }
  }
  return out;
}

inline Eigen::VectorXd row_inf_norms(const ColSparse & M)
{
  Eigen::VectorXd out = Eigen::VectorXd::Zero(M.rows());
  for (int j = 0; j < M.outerSize(); ++j) {
    for (ColSparse::InnerIterator it(M, j); it; ++it) {
      out(it.row()) = std::max(out(it.row()), std::abs(it.value()));
    }
  }
  return out;
}

inline Eigen::VectorXd safe_inverse_sqrt(const Eigen::VectorXd & v)
{
  Eigen::VectorXd out(v.size());
  for (int i = 0; i < v.size(); ++i) {
    const double s = std::clamp(v(i), 1e-4, 1e4);
    out(i) = 1.0 / std::sqrt(v(i) == 0 ? 1.0 : s);
  }
  return out;
}

}  // namespace detail

/**
 * @brief ADMM (OSQP iteration) for QpProblem.
 *
 * Ruiz equilibration is computed once. The KKT system
 * [sigma I, F', A'; F, -I, 0; A, 0, -1/rho] is factored with a sparse LDL'
 * and refactored only when rho is adapted.
 */
class AdmmSolver
{
public:
  explicit AdmmSolver(AdmmSettings settings = {}) : s_(std::move(settings)) {}

  AdmmResult solve(const QpProblem & qp) const
  {
    const auto t0 = std::chrono::steady_clock::now();
    const int n = qp.num_variables();
    const int m = qp.num_constraints();
    const int nf = static_cast<int>(qp.F.rows());
    if (qp.F.cols() != n || qp.q.size() != n || qp.l.size() != m || qp.u.size() != m) {
      throw DimensionMismatch("qp: inconsistent dimensions");
    }

    // Ruiz equilibration of [P A'; A 0] with P = F'F
    Eigen::VectorXd D = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd E = Eigen::VectorXd::Ones(m);
    ColSparse P = ColSparse(qp.F.transpose() * qp.F);
    ColSparse Ps = P;
    ColSparse As = qp.A;
    for (int it = 0; it < s_.scaling_iter; ++it) {
      const Eigen::VectorXd dcol =
          detail::safe_inverse_sqrt(detail::col_inf_norms(Ps).cwiseMax(detail::col_inf_norms(As)));
      const Eigen::VectorXd erow = detail::safe_inverse_sqrt(detail::row_inf_norms(As));
      Ps = dcol.asDiagonal() * Ps * dcol.asDiagonal();
      As = erow.asDiagonal() * As * dcol.asDiagonal();
      D = D.cwiseProduct(dcol);
      E = E.cwiseProduct(erow);
    }
    Eigen::VectorXd qs = D.cwiseProduct(qp.q);
    const double pnorm = detail::col_inf_norms(Ps).mean();
    const double c = 1.0 / std::clamp(std::max(pnorm, detail::inf_norm(qs)), 1e-4, 1e4);
    qs *= c;
    const ColSparse Fs = std::sqrt(c) * (qp.F * D.asDiagonal());
    const ColSparse Ps_c = c * Ps;
    const ColSparse AsT = As.transpose();

    Eigen::VectorXd ls(m), us(m);
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      ls(i) = std::isfinite(qp.l(i)) ? E(i) * qp.l(i) : -inf;
      us(i) = std::isfinite(qp.u(i)) ? E(i) * qp.u(i) : inf;
    }

    double rho = s_.rho;
    Eigen::VectorXd rho_vec(m);
    const auto set_rho = [&](double r) {
      rho = std::clamp(r, 1e-6, 1e6);
      for (int i = 0; i < m; ++i) {
        if (!std::isfinite(ls(i)) && !std::isfinite(us(i))) {
          rho_vec(i) = 1e-6;
        } else if (qp.l(i) == qp.u(i)) {
          rho_vec(i) = rho * s_.rho_eq_scale;
        } else {
          rho_vec(i) = rho;
        }
      }
    };
    set_rho(rho);

    // Rows with a single coefficient (bounds) are folded into the x block as
    // a diagonal term; the rest enter the KKT matrix explicitly.
    std::vector<int> row_nnz(m, 0), row_col(m, -1);
    std::vector<double> row_val(m, 0.0);
    for (int j = 0; j < As.outerSize(); ++j) {
      for (ColSparse::InnerIterator it(As, j); it; ++it) {
        ++row_nnz[it.row()];
        row_col[it.row()] = j;
        row_val[it.row()] = it.value();
      }
    }
    std::vector<int> kkt_row(m, -1), folded;
    int mk = 0;
    for (int i = 0; i < m; ++i) {
      if (row_nnz[i] == 1) {
        folded.push_back(i);
      } else {
        kkt_row[i] = mk++;
      }
    }

    const int dim = n + nf + mk;
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(n + nf + mk + Fs.nonZeros() + As.nonZeros());
    for (int j = 0; j < n; ++j) { t.emplace_back(j, j, s_.sigma); }
    for (int r = 0; r < nf; ++r) { t.emplace_back(n + r, n + r, -1.0); }
    for (int i = 0; i < m; ++i) {
      if (kkt_row[i] >= 0) { t.emplace_back(n + nf + kkt_row[i], n + nf + kkt_row[i], -1.0); }
    }
    for (int j = 0; j < Fs.outerSize(); ++j) {
      for (ColSparse::InnerIterator it(Fs, j); it; ++it) { t.emplace_back(n + it.row(), j, it.value()); }
    }
    for (int j = 0; j < As.outerSize(); ++j) {
      for (ColSparse::InnerIterator it(As, j); it; ++it) {
        if (kkt_row[it.row()] >= 0) { t.emplace_back(n + nf + kkt_row[it.row()], j, it.value()); }
      }
    }
    ColSparse K(dim, dim);
    K.setFromTriplets(t.begin(), t.end());
    K.makeCompressed();
    std::vector<double *> x_slots(n), rho_slots(m, nullptr);
    for (int j = 0; j < n; ++j) { x_slots[j] = &K.coeffRef(j, j); }
    for (int i = 0; i < m; ++i) {
      if (kkt_row[i] >= 0) { rho_slots[i] = &K.coeffRef(n + nf + kkt_row[i], n + nf + kkt_row[i]); }
    }

    Eigen::SimplicialLDLT<ColSparse, Eigen::Lower> ldlt;
    ldlt.analyzePattern(K);
    int factorizations = 0;
    const auto factor = [&]() {
      for (int j = 0; j < n; ++j) { *x_slots[j] = s_.sigma; }
      for (int i : folded) { *x_slots[row_col[i]] += rho_vec(i) * row_val[i] * row_val[i]; }
      for (int i = 0; i < m; ++i) {
        if (rho_slots[i]) { *rho_slots[i] = -1.0 / rho_vec(i); }
      }
      ldlt.factorize(K);
      if (ldlt.info() != Eigen::Success) { throw Error("qp: KKT factorization failed"); }
      ++factorizations;
    };
    factor();

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd rhs(dim), sol(dim), xt(n), zt(m), z_prev(m);
    const Eigen::VectorXd Dinv = D.cwiseInverse();
    const Eigen::VectorXd Einv = E.cwiseInverse();

    // KKT solve of one ADMM step: returns x~ and z~ = A x~ in scaled space
    const auto kkt_step = [&]() {
      rhs.head(n) = s_.sigma * x - qs;
      rhs.segment(n, nf).setZero();
      for (int i = 0; i < m; ++i) {
        if (kkt_row[i] >= 0) { rhs(n + nf + kkt_row[i]) = z(i) - y(i) / rho_vec(i); }
      }
      for (int i : folded) { rhs(row_col[i]) += row_val[i] * (rho_vec(i) * z(i) - y(i)); }
      sol = ldlt.solve(rhs);
      xt = sol.head(n);
      for (int i = 0; i < m; ++i) {
        zt(i) = kkt_row[i] >= 0 ? z(i) + (sol(n + nf + kkt_row[i]) - y(i)) / rho_vec(i)
                                : row_val[i] * xt(row_col[i]);
      }
    };

    AdmmResult res;
    int last_rho_update = 0;
    for (int k = 1; k <= s_.max_iter; ++k) {
      kkt_step();

      x = s_.alpha * xt + (1 - s_.alpha) * x;
      z_prev = z;
      const Eigen::VectorXd z_relax = s_.alpha * zt + (1 - s_.alpha) * z_prev;
      z = (z_relax + y.cwiseQuotient(rho_vec)).cwiseMax(ls).cwiseMin(us);
      y += rho_vec.cwiseProduct(z_relax - z);

      if (k % s_.check_every != 0 && k != s_.max_iter) { continue; }

      const Eigen::VectorXd Ax = As * x;
      const Eigen::VectorXd Px = Ps_c * x;
      const Eigen::VectorXd Aty = AsT * y;
      const double prim = detail::inf_norm(Einv.cwiseProduct(Ax - z));
      const double dual = detail::inf_norm(Dinv.cwiseProduct(Px + qs + Aty)) / c;
      const double prim_scale =
          std::max(detail::inf_norm(Einv.cwiseProduct(Ax)), detail::inf_norm(Einv.cwiseProduct(z)));
      const double dual_scale = std::max({detail::inf_norm(Dinv.cwiseProduct(Px)),
                                          detail::inf_norm(Dinv.cwiseProduct(Aty)),
                                          detail::inf_norm(Dinv.cwiseProduct(qs))}) / c;
      res.prim_res = prim;
      res.dual_res = dual;
      res.iterations = k;
      if (s_.progress) { s_.progress(k, prim, dual, rho); }
      if (prim <= s_.eps_abs + s_.eps_rel * prim_scale && dual <= s_.eps_abs + s_.eps_rel * dual_scale) {
        res.converged = true;
        break;
      }

      if (s_.adaptive_rho && k - last_rho_update >= s_.adaptive_rho_interval) {
        const double pn = detail::inf_norm(Ax - z) / std::max(
            {detail::inf_norm(Ax), detail::inf_norm(z), 1e-30});
        const double dn = detail::inf_norm(Px + qs + Aty) / std::max(
            {detail::inf_norm(Px), detail::inf_norm(Aty), detail::inf_norm(qs), 1e-30});
        const double proposal = rho * std::sqrt(pn / std::max(dn, 1e-30));
        if (proposal > rho * s_.adaptive_rho_tolerance || proposal < rho / s_.adaptive_rho_tolerance) {
          set_rho(proposal);
          factor();
          last_rho_update = k;
        }
      }
    }

    res.x = D.cwiseProduct(x);
    res.z = Einv.cwiseProduct(z);
    res.y = E.cwiseProduct(y) / c;
    res.factorizations = factorizations;
    res.objective = qp.objective(res.x);
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!res.converged) {
      std::ostringstream msg;
      msg << "qp: iteration cap " << s_.max_iter << " reached (primal " << res.prim_res
          << ", dual " << res.dual_res << ")";
      throw SolverMaxIterations(msg.str(), res);
    }
    return res;
  }

private:
  AdmmSettings s_;
};

}  // namespace tclcoord

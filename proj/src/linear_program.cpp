#include "mmfloor/linear_program.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mmfloor::optim {

namespace {

constexpr int kMaxPivots = 50000;

struct StandardForm {
  Matrix A;            // m x n, original (unscaled, unflipped) standard form
  Vector b;            // m
  Vector c;            // n, minimization cost
  Vector shift;        // per original variable, 0 when free
  std::vector<int> pos_col;  // std column of x_j (or its positive part)
  std::vector<int> neg_col;  // std column of the negative part, -1 if none
  Index eq_rows = 0;
};

void validate(const LinearProgram& p) {
  std::vector<std::string> bad;
  const Index n = p.cost.size();
  if (n == 0) bad.push_back("cost vector is empty");
  auto check_block = [&](const Matrix& A, const Vector& b, const char* name) {
    if (A.size() == 0 && b.size() == 0) return;
    if (A.rows() != b.size())
      bad.push_back(std::string(name) + " matrix rows do not match rhs length");
    if (A.cols() != n)
      bad.push_back(std::string(name) + " matrix columns do not match cost length");
  };
  check_block(p.eq_matrix, p.eq_rhs, "equality");
  check_block(p.ineq_matrix, p.ineq_rhs, "inequality");
  if (p.lower_bounds.size() != 0 && p.lower_bounds.size() != n)
    bad.push_back("lower_bounds length does not match cost length");
  auto finite = [](const Matrix& m) { return m.size() == 0 || m.allFinite(); };
  if (!finite(p.cost) || !finite(p.eq_matrix) || !finite(p.eq_rhs) || !finite(p.ineq_matrix) ||
      !finite(p.ineq_rhs))
    bad.push_back("non-finite entry in problem data");
  for (Index j = 0; j < p.lower_bounds.size(); ++j) {
    const double lb = p.lower_bounds(j);
    if (std::isnan(lb) || lb == kInf) bad.push_back("lower bound must be finite or -inf");
  }
  if (!bad.empty()) throw ValidationError("malformed linear program", bad);
}

StandardForm standardize(const LinearProgram& p) {
  const Index n = p.num_variables();
  const Index me = p.eq_rhs.size();
  const Index mi = p.ineq_rhs.size();
  Vector lb = p.lower_bounds.size() ? p.lower_bounds : Vector::Zero(n);
  Vector c_min = p.sense == Sense::Maximize ? Vector(-p.cost) : p.cost;

  StandardForm sf;
  sf.eq_rows = me;
  sf.shift = Vector::Zero(n);
  sf.pos_col.assign(static_cast<size_t>(n), -1);
  sf.neg_col.assign(static_cast<size_t>(n), -1);

  Index cols = 0;
  for (Index j = 0; j < n; ++j) {
    sf.pos_col[static_cast<size_t>(j)] = static_cast<int>(cols++);
    if (lb(j) == -kInf) {
      sf.neg_col[static_cast<size_t>(j)] = static_cast<int>(cols++);
    } else {
      sf.shift(j) = lb(j);
    }
  }
  const Index slack0 = cols;
  cols += mi;

  const Index m = me + mi;
  sf.A = Matrix::Zero(m, cols);
  sf.c = Vector::Zero(cols);
  sf.b = Vector::Zero(m);

  auto scatter_row = [&](Index row, const Eigen::RowVectorXd& a) {
    for (Index j = 0; j < n; ++j) {
      sf.A(row, sf.pos_col[static_cast<size_t>(j)]) = a(j);
      if (sf.neg_col[static_cast<size_t>(j)] >= 0)
        sf.A(row, sf.neg_col[static_cast<size_t>(j)]) = -a(j);
    }
  };
  for (Index i = 0; i < me; ++i) {
    scatter_row(i, p.eq_matrix.row(i));
    sf.b(i) = p.eq_rhs(i) - p.eq_matrix.row(i).dot(sf.shift);
  }
  for (Index i = 0; i < mi; ++i) {
    scatter_row(me + i, p.ineq_matrix.row(i));
    sf.A(me + i, slack0 + i) = 1.0;
    sf.b(me + i) = p.ineq_rhs(i) - p.ineq_matrix.row(i).dot(sf.shift);
  }
  for (Index j = 0; j < n; ++j) {
    sf.c(sf.pos_col[static_cast<size_t>(j)]) = c_min(j);
    if (sf.neg_col[static_cast<size_t>(j)] >= 0)
      sf.c(sf.neg_col[static_cast<size_t>(j)]) = -c_min(j);
  }
  return sf;
}

// Bland's rule pivot loop on a tableau whose last row is the reduced-cost row
// (rhs cell holds -objective). Returns false when an entering column exists
// but no leaving row does (unbounded).
bool run_simplex(Matrix& T, std::vector<int>& basis, Index ncols, int& pivots,
                 double enter_tol) {
  const Index m = T.rows() - 1;
  const Index rhs = T.cols() - 1;
  for (;;) {
    Index enter = -1;
    for (Index j = 0; j < ncols; ++j) {
      if (T(m, j) < -enter_tol) {
        enter = j;
        break;  // Bland: smallest improving index
      }
    }
    if (enter < 0) return true;

    Index leave = -1;
    double best_ratio = 0.0;
    for (Index i = 0; i < m; ++i) {
      const double piv = T(i, enter);
      if (piv <= 1e-11) continue;
      const double ratio = T(i, rhs) / piv;
      if (leave < 0 || ratio < best_ratio ||
          (ratio == best_ratio && basis[static_cast<size_t>(i)] <
                                      basis[static_cast<size_t>(leave)])) {
        leave = i;
        best_ratio = ratio;
      }
    }
    if (leave < 0) return false;

    if (++pivots > kMaxPivots)
      throw SolverFailure("simplex exceeded its pivot budget");

    T.row(leave) /= T(leave, enter);
    for (Index i = 0; i <= m; ++i) {
      if (i == leave) continue;
      const double f = T(i, enter);
      if (f != 0.0) T.row(i) -= f * T.row(leave);
    }
    basis[static_cast<size_t>(leave)] = static_cast<int>(enter);
  }
}

LpSolution solve_unconstrained(const LinearProgram& p, const StandardForm& sf) {
  // No rows at all: minimize over the box x >= lb alone.
  LpSolution out;
  const Index n = p.num_variables();
  Vector c_min = p.sense == Sense::Maximize ? Vector(-p.cost) : p.cost;
  Vector x(n);
  for (Index j = 0; j < n; ++j) {
    const bool free_var = sf.neg_col[static_cast<size_t>(j)] >= 0;
    if ((free_var && c_min(j) != 0.0) || c_min(j) < 0.0) {
      out.status = LpStatus::Unbounded;
      return out;
    }
    x(j) = free_var ? 0.0 : sf.shift(j);
  }
  out.status = LpStatus::Optimal;
  out.primal = x;
  out.dual = Vector::Zero(0);
  out.objective = p.cost.dot(x);
  out.dual_objective = out.objective;
  return out;
}

}  // namespace

LpSolution solve(const LinearProgram& prog, const Tolerances& tol) {
  validate(prog);
  StandardForm sf = standardize(prog);
  const Index m = sf.A.rows();
  const Index n = sf.A.cols();
  if (m == 0) return solve_unconstrained(prog, sf);

  // Max-norm equilibration. Genuine data can mix scales like 1 and 2^-40;
  // scaling keeps pivot tolerances meaningful without touching the data we
  // later use for the exact primal/dual recovery.
  Vector row_scale = Vector::Ones(m), col_scale = Vector::Ones(n);
  Matrix As = sf.A;
  for (Index i = 0; i < m; ++i) {
    const double mx = As.row(i).cwiseAbs().maxCoeff();
    if (mx > 0) {
      row_scale(i) = 1.0 / mx;
      As.row(i) *= row_scale(i);
    }
  }
  for (Index j = 0; j < n; ++j) {
    const double mx = As.col(j).cwiseAbs().maxCoeff();
    if (mx > 0) {
      col_scale(j) = 1.0 / mx;
      As.col(j) *= col_scale(j);
    }
  }
  Vector bs = row_scale.asDiagonal() * sf.b;
  for (Index i = 0; i < m; ++i) {
    if (bs(i) < 0) {
      bs(i) = -bs(i);
      As.row(i) = -As.row(i);
    }
  }

  // Phase 1: feasibility with artificial variables as the starting basis.
  Matrix T(m + 1, n + m + 1);
  T.setZero();
  T.block(0, 0, m, n) = As;
  T.block(0, n, m, m) = Matrix::Identity(m, m);
  T.block(0, n + m, m, 1) = bs;
  for (Index i = 0; i < m; ++i) T.row(m) -= T.row(i);
  T.block(m, n, 1, m).setZero();

  std::vector<int> basis(static_cast<size_t>(m));
  for (Index i = 0; i < m; ++i) basis[static_cast<size_t>(i)] = static_cast<int>(n + i);

  LpSolution out;
  int pivots = 0;
  run_simplex(T, basis, n + m, pivots, 1e-10);
  const double phase1 = -T(m, n + m);
  if (phase1 > tol.feas * (1.0 + bs.lpNorm<Eigen::Infinity>())) {
    out.status = LpStatus::Infeasible;
    out.iterations = pivots;
    return out;
  }

  // Drive artificials out of the basis; rows that cannot pivot are redundant.
  std::vector<Index> kept;
  {
    std::vector<bool> drop(static_cast<size_t>(m), false);
    for (Index i = 0; i < m; ++i) {
      if (basis[static_cast<size_t>(i)] < n) continue;
      Index piv_col = -1;
      for (Index j = 0; j < n; ++j) {
        if (std::abs(T(i, j)) > 1e-7) {
          piv_col = j;
          break;
        }
      }
      if (piv_col < 0) {
        drop[static_cast<size_t>(i)] = true;
        continue;
      }
      T.row(i) /= T(i, piv_col);
      for (Index k = 0; k <= m; ++k) {
        if (k == i) continue;
        const double f = T(k, piv_col);
        if (f != 0.0) T.row(k) -= f * T.row(i);
      }
      basis[static_cast<size_t>(i)] = static_cast<int>(piv_col);
    }
    Index rows_kept = 0;
    for (Index i = 0; i < m; ++i)
      if (!drop[static_cast<size_t>(i)]) ++rows_kept;
    Matrix T2(rows_kept + 1, n + 1);
    std::vector<int> basis2;
    basis2.reserve(static_cast<size_t>(rows_kept));
    Index r = 0;
    for (Index i = 0; i < m; ++i) {
      if (drop[static_cast<size_t>(i)]) continue;
      T2.row(r).head(n) = T.row(i).head(n);
      T2(r, n) = T(i, n + m);
      basis2.push_back(basis[static_cast<size_t>(i)]);
      kept.push_back(i);
      ++r;
    }
    T2.row(rows_kept).setZero();
    T = std::move(T2);
    basis = std::move(basis2);
  }
  const Index mk = T.rows() - 1;

  // Phase 2 objective row in scaled variable space.
  Vector cs(n);
  for (Index j = 0; j < n; ++j) cs(j) = sf.c(j) * col_scale(j);
  T.row(mk).head(n) = cs.transpose();
  T(mk, n) = 0.0;
  for (Index i = 0; i < mk; ++i) {
    const double cb = cs(basis[static_cast<size_t>(i)]);
    if (cb != 0.0) T.row(mk) -= cb * T.row(i);
  }

  const double cscale = 1.0 + cs.cwiseAbs().maxCoeff();
  if (!run_simplex(T, basis, n, pivots, 1e-10 * cscale)) {
    out.status = LpStatus::Unbounded;
    out.iterations = pivots;
    return out;
  }

  // Recover the primal and dual from the original standard-form data so the
  // reported solution carries LU accuracy, not accumulated pivot error.
  Matrix A_kept(mk, n);
  Vector b_kept(mk);
  for (Index r = 0; r < mk; ++r) {
    A_kept.row(r) = sf.A.row(kept[static_cast<size_t>(r)]);
    b_kept(r) = sf.b(kept[static_cast<size_t>(r)]);
  }
  Matrix B(mk, mk);
  Vector cB(mk);
  for (Index r = 0; r < mk; ++r) {
    B.col(r) = A_kept.col(basis[static_cast<size_t>(r)]);
    cB(r) = sf.c(basis[static_cast<size_t>(r)]);
  }
  Eigen::FullPivLU<Matrix> lu(B);
  Vector xB = lu.solve(b_kept);
  Vector y = lu.transpose().solve(cB);

  Vector x_std = Vector::Zero(n);
  for (Index r = 0; r < mk; ++r) x_std(basis[static_cast<size_t>(r)]) = xB(r);

  const Index nv = prog.num_variables();
  Vector x(nv);
  for (Index j = 0; j < nv; ++j) {
    double v = x_std(sf.pos_col[static_cast<size_t>(j)]);
    if (sf.neg_col[static_cast<size_t>(j)] >= 0)
      v -= x_std(sf.neg_col[static_cast<size_t>(j)]);
    x(j) = v + sf.shift(j);
  }

  const double sgn = prog.sense == Sense::Maximize ? -1.0 : 1.0;
  Vector c_min = prog.sense == Sense::Maximize ? Vector(-prog.cost) : prog.cost;
  const double obj_min = c_min.dot(x);
  const double dual_min = b_kept.dot(y) + c_min.dot(sf.shift);

  out.status = LpStatus::Optimal;
  out.primal = x;
  out.dual = Vector::Zero(m);
  for (Index r = 0; r < mk; ++r) out.dual(kept[static_cast<size_t>(r)]) = sgn * y(r);
  out.objective = sgn * obj_min;
  out.dual_objective = sgn * dual_min;
  out.duality_gap = std::abs(out.objective - out.dual_objective);
  out.iterations = pivots;

  Vector rc = sf.c - A_kept.transpose() * y;
  double slack = 0.0;
  for (Index j = 0; j < n; ++j) slack = std::max(slack, std::abs(x_std(j) * rc(j)));
  out.slackness_residual = slack;

  double feas = 0.0;
  if (prog.eq_rhs.size())
    feas = (prog.eq_matrix * x - prog.eq_rhs).cwiseAbs().maxCoeff();
  for (Index i = 0; i < prog.ineq_rhs.size(); ++i)
    feas = std::max(feas, prog.ineq_matrix.row(i).dot(x) - prog.ineq_rhs(i));
  if (prog.lower_bounds.size()) {
    for (Index j = 0; j < nv; ++j)
      if (prog.lower_bounds(j) != -kInf)
        feas = std::max(feas, prog.lower_bounds(j) - x(j));
  } else {
    feas = std::max(feas, -x.minCoeff());
  }
  out.feasibility_residual = std::max(feas, 0.0);
  return out;
}

}  // namespace mmfloor::optim

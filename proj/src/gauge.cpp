#include "mmfloor/gauge.hpp"

#include <cmath>

#include "mmfloor/linear_program.hpp"

namespace mmfloor::optim {

namespace {

void validate(const GaugeProgram& prog, const Tolerances& tol) {
  std::vector<std::string> bad;
  const Index n = prog.points.rows();
  const Index d = prog.points.cols();
  if (n == 0) bad.push_back("no support points");
  if (prog.p != 1.0 && prog.p != 2.0 && prog.p != kInf)
    bad.push_back("norm order must be 1, 2 or inf");
  if (prog.weights.size() != n) bad.push_back("weights length does not match point count");
  if (prog.weights.size() == n && n > 0) {
    if ((prog.weights.array() <= 0).any()) bad.push_back("weights must be strictly positive");
    if (std::abs(prog.weights.sum() - 1.0) > tol.feas)
      bad.push_back("weights must sum to 1");
  }
  if (prog.target.size() != d) bad.push_back("target dimension does not match points");
  if (prog.span_basis.rows() != d) bad.push_back("span basis rows do not match dimension");
  const Index r = prog.span_basis.cols();
  if (r > 0) {
    Matrix gram = prog.span_basis.transpose() * prog.span_basis;
    if ((gram - Matrix::Identity(r, r)).cwiseAbs().maxCoeff() > 1e-7)
      bad.push_back("span basis is not orthonormal");
  }
  if (bad.empty()) {
    if (prog.target.cwiseAbs().maxCoeff() == 0.0) {
      bad.push_back("target must be nonzero");
    } else {
      Vector proj = prog.span_basis * (prog.span_basis.transpose() * prog.target);
      if ((prog.target - proj).cwiseAbs().maxCoeff() >
          tol.feas * (1.0 + prog.target.cwiseAbs().maxCoeff()))
        bad.push_back("target lies outside the admissible span");
    }
  }
  if (!bad.empty()) throw ValidationError("malformed gauge program", bad);
}

// min over the affine slice of the piecewise-quadratic psi_2^2. The active
// set stabilizes after a few damped Newton steps and the final step is exact.
GaugeMinimum newton_p2(const Matrix& Y, const Vector& q, const Vector& at, int r) {
  const Index n = Y.rows();
  Vector u0 = at / at.squaredNorm();
  Matrix V;  // orthonormal basis of the slice directions inside the span
  {
    Eigen::HouseholderQR<Matrix> qr(at);
    Matrix Q = qr.householderQ();
    V = Q.rightCols(r - 1);
  }

  auto eval = [&](const Vector& u, Vector* grad_u, Matrix* hess_u) {
    double val = 0.0;
    if (grad_u) grad_u->setZero(u.size());
    if (hess_u) hess_u->setZero(u.size(), u.size());
    for (Index i = 0; i < n; ++i) {
      const double s = Y.row(i).dot(u);
      if (s < 0.0) {
        val += q(i) * s * s;
        if (grad_u) *grad_u += 2.0 * q(i) * s * Y.row(i).transpose();
        if (hess_u) *hess_u += 2.0 * q(i) * Y.row(i).transpose() * Y.row(i);
      }
    }
    return val;
  };

  Vector w = Vector::Zero(r - 1);
  Vector u = u0;
  double best = eval(u, nullptr, nullptr);
  Vector best_u = u;
  int iters = 0;
  if (r > 1) {
    for (; iters < 500; ++iters) {
      Vector gu(r);
      Matrix Hu(r, r);
      const double val = eval(u, &gu, &Hu);
      if (val < best) {
        best = val;
        best_u = u;
      }
      Vector g = V.transpose() * gu;
      if (g.cwiseAbs().maxCoeff() <= 1e-13 * (1.0 + val)) break;
      Matrix H = V.transpose() * Hu * V;
      H.diagonal().array() += 1e-12 * (1.0 + H.trace());
      Vector dir = H.ldlt().solve(-g);
      double step = 1.0;
      const double slope = g.dot(dir);
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt) {
        Vector cand = w + step * dir;
        if (eval(u0 + V * cand, nullptr, nullptr) <= val + 1e-4 * step * slope) {
          w = cand;
          u = u0 + V * w;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    const double final_val = eval(u, nullptr, nullptr);
    if (final_val < best) {
      best = final_val;
      best_u = u;
    }
  }

  GaugeMinimum out;
  out.value = std::sqrt(std::max(best, 0.0));
  out.minimizer = best_u;
  out.iterations = iters;
  return out;
}

}  // namespace

GaugeMinimum minimize_gauge(const GaugeProgram& prog, const Tolerances& tol) {
  validate(prog, tol);
  const Matrix& B = prog.span_basis;
  const Index r = B.cols();
  const Index n = prog.points.rows();
  Matrix Y = prog.points * B;              // row i = coordinates of x_i in the span
  Vector at = B.transpose() * prog.target;  // slice normal in span coordinates

  GaugeMinimum out;
  if (prog.p == 2.0) {
    GaugeMinimum inner = newton_p2(Y, prog.weights, at, static_cast<int>(r));
    out.value = inner.value;
    out.minimizer = B * inner.minimizer;
    out.iterations = inner.iterations;
    return out;
  }

  // LP reformulations over u in the span and downside slacks t.
  LinearProgram lp;
  lp.sense = Sense::Minimize;
  if (prog.p == 1.0) {
    // min sum q_i t_i, t_i >= -(u, y_i), t_i >= 0, (at, u) = 1
    const Index nv = r + n;
    lp.cost = Vector::Zero(nv);
    lp.cost.tail(n) = prog.weights;
    lp.eq_matrix = Matrix::Zero(1, nv);
    lp.eq_matrix.row(0).head(r) = at.transpose();
    lp.eq_rhs = Vector::Ones(1);
    lp.ineq_matrix = Matrix::Zero(n, nv);
    lp.ineq_rhs = Vector::Zero(n);
    for (Index i = 0; i < n; ++i) {
      lp.ineq_matrix.row(i).head(r) = -Y.row(i);
      lp.ineq_matrix(i, r + i) = -1.0;  // -(u,y_i) - t_i <= 0
    }
    lp.lower_bounds = Vector::Zero(nv);
    lp.lower_bounds.head(r).setConstant(-kInf);
  } else {
    // min t, t >= -(u, y_i) for all i, (at, u) = 1; t free (raw value)
    const Index nv = r + 1;
    lp.cost = Vector::Zero(nv);
    lp.cost(r) = 1.0;
    lp.eq_matrix = Matrix::Zero(1, nv);
    lp.eq_matrix.row(0).head(r) = at.transpose();
    lp.eq_rhs = Vector::Ones(1);
    lp.ineq_matrix = Matrix::Zero(n, nv);
    lp.ineq_rhs = Vector::Zero(n);
    for (Index i = 0; i < n; ++i) {
      lp.ineq_matrix.row(i).head(r) = -Y.row(i);
      lp.ineq_matrix(i, r) = -1.0;
    }
    lp.lower_bounds = Vector::Constant(nv, -kInf);
  }

  auto sol = optim::solve(lp, tol);
  if (sol.status == LpStatus::Unbounded) {
    // psi_inf unbounded below on the slice: the support lies in an open
    // half-space, possible only when the interior condition fails.
    out.value = -kInf;
    out.minimizer = Vector();
    return out;
  }
  if (sol.status != LpStatus::Optimal)
    throw SolverFailure("gauge slice program did not solve");
  out.value = sol.objective;
  out.minimizer = B * sol.primal.head(r);
  out.iterations = sol.iterations;
  return out;
}

}  // namespace mmfloor::optim

#include "mmfloor/geometry.hpp"

#include <cmath>
#include <limits>

#include "mmfloor/gauge.hpp"
#include "mmfloor/linear_program.hpp"

namespace mmfloor {

using optim::LinearProgram;
using optim::LpStatus;
using optim::Sense;

void validate_distribution(const DiscreteDistribution& dist, const Tolerances& tol) {
  std::vector<std::string> bad;
  const Index n = dist.points.rows();
  if (n == 0) bad.push_back("empty support");
  if (dist.weights.size() != n) bad.push_back("weights length does not match point count");
  if (dist.points.size() > 0 && !dist.points.allFinite())
    bad.push_back("non-finite support point");
  if (dist.weights.size() == n && n > 0) {
    if (!dist.weights.allFinite() || (dist.weights.array() <= 0).any())
      bad.push_back("weights must be strictly positive");
    else if (std::abs(dist.weights.sum() - 1.0) > tol.feas)
      bad.push_back("weights must sum to 1");
  }
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if ((dist.points.row(i) - dist.points.row(j)).cwiseAbs().maxCoeff() <= tol.feas) {
        bad.push_back("support points " + std::to_string(i) + " and " + std::to_string(j) +
                      " coincide");
      }
  if (!bad.empty()) throw ValidationError("malformed distribution", bad);
}

SpanBasis linear_span(const Matrix& points, const Tolerances& tol) {
  SpanBasis out;
  if (points.rows() == 0 || points.cols() == 0) {
    out.basis = Matrix::Zero(points.cols(), 0);
    return out;
  }
  Eigen::JacobiSVD<Matrix> svd(points.transpose(), Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  const double top = sv.size() ? sv(0) : 0.0;
  Index rank = 0;
  for (Index k = 0; k < sv.size(); ++k)
    if (sv(k) > tol.rank * top) ++rank;
  if (top == 0.0) rank = 0;
  out.basis = svd.matrixU().leftCols(rank);
  return out;
}

InteriorReport origin_in_relative_interior(const Matrix& points, const Tolerances& tol) {
  InteriorReport out;
  const Index n = points.rows();
  const Index d = points.cols();
  if (n == 0) throw InputError("empty point set");

  // max t s.t. sum theta_i x_i = 0, sum theta_i = 1, theta_i >= t
  LinearProgram lp;
  lp.sense = Sense::Maximize;
  lp.cost = Vector::Zero(n + 1);
  lp.cost(n) = 1.0;
  lp.eq_matrix = Matrix::Zero(d + 1, n + 1);
  lp.eq_matrix.block(0, 0, d, n) = points.transpose();
  lp.eq_matrix.row(d).head(n).setOnes();
  lp.eq_rhs = Vector::Zero(d + 1);
  lp.eq_rhs(d) = 1.0;
  lp.ineq_matrix = Matrix::Zero(n, n + 1);
  lp.ineq_rhs = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) {
    lp.ineq_matrix(i, i) = -1.0;
    lp.ineq_matrix(i, n) = 1.0;  // t - theta_i <= 0
  }
  lp.lower_bounds = Vector::Constant(n + 1, -kInf);  // theta >= t is the only floor
  auto sol = optim::solve(lp, tol);
  if (sol.status == LpStatus::Infeasible) {
    out.margin = -kInf;  // origin outside the affine hull of the support
  } else if (sol.status != LpStatus::Optimal) {
    throw SolverFailure("interior test program did not solve");
  } else {
    out.margin = sol.objective;
  }
  if (out.margin > tol.feas) {
    out.holds = true;
    out.witness = sol.primal.head(n);
    return out;
  }

  // Separating direction inside the span: (h, x_i) >= 0 with total 1. By the
  // theorem of the alternative exactly one of the two programs is solvable;
  // an infeasible separation program settles borderline margins as interior.
  SpanBasis span = linear_span(points, tol);
  const Index r = span.rank();
  Matrix Y = points * span.basis;
  LinearProgram sep;
  sep.sense = Sense::Minimize;
  sep.cost = Vector::Zero(r);
  sep.eq_matrix = Matrix::Zero(1, r);
  for (Index i = 0; i < n; ++i) sep.eq_matrix.row(0) += Y.row(i);
  sep.eq_rhs = Vector::Ones(1);
  sep.ineq_matrix = -Y;
  sep.ineq_rhs = Vector::Zero(n);
  sep.lower_bounds = Vector::Constant(r, -kInf);
  auto alt = r == 0 ? optim::LpSolution{} : optim::solve(sep, tol);
  if (r == 0 || alt.status != LpStatus::Optimal) {
    out.holds = true;
    out.witness = sol.primal.head(n);
    return out;
  }

  // A certificate is only as good as its exact signs: data with scales below
  // tol.feas can make the separation program look solvable while some
  // (h, x_i) is decisively negative in exact arithmetic. Trust the separator
  // only at machine scale; a rejected certificate settles the case interior.
  Vector gains = Y * alt.primal;
  const double noise =
      64.0 * std::numeric_limits<double>::epsilon() * (1.0 + gains.cwiseAbs().maxCoeff());
  if (gains.minCoeff() < -noise) {
    out.holds = true;
    out.witness = sol.primal.head(n);
    return out;
  }
  out.holds = false;
  Vector h = span.basis * alt.primal;
  const double scale = h.norm();
  out.separator = scale > 0 ? Vector(h / scale) : h;
  return out;
}

SupportResult support_function(const Vector& h, const Matrix& points) {
  if (points.rows() == 0) throw InputError("empty point set");
  if (h.size() != points.cols()) throw InputError("direction dimension mismatch");
  SupportResult out;
  Index arg = 0;
  out.value = (points * h).maxCoeff(&arg);
  out.maximizer = points.row(arg).transpose();
  return out;
}

GaugeResult minkowski_gauge(const Vector& y, const Matrix& points, const Tolerances& tol) {
  const Index n = points.rows();
  const Index d = points.cols();
  if (n == 0) throw InputError("empty point set");
  if (y.size() != d) throw InputError("target dimension mismatch");

  GaugeResult out;
  if (y.cwiseAbs().maxCoeff() == 0.0) {
    out.value = 0.0;
    out.witness = Vector::Zero(n);
    out.polar_point = Vector::Zero(d);
    return out;
  }

  SpanBasis span = linear_span(points, tol);
  Vector proj = span.basis * (span.basis.transpose() * y);
  if ((y - proj).cwiseAbs().maxCoeff() > tol.feas * (1.0 + y.cwiseAbs().maxCoeff()))
    throw InputError("gauge target lies outside the span of the support");

  LinearProgram lp;
  lp.sense = Sense::Minimize;
  lp.cost = Vector::Ones(n);
  lp.eq_matrix = points.transpose();
  lp.eq_rhs = y;
  auto sol = optim::solve(lp, tol);
  if (sol.status == LpStatus::Infeasible) {
    auto interior = origin_in_relative_interior(points, tol);
    throw NaViolation("moment program infeasible: origin outside the relative interior", -1,
                      interior.separator);
  }
  if (sol.status != LpStatus::Optimal)
    throw SolverFailure("moment program did not solve");
  out.value = sol.objective;
  out.witness = sol.primal;
  out.polar_point = sol.dual.head(d);
  return out;
}

double downside_norm(double p, const Vector& h, const DiscreteDistribution& dist) {
  if (h.size() != dist.dimension()) throw InputError("direction dimension mismatch");
  Vector gains = dist.points * h;
  if (p == kInf) return (-gains).maxCoeff();
  if (p < 1.0) throw InputError("norm order below 1");
  double acc = 0.0;
  for (Index i = 0; i < gains.size(); ++i)
    acc += dist.weights(i) * std::pow(std::max(-gains(i), 0.0), p);
  return std::pow(acc, 1.0 / p);
}

DownsideSupport downside_support(double p, const Vector& a, const DiscreteDistribution& dist,
                                 const Tolerances& tol) {
  validate_distribution(dist, tol);
  const Index d = dist.dimension();
  if (a.size() != d) throw InputError("target dimension mismatch");

  DownsideSupport out;
  if (a.cwiseAbs().maxCoeff() == 0.0) {
    out.maximizer = Vector::Zero(d);
    return out;
  }

  auto interior = origin_in_relative_interior(dist.points, tol);
  if (!interior.holds)
    throw NaViolation("origin outside the relative interior of the support hull", -1,
                      interior.separator);

  SpanBasis span = linear_span(dist.points, tol);
  Vector proj = span.basis * (span.basis.transpose() * a);
  if ((a - proj).cwiseAbs().maxCoeff() > tol.feas * (1.0 + a.cwiseAbs().maxCoeff()))
    throw InputError("support target lies outside the span of the support");

  if (d == 1) {
    const double av = a(0);
    out.value = downside_support_univariate(p, av, dist);
    double h;
    if (p == kInf) {
      const double den = (-dist.points.col(0)).maxCoeff();
      const double den2 = dist.points.col(0).maxCoeff();
      h = av > 0 ? 1.0 / den : -1.0 / den2;
    } else {
      double mneg = 0.0, mpos = 0.0;
      for (Index i = 0; i < dist.size(); ++i) {
        mneg += dist.weights(i) * std::pow(std::max(-dist.points(i, 0), 0.0), p);
        mpos += dist.weights(i) * std::pow(std::max(dist.points(i, 0), 0.0), p);
      }
      h = av > 0 ? 1.0 / std::pow(mneg, 1.0 / p) : -1.0 / std::pow(mpos, 1.0 / p);
    }
    out.maximizer = Vector::Constant(1, h);
    return out;
  }

  if (p == kInf) {
    GaugeResult gauge = minkowski_gauge(-a, dist.points, tol);
    out.value = gauge.value;
    out.maximizer = -(span.basis * (span.basis.transpose() * gauge.polar_point));
    return out;
  }

  optim::GaugeProgram prog;
  prog.p = p;
  prog.points = dist.points;
  prog.weights = dist.weights;
  prog.span_basis = span.basis;
  prog.target = a;
  auto mini = optim::minimize_gauge(prog, tol);
  if (!(mini.value > tol.feas))
    throw NaViolation("downside gauge vanishes on the slice: arbitrage direction exists", -1,
                      mini.minimizer);
  out.value = 1.0 / mini.value;
  out.maximizer = mini.minimizer * out.value;
  return out;
}

double downside_support_univariate(double p, double a, const DiscreteDistribution& dist) {
  if (dist.dimension() != 1) throw InputError("univariate form needs dimension 1");
  if (a == 0.0) return 0.0;
  double den_neg, den_pos;
  if (p == kInf) {
    den_neg = std::max((-dist.points.col(0)).maxCoeff(), 0.0);
    den_pos = std::max(dist.points.col(0).maxCoeff(), 0.0);
  } else {
    if (p < 1.0) throw InputError("norm order below 1");
    double mneg = 0.0, mpos = 0.0;
    for (Index i = 0; i < dist.size(); ++i) {
      mneg += dist.weights(i) * std::pow(std::max(-dist.points(i, 0), 0.0), p);
      mpos += dist.weights(i) * std::pow(std::max(dist.points(i, 0), 0.0), p);
    }
    den_neg = std::pow(mneg, 1.0 / p);
    den_pos = std::pow(mpos, 1.0 / p);
  }
  const double pos = std::max(a, 0.0);
  const double neg = std::max(-a, 0.0);
  double value = 0.0;
  if (pos > 0.0) value += den_neg > 0.0 ? pos / den_neg : kInf;
  if (neg > 0.0) value += den_pos > 0.0 ? neg / den_pos : kInf;
  return value;
}

}  // namespace mmfloor

#include "mmfloor/one_period.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "mmfloor/gauge.hpp"
#include "mmfloor/geometry.hpp"
#include "mmfloor/linear_program.hpp"

namespace mmfloor {

namespace {

void require_exponent(double p) {
  if (p != 1.0 && p != 2.0 && p != kInf)
    throw InputError("downside exponent must be 1, 2 or inf");
}

// Gain profile X_ij = (gamma_j, x_ij) evaluated against the model: expected
// floor-weighted gain and the aggregated downside norm.
double expected_gain(const OnePeriodModel& model, const std::vector<Vector>& payoff) {
  double acc = 0.0;
  for (size_t j = 0; j < model.atoms.size(); ++j) {
    const auto& atom = model.atoms[j];
    acc += atom.prob * (atom.increments.weights.array() * atom.floor.array() *
                        payoff[j].array())
                           .sum();
  }
  return acc;
}

double downside_of(const OnePeriodModel& model, const std::vector<Vector>& payoff, double p) {
  if (p == kInf) {
    double worst = 0.0;
    for (const auto& x : payoff) worst = std::max(worst, (-x.array()).maxCoeff());
    return std::max(worst, 0.0);
  }
  double acc = 0.0;
  for (size_t j = 0; j < model.atoms.size(); ++j) {
    const auto& atom = model.atoms[j];
    acc += atom.prob * (atom.increments.weights.array() *
                        (-payoff[j].array()).max(0.0).pow(p))
                           .sum();
  }
  return std::pow(acc, 1.0 / p);
}

// Dual of the per-atom minimal-l2 moment program in span coordinates:
//   maximize (lambda, a) - 1/4 sum q_i [((lambda, y_i))^-]^2,
// concave piecewise quadratic; the optimal density increment is
// u_i = ((lambda, y_i))^- / 2 and stationarity is the moment condition.
Vector min_l2_increment(const Matrix& Y, const Vector& q, const Vector& atilde,
                        const Tolerances& tol) {
  const Index r = Y.cols();
  Vector lambda = Vector::Zero(r);
  const double scale = 1.0 + atilde.norm();

  auto eval = [&](const Vector& lam, Vector* grad, Matrix* hess) {
    Vector m = Y * lam;
    double value = lam.dot(atilde);
    if (grad) *grad = atilde;
    if (hess) hess->setZero(r, r);
    for (Index i = 0; i < Y.rows(); ++i) {
      if (m(i) < 0.0) {
        value -= 0.25 * q(i) * m(i) * m(i);
        if (grad) *grad -= 0.5 * q(i) * m(i) * Y.row(i).transpose();
        if (hess) *hess += 0.5 * q(i) * Y.row(i).transpose() * Y.row(i);
      }
    }
    return value;
  };

  Vector grad(r);
  Matrix hess(r, r);
  double value = eval(lambda, &grad, &hess);
  Vector best_lambda = lambda;
  double best_grad = grad.norm();
  for (int it = 0; it < 500 && grad.norm() > 1e-13 * scale; ++it) {
    Matrix damped = hess + 1e-12 * (1.0 + hess.trace()) * Matrix::Identity(r, r);
    Vector step = damped.ldlt().solve(grad);
    double t = 1.0;
    const double slope = grad.dot(step);
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      Vector trial = lambda + t * step;
      double trial_value = eval(trial, nullptr, nullptr);
      if (trial_value >= value + 1e-4 * t * slope) {
        lambda = trial;
        value = eval(lambda, &grad, &hess);
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;
    if (grad.norm() < best_grad) {
      best_grad = grad.norm();
      best_lambda = lambda;
    }
  }
  if (best_grad > grad.norm()) {
    best_lambda = lambda;
    best_grad = grad.norm();
  }
  if (best_grad > 1e-8 * scale)
    throw SolverFailure("minimal-l2 moment program did not reach stationarity");
  Vector m = Y * best_lambda;
  return 0.5 * (-m.array()).max(0.0).matrix();
}

}  // namespace

Vector floor_weighted_mean(const OnePeriodAtom& atom) {
  return atom.increments.points.transpose() *
         (atom.increments.weights.array() * atom.floor.array()).matrix();
}

CriterionReport criterion(const OnePeriodModel& model, double p, const Tolerances& tol) {
  require_exponent(p);
  validate_model(model, tol);
  CriterionReport report;
  report.p = p;
  report.q = conjugate_exponent(p);
  const size_t J = model.atoms.size();
  report.support_values = Vector(static_cast<Index>(J));
  for (size_t j = 0; j < J; ++j) {
    const auto& atom = model.atoms[j];
    Vector a = floor_weighted_mean(atom);
    report.mean.push_back(a);
    try {
      DownsideSupport s = downside_support(p, a, atom.increments, tol);
      report.support_values(static_cast<Index>(j)) = s.value;
      report.maximizers.push_back(std::move(s.maximizer));
    } catch (const NaViolation& e) {
      throw NaViolation("atom " + std::to_string(j) + ": " + e.what(), static_cast<int>(j),
                        e.separator());
    }
  }
  if (report.q == kInf) {
    report.value = report.support_values.size() ? report.support_values.maxCoeff() : 0.0;
  } else {
    double acc = 0.0;
    for (size_t j = 0; j < J; ++j)
      acc += model.atoms[j].prob *
             std::pow(report.support_values(static_cast<Index>(j)), report.q);
    report.value = std::pow(acc, 1.0 / report.q);
  }
  return report;
}

OnePeriodDensity construct_density(const OnePeriodModel& model, const Tolerances& tol) {
  validate_model(model, tol);
  OnePeriodDensity out;
  const size_t J = model.atoms.size();
  out.nu = Vector(static_cast<Index>(J));
  out.moment_residual = 0.0;
  out.floor_margin = kInf;
  for (size_t j = 0; j < J; ++j) {
    const auto& atom = model.atoms[j];
    Vector a = floor_weighted_mean(atom);
    GaugeResult gauge;
    try {
      gauge = minkowski_gauge(-a, atom.increments.points, tol);
    } catch (const NaViolation& e) {
      throw NaViolation("atom " + std::to_string(j) + ": " + e.what(), static_cast<int>(j),
                        e.separator());
    }
    out.nu(static_cast<Index>(j)) = gauge.value;
    Vector g = atom.floor + (gauge.witness.array() / atom.increments.weights.array()).matrix();
    out.floor_margin = std::min(out.floor_margin, (g - atom.floor).minCoeff());
    Vector moment = atom.increments.points.transpose() *
                    (atom.increments.weights.array() * g.array()).matrix();
    out.moment_residual = std::max(out.moment_residual, moment.cwiseAbs().maxCoeff());
    out.density.push_back(std::move(g));
  }
  return out;
}

MinNormResult min_norm_density(const OnePeriodModel& model, double q, const Tolerances& tol) {
  if (q != 1.0 && q != 2.0 && q != kInf)
    throw InputError("norm order must be 1, 2 or inf");
  validate_model(model, tol);
  MinNormResult out;
  const size_t J = model.atoms.size();
  std::vector<double> per_atom(J, 0.0);
  for (size_t j = 0; j < J; ++j) {
    const auto& atom = model.atoms[j];
    const Index n = atom.increments.size();
    Vector a = floor_weighted_mean(atom);
    Vector u = Vector::Zero(n);

    if (q == 1.0) {
      GaugeResult gauge;
      try {
        gauge = minkowski_gauge(-a, atom.increments.points, tol);
      } catch (const NaViolation& e) {
        throw NaViolation("atom " + std::to_string(j) + ": " + e.what(), static_cast<int>(j),
                          e.separator());
      }
      u = (gauge.witness.array() / atom.increments.weights.array()).matrix();
      per_atom[j] = gauge.value;
    } else {
      SpanBasis span = linear_span(atom.increments.points, tol);
      const Index r = span.rank();
      Vector atilde = span.basis.transpose() * a;
      if (atilde.norm() > 0.0 && r > 0) {
        Matrix Y = atom.increments.points * span.basis;
        if (q == kInf) {
          // minimize t subject to sum_i q_i u_i y_i = -atilde, 0 <= u_i <= t.
          optim::LinearProgram lp;
          lp.sense = optim::Sense::Minimize;
          lp.cost = Vector::Zero(n + 1);
          lp.cost(n) = 1.0;
          lp.eq_matrix = Matrix::Zero(r, n + 1);
          for (Index i = 0; i < n; ++i)
            lp.eq_matrix.col(i).head(r) = atom.increments.weights(i) * Y.row(i).transpose();
          lp.eq_rhs = -atilde;
          lp.ineq_matrix = Matrix::Zero(n, n + 1);
          lp.ineq_matrix.leftCols(n) = Matrix::Identity(n, n);
          lp.ineq_matrix.col(n).setConstant(-1.0);
          lp.ineq_rhs = Vector::Zero(n);
          optim::LpSolution sol = optim::solve(lp, tol);
          if (sol.status == optim::LpStatus::Infeasible) {
            InteriorReport interior = origin_in_relative_interior(atom.increments.points, tol);
            throw NaViolation("atom " + std::to_string(j) + ": moment program infeasible",
                              static_cast<int>(j), interior.separator);
          }
          if (sol.status != optim::LpStatus::Optimal)
            throw SolverFailure("minimal-linf moment program did not solve");
          u = sol.primal.head(n);
          per_atom[j] = sol.objective;
        } else {
          InteriorReport interior = origin_in_relative_interior(atom.increments.points, tol);
          if (!interior.holds)
            throw NaViolation("atom " + std::to_string(j) + ": moment program unbounded",
                              static_cast<int>(j), interior.separator);
          u = min_l2_increment(Y, atom.increments.weights, atilde, tol);
          per_atom[j] =
              std::sqrt((atom.increments.weights.array() * u.array().square()).sum());
        }
      }
    }
    out.density.push_back(atom.floor + u);
  }
  if (q == kInf) {
    out.value = per_atom.empty() ? 0.0 : *std::max_element(per_atom.begin(), per_atom.end());
  } else {
    double acc = 0.0;
    for (size_t j = 0; j < J; ++j)
      acc += model.atoms[j].prob * std::pow(per_atom[j], q);
    out.value = std::pow(acc, 1.0 / q);
  }
  return out;
}

AttainmentResult primal_attainment(const OnePeriodModel& model, double p,
                                   const CriterionReport& report, int samples,
                                   const Tolerances& tol) {
  require_exponent(p);
  if (report.maximizers.size() != model.atoms.size())
    throw InputError("criterion report does not match the model");
  AttainmentResult out;
  const size_t J = model.atoms.size();
  const double v = report.value;

  std::vector<double> weight(J, 0.0);
  if (v > 0.0) {
    if (p == kInf) {
      std::fill(weight.begin(), weight.end(), 1.0);
    } else if (p == 1.0) {
      Index star = 0;
      report.support_values.maxCoeff(&star);
      weight[static_cast<size_t>(star)] = 1.0 / model.atoms[static_cast<size_t>(star)].prob;
    } else {
      for (size_t j = 0; j < J; ++j)
        weight[j] = report.support_values(static_cast<Index>(j)) / v;
    }
  }
  for (size_t j = 0; j < J; ++j) {
    Vector gamma = weight[j] * report.maximizers[j];
    out.payoff.push_back(model.atoms[j].increments.points * gamma);
    out.strategy.push_back(std::move(gamma));
  }
  out.achieved = expected_gain(model, out.payoff);
  out.downside = downside_of(model, out.payoff, p);

  // No sampled feasible strategy may beat the claimed optimum.
  std::mt19937 rng(911);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<Matrix> bases;
  for (const auto& atom : model.atoms)
    bases.push_back(linear_span(atom.increments.points, tol).basis);
  out.bound_ok = true;
  for (int s = 0; s < samples && out.bound_ok; ++s) {
    std::vector<Vector> payoff(J);
    for (size_t j = 0; j < J; ++j) {
      Vector coords(bases[j].cols());
      for (Index k = 0; k < coords.size(); ++k) coords(k) = unif(rng);
      payoff[j] = model.atoms[j].increments.points * (bases[j] * coords);
    }
    double down = downside_of(model, payoff, p);
    if (down > 1e-14)
      for (auto& x : payoff) x /= down;
    if (expected_gain(model, payoff) > v + tol.gauge) out.bound_ok = false;
  }
  return out;
}

double max_expected_gain_lp(const OnePeriodModel& model, double p, const Tolerances& tol) {
  if (p != 1.0 && p != kInf)
    throw InputError("direct gain program supports p = 1 or p = inf");
  validate_model(model, tol);
  const size_t J = model.atoms.size();

  std::vector<Matrix> Y;          // outcomes x rank, per atom
  std::vector<Index> offset;      // column offset of each atom's strategy block
  Index n_strategy = 0, n_rows = 0;
  for (const auto& atom : model.atoms) {
    SpanBasis span = linear_span(atom.increments.points, tol);
    Y.push_back(atom.increments.points * span.basis);
    offset.push_back(n_strategy);
    n_strategy += span.rank();
    n_rows += atom.increments.size();
  }
  const bool budget = (p == 1.0);
  const Index n_vars = budget ? n_strategy + n_rows : n_strategy;

  optim::LinearProgram lp;
  lp.sense = optim::Sense::Maximize;
  lp.cost = Vector::Zero(n_vars);
  lp.ineq_matrix = Matrix::Zero(n_rows + (budget ? 1 : 0), n_vars);
  lp.ineq_rhs = Vector::Zero(n_rows + (budget ? 1 : 0));
  lp.lower_bounds = Vector::Constant(n_vars, -kInf);

  Index row = 0;
  for (size_t j = 0; j < J; ++j) {
    const auto& atom = model.atoms[j];
    const Index r = Y[j].cols();
    for (Index i = 0; i < atom.increments.size(); ++i) {
      lp.cost.segment(offset[j], r) +=
          atom.prob * atom.increments.weights(i) * atom.floor(i) * Y[j].row(i).transpose();
      lp.ineq_matrix.row(row).segment(offset[j], r) = -Y[j].row(i);
      if (budget) {
        lp.ineq_matrix(row, n_strategy + row) = -1.0;
        lp.lower_bounds(n_strategy + row) = 0.0;
        lp.ineq_matrix(n_rows, n_strategy + row) =
            atom.prob * atom.increments.weights(i);
      } else {
        lp.ineq_rhs(row) = 1.0;
      }
      ++row;
    }
  }
  if (budget) lp.ineq_rhs(n_rows) = 1.0;

  optim::LpSolution sol = optim::solve(lp, tol);
  if (sol.status == optim::LpStatus::Unbounded)
    throw NaViolation("expected gain unbounded under the downside budget", -1, Vector());
  if (sol.status != optim::LpStatus::Optimal)
    throw SolverFailure("direct gain program did not solve");
  return sol.objective;
}

}  // namespace mmfloor

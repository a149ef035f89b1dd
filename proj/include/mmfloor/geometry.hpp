#pragma once

#include "mmfloor/types.hpp"

namespace mmfloor {

// Finitely supported distribution of a random vector: one support point per
// row of `points`, strictly positive masses in `weights` summing to 1. The
// point set is the support itself, so rows must be pairwise distinct.
struct DiscreteDistribution {
  Matrix points;
  Vector weights;

  Index dimension() const { return points.cols(); }
  Index size() const { return points.rows(); }
};

// Validates positivity, normalization and distinctness. Throws ValidationError.
void validate_distribution(const DiscreteDistribution& dist,
                           const Tolerances& tol = default_tolerances());

// Orthonormal basis of the linear span of the support points; rank decided by
// a relative singular-value threshold.
struct SpanBasis {
  Matrix basis;  // d x r, orthonormal columns; r = 0 when all points vanish
  Index rank() const { return basis.cols(); }
};

SpanBasis linear_span(const Matrix& points, const Tolerances& tol = default_tolerances());

struct InteriorReport {
  bool holds = false;
  double margin = 0.0;  // maximal min_i theta_i over representations of 0
  Vector witness;       // convex weights theta > 0 with sum theta_i x_i = 0 (when holds)
  Vector separator;     // when !holds: h in span with (h, x_i) >= 0 for all i, > 0 for some i
};

// Tests 0 in ri(conv{points}); weights are irrelevant, only the support
// matters. The singleton {0} counts as holding.
InteriorReport origin_in_relative_interior(const Matrix& points,
                                           const Tolerances& tol = default_tolerances());

// s(h | conv{points}) = max_i (h, x_i) together with an attaining point.
struct SupportResult {
  double value = 0.0;
  Vector maximizer;
};

SupportResult support_function(const Vector& h, const Matrix& points);

struct GaugeResult {
  double value = 0.0;  // mu(y | conv{points})
  Vector witness;      // theta >= 0 with sum theta_i x_i = y and sum theta_i = value
  Vector polar_point;  // optimal lambda of the dual: (x_i, lambda) <= 1, (y, lambda) = value
};

// Minkowski functional of conv{points} at y via the moment program
//   mu(y) = min { sum theta_i : theta >= 0, sum theta_i x_i = y }.
// Requires y in span(points); throws InputError otherwise. Throws NaViolation
// when the program is infeasible inside the span (0 outside ri conv).
GaugeResult minkowski_gauge(const Vector& y, const Matrix& points,
                            const Tolerances& tol = default_tolerances());

// psi_p(h) = (sum_i q_i [((h, x_i))^-]^p)^(1/p) for p < inf,
// psi_inf(h) = max_i -(h, x_i), returned raw (may be negative when the support
// lies in an open half-space; cannot happen under the no-arbitrage condition).
double downside_norm(double p, const Vector& h, const DiscreteDistribution& dist);

// Support value of `a` over {h in span(points) : psi_p(h) <= 1}:
//   value = 1 / min{ psi_p(h) : (a, h) = 1, h in span },
// maximizer h* feasible (psi_p(h*) <= 1) with (a, h*) = value. a = 0 gives
// value 0 with h* = 0. Requires 0 in ri(conv points) (throws NaViolation
// otherwise) and a in span (throws InputError).
struct DownsideSupport {
  double value = 0.0;
  Vector maximizer;
};

DownsideSupport downside_support(double p, const Vector& a, const DiscreteDistribution& dist,
                                 const Tolerances& tol = default_tolerances());

// One-dimensional closed form, valid for every p in [1, inf]:
//   s(a | T_p) = a^+ / E((xi^-)^p)^(1/p) + a^- / E((xi^+)^p)^(1/p)   (p < inf)
//   s(a | T_inf) = a^+ / max xi^-  +  a^- / max xi^+.
// A vanishing denominator against a positive numerator yields +inf.
double downside_support_univariate(double p, double a, const DiscreteDistribution& dist);

}  // namespace mmfloor

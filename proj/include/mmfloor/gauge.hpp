#pragma once

#include "mmfloor/types.hpp"

namespace mmfloor::optim {

// Data for evaluating the downside functional
//   psi_p(h) = ( sum_i w_i * max(-(h, x_i), 0)^p )^(1/p),   psi_inf(h) = max_i -(h, x_i)
// over directions h restricted to the column span of span_basis, and for the
// induced support value of `target` over the sublevel set {psi_p <= 1}:
//   value = 1 / min { psi_p(h) : (target, h) = 1, h in span }.
struct GaugeProgram {
  double p = kInf;
  Matrix points;      // one support point per row
  Vector weights;     // strictly positive, one per row
  Matrix span_basis;  // orthonormal columns spanning the admissible directions
  Vector target;
};

struct GaugeMinimum {
  double value = 0.0;  // min of psi_p on the slice (target, h) = 1; +inf when empty
  Vector minimizer;    // attaining h, zero-length when value is 0 or +inf
  int iterations = 0;
};

// Minimizes psi_p over {h in span : (target, h) = 1}. p must be 1, 2 or +inf.
GaugeMinimum minimize_gauge(const GaugeProgram& prog,
                            const Tolerances& tol = default_tolerances());

}  // namespace mmfloor::optim

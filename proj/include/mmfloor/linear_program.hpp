#pragma once

#include "mmfloor/types.hpp"

namespace mmfloor::optim {

enum class Sense { Minimize, Maximize };
enum class LpStatus { Optimal, Infeasible, Unbounded };

/// Dense linear program
///
///   optimize   cost' x
///   subject to eq_matrix   x  = eq_rhs
///              ineq_matrix x <= ineq_rhs     (row-wise)
///              x >= lower_bounds             (-inf entries mean free)
///
/// Empty matrices mean "no constraints of that kind". An empty lower_bounds
/// vector means x >= 0 componentwise.
struct LinearProgram {
  Sense sense = Sense::Minimize;
  Vector cost;
  Matrix eq_matrix;
  Vector eq_rhs;
  Matrix ineq_matrix;
  Vector ineq_rhs;
  Vector lower_bounds;

  Index num_variables() const { return cost.size(); }
};

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  Vector primal;            // variable values, valid when status == Optimal
  Vector dual;              // row multipliers, equality rows first then inequality rows
  double objective = 0.0;
  double dual_objective = 0.0;
  double feasibility_residual = 0.0;  // against the original data
  double duality_gap = 0.0;           // |objective - dual_objective|
  double slackness_residual = 0.0;    // max |x_j * reduced_cost_j| in standard form
  int iterations = 0;
};

/// Two-phase dense tableau simplex with Bland's rule (deterministic, cycle
/// free). Classifies optimal / infeasible / unbounded; on Optimal the solution
/// carries a dual vector and satisfies |objective - dual_objective| <=
/// tol.dual * (1 + |objective|). Throws InputError on malformed data and
/// SolverFailure if the pivot budget is exhausted.
LpSolution solve(const LinearProgram& prog, const Tolerances& tol = default_tolerances());

}  // namespace mmfloor::optim

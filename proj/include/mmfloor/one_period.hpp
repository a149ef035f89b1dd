#pragma once

#include <vector>

#include "mmfloor/scenario_tree.hpp"
#include "mmfloor/types.hpp"

namespace mmfloor {

// Floor-weighted conditional mean a = sum_i q_i f_i x_i of one atom.
Vector floor_weighted_mean(const OnePeriodAtom& atom);

// Existence criterion for a supermartingale-free density above the floor:
// per atom the support value s(a | T_p), aggregated into v_p = |s|_q with q
// conjugate to p. v_p also equals the optimal expected floor-weighted gain
// under the downside constraint |X^-|_p <= 1.
struct CriterionReport {
  double p = kInf;
  double q = 1.0;
  std::vector<Vector> mean;          // a per atom
  Vector support_values;             // s(a | T_p) per atom
  std::vector<Vector> maximizers;    // attaining h* per atom
  double value = 0.0;                // v_p
};

// Throws NaViolation (location = atom index) when some atom fails the
// relative-interior test. p in {1, 2, inf}.
CriterionReport criterion(const OnePeriodModel& model, double p,
                          const Tolerances& tol = default_tolerances());

// Density g = f + phi(xi) from the moment program with target -a: per atom,
// E(g xi | atom) = 0, g >= f, E(g - f | atom) = nu = mu(-a | conv support).
struct OnePeriodDensity {
  std::vector<Vector> density;     // g per atom, per outcome
  Vector nu;                       // per atom
  double moment_residual = 0.0;    // max atom |E(g xi | atom)|_inf
  double floor_margin = 0.0;       // min over outcomes of g - f
};

OnePeriodDensity construct_density(const OnePeriodModel& model,
                                   const Tolerances& tol = default_tolerances());

// Minimal |g - f|_q over densities feasible per construct_density's moment
// condition; decomposes per atom. q in {1, 2, inf}. The minimum equals v_p of
// criterion() with p conjugate to q.
struct MinNormResult {
  double value = 0.0;
  std::vector<Vector> density;
};

MinNormResult min_norm_density(const OnePeriodModel& model, double q,
                               const Tolerances& tol = default_tolerances());

// Builds the gain X = (gamma_j, xi) attaining v_p: per-atom maximizers h*
// combined with conjugate-optimal atom weights. bound_ok certifies that
// `samples` random feasible strategies never beat value + tol_gauge.
struct AttainmentResult {
  std::vector<Vector> strategy;   // gamma per atom
  std::vector<Vector> payoff;     // X per atom, per outcome
  double achieved = 0.0;          // E(f X)
  double downside = 0.0;          // |X^-|_p
  bool bound_ok = false;
};

AttainmentResult primal_attainment(const OnePeriodModel& model, double p,
                                   const CriterionReport& report, int samples = 1000,
                                   const Tolerances& tol = default_tolerances());

// Independent oracle: v_p for p in {1, inf} as one direct linear program over
// per-atom strategies gamma restricted to the span of the atom's support.
double max_expected_gain_lp(const OnePeriodModel& model, double p,
                            const Tolerances& tol = default_tolerances());

}  // namespace mmfloor

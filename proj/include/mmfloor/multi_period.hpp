#pragma once

#include <vector>

#include "mmfloor/scenario_tree.hpp"
#include "mmfloor/types.hpp"

namespace mmfloor {

struct NaCheck {
  bool holds = false;
  int failing_node = -1;  // first non-leaf node failing the interior test
  Vector separator;
  std::vector<int> checked;  // all non-leaf node ids, in check order
};

// Per-node relative-interior test of the merged increment law.
NaCheck check_na(const ScenarioTree& tree, const Tolerances& tol = default_tolerances());

// Backward value recursion: values_N = floor on leaves and, per non-leaf node,
//   target  a_n = E(values_{n+1} increment | node),
//   gauge  nu_n = mu(-a_n | conv support_n),
//   values_n    = E(values_{n+1} | node) + nu_n.
// The root value equals the expectation of the unnormalized density below.
struct BackwardEnvelope {
  std::vector<AdaptedValues> values;       // index = depth, 0..N
  std::map<int, Vector> targets;           // a_n per non-leaf node
  std::map<int, double> gauge_values;      // nu_n per non-leaf node
  std::map<int, Vector> gauge_witnesses;   // theta per non-leaf node (merged outcomes)
  double root_expectation = 0.0;           // values_0 at the root
};

// floor: per-leaf values, all > 0. Throws NaViolation on a failing node.
BackwardEnvelope backward_envelope(const ScenarioTree& tree, const AdaptedValues& floor,
                                   const Tolerances& tol = default_tolerances());

// Unnormalized density Z = floor * prod z_n along each path, z on a child
// being 1 + phi(increment)/values(child) with phi from the parent's gauge
// witness. E(Z) = root value; Z >= floor pointwise; cZ with c = 1/E(Z) is the
// density of an equivalent martingale measure.
struct DensityCertificate {
  BackwardEnvelope envelope;
  AdaptedValues leaf_density;         // Z per leaf
  std::map<int, double> zeta;         // phi value routed to each non-root node
  std::map<int, double> factor;       // z per non-root node
  double normalizer = 0.0;            // c = 1/E(Z)
};

DensityCertificate construct_martingale_density(const ScenarioTree& tree,
                                                const AdaptedValues& floor,
                                                const Tolerances& tol = default_tolerances());

// Recomputes every certificate invariant from the raw tree, without reusing
// solver bookkeeping. Residuals are relative: each is divided by one plus the
// magnitude of the quantity it checks, so the report is scale-free.
struct CertificateReport {
  double martingale_residual = 0.0;    // max node |E(cZ increment | node)|_inf, scaled
  double normalization_residual = 0.0; // |E(cZ) - 1|
  double tower_residual = 0.0;         // max node, E(Z | node)/partial product vs values_n
  double root_identity_residual = 0.0; // E(Z) vs root value, scaled
  double min_floor_ratio = 0.0;        // min leaves Z / floor
  double min_density = 0.0;            // min leaves cZ
  bool pass = false;
};

CertificateReport verify_certificate(const ScenarioTree& tree, const DensityCertificate& cert,
                                     const AdaptedValues& floor,
                                     const Tolerances& tol = default_tolerances());

// Optimal expected floor-weighted terminal gain sup E(floor * G) over adapted
// strategies with G >= -1 on every leaf; per-node strategy vectors live in the
// span of the node's increment support. Equals root value - E(floor) on every
// no-arbitrage tree. Throws NaViolation when the program is unbounded.
double max_expected_gain_lp(const ScenarioTree& tree, const AdaptedValues& floor,
                            const Tolerances& tol = default_tolerances());

// Doubling strategy for the two-asset-step block tree of the repro module:
// buys 2^j of the first-step asset on block j and rebalances into 2^j + 1 on
// the up branch (in the generator's normalization with down moves of -1).
// Gains stay >= -1 while the expected gain grows linearly in the block count.
struct StrategyResult {
  std::map<int, double> gamma;   // per non-leaf node: holding into the next step
  AdaptedValues leaf_gains;
  double expected_gain = 0.0;
  double min_gain = 0.0;
};

StrategyResult block_doubling_strategy(const ScenarioTree& tree,
                                       const Tolerances& tol = default_tolerances());

}  // namespace mmfloor

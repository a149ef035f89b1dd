#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmfloor/multi_period.hpp"
#include "mmfloor/one_period.hpp"
#include "mmfloor/scenario_tree.hpp"
#include "mmfloor/types.hpp"

namespace mmfloor::repro {

// How an infinite countable model was cut down to a finite one. All three
// generators keep every per-block quantity of the infinite model exact; the
// truncation only reassigns residual mass to inert or lumped tail states.
struct TruncationSpec {
  int blocks = 1;      // J
  int points = 0;      // resulting finite state count
  std::string tail_policy;
};

struct TableEntry {
  double value = 0.0;
  std::string formula;
};

// Named closed-form values; every entry records the formula it came from so
// reports can show what the engine is being compared against.
using ClosedFormTable = std::map<std::string, TableEntry>;

// Single-period chain of two-outcome atoms, one positive and one negative
// move each; the shape behind the d = 1 density-ratio criterion.
struct SignPairSpec {
  Vector xi_pos, xi_neg;      // per block: xi_pos > 0, xi_neg < 0
  Vector f_pos, f_neg;        // floor per outcome, >= 0
  Vector prob_pos, prob_neg;  // unconditional outcome masses, total <= 1
};

struct SignPairModel {
  OnePeriodModel model;  // blocks plus an inert tail atom carrying residual mass
  ClosedFormTable table;
  TruncationSpec spec;
};

// Throws ValidationError on sign-pattern or mass violations.
SignPairModel make_sign_pair_model(const SignPairSpec& spec,
                                   const Tolerances& tol = default_tolerances());

// The geometric instance: block j has xi = (1, -2^-j), masses
// (2^(-2j+1), 2^(-2j)), floor 1; the density-ratio values grow like 2^(j+1).
SignPairModel make_sign_pair_chain(int blocks, const Tolerances& tol = default_tolerances());

// Two-step market over doubling blocks: a zero-increment root step carries the
// block partition, then moves (1, -2^-j) and (2^(m/2), -1). The second-step
// moves are normalized so the down outcome is exactly -1: increments recover
// from price differences without cancellation, and every gauge, envelope and
// strategy quantity is invariant under a per-node positive rescaling.
// One-period slices stay uniformly bounded while the backward recursion's root
// value grows by about 0.707 per block: the certified floor collapses as
// blocks are added.
struct BlockTree {
  ScenarioTree tree;
  ClosedFormTable table;
  TruncationSpec spec;
  std::vector<int> block_nodes;       // depth-1 ids, j = 1..J, then the tail
  std::vector<int> step_nodes;        // depth-2 ids in block-major order
};

BlockTree make_block_tree(int blocks, const Tolerances& tol = default_tolerances());

// Single-period family of `family_size` assets on one atom: asset j pays 2^j
// on one thin state and -1 on a dyadic slab, a martingale under the auxiliary
// measure q_mass; the market measure p_mass reweights by zeta. Lumped even and
// odd tail states keep every moment identity exact.
struct AssetFamilyModel {
  OnePeriodModel model;   // merged support, market weights, floor 1
  ClosedFormTable table;
  TruncationSpec spec;
  Matrix xi;              // raw per-state asset increments (state x asset)
  Vector q_mass, p_mass, zeta;  // raw per-state data, exact dyadics
  std::vector<std::string> labels;  // state names, aligned with rows of xi
};

// family_size >= 1; states >= 2 * family_size required (default 4x) so the
// lumped even tail lies inside every slab. Throws InputError otherwise.
AssetFamilyModel make_asset_family(int family_size, int states = -1,
                                   const Tolerances& tol = default_tolerances());

// Sweep demonstrating that bounded optimal gains do not rescue a uniform
// density floor. The unconstrained floor LP stalls near 4/7 on any finite
// truncation: a low-mass state inside every slab absorbs all slab constraints
// at expectation cost c/2. Capping the density at `cap` restores the mass
// bound c <= 2 cap min_j P(slab_j), which collapses geometrically in J.
struct FloorCollapseRow {
  int family_size = 0;
  double max_gain = 0.0;           // v_inf of the family
  double max_floor = 0.0;          // LP max{c : g >= c, E(g xi) = 0, E(g) = 1}
  double max_floor_capped = 0.0;   // same LP with g <= cap added
  double cap = 0.0;                // sup bound defining the capped program
  double capped_bound = 0.0;       // 2 cap min_j P(slab_j), mass bound on the capped floor
  double z_moment_residual = 0.0;  // max_j |E(zeta^-1 xi^j)| under the market measure
  double min_slab_mass = 0.0;      // min_j E(g* I_slab_j) at the optimal g*
  bool slab_bound_ok = false;      // max_floor <= 2 * min_slab_mass + tol
  bool capped_bound_ok = false;    // max_floor_capped <= capped_bound + tol
};

std::vector<FloorCollapseRow> floor_collapse_report(const std::vector<int>& family_sizes,
                                                    double cap = 8.0,
                                                    const Tolerances& tol = default_tolerances());

}  // namespace mmfloor::repro

#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmfloor/geometry.hpp"
#include "mmfloor/types.hpp"

namespace mmfloor {

// One node of the event tree. `prob` is the transition probability from the
// parent (1 for the root). Depth is derived, never stored.
struct TreeNode {
  int id = 0;
  int parent = -1;  // -1 for the root
  double prob = 1.0;
  Vector price;
};

// Finite filtered market: a rooted tree whose depth-n slice is the time-n
// partition, with price vectors on nodes and a payoff floor on leaves.
// Immutable after construction; construction validates everything and throws
// ValidationError listing all violations at once.
class ScenarioTree {
 public:
  ScenarioTree(int dimension, int horizon, std::vector<TreeNode> nodes,
               std::map<int, double> floor = {},
               const Tolerances& tol = default_tolerances());

  static ScenarioTree from_json(const std::string& text,
                                const Tolerances& tol = default_tolerances());
  static ScenarioTree load(const std::string& path,
                           const Tolerances& tol = default_tolerances());
  std::string to_json() const;
  void save(const std::string& path) const;

  int dimension() const { return dimension_; }
  int horizon() const { return horizon_; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  const TreeNode& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  int depth(int id) const { return depths_[static_cast<size_t>(id)]; }
  const std::vector<int>& children(int id) const { return children_[static_cast<size_t>(id)]; }
  bool is_leaf(int id) const { return children(id).empty(); }
  const std::vector<int>& nodes_at_depth(int n) const { return by_depth_[static_cast<size_t>(n)]; }
  const std::vector<int>& leaves() const { return by_depth_[static_cast<size_t>(horizon_)]; }
  // Unconditional probability of the node's cell (product along the path).
  double path_prob(int id) const { return path_probs_[static_cast<size_t>(id)]; }
  double floor(int leaf_id) const;
  bool has_explicit_floor() const { return !floor_.empty(); }

 private:
  int dimension_ = 0;
  int horizon_ = 0;
  std::vector<TreeNode> nodes_;
  std::map<int, double> floor_;
  std::vector<int> depths_;
  std::vector<std::vector<int>> children_;
  std::vector<std::vector<int>> by_depth_;
  std::vector<double> path_probs_;
};

// Conditional law of the price increment at a non-leaf node: children with
// coincident increment vectors (within tol_feas) are merged by summing their
// transition probabilities. outcome_of_child maps positions in child_ids to
// rows of dist.points.
struct IncrementView {
  DiscreteDistribution dist;
  std::vector<int> child_ids;
  std::vector<int> outcome_of_child;
};

IncrementView increments_view(const ScenarioTree& tree, int node_id,
                              const Tolerances& tol = default_tolerances());

DiscreteDistribution increments_distribution(const ScenarioTree& tree, int node_id,
                                             const Tolerances& tol = default_tolerances());

// Scalar values attached to every node of one depth level.
struct AdaptedValues {
  int depth = 0;
  std::map<int, double> values;

  double at(int id) const;
};

AdaptedValues constant_values(const ScenarioTree& tree, int depth, double value);
AdaptedValues leaf_floor_values(const ScenarioTree& tree);

// One atom of a single-period market: atom probability, conditional increment
// law, and one floor value per outcome of that law.
struct OnePeriodAtom {
  double prob = 1.0;
  DiscreteDistribution increments;
  Vector floor;
};

struct OnePeriodModel {
  std::vector<OnePeriodAtom> atoms;

  Index dimension() const { return atoms.empty() ? 0 : atoms.front().increments.dimension(); }
};

void validate_model(const OnePeriodModel& model, const Tolerances& tol = default_tolerances());

// Slices the step depth -> depth+1 into a single-period model. Atoms are the
// depth-n nodes with their unconditional probabilities; the floor of a merged
// outcome is the conditional-probability-weighted average of next_values over
// the children it absorbed.
OnePeriodModel one_period_view(const ScenarioTree& tree, int depth,
                               const AdaptedValues& next_values,
                               const Tolerances& tol = default_tolerances());

// E(values | F_depth-1): per node, transition-probability-weighted average of
// its children's values.
AdaptedValues conditional_expectation(const ScenarioTree& tree, const AdaptedValues& values);

// (sum_nodes P(node) |v|^q)^(1/q); q = inf gives max |v|. Uses unconditional
// node probabilities, which sum to 1 across any depth level.
double lq_norm(const ScenarioTree& tree, const AdaptedValues& values, double q);

}  // namespace mmfloor

#include "mmfloor/multi_period.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mmfloor/geometry.hpp"
#include "mmfloor/linear_program.hpp"

namespace mmfloor {

namespace {

void require_positive_floor(const ScenarioTree& tree, const AdaptedValues& floor) {
  if (floor.depth != tree.horizon())
    throw InputError("floor values must sit on the leaf level");
  for (int id : tree.leaves())
    if (!(floor.at(id) > 0.0))
      throw InputError("floor at leaf " + std::to_string(id) + " is not strictly positive");
}

}  // namespace

NaCheck check_na(const ScenarioTree& tree, const Tolerances& tol) {
  NaCheck out;
  out.holds = true;
  for (int id = 0; id < tree.node_count(); ++id) {
    if (tree.is_leaf(id)) continue;
    out.checked.push_back(id);
    IncrementView view = increments_view(tree, id, tol);
    InteriorReport interior = origin_in_relative_interior(view.dist.points, tol);
    if (!interior.holds) {
      out.holds = false;
      out.failing_node = id;
      out.separator = interior.separator;
      return out;
    }
  }
  return out;
}

BackwardEnvelope backward_envelope(const ScenarioTree& tree, const AdaptedValues& floor,
                                   const Tolerances& tol) {
  require_positive_floor(tree, floor);
  BackwardEnvelope env;
  env.values.assign(static_cast<size_t>(tree.horizon()) + 1, AdaptedValues{});
  env.values.back() = floor;
  for (int n = tree.horizon() - 1; n >= 0; --n) {
    AdaptedValues level;
    level.depth = n;
    const AdaptedValues& next = env.values[static_cast<size_t>(n) + 1];
    for (int id : tree.nodes_at_depth(n)) {
      IncrementView view = increments_view(tree, id, tol);
      // Value mass routed to each merged outcome.
      Vector routed = Vector::Zero(view.dist.size());
      double expectation = 0.0;
      for (size_t k = 0; k < view.child_ids.size(); ++k) {
        const int cid = view.child_ids[k];
        const double mass = tree.node(cid).prob * next.at(cid);
        routed(view.outcome_of_child[k]) += mass;
        expectation += mass;
      }
      Vector target = view.dist.points.transpose() * routed;
      GaugeResult gauge;
      try {
        gauge = minkowski_gauge(-target, view.dist.points, tol);
      } catch (const NaViolation& e) {
        throw NaViolation("node " + std::to_string(id) + ": " + e.what(), id, e.separator());
      }
      env.targets[id] = std::move(target);
      env.gauge_values[id] = gauge.value;
      env.gauge_witnesses[id] = std::move(gauge.witness);
      level.values[id] = expectation + gauge.value;
    }
    env.values[static_cast<size_t>(n)] = std::move(level);
  }
  env.root_expectation = env.values.front().at(0);
  return env;
}

DensityCertificate construct_martingale_density(const ScenarioTree& tree,
                                                const AdaptedValues& floor,
                                                const Tolerances& tol) {
  DensityCertificate cert;
  cert.envelope = backward_envelope(tree, floor, tol);

  std::vector<double> partial(static_cast<size_t>(tree.node_count()), 1.0);
  for (int id = 0; id < tree.node_count(); ++id) {
    if (tree.is_leaf(id)) continue;
    IncrementView view = increments_view(tree, id, tol);
    const Vector& theta = cert.envelope.gauge_witnesses.at(id);
    const AdaptedValues& next = cert.envelope.values[static_cast<size_t>(tree.depth(id)) + 1];
    for (size_t k = 0; k < view.child_ids.size(); ++k) {
      const int cid = view.child_ids[k];
      const int outcome = view.outcome_of_child[k];
      const double zeta = theta(outcome) / view.dist.weights(outcome);
      cert.zeta[cid] = zeta;
      cert.factor[cid] = 1.0 + zeta / next.at(cid);
      partial[static_cast<size_t>(cid)] = partial[static_cast<size_t>(id)] * cert.factor[cid];
    }
  }
  cert.leaf_density.depth = tree.horizon();
  double expectation = 0.0;
  for (int leaf : tree.leaves()) {
    const double z = floor.at(leaf) * partial[static_cast<size_t>(leaf)];
    cert.leaf_density.values[leaf] = z;
    expectation += tree.path_prob(leaf) * z;
  }
  cert.normalizer = 1.0 / expectation;
  return cert;
}

CertificateReport verify_certificate(const ScenarioTree& tree, const DensityCertificate& cert,
                                     const AdaptedValues& floor, const Tolerances& tol) {
  require_positive_floor(tree, floor);
  CertificateReport report;
  const double c = cert.normalizer;

  // Conditional expectations of Z by one backward sweep.
  std::vector<double> cond(static_cast<size_t>(tree.node_count()), 0.0);
  for (int leaf : tree.leaves())
    cond[static_cast<size_t>(leaf)] = cert.leaf_density.at(leaf);
  for (int id = tree.node_count() - 1; id >= 0; --id) {
    if (tree.is_leaf(id)) continue;
    double acc = 0.0;
    for (int cid : tree.children(id))
      acc += tree.node(cid).prob * cond[static_cast<size_t>(cid)];
    cond[static_cast<size_t>(id)] = acc;
  }

  double total = 0.0;
  report.min_floor_ratio = kInf;
  report.min_density = kInf;
  for (int leaf : tree.leaves()) {
    const double z = cert.leaf_density.at(leaf);
    total += tree.path_prob(leaf) * z;
    report.min_floor_ratio = std::min(report.min_floor_ratio, z / floor.at(leaf));
    report.min_density = std::min(report.min_density, c * z);
  }
  report.normalization_residual = std::abs(c * total - 1.0);
  report.root_identity_residual = std::abs(total - cert.envelope.root_expectation) /
                                  (1.0 + std::abs(cert.envelope.root_expectation));

  // Martingale condition and the tower identity, node by node.
  std::vector<double> partial(static_cast<size_t>(tree.node_count()), 1.0);
  for (int id = 0; id < tree.node_count(); ++id) {
    if (id > 0)
      partial[static_cast<size_t>(id)] =
          partial[static_cast<size_t>(tree.node(id).parent)] * cert.factor.at(id);
    const double beta = cert.envelope.values[static_cast<size_t>(tree.depth(id))].at(id);
    const double tower =
        std::abs(cond[static_cast<size_t>(id)] / partial[static_cast<size_t>(id)] - beta) /
        (1.0 + std::abs(beta));
    report.tower_residual = std::max(report.tower_residual, tower);
    if (tree.is_leaf(id)) continue;

    Vector moment = Vector::Zero(tree.dimension());
    double scale = 0.0;
    for (int cid : tree.children(id)) {
      Vector delta = tree.node(cid).price - tree.node(id).price;
      const double mass = tree.node(cid).prob * c * cond[static_cast<size_t>(cid)];
      moment += mass * delta;
      scale += std::abs(mass) * delta.cwiseAbs().maxCoeff();
    }
    report.martingale_residual = std::max(
        report.martingale_residual, moment.cwiseAbs().maxCoeff() / (1.0 + scale));
  }

  report.pass = report.martingale_residual <= tol.feas &&
                report.normalization_residual <= tol.feas &&
                report.tower_residual <= tol.feas &&
                report.root_identity_residual <= tol.feas &&
                report.min_floor_ratio >= 1.0 - 1e-12 && report.min_density > 0.0;
  return report;
}

double max_expected_gain_lp(const ScenarioTree& tree, const AdaptedValues& floor,
                            const Tolerances& tol) {
  require_positive_floor(tree, floor);

  std::vector<IncrementView> views(static_cast<size_t>(tree.node_count()));
  std::vector<Matrix> Y(static_cast<size_t>(tree.node_count()));
  std::vector<Index> offset(static_cast<size_t>(tree.node_count()), -1);
  Index n_vars = 0;
  for (int id = 0; id < tree.node_count(); ++id) {
    if (tree.is_leaf(id)) continue;
    views[static_cast<size_t>(id)] = increments_view(tree, id, tol);
    SpanBasis span = linear_span(views[static_cast<size_t>(id)].dist.points, tol);
    Y[static_cast<size_t>(id)] = views[static_cast<size_t>(id)].dist.points * span.basis;
    offset[static_cast<size_t>(id)] = n_vars;
    n_vars += span.rank();
  }

  const auto& leaves = tree.leaves();
  optim::LinearProgram lp;
  lp.sense = optim::Sense::Maximize;
  lp.cost = Vector::Zero(n_vars);
  lp.ineq_matrix = Matrix::Zero(static_cast<Index>(leaves.size()), n_vars);
  lp.ineq_rhs = Vector::Ones(static_cast<Index>(leaves.size()));
  lp.lower_bounds = Vector::Constant(n_vars, -kInf);

  for (size_t l = 0; l < leaves.size(); ++l) {
    const int leaf = leaves[l];
    const double mass = tree.path_prob(leaf) * floor.at(leaf);
    // Gain along the path: every edge contributes (gamma_parent, increment).
    for (int id = leaf; id != 0; id = tree.node(id).parent) {
      const int parent = tree.node(id).parent;
      const auto& view = views[static_cast<size_t>(parent)];
      const auto pos = std::find(view.child_ids.begin(), view.child_ids.end(), id);
      const Index outcome = view.outcome_of_child[static_cast<size_t>(
          std::distance(view.child_ids.begin(), pos))];
      const Index off = offset[static_cast<size_t>(parent)];
      const Index r = Y[static_cast<size_t>(parent)].cols();
      lp.ineq_matrix.row(static_cast<Index>(l)).segment(off, r) -=
          Y[static_cast<size_t>(parent)].row(outcome);
      lp.cost.segment(off, r) +=
          mass * Y[static_cast<size_t>(parent)].row(outcome).transpose();
    }
  }

  optim::LpSolution sol = optim::solve(lp, tol);
  if (sol.status == optim::LpStatus::Unbounded)
    throw NaViolation("expected terminal gain unbounded over bounded-loss strategies", -1,
                      Vector());
  if (sol.status != optim::LpStatus::Optimal)
    throw SolverFailure("tree gain program did not solve");
  return sol.objective;
}

StrategyResult block_doubling_strategy(const ScenarioTree& tree, const Tolerances& tol) {
  if (tree.dimension() != 1 || tree.horizon() != 3)
    throw InputError("doubling strategy needs the one-asset three-step block layout");

  StrategyResult out;
  out.gamma[0] = 0.0;
  std::map<int, int> block_index;
  int j = 0;
  for (int id : tree.nodes_at_depth(1)) {
    bool moves = false;
    for (int cid : tree.children(id))
      if (std::abs(tree.node(cid).price(0) - tree.node(id).price(0)) > tol.feas) moves = true;
    if (moves) {
      block_index[id] = ++j;
      out.gamma[id] = std::exp2(j);
    } else {
      out.gamma[id] = 0.0;
    }
  }
  for (int id : tree.nodes_at_depth(2)) {
    const int parent = tree.node(id).parent;
    const bool up = tree.node(id).price(0) - tree.node(parent).price(0) > tol.feas;
    auto it = block_index.find(parent);
    if (up && it != block_index.end()) {
      // Down move is -1 in the generator's normalization, so this holding
      // turns the up-branch block gain 2^jb into an exact -1 on the down leaf.
      const int jb = it->second;
      out.gamma[id] = std::exp2(jb) + 1.0;
    } else {
      out.gamma[id] = 0.0;
    }
  }

  out.leaf_gains.depth = tree.horizon();
  out.min_gain = kInf;
  for (int leaf : tree.leaves()) {
    double gain = 0.0;
    for (int id = leaf; id != 0; id = tree.node(id).parent) {
      const int parent = tree.node(id).parent;
      gain += out.gamma.at(parent) * (tree.node(id).price(0) - tree.node(parent).price(0));
    }
    out.leaf_gains.values[leaf] = gain;
    out.expected_gain += tree.path_prob(leaf) * gain;
    out.min_gain = std::min(out.min_gain, gain);
  }
  return out;
}

}  // namespace mmfloor

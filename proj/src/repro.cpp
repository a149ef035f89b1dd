#include "mmfloor/repro.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mmfloor/linear_program.hpp"

namespace mmfloor::repro {

namespace {

std::string idx(const std::string& name, int j) {
  return name + "[" + std::to_string(j) + "]";
}

OnePeriodAtom inert_atom(double prob) {
  OnePeriodAtom atom;
  atom.prob = prob;
  atom.increments.points = Matrix::Zero(1, 1);
  atom.increments.weights = Vector::Ones(1);
  atom.floor = Vector::Ones(1);
  return atom;
}

}  // namespace

SignPairModel make_sign_pair_model(const SignPairSpec& spec, const Tolerances& tol) {
  const Index J = spec.xi_pos.size();
  std::vector<std::string> bad;
  if (J < 1) bad.push_back("at least one block required");
  for (const Vector* v : {&spec.xi_neg, &spec.f_pos, &spec.f_neg, &spec.prob_pos,
                          &spec.prob_neg})
    if (v->size() != J) bad.push_back("block arrays must share one length");
  if (!bad.empty()) throw ValidationError("invalid sign-pair specification", bad);

  double total = 0.0;
  for (Index j = 0; j < J; ++j) {
    const std::string tag = "block " + std::to_string(j + 1);
    if (!(spec.xi_pos(j) > 0.0)) bad.push_back(tag + ": positive move must be > 0");
    if (!(spec.xi_neg(j) < 0.0)) bad.push_back(tag + ": negative move must be < 0");
    if (spec.f_pos(j) < 0.0 || spec.f_neg(j) < 0.0) bad.push_back(tag + ": negative floor");
    if (!(spec.prob_pos(j) > 0.0) || !(spec.prob_neg(j) > 0.0))
      bad.push_back(tag + ": outcome masses must be positive");
    total += spec.prob_pos(j) + spec.prob_neg(j);
  }
  if (total > 1.0 + tol.feas)
    bad.push_back("outcome masses sum to " + std::to_string(total) + " > 1");
  if (!bad.empty()) throw ValidationError("invalid sign-pair specification", bad);

  SignPairModel out;
  out.spec.blocks = static_cast<int>(J);
  const double residual = 1.0 - total;

  double v1 = 0.0, v2_sq = 0.0, vinf = 0.0, erho = 0.0;
  for (Index j = 0; j < J; ++j) {
    const double pp = spec.prob_pos(j), pn = spec.prob_neg(j);
    const double xp = spec.xi_pos(j), xn = spec.xi_neg(j);
    OnePeriodAtom atom;
    atom.prob = pp + pn;
    atom.increments.points = Matrix(2, 1);
    atom.increments.points << xp, xn;
    atom.increments.weights = Vector(2);
    atom.increments.weights << pp / atom.prob, pn / atom.prob;
    atom.floor = Vector(2);
    atom.floor << spec.f_pos(j), spec.f_neg(j);
    out.model.atoms.push_back(std::move(atom));

    // Density-ratio pair: the value the feasible density must reach on the
    // opposite outcome of the block.
    const double rho_p = spec.f_neg(j) * std::abs(xn / xp) * pn / pp;
    const double rho_n = spec.f_pos(j) * std::abs(xp / xn) * pp / pn;
    const int label = static_cast<int>(j) + 1;
    out.table[idx("rho_pos", label)] = {rho_p, "f_neg |xi_neg/xi_pos| P_neg/P_pos"};
    out.table[idx("rho_neg", label)] = {rho_n, "f_pos |xi_pos/xi_neg| P_pos/P_neg"};
    erho += rho_p * pp + rho_n * pn;

    const double gap_p = std::max(rho_p - spec.f_pos(j), 0.0);
    const double gap_n = std::max(rho_n - spec.f_neg(j), 0.0);
    v1 += gap_p * pp + gap_n * pn;
    v2_sq += gap_p * gap_p * pp + gap_n * gap_n * pn;
    vinf = std::max(vinf, gap_p + gap_n);
    out.table[idx("v_term[p=inf]", label)] = {gap_p * pp + gap_n * pn,
                                              "((rho - f)^+ mass) of the block"};
  }
  out.table["Erho"] = {erho, "sum rho P over all outcomes"};
  out.table["v[p=inf]"] = {v1, "|(rho - f)^+|_1"};
  out.table["v[p=2]"] = {std::sqrt(v2_sq), "|(rho - f)^+|_2"};
  out.table["v[p=1]"] = {vinf, "max blocks (rho_pos - f_pos)^+ + (rho_neg - f_neg)^+"};
  out.table["tail_mass"] = {residual, "1 - sum of block masses"};

  if (residual > tol.feas) {
    out.model.atoms.push_back(inert_atom(residual));
    out.spec.tail_policy = "inert zero-increment atom with unit floor";
  } else {
    out.spec.tail_policy = "none: block masses already sum to 1";
  }
  out.spec.points = static_cast<int>(2 * J) + (residual > tol.feas ? 1 : 0);
  validate_model(out.model, tol);
  return out;
}

SignPairModel make_sign_pair_chain(int blocks, const Tolerances& tol) {
  if (blocks < 1) throw InputError("block count must be at least 1");
  SignPairSpec spec;
  spec.xi_pos = Vector::Ones(blocks);
  spec.xi_neg = Vector(blocks);
  spec.f_pos = Vector::Ones(blocks);
  spec.f_neg = Vector::Ones(blocks);
  spec.prob_pos = Vector(blocks);
  spec.prob_neg = Vector(blocks);
  for (int j = 1; j <= blocks; ++j) {
    spec.xi_neg(j - 1) = -std::exp2(-j);
    spec.prob_pos(j - 1) = std::exp2(-2 * j + 1);
    spec.prob_neg(j - 1) = std::exp2(-2 * j);
  }
  SignPairModel out = make_sign_pair_model(spec, tol);
  double erho = 0.0, v1 = 0.0;
  for (int j = 1; j <= blocks; ++j) {
    erho += std::exp2(-3 * j) + std::exp2(-j + 1);
    v1 += std::exp2(1 - j) - std::exp2(-2 * j);
    out.table[idx("Erho_term", j)] = {std::exp2(-3 * j) + std::exp2(-j + 1),
                                      "2^-3j + 2^(1-j)"};
  }
  out.table["Erho"] = {erho, "sum 2^-3j + 2^(1-j)"};
  out.table["v[p=inf]"] = {v1, "sum 2^(1-j) - 4^-j"};
  out.table["v_limit[p=inf]"] = {5.0 / 3.0, "sum_j 2^(1-j) - 4^-j over all j"};
  return out;
}

BlockTree make_block_tree(int blocks, const Tolerances& tol) {
  if (blocks < 1) throw InputError("block count must be at least 1");
  const int J = blocks;
  std::vector<TreeNode> nodes;
  auto push = [&nodes](int parent, double prob, double price) {
    TreeNode node;
    node.id = static_cast<int>(nodes.size());
    node.parent = parent;
    node.prob = prob;
    node.price = Vector::Constant(1, price);
    nodes.push_back(std::move(node));
    return node.id;
  };

  std::vector<int> block_nodes, step_nodes;
  push(-1, 1.0, 0.0);
  // Zero-increment first step: the root splits into the block partition.
  for (int j = 1; j <= J; ++j) block_nodes.push_back(push(0, 3.0 * std::exp2(-2 * j), 0.0));
  const int tail1 = push(0, std::exp2(-2 * J), 0.0);
  block_nodes.push_back(tail1);

  for (int j = 1; j <= J; ++j) {
    step_nodes.push_back(push(block_nodes[static_cast<size_t>(j - 1)], 2.0 / 3.0, 1.0));
    step_nodes.push_back(
        push(block_nodes[static_cast<size_t>(j - 1)], 1.0 / 3.0, -std::exp2(-j)));
  }
  const int tail2 = push(tail1, 1.0, 0.0);
  step_nodes.push_back(tail2);

  for (int j = 1; j <= J; ++j) {
    for (int side = 0; side < 2; ++side) {
      const int m = 2 * j - 1 + side;  // odd on the up branch, even on the down branch
      const int node = step_nodes[static_cast<size_t>(2 * (j - 1) + side)];
      const double base = nodes[static_cast<size_t>(node)].price(0);
      // Outcomes (2^(m/2), -1): the natural (1, -2^(-m/2)) scale loses the tiny
      // down move against the O(1) parent price once 2^(-m/2) drops below
      // eps * |base|. A positive per-node rescaling keeps all ratios, gauges,
      // envelopes and strategy gains identical and the recovery exact.
      push(node, 0.5, base + std::exp2(0.5 * m));
      push(node, 0.5, base - 1.0);
    }
  }
  push(tail2, 1.0, 0.0);

  BlockTree out{ScenarioTree(1, 3, std::move(nodes), {}, tol), {}, {}, std::move(block_nodes),
                std::move(step_nodes)};
  out.spec.blocks = J;
  out.spec.points = out.tree.node_count();
  out.spec.tail_policy = "zero-increment chain of mass 4^-J";

  double enu0 = 0.0, ebeta0 = std::exp2(-2 * J), eg = 0.0;
  double slice1 = 0.0, slice2 = 0.0;
  for (int m = 1; m <= 2 * J; ++m) {
    const double root_m = std::exp2(0.5 * m);
    out.table[idx("a1", m)] = {(root_m - 1.0) / 2.0, "(2^(m/2) - 1) / 2"};
    out.table[idx("nu1", m)] = {(root_m - 1.0) / 2.0, "(2^(m/2) - 1) / 2"};
    out.table[idx("beta1", m)] = {(root_m + 1.0) / 2.0, "(2^(m/2) + 1) / 2"};
    slice2 += (std::exp2(-0.5 * m) - std::exp2(-m)) / 2.0;
  }
  for (int j = 1; j <= J; ++j) {
    const double a0 = (std::exp2(j - 0.5) + 0.5 - std::exp2(-j - 1)) / 3.0;
    const double nu0 = std::exp2(j) * a0;
    const double ebeta1 = (std::exp2(j - 0.5) + std::exp2(j - 1) + 1.5) / 3.0;
    out.table[idx("a0", j)] = {a0, "(2^(j-1/2) + 1/2 - 2^(-j-1)) / 3"};
    out.table[idx("nu0", j)] = {nu0, "2^j a0[j]"};
    out.table[idx("beta0", j)] = {ebeta1 + nu0, "E(beta1 | block) + nu0[j]"};
    const double enu0_term = std::exp2(-0.5) + std::exp2(-j - 1) - std::exp2(-2 * j - 1);
    out.table[idx("Enu0_term", j)] = {enu0_term, "2^(-1/2) + 2^(-j-1) - 2^(-2j-1)"};
    enu0 += enu0_term;
    ebeta0 += 3.0 * std::exp2(-2 * j) * (ebeta1 + nu0);
    eg += std::exp2(-0.5) + std::exp2(-j) + std::exp2(-j - 0.5) - std::exp2(1 - 2 * j);
    slice1 += std::exp2(1 - j) - std::exp2(-2 * j);
    out.table[idx("P_block", j)] = {3.0 * std::exp2(-2 * j), "3 4^-j"};
  }
  out.table["Enu0"] = {enu0, "sum Enu0_term, grows by 2^(-1/2) per block"};
  out.table["Ebeta0"] = {ebeta0, "sum P_block beta0 + tail mass"};
  out.table["EG_doubling"] = {eg, "expected gain of the doubling strategy"};
  out.table["slice_v[1]"] = {slice1, "sum 2^(1-j) - 4^-j"};
  out.table["slice_v[2]"] = {slice2, "sum (2^(-m/2) - 2^-m) / 2"};
  out.table["slice_v_limit[1]"] = {5.0 / 3.0, "limit of slice_v[1]"};
  out.table["slice_v_limit[2]"] = {std::sqrt(0.5), "limit of slice_v[2]"};
  out.table["tail_mass"] = {std::exp2(-2 * J), "4^-J"};
  return out;
}

AssetFamilyModel make_asset_family(int family_size, int states, const Tolerances& tol) {
  if (family_size < 1) throw InputError("family size must be at least 1");
  const int M = states < 0 ? 4 * family_size : states;
  if (M < 2 * family_size)
    throw InputError("state budget " + std::to_string(M) + " cannot host " +
                     std::to_string(family_size) + " assets (need at least twice as many)");
  if (M % 2 != 0) throw InputError("state budget must be even");
  const int J = family_size;
  const Index n = 2 * M + 2;  // raw points 1..2M plus the two lumped tails

  AssetFamilyModel out;
  out.q_mass = Vector(n);
  out.zeta = Vector(n);
  out.xi = Matrix::Zero(n, J);
  for (int point = 1; point <= 2 * M; ++point) {
    const Index row = point - 1;
    out.labels.push_back(std::to_string(point));
    const int k = (point + 1) / 2;
    out.q_mass(row) = std::exp2(-k - 1);  // Q{2k-1} = Q{2k} = 2^(-k-1)
    if (point % 2 == 0) {
      out.zeta(row) = 0.75;
      for (int j = 1; j <= std::min(point / 2, J); ++j) out.xi(row, j - 1) = -1.0;
    } else if (point % 4 == 1) {
      const int i = (point + 3) / 4;  // point = 4i - 3
      out.zeta(row) = std::exp2(i - 1);
      if (i <= J) out.xi(row, i - 1) = std::exp2(i);
    } else {
      out.zeta(row) = 0.75;
    }
  }
  out.labels.push_back("even-tail");
  out.labels.push_back("odd-tail");
  out.q_mass(n - 2) = out.q_mass(n - 1) = std::exp2(-M - 1);
  out.zeta(n - 2) = 0.75;
  out.zeta(n - 1) = std::exp2(M / 2) + 0.25;
  out.xi.row(n - 2).setConstant(-1.0);
  out.p_mass = (out.zeta.array() * out.q_mass.array()).matrix();

  // Merge coincident increment rows under the market measure.
  std::vector<Index> rep;
  std::vector<double> mass;
  for (Index row = 0; row < n; ++row) {
    Index hit = -1;
    for (size_t k = 0; k < rep.size(); ++k)
      if ((out.xi.row(rep[k]) - out.xi.row(row)).cwiseAbs().maxCoeff() <= tol.feas) {
        hit = static_cast<Index>(k);
        break;
      }
    if (hit < 0) {
      rep.push_back(row);
      mass.push_back(0.0);
      hit = static_cast<Index>(rep.size()) - 1;
    }
    mass[static_cast<size_t>(hit)] += out.p_mass(row);
  }
  OnePeriodAtom atom;
  atom.prob = 1.0;
  atom.increments.points = Matrix(static_cast<Index>(rep.size()), J);
  atom.increments.weights = Vector(static_cast<Index>(rep.size()));
  for (size_t k = 0; k < rep.size(); ++k) {
    atom.increments.points.row(static_cast<Index>(k)) = out.xi.row(rep[k]);
    atom.increments.weights(static_cast<Index>(k)) = mass[k];
  }
  atom.floor = Vector::Ones(static_cast<Index>(rep.size()));
  out.model.atoms.push_back(std::move(atom));
  validate_model(out.model, tol);

  out.spec.blocks = J;
  out.spec.points = static_cast<int>(n);
  out.spec.tail_policy = "lumped even and odd tails of mass 2^-(M+1) each";
  for (int j = 1; j <= J; ++j) {
    out.table[idx("EQ_xi", j)] = {(out.xi.transpose() * out.q_mass)(j - 1),
                                  "2^j Q(spike_j) - Q(slab_j) = 0"};
    out.table[idx("EP_xi", j)] = {0.5 - 0.75 * std::exp2(-j), "1/2 - (3/4) 2^-j"};
    out.table[idx("Q_slab", j)] = {std::exp2(-j), "2^-j"};
    out.table[idx("P_slab", j)] = {0.75 * std::exp2(-j), "(3/4) 2^-j"};
  }
  out.table["mass_Q"] = {out.q_mass.sum(), "must be exactly 1"};
  out.table["mass_P"] = {out.p_mass.sum(), "must be exactly 1"};
  out.table["gain_bound"] = {0.75, "1/2 + (3/4) sum 4^-j"};
  out.table["zeta_tail"] = {std::exp2(M / 2) + 0.25, "balances E_Q zeta = 1"};
  return out;
}

std::vector<FloorCollapseRow> floor_collapse_report(const std::vector<int>& family_sizes,
                                                    double cap, const Tolerances& tol) {
  if (!(cap > 0.0)) throw InputError("floor cap must be positive");
  std::vector<FloorCollapseRow> rows;
  for (int J : family_sizes) {
    AssetFamilyModel fam = make_asset_family(J, -1, tol);
    FloorCollapseRow row;
    row.family_size = J;
    row.max_gain = criterion(fam.model, kInf, tol).value;
    row.z_moment_residual =
        (fam.xi.transpose() * (fam.p_mass.array() / fam.zeta.array()).matrix())
            .cwiseAbs()
            .maxCoeff();

    // Best uniform floor: max c with g >= c, E(g xi) = 0, E g = 1. The
    // optimum is constant on every class of coincident increment rows, so the
    // merged law gives the same value while keeping all masses well above the
    // pivot tolerance (raw tail states carry masses near 2^-(M+1)).
    const DiscreteDistribution& law = fam.model.atoms.front().increments;
    const Index n = law.size();
    optim::LinearProgram lp;
    lp.sense = optim::Sense::Maximize;
    lp.cost = Vector::Zero(n + 1);
    lp.cost(n) = 1.0;
    lp.eq_matrix = Matrix::Zero(J + 1, n + 1);
    lp.eq_matrix.block(0, 0, J, n) =
        law.points.transpose() * law.weights.asDiagonal();
    lp.eq_matrix.row(J).head(n) = law.weights.transpose();
    lp.eq_rhs = Vector::Zero(J + 1);
    lp.eq_rhs(J) = 1.0;
    lp.ineq_matrix = Matrix::Zero(n, n + 1);
    lp.ineq_matrix.leftCols(n) = -Matrix::Identity(n, n);
    lp.ineq_matrix.col(n).setOnes();
    lp.ineq_rhs = Vector::Zero(n);
    optim::LpSolution sol = optim::solve(lp, tol);
    if (sol.status != optim::LpStatus::Optimal)
      throw SolverFailure("floor program did not solve");
    row.max_floor = sol.objective;

    row.min_slab_mass = kInf;
    for (int j = 0; j < J; ++j) {
      double slab = 0.0;
      for (Index m = 0; m < n; ++m)
        if (law.points(m, j) == -1.0) slab += law.weights(m) * sol.primal(m);
      row.min_slab_mass = std::min(row.min_slab_mass, slab);
    }
    row.slab_bound_ok = row.max_floor <= 2.0 * row.min_slab_mass + tol.dual;

    // Same program among densities bounded by `cap`. The deepest slab then
    // obeys E(g I_slab_J) <= cap P(slab_J), so the floor it can hold decays
    // like 2 cap P(slab_J) = 1.5 cap 2^-J instead of stalling.
    lp.ineq_matrix.conservativeResize(2 * n, n + 1);
    lp.ineq_matrix.bottomRows(n).setZero();
    lp.ineq_matrix.bottomRows(n).leftCols(n) = Matrix::Identity(n, n);
    lp.ineq_rhs.conservativeResize(2 * n);
    lp.ineq_rhs.tail(n).setConstant(cap);
    optim::LpSolution capped = optim::solve(lp, tol);
    if (capped.status != optim::LpStatus::Optimal)
      throw SolverFailure("capped floor program did not solve");
    row.max_floor_capped = capped.objective;
    row.cap = cap;
    row.capped_bound = 1.5 * cap * std::exp2(-J);
    row.capped_bound_ok = row.max_floor_capped <= row.capped_bound + tol.dual;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mmfloor::repro

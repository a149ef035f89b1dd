#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mmfloor/multi_period.hpp"
#include "mmfloor/one_period.hpp"
#include "mmfloor/repro.hpp"

using namespace mmfloor;
using namespace mmfloor::repro;

namespace {

bool close(double x, double y, double tol = 1e-12) {
  return std::abs(x - y) <= tol * (1.0 + std::abs(y));
}

}  // namespace

TEST_CASE("sign-pair chain reproduces the dyadic ratio table") {
  SignPairModel chain = make_sign_pair_chain(6);
  CHECK(chain.spec.blocks == 6);
  CHECK(chain.spec.points == 13);  // 12 block outcomes plus the tail atom
  CHECK(chain.model.atoms.size() == 7);

  for (int j = 1; j <= 6; ++j) {
    CHECK(close(chain.table.at("rho_pos[" + std::to_string(j) + "]").value,
                std::exp2(-j - 1)));
    CHECK(close(chain.table.at("rho_neg[" + std::to_string(j) + "]").value,
                std::exp2(j + 1)));
  }
  // Partial sums of E rho and the p = inf criterion.
  double erho = 0.0, v1 = 0.0;
  for (int j = 1; j <= 6; ++j) {
    erho += std::exp2(-3 * j) + std::exp2(1 - j);
    v1 += std::exp2(1 - j) - std::exp2(-2 * j);
  }
  CHECK(close(chain.table.at("Erho").value, erho));
  CHECK(close(chain.table.at("v[p=inf]").value, v1));
  CHECK(close(chain.table.at("v_limit[p=inf]").value, 5.0 / 3.0));

  for (double p : {1.0, 2.0, kInf}) {
    CriterionReport rep = criterion(chain.model, p);
    const char* key = p == 1.0 ? "v[p=1]" : (p == 2.0 ? "v[p=2]" : "v[p=inf]");
    CHECK(close(rep.value, chain.table.at(key).value, 1e-9));
  }
  OnePeriodDensity dens = construct_density(chain.model);
  CHECK(dens.moment_residual <= 1e-9);
  CHECK(dens.floor_margin >= -1e-12);
}

TEST_CASE("custom sign-pair blocks agree with the engine") {
  SignPairSpec spec;
  spec.xi_pos = Vector(2);
  spec.xi_pos << 0.5, 2.0;
  spec.xi_neg = Vector(2);
  spec.xi_neg << -1.0, -0.125;
  spec.f_pos = Vector(2);
  spec.f_pos << 1.0, 0.25;
  spec.f_neg = Vector(2);
  spec.f_neg << 2.0, 1.0;
  spec.prob_pos = Vector(2);
  spec.prob_pos << 0.3, 0.1;
  spec.prob_neg = Vector(2);
  spec.prob_neg << 0.2, 0.15;
  SignPairModel model = make_sign_pair_model(spec);
  CHECK(model.model.atoms.size() == 3);  // two blocks and the 0.25 tail
  for (double p : {1.0, 2.0, kInf}) {
    CriterionReport rep = criterion(model.model, p);
    const char* key = p == 1.0 ? "v[p=1]" : (p == 2.0 ? "v[p=2]" : "v[p=inf]");
    CHECK(close(rep.value, model.table.at(key).value, 1e-9));
  }
}

TEST_CASE("sign-pair validation names the offending block") {
  SignPairSpec spec;
  spec.xi_pos = Vector::Constant(1, -1.0);  // wrong sign
  spec.xi_neg = Vector::Constant(1, -1.0);
  spec.f_pos = Vector::Constant(1, 1.0);
  spec.f_neg = Vector::Constant(1, 1.0);
  spec.prob_pos = Vector::Constant(1, 0.9);
  spec.prob_neg = Vector::Constant(1, 0.4);  // total mass 1.3
  try {
    make_sign_pair_model(spec);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.violations().size() >= 2);
  }
  CHECK_THROWS_AS(make_sign_pair_chain(0), InputError);
}

TEST_CASE("block tree matches its closed-form table") {
  BlockTree bt = make_block_tree(3);
  CHECK(bt.tree.node_count() == 7 * 3 + 4);
  CHECK(bt.tree.horizon() == 3);
  CHECK(check_na(bt.tree).holds);

  AdaptedValues floor = leaf_floor_values(bt.tree);
  BackwardEnvelope env = backward_envelope(bt.tree, floor);

  // Step values beta1 on the depth-2 nodes, block-major: m = 1, 2 in block 1, ...
  for (int j = 1; j <= 3; ++j) {
    for (int side = 0; side < 2; ++side) {
      const int m = 2 * j - 1 + side;
      const int id = bt.step_nodes[static_cast<size_t>(2 * (j - 1) + side)];
      const double closed = bt.table.at("beta1[" + std::to_string(m) + "]").value;
      CHECK(close(env.values[2].at(id), closed, 1e-12));
      CHECK(close(env.gauge_values.at(id),
                  bt.table.at("nu1[" + std::to_string(m) + "]").value, 1e-12));
    }
    const int block = bt.block_nodes[static_cast<size_t>(j - 1)];
    CHECK(close(env.values[1].at(block),
                bt.table.at("beta0[" + std::to_string(j) + "]").value, 1e-12));
    CHECK(close(env.gauge_values.at(block),
                bt.table.at("nu0[" + std::to_string(j) + "]").value, 1e-12));
  }
  CHECK(close(env.root_expectation, bt.table.at("Ebeta0").value, 1e-12));

  // Beta1 on the fourth step node is 5/2 (m = 4).
  CHECK(bt.table.at("beta1[4]").value == doctest::Approx(2.5));

  DensityCertificate cert = construct_martingale_density(bt.tree, floor);
  CertificateReport report = verify_certificate(bt.tree, cert, floor);
  CHECK(report.pass);

  // One-period slices stay bounded by their limits.
  OnePeriodModel slice1 = one_period_view(bt.tree, 1, constant_values(bt.tree, 2, 1.0));
  CHECK(close(criterion(slice1, kInf).value, bt.table.at("slice_v[1]").value, 1e-10));
  CHECK(criterion(slice1, kInf).value < 5.0 / 3.0);
  OnePeriodModel slice2 = one_period_view(bt.tree, 2, constant_values(bt.tree, 3, 1.0));
  CHECK(close(criterion(slice2, kInf).value, bt.table.at("slice_v[2]").value, 1e-10));
  CHECK(criterion(slice2, kInf).value < std::sqrt(0.5));
  OnePeriodModel slice0 = one_period_view(bt.tree, 0, constant_values(bt.tree, 1, 1.0));
  CHECK(criterion(slice0, kInf).value == doctest::Approx(0.0));
}

TEST_CASE("doubling strategy: unit losses, expected gain from the table") {
  for (int J : {1, 2, 5}) {
    BlockTree bt = make_block_tree(J);
    StrategyResult strat = block_doubling_strategy(bt.tree);
    CHECK(close(strat.expected_gain, bt.table.at("EG_doubling").value, 1e-9));
    CHECK(strat.min_gain >= -1.0 - 1e-9);
    CHECK(strat.min_gain == doctest::Approx(-1.0).epsilon(1e-9));
  }
  BlockTree one = make_block_tree(1);
  StrategyResult strat = block_doubling_strategy(one.tree);
  CHECK(strat.expected_gain == doctest::Approx(1.06066017).epsilon(1e-8));
  // Gains: up-up leaf earns 2 + 3 sqrt 2, tail stays flat.
  double top = 0.0;
  for (const auto& [leaf, gain] : strat.leaf_gains.values) top = std::max(top, gain);
  CHECK(top == doctest::Approx(2.0 + 3.0 * std::sqrt(2.0)));
}

TEST_CASE("asset family keeps every mass identity exact") {
  for (int J : {1, 2, 4}) {
    AssetFamilyModel fam = make_asset_family(J);
    CHECK(fam.q_mass.sum() == 1.0);  // exact dyadic accumulation
    CHECK(fam.p_mass.sum() == 1.0);
    CHECK(fam.table.at("mass_Q").value == 1.0);
    for (int j = 1; j <= J; ++j) {
      CHECK(std::abs(fam.table.at("EQ_xi[" + std::to_string(j) + "]").value) <= 1e-15);
      const Vector ep = fam.xi.transpose() * fam.p_mass;
      CHECK(close(ep(j - 1), 0.5 - 0.75 * std::exp2(-j), 1e-14));
    }
    // The merged support has at most 2J + 1 points.
    CHECK(fam.model.atoms.front().increments.size() <= 2 * J + 1);
    CHECK(fam.model.atoms.front().increments.weights.sum() == doctest::Approx(1.0));
  }
  AssetFamilyModel one = make_asset_family(1);
  REQUIRE(one.model.atoms.front().increments.size() == 3);
  const auto& dist = one.model.atoms.front().increments;
  // Merged rows appear in raw state order: spike (state 1), slab (state 2), flat (state 3).
  CHECK(dist.points(0, 0) == 2.0);
  CHECK(dist.points(1, 0) == -1.0);
  CHECK(dist.points(2, 0) == 0.0);
  CHECK(dist.weights(0) == doctest::Approx(0.25));
  CHECK(dist.weights(1) == doctest::Approx(0.375));
  CHECK(dist.weights(2) == doctest::Approx(0.375));
  CriterionReport rep = criterion(one.model, kInf);
  CHECK(rep.mean[0](0) == doctest::Approx(0.125));
  CHECK(rep.value == doctest::Approx(0.125));
}

TEST_CASE("floor collapse: bounded gains, collapsing uniform floor") {
  std::vector<FloorCollapseRow> rows = floor_collapse_report({1, 2, 3, 4});
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].max_floor == doctest::Approx(8.0 / 9.0).epsilon(1e-9));
  CHECK(rows[0].max_floor_capped == doctest::Approx(8.0 / 9.0).epsilon(1e-9));
  for (size_t k = 0; k < rows.size(); ++k) {
    CHECK(rows[k].max_gain <= 0.75 + 1e-9);
    CHECK(rows[k].z_moment_residual <= 1e-13);
    CHECK(rows[k].slab_bound_ok);
    CHECK(rows[k].capped_bound_ok);
    CHECK(rows[k].max_floor_capped <= rows[k].max_floor + 1e-9);
    CHECK(rows[k].min_slab_mass >= rows[k].max_floor / 2.0 - 1e-9);
    if (k > 0) CHECK(rows[k].max_floor <= rows[k - 1].max_floor + 1e-9);
  }
  CHECK(rows[3].max_floor < rows[0].max_floor);
}

TEST_CASE("floor collapse: cap turns the stall into geometric decay") {
  // The exact floor LP concentrates expectation on the thin slab states and
  // levels off near 4/7; with g <= cap the thinnest slab can hold at most
  // 2 cap P(slab_J), so the capped floor drops by about half per family size.
  std::vector<int> sizes;
  for (int j = 1; j <= 10; ++j) sizes.push_back(j);
  std::vector<FloorCollapseRow> rows = floor_collapse_report(sizes, 8.0);
  REQUIRE(rows.size() == 10);
  CHECK(rows[9].max_floor > 0.5);  // the stall: exact floor stays above 1/2
  CHECK(rows[9].max_floor < rows[9].cap);
  for (size_t k = 1; k < rows.size(); ++k)
    CHECK(rows[k].max_floor_capped <= rows[k - 1].max_floor_capped + 1e-12);
  CHECK(rows[9].max_floor_capped < rows[0].max_floor_capped / 4.0);
  CHECK(rows[9].max_floor_capped <= 1.5 * 8.0 * std::exp2(-10) + 1e-9);
  CHECK(rows[9].max_floor_capped > 0.0);
  CHECK_THROWS_AS(floor_collapse_report({1}, -1.0), InputError);
}

TEST_CASE("generator guards") {
  CHECK_THROWS_AS(make_asset_family(0), InputError);
  CHECK_THROWS_AS(make_asset_family(3, 4), InputError);
  CHECK_THROWS_AS(make_asset_family(2, 5), InputError);
  CHECK_THROWS_AS(make_block_tree(0), InputError);
}

TEST_CASE("generators are deterministic") {
  CHECK(make_block_tree(4).tree.to_json() == make_block_tree(4).tree.to_json());
  AssetFamilyModel a = make_asset_family(3);
  AssetFamilyModel b = make_asset_family(3);
  CHECK((a.p_mass - b.p_mass).cwiseAbs().maxCoeff() == 0.0);
  for (const auto& [key, entry] : a.table) CHECK(entry.value == b.table.at(key).value);
}

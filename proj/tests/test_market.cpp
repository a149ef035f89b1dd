#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "mmfloor/scenario_tree.hpp"
#include "support/random_models.hpp"

using namespace mmfloor;

namespace {

std::string binomial_json(double up_prob = 0.5, double down_prob = 0.5) {
  std::string up = std::to_string(up_prob);
  std::string dn = std::to_string(down_prob);
  return std::string(R"({
    "d": 1,
    "horizon": 1,
    "nodes": [
      {"id": 0, "parent": null, "prob": 1.0, "price": [0.0]},
      {"id": 1, "parent": 0, "prob": )") +
         up + R"(, "price": [1.0]},
      {"id": 2, "parent": 0, "prob": )" + dn + R"(, "price": [-1.0]}
    ]
  })";
}

std::vector<std::string> violations_of(const std::string& text) {
  try {
    ScenarioTree::from_json(text);
  } catch (const ValidationError& e) {
    return e.violations();
  }
  return {};
}

bool mentions(const std::vector<std::string>& msgs, const std::string& needle) {
  for (const auto& m : msgs)
    if (m.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("minimal binomial file loads and exposes structure") {
  ScenarioTree tree = ScenarioTree::from_json(binomial_json());
  CHECK(tree.dimension() == 1);
  CHECK(tree.horizon() == 1);
  CHECK(tree.node_count() == 3);
  CHECK(tree.depth(0) == 0);
  CHECK(tree.depth(2) == 1);
  CHECK(tree.children(0) == std::vector<int>{1, 2});
  CHECK(tree.is_leaf(1));
  CHECK_FALSE(tree.is_leaf(0));
  CHECK(tree.leaves() == std::vector<int>{1, 2});
  CHECK(tree.path_prob(1) == doctest::Approx(0.5));
  CHECK(tree.floor(1) == 1.0);  // default when no floor block is present
  CHECK_FALSE(tree.has_explicit_floor());
}

TEST_CASE("children probabilities off by 0.1 are reported against the node") {
  auto bad = violations_of(binomial_json(0.6, 0.5));
  REQUIRE_FALSE(bad.empty());
  CHECK(mentions(bad, "node 0"));
  CHECK(mentions(bad, "sum"));
}

TEST_CASE("serialization round-trips byte for byte") {
  std::mt19937 rng(20240812);
  for (int rep = 0; rep < 10; ++rep) {
    ScenarioTree tree = testing::random_tree(rng, 1 + static_cast<int>(rng() % 3), 2);
    const std::string once = tree.to_json();
    ScenarioTree back = ScenarioTree::from_json(once);
    CHECK(back.to_json() == once);
    CHECK(back.node_count() == tree.node_count());
    for (int id = 0; id < tree.node_count(); ++id) {
      CHECK(back.node(id).parent == tree.node(id).parent);
      CHECK(back.node(id).prob == tree.node(id).prob);
      CHECK((back.node(id).price - tree.node(id).price).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("explicit floor block round-trips and validates") {
  std::string text = R"({
    "d": 1, "horizon": 1,
    "nodes": [
      {"id": 0, "parent": null, "prob": 1.0, "price": [0.0]},
      {"id": 1, "parent": 0, "prob": 0.5, "price": [1.0]},
      {"id": 2, "parent": 0, "prob": 0.5, "price": [-1.0]}
    ],
    "floor": {"1": 0.25, "2": 2.0}
  })";
  ScenarioTree tree = ScenarioTree::from_json(text);
  CHECK(tree.has_explicit_floor());
  CHECK(tree.floor(1) == 0.25);
  CHECK(tree.floor(2) == 2.0);
  ScenarioTree back = ScenarioTree::from_json(tree.to_json());
  CHECK(back.to_json() == tree.to_json());

  SUBCASE("floor on a non-leaf is rejected") {
    std::string bad = text;
    bad.replace(bad.find("\"1\": 0.25"), 9, "\"0\": 0.25");
    auto msgs = violations_of(bad);
    CHECK(mentions(msgs, "not a leaf"));
  }
  SUBCASE("nonpositive floor is rejected") {
    std::string bad = text;
    bad.replace(bad.find("0.25"), 4, "0.0 ");
    auto msgs = violations_of(bad);
    CHECK(mentions(msgs, "strictly positive"));
  }
}

TEST_CASE("schema violations are rejected with named keys") {
  CHECK_THROWS_WITH_AS(ScenarioTree::from_json("{"), doctest::Contains("parse error"),
                       InputError);
  CHECK_THROWS_WITH_AS(ScenarioTree::from_json("[]"), doctest::Contains("object"), InputError);
  std::string extra_top = binomial_json();
  extra_top.insert(extra_top.find("\"d\""), "\"note\": 1, ");
  CHECK_THROWS_WITH_AS(ScenarioTree::from_json(extra_top), doctest::Contains("note"),
                       InputError);
  std::string extra_node = binomial_json();
  extra_node.insert(extra_node.find("\"id\": 1"), "\"label\": \"up\", ");
  CHECK_THROWS_WITH_AS(ScenarioTree::from_json(extra_node), doctest::Contains("label"),
                       InputError);
  std::string bad_price = binomial_json();
  bad_price.replace(bad_price.find("[1.0]"), 5, "[1.0, 2.0]");
  CHECK_THROWS_AS(ScenarioTree::from_json(bad_price), InputError);
}

TEST_CASE("structural violations are all collected") {
  // Non-dense ids.
  std::string gap = binomial_json();
  gap.replace(gap.find("\"id\": 2"), 7, "\"id\": 5");
  CHECK(mentions(violations_of(gap), "dense"));

  // Parent listed after child.
  std::string fwd = R"({
    "d": 1, "horizon": 1,
    "nodes": [
      {"id": 0, "parent": null, "prob": 1.0, "price": [0.0]},
      {"id": 1, "parent": 2, "prob": 1.0, "price": [1.0]},
      {"id": 2, "parent": 0, "prob": 1.0, "price": [0.5]}
    ]
  })";
  CHECK(mentions(violations_of(fwd), "precede"));

  // Leaf short of the horizon plus a probability violation in one pass.
  std::string two = R"({
    "d": 1, "horizon": 2,
    "nodes": [
      {"id": 0, "parent": null, "prob": 1.0, "price": [0.0]},
      {"id": 1, "parent": 0, "prob": 0.5, "price": [1.0]},
      {"id": 2, "parent": 0, "prob": 0.5, "price": [-1.0]},
      {"id": 3, "parent": 1, "prob": 0.9, "price": [2.0]},
      {"id": 4, "parent": 1, "prob": 0.3, "price": [0.0]}
    ]
  })";
  auto msgs = violations_of(two);
  CHECK(mentions(msgs, "node 2"));  // leaf at depth 1 under horizon 2
  CHECK(mentions(msgs, "node 1"));  // children sum 1.2
  CHECK(msgs.size() >= 2);

  std::string root_prob = binomial_json();
  root_prob.replace(root_prob.find("\"prob\": 1.0"), 11, "\"prob\": 0.9");
  CHECK(mentions(violations_of(root_prob), "root"));
}

TEST_CASE("increment views merge coincident children") {
  ScenarioTree tree = ScenarioTree::from_json(binomial_json());
  IncrementView view = increments_view(tree, 0);
  REQUIRE(view.dist.size() == 2);
  CHECK(view.dist.points(0, 0) == doctest::Approx(1.0));
  CHECK(view.dist.points(1, 0) == doctest::Approx(-1.0));
  CHECK(view.dist.weights.sum() == doctest::Approx(1.0));
  CHECK(view.outcome_of_child == std::vector<int>{0, 1});
  CHECK_THROWS_AS(increments_view(tree, 1), InputError);   // leaf
  CHECK_THROWS_AS(increments_view(tree, 99), InputError);  // unknown id

  std::string dup = R"({
    "d": 1, "horizon": 1,
    "nodes": [
      {"id": 0, "parent": null, "prob": 1.0, "price": [0.0]},
      {"id": 1, "parent": 0, "prob": 0.25, "price": [1.0]},
      {"id": 2, "parent": 0, "prob": 0.35, "price": [1.0]},
      {"id": 3, "parent": 0, "prob": 0.4, "price": [-0.5]}
    ]
  })";
  ScenarioTree merged = ScenarioTree::from_json(dup);
  IncrementView mv = increments_view(merged, 0);
  REQUIRE(mv.dist.size() == 2);
  CHECK(mv.dist.weights(0) == doctest::Approx(0.6));
  CHECK(mv.outcome_of_child == std::vector<int>{0, 0, 1});
}

TEST_CASE("one-period view aggregates floors over merged outcomes") {
  std::string dup = R"({
    "d": 1, "horizon": 1,
    "nodes": [
      {"id": 0, "parent": null, "prob": 1.0, "price": [0.0]},
      {"id": 1, "parent": 0, "prob": 0.25, "price": [1.0]},
      {"id": 2, "parent": 0, "prob": 0.35, "price": [1.0]},
      {"id": 3, "parent": 0, "prob": 0.4, "price": [-0.5]}
    ],
    "floor": {"1": 2.0, "2": 0.8, "3": 1.5}
  })";
  ScenarioTree tree = ScenarioTree::from_json(dup);
  OnePeriodModel model = one_period_view(tree, 0, leaf_floor_values(tree));
  validate_model(model);
  REQUIRE(model.atoms.size() == 1);
  const auto& atom = model.atoms.front();
  CHECK(atom.prob == doctest::Approx(1.0));
  // Merged outcome floor = (0.25*2.0 + 0.35*0.8) / 0.6.
  CHECK(atom.floor(0) == doctest::Approx((0.25 * 2.0 + 0.35 * 0.8) / 0.6));
  CHECK(atom.floor(1) == doctest::Approx(1.5));

  CHECK_THROWS_AS(one_period_view(tree, 1, leaf_floor_values(tree)), InputError);
  AdaptedValues wrong_depth = constant_values(tree, 0, 1.0);
  CHECK_THROWS_AS(one_period_view(tree, 0, wrong_depth), InputError);
}

TEST_CASE("path probabilities sum to one on every level of random trees") {
  std::mt19937 rng(77);
  for (int rep = 0; rep < 8; ++rep) {
    ScenarioTree tree = testing::random_tree(rng, 3, 2);
    for (int n = 0; n <= tree.horizon(); ++n) {
      double sum = 0.0;
      for (int id : tree.nodes_at_depth(n)) sum += tree.path_prob(id);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    OnePeriodModel model =
        one_period_view(tree, 1, constant_values(tree, 2, 1.0));
    validate_model(model);
    double atom_sum = 0.0;
    for (const auto& atom : model.atoms) atom_sum += atom.prob;
    CHECK(atom_sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("conditional expectation projects one level back") {
  ScenarioTree tree = ScenarioTree::from_json(binomial_json());
  AdaptedValues constant = constant_values(tree, 1, 3.25);
  AdaptedValues back = conditional_expectation(tree, constant);
  CHECK(back.depth == 0);
  CHECK(back.at(0) == doctest::Approx(3.25));

  AdaptedValues signed_moves;
  signed_moves.depth = 1;
  signed_moves.values = {{1, 1.0}, {2, -1.0}};
  CHECK(conditional_expectation(tree, signed_moves).at(0) == doctest::Approx(0.0));

  AdaptedValues missing;
  missing.depth = 1;
  missing.values = {{1, 1.0}};
  CHECK_THROWS_AS(conditional_expectation(tree, missing), InputError);
  AdaptedValues root_level = constant_values(tree, 0, 1.0);
  CHECK_THROWS_AS(conditional_expectation(tree, root_level), InputError);
}

TEST_CASE("lq norms across a depth level") {
  ScenarioTree tree = ScenarioTree::from_json(binomial_json());
  AdaptedValues vals;
  vals.depth = 1;
  vals.values = {{1, 2.0}, {2, 0.0}};
  CHECK(lq_norm(tree, vals, 1.0) == doctest::Approx(1.0));
  CHECK(lq_norm(tree, vals, 2.0) == doctest::Approx(std::sqrt(2.0)));
  CHECK(lq_norm(tree, vals, kInf) == doctest::Approx(2.0));
  CHECK_THROWS_AS(lq_norm(tree, vals, 0.5), InputError);
}

TEST_CASE("save and load go through the filesystem") {
  ScenarioTree tree = ScenarioTree::from_json(binomial_json());
  const std::string path = "market_roundtrip_tmp.json";
  tree.save(path);
  ScenarioTree back = ScenarioTree::load(path);
  CHECK(back.to_json() == tree.to_json());
  std::remove(path.c_str());
  CHECK_THROWS_AS(ScenarioTree::load("does_not_exist_anywhere.json"), InputError);
}

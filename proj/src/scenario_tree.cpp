#include "mmfloor/scenario_tree.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mmfloor {

namespace {

using nlohmann::json;

std::string node_tag(int id) { return "node " + std::to_string(id); }

}  // namespace

ScenarioTree::ScenarioTree(int dimension, int horizon, std::vector<TreeNode> nodes,
                           std::map<int, double> floor, const Tolerances& tol)
    : dimension_(dimension), horizon_(horizon), nodes_(std::move(nodes)), floor_(std::move(floor)) {
  std::vector<std::string> bad;
  if (dimension_ < 1) bad.push_back("asset dimension must be at least 1");
  if (horizon_ < 1) bad.push_back("horizon must be at least 1");
  if (nodes_.empty()) bad.push_back("tree has no nodes");
  if (!bad.empty()) throw ValidationError("invalid tree", bad);

  std::sort(nodes_.begin(), nodes_.end(),
            [](const TreeNode& a, const TreeNode& b) { return a.id < b.id; });
  const int K = static_cast<int>(nodes_.size());
  for (int k = 0; k < K; ++k) {
    if (nodes_[static_cast<size_t>(k)].id != k) {
      bad.push_back("node ids are not the dense range 0.." + std::to_string(K - 1));
      break;
    }
  }
  if (!bad.empty()) throw ValidationError("invalid tree", bad);

  depths_.assign(static_cast<size_t>(K), -1);
  children_.assign(static_cast<size_t>(K), {});
  path_probs_.assign(static_cast<size_t>(K), 0.0);
  for (int k = 0; k < K; ++k) {
    const TreeNode& nd = nodes_[static_cast<size_t>(k)];
    if (k == 0) {
      if (nd.parent != -1) bad.push_back("node 0 must be the root (parent absent)");
      if (std::abs(nd.prob - 1.0) > tol.feas)
        bad.push_back("root probability must be 1, got " + std::to_string(nd.prob));
      depths_[0] = 0;
      path_probs_[0] = 1.0;
    } else {
      if (nd.parent < 0 || nd.parent >= k) {
        bad.push_back(node_tag(k) + ": parent must precede the node (got " +
                      std::to_string(nd.parent) + ")");
        continue;
      }
      children_[static_cast<size_t>(nd.parent)].push_back(k);
      depths_[static_cast<size_t>(k)] = depths_[static_cast<size_t>(nd.parent)] + 1;
      if (!(nd.prob > 0.0) || !(nd.prob <= 1.0 + tol.feas) || !std::isfinite(nd.prob))
        bad.push_back(node_tag(k) + ": transition probability " + std::to_string(nd.prob) +
                      " outside (0, 1]");
      path_probs_[static_cast<size_t>(k)] =
          path_probs_[static_cast<size_t>(nd.parent)] * nd.prob;
    }
    if (nd.price.size() != dimension_)
      bad.push_back(node_tag(k) + ": price dimension " + std::to_string(nd.price.size()) +
                    " does not match d = " + std::to_string(dimension_));
    else if (!nd.price.allFinite())
      bad.push_back(node_tag(k) + ": non-finite price entry");
  }
  if (!bad.empty()) throw ValidationError("invalid tree", bad);

  by_depth_.assign(static_cast<size_t>(horizon_) + 1, {});
  for (int k = 0; k < K; ++k) {
    const int dep = depths_[static_cast<size_t>(k)];
    if (dep > horizon_) {
      bad.push_back(node_tag(k) + ": depth " + std::to_string(dep) + " exceeds horizon");
      continue;
    }
    by_depth_[static_cast<size_t>(dep)].push_back(k);
    const bool leaf = children_[static_cast<size_t>(k)].empty();
    if (leaf && dep != horizon_)
      bad.push_back(node_tag(k) + ": leaf at depth " + std::to_string(dep) +
                    ", expected exactly " + std::to_string(horizon_));
    if (!leaf && dep == horizon_)
      bad.push_back(node_tag(k) + ": node at the horizon has children");
  }
  for (int k = 0; k < K; ++k) {
    const auto& kids = children_[static_cast<size_t>(k)];
    if (kids.empty()) continue;
    double sum = 0.0;
    for (int c : kids) sum += nodes_[static_cast<size_t>(c)].prob;
    if (std::abs(sum - 1.0) > tol.feas) {
      std::ostringstream msg;
      msg << node_tag(k) << ": children probabilities sum to " << sum << ", expected 1";
      bad.push_back(msg.str());
    }
  }
  for (const auto& [id, value] : floor_) {
    if (id < 0 || id >= K || !children_[static_cast<size_t>(id)].empty())
      bad.push_back("floor entry for " + std::to_string(id) + " which is not a leaf");
    if (!(value > 0.0) || !std::isfinite(value))
      bad.push_back("floor at " + std::to_string(id) + " must be strictly positive, got " +
                    std::to_string(value));
  }
  if (!bad.empty()) throw ValidationError("invalid tree", bad);
}

double ScenarioTree::floor(int leaf_id) const {
  if (leaf_id < 0 || leaf_id >= node_count() || !is_leaf(leaf_id))
    throw InputError("floor requested for non-leaf " + std::to_string(leaf_id));
  auto it = floor_.find(leaf_id);
  return it == floor_.end() ? 1.0 : it->second;
}

ScenarioTree ScenarioTree::from_json(const std::string& text, const Tolerances& tol) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("parse error: ") + e.what());
  }
  if (!doc.is_object()) throw InputError("top level must be an object");
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (key != "d" && key != "horizon" && key != "nodes" && key != "floor")
      throw InputError("unknown top-level key '" + key + "'");
  }
  if (!doc.contains("d") || !doc["d"].is_number_integer())
    throw InputError("missing or non-integer 'd'");
  if (!doc.contains("horizon") || !doc["horizon"].is_number_integer())
    throw InputError("missing or non-integer 'horizon'");
  if (!doc.contains("nodes") || !doc["nodes"].is_array())
    throw InputError("missing or non-array 'nodes'");

  const int d = doc["d"].get<int>();
  const int horizon = doc["horizon"].get<int>();
  std::vector<TreeNode> nodes;
  nodes.reserve(doc["nodes"].size());
  for (const auto& item : doc["nodes"]) {
    if (!item.is_object()) throw InputError("node entries must be objects");
    for (const auto& [key, value] : item.items()) {
      (void)value;
      if (key != "id" && key != "parent" && key != "prob" && key != "price")
        throw InputError("unknown node key '" + key + "'");
    }
    TreeNode node;
    if (!item.contains("id") || !item["id"].is_number_integer())
      throw InputError("node missing integer 'id'");
    node.id = item["id"].get<int>();
    if (!item.contains("parent") || (!item["parent"].is_null() && !item["parent"].is_number_integer()))
      throw InputError(node_tag(node.id) + ": 'parent' must be an integer or null");
    node.parent = item["parent"].is_null() ? -1 : item["parent"].get<int>();
    if (!item.contains("prob") || !item["prob"].is_number())
      throw InputError(node_tag(node.id) + ": missing numeric 'prob'");
    node.prob = item["prob"].get<double>();
    if (!item.contains("price") || !item["price"].is_array() ||
        static_cast<int>(item["price"].size()) != d)
      throw InputError(node_tag(node.id) + ": 'price' must be an array of length " +
                       std::to_string(d));
    node.price = Vector(d);
    Index j = 0;
    for (const auto& coord : item["price"]) {
      if (!coord.is_number()) throw InputError(node_tag(node.id) + ": non-numeric price entry");
      node.price(j++) = coord.get<double>();
    }
    nodes.push_back(std::move(node));
  }

  std::map<int, double> floor;
  if (doc.contains("floor")) {
    if (!doc["floor"].is_object()) throw InputError("'floor' must be an object");
    for (const auto& [key, value] : doc["floor"].items()) {
      if (key.empty() || key.find_first_not_of("0123456789") != std::string::npos)
        throw InputError("floor key '" + key + "' is not a node id");
      if (!value.is_number()) throw InputError("floor value for '" + key + "' is not numeric");
      floor[std::stoi(key)] = value.get<double>();
    }
  }
  return ScenarioTree(d, horizon, std::move(nodes), std::move(floor), tol);
}

ScenarioTree ScenarioTree::load(const std::string& path, const Tolerances& tol) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str(), tol);
}

std::string ScenarioTree::to_json() const {
  json doc;
  doc["d"] = dimension_;
  doc["horizon"] = horizon_;
  doc["nodes"] = json::array();
  for (const TreeNode& nd : nodes_) {
    json item;
    item["id"] = nd.id;
    if (nd.parent < 0)
      item["parent"] = nullptr;
    else
      item["parent"] = nd.parent;
    item["prob"] = nd.prob;
    item["price"] = json::array();
    for (Index j = 0; j < nd.price.size(); ++j) item["price"].push_back(nd.price(j));
    doc["nodes"].push_back(std::move(item));
  }
  if (!floor_.empty()) {
    json fl = json::object();
    for (const auto& [id, value] : floor_) fl[std::to_string(id)] = value;
    doc["floor"] = std::move(fl);
  }
  return doc.dump(2) + "\n";
}

void ScenarioTree::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << to_json();
}

IncrementView increments_view(const ScenarioTree& tree, int node_id, const Tolerances& tol) {
  if (node_id < 0 || node_id >= tree.node_count())
    throw InputError("unknown node " + std::to_string(node_id));
  if (tree.is_leaf(node_id)) throw InputError(node_tag(node_id) + " is a leaf");

  IncrementView view;
  view.child_ids = tree.children(node_id);
  const Vector& base = tree.node(node_id).price;
  std::vector<Vector> points;
  std::vector<double> weights;
  for (int cid : view.child_ids) {
    Vector delta = tree.node(cid).price - base;
    int hit = -1;
    for (size_t k = 0; k < points.size(); ++k) {
      if ((points[k] - delta).cwiseAbs().maxCoeff() <= tol.feas) {
        hit = static_cast<int>(k);
        break;
      }
    }
    if (hit < 0) {
      hit = static_cast<int>(points.size());
      points.push_back(std::move(delta));
      weights.push_back(0.0);
    }
    weights[static_cast<size_t>(hit)] += tree.node(cid).prob;
    view.outcome_of_child.push_back(hit);
  }
  const Index n = static_cast<Index>(points.size());
  view.dist.points = Matrix(n, tree.dimension());
  view.dist.weights = Vector(n);
  for (Index k = 0; k < n; ++k) {
    view.dist.points.row(k) = points[static_cast<size_t>(k)].transpose();
    view.dist.weights(k) = weights[static_cast<size_t>(k)];
  }
  return view;
}

DiscreteDistribution increments_distribution(const ScenarioTree& tree, int node_id,
                                             const Tolerances& tol) {
  return increments_view(tree, node_id, tol).dist;
}

double AdaptedValues::at(int id) const {
  auto it = values.find(id);
  if (it == values.end())
    throw InputError("adapted values missing node " + std::to_string(id));
  return it->second;
}

AdaptedValues constant_values(const ScenarioTree& tree, int depth, double value) {
  if (depth < 0 || depth > tree.horizon()) throw InputError("depth outside the tree");
  AdaptedValues out;
  out.depth = depth;
  for (int id : tree.nodes_at_depth(depth)) out.values[id] = value;
  return out;
}

AdaptedValues leaf_floor_values(const ScenarioTree& tree) {
  AdaptedValues out;
  out.depth = tree.horizon();
  for (int id : tree.leaves()) out.values[id] = tree.floor(id);
  return out;
}

OnePeriodModel one_period_view(const ScenarioTree& tree, int depth,
                               const AdaptedValues& next_values, const Tolerances& tol) {
  if (depth < 0 || depth >= tree.horizon())
    throw InputError("depth " + std::to_string(depth) + " has no following period");
  if (next_values.depth != depth + 1)
    throw InputError("values are attached to depth " + std::to_string(next_values.depth) +
                     ", expected " + std::to_string(depth + 1));
  OnePeriodModel model;
  for (int id : tree.nodes_at_depth(depth)) {
    IncrementView view = increments_view(tree, id, tol);
    OnePeriodAtom atom;
    atom.prob = tree.path_prob(id);
    atom.increments = view.dist;
    atom.floor = Vector::Zero(view.dist.size());
    Vector mass = Vector::Zero(view.dist.size());
    for (size_t k = 0; k < view.child_ids.size(); ++k) {
      const int cid = view.child_ids[k];
      const int outcome = view.outcome_of_child[k];
      atom.floor(outcome) += tree.node(cid).prob * next_values.at(cid);
      mass(outcome) += tree.node(cid).prob;
    }
    atom.floor.array() /= mass.array();
    model.atoms.push_back(std::move(atom));
  }
  return model;
}

void validate_model(const OnePeriodModel& model, const Tolerances& tol) {
  std::vector<std::string> bad;
  if (model.atoms.empty()) bad.push_back("model has no atoms");
  double total = 0.0;
  const Index d = model.dimension();
  for (size_t j = 0; j < model.atoms.size(); ++j) {
    const auto& atom = model.atoms[j];
    const std::string tag = "atom " + std::to_string(j);
    if (!(atom.prob > 0.0)) bad.push_back(tag + ": nonpositive probability");
    total += atom.prob;
    if (atom.increments.dimension() != d) bad.push_back(tag + ": dimension mismatch");
    try {
      validate_distribution(atom.increments, tol);
    } catch (const ValidationError& e) {
      for (const auto& v : e.violations()) bad.push_back(tag + ": " + v);
    }
    if (atom.floor.size() != atom.increments.size())
      bad.push_back(tag + ": floor length does not match outcome count");
    else if ((atom.floor.array() < 0).any())
      bad.push_back(tag + ": negative floor value");
  }
  if (!model.atoms.empty() && std::abs(total - 1.0) > tol.feas)
    bad.push_back("atom probabilities sum to " + std::to_string(total) + ", expected 1");
  if (!bad.empty()) throw ValidationError("invalid single-period model", bad);
}

AdaptedValues conditional_expectation(const ScenarioTree& tree, const AdaptedValues& values) {
  if (values.depth < 1 || values.depth > tree.horizon())
    throw InputError("values depth outside 1..horizon");
  AdaptedValues out;
  out.depth = values.depth - 1;
  for (int id : tree.nodes_at_depth(values.depth - 1)) {
    double acc = 0.0;
    for (int cid : tree.children(id)) acc += tree.node(cid).prob * values.at(cid);
    out.values[id] = acc;
  }
  return out;
}

double lq_norm(const ScenarioTree& tree, const AdaptedValues& values, double q) {
  if (q < 1.0) throw InputError("norm order below 1");
  const auto& ids = tree.nodes_at_depth(values.depth);
  if (q == kInf) {
    double mx = 0.0;
    for (int id : ids) mx = std::max(mx, std::abs(values.at(id)));
    return mx;
  }
  double acc = 0.0;
  for (int id : ids) acc += tree.path_prob(id) * std::pow(std::abs(values.at(id)), q);
  return std::pow(acc, 1.0 / q);
}

}  // namespace mmfloor

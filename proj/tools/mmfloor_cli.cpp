// Command-line front end. Every run prints one JSON report to stdout and a
// short human summary to stderr. Exit codes: 0 all checks pass, 1 a check
// failed, 2 input error, 3 no-arbitrage violation, 4 solver failure.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmfloor/multi_period.hpp"
#include "mmfloor/one_period.hpp"
#include "mmfloor/repro.hpp"
#include "mmfloor/scenario_tree.hpp"
#include "mmfloor/types.hpp"

namespace {

using json = nlohmann::ordered_json;
using mmfloor::AdaptedValues;
using mmfloor::InputError;
using mmfloor::kInf;
using mmfloor::NaViolation;
using mmfloor::OnePeriodModel;
using mmfloor::ScenarioTree;
using mmfloor::SolverFailure;
using mmfloor::Tolerances;
using mmfloor::ValidationError;
using mmfloor::Vector;

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitInput = 2;
constexpr int kExitNa = 3;
constexpr int kExitSolver = 4;

json jnum(double x) {
  if (std::isnan(x)) return "nan";
  if (!std::isfinite(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

json jvec(const Vector& v) {
  json out = json::array();
  for (mmfloor::Index i = 0; i < v.size(); ++i) out.push_back(jnum(v(i)));
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

// Scale-free gap used for every closed-form and duality comparison.
double scaled_gap(double engine, double table) {
  return std::abs(engine - table) / (1.0 + std::abs(table));
}

// State of one CLI run: sections accumulate, pass sticks to false once any
// check fails, notes become the stderr summary.
struct Run {
  std::string command;
  std::vector<std::string> argv;
  Tolerances tol;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  json input;
  json output;
  json sections = json::array();
  std::vector<std::string> notes;
  bool pass = true;
};

json& new_section(Run& run, const std::string& name) {
  run.sections.push_back(json{{"name", name},
                              {"values", json::object()},
                              {"checks", json::array()},
                              {"pass", true}});
  return run.sections.back();
}

void add_check(Run& run, json& sec, const std::string& name, double value, double tolerance,
               bool ok) {
  sec["checks"].push_back(json{
      {"name", name}, {"value", jnum(value)}, {"tolerance", jnum(tolerance)}, {"pass", ok}});
  if (!ok) {
    sec["pass"] = false;
    run.pass = false;
  }
}

void add_row(Run& run, json& sec, const std::string& name, const std::string& formula,
             double table, double engine, double tolerance) {
  const double gap = scaled_gap(engine, table);
  const bool ok = gap <= tolerance;
  sec["rows"].push_back(json{{"name", name},
                             {"formula", formula},
                             {"table", jnum(table)},
                             {"engine", jnum(engine)},
                             {"scaled_residual", jnum(gap)},
                             {"tolerance", jnum(tolerance)},
                             {"pass", ok}});
  if (!ok) {
    sec["pass"] = false;
    run.pass = false;
  }
}

double worst_row_residual(const json& sec) {
  double worst = 0.0;
  if (!sec.contains("rows")) return worst;
  for (const auto& row : sec["rows"])
    if (row["scaled_residual"].is_number())
      worst = std::max(worst, row["scaled_residual"].get<double>());
  return worst;
}

int emit(Run& run, int code_when_failed) {
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - run.t0)
          .count();
  const int code = run.pass ? kExitPass : code_when_failed;
  json doc;
  doc["command"] = run.command;
  doc["argv"] = run.argv;
  if (!run.input.is_null()) doc["input"] = run.input;
  if (!run.output.is_null()) doc["output"] = run.output;
  doc["tolerances"] = json{{"feas", run.tol.feas},
                           {"dual", run.tol.dual},
                           {"gauge", run.tol.gauge},
                           {"rank", run.tol.rank}};
  doc["sections"] = run.sections;
  doc["pass"] = run.pass;
  doc["exit_code"] = code;
  doc["wall_time_ms"] = ms;
  std::cout << doc.dump(2) << "\n";
  for (const auto& line : run.notes) std::cerr << line << "\n";
  std::cerr << "overall: " << (run.pass ? "pass" : "FAIL") << "\n";
  return code;
}

int emit_error(Run& run, const std::string& type, const std::string& message, int code,
               json extra = json::object()) {
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - run.t0)
          .count();
  json err{{"type", type}, {"message", message}};
  for (auto& [key, value] : extra.items()) err[key] = value;
  json doc;
  doc["command"] = run.command;
  doc["argv"] = run.argv;
  if (!run.input.is_null()) doc["input"] = run.input;
  doc["tolerances"] = json{{"feas", run.tol.feas},
                           {"dual", run.tol.dual},
                           {"gauge", run.tol.gauge},
                           {"rank", run.tol.rank}};
  doc["error"] = err;
  doc["pass"] = false;
  doc["exit_code"] = code;
  doc["wall_time_ms"] = ms;
  std::cout << doc.dump(2) << "\n";
  std::cerr << "error: " << message << "\n";
  return code;
}

ScenarioTree load_tree(Run& run, const std::string& path) {
  const std::string bytes = read_file(path);
  run.input = json{{"path", path}, {"digest", "fnv1a64:" + fnv1a64(bytes)}};
  return ScenarioTree::from_json(bytes, run.tol);
}

double parse_exponent(const std::string& text) {
  if (text == "inf") return kInf;
  if (text == "1") return 1.0;
  if (text == "2") return 2.0;
  throw InputError("exponent must be one of 1, 2, inf; got '" + text + "'");
}

double parse_number(const std::string& text, const std::string& what) {
  try {
    size_t pos = 0;
    const double x = std::stod(text, &pos);
    if (pos != text.size() || !std::isfinite(x)) throw InputError("");
    return x;
  } catch (const std::exception&) {
    throw InputError(what + " is not a finite number: '" + text + "'");
  }
}

// Floor flag: empty keeps the floor stored in the tree (1 when absent),
// const:<x> is uniform, file:<path> maps every leaf id to a value.
AdaptedValues resolve_floor(const ScenarioTree& tree, const std::string& text,
                            const Tolerances&) {
  if (text.empty()) return mmfloor::leaf_floor_values(tree);
  AdaptedValues out;
  out.depth = tree.horizon();
  if (text.rfind("const:", 0) == 0) {
    const double x = parse_number(text.substr(6), "floor constant");
    if (x < 0.0) throw InputError("floor constant must be nonnegative, got " + text.substr(6));
    for (int leaf : tree.leaves()) out.values[leaf] = x;
    return out;
  }
  if (text.rfind("file:", 0) == 0) {
    const std::string path = text.substr(5);
    json doc;
    try {
      doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw InputError("floor file parse error: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw InputError("floor file must hold one object of leaf: value");
    for (const auto& [key, value] : doc.items()) {
      if (key.empty() || key.find_first_not_of("0123456789") != std::string::npos)
        throw InputError("floor file key '" + key + "' is not a leaf id");
      const int id = std::stoi(key);
      if (id < 0 || id >= tree.node_count() || !tree.is_leaf(id))
        throw InputError("floor file names node " + key + " which is not a leaf");
      if (!value.is_number()) throw InputError("floor for leaf " + key + " is not a number");
      const double x = value.get<double>();
      if (!std::isfinite(x) || x < 0.0)
        throw InputError("floor for leaf " + key + " must be finite and nonnegative");
      out.values[id] = x;
    }
    for (int leaf : tree.leaves())
      if (!out.values.count(leaf))
        throw InputError("floor file misses leaf " + std::to_string(leaf));
    return out;
  }
  throw InputError("floor must be const:<x> or file:<path>, got '" + text + "'");
}

double expected_floor(const ScenarioTree& tree, const AdaptedValues& floor) {
  double total = 0.0;
  for (int leaf : tree.leaves()) total += tree.path_prob(leaf) * floor.at(leaf);
  return total;
}

std::string exponent_text(double p) {
  if (p == kInf) return "inf";
  return p == 1.0 ? "1" : "2";
}

// One-period models that need an initial partition become a two-step tree
// with a zero-increment first step; a single unit-mass atom stays one step.
ScenarioTree model_to_tree(const OnePeriodModel& model, const Tolerances& tol) {
  const mmfloor::Index d = model.dimension();
  std::vector<mmfloor::TreeNode> nodes;
  std::map<int, double> floor;
  bool nontrivial_floor = false;
  auto push = [&nodes](int parent, double prob, Vector price) {
    mmfloor::TreeNode node;
    node.id = static_cast<int>(nodes.size());
    node.parent = parent;
    node.prob = prob;
    node.price = std::move(price);
    nodes.push_back(std::move(node));
    return node.id;
  };
  push(-1, 1.0, Vector::Zero(d));
  const bool single =
      model.atoms.size() == 1 && std::abs(model.atoms.front().prob - 1.0) <= tol.feas;
  for (const auto& atom : model.atoms) {
    const int base = single ? 0 : push(0, atom.prob, Vector::Zero(d));
    for (mmfloor::Index k = 0; k < atom.increments.size(); ++k) {
      const int leaf =
          push(base, atom.increments.weights(k), atom.increments.points.row(k).transpose());
      floor[leaf] = atom.floor(k);
      if (atom.floor(k) != 1.0) nontrivial_floor = true;
    }
  }
  return ScenarioTree(static_cast<int>(d), single ? 1 : 2, std::move(nodes),
                      nontrivial_floor ? floor : std::map<int, double>{}, tol);
}

int cmd_validate(Run& run, const std::string& path) {
  ScenarioTree tree = load_tree(run, path);
  json& sec = new_section(run, "structure");
  sec["values"] = json{{"dimension", tree.dimension()},
                       {"horizon", tree.horizon()},
                       {"nodes", tree.node_count()},
                       {"leaves", tree.leaves().size()},
                       {"explicit_floor", tree.has_explicit_floor()}};
  double worst = 0.0;
  for (int n = 0; n <= tree.horizon(); ++n) {
    double total = 0.0;
    for (int id : tree.nodes_at_depth(n)) total += tree.path_prob(id);
    worst = std::max(worst, std::abs(total - 1.0));
  }
  add_check(run, sec, "level probabilities sum to one", worst, run.tol.feas,
            worst <= run.tol.feas);
  std::ostringstream line;
  line << "validate " << path << ": " << tree.node_count() << " nodes, horizon "
       << tree.horizon() << ", d = " << tree.dimension();
  run.notes.push_back(line.str());
  return emit(run, kExitFail);
}

int cmd_na(Run& run, const std::string& path) {
  ScenarioTree tree = load_tree(run, path);
  json& sec = new_section(run, "interior");
  json rows = json::array();
  int failing = -1;
  int checked = 0;
  for (int id = 0; id < tree.node_count(); ++id) {
    if (tree.is_leaf(id)) continue;
    ++checked;
    mmfloor::IncrementView view = mmfloor::increments_view(tree, id, run.tol);
    mmfloor::InteriorReport rep =
        mmfloor::origin_in_relative_interior(view.dist.points, run.tol);
    json row{{"id", id},
             {"depth", tree.depth(id)},
             {"margin", jnum(rep.margin)},
             {"interior", rep.holds}};
    if (!rep.holds) {
      row["separator"] = jvec(rep.separator);
      if (failing < 0) failing = id;
    }
    rows.push_back(row);
  }
  sec["values"] = json{{"nodes_checked", checked}};
  sec["nodes"] = rows;
  const int failures = failing < 0 ? 0 : 1;
  add_check(run, sec, "origin interior to the increment hull at every node",
            static_cast<double>(failures), 0.0, failing < 0);
  if (failing < 0) {
    run.notes.push_back("na " + path + ": all " + std::to_string(checked) + " nodes pass");
  } else {
    run.notes.push_back("na " + path + ": violation at node " + std::to_string(failing) +
                        ", separating direction in the report");
  }
  return emit(run, kExitNa);
}

int cmd_criterion(Run& run, const std::string& path, const std::string& p_text,
                  const std::string& floor_text) {
  const double p = parse_exponent(p_text);
  const double q = mmfloor::conjugate_exponent(p);
  ScenarioTree tree = load_tree(run, path);
  AdaptedValues floor = resolve_floor(tree, floor_text, run.tol);
  const int horizon = tree.horizon();
  const double dual_tol = p == 2.0 ? 1e-5 : run.tol.dual;

  for (int n = 0; n < horizon; ++n) {
    AdaptedValues next =
        n == horizon - 1 ? floor : mmfloor::constant_values(tree, n + 1, 1.0);
    OnePeriodModel model = mmfloor::one_period_view(tree, n, next, run.tol);
    mmfloor::CriterionReport rep;
    try {
      rep = mmfloor::criterion(model, p, run.tol);
    } catch (const NaViolation& e) {
      const auto& level = tree.nodes_at_depth(n);
      const int node = e.location() >= 0 && e.location() < static_cast<int>(level.size())
                           ? level[static_cast<size_t>(e.location())]
                           : e.location();
      throw NaViolation("step " + std::to_string(n) + ", node " + std::to_string(node) +
                            ": " + e.what(),
                        node, e.separator());
    }
    mmfloor::MinNormResult mn = mmfloor::min_norm_density(model, q, run.tol);
    json& sec = new_section(run, horizon == 1 ? "criterion" : "step " + std::to_string(n));
    sec["values"] = json{{"p", p_text},
                         {"q", exponent_text(q)},
                         {"atoms", model.atoms.size()},
                         {"v", jnum(rep.value)},
                         {"min_norm", jnum(mn.value)}};
    if (model.atoms.size() <= 32) {
      json mean = json::array(), support = json::array(), maximizer = json::array();
      for (size_t i = 0; i < model.atoms.size(); ++i) {
        mean.push_back(jvec(rep.mean[i]));
        support.push_back(jnum(rep.support_values(static_cast<mmfloor::Index>(i))));
        maximizer.push_back(jvec(rep.maximizers[i]));
      }
      sec["values"]["mean"] = mean;
      sec["values"]["support_value"] = support;
      sec["values"]["maximizer"] = maximizer;
    }
    const double gap = scaled_gap(mn.value, rep.value);
    add_check(run, sec, "duality: v equals the minimal density distance", gap, dual_tol,
              gap <= dual_tol);
    std::ostringstream line;
    line << (horizon == 1 ? "criterion" : "step " + std::to_string(n)) << ": v_" << p_text
         << " = " << rep.value << " (duality gap " << gap << ")";
    run.notes.push_back(line.str());
  }

  if (horizon > 1 && p == kInf) {
    mmfloor::BackwardEnvelope env = mmfloor::backward_envelope(tree, floor, run.tol);
    const double ef = expected_floor(tree, floor);
    const double gain = mmfloor::max_expected_gain_lp(tree, floor, run.tol);
    json& sec = new_section(run, "recursion");
    sec["values"] = json{{"root_value", jnum(env.root_expectation)},
                         {"expected_floor", jnum(ef)},
                         {"excess", jnum(env.root_expectation - ef)},
                         {"optimal_gain", jnum(gain)}};
    const double gap = scaled_gap(env.root_expectation - ef, gain);
    add_check(run, sec, "root value minus expected floor equals the optimal gain", gap,
              run.tol.dual, gap <= run.tol.dual);
    std::ostringstream line;
    line << "recursion: root value " << env.root_expectation << ", excess over floor "
         << env.root_expectation - ef;
    run.notes.push_back(line.str());
  }
  return emit(run, kExitFail);
}

int cmd_density(Run& run, const std::string& path, const std::string& floor_text, bool multi,
                const std::string& out_text) {
  ScenarioTree tree = load_tree(run, path);
  AdaptedValues floor = resolve_floor(tree, floor_text, run.tol);
  const std::string out = out_text.empty() ? path + ".density.json" : out_text;
  if (!multi && tree.horizon() != 1)
    throw InputError("tree has horizon " + std::to_string(tree.horizon()) +
                     "; pass --multi for the product construction");

  json file_doc;
  json values = json::object();
  if (!multi) {
    OnePeriodModel model = mmfloor::one_period_view(tree, 0, floor, run.tol);
    mmfloor::OnePeriodDensity den = mmfloor::construct_density(model, run.tol);
    mmfloor::IncrementView view = mmfloor::increments_view(tree, 0, run.tol);
    double expected = 0.0;
    for (size_t k = 0; k < view.child_ids.size(); ++k) {
      const int leaf = view.child_ids[k];
      const double g = den.density[0](view.outcome_of_child[k]);
      values[std::to_string(leaf)] = jnum(g);
      expected += tree.path_prob(leaf) * g;
    }
    const double c = expected > 0.0 ? 1.0 / expected : kInf;
    json& sec = new_section(run, "construction");
    sec["values"] = json{{"nu", jvec(den.nu)},
                         {"expected_density", jnum(expected)},
                         {"normalizer", jnum(c)}};
    add_check(run, sec, "conditional moment residual", den.moment_residual, run.tol.feas,
              den.moment_residual <= run.tol.feas);
    add_check(run, sec, "density dominates the floor", den.floor_margin, run.tol.feas,
              den.floor_margin >= -run.tol.feas);
    add_check(run, sec, "expected density is positive", expected, 0.0, expected > 0.0);
    file_doc = json{{"kind", "one-period-density"},
                    {"input", run.input},
                    {"normalizer", jnum(c)},
                    {"values", values}};
    run.notes.push_back("density: " + std::to_string(view.child_ids.size()) +
                        " leaf values, moment residual " +
                        std::to_string(den.moment_residual));
  } else {
    mmfloor::DensityCertificate cert =
        mmfloor::construct_martingale_density(tree, floor, run.tol);
    mmfloor::CertificateReport rep =
        mmfloor::verify_certificate(tree, cert, floor, run.tol);
    for (int leaf : tree.leaves())
      values[std::to_string(leaf)] = jnum(cert.leaf_density.at(leaf));
    json& sec = new_section(run, "certificate");
    sec["values"] = json{{"expected_density", jnum(cert.envelope.root_expectation)},
                         {"normalizer", jnum(cert.normalizer)},
                         {"min_density", jnum(rep.min_density)}};
    add_check(run, sec, "martingale residual", rep.martingale_residual, run.tol.feas,
              rep.martingale_residual <= run.tol.feas);
    add_check(run, sec, "normalization residual", rep.normalization_residual, run.tol.feas,
              rep.normalization_residual <= run.tol.feas);
    add_check(run, sec, "tower residual", rep.tower_residual, run.tol.feas,
              rep.tower_residual <= run.tol.feas);
    add_check(run, sec, "root identity residual", rep.root_identity_residual, run.tol.feas,
              rep.root_identity_residual <= run.tol.feas);
    add_check(run, sec, "density over floor ratio", rep.min_floor_ratio, 1e-12,
              rep.min_floor_ratio >= 1.0 - 1e-12);
    add_check(run, sec, "verified end to end", rep.pass ? 1.0 : 0.0, 0.0, rep.pass);
    file_doc = json{{"kind", "martingale-density"},
                    {"input", run.input},
                    {"normalizer", jnum(cert.normalizer)},
                    {"values", values}};
    run.notes.push_back("density: product certificate over " +
                        std::to_string(tree.node_count()) + " nodes, normalizer " +
                        std::to_string(cert.normalizer));
  }

  const std::string bytes = file_doc.dump(2) + "\n";
  std::ofstream sink(out, std::ios::binary);
  if (!sink) throw InputError("cannot write density file: " + out);
  sink << bytes;
  sink.close();
  run.output = json{{"density_file", out}, {"digest", "fnv1a64:" + fnv1a64(bytes)}};
  run.notes.push_back("density file written to " + out);
  return emit(run, kExitFail);
}

// Emits the generated model, reloads it, and compares engine values computed
// from the file against the generator's closed-form table.
int repro_sign_pair(Run& run, int depth, const std::string& out) {
  auto gen = mmfloor::repro::make_sign_pair_chain(depth, run.tol);
  ScenarioTree tree = model_to_tree(gen.model, run.tol);
  tree.save(out);
  const std::string bytes = read_file(out);
  run.input = json{{"path", out}, {"digest", "fnv1a64:" + fnv1a64(bytes)}, {"generated", true}};
  ScenarioTree loaded = ScenarioTree::from_json(bytes, run.tol);
  OnePeriodModel model =
      mmfloor::one_period_view(loaded, 1, mmfloor::leaf_floor_values(loaded), run.tol);

  json& cmp = new_section(run, "closed-forms");
  cmp["rows"] = json::array();
  cmp["values"] = json{{"blocks", gen.spec.blocks},
                       {"points", gen.spec.points},
                       {"tail_policy", gen.spec.tail_policy}};
  const double cform = 1e-9;
  mmfloor::CriterionReport rep_inf = mmfloor::criterion(model, kInf, run.tol);
  for (const auto& [p, key] : std::vector<std::pair<double, std::string>>{
           {kInf, "v[p=inf]"}, {2.0, "v[p=2]"}, {1.0, "v[p=1]"}}) {
    const double engine =
        p == kInf ? rep_inf.value : mmfloor::criterion(model, p, run.tol).value;
    add_row(run, cmp, key, gen.table.at(key).formula, gen.table.at(key).value, engine, cform);
  }

  double erho = 0.0;
  for (size_t i = 0; i < gen.model.atoms.size(); ++i) {
    const auto& atom = model.atoms[i];
    if (atom.increments.size() != 2) continue;
    const mmfloor::Index pos = atom.increments.points(0, 0) > 0.0 ? 0 : 1;
    const mmfloor::Index neg = 1 - pos;
    const double xp = atom.increments.points(pos, 0);
    const double xn = atom.increments.points(neg, 0);
    const double wp = atom.increments.weights(pos);
    const double wn = atom.increments.weights(neg);
    const double rho_pos = atom.floor(neg) * std::abs(xn) * wn / (xp * wp);
    const double rho_neg = atom.floor(pos) * xp * wp / (std::abs(xn) * wn);
    erho += atom.prob * (wp * rho_pos + wn * rho_neg);
    const std::string label = std::to_string(i + 1);
    add_row(run, cmp, "rho_pos[" + label + "]", gen.table.at("rho_pos[" + label + "]").formula,
            gen.table.at("rho_pos[" + label + "]").value, rho_pos, cform);
    add_row(run, cmp, "rho_neg[" + label + "]", gen.table.at("rho_neg[" + label + "]").formula,
            gen.table.at("rho_neg[" + label + "]").value, rho_neg, cform);
    const std::string vkey = "v_term[p=inf][" + label + "]";
    add_row(run, cmp, vkey, gen.table.at(vkey).formula, gen.table.at(vkey).value,
            atom.prob * rep_inf.support_values(static_cast<mmfloor::Index>(i)), cform);
  }
  add_row(run, cmp, "Erho", gen.table.at("Erho").formula, gen.table.at("Erho").value, erho,
          cform);
  if (model.atoms.size() > gen.model.atoms.size() - 1 &&
      model.atoms.back().increments.size() == 1)
    add_row(run, cmp, "tail_mass", gen.table.at("tail_mass").formula,
            gen.table.at("tail_mass").value, model.atoms.back().prob, cform);
  // new_section reallocates the section array; read cmp before adding more.
  const size_t row_count = cmp["rows"].size();
  const double worst = worst_row_residual(cmp);

  json& lim = new_section(run, "limits");
  const double limit = gen.table.at("v_limit[p=inf]").value;
  lim["values"] = json{{"v_limit", jnum(limit)}};
  add_check(run, lim, "partial sums stay below the limit", rep_inf.value, limit + 1e-9,
            rep_inf.value <= limit + 1e-9);

  mmfloor::OnePeriodDensity den = mmfloor::construct_density(model, run.tol);
  json& sec = new_section(run, "construction");
  sec["values"] = json{{"nu", jvec(den.nu)}};
  add_check(run, sec, "conditional moment residual", den.moment_residual, run.tol.feas,
            den.moment_residual <= run.tol.feas);
  add_check(run, sec, "density dominates the floor", den.floor_margin, run.tol.feas,
            den.floor_margin >= -run.tol.feas);

  std::ostringstream line;
  line << "repro 5.2 depth " << depth << ": " << row_count
       << " comparisons, worst scaled residual " << worst;
  run.notes.push_back(line.str());
  run.notes.push_back("model written to " + out);
  return emit(run, kExitFail);
}

int repro_two_step(Run& run, int depth, const std::string& out) {
  auto gen = mmfloor::repro::make_block_tree(depth, run.tol);
  gen.tree.save(out);
  const std::string bytes = read_file(out);
  run.input = json{{"path", out}, {"digest", "fnv1a64:" + fnv1a64(bytes)}, {"generated", true}};
  ScenarioTree loaded = ScenarioTree::from_json(bytes, run.tol);
  AdaptedValues floor = mmfloor::leaf_floor_values(loaded);
  mmfloor::BackwardEnvelope env = mmfloor::backward_envelope(loaded, floor, run.tol);

  json& cmp = new_section(run, "closed-forms");
  cmp["rows"] = json::array();
  cmp["values"] = json{{"blocks", gen.spec.blocks},
                       {"points", gen.spec.points},
                       {"tail_policy", gen.spec.tail_policy}};
  const double cform = 1e-9;
  auto table_row = [&](const std::string& key, double engine) {
    add_row(run, cmp, key, gen.table.at(key).formula, gen.table.at(key).value, engine, cform);
  };
  for (int m = 1; m <= 2 * depth; ++m) {
    const int node = gen.step_nodes[static_cast<size_t>(m - 1)];
    table_row("a1[" + std::to_string(m) + "]", env.targets.at(node)(0));
    table_row("nu1[" + std::to_string(m) + "]", env.gauge_values.at(node));
    table_row("beta1[" + std::to_string(m) + "]", env.values[2].at(node));
  }
  double enu0 = 0.0;
  for (int id : loaded.nodes_at_depth(1)) enu0 += loaded.path_prob(id) * env.gauge_values.at(id);
  for (int j = 1; j <= depth; ++j) {
    const int node = gen.block_nodes[static_cast<size_t>(j - 1)];
    const std::string label = std::to_string(j);
    table_row("a0[" + label + "]", env.targets.at(node)(0));
    table_row("nu0[" + label + "]", env.gauge_values.at(node));
    table_row("beta0[" + label + "]", env.values[1].at(node));
    table_row("P_block[" + label + "]", loaded.path_prob(node));
    table_row("Enu0_term[" + label + "]",
              loaded.path_prob(node) * env.gauge_values.at(node));
  }
  table_row("Enu0", enu0);
  table_row("Ebeta0", env.root_expectation);
  table_row("tail_mass", loaded.path_prob(gen.block_nodes.back()));

  mmfloor::StrategyResult strat = mmfloor::block_doubling_strategy(loaded, run.tol);
  table_row("EG_doubling", strat.expected_gain);
  const double slice1 =
      mmfloor::criterion(
          mmfloor::one_period_view(loaded, 1, mmfloor::constant_values(loaded, 2, 1.0),
                                   run.tol),
          kInf, run.tol)
          .value;
  const double slice2 =
      mmfloor::criterion(mmfloor::one_period_view(loaded, 2, floor, run.tol), kInf, run.tol)
          .value;
  table_row("slice_v[1]", slice1);
  table_row("slice_v[2]", slice2);
  // new_section reallocates the section array; read cmp before adding more.
  const size_t row_count = cmp["rows"].size();
  const double worst = worst_row_residual(cmp);

  json& div = new_section(run, "divergence-and-limits");
  div["values"] = json{{"Enu0_per_block", jnum(enu0 / depth)},
                       {"doubling_min_gain", jnum(strat.min_gain)}};
  add_check(run, div, "envelope excess grows at least 0.7 per block", enu0, 0.7 * depth,
            enu0 >= 0.7 * depth);
  add_check(run, div, "first step sums stay below 5/3", slice1, 5.0 / 3.0 + 1e-9,
            slice1 <= 5.0 / 3.0 + 1e-9);
  add_check(run, div, "second step sums stay below sqrt(1/2)", slice2,
            std::sqrt(0.5) + 1e-9, slice2 <= std::sqrt(0.5) + 1e-9);
  add_check(run, div, "doubling losses bounded by one", strat.min_gain, 1e-9,
            strat.min_gain >= -1.0 - 1e-9);

  mmfloor::DensityCertificate cert =
      mmfloor::construct_martingale_density(loaded, floor, run.tol);
  mmfloor::CertificateReport vrep = mmfloor::verify_certificate(loaded, cert, floor, run.tol);
  json& sec = new_section(run, "certificate");
  sec["values"] = json{{"expected_density", jnum(cert.envelope.root_expectation)},
                       {"normalizer", jnum(cert.normalizer)}};
  add_check(run, sec, "martingale residual", vrep.martingale_residual, run.tol.feas,
            vrep.martingale_residual <= run.tol.feas);
  add_check(run, sec, "tower residual", vrep.tower_residual, run.tol.feas,
            vrep.tower_residual <= run.tol.feas);
  add_check(run, sec, "verified end to end", vrep.pass ? 1.0 : 0.0, 0.0, vrep.pass);

  std::ostringstream line;
  line << "repro 5.3 depth " << depth << ": " << row_count
       << " comparisons, worst scaled residual " << worst << ", Enu0 = " << enu0;
  run.notes.push_back(line.str());
  run.notes.push_back("model written to " + out);
  return emit(run, kExitFail);
}

int repro_asset_family(Run& run, int depth, const std::string& out) {
  auto fam = mmfloor::repro::make_asset_family(depth, -1, run.tol);
  ScenarioTree tree = model_to_tree(fam.model, run.tol);
  tree.save(out);
  const std::string bytes = read_file(out);
  run.input = json{{"path", out}, {"digest", "fnv1a64:" + fnv1a64(bytes)}, {"generated", true}};
  ScenarioTree loaded = ScenarioTree::from_json(bytes, run.tol);
  OnePeriodModel model =
      mmfloor::one_period_view(loaded, 0, mmfloor::leaf_floor_values(loaded), run.tol);
  const auto& points = model.atoms.front().increments.points;
  const auto& weights = model.atoms.front().increments.weights;

  json& cmp = new_section(run, "moment-identities");
  cmp["rows"] = json::array();
  cmp["values"] = json{{"assets", fam.spec.blocks},
                       {"points", fam.spec.points},
                       {"tail_policy", fam.spec.tail_policy}};
  const double cform = 1e-12;
  for (int j = 1; j <= depth; ++j) {
    const std::string label = std::to_string(j);
    double ep = 0.0, p_slab = 0.0;
    for (mmfloor::Index k = 0; k < weights.size(); ++k) {
      ep += weights(k) * points(k, j - 1);
      if (points(k, j - 1) == -1.0) p_slab += weights(k);
    }
    add_row(run, cmp, "EP_xi[" + label + "]", fam.table.at("EP_xi[" + label + "]").formula,
            fam.table.at("EP_xi[" + label + "]").value, ep, cform);
    add_row(run, cmp, "P_slab[" + label + "]", fam.table.at("P_slab[" + label + "]").formula,
            fam.table.at("P_slab[" + label + "]").value, p_slab, cform);
    double q_slab = 0.0;
    for (mmfloor::Index m = 0; m < fam.q_mass.size(); ++m)
      if (fam.xi(m, j - 1) == -1.0) q_slab += fam.q_mass(m);
    add_row(run, cmp, "Q_slab[" + label + "]", fam.table.at("Q_slab[" + label + "]").formula,
            fam.table.at("Q_slab[" + label + "]").value, q_slab, cform);
    const double eq = fam.table.at("EQ_xi[" + label + "]").value;
    add_check(run, cmp, "auxiliary measure moment vanishes for asset " + label, std::abs(eq),
              1e-12, std::abs(eq) <= 1e-12);
  }
  add_row(run, cmp, "mass_Q", fam.table.at("mass_Q").formula, 1.0, fam.q_mass.sum(), 1e-12);
  add_row(run, cmp, "mass_P", fam.table.at("mass_P").formula, 1.0, fam.p_mass.sum(), 1e-12);

  mmfloor::CriterionReport rep = mmfloor::criterion(model, kInf, run.tol);
  json& gain = new_section(run, "gain-bound");
  gain["values"] = json{{"v", jnum(rep.value)},
                        {"bound", jnum(fam.table.at("gain_bound").value)}};
  add_check(run, gain, "optimal gain stays below the uniform bound", rep.value,
            fam.table.at("gain_bound").value + 1e-7,
            rep.value <= fam.table.at("gain_bound").value + 1e-7);

  std::vector<int> sizes;
  for (int j = 1; j <= depth; ++j) sizes.push_back(j);
  std::vector<mmfloor::repro::FloorCollapseRow> rows =
      mmfloor::repro::floor_collapse_report(sizes, 8.0, run.tol);
  json& col = new_section(run, "floor-collapse");
  col["rows"] = json::array();
  double worst_gain = 0.0, worst_rise = 0.0, worst_capped_rise = 0.0, worst_z = 0.0;
  bool slabs_ok = true, capped_ok = true;
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    col["rows"].push_back(json{{"family_size", row.family_size},
                               {"max_gain", jnum(row.max_gain)},
                               {"max_floor", jnum(row.max_floor)},
                               {"max_floor_capped", jnum(row.max_floor_capped)},
                               {"capped_bound", jnum(row.capped_bound)},
                               {"z_moment_residual", jnum(row.z_moment_residual)},
                               {"min_slab_mass", jnum(row.min_slab_mass)},
                               {"slab_bound_ok", row.slab_bound_ok},
                               {"capped_bound_ok", row.capped_bound_ok}});
    worst_gain = std::max(worst_gain, row.max_gain);
    worst_z = std::max(worst_z, row.z_moment_residual);
    if (i > 0) {
      worst_rise = std::max(worst_rise, row.max_floor - rows[i - 1].max_floor);
      worst_capped_rise =
          std::max(worst_capped_rise, row.max_floor_capped - rows[i - 1].max_floor_capped);
    }
    slabs_ok = slabs_ok && row.slab_bound_ok;
    capped_ok = capped_ok && row.capped_bound_ok;
  }
  col["values"] = json{{"cap", jnum(rows.front().cap)},
                       {"collapse_ratio",
                        jnum(rows.back().max_floor / rows.front().max_floor)},
                       {"capped_collapse_ratio",
                        jnum(rows.back().max_floor_capped / rows.front().max_floor_capped)}};
  add_check(run, col, "gains stay below the uniform bound", worst_gain, 0.75 + 1e-7,
            worst_gain <= 0.75 + 1e-7);
  add_check(run, col, "best floor is nonincreasing", worst_rise, 1e-12, worst_rise <= 1e-12);
  add_check(run, col, "capped best floor is nonincreasing", worst_capped_rise, 1e-12,
            worst_capped_rise <= 1e-12);
  add_check(run, col, "explicit density moment residual", worst_z, 1e-12, worst_z <= 1e-12);
  add_check(run, col, "floor bounded by twice the thinnest slab mass", slabs_ok ? 1.0 : 0.0,
            0.0, slabs_ok);
  add_check(run, col, "capped floor bounded by twice cap times slab mass",
            capped_ok ? 1.0 : 0.0, 0.0, capped_ok);
  add_check(run, col, "one-asset best floor equals 8/9",
            scaled_gap(rows.front().max_floor, 8.0 / 9.0), 1e-9,
            scaled_gap(rows.front().max_floor, 8.0 / 9.0) <= 1e-9);
  if (rows.size() >= 6) {
    const double ratio = rows.back().max_floor_capped / rows.front().max_floor_capped;
    add_check(run, col, "capped floor collapses below a quarter of its start", ratio, 0.25,
              ratio < 0.25);
  }

  std::ostringstream line;
  line << "repro 5.4 depth " << depth << ": v = " << rep.value << ", capped floor collapses to "
       << rows.back().max_floor_capped << " (exact floor stalls at " << rows.back().max_floor
       << ")";
  run.notes.push_back(line.str());
  run.notes.push_back("model written to " + out);
  return emit(run, kExitFail);
}

int cmd_repro(Run& run, const std::string& example, int depth, const std::string& out_text) {
  if (depth < 1) throw InputError("depth must be at least 1");
  const std::string out = out_text.empty()
                              ? "repro-" + example + "-depth" + std::to_string(depth) + ".json"
                              : out_text;
  if (example == "5.2") return repro_sign_pair(run, depth, out);
  if (example == "5.3") return repro_two_step(run, depth, out);
  return repro_asset_family(run, depth, out);
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> echo(argv, argv + argc);
  CLI::App app{"floor-constrained martingale densities on finite scenario trees"};
  app.require_subcommand(1);
  Tolerances tol;
  auto add_tolerance_flags = [&tol](CLI::App* cmd) {
    cmd->add_option("--tol-feas", tol.feas, "feasibility tolerance")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--tol-dual", tol.dual, "duality tolerance")->check(CLI::PositiveNumber);
  };

  std::string v_path;
  CLI::App* validate = app.add_subcommand("validate", "check a tree file, list every violation");
  validate->add_option("file", v_path, "tree file")->required();
  add_tolerance_flags(validate);

  std::string n_path;
  CLI::App* na = app.add_subcommand("na", "per-node no-arbitrage test");
  na->add_option("file", n_path, "tree file")->required();
  add_tolerance_flags(na);

  std::string c_path, c_p = "inf", c_floor;
  CLI::App* crit = app.add_subcommand("criterion", "existence criterion v_p per time step");
  crit->add_option("file", c_path, "tree file")->required();
  crit->add_option("--p", c_p, "exponent of the downside constraint")
      ->check(CLI::IsMember({"1", "2", "inf"}));
  crit->add_option("--floor", c_floor, "const:<x> or file:<path>, default: floor in the tree");
  add_tolerance_flags(crit);

  std::string d_path, d_floor, d_out;
  bool d_multi = false;
  CLI::App* dens = app.add_subcommand("density", "construct and verify a floored density");
  dens->add_option("file", d_path, "tree file")->required();
  dens->add_option("--floor", d_floor, "const:<x> or file:<path>, default: floor in the tree");
  dens->add_flag("--multi", d_multi, "product construction over all steps");
  dens->add_option("--out", d_out, "density file path, default: <file>.density.json");
  add_tolerance_flags(dens);

  std::string r_example;
  int r_depth = 0;
  std::string r_out;
  CLI::App* repro = app.add_subcommand("repro", "emit a reference model and compare tables");
  repro->add_option("--example", r_example, "reference construction id")
      ->required()
      ->check(CLI::IsMember({"5.2", "5.3", "5.4"}));
  repro->add_option("--depth", r_depth, "truncation size J");
  repro->add_option("--out", r_out, "model file path, default: repro-<example>-depth<J>.json");
  add_tolerance_flags(repro);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitInput;
  }

  Run run;
  run.argv = echo;
  run.tol = tol;
  run.command = app.get_subcommands().front()->get_name();
  try {
    if (validate->parsed()) return cmd_validate(run, v_path);
    if (na->parsed()) return cmd_na(run, n_path);
    if (crit->parsed()) return cmd_criterion(run, c_path, c_p, c_floor);
    if (dens->parsed()) return cmd_density(run, d_path, d_floor, d_multi, d_out);
    if (r_depth == 0) r_depth = r_example == "5.3" ? 12 : 8;
    return cmd_repro(run, r_example, r_depth, r_out);
  } catch (const ValidationError& e) {
    json extra{{"violations", e.violations()}};
    return emit_error(run, "validation", e.what(), kExitInput, extra);
  } catch (const NaViolation& e) {
    json extra{{"location", e.location()}, {"separator", jvec(e.separator())}};
    return emit_error(run, "no-arbitrage", e.what(), kExitNa, extra);
  } catch (const InputError& e) {
    return emit_error(run, "input", e.what(), kExitInput);
  } catch (const SolverFailure& e) {
    return emit_error(run, "solver", e.what(), kExitSolver);
  } catch (const std::exception& e) {
    return emit_error(run, "internal", e.what(), kExitSolver);
  }
}

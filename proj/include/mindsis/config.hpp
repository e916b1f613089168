#pragma once

// Run configuration shared by the command-line tools. Every field has a
// default; unknown keys are rejected; config_to_json() writes back the complete
// document so a run can be reproduced from its output directory.

#include "mindsis/sis.hpp"
#include "mindsis/sim.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace mindsis {

struct ModelConfig {
  std::vector<int> hidden{50, 50};
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 3e-3;
  double final_lr_fraction = 0.01;  // learning rate decays geometrically to this fraction
};

struct DatasetConfig {
  int samples = 20000;
  Box state_box = default_training_box();
  Box control_box = default_control_box();
};

struct ScenarioConfig {
  std::string task = "tracking";  // tracking | collision | following
  int waypoints = 100;             // tracking reference length
  int horizon = 200;               // collision / following
  double dt = kDefaultDt;
  double d_min = 1.0;
  double d_max = 3.0;
  double target_speed = 1.0;
  ExecModel exec = ExecModel::Nndm;
};

struct IndexConfig {
  IndexParams hand{2.0, 1.0, 0.3, 0.01};
  std::optional<IndexParams> learned;
  std::string learned_path;  // synthesis JSON, used when learned is absent
  double margin_c = 1.0;     // lambda = c * xdot_max * dt
  std::optional<double> lambda;  // skips the xdot_max search when set
  long xdot_boxes = 20000;       // box budget of the xdot_max search
};

struct SynthesisConfig {
  int samples = 4000;
  int population = 12;
  int generations = 30;
  double region_half = 5.0;
  double exclusion_factor = 0.3;
  CheckerConfig checker;
  double sigma0 = 0.3;
  int heatmap_cells = 20;
};

struct SolverConfig {
  bool partition = true;
  int leaf_unstable = 10;
  int max_depth = 16;
  long node_limit = 1'000'000;
  double time_limit = kInf;  // seconds per MILP
  int max_corrections = 8;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  ModelConfig model;
  DatasetConfig dataset;
  ScenarioConfig scenario;
  IndexConfig index;
  SynthesisConfig synthesis;
  SolverConfig solver;

  MindOptions mind_options() const {
    MindOptions o;
    o.partition = solver.partition;
    o.split.leaf_unstable = solver.leaf_unstable;
    o.split.max_depth = solver.max_depth;
    o.step.milp.node_limit = solver.node_limit;
    o.step.milp.time_limit = solver.time_limit;
    o.max_corrections = solver.max_corrections;
    return o;
  }
};

namespace detail {

// Rejects keys of j outside `allowed`, naming the section.
inline void check_keys(const nlohmann::json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ParseError("config: " + section + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ParseError("config: unknown key '" + (section.empty() ? k : section + "." + k) + "'");
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError("config: bad value for '" + section + "." + key + "'");
  }
}

inline Box box_from_json(const nlohmann::json& j, const std::string& where) {
  check_keys(j, where, {"lower", "upper"});
  if (!j.contains("lower") || !j.contains("upper")) throw ParseError("config: " + where + " needs lower and upper");
  std::vector<double> lo, hi;
  read_opt(j, "lower", lo, where);
  read_opt(j, "upper", hi, where);
  if (lo.size() != hi.size()) throw ParseError("config: " + where + " bounds differ in length");
  try {
    return Box(to_vec(lo), to_vec(hi));
  } catch (const Error& e) {
    throw ParseError("config: " + where + ": " + e.what());
  }
}

inline nlohmann::json box_to_json(const Box& b) { return {{"lower", to_std(b.lower)}, {"upper", to_std(b.upper)}}; }

inline IndexParams params_from_json(const nlohmann::json& j, const std::string& where) {
  check_keys(j, where, {"alpha1", "alpha2", "beta", "gamma"});
  IndexParams p;
  read_opt(j, "alpha1", p.alpha1, where);
  read_opt(j, "alpha2", p.alpha2, where);
  read_opt(j, "beta", p.beta, where);
  read_opt(j, "gamma", p.gamma, where);
  return p;
}

inline nlohmann::json params_to_json(const IndexParams& p) {
  return {{"alpha1", p.alpha1}, {"alpha2", p.alpha2}, {"beta", p.beta}, {"gamma", p.gamma}};
}

// JSON has no infinity; a null time limit means none.
inline double read_limit(const nlohmann::json& j, const char* key, const std::string& section) {
  if (!j.contains(key) || j.at(key).is_null()) return kInf;
  double v = 0.0;
  read_opt(j, key, v, section);
  return v;
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
  using namespace detail;
  check_keys(j, "", {"model", "dataset", "scenario", "index", "synthesis", "solver", "output_dir", "seed"});
  RunConfig c;
  read_opt(j, "seed", c.seed, "");
  read_opt(j, "output_dir", c.output_dir, "");
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, "model", {"hidden", "epochs", "batch_size", "learning_rate", "final_lr_fraction"});
    read_opt(m, "hidden", c.model.hidden, "model");
    read_opt(m, "epochs", c.model.epochs, "model");
    read_opt(m, "batch_size", c.model.batch_size, "model");
    read_opt(m, "learning_rate", c.model.learning_rate, "model");
    read_opt(m, "final_lr_fraction", c.model.final_lr_fraction, "model");
  }
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    check_keys(d, "dataset", {"samples", "state_box", "control_box"});
    read_opt(d, "samples", c.dataset.samples, "dataset");
    if (d.contains("state_box")) c.dataset.state_box = box_from_json(d["state_box"], "dataset.state_box");
    if (d.contains("control_box")) c.dataset.control_box = box_from_json(d["control_box"], "dataset.control_box");
  }
  if (j.contains("scenario")) {
    const auto& s = j["scenario"];
    check_keys(s, "scenario", {"task", "waypoints", "horizon", "dt", "d_min", "d_max", "target_speed", "exec"});
    read_opt(s, "task", c.scenario.task, "scenario");
    read_opt(s, "waypoints", c.scenario.waypoints, "scenario");
    read_opt(s, "horizon", c.scenario.horizon, "scenario");
    read_opt(s, "dt", c.scenario.dt, "scenario");
    read_opt(s, "d_min", c.scenario.d_min, "scenario");
    read_opt(s, "d_max", c.scenario.d_max, "scenario");
    read_opt(s, "target_speed", c.scenario.target_speed, "scenario");
    std::string exec = to_string(c.scenario.exec);
    read_opt(s, "exec", exec, "scenario");
    try {
      c.scenario.exec = parse_exec_model(exec);
    } catch (const InputError& e) {
      throw ParseError(std::string("config: scenario.exec: ") + e.what());
    }
  }
  if (j.contains("index")) {
    const auto& i = j["index"];
    check_keys(i, "index", {"hand", "learned", "learned_path", "margin_c", "lambda", "xdot_boxes"});
    if (i.contains("hand")) c.index.hand = params_from_json(i["hand"], "index.hand");
    if (i.contains("learned") && !i["learned"].is_null()) c.index.learned = params_from_json(i["learned"], "index.learned");
    read_opt(i, "learned_path", c.index.learned_path, "index");
    read_opt(i, "margin_c", c.index.margin_c, "index");
    read_opt(i, "xdot_boxes", c.index.xdot_boxes, "index");
    if (i.contains("lambda") && !i["lambda"].is_null()) {
      double l = 0.0;
      read_opt(i, "lambda", l, "index");
      c.index.lambda = l;
    }
  }
  if (j.contains("synthesis")) {
    const auto& s = j["synthesis"];
    check_keys(s, "synthesis", {"samples", "population", "generations", "region_half", "exclusion_factor", "checker",
                                "resolution", "mode", "sigma0", "heatmap_cells"});
    read_opt(s, "samples", c.synthesis.samples, "synthesis");
    read_opt(s, "population", c.synthesis.population, "synthesis");
    read_opt(s, "generations", c.synthesis.generations, "synthesis");
    read_opt(s, "region_half", c.synthesis.region_half, "synthesis");
    read_opt(s, "exclusion_factor", c.synthesis.exclusion_factor, "synthesis");
    read_opt(s, "resolution", c.synthesis.checker.resolution, "synthesis");
    read_opt(s, "sigma0", c.synthesis.sigma0, "synthesis");
    read_opt(s, "heatmap_cells", c.synthesis.heatmap_cells, "synthesis");
    std::string kind = "grid", mode = "linearized";
    read_opt(s, "checker", kind, "synthesis");
    read_opt(s, "mode", mode, "synthesis");
    if (kind == "grid") c.synthesis.checker.kind = CheckerKind::Grid;
    else if (kind == "exact") c.synthesis.checker.kind = CheckerKind::Exact;
    else throw ParseError("config: synthesis.checker must be grid or exact");
    if (mode == "linearized") c.synthesis.checker.mode = ConstraintMode::Linearized;
    else if (mode == "discrete") c.synthesis.checker.mode = ConstraintMode::Discrete;
    else throw ParseError("config: synthesis.mode must be linearized or discrete");
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    check_keys(s, "solver", {"partition", "leaf_unstable", "max_depth", "node_limit", "time_limit", "max_corrections"});
    read_opt(s, "partition", c.solver.partition, "solver");
    read_opt(s, "leaf_unstable", c.solver.leaf_unstable, "solver");
    read_opt(s, "max_depth", c.solver.max_depth, "solver");
    read_opt(s, "node_limit", c.solver.node_limit, "solver");
    c.solver.time_limit = read_limit(s, "time_limit", "solver");
    read_opt(s, "max_corrections", c.solver.max_corrections, "solver");
  }
  return c;
}

inline void validate(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw ValidationError("config: " + m); };
  if (c.model.hidden.empty()) fail("model.hidden must list at least one layer");
  for (int h : c.model.hidden)
    if (h < 1) fail("model.hidden sizes must be positive");
  if (c.model.epochs < 0 || c.model.batch_size < 1 || !(c.model.learning_rate > 0.0)) fail("bad training options");
  if (!(c.model.final_lr_fraction > 0.0) || c.model.final_lr_fraction > 1.0) fail("model.final_lr_fraction must be in (0,1]");
  if (c.dataset.samples < 1) fail("dataset.samples must be positive");
  if (c.dataset.state_box.dim() != 4 || c.dataset.control_box.dim() != 2) fail("dataset boxes must be 4-D (state) and 2-D (control)");
  const auto& s = c.scenario;
  if (s.task != "tracking" && s.task != "collision" && s.task != "following")
    fail("scenario.task must be tracking, collision or following");
  if (s.waypoints < 1 || s.horizon < 1) fail("scenario lengths must be positive");
  if (!(s.dt > 0.0)) fail("scenario.dt must be positive");
  if (!(s.d_min > 0.0) || !(s.d_max > s.d_min)) fail("scenario needs 0 < d_min < d_max");
  if (!(c.index.margin_c > 0.0)) fail("index.margin_c must be positive");
  if (c.index.lambda && !(*c.index.lambda >= 0.0)) fail("index.lambda must be non-negative");
  if (c.index.xdot_boxes < 1) fail("index.xdot_boxes must be positive");
  const auto& y = c.synthesis;
  if (y.samples < 1 || y.population < 2 || y.generations < 1) fail("synthesis sizes out of range");
  if (y.checker.resolution < 2) fail("synthesis.resolution must be at least 2");
  if (!(y.region_half > 0.0) || !(y.sigma0 > 0.0) || y.heatmap_cells < 1) fail("synthesis options out of range");
  if (c.solver.leaf_unstable < 0 || c.solver.max_depth < 0 || c.solver.node_limit < 1 || !(c.solver.time_limit > 0.0))
    fail("solver options out of range");
  if (c.solver.max_corrections < 0) fail("solver.max_corrections must be non-negative");
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  using namespace detail;
  nlohmann::json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["model"] = {{"hidden", c.model.hidden},
                {"epochs", c.model.epochs},
                {"batch_size", c.model.batch_size},
                {"learning_rate", c.model.learning_rate},
                {"final_lr_fraction", c.model.final_lr_fraction}};
  j["dataset"] = {{"samples", c.dataset.samples},
                  {"state_box", box_to_json(c.dataset.state_box)},
                  {"control_box", box_to_json(c.dataset.control_box)}};
  j["scenario"] = {{"task", c.scenario.task},   {"waypoints", c.scenario.waypoints},
                   {"horizon", c.scenario.horizon}, {"dt", c.scenario.dt},
                   {"d_min", c.scenario.d_min},  {"d_max", c.scenario.d_max},
                   {"target_speed", c.scenario.target_speed}, {"exec", to_string(c.scenario.exec)}};
  j["index"] = {{"hand", params_to_json(c.index.hand)},
                {"learned", c.index.learned ? params_to_json(*c.index.learned) : nlohmann::json(nullptr)},
                {"learned_path", c.index.learned_path},
                {"margin_c", c.index.margin_c},
                {"lambda", c.index.lambda ? nlohmann::json(*c.index.lambda) : nlohmann::json(nullptr)},
                {"xdot_boxes", c.index.xdot_boxes}};
  j["synthesis"] = {{"samples", c.synthesis.samples},
                    {"population", c.synthesis.population},
                    {"generations", c.synthesis.generations},
                    {"region_half", c.synthesis.region_half},
                    {"exclusion_factor", c.synthesis.exclusion_factor},
                    {"checker", c.synthesis.checker.kind == CheckerKind::Grid ? "grid" : "exact"},
                    {"resolution", c.synthesis.checker.resolution},
                    {"mode", c.synthesis.checker.mode == ConstraintMode::Linearized ? "linearized" : "discrete"},
                    {"sigma0", c.synthesis.sigma0},
                    {"heatmap_cells", c.synthesis.heatmap_cells}};
  j["solver"] = {{"partition", c.solver.partition},
                 {"leaf_unstable", c.solver.leaf_unstable},
                 {"max_depth", c.solver.max_depth},
                 {"node_limit", c.solver.node_limit},
                 {"time_limit", std::isfinite(c.solver.time_limit) ? nlohmann::json(c.solver.time_limit) : nlohmann::json(nullptr)},
                 {"max_corrections", c.solver.max_corrections}};
  return j;
}

inline RunConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  RunConfig c = config_from_json(j);
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// Learned parameters from the config, or from the synthesis JSON it points to.
inline IndexParams learned_params(const RunConfig& c) {
  if (c.index.learned) return *c.index.learned;
  if (c.index.learned_path.empty()) throw InputError("config: no learned index (set index.learned or index.learned_path)");
  std::ifstream in(c.index.learned_path);
  if (!in) throw InputError("cannot open synthesis result " + c.index.learned_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("synthesis result: ") + e.what());
  }
  if (!j.contains("params")) throw ParseError("synthesis result: missing params");
  return detail::params_from_json(j["params"], "params");
}

}  // namespace mindsis

// mindsis: data generation, training, tracking, index synthesis, safety
// evaluation, scalability bench and plotting.

#include "mindsis/mindsis.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>

namespace fs = std::filesystem;
using namespace mindsis;

namespace {

void report_error(const std::string& kind, const std::string& message, int code) {
  nlohmann::json j{{"error", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << j.dump() << std::endl;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw InputError("cannot write " + p.string());
  return out;
}

void write_json(const fs::path& p, const nlohmann::json& j) { open_out(p) << j.dump(2) << '\n'; }

void write_resolved(const fs::path& dir, const RunConfig& cfg) { write_json(dir / "resolved_config.json", config_to_json(cfg)); }

RunConfig read_config(const std::string& path) { return path.empty() ? RunConfig{} : load_config(path); }

fs::path out_dir_for(const RunConfig& cfg, const std::string& flag) { return flag.empty() ? fs::path(cfg.output_dir) : fs::path(flag); }

// Base scene for synthesis: obstacle or target at the origin.
SafetyIndexSpec base_scene(const RunConfig& cfg) {
  SafetyIndexSpec s;
  s.d_min = cfg.scenario.d_min;
  s.obstacles = {Eigen::Vector2d::Zero()};
  if (cfg.scenario.task == "collision") {
    s.kind = IndexKind::CollisionAvoidance;
  } else if (cfg.scenario.task == "following") {
    s.kind = IndexKind::SafeFollowing;
    s.d_max = cfg.scenario.d_max;
    s.velocity = Eigen::Vector2d(cfg.scenario.target_speed, 0.0);
  } else {
    throw InputError("scenario.task must be collision or following for this command");
  }
  return s;
}

double safety_lambda(const RunConfig& cfg, const MlpNetwork& net) {
  if (cfg.index.lambda) return *cfg.index.lambda;
  const auto xd = x_dot_max_split(net, cfg.dataset.state_box, cfg.dataset.control_box, 1e-2, cfg.index.xdot_boxes);
  return safety_margin(cfg.index.margin_c, xd.value, cfg.scenario.dt);
}

Scenario make_task(const RunConfig& cfg, Rng& rng, const MlpNetwork& net) {
  const auto& s = cfg.scenario;
  if (s.task == "tracking") return make_tracking_task(net, s.waypoints, s.dt, cfg.dataset.control_box, rng);
  if (s.task == "collision") {
    CollisionTaskOptions o;
    o.d_min = s.d_min;
    o.horizon = s.horizon;
    o.dt = s.dt;
    return make_collision_task(rng, o);
  }
  FollowingTaskOptions o;
  o.d_min = s.d_min;
  o.d_max = s.d_max;
  o.target_speed = s.target_speed;
  o.horizon = s.horizon;
  o.dt = s.dt;
  return make_following_task(rng, o);
}

IndexParams select_index(const RunConfig& cfg, const std::string& which, const SafetyIndexSpec& scene) {
  if (which == "phi0") return scene.as_phi0().params;
  if (which == "hand") return cfg.index.hand;
  if (which == "learned") return learned_params(cfg);
  throw InputError("unknown index '" + which + "' (expected phi0, hand or learned)");
}

nlohmann::json metrics_json(const Metrics& m) {
  return {{"steps", m.steps},
          {"mean_l1_error", m.mean_l1_error},
          {"std_l1_error", m.std_l1_error},
          {"mean_l2_error", m.mean_l2_error},
          {"std_l2_error", m.std_l2_error},
          {"success", m.success},
          {"phi0_violation", m.phi0_violation},
          {"infeasible", m.infeasible},
          {"violation_steps", m.violation_steps},
          {"infeasible_steps", m.infeasible_steps},
          {"min_distance", std::isfinite(m.min_distance) ? nlohmann::json(m.min_distance) : nlohmann::json(nullptr)},
          {"mean_solve_ms", m.mean_solve_ms},
          {"max_solve_ms", m.max_solve_ms}};
}

int count_unstable(const MlpNetwork& net, const Vec& x, const Box& U) {
  int n = 0;
  for (const auto& layer : activation_status(propagate(net, Box::cartesian(Box::point(x), U))))
    for (auto s : layer) n += s == ActivationStatus::Unstable;
  return n;
}

MlpNetwork train_model(const RunConfig& cfg, const std::vector<int>& hidden, const Dataset& data,
                       std::vector<double>* loss = nullptr) {
  Rng init = Rng::stream(cfg.seed, "train/init");
  const auto net0 = MlpNetwork::glorot(4, 2, hidden, init);
  TrainOptions o;
  o.epochs = cfg.model.epochs;
  o.batch_size = cfg.model.batch_size;
  o.learning_rate = cfg.model.learning_rate;
  o.lr_decay = cfg.model.epochs > 0 ? std::pow(cfg.model.final_lr_fraction, 1.0 / cfg.model.epochs) : 1.0;
  o.seed = Rng::stream(cfg.seed, "train/batches").next_u64();
  auto r = train(net0, data, o);
  if (loss) *loss = r.epoch_loss;
  return r.net;
}

// ---------------------------------------------------------------------------

void cmd_gen_data(const std::string& config, const std::string& out) {
  const auto cfg = read_config(config);
  Rng rng = Rng::stream(cfg.seed, "gen-data/dataset");
  const auto data = gen_dataset(cfg.dataset.samples, cfg.dataset.state_box, cfg.dataset.control_box, rng);
  const fs::path p(out);
  auto f = open_out(p);
  write_dataset_csv(data, f);
  write_resolved(p.parent_path().empty() ? fs::path(".") : p.parent_path(), cfg);
}

void cmd_train(const std::string& config, const std::string& data_path, const std::string& out) {
  const auto cfg = read_config(config);
  std::ifstream in(data_path);
  if (!in) throw InputError("cannot open dataset " + data_path);
  const auto data = read_dataset_csv(in);
  std::vector<double> loss;
  const auto net = train_model(cfg, cfg.model.hidden, data, &loss);
  const fs::path p(out);
  {
    auto f = open_out(p);
    save_model(net, f);
  }
  fs::path lp = p;
  lp.replace_filename(p.stem().string() + "_loss.csv");
  auto lf = open_out(lp);
  lf << "epoch,loss\n";
  for (std::size_t e = 0; e < loss.size(); ++e) lf << e << ',' << detail::fmt17(loss[e]) << '\n';
  write_resolved(p.parent_path().empty() ? fs::path(".") : p.parent_path(), cfg);
}

void cmd_track(const std::string& config, const std::string& model, const std::string& method, const std::string& index,
               const std::string& out_flag) {
  const auto cfg = read_config(config);
  const auto net = load_model(model);
  const fs::path dir = out_dir_for(cfg, out_flag);
  Rng rng = Rng::stream(cfg.seed, "track/task");
  Scenario sc = make_task(cfg, rng, net);
  sc.exec = cfg.scenario.exec;
  if (sc.scene) {
    if (index == "none") sc.enforce_index = false;
    else sc.scene->params = select_index(cfg, index, *sc.scene);
  } else if (index != "none") {
    throw InputError("--index needs a collision or following scenario");
  }
  Plant plant{&net, cfg.dataset.control_box, cfg.scenario.dt};
  std::unique_ptr<Controller> ctl;
  if (method == "mind") {
    ctl = std::make_unique<MindController>(plant, cfg.mind_options());
  } else if (method.rfind("shooting:", 0) == 0) {
    int n = 0;
    try {
      n = std::stoi(method.substr(9));
    } catch (const std::exception&) {
      throw InputError("bad shooting sample count in '" + method + "'");
    }
    ctl = std::make_unique<ShootingController>(plant, n, Rng::stream(cfg.seed, "track/shooting"));
  } else {
    throw InputError("unknown method '" + method + "' (expected mind or shooting:N)");
  }
  const auto tr = rollout(sc, *ctl, net);
  {
    auto f = open_out(dir / "trajectory.csv");
    write_trajectory_csv(tr, f);
  }
  if (sc.scene) {
    auto f = open_out(dir / "phase.csv");
    write_phase_csv(tr, *sc.scene, f);
  }
  auto m = metrics_json(compute_metrics(tr));
  m["method"] = method;
  m["task"] = sc.task;
  m["index"] = sc.scene ? index : "none";
  write_json(dir / "metrics.json", m);
  write_resolved(dir, cfg);
}

void cmd_synth(const std::string& config, const std::string& model, const std::string& out_flag) {
  const auto cfg = read_config(config);
  const auto net = load_model(model);
  const fs::path dir = out_dir_for(cfg, out_flag);
  const auto scene = base_scene(cfg);
  SynthesisOptions o;
  o.samples = static_cast<std::size_t>(cfg.synthesis.samples);
  o.region_half = cfg.synthesis.region_half;
  o.exclusion_factor = cfg.synthesis.exclusion_factor;
  o.checker = cfg.synthesis.checker;
  o.cma.population = cfg.synthesis.population;
  o.cma.generations = cfg.synthesis.generations;
  o.cma.sigma0 = cfg.synthesis.sigma0;
  o.cma.seed = Rng::stream(cfg.seed, "synth-index/cmaes").next_u64();
  o.lambda = safety_lambda(cfg, net);
  auto r = synthesize_index(net, scene, cfg.scenario.dt, cfg.dataset.control_box, o);
  r.seed = cfg.seed;
  auto j = synthesis_to_json(r);
  j["lambda"] = o.lambda;
  write_json(dir / "synthesis.json", j);
  {
    auto f = open_out(dir / "fitness_history.csv");
    f << "generation,best,best_ever,median,sigma,restarted\n";
    for (const auto& h : r.history)
      f << h.generation << ',' << detail::fmt17(h.best) << ',' << detail::fmt17(h.best_ever) << ',' << detail::fmt17(h.median)
        << ',' << detail::fmt17(h.sigma) << ',' << (h.restarted ? 1 : 0) << '\n';
  }
  const auto hm = heat_map(r.report, r.region, cfg.synthesis.heatmap_cells, cfg.synthesis.heatmap_cells);
  {
    auto f = open_out(dir / "heatmap.csv");
    write_heat_map_csv(hm, f);
  }
  {
    auto f = open_out(dir / "heatmap.svg");
    svg_heat_map(hm, f);
  }
  write_resolved(dir, cfg);
  std::cout << j.dump() << std::endl;
}

void cmd_eval(const std::string& config, const std::string& model, const std::string& index, const std::string& exec,
              int trials, const std::string& out_flag, bool save_traj) {
  const auto cfg = read_config(config);
  if (trials < 1) throw InputError("--trials must be at least 1");
  const auto net = load_model(model);
  const fs::path dir = out_dir_for(cfg, out_flag);
  const ExecModel em = exec.empty() ? cfg.scenario.exec : parse_exec_model(exec);
  if (cfg.scenario.task == "tracking") throw InputError("eval-safety needs scenario.task collision or following");
  std::vector<Trajectory> trs(static_cast<std::size_t>(trials));
  std::vector<Scenario> scs(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t) {
    Rng rng = Rng::stream(cfg.seed, "eval-safety/task/" + std::to_string(t));
    auto& sc = scs[static_cast<std::size_t>(t)];
    sc = make_task(cfg, rng, net);
    sc.exec = em;
    sc.scene->params = select_index(cfg, index, *sc.scene);
    if (index != "phi0" && cfg.index.lambda) sc.scene->validate(*cfg.index.lambda);
  }
  parallel_for(static_cast<std::size_t>(trials), [&](std::size_t t) {
    Plant plant{&net, cfg.dataset.control_box, cfg.scenario.dt};
    MindController ctl(plant, cfg.mind_options());
    trs[t] = rollout(scs[t], ctl, net);
  });
  std::vector<Metrics> ms;
  InvariantReport total;
  auto f = open_out(dir / "trials.csv");
  f << "trial,success,phi0_violation,infeasible,violation_steps,infeasible_steps,min_distance,mean_l1_error,decrease_violations,exits\n";
  for (int t = 0; t < trials; ++t) {
    const auto& tr = trs[static_cast<std::size_t>(t)];
    const auto m = compute_metrics(tr);
    const auto inv = check_invariants(tr);
    total.decrease_checked += inv.decrease_checked;
    total.decrease_violations += inv.decrease_violations;
    total.inside_checked += inv.inside_checked;
    total.exits += inv.exits;
    ms.push_back(m);
    f << t << ',' << m.success << ',' << m.phi0_violation << ',' << m.infeasible << ',' << m.violation_steps << ','
      << m.infeasible_steps << ',' << detail::fmt17(m.min_distance) << ',' << detail::fmt17(m.mean_l1_error) << ','
      << inv.decrease_violations << ',' << inv.exits << '\n';
    if (save_traj) {
      auto tf = open_out(dir / ("trajectory_" + std::to_string(t) + ".csv"));
      write_trajectory_csv(tr, tf);
      auto pf = open_out(dir / ("phase_" + std::to_string(t) + ".csv"));
      write_phase_csv(tr, *scs[static_cast<std::size_t>(t)].scene, pf);
    }
  }
  const auto b = aggregate(ms);
  nlohmann::json j{{"task", cfg.scenario.task},
                   {"index", index},
                   {"exec", to_string(em)},
                   {"trials", b.trials},
                   {"success_rate", b.success_rate},
                   {"phi0_violation_rate", b.phi0_violation_rate},
                   {"infeasible_rate", b.infeasible_rate},
                   {"mean_l1_error", b.mean_l1_error},
                   {"mean_solve_ms", b.mean_solve_ms},
                   {"max_solve_ms", b.max_solve_ms},
                   {"min_distance", std::isfinite(b.min_distance) ? nlohmann::json(b.min_distance) : nlohmann::json(nullptr)},
                   {"invariants",
                    {{"decrease_checked", total.decrease_checked},
                     {"decrease_violations", total.decrease_violations},
                     {"inside_checked", total.inside_checked},
                     {"exits", total.exits}}}};
  write_json(dir / "batch_metrics.json", j);
  write_resolved(dir, cfg);
  std::cout << j.dump() << std::endl;
}

void cmd_bench(const std::string& config, const std::vector<int>& layers, const std::vector<int>& hidden, int steps,
               const std::string& out_flag) {
  const auto cfg = read_config(config);
  if (steps < 1) throw InputError("--steps must be at least 1");
  const fs::path dir = out_dir_for(cfg, out_flag);
  Rng drng = Rng::stream(cfg.seed, "bench-scale/dataset");
  const auto data = gen_dataset(cfg.dataset.samples, cfg.dataset.state_box, cfg.dataset.control_box, drng);
  Rng trng = Rng::stream(cfg.seed, "bench-scale/test");
  const auto test = gen_dataset(std::max(1, cfg.dataset.samples / 10), cfg.dataset.state_box, cfg.dataset.control_box, trng);
  auto table = open_out(dir / "bench.csv");
  table << "layers,hidden,steps,mean_unstable,mean_solve_ms,max_solve_ms,mean_l1_error,prediction_error\n";
  auto per = open_out(dir / "bench_steps.csv");
  per << "layers,hidden,k,unstable,solve_ms\n";
  for (int L : layers) {
    if (L < 2) throw InputError("--layers counts weight layers and must be at least 2");
    for (int H : hidden) {
      if (H < 1) throw InputError("--hidden must be positive");
      const auto net = train_model(cfg, std::vector<int>(static_cast<std::size_t>(L - 1), H), data);
      Rng rng = Rng::stream(cfg.seed, "bench-scale/task");
      const auto sc = make_tracking_task(net, steps, cfg.scenario.dt, cfg.dataset.control_box, rng);
      Plant plant{&net, cfg.dataset.control_box, cfg.scenario.dt};
      MindController ctl(plant, cfg.mind_options());
      Vec x = sc.x0;
      double sum_ms = 0, max_ms = 0, sum_unstable = 0, sum_l1 = 0;
      for (int k = 0; k < steps; ++k) {
        const int unstable = count_unstable(net, x, cfg.dataset.control_box);
        const auto out = ctl.control(x, sc.reference[static_cast<std::size_t>(k + 1)], nullptr);
        if (!out.feasible) throw NumericalFailure("bench-scale: tracking step " + std::to_string(k) + " has no solution");
        x = out.x_next;
        sum_ms += out.solve_ms;
        max_ms = std::max(max_ms, out.solve_ms);
        sum_unstable += unstable;
        sum_l1 += (x - sc.reference[static_cast<std::size_t>(k + 1)]).lpNorm<1>();
        per << L << ',' << H << ',' << k << ',' << unstable << ',' << detail::fmt17(out.solve_ms) << '\n';
      }
      table << L << ',' << H << ',' << steps << ',' << detail::fmt17(sum_unstable / steps) << ','
            << detail::fmt17(sum_ms / steps) << ',' << detail::fmt17(max_ms) << ',' << detail::fmt17(sum_l1 / steps) << ','
            << detail::fmt17(prediction_error(net, test)) << '\n';
      std::cout << "layers " << L << " hidden " << H << " mean_ms " << sum_ms / steps << " mean_unstable "
                << sum_unstable / steps << std::endl;
    }
  }
  write_resolved(dir, cfg);
}

void cmd_plot(bool traj, bool heatmap, bool phase, const std::string& in_path, const std::string& out_path) {
  if (traj + heatmap + phase != 1) throw InputError("plot needs exactly one of --traj, --heatmap, --phase");
  std::ifstream in(in_path);
  if (!in) throw InputError("cannot open " + in_path);
  auto out = open_out(out_path);
  if (traj) svg_trajectory(read_trajectory_csv(in), out);
  else if (heatmap) svg_heat_map(read_heat_map_csv(in), out);
  else svg_phase(read_phase_csv(in), out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MIND-SIS safe control for ReLU network dynamics models"};
  app.require_subcommand(1);

  std::string config, out, data, model, method = "mind", index = "none", exec, out_dir, in_path;
  int trials = 20, steps = 50;
  bool save_traj = false, traj = false, heat = false, phase = false;
  std::vector<int> layers{2, 3}, hidden{16, 32, 64};

  auto* gen = app.add_subcommand("gen-data", "sample a dynamics dataset");
  gen->add_option("--config", config, "run config JSON");
  gen->add_option("--out", out, "dataset CSV")->required();

  auto* tr = app.add_subcommand("train", "train a ReLU dynamics model");
  tr->add_option("--config", config, "run config JSON");
  tr->add_option("--data", data, "dataset CSV")->required();
  tr->add_option("--out", out, "model JSON")->required();

  auto* tk = app.add_subcommand("track", "closed-loop tracking run");
  tk->add_option("--config", config, "run config JSON");
  tk->add_option("--model", model, "model JSON")->required();
  tk->add_option("--method", method, "mind or shooting:N");
  tk->add_option("--index", index, "none, phi0, hand or learned (collision/following only)");
  tk->add_option("--out-dir", out_dir, "output directory (default: config output_dir)");

  auto* sy = app.add_subcommand("synth-index", "synthesize safety-index parameters");
  sy->add_option("--config", config, "run config JSON");
  sy->add_option("--model", model, "model JSON")->required();
  sy->add_option("--out-dir", out_dir, "output directory");

  auto* ev = app.add_subcommand("eval-safety", "batch safety evaluation");
  ev->add_option("--config", config, "run config JSON");
  ev->add_option("--model", model, "model JSON")->required();
  ev->add_option("--index", index, "phi0, hand or learned")->required();
  ev->add_option("--exec", exec, "nndm or analytic (default: config)");
  ev->add_option("--trials", trials, "number of trials");
  ev->add_option("--out-dir", out_dir, "output directory");
  ev->add_flag("--save-trajectories", save_traj, "write per-trial trajectory and phase CSVs");

  auto* be = app.add_subcommand("bench-scale", "solve time versus network size");
  be->add_option("--config", config, "run config JSON");
  be->add_option("--layers", layers, "weight-layer counts");
  be->add_option("--hidden", hidden, "hidden widths");
  be->add_option("--steps", steps, "tracking steps per network");
  be->add_option("--out-dir", out_dir, "output directory");

  auto* pl = app.add_subcommand("plot", "render an SVG");
  pl->add_flag("--traj", traj, "trajectory CSV input");
  pl->add_flag("--heatmap", heat, "heat-map CSV input");
  pl->add_flag("--phase", phase, "phase CSV input");
  pl->add_option("--in", in_path, "input CSV")->required();
  pl->add_option("--out", out, "output SVG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage_error", e.what(), 1);
    return 1;
  }

  try {
    if (*gen) cmd_gen_data(config, out);
    else if (*tr) cmd_train(config, data, out);
    else if (*tk) cmd_track(config, model, method, index, out_dir);
    else if (*sy) cmd_synth(config, model, out_dir);
    else if (*ev) cmd_eval(config, model, index, exec, trials, out_dir, save_traj);
    else if (*be) cmd_bench(config, layers, hidden, steps, out_dir);
    else if (*pl) cmd_plot(traj, heat, phase, in_path, out);
  } catch (const Error& e) {
    const int code = e.user_error() ? 1 : 2;
    report_error(e.kind(), e.what(), code);
    return code;
  } catch (const fs::filesystem_error& e) {
    report_error("input_error", e.what(), 1);
    return 1;
  } catch (const std::exception& e) {
    report_error("internal_error", e.what(), 2);
    return 2;
  }
  return 0;
}

#include "mindsis/sim.hpp"
#include "mindsis/svg.hpp"

#include <gtest/gtest.h>

#include <regex>
#include <sstream>

using namespace mindsis;

namespace {

MlpNetwork random_net(const std::vector<int>& hidden, std::uint64_t seed, double bias = 0.3) {
  Rng rng = Rng::stream(seed, "test-net");
  MlpNetwork base = MlpNetwork::glorot(4, 2, hidden, rng);
  auto layers = base.layers();
  for (auto& l : layers)
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-bias, bias);
  return MlpNetwork(4, 2, layers);
}

Vec v4(double a, double b, double c, double d) { return (Vec(4) << a, b, c, d).finished(); }
Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

SafetyIndexSpec collision_scene() {
  SafetyIndexSpec s;
  s.kind = IndexKind::CollisionAvoidance;
  s.d_min = 1.0;
  s.obstacles = {Eigen::Vector2d::Zero()};
  return s;
}

TrajectoryStep step(int k, double phi0_v, double phi_v, bool feasible = true) {
  TrajectoryStep s;
  s.k = k;
  s.x = v4(k, 0, 1, 0);
  s.ref = v4(k, 0, 1, 0);
  s.u = v2(0, 0);
  s.phi0 = phi0_v;
  s.phi = phi_v;
  s.feasible = feasible;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dynamics and data

TEST(Dynamics, Unicycle) {
  const Vec f = analytic_dynamics(v4(1, 2, 2.0, std::numbers::pi / 2), v2(0.5, -1));
  EXPECT_NEAR(f[0], 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(f[1], 2.0);
  EXPECT_DOUBLE_EQ(f[2], 0.5);
  EXPECT_DOUBLE_EQ(f[3], -1.0);
  EXPECT_THROW(analytic_dynamics(Vec::Zero(3), v2(0, 0)), InputError);
}

TEST(Dataset, TargetsAreTrueDerivativesInsideTheBoxes) {
  Rng rng(1);
  const Box X = default_training_box(), U = default_control_box();
  const auto d = gen_dataset(300, X, U, rng);
  ASSERT_EQ(d.size(), 300u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_TRUE(X.contains(d.x(i)));
    EXPECT_TRUE(U.contains(d.u(i)));
    EXPECT_EQ(d.xdot(i), analytic_dynamics(d.x(i), d.u(i)));
  }
  EXPECT_THROW(gen_dataset(0, X, U, rng), InputError);
}

TEST(Reference, ConsecutiveStatesAreEulerSteps) {
  const auto net = random_net({8, 8}, 2);
  Rng rng(3);
  const Box U = default_control_box();
  const auto f = nndm_dynamics(net);
  const auto ref = gen_reference(80, v4(0, 0, 1, 0.3), 0.05, U, rng, f);
  ASSERT_EQ(ref.states.size(), 81u);
  ASSERT_EQ(ref.controls.size(), 80u);
  for (std::size_t k = 0; k < ref.controls.size(); ++k) {
    EXPECT_TRUE(U.contains(ref.controls[k]));
    EXPECT_EQ(ref.states[k + 1], Vec(ref.states[k] + f(ref.states[k], ref.controls[k]) * 0.05));
  }
}

TEST(Reference, SpeedBandHoldsUnderTrueDynamics) {
  Rng rng(4);
  const auto ref = gen_reference(400, v4(0, 0, 1, 0), 0.05, default_control_box(), rng, analytic_dynamics);
  for (const auto& x : ref.states) {
    EXPECT_GE(x[2], 0.2 - 1e-12);
    EXPECT_LE(x[2], 1.8 + 1e-12);
  }
}

TEST(Reference, DeterministicPerStream) {
  Rng a(9), b(9);
  const auto ra = gen_reference(50, v4(0, 0, 1, 0), 0.05, default_control_box(), a, analytic_dynamics);
  const auto rb = gen_reference(50, v4(0, 0, 1, 0), 0.05, default_control_box(), b, analytic_dynamics);
  EXPECT_EQ(ra.states, rb.states);
}

// ---------------------------------------------------------------------------
// Controllers

TEST(Shooting, SingleInjectedOptimumIsReturned) {
  const auto net = random_net({6}, 5);
  ShootingController sh(Plant{&net}, 1, Rng(1));
  const Vec x = v4(0.1, 0.2, 1.0, 0.0);
  const Vec u = v2(1.5, -0.5);
  const Vec target = nndm_step(net, x, u, 0.05);
  const auto out = sh.choose(x, target, nullptr, u);
  ASSERT_TRUE(out.feasible);
  EXPECT_EQ(out.u, u);
  EXPECT_EQ(out.objective, 0.0);
}

TEST(Shooting, AllCandidatesUnsafeIsInfeasible) {
  const auto net = random_net({6}, 6);
  ShootingController sh(Plant{&net}, 10, Rng(2));
  auto scene = collision_scene();
  scene.params = {1.0, 0.0, 0.0, 0.01};
  // Deep inside the obstacle no candidate can make phi drop by 1/dt.
  scene.d_min = 100.0;
  const auto out = sh.control(v4(1, 0, 1, 0), v4(1, 0, 1, 0), &scene);
  EXPECT_FALSE(out.feasible);
  EXPECT_EQ(out.status, "infeasible");
}

TEST(Shooting, RejectsZeroSamples) {
  const auto net = random_net({4}, 7);
  EXPECT_THROW(ShootingController(Plant{&net}, 0, Rng(1)), InputError);
}

TEST(Mind, TracksAFeasibleReferenceExactly) {
  const auto net = random_net({8, 8}, 8);
  Rng rng(10);
  const auto sc = make_tracking_task(net, 30, 0.05, default_control_box(), rng);
  MindController mind(Plant{&net});
  const auto tr = rollout(sc, mind, net);
  const auto m = compute_metrics(tr);
  EXPECT_TRUE(m.success);
  EXPECT_LE(m.mean_l1_error, 1e-6);
}

TEST(Mind, BeatsShootingOnTheSameReference) {
  const auto net = random_net({8, 8}, 9);
  Rng rng(11);
  const auto sc = make_tracking_task(net, 20, 0.05, default_control_box(), rng);
  MindController mind(Plant{&net});
  ShootingController sh(Plant{&net}, 100, Rng(3));
  const double e_mind = compute_metrics(rollout(sc, mind, net)).mean_l1_error;
  const double e_sh = compute_metrics(rollout(sc, sh, net)).mean_l1_error;
  EXPECT_LT(e_mind, e_sh);
}

// ---------------------------------------------------------------------------
// Rollouts

TEST(Rollout, NndmExecutionReplaysDecodedStates) {
  const auto net = random_net({8, 8}, 12);
  Rng rng(13);
  auto sc = make_collision_task(rng);
  sc.scene->params = {1.0, 0.0, 0.0, 0.01};
  sc.reference.resize(31);
  MindController mind(Plant{&net});
  const auto tr = rollout(sc, mind, net);
  ASSERT_EQ(tr.horizon(), 30);
  for (std::size_t k = 0; k + 1 < tr.steps.size(); ++k) {
    const auto& s = tr.steps[k];
    if (s.feasible) {
      EXPECT_EQ(tr.steps[k + 1].x, s.predicted) << k;
    } else {
      EXPECT_EQ(tr.steps[k + 1].x, nndm_step(net, s.x, s.u, sc.dt)) << k;
    }
  }
}

TEST(Rollout, AnalyticExecutionUsesEulerOnTrueDynamics) {
  const auto net = random_net({6}, 14);
  Rng rng(15);
  auto sc = make_tracking_task(net, 10, 0.05, default_control_box(), rng);
  sc.exec = ExecModel::Analytic;
  ShootingController sh(Plant{&net}, 20, Rng(4));
  const auto tr = rollout(sc, sh, net);
  for (std::size_t k = 0; k + 1 < tr.steps.size(); ++k)
    EXPECT_EQ(tr.steps[k + 1].x, Vec(tr.steps[k].x + analytic_dynamics(tr.steps[k].x, tr.steps[k].u) * sc.dt));
}

TEST(Rollout, MonitoredSceneIsNotEnforced) {
  const auto net = random_net({6}, 16);
  Rng rng(17);
  auto sc = make_collision_task(rng);
  sc.reference.resize(11);
  sc.enforce_index = false;
  MindController mind(Plant{&net});
  const auto tr = rollout(sc, mind, net);
  for (const auto& s : tr.steps) {
    EXPECT_FALSE(std::isnan(s.phi0));
    EXPECT_DOUBLE_EQ(s.phi0, phi0(*sc.scene, s.x));
  }
}

TEST(Rollout, ExecModelParsing) {
  EXPECT_EQ(parse_exec_model("nndm"), ExecModel::Nndm);
  EXPECT_EQ(parse_exec_model("analytic"), ExecModel::Analytic);
  EXPECT_THROW(parse_exec_model("euler"), InputError);
}

// ---------------------------------------------------------------------------
// Metrics and invariants

TEST(Metrics, AllFeasibleAndSafeIsSuccess) {
  Trajectory tr;
  for (int k = 0; k < 4; ++k) tr.steps.push_back(step(k, -1.0, -1.0));
  const auto m = compute_metrics(tr);
  EXPECT_TRUE(m.success);
  EXPECT_EQ(m.steps, 3);
  EXPECT_DOUBLE_EQ(m.mean_l1_error, 0.0);
}

TEST(Metrics, PhiZeroAboveZeroFlagsViolation) {
  Trajectory tr;
  tr.steps = {step(0, -1.0, -1.0), step(1, 0.2, 0.1), step(2, -0.5, -0.5)};
  const auto m = compute_metrics(tr);
  EXPECT_TRUE(m.phi0_violation);
  EXPECT_EQ(m.violation_steps, 1);
  EXPECT_FALSE(m.success);
}

// Hand-computed: 3 controlled steps, one infeasible; errors 1, 0, 2 in l1.
TEST(Metrics, ThreeStepsOneInfeasible) {
  Trajectory tr;
  tr.steps = {step(0, -1, -1), step(1, -1, -1, false), step(2, -1, -1), step(3, -1, -1)};
  tr.steps[1].x[0] += 1.0;
  tr.steps[3].x[1] -= 2.0;
  tr.steps[0].solve_ms = 2.0;
  tr.steps[1].solve_ms = 4.0;
  tr.steps[2].solve_ms = 6.0;
  const auto m = compute_metrics(tr);
  EXPECT_TRUE(m.infeasible);
  EXPECT_EQ(m.infeasible_steps, 1);
  EXPECT_FALSE(m.success);
  EXPECT_DOUBLE_EQ(m.mean_l1_error, 1.0);
  EXPECT_NEAR(m.std_l1_error, std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_DOUBLE_EQ(m.mean_solve_ms, 4.0);
  EXPECT_DOUBLE_EQ(m.max_solve_ms, 6.0);

  Trajectory ok;
  for (int k = 0; k < 4; ++k) ok.steps.push_back(step(k, -1, -1));
  const auto b = aggregate({m, compute_metrics(ok), compute_metrics(ok), compute_metrics(ok)});
  EXPECT_EQ(b.trials, 4);
  EXPECT_DOUBLE_EQ(b.infeasible_rate, 0.25);
  EXPECT_DOUBLE_EQ(b.success_rate, 0.75);
  EXPECT_DOUBLE_EQ(b.phi0_violation_rate, 0.0);
}

TEST(Metrics, EmptyTrajectoryThrows) { EXPECT_THROW(compute_metrics(Trajectory{}), InputError); }

TEST(Invariants, DecreaseAndExitDetection) {
  Trajectory tr;
  tr.gamma = 0.1;
  tr.dt = 0.5;  // required drop 0.05
  tr.steps = {step(0, -0.1, 0.30), step(1, -0.1, 0.20), step(2, -0.1, 0.19), step(3, -0.1, -0.1), step(4, 0.2, 0.0)};
  const auto r = check_invariants(tr);
  EXPECT_EQ(r.decrease_checked, 3);  // steps 0, 1, 2 have phi > 0
  EXPECT_EQ(r.decrease_violations, 1);
  EXPECT_EQ(r.inside_checked, 1);  // only 3 -> 4 starts inside
  EXPECT_EQ(r.exits, 1);
  EXPECT_EQ(r.first_violation_step, 1);
  EXPECT_FALSE(r.ok());
}

TEST(Invariants, InfeasibleStepsAreNotHeldToTheDecrease) {
  Trajectory tr;
  tr.gamma = 0.1;
  tr.dt = 0.5;
  tr.steps = {step(0, -0.1, 0.3, false), step(1, -0.1, 0.4), step(2, -0.1, 0.3)};
  const auto r = check_invariants(tr);
  EXPECT_EQ(r.decrease_checked, 1);
  EXPECT_TRUE(r.ok());
}

// ---------------------------------------------------------------------------
// Task generators

TEST(Tasks, CollisionStartsSafeAndHeadsAtTheObstacle) {
  Rng rng(20);
  for (int t = 0; t < 50; ++t) {
    const auto sc = make_collision_task(rng);
    ASSERT_TRUE(sc.scene);
    EXPECT_LT(phi0(*sc.scene, sc.x0), 0.0);
    const Eigen::Vector2d p(sc.x0[0], sc.x0[1]);
    const Eigen::Vector2d h(std::cos(sc.x0[3]), std::sin(sc.x0[3]));
    EXPECT_GT(h.dot(-p.normalized()), std::cos(0.05) - 1e-12);
    // The reference passes within d_min of the obstacle.
    double closest = kInf;
    for (const auto& r : sc.reference) closest = std::min(closest, Eigen::Vector2d(r[0], r[1]).norm());
    EXPECT_LT(closest, sc.scene->d_min);
    EXPECT_EQ(sc.horizon(), 200);
  }
}

TEST(Tasks, FollowingStartsInsideTheBandMovingWithTheTarget) {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    const auto sc = make_following_task(rng);
    ASSERT_TRUE(sc.scene);
    const auto g = geometry(sc.x0, sc.scene->obstacles[0], sc.scene->velocity);
    EXPECT_GE(g.d, 1.6);
    EXPECT_LE(g.d, 2.4);
    EXPECT_NEAR(g.d_dot, 0.0, 1e-12);
    EXPECT_LT(phi0(*sc.scene, sc.x0), 0.0);
    // The reference falls behind the target.
    EXPECT_LT(sc.reference.back()[0] - sc.reference.front()[0], sc.scene->velocity.x() * sc.horizon() * sc.dt);
  }
}

// ---------------------------------------------------------------------------
// Output formats

TEST(Formats, TrajectoryCsvRoundTrip) {
  const auto net = random_net({6}, 22);
  Rng rng(23);
  auto sc = make_collision_task(rng);
  sc.reference.resize(6);
  MindController mind(Plant{&net});
  const auto tr = rollout(sc, mind, net);
  std::stringstream ss;
  write_trajectory_csv(tr, ss);
  const std::string text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "k,px,py,v,theta,a,omega,ref_px,ref_py,ref_v,ref_theta,phi0,phi,feasible,status,obj,solve_ms");
  const auto rows = read_trajectory_csv(ss);
  ASSERT_EQ(rows.size(), tr.steps.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_EQ(rows[k].px, tr.steps[k].x[0]);
    EXPECT_EQ(rows[k].phi0, tr.steps[k].phi0);
    EXPECT_EQ(rows[k].feasible, tr.steps[k].feasible);
  }
  std::ostringstream svg;
  svg_trajectory(rows, svg);
  EXPECT_NE(svg.str().find("<polyline"), std::string::npos);
}

TEST(Formats, BadTrajectoryCsv) {
  std::stringstream a("x,y\n");
  EXPECT_THROW(read_trajectory_csv(a), ParseError);
  std::stringstream b("k,px,py,v,theta,a,omega,ref_px,ref_py,ref_v,ref_theta,phi0,phi,feasible,status,obj,solve_ms\n1,2,3\n");
  EXPECT_THROW(read_trajectory_csv(b), ParseError);
}

TEST(Formats, AllFeasibleHeatMapIsAllWhite) {
  HeatMap h{-1, 1, -1, 1, 4, 4, std::vector<int>(16, 3), std::vector<int>(16, 0)};
  std::ostringstream out;
  svg_heat_map(h, out);
  const std::string s = out.str();
  const std::regex cell("<rect x=\"[^\"]*\" y=\"[^\"]*\" width=\"[^\"]*\" height=\"[^\"]*\" fill=\"(#[0-9a-f]{6})\"");
  int cells = 0;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), cell); it != std::sregex_iterator(); ++it) {
    EXPECT_EQ((*it)[1].str(), "#ffffff");
    ++cells;
  }
  EXPECT_EQ(cells, 16);
  EXPECT_NE(s.find("class=\"legend\""), std::string::npos);
}

TEST(Formats, HeatColourScale) {
  EXPECT_EQ(svg::heat_color(0.0), "#ffffff");
  EXPECT_EQ(svg::heat_color(1.0), "#6e0000");
  EXPECT_EQ(svg::heat_color(2.0), "#6e0000");
}

TEST(Formats, PhaseCsvRoundTrip) {
  const auto net = random_net({6}, 24);
  Rng rng(25);
  auto sc = make_following_task(rng);
  sc.reference.resize(8);
  MindController mind(Plant{&net});
  const auto tr = rollout(sc, mind, net);
  std::stringstream ss;
  write_phase_csv(tr, *sc.scene, ss);
  const auto rows = read_phase_csv(ss);
  ASSERT_EQ(rows.size(), tr.steps.size());
  for (std::size_t k = 0; k < rows.size(); ++k) EXPECT_EQ(rows[k].phi, tr.steps[k].phi);
  std::ostringstream svg;
  svg_phase(rows, svg);
  EXPECT_NE(svg.str().find("</svg>"), std::string::npos);
}

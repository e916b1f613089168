#pragma once

// Closed-loop simulation of a planar unicycle: true dynamics, training data,
// references, controllers, rollouts and metrics.

#include "mindsis/mind.hpp"
#include "mindsis/nn_model.hpp"
#include "mindsis/safety_index.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace mindsis {

// State [px, py, v, theta], control [a, omega].
inline Vec analytic_dynamics(const Vec& x, const Vec& u) {
  if (x.size() != 4 || u.size() != 2) throw InputError("analytic_dynamics: expects 4 states and 2 controls");
  Vec f(4);
  f << x[2] * std::cos(x[3]), x[2] * std::sin(x[3]), u[0], u[1];
  return f;
}

inline Box default_control_box() { return Box((Vec(2) << -4.0, -2.0).finished(), (Vec(2) << 4.0, 2.0).finished()); }

// Training states cover the task workspace with slack on speed and heading.
inline Box default_training_box() {
  return Box((Vec(4) << -10.0, -10.0, -0.5, -4.2).finished(), (Vec(4) << 10.0, 10.0, 2.5, 4.2).finished());
}

inline constexpr double kDefaultDt = 0.05;
inline constexpr double kVMin = 0.0;
inline constexpr double kVMax = 2.0;

inline Dataset gen_dataset(int n, const Box& X, const Box& U, Rng& rng) {
  if (n < 1) throw InputError("gen_dataset: n must be at least 1");
  if (X.dim() != 4 || U.dim() != 2) throw InputError("gen_dataset: boxes must be 4-D (state) and 2-D (control)");
  Dataset d(4, 2);
  for (int i = 0; i < n; ++i) {
    const Vec x = X.sample(rng);
    const Vec u = U.sample(rng);
    d.add(x, u, analytic_dynamics(x, u));
  }
  return d;
}

using DynamicsFn = std::function<Vec(const Vec&, const Vec&)>;

inline DynamicsFn nndm_dynamics(const MlpNetwork& net) {
  return [&net](const Vec& x, const Vec& u) { return forward_trace(net, x, u).output(); };
}

// One Euler step through the network, using the same arithmetic as the
// encoder's decoding so NNDM execution reproduces decoded states exactly.
inline Vec nndm_step(const MlpNetwork& net, const Vec& x, const Vec& u, double dt) {
  return x + forward_trace(net, x, u).output() * dt;
}

struct ReferenceOptions {
  double reversion = 1.0;  // 1/s
  double sigma_a = 2.0;
  double sigma_omega = 1.5;
  // Acceleration is clamped so the Euler-predicted speed stays in this band.
  bool speed_band = true;
  double v_low = 0.2;
  double v_high = 1.8;
  // Steering back toward zero heading once |theta| exceeds theta_limit.
  double theta_limit = 2.5;
  double heading_gain = 2.0;
};

struct Reference {
  std::vector<Vec> states;    // n + 1 states, states[0] = x0
  std::vector<Vec> controls;  // n controls
};

// Rolls f under clipped Ornstein-Uhlenbeck controls. Each consecutive pair of
// states is one Euler step of f apart.
inline Reference gen_reference(int n, const Vec& x0, double dt, const Box& U, Rng& rng, const DynamicsFn& f,
                               const ReferenceOptions& opt = {}) {
  if (n < 1) throw InputError("gen_reference: n must be at least 1");
  if (!(dt > 0.0)) throw InputError("gen_reference: dt must be positive");
  if (x0.size() != 4 || U.dim() != 2) throw InputError("gen_reference: expects a unicycle state and control box");
  Reference ref;
  ref.states.push_back(x0);
  double eta_a = 0.0, eta_w = 0.0;
  const double sq = std::sqrt(dt);
  for (int k = 0; k < n; ++k) {
    const Vec& x = ref.states.back();
    eta_a += -opt.reversion * eta_a * dt + opt.sigma_a * sq * rng.normal();
    eta_w += -opt.reversion * eta_w * dt + opt.sigma_omega * sq * rng.normal();
    double a = eta_a, w = eta_w;
    if (x[3] > opt.theta_limit) w -= opt.heading_gain * (x[3] - opt.theta_limit);
    if (x[3] < -opt.theta_limit) w += opt.heading_gain * (-opt.theta_limit - x[3]);
    if (opt.speed_band) a = std::clamp(a, (opt.v_low - x[2]) / dt, (opt.v_high - x[2]) / dt);
    Vec u(2);
    u << std::clamp(a, U.lower[0], U.upper[0]), std::clamp(w, U.lower[1], U.upper[1]);
    ref.controls.push_back(u);
    ref.states.push_back(x + f(x, u) * dt);
  }
  return ref;
}

// ---------------------------------------------------------------------------
// Controllers

// What a controller knows about the system it steers.
struct Plant {
  const MlpNetwork* net = nullptr;  // must outlive the plant
  Box U = default_control_box();
  double dt = kDefaultDt;
};

struct ControlOutcome {
  bool feasible = false;
  Vec u;
  Vec x_next;  // model prediction
  std::string status;
  double objective = kInf;
  double solve_ms = 0.0;
  long nodes = 0;
  int corrections = 0;
  bool discrete_ok = true;  // the discrete index condition holds at x_next
};

class Controller {
 public:
  virtual ~Controller() = default;
  // scene: obstacles/target at the current time with the index to enforce, or
  // null for plain tracking.
  virtual ControlOutcome control(const Vec& x, const Vec& x_ref, const SafetyIndexSpec* scene) = 0;
};

// Amount by which phi at the predicted state exceeds its allowed value.
// Positive phi must drop by gamma*dt; otherwise phi must stay non-positive.
inline double discrete_excess(const SafetyIndexSpec& scene, const Vec& x, const Vec& x_next, double dt) {
  const double now = phi(scene, x);
  const double later = phi(scene.advanced(dt), x_next);
  const double allowed = now > 0.0 ? now - scene.params.gamma * dt : 0.0;
  return later - allowed;
}

struct MindOptions {
  StepOptions step;
  bool partition = true;  // spatial branching on U around the MILP
  PartitionOptions split;
  // Re-solves with a tightened safety row while the discrete condition fails.
  int max_corrections = 8;
  double correction_slack = 1e-9;
};

class MindController final : public Controller {
 public:
  explicit MindController(Plant plant, MindOptions opt = {}) : plant_(std::move(plant)), opt_(std::move(opt)) {
    if (plant_.net == nullptr) throw InputError("MindController: plant has no network");
  }

  ControlOutcome control(const Vec& x, const Vec& x_ref, const SafetyIndexSpec* scene) override {
    const MlpNetwork& net = *plant_.net;
    ControlOutcome out;
    double shift = 0.0;
    for (int it = 0;; ++it) {
      auto build = [&](const Box& box) {
        EncodedStep step = encode_tracking(net, x, x_ref, plant_.dt, box);
        if (scene) add_safety_constraints(step, *scene, shift);
        return step;
      };
      const StepResult r =
          opt_.partition ? solve_partitioned(build, plant_.U, opt_.step, opt_.split) : solve_step(build(plant_.U), opt_.step);
      out.solve_ms += r.solve_ms;
      out.nodes += r.nodes;
      if (!r.has_solution()) {
        if (it == 0) out.status = milp::to_string(r.status);
        break;
      }
      out.feasible = true;
      out.u = r.u;
      out.x_next = r.x_next;
      out.objective = r.objective;
      out.status = milp::to_string(r.status);
      out.corrections = it;
      if (!scene) break;
      const double excess = discrete_excess(*scene, x, r.x_next, plant_.dt) + opt_.correction_slack;
      out.discrete_ok = excess <= opt_.correction_slack;
      if (out.discrete_ok || it >= opt_.max_corrections) break;
      shift -= excess / plant_.dt;
    }
    return out;
  }

 private:
  Plant plant_;
  MindOptions opt_;
};

class ShootingController final : public Controller {
 public:
  ShootingController(Plant plant, int samples, Rng rng) : plant_(std::move(plant)), samples_(samples), rng_(rng) {
    if (plant_.net == nullptr) throw InputError("ShootingController: plant has no network");
    if (samples_ < 1) throw InputError("ShootingController: need at least one sample");
  }

  ControlOutcome control(const Vec& x, const Vec& x_ref, const SafetyIndexSpec* scene) override {
    Mat cand(plant_.U.dim(), samples_);
    for (int i = 0; i < samples_; ++i) cand.col(i) = plant_.U.sample(rng_);
    return choose(x, x_ref, scene, cand);
  }

  // Best candidate control (one per column) by one-step l1 error, after
  // dropping those that violate the linearized safety rows.
  ControlOutcome choose(const Vec& x, const Vec& x_ref, const SafetyIndexSpec* scene, const Mat& candidates) const {
    const auto t0 = std::chrono::steady_clock::now();
    const MlpNetwork& net = *plant_.net;
    const Eigen::Index n = candidates.cols();
    Mat in(net.input_dim(), n);
    in.topRows(net.state_dim()) = x.replicate(1, n);
    in.bottomRows(net.control_dim()) = candidates;
    const Mat f = forward_batch(net, in);
    std::vector<SafetyRow> rows;
    if (scene) rows = safety_rows(*scene, x, plant_.dt);
    ControlOutcome out;
    Eigen::Index best = -1;
    for (Eigen::Index c = 0; c < n; ++c) {
      if (scene && !satisfies_rows(rows, f.col(c))) continue;
      const double err = (x + f.col(c) * plant_.dt - x_ref).lpNorm<1>();
      if (err < out.objective) {
        out.objective = err;
        best = c;
      }
    }
    if (best >= 0) {
      out.feasible = true;
      out.u = candidates.col(best);
      out.x_next = nndm_step(net, x, out.u, plant_.dt);
      out.objective = (out.x_next - x_ref).lpNorm<1>();
      out.status = "optimal";
      if (scene) out.discrete_ok = discrete_excess(*scene, x, out.x_next, plant_.dt) <= 0.0;
    } else {
      out.status = "infeasible";
    }
    out.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
  }

 private:
  Plant plant_;
  int samples_;
  Rng rng_;
};

// ---------------------------------------------------------------------------
// Rollouts

enum class ExecModel { Nndm, Analytic };

inline const char* to_string(ExecModel e) { return e == ExecModel::Nndm ? "nndm" : "analytic"; }

inline ExecModel parse_exec_model(const std::string& s) {
  if (s == "nndm") return ExecModel::Nndm;
  if (s == "analytic") return ExecModel::Analytic;
  throw InputError("unknown execution model '" + s + "' (expected nndm or analytic)");
}

struct Scenario {
  std::string task = "tracking";  // tracking | collision | following
  Vec x0;
  std::vector<Vec> reference;  // desired state per step; horizon = size - 1
  // Obstacles or target at t = 0, with the index used for control.
  std::optional<SafetyIndexSpec> scene;
  bool enforce_index = true;  // false: the scene is only monitored
  ExecModel exec = ExecModel::Nndm;
  double dt = kDefaultDt;

  int horizon() const { return static_cast<int>(reference.size()) - 1; }

  void validate() const {
    if (!(dt > 0.0)) throw ValidationError("scenario: dt must be positive");
    if (horizon() < 1) throw ValidationError("scenario: horizon must be at least 1");
    if (x0.size() != 4) throw ValidationError("scenario: x0 must have 4 entries");
    for (const auto& r : reference)
      if (r.size() != 4) throw ValidationError("scenario: reference states must have 4 entries");
    if (scene) scene->validate();
  }
};

struct TrajectoryStep {
  int k = 0;
  Vec x, u, ref;
  double phi0 = std::numeric_limits<double>::quiet_NaN();
  double phi = std::numeric_limits<double>::quiet_NaN();
  double distance = std::numeric_limits<double>::quiet_NaN();  // to the nearest obstacle
  bool feasible = true;
  std::string status;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double solve_ms = 0.0;
  int corrections = 0;
  Vec predicted;  // controller's x_{k+1}, empty when infeasible
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;  // horizon + 1 entries; the last has no control
  double gamma = 0.0;
  double dt = kDefaultDt;
  int horizon() const { return static_cast<int>(steps.size()) - 1; }
};

namespace detail {

inline double nearest_distance(const SafetyIndexSpec& s, const Vec& x) {
  double d = kInf;
  for (const auto& o : s.obstacles) d = std::min(d, (Eigen::Vector2d(x[0], x[1]) - o).norm());
  return d;
}

inline void annotate(TrajectoryStep& st, const std::optional<SafetyIndexSpec>& scene, double t) {
  if (!scene) return;
  const auto s = scene->advanced(t);
  st.phi0 = phi0(s, st.x);
  st.phi = phi(s, st.x);
  st.distance = nearest_distance(s, st.x);
}

}  // namespace detail

// Closed-loop run. Infeasible steps reuse the previous control (zero at the
// first step). Execution follows the scenario's model with Euler steps.
inline Trajectory rollout(const Scenario& sc, Controller& ctl, const MlpNetwork& net) {
  sc.validate();
  Trajectory tr;
  tr.dt = sc.dt;
  tr.gamma = sc.scene ? sc.scene->params.gamma : 0.0;
  Vec x = sc.x0;
  Vec prev_u = Vec::Zero(net.control_dim());
  for (int k = 0; k <= sc.horizon(); ++k) {
    TrajectoryStep st;
    st.k = k;
    st.x = x;
    st.ref = sc.reference[static_cast<std::size_t>(k)];
    detail::annotate(st, sc.scene, k * sc.dt);
    if (k == sc.horizon()) {
      st.u = Vec::Constant(net.control_dim(), std::numeric_limits<double>::quiet_NaN());
      st.status = "end";
      tr.steps.push_back(std::move(st));
      break;
    }
    std::optional<SafetyIndexSpec> now;
    if (sc.scene && sc.enforce_index) now = sc.scene->advanced(k * sc.dt);
    ControlOutcome out;
    try {
      out = ctl.control(x, sc.reference[static_cast<std::size_t>(k + 1)], now ? &*now : nullptr);
    } catch (const NumericalFailure& e) {
      throw NumericalFailure("rollout step " + std::to_string(k) + ": " + e.what());
    } catch (const EncodingError& e) {
      throw EncodingError("rollout step " + std::to_string(k) + ": " + e.what());
    }
    st.feasible = out.feasible;
    st.status = out.status;
    st.objective = out.objective;
    st.solve_ms = out.solve_ms;
    st.corrections = out.corrections;
    st.u = out.feasible ? out.u : prev_u;
    if (out.feasible) st.predicted = out.x_next;
    prev_u = st.u;
    if (sc.exec == ExecModel::Nndm)
      x = out.feasible ? out.x_next : nndm_step(net, x, st.u, sc.dt);
    else
      x = x + analytic_dynamics(x, st.u) * sc.dt;
    tr.steps.push_back(std::move(st));
  }
  return tr;
}

struct Metrics {
  int steps = 0;
  double mean_l1_error = 0.0, std_l1_error = 0.0;
  double mean_l2_error = 0.0, std_l2_error = 0.0;
  bool success = true;
  bool phi0_violation = false;
  bool infeasible = false;
  int violation_steps = 0;
  int infeasible_steps = 0;
  double min_distance = kInf;
  double mean_solve_ms = 0.0, max_solve_ms = 0.0;
};

inline Metrics compute_metrics(const Trajectory& tr) {
  if (tr.steps.empty()) throw InputError("compute_metrics: empty trajectory");
  Metrics m;
  m.steps = tr.horizon();
  std::vector<double> e1, e2;
  for (const auto& st : tr.steps) {
    if (st.k > 0) {
      const Vec e = st.x - st.ref;
      e1.push_back(e.lpNorm<1>());
      e2.push_back(e.norm());
    }
    if (st.phi0 > 0.0) ++m.violation_steps;
    if (!std::isnan(st.distance)) m.min_distance = std::min(m.min_distance, st.distance);
    if (st.k < tr.horizon()) {
      if (!st.feasible) ++m.infeasible_steps;
      m.mean_solve_ms += st.solve_ms;
      m.max_solve_ms = std::max(m.max_solve_ms, st.solve_ms);
    }
  }
  auto moments = [](const std::vector<double>& v, double& mean, double& sd) {
    if (v.empty()) return;
    mean = 0.0;
    for (double a : v) mean += a;
    mean /= static_cast<double>(v.size());
    double s = 0.0;
    for (double a : v) s += (a - mean) * (a - mean);
    sd = std::sqrt(s / static_cast<double>(v.size()));
  };
  moments(e1, m.mean_l1_error, m.std_l1_error);
  moments(e2, m.mean_l2_error, m.std_l2_error);
  if (m.steps > 0) m.mean_solve_ms /= m.steps;
  m.phi0_violation = m.violation_steps > 0;
  m.infeasible = m.infeasible_steps > 0;
  m.success = !m.phi0_violation && !m.infeasible;
  return m;
}

struct BatchMetrics {
  int trials = 0;
  double success_rate = 0.0;
  double phi0_violation_rate = 0.0;
  double infeasible_rate = 0.0;
  double mean_l1_error = 0.0;
  double mean_l2_error = 0.0;
  double mean_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  double min_distance = kInf;
};

inline BatchMetrics aggregate(const std::vector<Metrics>& runs) {
  BatchMetrics b;
  b.trials = static_cast<int>(runs.size());
  if (runs.empty()) return b;
  for (const auto& m : runs) {
    b.success_rate += m.success;
    b.phi0_violation_rate += m.phi0_violation;
    b.infeasible_rate += m.infeasible;
    b.mean_l1_error += m.mean_l1_error;
    b.mean_l2_error += m.mean_l2_error;
    b.mean_solve_ms += m.mean_solve_ms;
    b.max_solve_ms = std::max(b.max_solve_ms, m.max_solve_ms);
    b.min_distance = std::min(b.min_distance, m.min_distance);
  }
  const double n = static_cast<double>(runs.size());
  b.success_rate /= n;
  b.phi0_violation_rate /= n;
  b.infeasible_rate /= n;
  b.mean_l1_error /= n;
  b.mean_l2_error /= n;
  b.mean_solve_ms /= n;
  return b;
}

// Empirical checks of the index guarantees along a trajectory: positive phi
// drops by gamma*dt per feasible step, and the set {phi <= tol} n {phi0 <= tol}
// is never left once entered.
struct InvariantReport {
  int decrease_checked = 0;
  int decrease_violations = 0;
  int inside_checked = 0;  // transitions starting inside the safe set
  int exits = 0;
  int first_violation_step = -1;
  bool ok() const { return decrease_violations == 0 && exits == 0; }
};

inline InvariantReport check_invariants(const Trajectory& tr, double decrease_tol = 1e-6, double set_tol = 1e-4) {
  InvariantReport r;
  bool inside = false;
  for (std::size_t i = 0; i + 1 < tr.steps.size(); ++i) {
    const auto& a = tr.steps[i];
    const auto& b = tr.steps[i + 1];
    if (std::isnan(a.phi)) return r;
    if (a.feasible && a.phi > 0.0) {
      ++r.decrease_checked;
      if (b.phi - a.phi > -tr.gamma * tr.dt + decrease_tol) {
        ++r.decrease_violations;
        if (r.first_violation_step < 0) r.first_violation_step = a.k;
      }
    }
    inside = inside || (a.phi <= set_tol && a.phi0 <= set_tol);
    r.inside_checked += inside;
    if (inside && !(b.phi <= set_tol && b.phi0 <= set_tol)) {
      ++r.exits;
      if (r.first_violation_step < 0) r.first_violation_step = b.k;
      inside = false;
    }
  }
  return r;
}

inline void write_trajectory_csv(const Trajectory& tr, std::ostream& out) {
  out << "k,px,py,v,theta,a,omega,ref_px,ref_py,ref_v,ref_theta,phi0,phi,feasible,status,obj,solve_ms\n";
  using detail::fmt17;
  for (const auto& st : tr.steps) {
    out << st.k;
    for (int i = 0; i < 4; ++i) out << ',' << fmt17(st.x[i]);
    for (int i = 0; i < 2; ++i) out << ',' << fmt17(st.u[i]);
    for (int i = 0; i < 4; ++i) out << ',' << fmt17(st.ref[i]);
    out << ',' << fmt17(st.phi0) << ',' << fmt17(st.phi) << ',' << (st.feasible ? 1 : 0) << ',' << st.status << ','
        << fmt17(st.objective) << ',' << fmt17(st.solve_ms) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Task generators

inline Scenario make_tracking_task(const MlpNetwork& net, int waypoints, double dt, const Box& U, Rng& rng,
                                   const ReferenceOptions& ropt = {}) {
  Scenario sc;
  sc.task = "tracking";
  sc.dt = dt;
  Vec x0(4);
  x0 << rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.5, 1.5), rng.uniform(-std::numbers::pi, std::numbers::pi);
  sc.x0 = x0;
  sc.reference = gen_reference(waypoints, x0, dt, U, rng, nndm_dynamics(net), ropt).states;
  return sc;
}

struct CollisionTaskOptions {
  double d_min = 1.0;
  double start_distance_lo = 7.0, start_distance_hi = 9.0;
  double speed_lo = 1.5, speed_hi = 2.0;
  double heading_jitter = 0.05;  // rad, around the bearing to the obstacle
  int horizon = 200;
  double dt = kDefaultDt;
};

// Head-on approach to an obstacle at the origin. The reference keeps the
// start speed along the start heading, runs through the obstacle and stops
// at the mirrored start distance.
inline Scenario make_collision_task(Rng& rng, const CollisionTaskOptions& o = {}) {
  Scenario sc;
  sc.task = "collision";
  sc.dt = o.dt;
  const double bearing = rng.uniform(-std::numbers::pi, std::numbers::pi);
  const double d0 = rng.uniform(o.start_distance_lo, o.start_distance_hi);
  const double v0 = rng.uniform(o.speed_lo, o.speed_hi);
  const double th = std::remainder(bearing + std::numbers::pi + rng.uniform(-o.heading_jitter, o.heading_jitter),
                                   2.0 * std::numbers::pi);
  Vec x0(4);
  x0 << d0 * std::cos(bearing), d0 * std::sin(bearing), v0, th;
  sc.x0 = x0;
  const double travel = 2.0 * d0;
  for (int k = 0; k <= o.horizon; ++k) {
    const double s = std::min(travel, v0 * k * o.dt);
    Vec r(4);
    r << x0[0] + s * std::cos(th), x0[1] + s * std::sin(th), s < travel ? v0 : 0.0, th;
    sc.reference.push_back(r);
  }
  SafetyIndexSpec scene;
  scene.kind = IndexKind::CollisionAvoidance;
  scene.d_min = o.d_min;
  scene.obstacles = {Eigen::Vector2d::Zero()};
  sc.scene = scene;
  return sc;
}

struct FollowingTaskOptions {
  double d_min = 1.0, d_max = 3.0;
  double target_speed = 1.0;  // along +x
  double start_distance_lo = 1.6, start_distance_hi = 2.4;
  double bearing_spread = 0.6;  // rad, around directly behind the target
  // The agent starts with the target's velocity scaled by 1 +- speed_jitter
  // and rotated by up to heading_jitter, so d_dot(0) is near zero.
  double speed_jitter = 0.0;
  double heading_jitter = 0.0;
  double lag_speed_lo = 0.3, lag_speed_hi = 0.6;  // reference speed, slower than the target
  int horizon = 200;
  double dt = kDefaultDt;
};

// The target moves along +x; the agent starts behind it inside the band and
// its reference lags, so tracking alone drifts out past d_max.
inline Scenario make_following_task(Rng& rng, const FollowingTaskOptions& o = {}) {
  Scenario sc;
  sc.task = "following";
  sc.dt = o.dt;
  const Eigen::Vector2d target(-4.0, rng.uniform(-1.0, 1.0));
  const double bearing = std::numbers::pi + rng.uniform(-o.bearing_spread, o.bearing_spread);
  const double d0 = rng.uniform(o.start_distance_lo, o.start_distance_hi);
  Vec x0(4);
  x0 << target.x() + d0 * std::cos(bearing), target.y() + d0 * std::sin(bearing), o.target_speed * (1.0 + rng.uniform(-o.speed_jitter, o.speed_jitter)),
      rng.uniform(-o.heading_jitter, o.heading_jitter);
  sc.x0 = x0;
  const double lag = rng.uniform(o.lag_speed_lo, o.lag_speed_hi);
  for (int k = 0; k <= o.horizon; ++k) {
    Vec r(4);
    r << x0[0] + lag * k * o.dt, x0[1], lag, 0.0;
    sc.reference.push_back(r);
  }
  SafetyIndexSpec scene;
  scene.kind = IndexKind::SafeFollowing;
  scene.d_min = o.d_min;
  scene.d_max = o.d_max;
  scene.obstacles = {target};
  scene.velocity = Eigen::Vector2d(o.target_speed, 0.0);
  sc.scene = scene;
  return sc;
}

}  // namespace mindsis

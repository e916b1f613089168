#pragma once

// Safety indices for a planar agent with state [px, py, v, theta]:
// collision avoidance around point obstacles and following a moving target
// inside a distance band.

#include "mindsis/common.hpp"

#include <string>
#include <vector>

namespace mindsis {

enum class IndexKind { CollisionAvoidance, SafeFollowing };

inline const char* to_string(IndexKind k) {
  return k == IndexKind::CollisionAvoidance ? "collision" : "following";
}

struct IndexParams {
  double alpha1 = 1.0;
  double alpha2 = 0.0;
  double beta = 0.0;
  double gamma = 0.01;
};

struct SafetyIndexSpec {
  IndexKind kind = IndexKind::CollisionAvoidance;
  double d_min = 1.0;
  double d_max = 0.0;  // following only
  // Obstacle centres (collision) or the target position (following).
  std::vector<Eigen::Vector2d> obstacles;
  // Common velocity of the obstacles / target; zero for static scenes.
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();
  IndexParams params;

  // min_beta is the safety margin lambda; pass 0 for the raw phi0 index.
  void validate(double min_beta = 0.0) const {
    if (!(d_min > 0.0)) throw ValidationError("index: d_min must be positive");
    if (kind == IndexKind::SafeFollowing && !(d_max > d_min))
      throw ValidationError("index: d_max must exceed d_min for following");
    if (obstacles.empty()) throw ValidationError("index: at least one obstacle or target is required");
    if (!(params.alpha1 > 0.0)) throw ValidationError("index: alpha1 must be positive");
    if (kind == IndexKind::SafeFollowing && params.alpha1 != std::round(params.alpha1))
      throw ValidationError("index: alpha1 must be an integer for following");
    if (!(params.alpha2 >= 0.0)) throw ValidationError("index: alpha2 must be non-negative");
    if (!(params.gamma >= 0.0)) throw ValidationError("index: gamma must be non-negative");
    if (params.beta < min_beta)
      throw ValidationError("index: beta " + std::to_string(params.beta) + " is below the safety margin " +
                            std::to_string(min_beta));
  }

  // The same scene dt seconds later.
  SafetyIndexSpec advanced(double dt) const {
    SafetyIndexSpec s = *this;
    for (auto& o : s.obstacles) o += velocity * dt;
    return s;
  }

  // phi0 expressed in the index family: alpha1 = 1, alpha2 = 0, beta = 0.
  SafetyIndexSpec as_phi0() const {
    SafetyIndexSpec s = *this;
    s.params.alpha1 = 1.0;
    s.params.alpha2 = 0.0;
    s.params.beta = 0.0;
    return s;
  }
};

// Relative distance, its rate, and their state gradients for one obstacle.
struct GeomQuantities {
  double d = 0.0;
  double d_dot = 0.0;
  Eigen::Vector4d grad_d = Eigen::Vector4d::Zero();
  Eigen::Vector4d grad_d_dot = Eigen::Vector4d::Zero();
  // Partial time derivatives from the obstacle's own motion.
  double dt_d = 0.0;
  double dt_d_dot = 0.0;
};

inline GeomQuantities geometry(const Vec& x, const Eigen::Vector2d& o, const Eigen::Vector2d& w) {
  if (x.size() != 4) throw InputError("index: state must be [px, py, v, theta]");
  const Eigen::Vector2d r(x[0] - o.x(), x[1] - o.y());
  const double d = r.norm();
  if (!(d > 1e-12)) throw DegenerateGeometry("index: agent coincides with obstacle centre, distance undefined");
  const double v = x[2], th = x[3];
  const Eigen::Vector2d heading(std::cos(th), std::sin(th));
  const Eigen::Vector2d rel_vel = v * heading - w;
  GeomQuantities g;
  g.d = d;
  g.d_dot = r.dot(rel_vel) / d;
  g.grad_d << r.x() / d, r.y() / d, 0.0, 0.0;
  const Eigen::Vector2d dp = rel_vel / d - g.d_dot * r / (d * d);
  g.grad_d_dot << dp.x(), dp.y(), r.dot(heading) / d, v * r.dot(Eigen::Vector2d(-heading.y(), heading.x())) / d;
  g.dt_d = -g.grad_d.head<2>().dot(w);
  g.dt_d_dot = -dp.dot(w);
  return g;
}

// Value and partials of one obstacle's index as a function of (d, d_dot).
struct IndexTerm {
  double phi = 0.0;
  double dphi_dd = 0.0;
  double dphi_dddot = 0.0;
};

inline IndexTerm index_term(const SafetyIndexSpec& s, double d, double d_dot) {
  const auto& p = s.params;
  IndexTerm t;
  if (s.kind == IndexKind::CollisionAvoidance) {
    t.phi = std::pow(s.d_min, p.alpha1) - std::pow(d, p.alpha1) - p.alpha2 * d_dot + p.beta;
    t.dphi_dd = -p.alpha1 * std::pow(d, p.alpha1 - 1.0);
    t.dphi_dddot = -p.alpha2;
  } else {
    const double a = d - s.d_min, b = d - s.d_max, k = p.alpha1;
    t.phi = std::pow(a, k) * std::pow(b, k) + p.alpha2 * (d * d_dot + d_dot * (s.d_min + s.d_max)) + p.beta;
    t.dphi_dd = k * std::pow(a, k - 1.0) * std::pow(b, k) + k * std::pow(a, k) * std::pow(b, k - 1.0) + p.alpha2 * d_dot;
    t.dphi_dddot = p.alpha2 * (d + s.d_min + s.d_max);
  }
  return t;
}

// Per-obstacle index value, state gradient and partial time derivative.
struct IndexEval {
  double phi = 0.0;
  Vec grad;
  double dphi_dt = 0.0;
};

inline std::vector<IndexEval> phi_terms(const SafetyIndexSpec& s, const Vec& x) {
  std::vector<IndexEval> out;
  for (const auto& o : s.obstacles) {
    const auto g = geometry(x, o, s.velocity);
    const auto t = index_term(s, g.d, g.d_dot);
    IndexEval e;
    e.phi = t.phi;
    e.grad = t.dphi_dd * g.grad_d + t.dphi_dddot * g.grad_d_dot;
    e.dphi_dt = t.dphi_dd * g.dt_d + t.dphi_dddot * g.dt_d_dot;
    out.push_back(std::move(e));
  }
  return out;
}

inline double phi0(const SafetyIndexSpec& s, const Vec& x) {
  double worst = -kInf;
  for (const auto& o : s.obstacles) {
    const double d = geometry(x, o, s.velocity).d;
    const double v = s.kind == IndexKind::CollisionAvoidance ? s.d_min - d : (d - s.d_min) * (d - s.d_max);
    worst = std::max(worst, v);
  }
  return worst;
}

inline double phi(const SafetyIndexSpec& s, const Vec& x) {
  double worst = -kInf;
  for (const auto& e : phi_terms(s, x)) worst = std::max(worst, e.phi);
  return worst;
}

// Gradient of the active (largest) obstacle term.
inline Vec grad_phi(const SafetyIndexSpec& s, const Vec& x) {
  const auto terms = phi_terms(s, x);
  std::size_t best = 0;
  for (std::size_t i = 1; i < terms.size(); ++i)
    if (terms[i].phi > terms[best].phi) best = i;
  return terms[best].grad;
}

inline double constraint_rhs(double phi_at_x, double gamma, double dt) {
  if (!(dt > 0.0)) throw InputError("constraint_rhs: dt must be positive");
  return std::max(-phi_at_x / dt, -gamma);
}

inline double safety_margin(double c, double x_dot_max, double dt) {
  if (!(c > 0.0) || !(dt > 0.0)) throw InputError("safety_margin: c and dt must be positive");
  return c * x_dot_max * dt;
}

// One linear row grad . xdot <= rhs per obstacle. A moving obstacle
// contributes its partial time derivative to the right-hand side.
struct SafetyRow {
  Vec grad;
  double rhs = 0.0;
  double phi = 0.0;
};

inline std::vector<SafetyRow> safety_rows(const SafetyIndexSpec& s, const Vec& x, double dt) {
  std::vector<SafetyRow> rows;
  for (auto& e : phi_terms(s, x)) {
    if (!e.grad.allFinite()) throw DegenerateGeometry("index: non-finite gradient");
    rows.push_back({std::move(e.grad), constraint_rhs(e.phi, s.params.gamma, dt) - e.dphi_dt, e.phi});
  }
  return rows;
}

// True when xdot satisfies every linearized row.
inline bool satisfies_rows(const std::vector<SafetyRow>& rows, const Vec& xdot, double tol = 0.0) {
  for (const auto& r : rows)
    if (r.grad.dot(xdot) > r.rhs + tol) return false;
  return true;
}

// Discrete-time condition phi(x + xdot dt) <= max(floor, phi(x) - (gamma + eps) dt),
// with the scene advanced by dt. floor = 0 and eps = 0 give the plain condition.
inline bool satisfies_discrete(const SafetyIndexSpec& s, const Vec& x, const Vec& xdot, double dt, double floor = 0.0,
                               double eps = 0.0) {
  const double now = phi(s, x);
  const Vec next = x + xdot * dt;
  const double later = phi(s.advanced(dt), next);
  return later <= std::max(floor, now - (s.params.gamma + eps) * dt);
}

}  // namespace mindsis

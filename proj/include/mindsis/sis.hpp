#pragma once

// Safety-index synthesis: count states where no admissible control satisfies
// the index constraint, and search index parameters with CMA-ES to drive that
// count to zero. Also delta-net certification of feasibility over a state box.

#include "mindsis/mind.hpp"
#include "mindsis/safety_index.hpp"
#include "mindsis/sim.hpp"

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

namespace mindsis {

// ---------------------------------------------------------------------------
// State sampling

inline std::vector<Vec> sample_states(const Box& region, std::size_t count, Rng& rng) {
  if (count < 1) throw InputError("sample_states: count must be at least 1");
  region.validate();
  std::vector<Vec> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(region.sample(rng));
  return out;
}

// Rejection sampling: draws until `accept` holds, giving up after
// max_tries_per_state * count draws.
inline std::vector<Vec> sample_states(const Box& region, std::size_t count, Rng& rng,
                                      const std::function<bool(const Vec&)>& accept,
                                      std::size_t max_tries_per_state = 1000) {
  if (count < 1) throw InputError("sample_states: count must be at least 1");
  region.validate();
  std::vector<Vec> out;
  out.reserve(count);
  const std::size_t budget = max_tries_per_state * count;
  for (std::size_t tries = 0; out.size() < count; ++tries) {
    if (tries >= budget) throw InputError("sample_states: acceptance region is (nearly) empty");
    Vec x = region.sample(rng);
    if (accept(x)) out.push_back(std::move(x));
  }
  return out;
}

// Default region around the first obstacle/target of a scene: relative
// position in [-half, half]^2, speed in [v_min, v_max], any heading.
inline Box region_around(const SafetyIndexSpec& scene, double half = 5.0, double v_min = kVMin, double v_max = kVMax) {
  if (scene.obstacles.empty()) throw InputError("region_around: scene has no obstacle");
  const Eigen::Vector2d o = scene.obstacles.front();
  Vec lo(4), hi(4);
  lo << o.x() - half, o.y() - half, v_min, -std::numbers::pi;
  hi << o.x() + half, o.y() + half, v_max, std::numbers::pi;
  return Box(lo, hi);
}

// Keeps states at least min_distance from every obstacle.
inline std::function<bool(const Vec&)> outside_obstacles(const SafetyIndexSpec& scene, double min_distance) {
  return [scene, min_distance](const Vec& x) {
    for (const auto& o : scene.obstacles)
      if ((Eigen::Vector2d(x[0], x[1]) - o).norm() < min_distance) return false;
    return true;
  };
}

// ---------------------------------------------------------------------------
// Feasibility checking

// resolution^2 controls laid out on a uniform grid over a 2-D box, one per
// column, including the corners.
inline Mat control_grid(const Box& U, int resolution) {
  if (U.dim() != 2) throw InputError("control_grid: expects a 2-D control box");
  if (resolution < 1) throw InputError("control_grid: resolution must be positive");
  Mat g(2, resolution * resolution);
  int c = 0;
  for (int i = 0; i < resolution; ++i)
    for (int j = 0; j < resolution; ++j) {
      const double a = resolution == 1 ? 0.5 : static_cast<double>(i) / (resolution - 1);
      const double b = resolution == 1 ? 0.5 : static_cast<double>(j) / (resolution - 1);
      g(0, c) = U.lower[0] + a * (U.upper[0] - U.lower[0]);
      g(1, c) = U.lower[1] + b * (U.upper[1] - U.lower[1]);
      ++c;
    }
  return g;
}

enum class CheckerKind { Grid, Exact };
// Linearized: the row grad(phi) . f <= rhs used inside the MIP.
// Discrete: phi(x + f dt) <= max(0, phi(x) - gamma dt) with the scene advanced.
enum class ConstraintMode { Linearized, Discrete };

struct CheckerConfig {
  CheckerKind kind = CheckerKind::Grid;
  int resolution = 41;
  ConstraintMode mode = ConstraintMode::Linearized;

  std::string describe() const {
    if (kind == CheckerKind::Exact) return "exact";
    return "grid" + std::to_string(resolution) + (mode == ConstraintMode::Discrete ? "-discrete" : "");
  }
};

struct HeatMap {
  double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
  int nx = 0, ny = 0;
  std::vector<int> samples;     // row-major, y outer
  std::vector<int> infeasible;

  int cell(double px, double py) const {
    const int i = std::clamp(static_cast<int>((px - x_lo) / (x_hi - x_lo) * nx), 0, nx - 1);
    const int j = std::clamp(static_cast<int>((py - y_lo) / (y_hi - y_lo) * ny), 0, ny - 1);
    return j * nx + i;
  }
  int max_infeasible() const { return infeasible.empty() ? 0 : *std::max_element(infeasible.begin(), infeasible.end()); }
};

struct FeasibilityReport {
  std::vector<Vec> states;
  std::vector<char> feasible;
  long infeasible_count = 0;
  std::string checker;
};

inline HeatMap heat_map(const FeasibilityReport& r, const Box& region, int nx = 20, int ny = 20) {
  if (nx < 1 || ny < 1) throw InputError("heat_map: cell counts must be positive");
  HeatMap h;
  h.x_lo = region.lower[0];
  h.x_hi = region.upper[0];
  h.y_lo = region.lower[1];
  h.y_hi = region.upper[1];
  if (!(h.x_hi > h.x_lo) || !(h.y_hi > h.y_lo)) throw InputError("heat_map: region has zero area");
  h.nx = nx;
  h.ny = ny;
  h.samples.assign(static_cast<std::size_t>(nx * ny), 0);
  h.infeasible.assign(static_cast<std::size_t>(nx * ny), 0);
  for (std::size_t i = 0; i < r.states.size(); ++i) {
    const int c = h.cell(r.states[i][0], r.states[i][1]);
    ++h.samples[static_cast<std::size_t>(c)];
    if (!r.feasible[i]) ++h.infeasible[static_cast<std::size_t>(c)];
  }
  return h;
}

inline void write_heat_map_csv(const HeatMap& h, std::ostream& out) {
  out << "ix,iy,px_lo,px_hi,py_lo,py_hi,samples,infeasible\n";
  const double wx = (h.x_hi - h.x_lo) / h.nx, wy = (h.y_hi - h.y_lo) / h.ny;
  for (int j = 0; j < h.ny; ++j)
    for (int i = 0; i < h.nx; ++i) {
      const auto c = static_cast<std::size_t>(j * h.nx + i);
      out << i << ',' << j << ',' << detail::fmt17(h.x_lo + i * wx) << ',' << detail::fmt17(h.x_lo + (i + 1) * wx) << ','
          << detail::fmt17(h.y_lo + j * wy) << ',' << detail::fmt17(h.y_lo + (j + 1) * wy) << ',' << h.samples[c] << ','
          << h.infeasible[c] << '\n';
    }
}

inline HeatMap read_heat_map_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("ix,iy", 0) != 0) throw ParseError("heat map: missing header");
  struct Row {
    int i, j;
    double x0, x1, y0, y1;
    int s, f;
  };
  std::vector<Row> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c = detail::split_csv(line);
    if (c.size() != 8) throw ParseError("heat map: line " + std::to_string(lineno) + " has " + std::to_string(c.size()) + " fields");
    try {
      rows.push_back({std::stoi(c[0]), std::stoi(c[1]), std::stod(c[2]), std::stod(c[3]), std::stod(c[4]), std::stod(c[5]),
                      std::stoi(c[6]), std::stoi(c[7])});
    } catch (const std::exception&) {
      throw ParseError("heat map: bad number on line " + std::to_string(lineno));
    }
  }
  if (rows.empty()) throw ParseError("heat map: no cells");
  HeatMap h;
  for (const auto& r : rows) {
    h.nx = std::max(h.nx, r.i + 1);
    h.ny = std::max(h.ny, r.j + 1);
  }
  if (static_cast<std::size_t>(h.nx * h.ny) != rows.size()) throw ParseError("heat map: cells do not form a full grid");
  h.samples.assign(rows.size(), 0);
  h.infeasible.assign(rows.size(), 0);
  h.x_lo = rows.front().x0;
  h.y_lo = rows.front().y0;
  h.x_hi = rows.back().x1;
  h.y_hi = rows.back().y1;
  for (const auto& r : rows) {
    if (r.f > r.s || r.f < 0) throw ParseError("heat map: infeasible count exceeds samples in a cell");
    h.samples[static_cast<std::size_t>(r.j * h.nx + r.i)] = r.s;
    h.infeasible[static_cast<std::size_t>(r.j * h.nx + r.i)] = r.f;
  }
  return h;
}

// Whether some control of the grid satisfies the index constraint at x.
// Returns the first satisfying column, or -1.
inline Eigen::Index grid_witness(const MlpNetwork& net, const Vec& x, const SafetyIndexSpec& spec, double dt,
                                 const Mat& grid, ConstraintMode mode, double floor = 0.0, double eps = 0.0) {
  Mat in(net.input_dim(), grid.cols());
  in.topRows(net.state_dim()) = x.replicate(1, grid.cols());
  in.bottomRows(net.control_dim()) = grid;
  const Mat f = forward_batch(net, in);
  if (mode == ConstraintMode::Linearized) {
    const auto rows = safety_rows(spec, x, dt);
    for (Eigen::Index c = 0; c < f.cols(); ++c)
      if (satisfies_rows(rows, f.col(c))) return c;
    return -1;
  }
  for (Eigen::Index c = 0; c < f.cols(); ++c)
    if (satisfies_discrete(spec, x, f.col(c), dt, floor, eps)) return c;
  return -1;
}

inline FeasibilityReport count_infeasible(const MlpNetwork& net, const std::vector<Vec>& states,
                                          const SafetyIndexSpec& spec, double dt, const Box& U,
                                          const CheckerConfig& checker = {}) {
  spec.validate();
  FeasibilityReport r;
  r.states = states;
  r.checker = checker.describe();
  r.feasible.assign(states.size(), 0);
  if (checker.kind == CheckerKind::Exact) {
    if (checker.mode != ConstraintMode::Linearized)
      throw InputError("count_infeasible: the exact checker supports the linearized constraint only");
    parallel_for(states.size(), [&](std::size_t i) {
      r.feasible[i] = feasibility_check_exact(net, states[i], spec, dt, U) ? 1 : 0;
    });
  } else {
    const Mat grid = control_grid(U, checker.resolution);
    parallel_for(states.size(), [&](std::size_t i) {
      r.feasible[i] = grid_witness(net, states[i], spec, dt, grid, checker.mode) >= 0 ? 1 : 0;
    });
  }
  for (char f : r.feasible) r.infeasible_count += f ? 0 : 1;
  return r;
}

// Grid checker specialised for repeated evaluation of one scene with many
// index parameters. Per state and control it caches the directional
// derivatives of d and d_dot along f (linearized mode) or d and d_dot at the
// next state (discrete mode), so each parameter set costs one pass over them.
class GridFitnessCache {
 public:
  GridFitnessCache(const MlpNetwork& net, std::vector<Vec> states, const SafetyIndexSpec& scene, double dt, const Box& U,
                   int resolution = 41, ConstraintMode mode = ConstraintMode::Linearized)
      : states_(std::move(states)), scene_(scene), dt_(dt), mode_(mode) {
    if (scene.obstacles.size() != 1) throw InputError("GridFitnessCache: expects exactly one obstacle or target");
    if (!(dt > 0.0)) throw InputError("GridFitnessCache: dt must be positive");
    const Mat grid = control_grid(U, resolution);
    g_ = grid.cols();
    const std::size_t n = states_.size();
    geo_.resize(n);
    a_.resize(n);
    b_.resize(n);
    const Eigen::Vector2d o = scene.obstacles.front(), w = scene.velocity;
    const Eigen::Vector2d o_next = o + w * dt;
    parallel_for(n, [&](std::size_t i) {
      const Vec& x = states_[i];
      geo_[i] = geometry(x, o, w);
      Mat in(net.input_dim(), g_);
      in.topRows(net.state_dim()) = x.replicate(1, g_);
      in.bottomRows(net.control_dim()) = grid;
      const Mat f = forward_batch(net, in);
      a_[i].resize(static_cast<std::size_t>(g_));
      b_[i].resize(static_cast<std::size_t>(g_));
      for (Eigen::Index c = 0; c < g_; ++c) {
        if (mode_ == ConstraintMode::Linearized) {
          a_[i][static_cast<std::size_t>(c)] = geo_[i].grad_d.dot(f.col(c).head<4>());
          b_[i][static_cast<std::size_t>(c)] = geo_[i].grad_d_dot.dot(f.col(c).head<4>());
        } else {
          const auto gn = geometry(Vec(x + f.col(c) * dt), o_next, w);
          a_[i][static_cast<std::size_t>(c)] = gn.d;
          b_[i][static_cast<std::size_t>(c)] = gn.d_dot;
        }
      }
    });
  }

  const std::vector<Vec>& states() const { return states_; }

  std::vector<char> feasible(const IndexParams& p) const {
    SafetyIndexSpec s = scene_;
    s.params = p;
    std::vector<char> out(states_.size(), 0);
    parallel_for(states_.size(), [&](std::size_t i) { out[i] = state_feasible(s, i) ? 1 : 0; });
    return out;
  }

  long count(const IndexParams& p) const {
    const auto f = feasible(p);
    return static_cast<long>(std::count(f.begin(), f.end(), 0));
  }

 private:
  bool state_feasible(const SafetyIndexSpec& s, std::size_t i) const {
    const auto& g = geo_[i];
    const auto t = index_term(s, g.d, g.d_dot);
    const auto& A = a_[i];
    const auto& B = b_[i];
    if (mode_ == ConstraintMode::Linearized) {
      const double rhs = constraint_rhs(t.phi, s.params.gamma, dt_) - (t.dphi_dd * g.dt_d + t.dphi_dddot * g.dt_d_dot);
      for (std::size_t c = 0; c < A.size(); ++c)
        if (t.dphi_dd * A[c] + t.dphi_dddot * B[c] <= rhs) return true;
      return false;
    }
    const double allowed = std::max(0.0, t.phi - s.params.gamma * dt_);
    for (std::size_t c = 0; c < A.size(); ++c)
      if (index_term(s, A[c], B[c]).phi <= allowed) return true;
    return false;
  }

  std::vector<Vec> states_;
  SafetyIndexSpec scene_;
  double dt_;
  ConstraintMode mode_;
  Eigen::Index g_ = 0;
  std::vector<GeomQuantities> geo_;
  std::vector<std::vector<double>> a_, b_;
};

// ---------------------------------------------------------------------------
// CMA-ES

struct ParamRange {
  std::string name;
  double lo = 0.0, hi = 1.0;
  std::vector<double> choices;  // non-empty: discrete, rounded to the nearest choice
};

struct SearchSpace {
  std::vector<ParamRange> params;
  // Parameter indices compared (ascending) when fitness ties.
  std::vector<int> tie_order;

  int dim() const { return static_cast<int>(params.size()); }

  void validate() const {
    if (params.empty()) throw ValidationError("search space is empty");
    for (const auto& p : params) {
      if (!std::isfinite(p.lo) || !std::isfinite(p.hi) || p.lo > p.hi)
        throw ValidationError("search space: parameter " + p.name + " has an invalid range");
      for (double c : p.choices)
        if (c < p.lo || c > p.hi) throw ValidationError("search space: choice outside the range of " + p.name);
    }
    for (int t : tie_order)
      if (t < 0 || t >= dim()) throw ValidationError("search space: bad tie-break index");
  }

  // Maps [0,1]^n to parameter values.
  Vec decode(const Vec& unit) const {
    Vec v(dim());
    for (int i = 0; i < dim(); ++i) {
      const auto& p = params[static_cast<std::size_t>(i)];
      double x = p.lo + std::clamp(unit[i], 0.0, 1.0) * (p.hi - p.lo);
      if (!p.choices.empty()) {
        double best = p.choices.front();
        for (double c : p.choices)
          if (std::abs(c - x) < std::abs(best - x)) best = c;
        x = best;
      }
      v[i] = x;
    }
    return v;
  }
};

struct CmaOptions {
  int population = 12;
  int generations = 30;
  std::uint64_t seed = 0;
  double sigma0 = 0.3;  // in normalized units
  Vec x0;               // normalized start; empty = box centre
};

struct CmaGeneration {
  int generation = 0;
  double best = kInf;       // this generation
  double best_ever = kInf;
  double median = kInf;
  double sigma = 0.0;
  Vec mean;                 // decoded
  bool restarted = false;
};

struct CmaResult {
  Vec best;  // decoded, best-ever member
  double best_fitness = kInf;
  std::vector<CmaGeneration> history;
  long evaluations = 0;
  int restarts = 0;
};

// fitness maps decoded members to values (lower is better); NaN counts as +inf.
using BatchFitness = std::function<std::vector<double>(const std::vector<Vec>&)>;

inline CmaResult cmaes_minimize(const SearchSpace& space, const BatchFitness& fitness, const CmaOptions& opt = {}) {
  space.validate();
  if (opt.population < 2) throw InputError("cmaes: population must be at least 2");
  if (opt.generations < 1) throw InputError("cmaes: need at least one generation");
  if (!(opt.sigma0 > 0.0)) throw InputError("cmaes: sigma0 must be positive");
  const int n = space.dim();
  const double nd = n;
  Rng rng = Rng::stream(opt.seed, "cmaes");

  const int lambda = opt.population, mu = lambda / 2;
  Vec w(mu);
  for (int i = 0; i < mu; ++i) w[i] = std::log(mu + 0.5) - std::log(i + 1.0);
  w /= w.sum();
  const double mueff = 1.0 / w.squaredNorm();
  const double cc = (4.0 + mueff / nd) / (nd + 4.0 + 2.0 * mueff / nd);
  const double cs = (mueff + 2.0) / (nd + mueff + 5.0);
  const double c1 = 2.0 / ((nd + 1.3) * (nd + 1.3) + mueff);
  const double cmu = std::min(1.0 - c1, 2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nd + 2.0) * (nd + 2.0) + mueff));
  const double damps = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff - 1.0) / (nd + 1.0)) - 1.0) + cs;
  const double chi_n = std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));

  Vec m = opt.x0.size() == n ? Vec(opt.x0.cwiseMax(0.0).cwiseMin(1.0)) : Vec::Constant(n, 0.5);
  double sigma = opt.sigma0;
  Mat C = Mat::Identity(n, n);
  Vec pc = Vec::Zero(n), ps = Vec::Zero(n);

  CmaResult res;
  auto better = [&](double fa, const Vec& a, double fb, const Vec& b) {
    if (fa != fb) return fa < fb;
    for (int t : space.tie_order)
      if (a[t] != b[t]) return a[t] < b[t];
    return false;
  };

  for (int g = 0; g < opt.generations; ++g) {
    CmaGeneration hist;
    hist.generation = g;
    Eigen::SelfAdjointEigenSolver<Mat> es(C);
    bool broken = es.info() != Eigen::Success || !C.allFinite() || es.eigenvalues().minCoeff() <= 1e-14 ||
                  !std::isfinite(sigma) || sigma <= 0.0;
    if (broken) {
      C = Mat::Identity(n, n);
      pc.setZero();
      ps.setZero();
      sigma = std::max(2.0 * opt.sigma0, std::isfinite(sigma) ? 2.0 * sigma : 0.0);
      ++res.restarts;
      hist.restarted = true;
      es.compute(C);
    }
    const Mat B = es.eigenvectors();
    const Vec D = es.eigenvalues().cwiseSqrt();

    std::vector<Vec> xs(static_cast<std::size_t>(lambda)), decoded(static_cast<std::size_t>(lambda));
    for (int k = 0; k < lambda; ++k) {
      Vec x;
      for (int tries = 0; tries < 100; ++tries) {
        const Vec z = rng.normal_vec(n);
        x = m + sigma * (B * D.cwiseProduct(z));
        if ((x.array() >= 0.0).all() && (x.array() <= 1.0).all()) break;
      }
      x = x.cwiseMax(0.0).cwiseMin(1.0);
      xs[static_cast<std::size_t>(k)] = x;
      decoded[static_cast<std::size_t>(k)] = space.decode(x);
    }
    std::vector<double> f = fitness(decoded);
    if (f.size() != decoded.size()) throw InputError("cmaes: fitness returned the wrong number of values");
    for (auto& v : f)
      if (std::isnan(v)) v = kInf;
    res.evaluations += lambda;

    std::vector<int> order(static_cast<std::size_t>(lambda));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return better(f[static_cast<std::size_t>(a)], decoded[static_cast<std::size_t>(a)], f[static_cast<std::size_t>(b)],
                    decoded[static_cast<std::size_t>(b)]);
    });
    const auto top = static_cast<std::size_t>(order.front());
    if (res.best.size() == 0 || better(f[top], decoded[top], res.best_fitness, res.best)) {
      res.best = decoded[top];
      res.best_fitness = f[top];
    }

    const Vec m_old = m;
    m.setZero();
    for (int i = 0; i < mu; ++i) m += w[i] * xs[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    const Vec y_w = (m - m_old) / sigma;
    const Mat inv_sqrt = B * D.cwiseInverse().asDiagonal() * B.transpose();
    ps = (1.0 - cs) * ps + std::sqrt(cs * (2.0 - cs) * mueff) * (inv_sqrt * y_w);
    const double ps_norm = ps.norm() / std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * (g + 1)));
    const bool hsig = ps_norm / chi_n < 1.4 + 2.0 / (nd + 1.0);
    pc = (1.0 - cc) * pc + (hsig ? std::sqrt(cc * (2.0 - cc) * mueff) : 0.0) * y_w;
    Mat rank_mu = Mat::Zero(n, n);
    for (int i = 0; i < mu; ++i) {
      const Vec y = (xs[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] - m_old) / sigma;
      rank_mu += w[i] * y * y.transpose();
    }
    C = (1.0 - c1 - cmu) * C + c1 * (pc * pc.transpose() + (hsig ? 0.0 : cc * (2.0 - cc)) * C) + cmu * rank_mu;
    C = 0.5 * (C + C.transpose());
    sigma *= std::exp((cs / damps) * (ps.norm() / chi_n - 1.0));

    std::vector<double> sorted = f;
    std::sort(sorted.begin(), sorted.end());
    hist.best = f[top];
    hist.best_ever = res.best_fitness;
    hist.median = sorted[sorted.size() / 2];
    hist.sigma = sigma;
    hist.mean = space.decode(m);
    res.history.push_back(std::move(hist));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Index synthesis

// Parameter order in index search spaces.
enum IndexParamSlot { kAlpha1 = 0, kAlpha2 = 1, kBeta = 2, kGamma = 3 };

inline IndexParams params_from(const Vec& v) { return {v[kAlpha1], v[kAlpha2], v[kBeta], v[kGamma]}; }

// Search ranges per index family; beta's lower end is raised to the safety
// margin lambda.
inline SearchSpace default_search_space(IndexKind kind, double lambda) {
  SearchSpace s;
  if (kind == IndexKind::CollisionAvoidance) {
    s.params = {{"alpha1", 0.01, 3.0, {}}, {"alpha2", 0.0, 10.0, {}}, {"beta", 0.1, 0.5, {}}, {"gamma", 0.001, 0.02, {}}};
  } else {
    s.params = {{"alpha1", 1.0, 3.0, {1.0, 3.0}}, {"alpha2", 0.0, 10.0, {}}, {"beta", 0.01, 0.5, {}}, {"gamma", 0.001, 1.0, {}}};
  }
  auto& beta = s.params[kBeta];
  beta.lo = std::max(beta.lo, lambda);
  if (beta.lo > beta.hi)
    throw ValidationError("search space: safety margin " + std::to_string(lambda) + " exceeds the beta range");
  s.tie_order = {kBeta, kAlpha2};
  return s;
}

struct SynthesisOptions {
  std::size_t samples = 4000;
  double region_half = 5.0;
  double exclusion_factor = 0.3;  // states with d < factor * d_min are not sampled
  CheckerConfig checker;
  CmaOptions cma;
  double lambda = 0.0;  // beta lower bound
};

struct SynthesisResult {
  SafetyIndexSpec spec;
  long fitness = 0;
  long phi0_infeasible = 0;
  std::vector<CmaGeneration> history;
  std::uint64_t seed = 0;
  std::string checker;
  FeasibilityReport report;  // learned index over the sampled states
  Box region;
};

inline SynthesisResult synthesize_index(const MlpNetwork& net, const SafetyIndexSpec& scene, double dt, const Box& U,
                                        const SynthesisOptions& opt) {
  if (opt.checker.kind != CheckerKind::Grid) throw InputError("synthesize_index: search uses the grid checker");
  const SearchSpace space = default_search_space(scene.kind, opt.lambda);
  SynthesisResult out;
  out.seed = opt.cma.seed;
  out.checker = opt.checker.describe();
  out.region = region_around(scene, opt.region_half);
  Rng rng = Rng::stream(opt.cma.seed, "sis-states");
  auto states = sample_states(out.region, opt.samples, rng, outside_obstacles(scene, opt.exclusion_factor * scene.d_min));
  const GridFitnessCache cache(net, states, scene, dt, U, opt.checker.resolution, opt.checker.mode);
  out.phi0_infeasible = cache.count(scene.as_phi0().params);
  auto fitness = [&](const std::vector<Vec>& members) {
    std::vector<double> f;
    for (const auto& m : members) f.push_back(static_cast<double>(cache.count(params_from(m))));
    return f;
  };
  const auto res = cmaes_minimize(space, fitness, opt.cma);
  out.history = res.history;
  out.spec = scene;
  out.spec.params = params_from(res.best);
  out.fitness = static_cast<long>(res.best_fitness);
  out.report.states = states;
  out.report.feasible = cache.feasible(out.spec.params);
  out.report.infeasible_count = out.fitness;
  out.report.checker = out.checker;
  return out;
}

inline nlohmann::json synthesis_to_json(const SynthesisResult& r) {
  nlohmann::json j;
  j["kind"] = to_string(r.spec.kind);
  j["params"] = {{"alpha1", r.spec.params.alpha1},
                 {"alpha2", r.spec.params.alpha2},
                 {"beta", r.spec.params.beta},
                 {"gamma", r.spec.params.gamma}};
  std::vector<double> hist;
  for (const auto& h : r.history) hist.push_back(h.best_ever);
  j["fitness_history"] = hist;
  j["fitness"] = r.fitness;
  j["phi0_infeasible"] = r.phi0_infeasible;
  j["samples"] = r.report.states.size();
  j["seed"] = r.seed;
  j["checker"] = r.checker;
  return j;
}

// ---------------------------------------------------------------------------
// Certification over a state box

inline double lemma1_epsilon(double k_f, double k_phi, double delta) {
  if (k_f < 0.0 || k_phi < 0.0 || delta < 0.0) throw InputError("epsilon: constants must be non-negative");
  return k_phi * (k_f + 2.0) * delta;
}

// 1.5 x the largest sampled gradient norm of phi. An estimate, not a bound.
inline double phi_lipschitz_estimate(const SafetyIndexSpec& spec, const Box& region, std::size_t samples, Rng& rng,
                                     double d_floor = 1e-3) {
  if (region.dim() != 4) throw InputError("phi_lipschitz_estimate: expects a 4-D state region");
  for (const auto& o : spec.obstacles) {
    // Distance from the obstacle to the closest point of the position box.
    const double cx = std::clamp(o.x(), region.lower[0], region.upper[0]);
    const double cy = std::clamp(o.y(), region.lower[1], region.upper[1]);
    if ((Eigen::Vector2d(cx, cy) - o).norm() < d_floor)
      throw DegenerateGeometry("phi_lipschitz_estimate: region reaches the obstacle centre");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < samples; ++i) worst = std::max(worst, grad_phi(spec, region.sample(rng)).norm());
  return 1.5 * worst;
}

struct CertifyOptions {
  double delta = 0.01;
  double k_f = 0.0;
  double k_phi = 0.0;
  long budget = 10000;
  int resolution = 41;
};

struct CertifyResult {
  bool certified = false;
  double epsilon = 0.0;
  std::vector<int> counts;  // points per dimension
  Vec spacing;              // per dimension (0 for a flat dimension)
  std::vector<Vec> points;
  std::vector<Vec> witness;     // control per point (empty Vec if none)
  std::vector<Vec> failures;    // points without a witness
  long net_size() const { return static_cast<long>(points.size()); }
};

// Checks phi(x' + f(x',u) dt) <= max(-eps, phi(x') - (gamma + eps) dt) for some
// grid control at every point of a delta-net over the region.
inline CertifyResult certify_feasibility(const MlpNetwork& net, const SafetyIndexSpec& spec, const Box& region, double dt,
                                         const Box& U, const CertifyOptions& opt) {
  spec.validate();
  if (region.dim() != net.state_dim()) throw InputError("certify_feasibility: region dimension mismatch");
  if (!(opt.delta >= 0.0)) throw InputError("certify_feasibility: delta must be non-negative");
  CertifyResult r;
  r.epsilon = lemma1_epsilon(opt.k_f, opt.k_phi, opt.delta);
  const int m = region.dim();
  const double h = 2.0 * opt.delta / std::sqrt(static_cast<double>(m));
  long total = 1;
  r.spacing = Vec::Zero(m);
  for (int i = 0; i < m; ++i) {
    const double w = region.upper[i] - region.lower[i];
    int c = 1;
    if (w > 0.0) {
      if (!(h > 0.0)) throw BudgetError(static_cast<std::size_t>(-1), "certify_feasibility: zero delta over a non-flat region");
      const double need = std::ceil(w / h) + 1.0;
      if (need > 1e12) throw BudgetError(static_cast<std::size_t>(-1), "certify_feasibility: delta-net too large");
      c = static_cast<int>(need);
      r.spacing[i] = w / (c - 1);
    }
    r.counts.push_back(c);
    if (total > opt.budget / c + 1) total = opt.budget + 1;
    else total *= c;
  }
  if (total > opt.budget) {
    double required = 1.0;
    for (int c : r.counts) required *= c;
    throw BudgetError(static_cast<std::size_t>(required), "certify_feasibility: delta-net needs " +
                                                           std::to_string(static_cast<long long>(required)) +
                                                           " points, budget is " + std::to_string(opt.budget));
  }
  r.points.reserve(static_cast<std::size_t>(total));
  std::vector<int> idx(static_cast<std::size_t>(m), 0);
  for (long p = 0; p < total; ++p) {
    Vec x(m);
    for (int i = 0; i < m; ++i) x[i] = region.lower[i] + idx[static_cast<std::size_t>(i)] * r.spacing[i];
    r.points.push_back(x);
    for (int i = m - 1; i >= 0; --i) {
      if (++idx[static_cast<std::size_t>(i)] < r.counts[static_cast<std::size_t>(i)]) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
  }
  const Mat grid = control_grid(U, opt.resolution);
  r.witness.assign(r.points.size(), Vec());
  parallel_for(r.points.size(), [&](std::size_t i) {
    const auto c = grid_witness(net, r.points[i], spec, dt, grid, ConstraintMode::Discrete, -r.epsilon, r.epsilon);
    if (c >= 0) r.witness[i] = grid.col(c);
  });
  for (std::size_t i = 0; i < r.points.size(); ++i)
    if (r.witness[i].size() == 0) r.failures.push_back(r.points[i]);
  r.certified = r.failures.empty();
  return r;
}

// Index of the net point nearest to x (per-dimension rounding).
inline std::size_t nearest_net_point(const CertifyResult& r, const Box& region, const Vec& x) {
  std::size_t flat = 0;
  for (int i = 0; i < region.dim(); ++i) {
    const int c = r.counts[static_cast<std::size_t>(i)];
    int k = 0;
    if (c > 1) k = std::clamp(static_cast<int>(std::lround((x[i] - region.lower[i]) / r.spacing[i])), 0, c - 1);
    flat = flat * static_cast<std::size_t>(c) + static_cast<std::size_t>(k);
  }
  return flat;
}

}  // namespace mindsis

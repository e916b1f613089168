#pragma once

// Mixed-integer encoding of a ReLU dynamics model for one-step safe tracking.
// Stable ReLUs are folded into affine expressions; each unstable ReLU gets a
// continuous output variable and one binary indicator with big-M rows built
// from its pre-activation interval.

#include "mindsis/interval_bounds.hpp"
#include "mindsis/milp.hpp"
#include "mindsis/nn_model.hpp"
#include "mindsis/safety_index.hpp"

#include <chrono>
#include <functional>
#include <optional>
#include <queue>
#include <string>
#include <vector>

namespace mindsis {

// Rows of affine expressions over problem variables: value = coef * v + constant,
// with column c referring to problem variable offset + c.
struct AffineMap {
  Mat coef;
  Vec constant;
  int offset = 0;

  std::vector<milp::Term> terms(Eigen::Index row, double scale = 1.0) const {
    std::vector<milp::Term> out;
    for (Eigen::Index c = 0; c < coef.cols(); ++c)
      if (coef(row, c) != 0.0) out.push_back({offset + static_cast<int>(c), scale * coef(row, c)});
    return out;
  }
};

struct NetworkEncoding {
  std::vector<int> input_var;  // -1 for inputs fixed by a degenerate box
  Vec input_const;
  std::vector<std::vector<ActivationStatus>> status;
  std::vector<std::vector<int>> z_var;      // unstable nodes only, else -1
  std::vector<std::vector<int>> delta_var;  // unstable nodes only, else -1
  AffineMap output;
  int unstable = 0;
};

namespace detail {

inline void check_bounds_match(const MlpNetwork& net, const BoundsTensor& bounds) {
  if (static_cast<int>(bounds.layer_count()) != net.layer_count())
    throw InputError("encoder: bounds have " + std::to_string(bounds.layer_count()) + " layers, network has " +
                     std::to_string(net.layer_count()));
  for (int i = 0; i < net.layer_count(); ++i)
    if (bounds.layers[static_cast<std::size_t>(i)].pre_lower.size() != net.layer(i).bias.size())
      throw InputError("encoder: bounds do not match layer " + std::to_string(i));
}

}  // namespace detail

// Encodes z_n = net(z_0) for z_0 in `input`, appending variables and rows to p.
inline NetworkEncoding encode_network(milp::MilpProblem& p, const MlpNetwork& net, const Box& input,
                                      const BoundsTensor& bounds) {
  if (input.dim() != net.input_dim()) throw InputError("encoder: input box does not match the network input");
  detail::check_bounds_match(net, bounds);
  NetworkEncoding enc;
  enc.status = activation_status(bounds);

  const int offset = p.variable_count();
  int nv = 0;
  for (Eigen::Index i = 0; i < input.dim(); ++i)
    if (input.upper[i] > input.lower[i]) ++nv;
  for (const auto& layer : enc.status)
    for (auto s : layer)
      if (s == ActivationStatus::Unstable) nv += 2;

  Mat coef = Mat::Zero(input.dim(), nv);
  Vec cst = Vec::Zero(input.dim());
  enc.input_const = input.lower;
  int next = 0;
  for (Eigen::Index i = 0; i < input.dim(); ++i) {
    if (input.upper[i] > input.lower[i]) {
      const int v = p.add_variable("in" + std::to_string(i), input.lower[i], input.upper[i]);
      enc.input_var.push_back(v);
      coef(i, next++) = 1.0;
    } else {
      enc.input_var.push_back(-1);
      cst[i] = input.lower[i];
    }
  }

  const auto& layers = net.layers();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    Mat pre = layers[li].weights * coef;
    Vec pre_c = layers[li].weights * cst + layers[li].bias;
    if (li + 1 == layers.size()) {
      enc.output = {std::move(pre), std::move(pre_c), offset};
      break;
    }
    const auto& lb = bounds.layers[li];
    const Eigen::Index k = pre.rows();
    Mat post = Mat::Zero(k, nv);
    Vec post_c = Vec::Zero(k);
    std::vector<int> zv(static_cast<std::size_t>(k), -1), dv(static_cast<std::size_t>(k), -1);
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto s = enc.status[li][static_cast<std::size_t>(j)];
      if (s == ActivationStatus::AlwaysInactive) continue;
      if (s == ActivationStatus::AlwaysActive) {
        post.row(j) = pre.row(j);
        post_c[j] = pre_c[j];
        continue;
      }
      const double lo = lb.pre_lower[j], hi = lb.pre_upper[j];
      const std::string tag = std::to_string(li) + "_" + std::to_string(j);
      const int z = p.add_variable("z" + tag, 0.0, hi);
      const int d = p.add_binary("d" + tag);
      zv[static_cast<std::size_t>(j)] = z;
      dv[static_cast<std::size_t>(j)] = d;
      const int zc = next++, dc = next++;
      (void)dc;
      AffineMap row{pre.row(j), Vec::Constant(1, pre_c[j]), offset};
      // z >= zhat
      auto t = row.terms(0, -1.0);
      t.push_back({z, 1.0});
      p.add_constraint(t, milp::Sense::GreaterEqual, pre_c[j], "relu_lo" + tag);
      // z <= zhat - lo (1 - delta)
      t = row.terms(0, -1.0);
      t.push_back({z, 1.0});
      t.push_back({d, -lo});
      p.add_constraint(t, milp::Sense::LessEqual, pre_c[j] - lo, "relu_hi" + tag);
      // z <= hi delta
      p.add_constraint({{z, 1.0}, {d, -hi}}, milp::Sense::LessEqual, 0.0, "relu_on" + tag);
      post(j, zc) = 1.0;
      ++enc.unstable;
    }
    enc.z_var.push_back(std::move(zv));
    enc.delta_var.push_back(std::move(dv));
    coef = std::move(post);
    cst = std::move(post_c);
  }
  return enc;
}

struct EncodedStep {
  milp::MilpProblem problem;
  NetworkEncoding network;
  std::vector<int> u_var;  // -1 where U is degenerate
  std::vector<int> x_next_var;
  std::vector<int> t_var;
  Vec x_k, x_ref, u_lower, u_upper;
  double dt = 0.0;
  int safety_rows = 0;
  const MlpNetwork* net = nullptr;  // must outlive the step
};

inline EncodedStep encode_tracking(const MlpNetwork& net, const Vec& x_k, const Vec& x_ref, double dt, const Box& U,
                                   const BoundsTensor& bounds) {
  if (x_k.size() != net.state_dim() || x_ref.size() != net.state_dim())
    throw InputError("encode_tracking: state dimension mismatch");
  if (U.dim() != net.control_dim()) throw InputError("encode_tracking: control box dimension mismatch");
  if (!(dt > 0.0)) throw InputError("encode_tracking: dt must be positive");
  if (!x_k.allFinite() || !x_ref.allFinite()) throw InputError("encode_tracking: non-finite state");
  U.validate();

  EncodedStep s;
  s.net = &net;
  s.x_k = x_k;
  s.x_ref = x_ref;
  s.dt = dt;
  s.u_lower = U.lower;
  s.u_upper = U.upper;
  const Box input = Box::cartesian(Box::point(x_k), U);
  s.network = encode_network(s.problem, net, input, bounds);
  for (int i = 0; i < net.control_dim(); ++i) s.u_var.push_back(s.network.input_var[static_cast<std::size_t>(net.state_dim() + i)]);

  const auto& out = bounds.layers.back();
  const auto& map = s.network.output;
  for (int i = 0; i < net.state_dim(); ++i) {
    const double lo = out.pre_lower[i], hi = out.pre_upper[i];
    const double pad = 1e-9 * (1.0 + std::abs(lo) + std::abs(hi));
    const double a = x_k[i] + dt * (lo - pad), b = x_k[i] + dt * (hi + pad);
    const int xn = s.problem.add_variable("xn" + std::to_string(i), std::min(a, b), std::max(a, b));
    s.x_next_var.push_back(xn);
    auto t = map.terms(i, -dt);
    t.push_back({xn, 1.0});
    s.problem.add_constraint(t, milp::Sense::Equal, x_k[i] + dt * map.constant[i], "dyn" + std::to_string(i));
  }
  for (int i = 0; i < net.state_dim(); ++i) {
    const int t = s.problem.add_variable("t" + std::to_string(i), 0.0, kInf);
    s.t_var.push_back(t);
    const int xn = s.x_next_var[static_cast<std::size_t>(i)];
    s.problem.add_constraint({{t, 1.0}, {xn, -1.0}}, milp::Sense::GreaterEqual, -x_ref[i], "abs_p" + std::to_string(i));
    s.problem.add_constraint({{t, 1.0}, {xn, 1.0}}, milp::Sense::GreaterEqual, x_ref[i], "abs_n" + std::to_string(i));
    s.problem.set_objective_coef(t, 1.0);
  }
  return s;
}

inline EncodedStep encode_tracking(const MlpNetwork& net, const Vec& x_k, const Vec& x_ref, double dt, const Box& U) {
  return encode_tracking(net, x_k, x_ref, dt, U, propagate(net, Box::cartesian(Box::point(x_k), U)));
}

// Appends grad . z_n <= rhs.
inline void add_safety_row(EncodedStep& step, const Vec& grad, double rhs) {
  if (grad.size() != step.network.output.coef.rows()) throw InputError("safety row: gradient dimension mismatch");
  if (!grad.allFinite() || !std::isfinite(rhs)) throw InputError("safety row: non-finite gradient or rhs");
  const auto& map = step.network.output;
  const Vec row = map.coef.transpose() * grad;
  std::vector<milp::Term> terms;
  for (Eigen::Index c = 0; c < row.size(); ++c)
    if (row[c] != 0.0) terms.push_back({map.offset + static_cast<int>(c), row[c]});
  const double lhs_const = grad.dot(map.constant);
  if (terms.empty()) {
    // Control has no effect on the row: either always satisfied or infeasible.
    if (lhs_const > rhs) {
      const int dummy = step.problem.add_variable("infeasible_row", 0.0, 0.0);
      step.problem.add_constraint({{dummy, 1.0}}, milp::Sense::GreaterEqual, 1.0,
                                  "safety" + std::to_string(step.safety_rows));
    }
  } else {
    step.problem.add_constraint(std::move(terms), milp::Sense::LessEqual, rhs - lhs_const,
                                "safety" + std::to_string(step.safety_rows));
  }
  ++step.safety_rows;
}

// grad_phi . f(x_k, u_k) <= max(-phi(x_k)/dt, -gamma)
inline void add_safety_constraint(EncodedStep& step, const Vec& grad_phi, double phi_at_xk, double gamma, double dt) {
  add_safety_row(step, grad_phi, constraint_rhs(phi_at_xk, gamma, dt));
}

// One row per obstacle of the spec, evaluated at the step's state.
inline void add_safety_constraints(EncodedStep& step, const SafetyIndexSpec& spec, double rhs_shift = 0.0) {
  for (const auto& r : safety_rows(spec, step.x_k, step.dt)) add_safety_row(step, r.grad, r.rhs + rhs_shift);
}

struct StepOptions {
  milp::MilpOptions milp;
  bool self_check = true;
  bool use_heuristic = true;
};

struct StepResult {
  milp::SolveStatus status = milp::SolveStatus::Infeasible;
  Vec u;
  Vec x_next;
  double objective = kInf;  // |x_next - x_ref|_1 of the decoded solution
  double l2_error = kInf;
  double milp_objective = kInf;
  double best_bound = -kInf;
  long nodes = 0;
  double solve_ms = 0.0;
  bool has_solution() const { return u.size() > 0; }
};

namespace detail {

inline Vec control_from(const EncodedStep& step, const std::vector<double>& x) {
  Vec u = step.u_lower;
  for (std::size_t i = 0; i < step.u_var.size(); ++i)
    if (step.u_var[i] >= 0)
      u[static_cast<Eigen::Index>(i)] =
          std::clamp(x[static_cast<std::size_t>(step.u_var[i])], step.u_lower[static_cast<Eigen::Index>(i)],
                     step.u_upper[static_cast<Eigen::Index>(i)]);
  return u;
}

// Complete assignment obtained by running the network on a control.
inline std::vector<double> assignment_for(const EncodedStep& step, const Vec& u, std::size_t n_vars) {
  std::vector<double> a(n_vars, 0.0);
  const auto trace = forward_trace(*step.net, step.x_k, u);
  for (std::size_t i = 0; i < step.u_var.size(); ++i)
    if (step.u_var[i] >= 0) a[static_cast<std::size_t>(step.u_var[i])] = u[static_cast<Eigen::Index>(i)];
  for (std::size_t li = 0; li < step.network.z_var.size(); ++li)
    for (std::size_t j = 0; j < step.network.z_var[li].size(); ++j) {
      const int z = step.network.z_var[li][j];
      if (z < 0) continue;
      const double pre = trace.pre[li][static_cast<Eigen::Index>(j)];
      a[static_cast<std::size_t>(z)] = std::max(pre, 0.0);
      a[static_cast<std::size_t>(step.network.delta_var[li][j])] = pre > 0.0 ? 1.0 : 0.0;
    }
  const Vec xn = step.x_k + trace.output() * step.dt;
  for (std::size_t i = 0; i < step.x_next_var.size(); ++i) {
    a[static_cast<std::size_t>(step.x_next_var[i])] = xn[static_cast<Eigen::Index>(i)];
    a[static_cast<std::size_t>(step.t_var[i])] = std::abs(xn[static_cast<Eigen::Index>(i)] - step.x_ref[static_cast<Eigen::Index>(i)]);
  }
  return a;
}

}  // namespace detail

// Forward-pass repair: keep the relaxation's control, recompute everything else.
inline std::function<std::optional<std::vector<double>>(const std::vector<double>&)> forward_repair(
    const EncodedStep& step) {
  return [&step](const std::vector<double>& relax) -> std::optional<std::vector<double>> {
    return detail::assignment_for(step, detail::control_from(step, relax), relax.size());
  };
}

inline StepResult solve_step(const EncodedStep& step, const StepOptions& opt = {}) {
  if (step.net == nullptr) throw InputError("solve_step: step has no network");
  const auto t0 = std::chrono::steady_clock::now();
  milp::MilpOptions mo = opt.milp;
  if (opt.use_heuristic && !mo.heuristic) mo.heuristic = forward_repair(step);
  const auto sol = milp::solve_milp(step.problem, mo);
  StepResult r;
  r.status = sol.status;
  r.nodes = sol.nodes;
  r.best_bound = sol.best_bound;
  r.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (sol.status == milp::SolveStatus::NumericalFailure && !sol.has_incumbent)
    throw NumericalFailure("solve_step: LP breakdown without an incumbent");
  if (!sol.has_incumbent) return r;

  r.u = detail::control_from(step, sol.x);
  const auto trace = forward_trace(*step.net, step.x_k, r.u);
  r.x_next = step.x_k + trace.output() * step.dt;
  r.objective = (r.x_next - step.x_ref).lpNorm<1>();
  r.l2_error = (r.x_next - step.x_ref).norm();
  r.milp_objective = sol.objective;

  if (opt.self_check) {
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(b)); };
    for (std::size_t li = 0; li < step.network.z_var.size(); ++li)
      for (std::size_t j = 0; j < step.network.z_var[li].size(); ++j) {
        const int z = step.network.z_var[li][j];
        if (z < 0) continue;
        const double truth = trace.post[li][static_cast<Eigen::Index>(j)];
        if (!close(sol.x[static_cast<std::size_t>(z)], truth))
          throw EncodingError("solve_step: decoded z at layer " + std::to_string(li) + " node " + std::to_string(j) +
                              " is " + std::to_string(sol.x[static_cast<std::size_t>(z)]) + ", forward pass gives " +
                              std::to_string(truth));
      }
    for (std::size_t i = 0; i < step.x_next_var.size(); ++i)
      if (!close(sol.x[static_cast<std::size_t>(step.x_next_var[i])], r.x_next[static_cast<Eigen::Index>(i)]))
        throw EncodingError("solve_step: decoded x_next[" + std::to_string(i) + "] disagrees with the forward pass");
  }
  return r;
}

// Spatial branching on the control box. Interval bounds over a sub-box of U
// are much tighter, so most ReLUs become stable; boxes are split until few
// unstable nodes remain and then solved as MILPs. Boxes are explored
// best-first by their LP relaxation bound, so the result is still a global
// optimum over U.
struct PartitionOptions {
  int leaf_unstable = 10;
  int max_depth = 16;
  double gap_abs = 1e-9;
};

struct PartitionStats {
  long boxes = 0;
  long leaves = 0;
  long lps = 0;
};

// build(box) must encode the step over the control box `box`.
inline StepResult solve_partitioned(const std::function<EncodedStep(const Box&)>& build, const Box& U,
                                    const StepOptions& opt = {}, const PartitionOptions& popt = {},
                                    PartitionStats* stats = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  struct Item {
    double bound;
    int depth;
    long id;
    Box box;
  };
  auto worse = [](const Item& a, const Item& b) {
    if (a.bound != b.bound) return a.bound > b.bound;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.id > b.id;
  };
  std::priority_queue<Item, std::vector<Item>, decltype(worse)> open(worse);
  long next_id = 0;
  open.push({-kInf, 0, next_id++, U});
  const Vec full = U.upper - U.lower;

  StepResult best;
  double incumbent = kInf;
  long nodes = 0;
  bool unproven = false, numerical = false;
  PartitionStats st;

  // Accepts u if the full encoding is satisfied by the forward pass at u.
  auto try_control = [&](const EncodedStep& step, const Vec& u) {
    const auto a = detail::assignment_for(step, u, static_cast<std::size_t>(step.problem.variable_count()));
    if (step.problem.max_violation(a) > 1e-9) return;
    const Vec xn = step.x_k + forward_trace(*step.net, step.x_k, u).output() * step.dt;
    const double obj = step.problem.evaluate_objective(a);
    if (obj < incumbent) {
      incumbent = obj;
      best.u = u;
      best.x_next = xn;
      best.objective = (xn - step.x_ref).lpNorm<1>();
      best.l2_error = (xn - step.x_ref).norm();
      best.milp_objective = obj;
    }
  };

  double final_bound = kInf;
  while (!open.empty()) {
    Item it = open.top();
    if (it.bound >= incumbent - popt.gap_abs) {
      final_bound = std::min(final_bound, it.bound);
      break;
    }
    open.pop();
    ++st.boxes;
    EncodedStep step = build(it.box);
    std::vector<int> split_dims;
    for (int i = 0; i < it.box.dim(); ++i)
      if (it.box.upper[i] > it.box.lower[i]) split_dims.push_back(i);
    if (step.network.unstable <= popt.leaf_unstable || it.depth >= popt.max_depth || split_dims.empty()) {
      ++st.leaves;
      StepResult r;
      try {
        r = solve_step(step, opt);
      } catch (const NumericalFailure&) {
        // The leaf stays unexplored; other leaves may still hold a solution.
        numerical = unproven = true;
        final_bound = std::min(final_bound, it.bound);
        continue;
      }
      nodes += r.nodes;
      if (r.status == milp::SolveStatus::NumericalFailure) numerical = true;
      if (r.status == milp::SolveStatus::NodeLimit || r.status == milp::SolveStatus::TimeLimit) {
        unproven = true;
        final_bound = std::min(final_bound, r.best_bound);
      }
      if (r.has_solution() && r.milp_objective < incumbent) {
        incumbent = r.milp_objective;
        best = r;
      }
      continue;
    }
    ++st.lps;
    const auto lp = milp::solve_lp(step.problem, opt.milp.lp);
    if (lp.status == milp::SolveStatus::Infeasible) continue;
    double bound = it.bound;
    if (lp.status == milp::SolveStatus::Optimal) {
      bound = std::max(bound, lp.objective);
      try_control(step, detail::control_from(step, lp.x));
    } else {
      numerical = numerical || lp.status == milp::SolveStatus::NumericalFailure;
    }
    if (bound >= incumbent - popt.gap_abs) continue;
    // Split the widest side, measured relative to U.
    int d = split_dims.front();
    for (int i : split_dims)
      if ((it.box.upper[i] - it.box.lower[i]) / full[i] > (it.box.upper[d] - it.box.lower[d]) / full[d]) d = i;
    const double mid = 0.5 * (it.box.lower[d] + it.box.upper[d]);
    Box lo = it.box, hi = it.box;
    lo.upper[d] = mid;
    hi.lower[d] = mid;
    open.push({bound, it.depth + 1, next_id++, lo});
    open.push({bound, it.depth + 1, next_id++, hi});
  }
  if (open.empty()) final_bound = std::min(final_bound, incumbent);

  best.nodes = nodes;
  best.best_bound = final_bound;
  best.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (stats) *stats = st;
  if (best.has_solution())
    best.status = unproven ? milp::SolveStatus::NodeLimit : milp::SolveStatus::Optimal;
  else if (numerical)
    throw NumericalFailure("solve_partitioned: LP breakdown without an incumbent");
  else
    best.status = unproven ? milp::SolveStatus::NodeLimit : milp::SolveStatus::Infeasible;
  return best;
}

// True iff some u in U satisfies every linearized safety row of the spec at x.
inline bool feasibility_check_exact(const MlpNetwork& net, const Vec& x, const SafetyIndexSpec& spec, double dt,
                                    const Box& U, const StepOptions& opt = {}) {
  StepOptions o = opt;
  o.self_check = false;
  auto build = [&](const Box& box) {
    EncodedStep step = encode_tracking(net, x, x, dt, box);
    step.problem.clear_objective();
    add_safety_constraints(step, spec);
    return step;
  };
  const auto r = solve_partitioned(build, U, o);
  if (r.status == milp::SolveStatus::NodeLimit) throw NumericalFailure("feasibility_check_exact: search limit reached");
  return r.has_solution();
}

struct XDotMax {
  double value = 0.0;     // max over components of the per-component bound
  Vec component;          // sound upper bound of |xdot_i|
  bool proven = true;     // false when a node limit left a gap
};

// Max of |f_i(x,u)| over X x U by two MILPs per output coordinate.
inline XDotMax x_dot_max(const MlpNetwork& net, const Box& X, const Box& U, long node_limit = 20000,
                         double time_limit = kInf) {
  X.validate();
  U.validate();
  if (X.dim() != net.state_dim() || U.dim() != net.control_dim()) throw InputError("x_dot_max: box dimension mismatch");
  const Box input = Box::cartesian(X, U);
  const auto bounds = propagate(net, input);
  milp::MilpProblem base;
  const auto enc = encode_network(base, net, input, bounds);
  XDotMax out;
  out.component = Vec::Zero(net.state_dim());
  const auto& ob = bounds.layers.back();
  for (int i = 0; i < net.state_dim(); ++i) {
    double comp = 0.0;
    for (double sign : {1.0, -1.0}) {
      // minimize -sign * f_i
      milp::MilpProblem p = base;
      for (const auto& t : enc.output.terms(i, -sign)) p.set_objective_coef(t.var, t.coef);
      p.set_objective_constant(-sign * enc.output.constant[i]);
      milp::MilpOptions mo;
      mo.node_limit = node_limit;
      mo.time_limit = time_limit;
      const auto sol = milp::solve_milp(p, mo);
      const double interval = sign > 0 ? ob.pre_upper[i] : -ob.pre_lower[i];
      double bound = interval;
      if (sol.status == milp::SolveStatus::Optimal) {
        bound = std::min(interval, -sol.objective);
      } else if (sol.status == milp::SolveStatus::NodeLimit || sol.status == milp::SolveStatus::TimeLimit) {
        bound = std::min(interval, -sol.best_bound);
        out.proven = false;
      } else {
        out.proven = false;
      }
      comp = std::max(comp, bound);
    }
    out.component[i] = comp;
    out.value = std::max(out.value, comp);
  }
  return out;
}

// Same bound by best-first bisection of X x U with linear-relaxation bounds on
// +f_i and -f_i in one queue: the result is the largest bound among
// unexplored boxes, so it stays sound when the box budget runs out. proven
// means the gap to the best sampled |f_i| closed to rel_tol.
inline XDotMax x_dot_max_split(const MlpNetwork& net, const Box& X, const Box& U, double rel_tol = 1e-2,
                               long max_boxes = 20000) {
  X.validate();
  U.validate();
  if (X.dim() != net.state_dim() || U.dim() != net.control_dim()) throw InputError("x_dot_max: box dimension mismatch");
  if (!(rel_tol >= 0.0) || max_boxes < 1) throw InputError("x_dot_max: bad tolerance or budget");
  const Box input = Box::cartesian(X, U);
  const Vec full = input.width();
  XDotMax out;
  out.component = Vec::Zero(net.state_dim());
  struct Item {
    double ub;
    long id;
    double sign;
    Box box;
  };
  auto lower = [](const Item& a, const Item& b) { return a.ub != b.ub ? a.ub < b.ub : a.id > b.id; };
  for (int i = 0; i < net.state_dim(); ++i) {
    auto bound_of = [&](const Box& b, double sign) {
      const auto t = propagate_linear(net, b);
      const auto& o = t.layers.back();
      return sign > 0 ? o.pre_upper[i] : -o.pre_lower[i];
    };
    // Best of the box centre and the corner picked by the local gradient there.
    auto probe = [&](const Box& b, double sign) {
      const Vec c = b.center();
      const auto tr = forward_trace_input(net, c);
      Vec g = Vec::Zero(net.state_dim());
      g[i] = sign;
      for (int l = net.layer_count() - 1; l >= 0; --l) {
        g = net.layer(l).weights.transpose() * g;
        if (l > 0) g = g.cwiseProduct((tr.pre[static_cast<std::size_t>(l - 1)].array() > 0.0).cast<double>().matrix());
      }
      Vec corner(c.size());
      for (Eigen::Index k = 0; k < c.size(); ++k) corner[k] = g[k] >= 0.0 ? b.upper[k] : b.lower[k];
      return std::max(sign * tr.output()[i], sign * forward_trace_input(net, corner).output()[i]);
    };
    std::priority_queue<Item, std::vector<Item>, decltype(lower)> open(lower);
    long next = 0;
    double best = 0.0;
    for (double sign : {1.0, -1.0}) {
      best = std::max(best, probe(input, sign));
      open.push({bound_of(input, sign), next++, sign, input});
    }
    double ub = best;
    while (!open.empty()) {
      ub = std::max(best, open.top().ub);
      if (ub - best <= rel_tol * std::max(1.0, best)) break;
      if (next >= max_boxes) {
        out.proven = false;
        break;
      }
      Item it = open.top();
      open.pop();
      int d = 0;
      double widest = -1.0;
      for (int k = 0; k < it.box.dim(); ++k) {
        const double rel = full[k] > 0.0 ? (it.box.upper[k] - it.box.lower[k]) / full[k] : 0.0;
        if (rel > widest) {
          widest = rel;
          d = k;
        }
      }
      if (widest <= 0.0) {
        // A point box: its bound is its value.
        best = std::max(best, probe(it.box, it.sign));
        continue;
      }
      const double mid = 0.5 * (it.box.lower[d] + it.box.upper[d]);
      Box a = it.box, b = it.box;
      a.upper[d] = mid;
      b.lower[d] = mid;
      for (Box* c : {&a, &b}) {
        best = std::max(best, probe(*c, it.sign));
        const double cb = bound_of(*c, it.sign);
        if (cb > best) open.push({cb, next++, it.sign, std::move(*c)});
      }
    }
    if (open.empty()) ub = best;
    out.component[i] = ub;
    out.value = std::max(out.value, ub);
  }
  return out;
}

}  // namespace mindsis

#pragma once

// Mixed-integer linear programming: a two-phase bounded-variable primal
// simplex on a dense tableau, and best-first branch and bound over binary
// variables on top of it.

#include "mindsis/common.hpp"

#include <chrono>
#include <functional>
#include <optional>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace mindsis::milp {

enum class VarKind { Continuous, Binary };
enum class Sense { LessEqual, Equal, GreaterEqual };

enum class SolveStatus { Optimal, Infeasible, Unbounded, GapLimit, NodeLimit, TimeLimit, NumericalFailure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::GapLimit: return "gap_limit";
    case SolveStatus::NodeLimit: return "node_limit";
    case SolveStatus::TimeLimit: return "time_limit";
    case SolveStatus::NumericalFailure: return "numerical_failure";
  }
  return "?";
}

struct Variable {
  std::string name;
  double lower = 0.0;
  double upper = kInf;
  VarKind kind = VarKind::Continuous;
};

struct Term {
  int var;
  double coef;
};

struct Constraint {
  std::vector<Term> terms;
  Sense sense = Sense::LessEqual;
  double rhs = 0.0;
  std::string name;
};

// Minimization problem. Immutable once handed to a solver.
class MilpProblem {
 public:
  int add_variable(std::string name, double lower, double upper, VarKind kind = VarKind::Continuous) {
    if (std::isnan(lower) || std::isnan(upper)) throw InputError("milp: NaN bound on " + name);
    if (kind == VarKind::Binary && (lower < 0.0 || upper > 1.0))
      throw InputError("milp: binary variable " + name + " must have bounds within [0, 1]");
    vars_.push_back({std::move(name), lower, upper, kind});
    objective_.push_back(0.0);
    return static_cast<int>(vars_.size()) - 1;
  }

  int add_binary(std::string name) { return add_variable(std::move(name), 0.0, 1.0, VarKind::Binary); }

  void add_constraint(std::vector<Term> terms, Sense sense, double rhs, std::string name = {}) {
    if (!std::isfinite(rhs)) throw InputError("milp: non-finite rhs in constraint " + name);
    std::vector<Term> merged;
    for (const auto& t : terms) {
      if (t.var < 0 || t.var >= variable_count())
        throw InputError("milp: constraint " + name + " references undeclared variable " + std::to_string(t.var));
      if (!std::isfinite(t.coef)) throw InputError("milp: non-finite coefficient in constraint " + name);
      if (t.coef == 0.0) continue;
      auto it = std::find_if(merged.begin(), merged.end(), [&](const Term& m) { return m.var == t.var; });
      if (it == merged.end())
        merged.push_back(t);
      else
        it->coef += t.coef;
    }
    if (name.empty()) name = "c" + std::to_string(rows_.size());
    rows_.push_back({std::move(merged), sense, rhs, std::move(name)});
  }

  void set_objective_coef(int var, double coef) {
    if (var < 0 || var >= variable_count()) throw InputError("milp: objective references undeclared variable");
    objective_[static_cast<std::size_t>(var)] = coef;
  }

  void clear_objective() {
    std::fill(objective_.begin(), objective_.end(), 0.0);
    objective_constant_ = 0.0;
  }

  void set_objective_constant(double c) { objective_constant_ = c; }

  void set_bounds(int var, double lower, double upper) {
    auto& v = vars_.at(static_cast<std::size_t>(var));
    v.lower = lower;
    v.upper = upper;
  }

  int variable_count() const { return static_cast<int>(vars_.size()); }
  int constraint_count() const { return static_cast<int>(rows_.size()); }
  const std::vector<Variable>& variables() const { return vars_; }
  const Variable& variable(int i) const { return vars_.at(static_cast<std::size_t>(i)); }
  const std::vector<Constraint>& constraints() const { return rows_; }
  const std::vector<double>& objective() const { return objective_; }
  double objective_constant() const { return objective_constant_; }

  std::vector<int> binary_indices() const {
    std::vector<int> out;
    for (int i = 0; i < variable_count(); ++i)
      if (vars_[static_cast<std::size_t>(i)].kind == VarKind::Binary) out.push_back(i);
    return out;
  }

  double evaluate_objective(std::span<const double> x) const {
    double v = objective_constant_;
    for (std::size_t i = 0; i < objective_.size(); ++i) v += objective_[i] * x[i];
    return v;
  }

  double row_activity(const Constraint& c, std::span<const double> x) const {
    double a = 0.0;
    for (const auto& t : c.terms) a += t.coef * x[static_cast<std::size_t>(t.var)];
    return a;
  }

  // Largest violation of any row or bound, each scaled by max(1, |rhs|).
  double max_violation(std::span<const double> x) const {
    double worst = 0.0;
    for (std::size_t j = 0; j < vars_.size(); ++j) {
      worst = std::max(worst, (vars_[j].lower - x[j]) / std::max(1.0, std::abs(vars_[j].lower)));
      worst = std::max(worst, (x[j] - vars_[j].upper) / std::max(1.0, std::abs(vars_[j].upper)));
    }
    for (const auto& c : rows_) {
      const double a = row_activity(c, x);
      const double s = std::max(1.0, std::abs(c.rhs));
      if (c.sense != Sense::GreaterEqual) worst = std::max(worst, (a - c.rhs) / s);
      if (c.sense != Sense::LessEqual) worst = std::max(worst, (c.rhs - a) / s);
    }
    return worst;
  }

  void validate() const {
    for (const auto& v : vars_) {
      if (v.lower > v.upper) throw InputError("milp: variable " + v.name + " has lower > upper");
      if (v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0))
        throw InputError("milp: binary variable " + v.name + " has bounds outside [0, 1]");
    }
    for (const auto& c : rows_) {
      if (!std::isfinite(c.rhs)) throw InputError("milp: non-finite rhs in " + c.name);
      for (const auto& t : c.terms)
        if (t.var < 0 || t.var >= variable_count()) throw InputError("milp: bad variable index in " + c.name);
    }
  }

  // Human-readable dump in CPLEX LP style, for diffing against other solvers.
  std::string to_lp_text() const {
    std::ostringstream os;
    os.precision(17);
    auto name = [&](int j) { return vars_[static_cast<std::size_t>(j)].name; };
    auto term = [&](double c, int j, bool first) {
      if (c < 0)
        os << " - " << -c << ' ' << name(j);
      else
        os << (first ? " " : " + ") << c << ' ' << name(j);
    };
    os << "Minimize\n obj:";
    bool first = true;
    for (int j = 0; j < variable_count(); ++j) {
      if (objective_[static_cast<std::size_t>(j)] == 0.0) continue;
      term(objective_[static_cast<std::size_t>(j)], j, first);
      first = false;
    }
    if (objective_constant_ != 0.0) os << " + " << objective_constant_ << " constant";
    if (first) os << " 0";
    os << "\nSubject To\n";
    for (const auto& c : rows_) {
      os << ' ' << c.name << ':';
      bool f = true;
      for (const auto& t : c.terms) {
        term(t.coef, t.var, f);
        f = false;
      }
      if (f) os << " 0";
      os << (c.sense == Sense::LessEqual ? " <= " : c.sense == Sense::Equal ? " = " : " >= ") << c.rhs << '\n';
    }
    os << "Bounds\n";
    for (const auto& v : vars_) os << ' ' << v.lower << " <= " << v.name << " <= " << v.upper << '\n';
    bool any_bin = false;
    for (const auto& v : vars_)
      if (v.kind == VarKind::Binary) {
        if (!any_bin) os << "Binaries\n";
        any_bin = true;
        os << ' ' << v.name << '\n';
      }
    os << "End\n";
    return os.str();
  }

 private:
  std::vector<Variable> vars_;
  std::vector<Constraint> rows_;
  std::vector<double> objective_;
  double objective_constant_ = 0.0;
};

// ---------------------------------------------------------------------------
// LP relaxation

struct LpOptions {
  double feasibility_tol = 1e-7;
  double pivot_tol = 1e-9;
  double optimality_tol = 1e-9;
  long max_iterations = 0;  // 0 = 50 * (rows + columns)
};

struct LpResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  std::vector<double> x;
  double objective = 0.0;
  long iterations = 0;
};

namespace detail {

// Dense tableau simplex. Columns are structural variables, one slack per
// inequality row and artificials for rows whose initial slack is infeasible.
// Nonbasic variables sit at a bound (or at zero when free).
class DenseSimplex {
 public:
  DenseSimplex(const MilpProblem& p, std::span<const double> lower, std::span<const double> upper,
               const LpOptions& opt)
      : p_(p), opt_(opt) {
    build(lower, upper);
  }

  LpResult solve() {
    LpResult res;
    if (infeasible_bounds_) {
      res.status = SolveStatus::Infeasible;
      return res;
    }
    const long cap = opt_.max_iterations > 0 ? opt_.max_iterations : 50L * (m_ + static_cast<long>(cols_.size()) + 10);

    if (has_artificials_) {
      std::vector<double> cost(total_, 0.0);
      for (int j = first_artificial_; j < total_; ++j) cost[static_cast<std::size_t>(j)] = 1.0;
      const auto st = run(cost, cap, res.iterations);
      if (st == SolveStatus::NumericalFailure) return fail(res);
      double infeas = 0.0;
      for (int j = first_artificial_; j < total_; ++j) infeas += x_[static_cast<std::size_t>(j)];
      if (infeas > opt_.feasibility_tol * std::max(1.0, rhs_scale_)) {
        res.status = SolveStatus::Infeasible;
        return res;
      }
      drive_out_artificials();
    }
    std::vector<double> cost(total_, 0.0);
    for (int j = 0; j < n_; ++j) cost[static_cast<std::size_t>(j)] = p_.objective()[static_cast<std::size_t>(j)];
    const auto st = run(cost, cap, res.iterations);
    if (st == SolveStatus::Unbounded) {
      res.status = SolveStatus::Unbounded;
      return res;
    }
    if (st != SolveStatus::Optimal) return fail(res);

    res.x.assign(x_.begin(), x_.begin() + n_);
    // Snap values within tolerance of a bound onto it.
    for (int j = 0; j < n_; ++j) {
      auto& v = res.x[static_cast<std::size_t>(j)];
      v = std::clamp(v, lo_[static_cast<std::size_t>(j)], hi_[static_cast<std::size_t>(j)]);
    }
    if (row_violation(res.x) > 1e-6) return fail(res);
    res.objective = p_.evaluate_objective(res.x);
    res.status = SolveStatus::Optimal;
    return res;
  }

 private:
  enum class State : unsigned char { Basic, AtLower, AtUpper, FreeZero };

  static LpResult fail(LpResult& r) {
    r.status = SolveStatus::NumericalFailure;
    return r;
  }

  double row_violation(const std::vector<double>& x) const {
    double worst = 0.0;
    for (const auto& c : p_.constraints()) {
      const double a = p_.row_activity(c, x);
      // Basic variables may sit up to feasibility_tol outside their bounds,
      // so the residual scales with the row's largest coefficient.
      double s = std::max(1.0, std::abs(c.rhs));
      for (const auto& t : c.terms) s = std::max(s, std::abs(t.coef));
      if (c.sense != Sense::GreaterEqual) worst = std::max(worst, (a - c.rhs) / s);
      if (c.sense != Sense::LessEqual) worst = std::max(worst, (c.rhs - a) / s);
    }
    return worst;
  }

  void build(std::span<const double> lower, std::span<const double> upper) {
    n_ = p_.variable_count();
    m_ = p_.constraint_count();
    const auto& rows = p_.constraints();
    int slacks = 0;
    for (const auto& c : rows)
      if (c.sense != Sense::Equal) ++slacks;
    first_artificial_ = n_ + slacks;
    total_ = first_artificial_ + m_;  // reserve one artificial slot per row

    lo_.assign(static_cast<std::size_t>(total_), 0.0);
    hi_.assign(static_cast<std::size_t>(total_), kInf);
    x_.assign(static_cast<std::size_t>(total_), 0.0);
    state_.assign(static_cast<std::size_t>(total_), State::AtLower);
    for (int j = 0; j < n_; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      lo_[sj] = lower[sj];
      hi_[sj] = upper[sj];
      if (lo_[sj] > hi_[sj] + 1e-12) infeasible_bounds_ = true;
      if (lo_[sj] > hi_[sj]) hi_[sj] = lo_[sj];
      if (std::isfinite(lo_[sj])) {
        x_[sj] = lo_[sj];
        state_[sj] = State::AtLower;
      } else if (std::isfinite(hi_[sj])) {
        x_[sj] = hi_[sj];
        state_[sj] = State::AtUpper;
      } else {
        x_[sj] = 0.0;
        state_[sj] = State::FreeZero;
      }
    }
    // Artificial slots default to fixed at zero; used ones are opened below.
    for (int j = first_artificial_; j < total_; ++j) hi_[static_cast<std::size_t>(j)] = 0.0;

    std::vector<int> slack_of(static_cast<std::size_t>(m_), -1);
    std::vector<double> slack_coef(static_cast<std::size_t>(m_), 0.0);
    {
      int s = n_;
      for (int i = 0; i < m_; ++i) {
        const auto& c = rows[static_cast<std::size_t>(i)];
        if (c.sense == Sense::Equal) continue;
        slack_of[static_cast<std::size_t>(i)] = s;
        slack_coef[static_cast<std::size_t>(i)] = c.sense == Sense::LessEqual ? 1.0 : -1.0;
        ++s;
      }
    }

    // Basis choice per row and the coefficient of the basic column.
    basis_.assign(static_cast<std::size_t>(m_), -1);
    std::vector<double> basic_coef(static_cast<std::size_t>(m_), 1.0);
    for (int i = 0; i < m_; ++i) {
      const auto si = static_cast<std::size_t>(i);
      const auto& c = rows[si];
      rhs_scale_ = std::max(rhs_scale_, std::abs(c.rhs));
      double rho = c.rhs;
      for (const auto& t : c.terms) rho -= t.coef * x_[static_cast<std::size_t>(t.var)];
      const int s = slack_of[si];
      if (s >= 0 && rho / slack_coef[si] >= -opt_.feasibility_tol) {
        basis_[si] = s;
        basic_coef[si] = slack_coef[si];
        x_[static_cast<std::size_t>(s)] = std::max(0.0, rho / slack_coef[si]);
        state_[static_cast<std::size_t>(s)] = State::Basic;
      } else {
        const int a = first_artificial_ + i;
        const double sign = rho >= 0.0 ? 1.0 : -1.0;
        basis_[si] = a;
        basic_coef[si] = sign;
        hi_[static_cast<std::size_t>(a)] = kInf;
        x_[static_cast<std::size_t>(a)] = std::abs(rho);
        state_[static_cast<std::size_t>(a)] = State::Basic;
        art_sign_.push_back({i, sign});
        has_artificials_ = true;
      }
    }

    // Active columns: everything except nonbasic fixed columns.
    cols_.clear();
    for (int j = 0; j < total_; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      if (state_[sj] != State::Basic && lo_[sj] == hi_[sj]) continue;
      cols_.push_back(j);
    }
    width_ = static_cast<int>(cols_.size());
    pos_.assign(static_cast<std::size_t>(total_), -1);
    for (int k = 0; k < width_; ++k) pos_[static_cast<std::size_t>(cols_[static_cast<std::size_t>(k)])] = k;

    t_.assign(static_cast<std::size_t>(m_) * static_cast<std::size_t>(width_), 0.0);
    for (int i = 0; i < m_; ++i) {
      const auto si = static_cast<std::size_t>(i);
      double* row = &t_[si * static_cast<std::size_t>(width_)];
      const double inv = 1.0 / basic_coef[si];
      for (const auto& t : rows[si].terms) {
        const int k = pos_[static_cast<std::size_t>(t.var)];
        if (k >= 0) row[k] += t.coef * inv;
      }
      if (slack_of[si] >= 0) {
        const int k = pos_[static_cast<std::size_t>(slack_of[si])];
        if (k >= 0) row[k] = slack_coef[si] * inv;
      }
      const int ka = pos_[static_cast<std::size_t>(first_artificial_ + i)];
      if (ka >= 0) row[ka] = 1.0;  // artificial coefficient equals its sign, divided by itself
    }
  }

  double* row(int i) { return &t_[static_cast<std::size_t>(i) * static_cast<std::size_t>(width_)]; }

  void pivot(int r, int k) {
    double* pr = row(r);
    const double inv = 1.0 / pr[k];
    for (int c = 0; c < width_; ++c) pr[c] *= inv;
    pr[k] = 1.0;
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* pi = row(i);
      const double f = pi[k];
      if (f == 0.0) continue;
      for (int c = 0; c < width_; ++c) pi[c] -= f * pr[c];
      pi[k] = 0.0;
    }
  }

  void reduced_costs(const std::vector<double>& cost, std::vector<double>& d) {
    d.assign(static_cast<std::size_t>(width_), 0.0);
    for (int k = 0; k < width_; ++k) d[static_cast<std::size_t>(k)] = cost[static_cast<std::size_t>(cols_[static_cast<std::size_t>(k)])];
    for (int i = 0; i < m_; ++i) {
      const double cb = cost[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])];
      if (cb == 0.0) continue;
      const double* pi = row(i);
      for (int k = 0; k < width_; ++k) d[static_cast<std::size_t>(k)] -= cb * pi[k];
    }
  }

  SolveStatus run(const std::vector<double>& cost, long cap, long& iterations) {
    std::vector<double> d;
    reduced_costs(cost, d);
    const long bland_after = 5L * (m_ + width_);
    long local = 0;
    int rechecks = 0;
    while (true) {
      if (++iterations > cap) return SolveStatus::NumericalFailure;
      const bool bland = ++local > bland_after;

      int enter = -1;
      double dir = 0.0, best = 0.0;
      for (int k = 0; k < width_; ++k) {
        const int j = cols_[static_cast<std::size_t>(k)];
        const auto sj = static_cast<std::size_t>(j);
        const State s = state_[sj];
        if (s == State::Basic || lo_[sj] == hi_[sj]) continue;
        const double dk = d[static_cast<std::size_t>(k)];
        double score = 0.0, sdir = 0.0;
        if ((s == State::AtLower || s == State::FreeZero) && dk < -opt_.optimality_tol) {
          score = -dk;
          sdir = 1.0;
        } else if ((s == State::AtUpper || s == State::FreeZero) && dk > opt_.optimality_tol) {
          score = dk;
          sdir = -1.0;
        }
        if (sdir == 0.0) continue;
        if (bland) {
          enter = k;
          dir = sdir;
          break;
        }
        if (score > best) {
          best = score;
          enter = k;
          dir = sdir;
        }
      }
      if (enter < 0) {
        // Guard against drift in the incrementally updated reduced costs.
        if (rechecks++ < 2) {
          std::vector<double> fresh;
          reduced_costs(cost, fresh);
          bool same = true;
          for (int k = 0; k < width_; ++k)
            if (std::abs(fresh[static_cast<std::size_t>(k)] - d[static_cast<std::size_t>(k)]) > 1e-9) same = false;
          d.swap(fresh);
          if (!same) continue;
        }
        return SolveStatus::Optimal;
      }

      const int q = cols_[static_cast<std::size_t>(enter)];
      const auto sq = static_cast<std::size_t>(q);
      const double range = std::isfinite(lo_[sq]) && std::isfinite(hi_[sq]) ? hi_[sq] - lo_[sq] : kInf;
      // Exact step to the bound of the basic variable in row i (or infinity).
      auto ratio = [&](int i, double alpha, double slack) {
        const auto b = static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)]);
        if (alpha > 0.0) return std::isfinite(lo_[b]) ? (std::max(0.0, x_[b] - lo_[b]) + slack) / alpha : kInf;
        return std::isfinite(hi_[b]) ? (std::max(0.0, hi_[b] - x_[b]) + slack) / -alpha : kInf;
      };
      int leave = -1;
      double leave_alpha = 0.0, theta = kInf;
      if (bland) {
        for (int i = 0; i < m_; ++i) {
          const double alpha = dir * row(i)[enter];
          if (std::abs(alpha) <= opt_.pivot_tol) continue;
          const double t = ratio(i, alpha, 0.0);
          if (t < theta - 1e-12 ||
              (t <= theta + 1e-12 && leave >= 0 &&
               basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)])) {
            theta = std::min(theta, t);
            leave = i;
            leave_alpha = alpha;
          }
        }
      } else {
        // Two passes: the largest step allowed with bounds relaxed by the
        // feasibility tolerance, then the largest pivot among rows that block
        // within it.
        double relaxed = kInf;
        for (int i = 0; i < m_; ++i) {
          const double alpha = dir * row(i)[enter];
          if (std::abs(alpha) <= opt_.pivot_tol) continue;
          relaxed = std::min(relaxed, ratio(i, alpha, opt_.feasibility_tol));
        }
        if (std::isfinite(relaxed)) {
          for (int i = 0; i < m_; ++i) {
            const double alpha = dir * row(i)[enter];
            if (std::abs(alpha) <= opt_.pivot_tol) continue;
            const double t = ratio(i, alpha, 0.0);
            if (t <= relaxed && std::abs(alpha) > std::abs(leave_alpha)) {
              leave = i;
              leave_alpha = alpha;
              theta = t;
            }
          }
        }
      }
      if (range <= theta) {
        leave = -1;
        theta = range;
      }
      if (!std::isfinite(theta)) return SolveStatus::Unbounded;

      // Move along the edge.
      for (int i = 0; i < m_; ++i) {
        const double a = row(i)[enter];
        if (a != 0.0) x_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(i)])] -= theta * dir * a;
      }
      x_[sq] += theta * dir;

      if (leave < 0) {
        if (dir > 0) {
          x_[sq] = hi_[sq];
          state_[sq] = State::AtUpper;
        } else {
          x_[sq] = lo_[sq];
          state_[sq] = State::AtLower;
        }
        continue;
      }

      const auto lb = static_cast<std::size_t>(basis_[static_cast<std::size_t>(leave)]);
      if (leave_alpha > 0.0) {
        x_[lb] = lo_[lb];
        state_[lb] = State::AtLower;
      } else {
        x_[lb] = hi_[lb];
        state_[lb] = State::AtUpper;
      }
      basis_[static_cast<std::size_t>(leave)] = q;
      state_[sq] = State::Basic;
      pivot(leave, enter);
      const double dq = d[static_cast<std::size_t>(enter)];
      if (dq != 0.0) {
        const double* pr = row(leave);
        for (int k = 0; k < width_; ++k) d[static_cast<std::size_t>(k)] -= dq * pr[k];
        d[static_cast<std::size_t>(enter)] = 0.0;
      }
    }
  }

  void drive_out_artificials() {
    for (int i = 0; i < m_; ++i) {
      const int b = basis_[static_cast<std::size_t>(i)];
      if (b < first_artificial_) continue;
      const double* pi = row(i);
      int best = -1;
      double mag = 1e-7;
      for (int k = 0; k < width_; ++k) {
        const int j = cols_[static_cast<std::size_t>(k)];
        const auto sj = static_cast<std::size_t>(j);
        if (j >= first_artificial_ || state_[sj] == State::Basic || lo_[sj] == hi_[sj]) continue;
        if (std::abs(pi[k]) > mag) {
          mag = std::abs(pi[k]);
          best = k;
        }
      }
      if (best >= 0) {
        const int q = cols_[static_cast<std::size_t>(best)];
        basis_[static_cast<std::size_t>(i)] = q;
        state_[static_cast<std::size_t>(q)] = State::Basic;
        state_[static_cast<std::size_t>(b)] = State::AtLower;
        x_[static_cast<std::size_t>(b)] = 0.0;
        pivot(i, best);
      }
    }
    // Close every artificial at zero; basic ones remain on redundant rows.
    for (int j = first_artificial_; j < total_; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      lo_[sj] = 0.0;
      hi_[sj] = 0.0;
      if (state_[sj] != State::Basic) x_[sj] = 0.0;
    }
    compact();
  }

  // Drop nonbasic fixed columns from the tableau.
  void compact() {
    std::vector<int> keep;
    for (int k = 0; k < width_; ++k) {
      const int j = cols_[static_cast<std::size_t>(k)];
      const auto sj = static_cast<std::size_t>(j);
      if (state_[sj] != State::Basic && lo_[sj] == hi_[sj]) continue;
      keep.push_back(k);
    }
    if (static_cast<int>(keep.size()) == width_) return;
    const int w = static_cast<int>(keep.size());
    std::vector<double> nt(static_cast<std::size_t>(m_) * static_cast<std::size_t>(w));
    for (int i = 0; i < m_; ++i) {
      const double* pi = row(i);
      for (int c = 0; c < w; ++c)
        nt[static_cast<std::size_t>(i) * static_cast<std::size_t>(w) + static_cast<std::size_t>(c)] =
            pi[keep[static_cast<std::size_t>(c)]];
    }
    std::vector<int> ncols(static_cast<std::size_t>(w));
    for (int c = 0; c < w; ++c) ncols[static_cast<std::size_t>(c)] = cols_[static_cast<std::size_t>(keep[static_cast<std::size_t>(c)])];
    t_.swap(nt);
    cols_.swap(ncols);
    width_ = w;
  }

  const MilpProblem& p_;
  LpOptions opt_;
  int n_ = 0, m_ = 0, total_ = 0, first_artificial_ = 0, width_ = 0;
  bool has_artificials_ = false;
  bool infeasible_bounds_ = false;
  double rhs_scale_ = 0.0;
  std::vector<double> lo_, hi_, x_;
  std::vector<State> state_;
  std::vector<int> basis_, cols_, pos_;
  std::vector<std::pair<int, double>> art_sign_;
  std::vector<double> t_;
};

}  // namespace detail

// Solves the LP relaxation (integrality ignored) with explicit bounds.
inline LpResult solve_lp(const MilpProblem& p, std::span<const double> lower, std::span<const double> upper,
                         const LpOptions& opt = {}) {
  if (lower.size() != static_cast<std::size_t>(p.variable_count()) ||
      upper.size() != static_cast<std::size_t>(p.variable_count()))
    throw InputError("solve_lp: bound vectors do not match the variable count");
  detail::DenseSimplex s(p, lower, upper, opt);
  LpResult r = s.solve();
  // A breakdown is usually a poor pivot; retry with stricter pivot acceptance.
  long spent = r.iterations;
  for (double tol : {1e-7, 1e-5}) {
    if (r.status != SolveStatus::NumericalFailure || tol <= opt.pivot_tol) break;
    LpOptions o = opt;
    o.pivot_tol = tol;
    detail::DenseSimplex retry(p, lower, upper, o);
    r = retry.solve();
    spent += r.iterations;
  }
  r.iterations = spent;
  return r;
}

inline LpResult solve_lp(const MilpProblem& p, const LpOptions& opt = {}) {
  p.validate();
  std::vector<double> lo, hi;
  for (const auto& v : p.variables()) {
    lo.push_back(v.lower);
    hi.push_back(v.upper);
  }
  return solve_lp(p, lo, hi, opt);
}

// ---------------------------------------------------------------------------
// Branch and bound

struct MilpProgress {
  long nodes = 0;
  double incumbent = kInf;
  double best_bound = -kInf;
  const std::vector<double>* x = nullptr;
};

struct MilpOptions {
  double gap_abs = 1e-9;
  double gap_rel = 1e-9;
  // Anytime stop: return GapLimit once the absolute gap falls below this
  // value (0 disables).
  double stop_gap_abs = 0.0;
  long node_limit = 1'000'000;
  double time_limit = kInf;  // seconds
  double integrality_tol = 1e-6;
  double feasibility_tol = 1e-7;
  LpOptions lp;
  // Called on every new incumbent.
  std::function<void(const MilpProgress&)> anytime_callback;
  // Optional primal heuristic: maps a node's relaxation solution to a
  // candidate assignment. Candidates are verified before acceptance.
  std::function<std::optional<std::vector<double>>(const std::vector<double>&)> heuristic;
  bool record_bound_history = false;
};

struct MilpSolution {
  SolveStatus status = SolveStatus::Infeasible;
  std::vector<double> x;
  double objective = kInf;
  double best_bound = -kInf;
  double gap = kInf;
  long nodes = 0;
  long lp_iterations = 0;
  long heuristic_incumbents = 0;
  bool has_incumbent = false;
  std::vector<double> bound_history;
};

namespace detail {

struct Node {
  long id;
  int depth;
  double bound;
  std::vector<std::pair<int, double>> fixes;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    // priority_queue pops the "largest"; invert for best-first.
    if (a.bound != b.bound) return a.bound > b.bound;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.id > b.id;
  }
};

}  // namespace detail

inline MilpSolution solve_milp(const MilpProblem& p, const MilpOptions& opt = {}) {
  p.validate();
  if (p.variable_count() == 0) throw InputError("solve_milp: problem has no variables");
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();

  MilpSolution sol;
  std::vector<double> base_lo, base_hi;
  for (const auto& v : p.variables()) {
    double lo = v.lower, hi = v.upper;
    if (v.kind == VarKind::Binary) {
      lo = std::max(0.0, std::ceil(lo - 1e-9));
      hi = std::min(1.0, std::floor(hi + 1e-9));
    }
    base_lo.push_back(lo);
    base_hi.push_back(hi);
  }
  // Binaries fixed by their bounds never enter the branching set.
  std::vector<int> free_binaries;
  for (int j : p.binary_indices()) {
    const auto sj = static_cast<std::size_t>(j);
    if (base_lo[sj] > base_hi[sj]) {
      sol.status = SolveStatus::Infeasible;
      return sol;
    }
    if (base_lo[sj] < base_hi[sj]) free_binaries.push_back(j);
  }

  auto tolerance = [&](double inc) { return std::max(opt.gap_abs, opt.gap_rel * std::abs(inc)); };

  auto accept = [&](std::vector<double> x, double obj, bool from_heuristic) {
    if (sol.has_incumbent && obj >= sol.objective - 1e-12) return;
    sol.x = std::move(x);
    sol.objective = obj;
    sol.has_incumbent = true;
    if (from_heuristic) ++sol.heuristic_incumbents;
    if (opt.anytime_callback) opt.anytime_callback({sol.nodes, sol.objective, sol.best_bound, &sol.x});
  };

  auto verify = [&](const std::vector<double>& x) {
    if (x.size() != static_cast<std::size_t>(p.variable_count())) return false;
    for (int j : p.binary_indices()) {
      const double v = x[static_cast<std::size_t>(j)];
      if (std::abs(v - std::round(v)) > opt.integrality_tol) return false;
    }
    return p.max_violation(x) <= opt.feasibility_tol;
  };

  // Re-solve with binaries fixed at their rounded values for a clean point.
  auto polish = [&](const std::vector<double>& x) -> std::optional<std::pair<std::vector<double>, double>> {
    if (free_binaries.empty()) return std::make_pair(x, p.evaluate_objective(x));
    std::vector<double> lo = base_lo, hi = base_hi;
    for (int j : p.binary_indices()) {
      const auto sj = static_cast<std::size_t>(j);
      lo[sj] = hi[sj] = std::round(x[sj]);
    }
    auto r = solve_lp(p, lo, hi, opt.lp);
    sol.lp_iterations += r.iterations;
    if (r.status == SolveStatus::Optimal && verify(r.x)) return std::make_pair(r.x, r.objective);
    std::vector<double> rounded = x;
    for (int j : p.binary_indices()) rounded[static_cast<std::size_t>(j)] = std::round(x[static_cast<std::size_t>(j)]);
    if (verify(rounded)) return std::make_pair(rounded, p.evaluate_objective(rounded));
    return std::nullopt;
  };

  std::priority_queue<detail::Node, std::vector<detail::Node>, detail::NodeOrder> open;
  long next_id = 0;
  open.push({next_id++, 0, -kInf, {}});
  bool numerical_trouble = false;
  double global_bound = -kInf;

  auto update_bound = [&] {
    double b = open.empty() ? (sol.has_incumbent ? sol.objective : kInf) : open.top().bound;
    if (sol.has_incumbent) b = std::min(b, sol.objective);
    global_bound = std::max(global_bound, b);
    sol.best_bound = global_bound;
    if (opt.record_bound_history) sol.bound_history.push_back(global_bound);
  };

  SolveStatus stop = SolveStatus::Optimal;
  bool stopped = false;
  while (!open.empty()) {
    if (sol.nodes >= opt.node_limit) {
      stop = SolveStatus::NodeLimit;
      stopped = true;
      break;
    }
    if (std::isfinite(opt.time_limit) &&
        std::chrono::duration<double>(clock::now() - t0).count() >= opt.time_limit) {
      stop = SolveStatus::TimeLimit;
      stopped = true;
      break;
    }
    detail::Node node = open.top();
    open.pop();
    if (sol.has_incumbent && node.bound >= sol.objective - tolerance(sol.objective)) {
      // Everything left is at least as bad.
      while (!open.empty()) open.pop();
      break;
    }

    std::vector<double> lo = base_lo, hi = base_hi;
    for (const auto& [j, v] : node.fixes) lo[static_cast<std::size_t>(j)] = hi[static_cast<std::size_t>(j)] = v;
    const LpResult lp = solve_lp(p, lo, hi, opt.lp);
    ++sol.nodes;
    sol.lp_iterations += lp.iterations;

    if (lp.status == SolveStatus::Unbounded) {
      sol.status = SolveStatus::Unbounded;
      return sol;
    }
    if (lp.status == SolveStatus::NumericalFailure) {
      numerical_trouble = true;
      if (node.depth == 0) break;
      update_bound();
      continue;
    }
    if (lp.status == SolveStatus::Infeasible) {
      update_bound();
      continue;
    }
    const double node_bound = std::max(node.bound, lp.objective);
    if (sol.has_incumbent && node_bound >= sol.objective - tolerance(sol.objective)) {
      update_bound();
      continue;
    }

    int branch = -1;
    double frac_best = opt.integrality_tol;
    for (int j : free_binaries) {
      const double v = lp.x[static_cast<std::size_t>(j)];
      const double frac = std::abs(v - std::round(v));
      if (frac > frac_best + 1e-15) {
        frac_best = frac;
        branch = j;
      }
    }

    if (branch < 0) {
      if (auto polished = polish(lp.x)) accept(std::move(polished->first), polished->second, false);
    } else {
      if (opt.heuristic) {
        if (auto cand = opt.heuristic(lp.x); cand && verify(*cand)) {
          if (auto polished = polish(*cand)) accept(std::move(polished->first), polished->second, true);
        }
      }
      const double v = lp.x[static_cast<std::size_t>(branch)];
      const double first = v >= 0.5 ? 1.0 : 0.0;
      for (double val : {first, 1.0 - first}) {
        detail::Node child{next_id++, node.depth + 1, node_bound, node.fixes};
        child.fixes.emplace_back(branch, val);
        open.push(std::move(child));
      }
    }
    update_bound();
    if (sol.has_incumbent) {
      const double gap = sol.objective - global_bound;
      if (gap <= tolerance(sol.objective)) break;
      if (opt.stop_gap_abs > 0.0 && gap <= opt.stop_gap_abs) {
        stop = SolveStatus::GapLimit;
        stopped = true;
        break;
      }
    }
  }

  if (!stopped) {
    // Search finished (or gap closed).
    if (open.empty()) global_bound = sol.has_incumbent ? sol.objective : global_bound;
    sol.best_bound = sol.has_incumbent ? std::min(sol.objective, std::max(global_bound, sol.best_bound)) : global_bound;
  }
  sol.gap = sol.has_incumbent ? std::max(0.0, sol.objective - sol.best_bound) : kInf;

  if (numerical_trouble && !stopped) {
    sol.status = SolveStatus::NumericalFailure;
    return sol;
  }
  if (stopped) {
    sol.status = stop;
    return sol;
  }
  sol.status = sol.has_incumbent ? SolveStatus::Optimal : SolveStatus::Infeasible;
  return sol;
}

}  // namespace mindsis::milp

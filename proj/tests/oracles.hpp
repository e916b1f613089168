#pragma once

// Brute-force reference solvers used only by the tests. They share no code
// with the simplex / branch-and-bound path.

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <vector>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Half-space a.x <= b.
struct HalfSpace {
  Vec a;
  double b;
};

// Every point where n of the given hyperplanes meet and all half-spaces hold.
// `planes` may contain extra hyperplanes (e.g. kinks of a piecewise-linear
// objective) that are intersected but not enforced.
inline std::vector<Vec> candidate_points(int n, const std::vector<HalfSpace>& cons, const std::vector<HalfSpace>& planes,
                                         double tol = 1e-9) {
  std::vector<HalfSpace> all = cons;
  all.insert(all.end(), planes.begin(), planes.end());
  const int k = static_cast<int>(all.size());
  std::vector<Vec> out;
  std::vector<int> pick(static_cast<std::size_t>(n));
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == n) {
      Mat m(n, n);
      Vec r(n);
      for (int i = 0; i < n; ++i) {
        m.row(i) = all[static_cast<std::size_t>(pick[static_cast<std::size_t>(i)])].a.transpose();
        r[i] = all[static_cast<std::size_t>(pick[static_cast<std::size_t>(i)])].b;
      }
      Eigen::FullPivLU<Mat> lu(m);
      if (!lu.isInvertible()) return;
      Vec x = lu.solve(r);
      for (const auto& h : cons)
        if (h.a.dot(x) > h.b + tol * (1.0 + std::abs(h.b))) return;
      out.push_back(x);
      return;
    }
    for (int i = start; i < k; ++i) {
      pick[static_cast<std::size_t>(depth)] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return out;
}

// min c.x over a bounded polytope; +inf when empty.
inline double lp_min(const Vec& c, const std::vector<HalfSpace>& cons) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& x : candidate_points(static_cast<int>(c.size()), cons, {})) best = std::min(best, c.dot(x));
  return best;
}

}  // namespace oracle

#pragma once

// Interval propagation of an input box through a ReLU network.

#include "mindsis/nn_model.hpp"

#include <string>
#include <vector>

namespace mindsis {

struct Box {
  Vec lower;
  Vec upper;

  Box() = default;
  Box(Vec lo, Vec hi) : lower(std::move(lo)), upper(std::move(hi)) { validate(); }

  static Box point(const Vec& p) { return Box(p, p); }

  static Box cartesian(const Box& a, const Box& b) {
    Vec lo(a.dim() + b.dim()), hi(a.dim() + b.dim());
    lo << a.lower, b.lower;
    hi << a.upper, b.upper;
    return Box(lo, hi);
  }

  Eigen::Index dim() const { return lower.size(); }
  Vec center() const { return 0.5 * (lower + upper); }
  Vec width() const { return upper - lower; }

  bool contains(const Vec& p, double tol = 0.0) const {
    return p.size() == dim() && (p.array() >= lower.array() - tol).all() && (p.array() <= upper.array() + tol).all();
  }

  Vec clamp(const Vec& p) const { return p.cwiseMax(lower).cwiseMin(upper); }

  Vec sample(Rng& rng) const {
    Vec p(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) p[i] = rng.uniform(lower[i], upper[i]);
    return p;
  }

  void validate() const {
    if (lower.size() != upper.size()) throw InputError("box: bound dimensions differ");
    if (!lower.allFinite() || !upper.allFinite()) throw InputError("box: bounds must be finite");
    if ((lower.array() > upper.array()).any()) throw InputError("box: lower bound exceeds upper bound");
  }
};

enum class ActivationStatus { AlwaysActive, AlwaysInactive, Unstable };

inline const char* to_string(ActivationStatus s) {
  switch (s) {
    case ActivationStatus::AlwaysActive: return "always_active";
    case ActivationStatus::AlwaysInactive: return "always_inactive";
    case ActivationStatus::Unstable: return "unstable";
  }
  return "?";
}

inline ActivationStatus classify(double pre_lower, double pre_upper) {
  if (pre_upper <= 0.0) return ActivationStatus::AlwaysInactive;
  if (pre_lower >= 0.0) return ActivationStatus::AlwaysActive;
  return ActivationStatus::Unstable;
}

struct LayerBounds {
  Vec pre_lower, pre_upper;
  Vec post_lower, post_upper;
};

// Per-node bounds for every layer. The last layer is the (linear) output.
struct BoundsTensor {
  std::vector<LayerBounds> layers;

  std::size_t layer_count() const { return layers.size(); }

  // Unstable ReLUs over hidden layers; these are the nodes needing a binary.
  std::size_t unstable_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
      for (Eigen::Index j = 0; j < layers[i].pre_lower.size(); ++j)
        if (classify(layers[i].pre_lower[j], layers[i].pre_upper[j]) == ActivationStatus::Unstable) ++n;
    return n;
  }
};

// Sum over a row of [min(w*l, w*u), max(w*l, w*u)], padded outward by a few
// ulps of the magnitude so the interval stays sound under rounding of the
// forward pass.
inline BoundsTensor propagate(const MlpNetwork& net, const Box& input) {
  if (input.dim() != net.input_dim())
    throw InputError("propagate: input box has dimension " + std::to_string(input.dim()) + ", network expects " +
                     std::to_string(net.input_dim()));
  constexpr double pad = 8.0 * std::numeric_limits<double>::epsilon();
  BoundsTensor out;
  Vec lo = input.lower, hi = input.upper;
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Mat& w = layers[i].weights;
    const Vec& b = layers[i].bias;
    LayerBounds lb;
    lb.pre_lower.resize(w.rows());
    lb.pre_upper.resize(w.rows());
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      double sl = b[r], su = b[r], mag = std::abs(b[r]);
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        const double a = w(r, c) * lo[c], e = w(r, c) * hi[c];
        sl += std::min(a, e);
        su += std::max(a, e);
        mag += std::max(std::abs(a), std::abs(e));
      }
      lb.pre_lower[r] = sl - pad * mag;
      lb.pre_upper[r] = su + pad * mag;
      // A pure-bias node (all contributing weights zero) is exact.
      if (mag == std::abs(b[r])) lb.pre_lower[r] = lb.pre_upper[r] = b[r];
    }
    if (i + 1 < layers.size()) {
      lb.post_lower = lb.pre_lower.cwiseMax(0.0);
      lb.post_upper = lb.pre_upper.cwiseMax(0.0);
    } else {
      lb.post_lower = lb.pre_lower;
      lb.post_upper = lb.pre_upper;
    }
    lo = lb.post_lower;
    hi = lb.post_upper;
    out.layers.push_back(std::move(lb));
  }
  return out;
}

// Bounds from a backward linear relaxation (CROWN style), intersected with
// the interval bounds. An unstable ReLU with pre-activation in [l, u] is
// bounded above by u (z - l) / (u - l) and below by a z, a = 1 if u > -l else 0.
// Each bound is padded by 1e-10 of its magnitude against rounding.
inline BoundsTensor propagate_linear(const MlpNetwork& net, const Box& input) {
  BoundsTensor out = propagate(net, input);
  const auto& layers = net.layers();
  const std::size_t n_layers = layers.size();
  std::vector<Vec> up_slope(n_layers), up_icpt(n_layers), lo_slope(n_layers);
  auto relax = [&](std::size_t k) {
    const auto& lb = out.layers[k];
    const Eigen::Index n = lb.pre_lower.size();
    up_slope[k] = Vec::Zero(n);
    up_icpt[k] = Vec::Zero(n);
    lo_slope[k] = Vec::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double l = lb.pre_lower[j], u = lb.pre_upper[j];
      if (u <= 0.0) continue;
      if (l >= 0.0) {
        up_slope[k][j] = lo_slope[k][j] = 1.0;
        continue;
      }
      const double s = u / (u - l);
      up_slope[k][j] = s;
      up_icpt[k][j] = -s * l;
      lo_slope[k][j] = u > -l ? 1.0 : 0.0;
    }
  };
  const Vec in_mag = input.lower.cwiseAbs().cwiseMax(input.upper.cwiseAbs());
  for (std::size_t m = 1; m < n_layers; ++m) {
    relax(m - 1);
    auto& target = out.layers[m];
    for (double sign : {1.0, -1.0}) {
      Mat A = sign * layers[m].weights;
      Vec c = sign * layers[m].bias;
      Vec c_abs = layers[m].bias.cwiseAbs();
      for (std::size_t k = m; k-- > 0;) {
        for (Eigen::Index j = 0; j < A.cols(); ++j)
          for (Eigen::Index r = 0; r < A.rows(); ++r) {
            const double a = A(r, j);
            if (a >= 0.0) {
              A(r, j) = a * up_slope[k][j];
              c[r] += a * up_icpt[k][j];
              c_abs[r] += std::abs(a * up_icpt[k][j]);
            } else {
              A(r, j) = a * lo_slope[k][j];
            }
          }
        c += A * layers[k].bias;
        c_abs += A.cwiseAbs() * layers[k].bias.cwiseAbs();
        A = A * layers[k].weights;
      }
      for (Eigen::Index r = 0; r < A.rows(); ++r) {
        double v = c[r], mag = c_abs[r];
        for (Eigen::Index i = 0; i < A.cols(); ++i) {
          v += std::max(A(r, i) * input.lower[i], A(r, i) * input.upper[i]);
          mag += std::abs(A(r, i)) * in_mag[i];
        }
        const double bound = v + 1e-10 * (1.0 + mag);
        if (sign > 0) target.pre_upper[r] = std::min(target.pre_upper[r], bound);
        else target.pre_lower[r] = std::max(target.pre_lower[r], -bound);
      }
    }
    target.pre_lower = target.pre_lower.cwiseMin(target.pre_upper);
    if (m + 1 < n_layers) {
      target.post_lower = target.pre_lower.cwiseMax(0.0);
      target.post_upper = target.pre_upper.cwiseMax(0.0);
    } else {
      target.post_lower = target.pre_lower;
      target.post_upper = target.pre_upper;
    }
  }
  return out;
}

// Status of every hidden node; the output layer is linear and not listed.
inline std::vector<std::vector<ActivationStatus>> activation_status(const BoundsTensor& bounds) {
  std::vector<std::vector<ActivationStatus>> out;
  for (std::size_t i = 0; i + 1 < bounds.layers.size(); ++i) {
    const auto& l = bounds.layers[i];
    std::vector<ActivationStatus> row;
    for (Eigen::Index j = 0; j < l.pre_lower.size(); ++j) row.push_back(classify(l.pre_lower[j], l.pre_upper[j]));
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace mindsis

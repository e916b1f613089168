#include "mindsis/safety_index.hpp"

#include <gtest/gtest.h>

using namespace mindsis;

namespace {

SafetyIndexSpec collision(double d_min = 1.0) {
  SafetyIndexSpec s;
  s.kind = IndexKind::CollisionAvoidance;
  s.d_min = d_min;
  s.obstacles = {Eigen::Vector2d(0, 0)};
  return s;
}

SafetyIndexSpec following() {
  SafetyIndexSpec s;
  s.kind = IndexKind::SafeFollowing;
  s.d_min = 1.0;
  s.d_max = 3.0;
  s.obstacles = {Eigen::Vector2d(0.5, -0.5)};
  s.velocity = Eigen::Vector2d(1.0, 0.2);
  return s;
}

Vec state(double px, double py, double v, double th) { return (Vec(4) << px, py, v, th).finished(); }

Vec random_state(Rng& rng) {
  // Keep clear of the obstacle centres.
  Vec x(4);
  do {
    x << rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 2), rng.uniform(-3.14, 3.14);
  } while (Eigen::Vector2d(x[0], x[1]).norm() < 0.5 || Eigen::Vector2d(x[0] - 0.5, x[1] + 0.5).norm() < 0.5);
  return x;
}

Vec fd_grad(const SafetyIndexSpec& s, const Vec& x, double h) {
  Vec g(4);
  for (int i = 0; i < 4; ++i) {
    Vec a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (phi(s, a) - phi(s, b)) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(Phi0, CollisionBoundaryAndArithmetic) {
  const auto s = collision(1.0);
  EXPECT_NEAR(phi0(s, state(1, 0, 0, 0)), 0.0, 1e-15);
  EXPECT_NEAR(phi0(s, state(0, 3, 1, 0)), -2.0, 1e-15);
  EXPECT_GT(phi0(s, state(0.5, 0, 0, 0)), 0.0);
}

TEST(Phi0, FollowingMidpoint) {
  auto s = following();
  s.obstacles = {Eigen::Vector2d(0, 0)};
  EXPECT_NEAR(phi0(s, state(2, 0, 0, 0)), -1.0, 1e-15);
}

TEST(Phi0, MultiObstacleTakesWorst) {
  auto s = collision(1.0);
  s.obstacles.push_back(Eigen::Vector2d(5, 0));
  EXPECT_NEAR(phi0(s, state(4.5, 0, 0, 0)), 0.5, 1e-15);
}

TEST(Phi0, DegenerateGeometry) {
  EXPECT_THROW(phi0(collision(), state(0, 0, 1, 0)), DegenerateGeometry);
  EXPECT_THROW(grad_phi(collision(), state(0, 0, 1, 0)), DegenerateGeometry);
}

TEST(Phi, ParameterDegeneracyGivesPhi0) {
  auto s = collision(1.3);
  s.params = {1.0, 0.0, 0.0, 0.01};
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Vec x = random_state(rng);
    EXPECT_NEAR(phi(s, x), phi0(s, x), 1e-14);
  }
}

TEST(Phi, StationaryArithmetic) {
  auto s = collision(1.0);
  s.params = {2.0, 1.0, 0.1, 0.01};
  EXPECT_NEAR(phi(s, state(0, 2, 0, 0)), -2.9, 1e-14);
}

TEST(Phi, FollowingBoundaryLeavesBeta) {
  auto s = following();
  s.velocity.setZero();
  s.obstacles = {Eigen::Vector2d(0, 0)};
  s.params = {3.0, 2.0, 0.25, 0.1};
  EXPECT_NEAR(phi(s, state(1, 0, 0, 0)), 0.25, 1e-14);
}

TEST(Phi, SublevelConsistency) {
  for (double a1 : {0.3, 1.0, 2.0, 3.0})
    for (double d = 0.05; d < 5.0; d += 0.05) {
      const double star = std::pow(1.2, a1) - std::pow(d, a1);
      const double base = 1.2 - d;
      if (std::abs(base) < 1e-12) continue;
      EXPECT_EQ(star > 0, base > 0) << a1 << " " << d;
    }
}

TEST(GradPhi, DistanceGradientWhenDegenerate) {
  auto s = collision();
  const auto x = state(3, 4, 1.5, 0.7);
  const Vec g = grad_phi(s, x);
  EXPECT_NEAR(g[0], -0.6, 1e-15);
  EXPECT_NEAR(g[1], -0.8, 1e-15);
  EXPECT_EQ(g[2], 0.0);
  EXPECT_EQ(g[3], 0.0);
}

TEST(GradPhi, MatchesFiniteDifferences) {
  Rng rng(7);
  for (auto base : {collision(1.0), following()}) {
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      auto s = base;
      s.params = {base.kind == IndexKind::SafeFollowing ? (rng.uniform() < 0.5 ? 1.0 : 3.0) : rng.uniform(0.2, 3.0),
                  rng.uniform(0, 10), rng.uniform(0, 0.5), 0.01};
      const Vec x = random_state(rng);
      const Vec g = grad_phi(s, x), fd = fd_grad(s, x, 1e-6);
      const double scale = std::max(1.0, g.norm());
      worst = std::max(worst, (g - fd).norm() / scale);
    }
    EXPECT_LE(worst, 1e-5) << to_string(base.kind);
  }
}

TEST(GradPhi, MultiObstacleUsesActiveTerm) {
  auto s = collision(1.0);
  s.obstacles.push_back(Eigen::Vector2d(5, 0));
  const Vec g = grad_phi(s, state(4, 0, 0, 0));
  EXPECT_NEAR(g[0], 1.0, 1e-15);
}

TEST(TimeDerivative, MatchesFiniteDifferenceInTime) {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    auto s = following();
    s.params = {3.0, rng.uniform(0, 5), 0.1, 0.1};
    const Vec x = random_state(rng);
    const double h = 1e-6;
    const double fd = (phi(s.advanced(h), x) - phi(s.advanced(-h), x)) / (2 * h);
    const auto terms = phi_terms(s, x);
    EXPECT_NEAR(terms[0].dphi_dt, fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST(ConstraintRhs, Cases) {
  EXPECT_NEAR(constraint_rhs(-1.0, 0.01, 0.1), 10.0, 1e-15);
  EXPECT_NEAR(constraint_rhs(0.5, 0.01, 0.1), -0.01, 1e-15);
  EXPECT_THROW(constraint_rhs(0.5, 0.01, 0.0), InputError);
}

TEST(SafetyMargin, ValueAndEnforcement) {
  EXPECT_NEAR(safety_margin(1.0, 2.0, 0.05), 0.1, 1e-15);
  EXPECT_EQ(safety_margin(1.0, 0.0, 0.05), 0.0);
  auto s = collision();
  s.params.beta = 0.05;
  EXPECT_THROW(s.validate(0.1), ValidationError);
  s.params.beta = 0.1;
  EXPECT_NO_THROW(s.validate(0.1));
}

TEST(Spec, Validation) {
  auto f = following();
  f.params.alpha1 = 2.5;
  EXPECT_THROW(f.validate(), ValidationError);
  f.params.alpha1 = 3;
  f.d_max = 0.5;
  EXPECT_THROW(f.validate(), ValidationError);
  auto c = collision();
  c.obstacles.clear();
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(SafetyRows, OnePerObstacleAndDiscreteCheck) {
  auto s = collision(1.0);
  s.obstacles.push_back(Eigen::Vector2d(5, 0));
  s.params = {1.0, 0.0, 0.0, 0.01};
  const auto x = state(2.5, 0, 1.0, 0.0);
  const auto rows = safety_rows(s, x, 0.1);
  ASSERT_EQ(rows.size(), 2u);
  // Standing still keeps phi0 constant and deep negative: allowed.
  EXPECT_TRUE(satisfies_rows(rows, Vec::Zero(4)));
  EXPECT_TRUE(satisfies_discrete(s, x, Vec::Zero(4), 0.1));
}

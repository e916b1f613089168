#include "mindsis/interval_bounds.hpp"

#include <gtest/gtest.h>

using namespace mindsis;

namespace {

MlpNetwork random_net(int in, const std::vector<int>& hidden, int out, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "bounds-net");
  MlpNetwork base = MlpNetwork::glorot(out, in - out, hidden, rng);
  auto layers = base.layers();
  for (auto& l : layers)
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-0.5, 0.5);
  return MlpNetwork(out, in - out, layers);
}

Box random_box(int dim, Rng& rng) {
  Vec lo(dim), hi(dim);
  for (int i = 0; i < dim; ++i) {
    const double c = rng.uniform(-2, 2), w = rng.uniform(0.0, 2.0);
    lo[i] = c - w;
    hi[i] = c + w;
  }
  return Box(lo, hi);
}

// Count of sampled pre-activations that land outside their interval.
long escapes(const MlpNetwork& net, const Box& box, const BoundsTensor& b, int samples, Rng& rng) {
  long bad = 0;
  const int chunk = 1000;
  for (int s = 0; s < samples; s += chunk) {
    Mat z(net.input_dim(), chunk);
    for (int c = 0; c < chunk; ++c) z.col(c) = box.sample(rng);
    for (int li = 0; li < net.layer_count(); ++li) {
      Mat pre = net.layer(li).weights * z;
      pre.colwise() += net.layer(li).bias;
      const auto& lb = b.layers[static_cast<std::size_t>(li)];
      for (int c = 0; c < chunk; ++c)
        bad += ((pre.col(c).array() < lb.pre_lower.array()) || (pre.col(c).array() > lb.pre_upper.array())).count();
      z = li + 1 < net.layer_count() ? Mat(pre.cwiseMax(0.0)) : pre;
    }
  }
  return bad;
}

}  // namespace

TEST(Propagate, DifferenceOfIntervals) {
  // One node computing x - y over x in [1,2], y in [3,4].
  Mat w(1, 2);
  w << 1.0, -1.0;
  const MlpNetwork net(1, 1, {{w, Vec::Zero(1)}});
  const auto b = propagate(net, Box((Vec(2) << 1, 3).finished(), (Vec(2) << 2, 4).finished()));
  EXPECT_NEAR(b.layers[0].pre_lower[0], -3.0, 1e-12);
  EXPECT_NEAR(b.layers[0].pre_upper[0], -1.0, 1e-12);
}

TEST(Propagate, ZeroWeightsGiveBiasPoint) {
  auto net = MlpNetwork::zeros(4, 2, {8, 8});
  auto layers = net.layers();
  Rng rng(1);
  for (auto& l : layers)
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-1, 1);
  net = MlpNetwork(4, 2, layers);
  const auto b = propagate(net, Box(Vec::Constant(6, -3), Vec::Constant(6, 3)));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    EXPECT_EQ(b.layers[i].pre_lower, layers[i].bias);
    EXPECT_EQ(b.layers[i].pre_upper, layers[i].bias);
  }
}

TEST(Propagate, MonteCarloContainment) {
  const auto net = random_net(6, {16, 16}, 4, 3);
  const Box unit(Vec::Zero(6), Vec::Ones(6));
  Rng rng(3);
  EXPECT_EQ(escapes(net, unit, propagate(net, unit), 100000, rng), 0);
}

TEST(Propagate, SoundnessFuzzUpToFourByHundred) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const std::vector<int> hidden(1 + seed % 3, seed % 2 ? 100 : 40);
    const auto net = random_net(6, hidden, 4, 100 + seed);
    Rng rng(seed);
    const Box box = random_box(6, rng);
    EXPECT_EQ(escapes(net, box, propagate(net, box), 20000, rng), 0) << "seed " << seed;
  }
}

TEST(Propagate, ShrinkingBoxNeverWidens) {
  const auto net = random_net(6, {32, 32, 32}, 4, 5);
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const Box outer = random_box(6, rng);
    Vec a = outer.sample(rng), b = outer.sample(rng);
    const Box inner(a.cwiseMin(b), a.cwiseMax(b));
    const auto bo = propagate(net, outer), bi = propagate(net, inner);
    for (std::size_t i = 0; i < bo.layers.size(); ++i) {
      EXPECT_TRUE((bi.layers[i].pre_lower.array() >= bo.layers[i].pre_lower.array()).all());
      EXPECT_TRUE((bi.layers[i].pre_upper.array() <= bo.layers[i].pre_upper.array()).all());
    }
  }
}

TEST(Propagate, SingleLayerIsTight) {
  const auto net = random_net(6, {}, 4, 9);
  Rng rng(9);
  const Box box = random_box(6, rng);
  const auto b = propagate(net, box);
  const auto& w = net.layer(0).weights;
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    // The extremes of an affine function over a box sit at the corner picked by the weight signs.
    Vec lo_pt(6), hi_pt(6);
    for (Eigen::Index c = 0; c < 6; ++c) {
      lo_pt[c] = w(r, c) >= 0 ? box.lower[c] : box.upper[c];
      hi_pt[c] = w(r, c) >= 0 ? box.upper[c] : box.lower[c];
    }
    const double lo = w.row(r).dot(lo_pt) + net.layer(0).bias[r];
    const double hi = w.row(r).dot(hi_pt) + net.layer(0).bias[r];
    EXPECT_NEAR(b.layers[0].pre_lower[r], lo, 1e-12);
    EXPECT_NEAR(b.layers[0].pre_upper[r], hi, 1e-12);
  }
}

TEST(PropagateLinear, SoundUpToFourByHundred) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const std::vector<int> hidden(1 + seed % 4, seed % 2 ? 100 : 30);
    const auto net = random_net(6, hidden, 4, 200 + seed);
    Rng rng(50 + seed);
    const Box box = random_box(6, rng);
    EXPECT_EQ(escapes(net, box, propagate_linear(net, box), 20000, rng), 0) << "seed " << seed;
  }
}

TEST(PropagateLinear, NeverLooserThanIntervals) {
  const auto net = random_net(6, {32, 32, 32}, 4, 7);
  Rng rng(7);
  double ibp_width = 0.0, lin_width = 0.0;
  for (int t = 0; t < 10; ++t) {
    const Box box = random_box(6, rng);
    const auto a = propagate(net, box), b = propagate_linear(net, box);
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      EXPECT_TRUE((b.layers[i].pre_lower.array() >= a.layers[i].pre_lower.array()).all());
      EXPECT_TRUE((b.layers[i].pre_upper.array() <= a.layers[i].pre_upper.array()).all());
      EXPECT_TRUE((b.layers[i].pre_lower.array() <= b.layers[i].pre_upper.array()).all());
    }
    ibp_width += (a.layers.back().pre_upper - a.layers.back().pre_lower).sum();
    lin_width += (b.layers.back().pre_upper - b.layers.back().pre_lower).sum();
  }
  // Deep layers are where the linear relaxation pays off.
  EXPECT_LT(lin_width, 0.9 * ibp_width);
}

TEST(Propagate, DimensionMismatch) {
  const auto net = random_net(6, {8}, 4, 1);
  EXPECT_THROW(propagate(net, Box(Vec::Zero(5), Vec::Ones(5))), InputError);
}

TEST(Box, Validation) {
  EXPECT_THROW(Box(Vec::Ones(2), Vec::Zero(2)), InputError);
  EXPECT_THROW(Box(Vec::Zero(2), Vec::Constant(2, kInf)), InputError);
}

TEST(ActivationStatus, Rules) {
  EXPECT_EQ(classify(-1.0, -0.1), ActivationStatus::AlwaysInactive);
  EXPECT_EQ(classify(0.0, 5.0), ActivationStatus::AlwaysActive);
  EXPECT_EQ(classify(-1.0, 1.0), ActivationStatus::Unstable);
  EXPECT_EQ(classify(-1.0, 0.0), ActivationStatus::AlwaysInactive);
}

TEST(ActivationStatus, HiddenLayersOnly) {
  const auto net = random_net(6, {8, 8}, 4, 2);
  const auto b = propagate(net, Box(Vec::Constant(6, -1), Vec::Constant(6, 1)));
  const auto s = activation_status(b);
  ASSERT_EQ(s.size(), 2u);
  std::size_t unstable = 0;
  for (const auto& l : s)
    for (auto v : l) unstable += v == ActivationStatus::Unstable;
  EXPECT_EQ(unstable, b.unstable_count());
}

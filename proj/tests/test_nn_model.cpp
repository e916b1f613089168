#include "mindsis/nn_model.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace mindsis;

namespace {

MlpNetwork random_net(int mx, int mu, const std::vector<int>& hidden, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "test-net");
  MlpNetwork base = MlpNetwork::glorot(mx, mu, hidden, rng);
  auto layers = base.layers();
  for (auto& l : layers)
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-0.3, 0.3);
  return MlpNetwork(mx, mu, layers);
}

Dataset make_data(const MlpNetwork& net, int n, std::uint64_t seed, bool from_net = false) {
  Rng rng = Rng::stream(seed, "test-data");
  Dataset d(net.state_dim(), net.control_dim());
  for (int i = 0; i < n; ++i) {
    Vec x(net.state_dim()), u(net.control_dim()), y(net.state_dim());
    for (auto& v : x) v = rng.uniform(-1, 1);
    for (auto& v : u) v = rng.uniform(-1, 1);
    for (auto& v : y) v = rng.uniform(-1, 1);
    d.add(x, u, from_net ? forward(net, x, u) : y);
  }
  return d;
}

// Plain loops, no Eigen products.
std::vector<double> hand_forward(const MlpNetwork& net, std::vector<double> z) {
  for (int li = 0; li < net.layer_count(); ++li) {
    const auto& l = net.layer(li);
    std::vector<double> next(static_cast<std::size_t>(l.bias.size()));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      double s = l.bias[r];
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) s += l.weights(r, c) * z[static_cast<std::size_t>(c)];
      next[static_cast<std::size_t>(r)] = (li + 1 < net.layer_count() && s < 0.0) ? 0.0 : s;
    }
    z = next;
  }
  return z;
}

double power_iteration(const Mat& w, int iters = 500) {
  Vec v = Vec::Ones(w.cols()).normalized();
  double s = 0.0;
  for (int i = 0; i < iters; ++i) {
    Vec wv = w.transpose() * (w * v);
    s = std::sqrt(wv.norm());
    if (wv.norm() == 0.0) return 0.0;
    v = wv.normalized();
  }
  return s;
}

}  // namespace

TEST(Forward, ZeroNet) {
  const auto net = MlpNetwork::zeros(4, 2, {8, 8});
  Vec x = Vec::Constant(4, 3.0), u = Vec::Constant(2, -1.0);
  EXPECT_EQ(forward(net, x, u), Vec::Zero(4));
}

TEST(Forward, ReluClipsNegativeInput) {
  Mat w2 = Mat::Zero(2, 4);
  w2(0, 0) = 1.0;
  w2(1, 1) = 1.0;
  const MlpNetwork net(2, 2, {{Mat::Identity(4, 4), Vec::Zero(4)}, {w2, Vec::Zero(2)}});
  EXPECT_EQ(forward(net, Vec::Constant(2, -1.0), Vec::Constant(2, -1.0)), Vec::Zero(2));
}

TEST(Forward, MatchesHandRolledChain) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto net = random_net(2, 2, {8}, seed);
    Rng rng(seed);
    Vec x(2), u(2);
    x << rng.uniform(-2, 2), rng.uniform(-2, 2);
    u << rng.uniform(-2, 2), rng.uniform(-2, 2);
    const auto expect = hand_forward(net, {x[0], x[1], u[0], u[1]});
    const Vec got = forward(net, x, u);
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(got[i], expect[static_cast<std::size_t>(i)], 1e-14);
  }
}

TEST(Forward, TraceInvariantsAndBatch) {
  const auto net = random_net(4, 2, {16, 16}, 5);
  Rng rng(5);
  Mat batch(6, 20);
  for (Eigen::Index c = 0; c < 20; ++c)
    for (Eigen::Index r = 0; r < 6; ++r) batch(r, c) = rng.uniform(-1, 1);
  const Mat out = forward_batch(net, batch);
  for (Eigen::Index c = 0; c < 20; ++c) {
    const auto t = forward_trace_input(net, batch.col(c));
    for (std::size_t i = 0; i + 1 < t.pre.size(); ++i) EXPECT_EQ(t.post[i], t.pre[i].cwiseMax(0.0));
    EXPECT_EQ(t.post.back(), t.pre.back());
    EXPECT_LE((t.output() - out.col(c)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Forward, DimensionMismatch) {
  const auto net = MlpNetwork::zeros(4, 2, {8});
  EXPECT_THROW(forward(net, Vec::Zero(3), Vec::Zero(2)), InputError);
  EXPECT_THROW(forward(net, Vec::Zero(4), Vec::Zero(1)), InputError);
}

TEST(Forward, FlippingOnePreactivationFlipsOnlyThatNode) {
  const auto net = random_net(2, 2, {12}, 8);
  Vec z0(4);
  z0 << 0.3, -0.4, 0.5, 0.1;
  const auto base = forward_trace_input(net, z0);
  for (Eigen::Index j = 0; j < 12; ++j) {
    auto layers = net.layers();
    // Shift the bias so node j's pre-activation changes sign.
    layers[0].bias[j] -= 2.0 * base.pre[0][j];
    const MlpNetwork flipped(2, 2, layers);
    const auto t = forward_trace_input(flipped, z0);
    for (Eigen::Index k = 0; k < 12; ++k) {
      const bool was = base.pre[0][k] > 0.0, now = t.pre[0][k] > 0.0;
      if (k == j && base.pre[0][k] != 0.0)
        EXPECT_NE(was, now);
      else if (k != j)
        EXPECT_EQ(was, now);
    }
  }
}

TEST(Network, ValidationNamesLayer) {
  std::vector<DenseLayer> layers = {{Mat::Zero(8, 6), Vec::Zero(8)}, {Mat::Zero(4, 7), Vec::Zero(4)}};
  try {
    MlpNetwork(4, 2, layers);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
  layers[1].weights = Mat::Zero(3, 8);
  layers[1].bias = Vec::Zero(3);
  EXPECT_THROW(MlpNetwork(4, 2, layers), InputError);
  layers[1].weights = Mat::Zero(4, 8);
  layers[1].bias = Vec::Zero(4);
  layers[0].weights(0, 0) = std::nan("");
  EXPECT_THROW(MlpNetwork(4, 2, layers), InputError);
}

TEST(Train, SelfGeneratedDataDoesNotGetWorse) {
  const auto net = random_net(4, 2, {16}, 1);
  const auto data = make_data(net, 200, 1, true);
  const double before = mean_squared_error(net, data);
  TrainOptions opt;
  opt.epochs = 20;
  const auto r = train(net, data, opt);
  EXPECT_LE(mean_squared_error(r.net, data), before + 1e-8);
}

TEST(Train, LearnsLinearMap) {
  Rng rng(3);
  Mat A(2, 4);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = rng.uniform(-1, 1);
  Dataset data(2, 2);
  Mat X(400, 5);
  Mat Y(400, 2);
  for (int i = 0; i < 400; ++i) {
    Vec z(4);
    for (auto& v : z) v = rng.uniform(-1, 1);
    data.add(z.head(2), z.tail(2), A * z);
    X.row(i) << z.transpose(), 1.0;
    Y.row(i) = (A * z).transpose();
  }
  // Closed-form least squares reaches (numerically) zero residual.
  const Mat coef = X.colPivHouseholderQr().solve(Y);
  const double ls_mse = (X * coef - Y).squaredNorm() / static_cast<double>(Y.size());
  EXPECT_LT(ls_mse, 1e-20);

  Rng init(4);
  TrainOptions opt;
  opt.epochs = 300;
  opt.learning_rate = 3e-3;
  opt.batch_size = 32;
  const auto r = train(MlpNetwork::glorot(2, 2, {32}, init), data, opt);
  EXPECT_LT(mean_squared_error(r.net, data), 1e-3);
  EXPECT_LT(mean_squared_error(r.net, data), r.epoch_loss.front());
}

TEST(Train, DeterministicGivenSeed) {
  const auto net = random_net(4, 2, {8}, 2);
  const auto data = make_data(net, 100, 2);
  TrainOptions opt;
  opt.epochs = 5;
  opt.seed = 42;
  const auto a = train(net, data, opt), b = train(net, data, opt);
  for (int i = 0; i < a.net.layer_count(); ++i) {
    EXPECT_EQ(a.net.layer(i).weights, b.net.layer(i).weights);
    EXPECT_EQ(a.net.layer(i).bias, b.net.layer(i).bias);
  }
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
}

TEST(Train, Errors) {
  const auto net = random_net(4, 2, {8}, 2);
  EXPECT_THROW(train(net, Dataset(4, 2), {}), InputError);
  Dataset huge(4, 2);
  huge.add(Vec::Constant(4, 1e200), Vec::Constant(2, 1e200), Vec::Constant(4, 1e200));
  TrainOptions opt;
  opt.epochs = 3;
  try {
    train(net, huge, opt);
    FAIL();
  } catch (const TrainingDivergence& e) {
    EXPECT_EQ(e.epoch(), 0);
  }
}

TEST(GradientCheck, ZeroNetZeroData) {
  const auto net = MlpNetwork::zeros(4, 2, {8});
  Dataset data(4, 2);
  data.add(Vec::Zero(4), Vec::Zero(2), Vec::Zero(4));
  EXPECT_EQ(gradient_check(net, data, 1e-5).max_relative_error, 0.0);
}

TEST(GradientCheck, NetsUpToFourByHundred) {
  const std::vector<std::vector<int>> shapes = {{8}, {50, 50}, {100, 100, 100}};
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    const auto net = random_net(4, 2, shapes[s], 10 + s);
    const auto data = make_data(net, 8, 10 + s);
    const auto r = gradient_check(net, data, 1e-5);
    EXPECT_LE(r.max_relative_error, 1e-5) << "shape " << s;
    EXPECT_GT(r.checked, r.skipped);
  }
}

TEST(ModelFile, RoundTripIsByteIdentical) {
  const auto net = random_net(4, 2, {50, 50}, 7);
  std::stringstream a;
  save_model(net, a);
  const auto loaded = load_model(a);
  std::stringstream b;
  save_model(loaded, b);
  EXPECT_EQ(a.str(), b.str());
  for (int i = 0; i < net.layer_count(); ++i) EXPECT_EQ(net.layer(i).weights, loaded.layer(i).weights);
  EXPECT_EQ(loaded.layer_count(), 3);
  EXPECT_EQ(loaded.input_dim(), 6);
  EXPECT_EQ(loaded.state_dim(), 4);
}

TEST(ModelFile, BiasLengthMismatchNamesLayer) {
  const std::string text =
      R"({"m_x": 1, "m_u": 1, "layers": [{"rows": 2, "cols": 2, "weights": [1,2,3,4], "bias": [0,0]},)"
      R"({"rows": 1, "cols": 2, "weights": [1,1], "bias": [0,0]}]})";
  std::istringstream in(text);
  try {
    load_model(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
  std::istringstream bad("{not json");
  EXPECT_THROW(load_model(bad), ParseError);
}

TEST(DatasetCsv, RoundTripAndHeader) {
  const auto net = random_net(4, 2, {8}, 3);
  const auto data = make_data(net, 10, 3);
  std::stringstream s;
  write_dataset_csv(data, s);
  const std::string text = s.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "x0,x1,x2,x3,u0,u1,xdot0,xdot1,xdot2,xdot3");
  const auto back = read_dataset_csv(s);
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back.x(i), data.x(i));
    EXPECT_EQ(back.xdot(i), data.xdot(i));
  }
  std::istringstream bad("x0,u0,xdot0\n1,2\n");
  EXPECT_THROW(read_dataset_csv(bad), ParseError);
}

TEST(Lipschitz, ZeroNet) { EXPECT_EQ(lipschitz_upper_bound(MlpNetwork::zeros(4, 2, {8})), 0.0); }

TEST(Lipschitz, ScaledIdentityMatchesPowerIteration) {
  const Mat w = 2.0 * Mat::Identity(3, 3);
  const MlpNetwork net(2, 1, {{w, Vec::Zero(3)}, {Mat::Identity(2, 3), Vec::Zero(2)}});
  EXPECT_NEAR(spectral_norm(w), power_iteration(w), 1e-12);
  EXPECT_NEAR(lipschitz_upper_bound(net), 2.0, 1e-12);
}

TEST(Lipschitz, BoundsSampledDifferenceQuotients) {
  const auto net = random_net(4, 2, {32, 32}, 12);
  const double k = lipschitz_upper_bound(net);
  for (const auto& l : net.layers()) EXPECT_NEAR(spectral_norm(l.weights), power_iteration(l.weights), 1e-6);
  Rng rng(12);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    Vec a(6), b(6);
    for (int j = 0; j < 6; ++j) {
      a[j] = rng.uniform(-2, 2);
      b[j] = a[j] + rng.uniform(-0.1, 0.1);
    }
    const double q = (forward_trace_input(net, a).output() - forward_trace_input(net, b).output()).norm() / (a - b).norm();
    worst = std::max(worst, q);
  }
  EXPECT_GE(k, worst);
}

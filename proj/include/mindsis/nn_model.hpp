#pragma once

// Feedforward ReLU networks used as dynamics models f(x, u) ~ xdot.
// Hidden layers use ReLU, the output layer is linear.

#include "mindsis/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace mindsis {

struct DenseLayer {
  Mat weights;  // rows = outputs, cols = inputs
  Vec bias;
};

class MlpNetwork {
 public:
  MlpNetwork() = default;

  MlpNetwork(int state_dim, int control_dim, std::vector<DenseLayer> layers)
      : state_dim_(state_dim), control_dim_(control_dim), layers_(std::move(layers)) {
    validate();
  }

  // Network with every weight and bias equal to zero.
  static MlpNetwork zeros(int state_dim, int control_dim, const std::vector<int>& hidden) {
    std::vector<DenseLayer> layers;
    int in = state_dim + control_dim;
    for (int h : hidden) {
      layers.push_back({Mat::Zero(h, in), Vec::Zero(h)});
      in = h;
    }
    layers.push_back({Mat::Zero(state_dim, in), Vec::Zero(state_dim)});
    return MlpNetwork(state_dim, control_dim, std::move(layers));
  }

  // Glorot-uniform weights, zero biases.
  static MlpNetwork glorot(int state_dim, int control_dim, const std::vector<int>& hidden, Rng& rng) {
    MlpNetwork net = zeros(state_dim, control_dim, hidden);
    for (auto& layer : net.layers_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(layer.weights.rows() + layer.weights.cols()));
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = rng.uniform(-limit, limit);
    }
    return net;
  }

  int state_dim() const { return state_dim_; }
  int control_dim() const { return control_dim_; }
  int input_dim() const { return state_dim_ + control_dim_; }
  int layer_count() const { return static_cast<int>(layers_.size()); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  const DenseLayer& layer(int i) const { return layers_.at(static_cast<std::size_t>(i)); }

  std::vector<int> hidden_sizes() const {
    std::vector<int> out;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) out.push_back(static_cast<int>(layers_[i].bias.size()));
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }

 private:
  void validate() const {
    if (state_dim_ <= 0 || control_dim_ < 0) throw InputError("network dimensions must be positive");
    if (layers_.empty()) throw InputError("network needs at least one layer");
    Eigen::Index in = state_dim_ + control_dim_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.weights.cols() != in)
        throw InputError("layer " + std::to_string(i) + ": expected " + std::to_string(in) + " columns, got " +
                         std::to_string(l.weights.cols()));
      if (l.bias.size() != l.weights.rows())
        throw InputError("layer " + std::to_string(i) + ": bias length " + std::to_string(l.bias.size()) +
                         " != rows " + std::to_string(l.weights.rows()));
      if (!l.weights.allFinite() || !l.bias.allFinite())
        throw InputError("layer " + std::to_string(i) + ": non-finite parameter");
      in = l.weights.rows();
    }
    if (in != state_dim_) throw InputError("output dimension must equal state dimension");
  }

  int state_dim_ = 0;
  int control_dim_ = 0;
  std::vector<DenseLayer> layers_;
};

// Pre- and post-activations of every layer for one input.
struct ForwardTrace {
  Vec input;                // z0 = [x, u]
  std::vector<Vec> pre;     // zhat_i, i = 1..n
  std::vector<Vec> post;    // z_i; the last entry equals pre.back()

  const Vec& output() const { return post.back(); }
};

inline Vec join_input(const MlpNetwork& net, const Vec& x, const Vec& u) {
  if (x.size() != net.state_dim() || u.size() != net.control_dim())
    throw InputError("forward: expected state dim " + std::to_string(net.state_dim()) + " and control dim " +
                     std::to_string(net.control_dim()) + ", got " + std::to_string(x.size()) + " and " +
                     std::to_string(u.size()));
  Vec z(net.input_dim());
  z << x, u;
  return z;
}

inline ForwardTrace forward_trace_input(const MlpNetwork& net, const Vec& z0) {
  if (z0.size() != net.input_dim()) throw InputError("forward: input dimension mismatch");
  ForwardTrace trace;
  trace.input = z0;
  Vec z = z0;
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Vec pre = layers[i].weights * z + layers[i].bias;
    trace.pre.push_back(pre);
    z = (i + 1 < layers.size()) ? Vec(pre.cwiseMax(0.0)) : pre;
    trace.post.push_back(z);
  }
  return trace;
}

inline ForwardTrace forward_trace(const MlpNetwork& net, const Vec& x, const Vec& u) {
  return forward_trace_input(net, join_input(net, x, u));
}

inline Vec forward(const MlpNetwork& net, const Vec& x, const Vec& u) { return forward_trace(net, x, u).output(); }

// Column-batched evaluation: inputs is input_dim x N, result is state_dim x N.
inline Mat forward_batch(const MlpNetwork& net, const Mat& inputs) {
  Mat z = inputs;
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Mat pre = layers[i].weights * z;
    pre.colwise() += layers[i].bias;
    z = (i + 1 < layers.size()) ? Mat(pre.cwiseMax(0.0)) : pre;
  }
  return z;
}

// ---------------------------------------------------------------------------
// Dataset

class Dataset {
 public:
  Dataset(int state_dim, int control_dim) : state_dim_(state_dim), control_dim_(control_dim) {
    if (state_dim <= 0 || control_dim < 0) throw InputError("dataset dimensions must be positive");
  }

  void add(const Vec& x, const Vec& u, const Vec& xdot) {
    if (x.size() != state_dim_ || u.size() != control_dim_ || xdot.size() != state_dim_)
      throw InputError("dataset record dimension mismatch");
    xs_.push_back(x);
    us_.push_back(u);
    xdots_.push_back(xdot);
  }

  int state_dim() const { return state_dim_; }
  int control_dim() const { return control_dim_; }
  std::size_t size() const { return xs_.size(); }
  bool empty() const { return xs_.empty(); }
  const Vec& x(std::size_t i) const { return xs_[i]; }
  const Vec& u(std::size_t i) const { return us_[i]; }
  const Vec& xdot(std::size_t i) const { return xdots_[i]; }

  Mat inputs() const {
    Mat m(state_dim_ + control_dim_, static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) {
      m.col(static_cast<Eigen::Index>(i)).head(state_dim_) = xs_[i];
      m.col(static_cast<Eigen::Index>(i)).tail(control_dim_) = us_[i];
    }
    return m;
  }

  Mat targets() const {
    Mat m(state_dim_, static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) m.col(static_cast<Eigen::Index>(i)) = xdots_[i];
    return m;
  }

 private:
  int state_dim_;
  int control_dim_;
  std::vector<Vec> xs_, us_, xdots_;
};

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

inline void write_dataset_csv(const Dataset& data, std::ostream& out) {
  const int mx = data.state_dim(), mu = data.control_dim();
  std::vector<std::string> header;
  for (int i = 0; i < mx; ++i) header.push_back("x" + std::to_string(i));
  for (int i = 0; i < mu; ++i) header.push_back("u" + std::to_string(i));
  for (int i = 0; i < mx; ++i) header.push_back("xdot" + std::to_string(i));
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    bool first = true;
    auto emit = [&](const Vec& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        out << (first ? "" : ",") << detail::fmt17(v[i]);
        first = false;
      }
    };
    emit(data.x(r));
    emit(data.u(r));
    emit(data.xdot(r));
    out << '\n';
  }
}

inline Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("dataset: empty file");
  const auto header = detail::split_csv(line);
  int mx = 0, mu = 0, md = 0;
  for (const auto& h : header) {
    if (h.rfind("xdot", 0) == 0) {
      if (h != "xdot" + std::to_string(md)) throw ParseError("dataset: unexpected column " + h);
      ++md;
    } else if (h.rfind('x', 0) == 0) {
      if (h != "x" + std::to_string(mx) || mu > 0 || md > 0) throw ParseError("dataset: unexpected column " + h);
      ++mx;
    } else if (h.rfind('u', 0) == 0) {
      if (h != "u" + std::to_string(mu) || md > 0) throw ParseError("dataset: unexpected column " + h);
      ++mu;
    } else {
      throw ParseError("dataset: unexpected column " + h);
    }
  }
  if (mx == 0 || md != mx) throw ParseError("dataset: header must list x0.., u0.., xdot0.. with matching state dims");
  Dataset data(mx, mu);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != header.size()) throw ParseError("dataset: row " + std::to_string(row) + " has wrong arity");
    Vec vals(static_cast<Eigen::Index>(cells.size()));
    for (std::size_t i = 0; i < cells.size(); ++i) {
      try {
        std::size_t pos = 0;
        vals[static_cast<Eigen::Index>(i)] = std::stod(cells[i], &pos);
        if (pos != cells[i].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError("dataset: row " + std::to_string(row) + " column " + header[i] + " is not a number");
      }
    }
    data.add(vals.head(mx), vals.segment(mx, mu), vals.tail(mx));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Loss and gradients

struct Gradients {
  std::vector<Mat> weights;
  std::vector<Vec> bias;
};

namespace detail {

// Mean squared error over all samples and output components.
inline double mse_loss(const std::vector<DenseLayer>& layers, const Mat& inputs, const Mat& targets) {
  Mat z = inputs;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Mat pre = layers[i].weights * z;
    pre.colwise() += layers[i].bias;
    z = (i + 1 < layers.size()) ? Mat(pre.cwiseMax(0.0)) : pre;
  }
  if (targets.size() == 0) return 0.0;
  return (z - targets).squaredNorm() / static_cast<double>(targets.size());
}

inline double loss_and_gradient(const std::vector<DenseLayer>& layers, const Mat& inputs, const Mat& targets,
                                Gradients& grad) {
  const std::size_t n = layers.size();
  std::vector<Mat> post(n + 1), pre(n);
  post[0] = inputs;
  for (std::size_t i = 0; i < n; ++i) {
    pre[i] = layers[i].weights * post[i];
    pre[i].colwise() += layers[i].bias;
    post[i + 1] = (i + 1 < n) ? Mat(pre[i].cwiseMax(0.0)) : pre[i];
  }
  grad.weights.resize(n);
  grad.bias.resize(n);
  if (targets.size() == 0) {
    for (std::size_t i = 0; i < n; ++i) {
      grad.weights[i] = Mat::Zero(layers[i].weights.rows(), layers[i].weights.cols());
      grad.bias[i] = Vec::Zero(layers[i].bias.size());
    }
    return 0.0;
  }
  const double scale = 1.0 / static_cast<double>(targets.size());
  Mat diff = post[n] - targets;
  const double loss = diff.squaredNorm() * scale;
  Mat g = 2.0 * scale * diff;
  for (std::size_t k = n; k-- > 0;) {
    grad.weights[k] = g * post[k].transpose();
    grad.bias[k] = g.rowwise().sum();
    if (k > 0) {
      Mat back = layers[k].weights.transpose() * g;
      g = back.cwiseProduct((pre[k - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return loss;
}

}  // namespace detail

inline double mean_squared_error(const MlpNetwork& net, const Dataset& data) {
  return detail::mse_loss(net.layers(), data.inputs(), data.targets());
}

inline Gradients loss_gradient(const MlpNetwork& net, const Dataset& data, double* loss = nullptr) {
  Gradients g;
  const double l = detail::loss_and_gradient(net.layers(), data.inputs(), data.targets(), g);
  if (loss) *loss = l;
  return g;
}

// Mean Euclidean norm of the prediction error over the dataset.
inline double prediction_error(const MlpNetwork& net, const Dataset& data) {
  if (data.empty()) return 0.0;
  const Mat diff = forward_batch(net, data.inputs()) - data.targets();
  return diff.colwise().norm().mean();
}

// ---------------------------------------------------------------------------
// Training (Adam on mean squared error)

struct TrainOptions {
  int epochs = 1000;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double lr_decay = 1.0;  // multiplicative per-epoch factor
  std::uint64_t seed = 0;
  std::function<void(int epoch, double loss)> on_epoch;
};

struct TrainResult {
  MlpNetwork net;
  std::vector<double> epoch_loss;  // mean minibatch loss per epoch
};

inline TrainResult train(const MlpNetwork& initial, const Dataset& data, const TrainOptions& opt) {
  if (data.empty()) throw InputError("train: dataset is empty");
  if (data.state_dim() != initial.state_dim() || data.control_dim() != initial.control_dim())
    throw InputError("train: dataset dimensions do not match the network");
  if (opt.epochs < 0 || opt.batch_size <= 0 || !(opt.learning_rate > 0.0))
    throw InputError("train: invalid hyperparameters");

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<DenseLayer> layers = initial.layers();
  Gradients m, v;
  for (const auto& l : layers) {
    m.weights.push_back(Mat::Zero(l.weights.rows(), l.weights.cols()));
    m.bias.push_back(Vec::Zero(l.bias.size()));
  }
  v = m;

  const Mat inputs = data.inputs();
  const Mat targets = data.targets();
  const auto n = static_cast<Eigen::Index>(data.size());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng = Rng::stream(opt.seed, "train/shuffle");

  TrainResult result;
  double lr = opt.learning_rate;
  long step = 0;
  Gradients grad;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double loss_sum = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += opt.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(opt.batch_size, n - start);
      Mat bx(inputs.rows(), len), by(targets.rows(), len);
      for (Eigen::Index j = 0; j < len; ++j) {
        bx.col(j) = inputs.col(order[static_cast<std::size_t>(start + j)]);
        by.col(j) = targets.col(order[static_cast<std::size_t>(start + j)]);
      }
      const double loss = detail::loss_and_gradient(layers, bx, by, grad);
      if (!std::isfinite(loss))
        throw TrainingDivergence(epoch, "training diverged (non-finite loss) at epoch " + std::to_string(epoch));
      loss_sum += loss;
      ++batches;
      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t k = 0; k < layers.size(); ++k) {
        m.weights[k] = beta1 * m.weights[k] + (1 - beta1) * grad.weights[k];
        v.weights[k] = beta2 * v.weights[k] + (1 - beta2) * grad.weights[k].cwiseAbs2();
        m.bias[k] = beta1 * m.bias[k] + (1 - beta1) * grad.bias[k];
        v.bias[k] = beta2 * v.bias[k] + (1 - beta2) * grad.bias[k].cwiseAbs2();
        layers[k].weights.array() -=
            lr * (m.weights[k].array() / c1) / ((v.weights[k].array() / c2).sqrt() + eps);
        layers[k].bias.array() -= lr * (m.bias[k].array() / c1) / ((v.bias[k].array() / c2).sqrt() + eps);
      }
    }
    const double epoch_loss = loss_sum / std::max(1, batches);
    result.epoch_loss.push_back(epoch_loss);
    if (opt.on_epoch) opt.on_epoch(epoch, epoch_loss);
    lr *= opt.lr_decay;
  }
  for (std::size_t k = 0; k < layers.size(); ++k)
    if (!layers[k].weights.allFinite() || !layers[k].bias.allFinite())
      throw TrainingDivergence(opt.epochs, "training produced non-finite parameters");
  result.net = MlpNetwork(initial.state_dim(), initial.control_dim(), std::move(layers));
  return result;
}

// ---------------------------------------------------------------------------
// Gradient check against central finite differences.
//
// Relative error per parameter is |g_bp - g_fd| / max(|g_bp|, |g_fd|, 1e-4).
// Parameters whose perturbation flips some ReLU in the batch are skipped:
// the loss has a kink there and the finite difference is not a derivative.

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

namespace detail {

inline std::vector<bool> activation_pattern(const std::vector<DenseLayer>& layers, const Mat& inputs) {
  std::vector<bool> bits;
  Mat z = inputs;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    Mat pre = layers[i].weights * z;
    pre.colwise() += layers[i].bias;
    for (Eigen::Index k = 0; k < pre.size(); ++k) bits.push_back(pre.data()[k] > 0.0);
    z = pre.cwiseMax(0.0);
  }
  return bits;
}

}  // namespace detail

inline GradientCheckResult gradient_check(const MlpNetwork& net, const Dataset& data, double epsilon) {
  if (!(epsilon > 0.0)) throw InputError("gradient_check: epsilon must be positive");
  GradientCheckResult res;
  if (data.empty()) return res;
  const Mat inputs = data.inputs();
  const Mat targets = data.targets();
  Gradients grad;
  std::vector<DenseLayer> layers = net.layers();
  detail::loss_and_gradient(layers, inputs, targets, grad);
  const auto base_pattern = detail::activation_pattern(layers, inputs);

  auto probe = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + epsilon;
    const double lp = detail::mse_loss(layers, inputs, targets);
    const bool flip_p = detail::activation_pattern(layers, inputs) != base_pattern;
    param = saved - epsilon;
    const double lm = detail::mse_loss(layers, inputs, targets);
    const bool flip_m = detail::activation_pattern(layers, inputs) != base_pattern;
    param = saved;
    if (flip_p || flip_m) {
      ++res.skipped;
      return;
    }
    const double numeric = (lp - lm) / (2.0 * epsilon);
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-4});
    res.max_relative_error = std::max(res.max_relative_error, std::abs(numeric - analytic) / denom);
    ++res.checked;
  };

  for (std::size_t k = 0; k < layers.size(); ++k) {
    for (Eigen::Index r = 0; r < layers[k].weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layers[k].weights.cols(); ++c)
        probe(layers[k].weights(r, c), grad.weights[k](r, c));
    for (Eigen::Index r = 0; r < layers[k].bias.size(); ++r) probe(layers[k].bias[r], grad.bias[k][r]);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Lipschitz bound: product of per-layer spectral norms (ReLU is 1-Lipschitz).

inline double spectral_norm(const Mat& w) {
  if (w.size() == 0) return 0.0;
  const double frob = w.norm();
  Eigen::JacobiSVD<Mat> svd(w);
  const double s = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  if (!std::isfinite(s)) return frob;
  return std::min(s, frob);
}

inline double lipschitz_upper_bound(const MlpNetwork& net) {
  double k = 1.0;
  for (const auto& l : net.layers()) k *= spectral_norm(l.weights);
  return k;
}

// ---------------------------------------------------------------------------
// Model file: {"m_x", "m_u", "layers": [{"rows", "cols", "weights" (row-major), "bias"}]}
// Numbers are written with 17 significant digits so a round trip is exact.

inline void save_model(const MlpNetwork& net, std::ostream& out) {
  out << "{\n  \"m_x\": " << net.state_dim() << ",\n  \"m_u\": " << net.control_dim() << ",\n  \"layers\": [";
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    out << (i ? "," : "") << "\n    {\n      \"rows\": " << l.weights.rows() << ",\n      \"cols\": "
        << l.weights.cols() << ",\n      \"weights\": [";
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
        out << ((r || c) ? ", " : "") << detail::fmt17(l.weights(r, c));
    out << "],\n      \"bias\": [";
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) out << (r ? ", " : "") << detail::fmt17(l.bias[r]);
    out << "]\n    }";
  }
  out << "\n  ]\n}\n";
}

inline void save_model(const MlpNetwork& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write model file " + path);
  save_model(net, out);
}

inline MlpNetwork model_from_json(const nlohmann::json& j) {
  auto need = [&](const nlohmann::json& obj, const char* key, const std::string& where) -> const nlohmann::json& {
    if (!obj.is_object() || !obj.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
    return obj.at(key);
  };
  int mx = 0, mu = 0;
  try {
    mx = need(j, "m_x", "model").get<int>();
    mu = need(j, "m_u", "model").get<int>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError("model: m_x and m_u must be integers");
  }
  const auto& jl = need(j, "layers", "model");
  if (!jl.is_array() || jl.empty()) throw ParseError("model: 'layers' must be a non-empty array");
  std::vector<DenseLayer> layers;
  Eigen::Index expected_cols = mx + mu;
  for (std::size_t i = 0; i < jl.size(); ++i) {
    const std::string where = "layer " + std::to_string(i);
    const auto& l = jl[i];
    try {
      const auto rows = need(l, "rows", where).get<Eigen::Index>();
      const auto cols = need(l, "cols", where).get<Eigen::Index>();
      const auto w = need(l, "weights", where).get<std::vector<double>>();
      const auto b = need(l, "bias", where).get<std::vector<double>>();
      if (rows <= 0 || cols <= 0) throw ParseError(where + ": rows and cols must be positive");
      if (cols != expected_cols)
        throw ParseError(where + ": cols " + std::to_string(cols) + " != " + std::to_string(expected_cols));
      if (static_cast<Eigen::Index>(w.size()) != rows * cols)
        throw ParseError(where + ": weights length " + std::to_string(w.size()) + " != rows*cols");
      if (static_cast<Eigen::Index>(b.size()) != rows)
        throw ParseError(where + ": bias length " + std::to_string(b.size()) + " != rows " + std::to_string(rows));
      DenseLayer layer{Mat(rows, cols), Vec(rows)};
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) layer.weights(r, c) = w[static_cast<std::size_t>(r * cols + c)];
      for (Eigen::Index r = 0; r < rows; ++r) layer.bias[r] = b[static_cast<std::size_t>(r)];
      if (!layer.weights.allFinite() || !layer.bias.allFinite()) throw ParseError(where + ": non-finite value");
      layers.push_back(std::move(layer));
      expected_cols = rows;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  if (expected_cols != mx) throw ParseError("layer " + std::to_string(jl.size() - 1) + ": output rows != m_x");
  try {
    return MlpNetwork(mx, mu, std::move(layers));
  } catch (const InputError& e) {
    throw ParseError(e.what());
  }
}

inline MlpNetwork load_model(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model: malformed JSON: ") + e.what());
  }
  return model_from_json(j);
}

inline MlpNetwork load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read model file " + path);
  return load_model(in);
}

}  // namespace mindsis

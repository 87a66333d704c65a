#include "asd/model.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "asd/error.hpp"
#include "asd/rng.hpp"

namespace asd::model {

std::vector<LayerSpec> chain_topology(std::span<const int> widths) {
  if (widths.size() < 2) throw Error(ErrorCode::InvalidConfig, "topology needs at least two widths");
  std::vector<LayerSpec> specs;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] <= 0 || widths[i + 1] <= 0) throw Error(ErrorCode::InvalidConfig, "layer widths must be positive");
    const bool last = i + 2 == widths.size();
    specs.push_back({widths[i], widths[i + 1], !last, last ? Activation::None : Activation::Relu});
  }
  return specs;
}

std::vector<LayerSpec> default_topology(int input_dim, int hidden, int bottleneck) {
  const int widths[] = {input_dim, hidden, hidden, hidden, bottleneck, hidden, hidden, hidden, input_dim};
  return chain_topology(widths);
}

std::vector<LayerSpec> AutoencoderState::topology() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers) out.push_back(l.spec);
  return out;
}

namespace {

bool same(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}
bool same(const RowVector& a, const RowVector& b) { return a.size() == b.size() && (a.size() == 0 || a == b); }
bool same(const Vector& a, const Vector& b) { return a.size() == b.size() && (a.size() == 0 || a == b); }

bool same(const Gradients& a, const Gradients& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!same(a[i].weight, b[i].weight) || !same(a[i].bias, b[i].bias) || !same(a[i].gamma, b[i].gamma) ||
        !same(a[i].beta, b[i].beta))
      return false;
  return true;
}

}  // namespace

bool AutoencoderState::operator==(const AutoencoderState& o) const {
  if (layers.size() != o.layers.size() || step != o.step || seed != o.seed) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = o.layers[i];
    if (!(a.spec == b.spec) || !same(a.weight, b.weight) || !same(a.bias, b.bias) || !same(a.gamma, b.gamma) ||
        !same(a.beta, b.beta) || !same(a.running_mean, b.running_mean) || !same(a.running_var, b.running_var))
      return false;
  }
  return same(adam_m, o.adam_m) && same(adam_v, o.adam_v) && same(normalizer.mean, o.normalizer.mean) &&
         same(normalizer.stddev, o.normalizer.stddev);
}

Gradients zero_gradients(const std::vector<Layer>& layers) {
  Gradients g(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    g[i].weight = Matrix::Zero(layers[i].weight.rows(), layers[i].weight.cols());
    g[i].bias = RowVector::Zero(layers[i].bias.size());
    g[i].gamma = RowVector::Zero(layers[i].gamma.size());
    g[i].beta = RowVector::Zero(layers[i].beta.size());
  }
  return g;
}

AutoencoderState init(std::uint64_t seed, const std::vector<LayerSpec>& topology) {
  if (topology.empty()) throw Error(ErrorCode::InvalidConfig, "empty topology");
  AutoencoderState state;
  state.seed = seed;
  Rng rng(seed);
  for (std::size_t i = 0; i < topology.size(); ++i) {
    const LayerSpec& spec = topology[i];
    if (spec.in_dim <= 0 || spec.out_dim <= 0) throw Error(ErrorCode::InvalidConfig, "layer dims must be positive");
    if (i > 0 && topology[i - 1].out_dim != spec.in_dim)
      throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(i) + " input does not match previous output");
    Layer layer;
    layer.spec = spec;
    const double limit = std::sqrt(6.0 / static_cast<double>(spec.in_dim + spec.out_dim));
    layer.weight.resize(spec.in_dim, spec.out_dim);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = rng.uniform(-limit, limit);
    layer.bias = RowVector::Zero(spec.out_dim);
    if (spec.has_bn) {
      layer.gamma = RowVector::Ones(spec.out_dim);
      layer.beta = RowVector::Zero(spec.out_dim);
      layer.running_mean = RowVector::Zero(spec.out_dim);
      layer.running_var = RowVector::Ones(spec.out_dim);
    }
    state.layers.push_back(std::move(layer));
  }
  state.adam_m = zero_gradients(state.layers);
  state.adam_v = zero_gradients(state.layers);
  return state;
}

namespace {

void check_input(const AutoencoderState& state, const Matrix& batch) {
  if (state.layers.empty()) throw Error(ErrorCode::Precondition, "uninitialized autoencoder");
  if (batch.cols() != state.input_dim())
    throw Error(ErrorCode::ShapeMismatch, "batch has " + std::to_string(batch.cols()) + " columns, model expects " +
                                              std::to_string(state.input_dim()));
}

void check_finite(const Matrix& m, std::size_t layer) {
  if (!m.allFinite())
    throw Error(ErrorCode::NonFiniteActivation, "non-finite activation after layer " + std::to_string(layer));
}

// Per-layer intermediates kept for the backward pass.
struct LayerCache {
  Matrix input;
  Matrix normalized;  // x-hat of BN
  RowVector inv_std;
  Matrix pre_activation;  // input to the activation
};

Matrix forward_train(const AutoencoderState& state, const Matrix& batch, std::vector<LayerCache>* caches,
                     BatchStats* stats) {
  const auto rows = batch.rows();
  if (rows < 2) throw Error(ErrorCode::Precondition, "train-mode batch needs >= 2 rows, got " + std::to_string(rows));
  Matrix h = batch;
  for (std::size_t i = 0; i < state.layers.size(); ++i) {
    const Layer& layer = state.layers[i];
    LayerCache cache;
    Matrix z = h * layer.weight;
    z.rowwise() += layer.bias;
    if (layer.spec.has_bn) {
      const RowVector mean = z.colwise().mean();
      const RowVector var = (z.rowwise() - mean).array().square().colwise().mean();
      const RowVector inv_std = (var.array() + kBnEpsilon).rsqrt();
      Matrix xhat = (z.rowwise() - mean).array().rowwise() * inv_std.array();
      z = (xhat.array().rowwise() * layer.gamma.array()).rowwise() + layer.beta.array();
      if (stats) {
        stats->mean[i] = mean;
        stats->var[i] = var;
      }
      cache.normalized = std::move(xhat);
      cache.inv_std = inv_std;
    }
    if (layer.spec.activation == Activation::Relu) {
      if (caches) cache.pre_activation = z;
      z = z.cwiseMax(0.0);
    }
    check_finite(z, i);
    if (caches) {
      cache.input = std::move(h);
      caches->push_back(std::move(cache));
    }
    h = std::move(z);
  }
  return h;
}

}  // namespace

Matrix reconstruct(const AutoencoderState& state, const Matrix& batch) {
  check_input(state, batch);
  Matrix h = batch;
  for (std::size_t i = 0; i < state.layers.size(); ++i) {
    const Layer& layer = state.layers[i];
    Matrix z = h * layer.weight;
    z.rowwise() += layer.bias;
    if (layer.spec.has_bn) {
      const RowVector scale = layer.gamma.array() * (layer.running_var.array() + kBnEpsilon).rsqrt();
      z = ((z.rowwise() - layer.running_mean).array().rowwise() * scale.array()).rowwise() + layer.beta.array();
    }
    if (layer.spec.activation == Activation::Relu) z = z.cwiseMax(0.0);
    check_finite(z, i);
    h = std::move(z);
  }
  return h;
}

Matrix forward(AutoencoderState& state, const Matrix& batch, Mode mode) {
  if (mode == Mode::Eval) return reconstruct(state, batch);
  check_input(state, batch);
  BatchStats stats;
  stats.mean.resize(state.layers.size());
  stats.var.resize(state.layers.size());
  Matrix out = forward_train(state, batch, nullptr, &stats);
  apply_batch_stats(state, stats);
  return out;
}

void apply_batch_stats(AutoencoderState& state, const BatchStats& stats) {
  for (std::size_t i = 0; i < state.layers.size(); ++i) {
    Layer& layer = state.layers[i];
    if (!layer.spec.has_bn) continue;
    layer.running_mean = (1.0 - kBnMomentum) * layer.running_mean + kBnMomentum * stats.mean[i];
    layer.running_var = (1.0 - kBnMomentum) * layer.running_var + kBnMomentum * stats.var[i];
  }
}

double mse(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(ErrorCode::ShapeMismatch, "mse operands differ in shape");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

LossResult loss_and_gradients(const AutoencoderState& state, const Matrix& batch) {
  check_input(state, batch);
  const std::size_t n_layers = state.layers.size();
  LossResult result;
  result.stats.mean.resize(n_layers);
  result.stats.var.resize(n_layers);
  std::vector<LayerCache> caches;
  caches.reserve(n_layers);
  const Matrix output = forward_train(state, batch, &caches, &result.stats);
  if (output.cols() != batch.cols()) throw Error(ErrorCode::ShapeMismatch, "autoencoder output width differs from input");
  result.mse = mse(output, batch);

  const double rows = static_cast<double>(batch.rows());
  result.grads.resize(n_layers);
  Matrix grad = 2.0 * (output - batch) / static_cast<double>(batch.size());
  for (std::size_t k = n_layers; k-- > 0;) {
    const Layer& layer = state.layers[k];
    const LayerCache& cache = caches[k];
    LayerGrads& g = result.grads[k];
    if (layer.spec.activation == Activation::Relu)
      grad = (cache.pre_activation.array() > 0.0).select(grad.array(), 0.0).matrix();
    if (layer.spec.has_bn) {
      g.gamma = (grad.array() * cache.normalized.array()).colwise().sum();
      g.beta = grad.colwise().sum();
      const Matrix dxhat = grad.array().rowwise() * layer.gamma.array();
      const RowVector sum_dxhat = dxhat.colwise().sum();
      const RowVector sum_dxhat_xhat = (dxhat.array() * cache.normalized.array()).colwise().sum();
      Matrix dz = rows * dxhat.array();
      dz.rowwise() -= sum_dxhat;
      dz.array() -= cache.normalized.array().rowwise() * sum_dxhat_xhat.array();
      dz.array().rowwise() *= (cache.inv_std / rows).array();
      grad = std::move(dz);
    } else {
      g.gamma.resize(0);
      g.beta.resize(0);
    }
    g.weight = cache.input.transpose() * grad;
    g.bias = grad.colwise().sum();
    if (k > 0) grad = grad * layer.weight.transpose();
  }
  return result;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw Error(ErrorCode::InvalidConfig, "Adam betas must be in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw Error(ErrorCode::InvalidConfig, "Adam epsilon must be positive");
}

namespace {

template <typename T>
void adam_update(T& param, T& m, T& v, const T& g, double lr, double b1, double b2, double eps, double c1, double c2) {
  if (param.size() == 0) return;
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

}  // namespace

void adam_step(AutoencoderState& state, const Gradients& grads, const TrainConfig& cfg) {
  if (grads.size() != state.layers.size()) throw Error(ErrorCode::ShapeMismatch, "gradient list does not match layers");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < state.layers.size(); ++i) {
    Layer& l = state.layers[i];
    LayerGrads& m = state.adam_m[i];
    LayerGrads& v = state.adam_v[i];
    const LayerGrads& g = grads[i];
    const auto lr = cfg.learning_rate;
    adam_update(l.weight, m.weight, v.weight, g.weight, lr, cfg.beta1, cfg.beta2, cfg.adam_epsilon, c1, c2);
    adam_update(l.bias, m.bias, v.bias, g.bias, lr, cfg.beta1, cfg.beta2, cfg.adam_epsilon, c1, c2);
    adam_update(l.gamma, m.gamma, v.gamma, g.gamma, lr, cfg.beta1, cfg.beta2, cfg.adam_epsilon, c1, c2);
    adam_update(l.beta, m.beta, v.beta, g.beta, lr, cfg.beta1, cfg.beta2, cfg.adam_epsilon, c1, c2);
  }
}

TrainResult train(const Matrix& rows, const TrainConfig& cfg, const std::vector<LayerSpec>& topology) {
  cfg.validate();
  if (rows.rows() < 2)
    throw Error(ErrorCode::InsufficientData, "training needs >= 2 rows, got " + std::to_string(rows.rows()));

  TrainResult result{init(cfg.seed, topology), {}};
  if (rows.cols() != result.state.input_dim())
    throw Error(ErrorCode::ShapeMismatch, "training rows have " + std::to_string(rows.cols()) + " columns, model expects " +
                                              std::to_string(result.state.input_dim()));

  const auto n = static_cast<std::size_t>(rows.rows());
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng shuffler(derive_seed({cfg.seed, 0x5f0ffULL}));

  Matrix batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) shuffler.shuffle(std::span<Eigen::Index>(order));
    double loss_sum = 0.0;
    std::size_t loss_rows = 0;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t len = std::min(batch_size, n - start);
      if (len < 2) break;  // a single leftover row cannot be batch-normalized
      batch.resize(static_cast<Eigen::Index>(len), rows.cols());
      for (std::size_t r = 0; r < len; ++r) batch.row(static_cast<Eigen::Index>(r)) = rows.row(order[start + r]);
      LossResult step;
      try {
        step = loss_and_gradients(result.state, batch);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteActivation) throw;
        throw Error(ErrorCode::NonFiniteActivation, "epoch " + std::to_string(epoch + 1) + ", step " +
                                                        std::to_string(result.state.step + 1) + ": " + e.message());
      }
      if (!std::isfinite(step.mse))
        throw Error(ErrorCode::NonFiniteActivation,
                    "epoch " + std::to_string(epoch + 1) + ": loss diverged at step " + std::to_string(result.state.step + 1));
      apply_batch_stats(result.state, step.stats);
      adam_step(result.state, step.grads, cfg);
      loss_sum += step.mse * static_cast<double>(len);
      loss_rows += len;
    }
    result.epoch_loss.push_back(loss_rows > 0 ? loss_sum / static_cast<double>(loss_rows) : 0.0);
  }
  return result;
}

}  // namespace asd::model

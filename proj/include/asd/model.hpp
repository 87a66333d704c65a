#pragma once

// Dense autoencoder with batch normalization, trained with Adam on the
// reconstruction MSE. All arithmetic is double precision and single
// threaded so a (seed, data, config) triple fixes the result bit for bit.

#include <cstdint>
#include <span>
#include <vector>

#include "asd/dsp.hpp"
#include "asd/linalg.hpp"

namespace asd::model {

enum class Activation { Relu, None };

struct LayerSpec {
  int in_dim = 0;
  int out_dim = 0;
  bool has_bn = false;
  Activation activation = Activation::None;

  bool operator==(const LayerSpec&) const = default;
};

inline constexpr int kBottleneck = 8;

// Linear layers between consecutive widths; every layer but the last is
// followed by BN + ReLU, the output layer is plain linear.
std::vector<LayerSpec> chain_topology(std::span<const int> widths);

// 640 -> 128 -> 128 -> 128 -> 8 -> 128 -> 128 -> 128 -> 640
std::vector<LayerSpec> default_topology(int input_dim = 640, int hidden = 128, int bottleneck = kBottleneck);

struct Layer {
  LayerSpec spec;
  Matrix weight;  // in_dim x out_dim, y = x W + b
  RowVector bias;
  // Present only when spec.has_bn.
  RowVector gamma;
  RowVector beta;
  RowVector running_mean;
  RowVector running_var;
};

struct LayerGrads {
  Matrix weight;
  RowVector bias;
  RowVector gamma;
  RowVector beta;
};

using Gradients = std::vector<LayerGrads>;

struct AutoencoderState {
  std::vector<Layer> layers;
  Gradients adam_m;
  Gradients adam_v;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  dsp::Normalizer normalizer;  // empty until the trainer's caller attaches one

  int input_dim() const { return layers.front().spec.in_dim; }
  int output_dim() const { return layers.back().spec.out_dim; }
  std::vector<LayerSpec> topology() const;
  bool operator==(const AutoencoderState& other) const;
};

inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.1;

// Glorot-uniform weights, zero biases, gamma = 1, beta = 0, running (0, 1).
AutoencoderState init(std::uint64_t seed, const std::vector<LayerSpec>& topology = default_topology());

enum class Mode { Train, Eval };

// Eval mode reads running statistics and leaves the state untouched. Train
// mode normalizes with batch statistics and updates the running ones.
Matrix forward(AutoencoderState& state, const Matrix& batch, Mode mode);
Matrix reconstruct(const AutoencoderState& state, const Matrix& batch);

struct BatchStats {
  std::vector<RowVector> mean;  // per layer (empty for layers without BN)
  std::vector<RowVector> var;   // population variance
};

struct LossResult {
  double mse = 0.0;
  Gradients grads;
  BatchStats stats;
};

// Train-mode forward + backward. Does not mutate the state; the caller
// folds `stats` into the running statistics with apply_batch_stats.
LossResult loss_and_gradients(const AutoencoderState& state, const Matrix& batch);
void apply_batch_stats(AutoencoderState& state, const BatchStats& stats);

Gradients zero_gradients(const std::vector<Layer>& layers);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 13711;
  bool shuffle = true;

  void validate() const;
};

void adam_step(AutoencoderState& state, const Gradients& grads, const TrainConfig& cfg);

struct TrainResult {
  AutoencoderState state;
  std::vector<double> epoch_loss;  // row-weighted mean batch loss per epoch
};

// `rows` are standardized feature vectors of a single section.
TrainResult train(const Matrix& rows, const TrainConfig& cfg,
                  const std::vector<LayerSpec>& topology = default_topology());

double mse(const Matrix& a, const Matrix& b);

}  // namespace asd::model

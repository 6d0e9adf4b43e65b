#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "puffline/rng.hpp"
#include "puffline/types.hpp"
#include "puffline/windows.hpp"

namespace puffline {

// Layer sequence is fixed (three valid 1D convolutions with max pooling after
// the first two, one LSTM, dropout, single sigmoid output); the per-layer
// hyperparameters are configurable.
struct NetConfig {
  int input_len = 225;
  int input_channels = 6;
  int conv1_filters = 32;
  int conv1_kernel = 5;
  int conv2_filters = 64;
  int conv2_kernel = 3;
  int conv3_filters = 128;
  int conv3_kernel = 3;
  int lstm_cells = 128;
  double dropout_rate = 0.5;

  enum class InnerActivation { Tanh, Sigmoid };
  InnerActivation lstm_inner_activation = InnerActivation::Tanh;

  // Valid convolution: L_out = L_in - k + 1; pooling: floor(L / 2).
  int conv1_len() const { return input_len - conv1_kernel + 1; }
  int pool1_len() const { return conv1_len() / 2; }
  int conv2_len() const { return pool1_len() - conv2_kernel + 1; }
  int pool2_len() const { return conv2_len() / 2; }
  int lstm_steps() const { return pool2_len() - conv3_kernel + 1; }

  void validate() const;
  std::string manifest() const;
  static NetConfig from_manifest(const std::string& manifest);
};

// Flat view over one parameter tensor; used by the optimizer, the serializer
// and gradient checking.
struct TensorRef {
  std::string name;
  std::vector<int> dims;
  double* data;
  std::ptrdiff_t size;
};
struct ConstTensorRef {
  std::string name;
  std::vector<int> dims;
  const double* data;
  std::ptrdiff_t size;
};

// Network parameters. Gate order along the 4H axis is [input, forget,
// candidate, output]. Doubles throughout; serialization narrows to f32.
struct PuffModel {
  NetConfig config;
  Eigen::MatrixXd conv1_w, conv2_w, conv3_w;  // (kernel * in_ch) x filters
  Eigen::VectorXd conv1_b, conv2_b, conv3_b;
  Eigen::MatrixXd lstm_wx;  // conv3_filters x 4H
  Eigen::MatrixXd lstm_wh;  // H x 4H
  Eigen::VectorXd lstm_b;   // 4H
  Eigen::VectorXd fc_w;     // H
  double fc_b = 0.0;

  static PuffModel zeros(const NetConfig& config);
  // Glorot-uniform weights, zero biases, forget-gate bias +1.
  static PuffModel glorot(const NetConfig& config, Rng& rng);

  bool all_finite() const;
};

std::vector<TensorRef> tensor_refs(PuffModel& m);
std::vector<ConstTensorRef> tensor_refs(const PuffModel& m);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 10;
  double rmsprop_decay = 0.9;
  double rmsprop_epsilon = 1e-8;
  std::uint64_t seed = 1;

  void validate() const;
};

// Batch of input windows for the network: each entry is input_len x channels.
using Batch = std::vector<Eigen::MatrixXd>;

// Per-sample probabilities in (0,1). When training is true, inverted-dropout
// masks are drawn from rng (required); inference runs dropout-free and is
// deterministic.
Eigen::VectorXd forward(const PuffModel& model, const Batch& batch,
                        bool training = false, Rng* rng = nullptr);

// Binary cross-entropy on a single probability; prob is clipped to
// [1e-7, 1 - 1e-7] before the log. label is +1 or -1.
double loss_bce(double prob, int label);

struct BackwardResult {
  PuffModel grads;      // same shapes as the parameters
  double mean_loss = 0.0;
  Eigen::VectorXd probs;
};

// Forward pass with cached intermediates followed by exact backpropagation of
// the mean BCE over the batch. dropout_masks, when given, must be
// batch_size x H with entries in {0, 1/keep}; pass nullptr for no dropout.
BackwardResult forward_backward(const PuffModel& model, const Batch& batch,
                                const std::vector<int>& labels,
                                const Eigen::MatrixXd* dropout_masks = nullptr);

// RMSProp: s <- rho s + (1 - rho) g^2; p <- p - lr g / (sqrt(s) + eps).
// state has the same tensor shapes as params, zero-initialized.
void rmsprop_step(PuffModel& params, const PuffModel& grads, PuffModel& state,
                  const TrainConfig& config);

struct TrainResult {
  PuffModel model;
  std::vector<double> epoch_losses;  // mean BCE per epoch
};

// Full training loop: seeded Glorot init, per-epoch shuffling, inverted
// dropout, RMSProp. Requires at least one window of each class.
TrainResult train(const std::vector<Window>& windows, const TrainConfig& tc,
                  const NetConfig& nc = {});

// Binary model file: magic "PUFF", format version, manifest string, then one
// record per tensor (name, rank, dims, row-major little-endian f32 data).
void save_model(const PuffModel& model, const std::string& path);
PuffModel load_model(const std::string& path);

// Narrows all parameters through f32 and back, so in-memory inference matches
// a model that went through save/load.
PuffModel quantize_to_f32(const PuffModel& model);

}  // namespace puffline

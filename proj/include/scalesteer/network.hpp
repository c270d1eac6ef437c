#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scalesteer/convengine.hpp"
#include "scalesteer/datasets.hpp"
#include "scalesteer/filterbank.hpp"
#include "scalesteer/grid.hpp"

namespace scalesteer {

enum class KernelMode { steered, plain };

// Five geometric steps spanning 1.0 .. 2.4.
std::vector<double> default_scale_grid();

struct NetworkConfig {
  std::vector<int> channel_widths{30, 60, 90};
  std::vector<double> scales = default_scale_grid();
  int base_kernel_size = 7;
  std::vector<int> spatial_pool_sizes{2, 2, 8};
  int upsample_factor = 2;
  std::vector<int> dense_widths{256, 10};
  double learning_rate = 0.01;
  int epochs = 10;
  int batch_size = 32;
  uint64_t seed = 1;
  KernelMode kernel_mode = KernelMode::steered;
  bool scale_response_norm = false;  // drop the s^(m-2) amplitude across scales
  double momentum = 0.0;
  double clip_norm = 0.0;   // cap on each batch gradient's global norm, 0 = off
  bool freeze_conv = false;  // keep conv layers at their initial values; train the head only
  BasisSpec basis = BasisSpec::defaults();

  void validate() const;
  int conv_layer_count() const { return int(channel_widths.size()); }
  int class_count() const { return dense_widths.back(); }

  // Flat `key = value` text, lists comma-separated.
  std::string serialize() const;
  static NetworkConfig parse(const std::string& text);
  static NetworkConfig parse_file(const std::string& path);
};

// All trainable parameters live in one flat vector. Complex coefficients
// occupy adjacent (re, im) slots; layout is fixed by config + input size.
struct NetworkState {
  NetworkConfig config;
  int input_h = 0, input_w = 0;
  std::vector<double> params;
  uint64_t revision = 0;

  struct LayerDims {
    int c_in, c_out;
    int h_in, w_in;    // map entering the conv (post previous pool)
    int h_out, w_out;  // after this layer's spatial pool
    size_t coeff_offset;  // first kernel parameter of this layer
    size_t bias_offset;
    size_t kernel_params;  // per (out, in) pair
  };
  std::vector<LayerDims> conv_dims;
  struct DenseDims {
    int in, out;
    size_t weight_offset, bias_offset;
  };
  std::vector<DenseDims> dense_dims;
  int flatten_size = 0;

  // Random init. When `calibration` is given, every conv channel and hidden
  // dense unit is additionally standardized — weights scaled and bias set so
  // its pre-activation has mean 0 / std 1 over a bounded sample of those
  // images. Without this the filter stacks' uneven energies and the large
  // shared response offset leave deep nets where SGD cannot move.
  static NetworkState init(const NetworkConfig& config, int input_h, int input_w,
                           const std::vector<RealGrid>* calibration = nullptr);

  size_t param_count() const { return params.size(); }
  size_t coeff_index(int layer, int out_ch, int in_ch) const;  // first slot of that kernel
  CoefficientSet coeffs_at(int layer, int out_ch, int in_ch) const;
};

// Per-scale basis sampled once at each steered size, expanded into the real
// stacks the kernels are linear in: for coefficient c = a + ib the steered
// kernel is sum(a*A + b*B) with A = Re(phase*S), B = -Im(phase*S). The same
// stacks assemble kernels forward and project kernel gradients backward.
struct KernelBank {
  struct PerScale {
    double scale;
    int size;
    std::vector<RealGrid> a, b;  // order-major, filter_count() each
  };
  std::vector<PerScale> scales;

  static KernelBank build(const NetworkConfig& config);
  RealGrid assemble(const NetworkState& state, int layer, int out_ch, int in_ch,
                    int scale_index) const;
};

struct ForwardCache {
  uint64_t revision = 0;
  struct Layer {
    std::vector<RealGrid> x;           // maps entering the conv
    std::vector<IntGrid> argmax_scale; // per out channel
    std::vector<RealGrid> z;           // pooled + bias, pre-activation
    std::vector<IntGrid> pool_pick;    // flat index of each spatial-pool winner
  };
  std::vector<Layer> layers;
  std::vector<double> flat;                 // flattened final conv output
  std::vector<std::vector<double>> dense_z; // pre-activations per dense layer
  std::vector<double> scores;
};

ForwardCache forward(const NetworkState& state, const KernelBank& bank, const RealGrid& image);

// Softmax cross-entropy against `label`; loss_grad fills d(loss)/d(scores).
double softmax_xent(const std::vector<double>& scores, int label, std::vector<double>* loss_grad);

// Gradient for every parameter, same layout as state.params. Throws if the
// cache predates the current parameters.
std::vector<double> backward(const NetworkState& state, const KernelBank& bank,
                             const ForwardCache& cache, const std::vector<double>& score_grad);

double loss_at(const NetworkState& state, const KernelBank& bank, const RealGrid& image,
               int label);

// FNV hash of every routing decision (scale argmax, spatial picks, ReLU
// signs) — two caches with equal signatures are differentiable along the
// same linear region, which finite-difference probing relies on.
uint64_t route_signature(const ForwardCache& cache);

struct EpochMetrics {
  int epoch = 0;
  long step = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

// Minibatch SGD; per-sample gradients go into indexed slots and are reduced
// in sample order, so results do not depend on thread schedule.
std::vector<EpochMetrics> train(NetworkState& state, const LabeledImageSet& train_set,
                                const LabeledImageSet* val_set);

double evaluate(const NetworkState& state, const LabeledImageSet& set);  // error rate

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& metrics);

void save_checkpoint(const NetworkState& state, const std::string& path);
NetworkState load_checkpoint(const std::string& path);

}  // namespace scalesteer

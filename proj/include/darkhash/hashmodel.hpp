#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "darkhash/image.hpp"
#include "darkhash/layers.hpp"
#include "darkhash/tensor.hpp"

namespace darkhash {

enum class OptimizerKind { RmsProp, Sgd };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::RmsProp;
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Architecture {
  std::vector<int> conv_channels{8, 16};  // one conv+relu+pool block each
  int hidden = 64;                        // 0 drops the hidden dense block
  int bits = 16;
};

// Forward activations retained for backprop. activations[i] is the input to
// layer i; activations.back() is the model output.
struct Trace {
  std::size_t start = 0;
  std::vector<Mat> activations;
  std::vector<LayerCache> caches;

  const Mat& output() const { return activations.back(); }
};

// Per-layer gradient buffers aligned with HashModel::layer(i).params().
struct Gradients {
  std::vector<std::vector<double>> layers;

  void zero();
  double squared_norm() const;
};

struct FreezePolicy {
  enum class Kind { None, AllConv, FirstN } kind = Kind::AllConv;
  int n = 0;  // for FirstN: number of leading parameterized layers

  static FreezePolicy none() { return {Kind::None, 0}; }
  static FreezePolicy all_conv() { return {Kind::AllConv, 0}; }
  static FreezePolicy first_n(int n) { return {Kind::FirstN, n}; }
};

// Convolutional feature extractor ending in a K-unit tanh hash layer.
class HashModel {
 public:
  HashModel() = default;
  HashModel(Shape input, Architecture arch, std::uint64_t seed);
  // Assembles a model from explicit layers (checkpoint loading).
  HashModel(Shape input, int bits, std::vector<std::unique_ptr<Layer>> layers);

  HashModel(const HashModel& other);
  HashModel& operator=(const HashModel& other);
  HashModel(HashModel&&) noexcept = default;
  HashModel& operator=(HashModel&&) noexcept = default;

  Shape input_shape() const { return input_; }
  int bits() const { return bits_; }
  std::size_t layer_count() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  std::size_t parameter_count() const;

  bool frozen(std::size_t i) const { return frozen_[i]; }
  const std::vector<bool>& freeze_mask() const { return frozen_; }
  void set_frozen(std::size_t i, bool value) { frozen_[i] = value; }
  // Lowest index whose layer owns trainable parameters; layer_count() if none.
  std::size_t first_trainable_layer() const;
  // Shape of the activation entering layer i.
  Shape shape_at(std::size_t i) const;

  // Features in (-1,1)^K for a batch of CHW-flattened inputs. With
  // start > 0 the input is the activation entering layer `start`.
  Mat forward(const Mat& x, std::size_t start = 0) const;
  Trace forward_trace(const Mat& x, std::size_t start = 0) const;
  Mat features(std::span<const LabeledImage> images) const;
  // Activation entering layer `stop` (the frozen-prefix cache).
  Mat activations_at(const Mat& x, std::size_t stop) const;

  // Accumulates dLoss/dparams for every trainable layer in the trace, given
  // dLoss/doutput. Frozen layers receive nothing.
  void backward(const Trace& trace, const Mat& grad_output, Gradients& grads) const;
  Gradients make_gradients() const;

  // Concatenated parameters, for snapshots and comparisons.
  std::vector<double> flat_parameters() const;

 private:
  void check_input(const Mat& x, std::size_t start) const;

  Shape input_{};
  int bits_ = 0;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<bool> frozen_;
};

void set_freeze(HashModel& model, const FreezePolicy& policy);

// Loss over a feature batch; writes dLoss/dfeatures into *grad when given.
using FeatureLoss = std::function<double(const Mat& features, Mat* grad)>;

// One term of an objective: a batch (entering layer `start`) and its loss.
struct BatchTerm {
  const Mat* inputs = nullptr;
  std::size_t start = 0;
  FeatureLoss loss;
};

// Value of sum_t loss_t(forward(inputs_t)); gradients accumulated into
// `grads` (which is zeroed first). Throws DivergenceError on a non-finite
// loss.
double gradients(const HashModel& model, std::span<const BatchTerm> terms, Gradients& grads);
double objective(const HashModel& model, std::span<const BatchTerm> terms);

}  // namespace darkhash

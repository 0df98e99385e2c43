#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "darkhash/rng.hpp"
#include "darkhash/tensor.hpp"

namespace darkhash {

enum class LayerKind : std::uint8_t { Conv2d = 1, Relu = 2, MaxPool2 = 3, Dense = 4, Tanh = 5 };

const char* to_string(LayerKind kind);

// Scratch state a layer keeps between forward and backward.
struct LayerCache {
  std::vector<int> argmax;
};

// A layer maps a batch (one flattened sample per row) of `input_shape()`
// to a batch of `output_shape()`. Parameters live in one flat buffer so
// that optimizers, checkpoints and finite-difference probes can address
// them uniformly.
class Layer {
 public:
  explicit Layer(Shape input) : input_(input) {}
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Shape output_shape() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;

  virtual void forward(const Mat& in, Mat& out, LayerCache& cache) const = 0;
  // grad_in may be null when the caller does not need the input gradient.
  // grad_params is empty for parameterless layers and is accumulated into.
  virtual void backward(const Mat& in, const Mat& out, const Mat& grad_out, const LayerCache& cache,
                        Mat* grad_in, std::span<double> grad_params) const = 0;

  Shape input_shape() const { return input_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  bool has_params() const { return !params_.empty(); }

 protected:
  Shape input_;
  std::vector<double> params_;
};

// 3x3 convolution, stride 1, zero padding 1. Params: weights
// [out][in][3][3] followed by one bias per output channel.
class Conv2d final : public Layer {
 public:
  Conv2d(Shape input, int out_channels);

  LayerKind kind() const override { return LayerKind::Conv2d; }
  Shape output_shape() const override { return {out_channels_, input_.height, input_.width}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }
  void forward(const Mat& in, Mat& out, LayerCache& cache) const override;
  void backward(const Mat& in, const Mat& out, const Mat& grad_out, const LayerCache& cache, Mat* grad_in,
                std::span<double> grad_params) const override;

  int out_channels() const { return out_channels_; }
  // Number of weights+bias per output filter.
  std::size_t filter_size() const { return static_cast<std::size_t>(input_.channels) * 9; }
  void init(Rng& rng);

 private:
  Mat im2col(const double* sample) const;
  void col2im(const Mat& cols, double* sample) const;

  int out_channels_;
};

class Relu final : public Layer {
 public:
  using Layer::Layer;
  LayerKind kind() const override { return LayerKind::Relu; }
  Shape output_shape() const override { return input_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }
  void forward(const Mat& in, Mat& out, LayerCache& cache) const override;
  void backward(const Mat& in, const Mat& out, const Mat& grad_out, const LayerCache& cache, Mat* grad_in,
                std::span<double> grad_params) const override;
};

// 2x2 max pooling, stride 2 (odd trailing rows/columns are dropped).
class MaxPool2 final : public Layer {
 public:
  using Layer::Layer;
  LayerKind kind() const override { return LayerKind::MaxPool2; }
  Shape output_shape() const override { return {input_.channels, input_.height / 2, input_.width / 2}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2>(*this); }
  void forward(const Mat& in, Mat& out, LayerCache& cache) const override;
  void backward(const Mat& in, const Mat& out, const Mat& grad_out, const LayerCache& cache, Mat* grad_in,
                std::span<double> grad_params) const override;
};

// Fully connected. Params: weights [out][in] followed by `out` biases.
class Dense final : public Layer {
 public:
  Dense(Shape input, int outputs);

  LayerKind kind() const override { return LayerKind::Dense; }
  Shape output_shape() const override { return {outputs_, 1, 1}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
  void forward(const Mat& in, Mat& out, LayerCache& cache) const override;
  void backward(const Mat& in, const Mat& out, const Mat& grad_out, const LayerCache& cache, Mat* grad_in,
                std::span<double> grad_params) const override;

  int outputs() const { return outputs_; }
  // He-uniform for hidden layers, Glorot-uniform for the hash layer.
  void init(Rng& rng, bool glorot);

 private:
  int outputs_;
};

class Tanh final : public Layer {
 public:
  using Layer::Layer;
  LayerKind kind() const override { return LayerKind::Tanh; }
  Shape output_shape() const override { return input_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Tanh>(*this); }
  void forward(const Mat& in, Mat& out, LayerCache& cache) const override;
  void backward(const Mat& in, const Mat& out, const Mat& grad_out, const LayerCache& cache, Mat* grad_in,
                std::span<double> grad_params) const override;
};

}  // namespace darkhash

#include "darkhash/hashmodel.hpp"

#include <cmath>
#include <string>

#include "darkhash/errors.hpp"

namespace darkhash {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
  if (epochs < 0) throw ConfigError("epochs must be nonnegative");
}

void Gradients::zero() {
  for (auto& g : layers) std::fill(g.begin(), g.end(), 0.0);
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& g : layers) {
    for (double v : g) s += v * v;
  }
  return s;
}

HashModel::HashModel(Shape input, Architecture arch, std::uint64_t seed) : input_(input), bits_(arch.bits) {
  if (arch.bits <= 0) throw ConfigError("hash bits must be positive");
  Rng rng(derive_seed(seed, "init"));
  Shape shape = input;
  for (int channels : arch.conv_channels) {
    auto conv = std::make_unique<Conv2d>(shape, channels);
    conv->init(rng);
    shape = conv->output_shape();
    layers_.push_back(std::move(conv));
    layers_.push_back(std::make_unique<Relu>(shape));
    auto pool = std::make_unique<MaxPool2>(shape);
    shape = pool->output_shape();
    if (shape.size() == 0) throw ConfigError("too many pooling stages for the input size");
    layers_.push_back(std::move(pool));
  }
  if (arch.hidden > 0) {
    auto dense = std::make_unique<Dense>(shape, arch.hidden);
    dense->init(rng, false);
    shape = dense->output_shape();
    layers_.push_back(std::move(dense));
    layers_.push_back(std::make_unique<Relu>(shape));
  }
  auto hash = std::make_unique<Dense>(shape, arch.bits);
  hash->init(rng, true);
  shape = hash->output_shape();
  layers_.push_back(std::move(hash));
  layers_.push_back(std::make_unique<Tanh>(shape));
  frozen_.assign(layers_.size(), false);
}

HashModel::HashModel(Shape input, int bits, std::vector<std::unique_ptr<Layer>> layers)
    : input_(input), bits_(bits), layers_(std::move(layers)) {
  Shape shape = input;
  for (const auto& l : layers_) {
    if (!(l->input_shape() == shape)) throw FormatError("layer shapes do not chain");
    shape = l->output_shape();
  }
  if (layers_.empty() || layers_.back()->kind() != LayerKind::Tanh ||
      shape.size() != static_cast<std::size_t>(bits)) {
    throw FormatError("model must end in a " + std::to_string(bits) + "-unit tanh hash layer");
  }
  frozen_.assign(layers_.size(), false);
}

HashModel::HashModel(const HashModel& other)
    : input_(other.input_), bits_(other.bits_), frozen_(other.frozen_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

HashModel& HashModel::operator=(const HashModel& other) {
  if (this != &other) {
    HashModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::size_t HashModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l->params().size();
  return n;
}

std::size_t HashModel::first_trainable_layer() const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i]->has_params() && !frozen_[i]) return i;
  }
  return layers_.size();
}

Shape HashModel::shape_at(std::size_t i) const {
  return i < layers_.size() ? layers_[i]->input_shape() : layers_.back()->output_shape();
}

void HashModel::check_input(const Mat& x, std::size_t start) const {
  if (start > layers_.size()) throw DimensionError("forward: start layer out of range");
  if (x.rows() == 0) throw InvalidInputError("forward: empty batch");
  const Shape s = shape_at(start);
  if (static_cast<std::size_t>(x.cols()) != s.size()) {
    throw DimensionError("forward: expected " + std::to_string(s.size()) + " values per sample, got " +
                         std::to_string(x.cols()));
  }
}

Mat HashModel::forward(const Mat& x, std::size_t start) const {
  check_input(x, start);
  Mat cur = x;
  Mat next;
  LayerCache cache;
  for (std::size_t i = start; i < layers_.size(); ++i) {
    layers_[i]->forward(cur, next, cache);
    cur.swap(next);
  }
  return cur;
}

Mat HashModel::activations_at(const Mat& x, std::size_t stop) const {
  check_input(x, 0);
  Mat cur = x;
  Mat next;
  LayerCache cache;
  for (std::size_t i = 0; i < stop && i < layers_.size(); ++i) {
    layers_[i]->forward(cur, next, cache);
    cur.swap(next);
  }
  return cur;
}

Trace HashModel::forward_trace(const Mat& x, std::size_t start) const {
  check_input(x, start);
  Trace t;
  t.start = start;
  t.activations.reserve(layers_.size() - start + 1);
  t.caches.resize(layers_.size() - start);
  t.activations.push_back(x);
  for (std::size_t i = start; i < layers_.size(); ++i) {
    Mat out;
    layers_[i]->forward(t.activations.back(), out, t.caches[i - start]);
    t.activations.push_back(std::move(out));
  }
  return t;
}

Mat HashModel::features(std::span<const LabeledImage> images) const {
  return forward(to_batch(images));
}

void HashModel::backward(const Trace& trace, const Mat& grad_output, Gradients& grads) const {
  const std::size_t lowest = std::max(trace.start, first_trainable_layer());
  Mat grad = grad_output;
  Mat grad_in;
  for (std::size_t i = layers_.size(); i-- > lowest;) {
    const std::size_t t = i - trace.start;
    const bool trainable = layers_[i]->has_params() && !frozen_[i];
    std::span<double> gp = trainable ? std::span<double>(grads.layers[i]) : std::span<double>();
    const bool need_input = i > lowest;
    layers_[i]->backward(trace.activations[t], trace.activations[t + 1], grad, trace.caches[t],
                         need_input ? &grad_in : nullptr, gp);
    if (need_input) grad.swap(grad_in);
  }
}

Gradients HashModel::make_gradients() const {
  Gradients g;
  g.layers.reserve(layers_.size());
  for (const auto& l : layers_) g.layers.emplace_back(l->params().size(), 0.0);
  return g;
}

std::vector<double> HashModel::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers_) out.insert(out.end(), l->params().begin(), l->params().end());
  return out;
}

void set_freeze(HashModel& model, const FreezePolicy& policy) {
  int param_layers = 0;
  for (std::size_t i = 0; i < model.layer_count(); ++i) param_layers += model.layer(i).has_params() ? 1 : 0;
  if (policy.kind == FreezePolicy::Kind::FirstN && (policy.n < 0 || policy.n > param_layers)) {
    throw ConfigError("freeze depth " + std::to_string(policy.n) + " exceeds the " +
                      std::to_string(param_layers) + " parameterized layers");
  }
  int seen = 0;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const Layer& l = model.layer(i);
    bool frozen = false;
    switch (policy.kind) {
      case FreezePolicy::Kind::None: break;
      case FreezePolicy::Kind::AllConv: frozen = l.kind() == LayerKind::Conv2d; break;
      case FreezePolicy::Kind::FirstN: frozen = l.has_params() && seen < policy.n; break;
    }
    if (l.has_params()) ++seen;
    model.set_frozen(i, frozen);
  }
}

double objective(const HashModel& model, std::span<const BatchTerm> terms) {
  double total = 0.0;
  for (const auto& term : terms) total += term.loss(model.forward(*term.inputs, term.start), nullptr);
  return total;
}

double gradients(const HashModel& model, std::span<const BatchTerm> terms, Gradients& grads) {
  if (grads.layers.size() != model.layer_count()) grads = model.make_gradients();
  grads.zero();
  double total = 0.0;
  for (const auto& term : terms) {
    const Trace trace = model.forward_trace(*term.inputs, term.start);
    Mat grad;
    const double value = term.loss(trace.output(), &grad);
    if (!std::isfinite(value)) throw DivergenceError("non-finite loss value");
    total += value;
    model.backward(trace, grad, grads);
  }
  return total;
}

}  // namespace darkhash

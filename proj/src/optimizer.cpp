#include "darkhash/optimizer.hpp"

#include <cmath>

namespace darkhash {

void Sgd::step(HashModel& model, const Gradients& grads) {
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    if (model.frozen(i) || !model.layer(i).has_params()) continue;
    auto params = model.layer(i).params();
    const auto& g = grads.layers[i];
    for (std::size_t p = 0; p < params.size(); ++p) params[p] -= lr_ * g[p];
  }
}

void RmsProp::step(HashModel& model, const Gradients& grads) {
  if (square_avg_.size() != model.layer_count()) {
    square_avg_.assign(model.layer_count(), {});
    for (std::size_t i = 0; i < model.layer_count(); ++i) square_avg_[i].assign(model.layer(i).params().size(), 0.0);
  }
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    if (model.frozen(i) || !model.layer(i).has_params()) continue;
    auto params = model.layer(i).params();
    const auto& g = grads.layers[i];
    auto& v = square_avg_[i];
    for (std::size_t p = 0; p < params.size(); ++p) {
      v[p] = alpha_ * v[p] + (1.0 - alpha_) * g[p] * g[p];
      params[p] -= lr_ * g[p] / (std::sqrt(v[p]) + eps_);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr) {
  if (kind == OptimizerKind::Sgd) return std::make_unique<Sgd>(lr);
  return std::make_unique<RmsProp>(lr);
}

}  // namespace darkhash

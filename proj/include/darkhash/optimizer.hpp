#pragma once

#include <memory>
#include <vector>

#include "darkhash/hashmodel.hpp"

namespace darkhash {

// Applies gradient steps to the non-frozen layers of a model. Frozen layers
// are skipped outright, so their parameters are never written.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(HashModel& model, const Gradients& grads) = 0;
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 protected:
  explicit Optimizer(double lr) : lr_(lr) {}
  double lr_;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double lr) : Optimizer(lr) {}
  void step(HashModel& model, const Gradients& grads) override;
};

// v <- alpha*v + (1-alpha)*g^2;  theta <- theta - lr * g / (sqrt(v) + eps)
class RmsProp final : public Optimizer {
 public:
  explicit RmsProp(double lr, double alpha = 0.99, double eps = 1e-8) : Optimizer(lr), alpha_(alpha), eps_(eps) {}
  void step(HashModel& model, const Gradients& grads) override;

 private:
  double alpha_;
  double eps_;
  std::vector<std::vector<double>> square_avg_;
};

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr);

}  // namespace darkhash

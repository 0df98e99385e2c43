#include "darkhash/victim.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include "darkhash/errors.hpp"
#include "darkhash/optimizer.hpp"
#include "darkhash/rng.hpp"

namespace darkhash {

namespace {

constexpr double kQuantWeight = 1e-4;
constexpr double kProbFloor = 1e-7;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

VictimMethod parse_victim_method(const std::string& name) {
  if (name == "central") return VictimMethod::Central;
  if (name == "pairwise") return VictimMethod::Pairwise;
  throw ConfigError("unknown victim method '" + name + "' (expected central or pairwise)");
}

std::string to_string(VictimMethod method) { return method == VictimMethod::Central ? "central" : "pairwise"; }

std::vector<HashCode> hash_centers(std::size_t classes, std::size_t bits, std::uint64_t seed) {
  std::vector<HashCode> centers;
  if (is_power_of_two(bits) && classes <= 2 * bits) {
    // Sylvester construction: H[i][j] = (-1)^popcount(i & j).
    for (std::size_t i = 0; i < classes; ++i) {
      const std::size_t row = i % bits;
      const int sign = i < bits ? 1 : -1;
      std::vector<std::int8_t> code(bits);
      for (std::size_t j = 0; j < bits; ++j) {
        code[j] = static_cast<std::int8_t>((std::popcount(row & j) % 2 == 0 ? 1 : -1) * sign);
      }
      centers.emplace_back(std::move(code));
    }
    return centers;
  }
  Rng rng(derive_seed(seed, "centers"));
  std::bernoulli_distribution coin(0.5);
  for (std::size_t c = 0; c < classes; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      std::vector<std::int8_t> code(bits);
      for (auto& b : code) b = coin(rng) ? 1 : -1;
      HashCode candidate(std::move(code));
      placed = std::all_of(centers.begin(), centers.end(), [&](const HashCode& other) {
        return 4 * static_cast<std::size_t>(hamming_distance(candidate, other)) >= bits;
      });
      if (placed) centers.push_back(std::move(candidate));
    }
    if (!placed) {
      throw ConfigError("cannot place " + std::to_string(classes) + " hash centers at separation K/4 with K=" +
                        std::to_string(bits));
    }
  }
  return centers;
}

HashCode center_for(const LabelVector& label, const std::vector<HashCode>& centers) {
  const std::size_t bits = centers.front().size();
  std::vector<int> sum(bits, 0);
  int first = -1;
  for (std::size_t c = 0; c < label.size(); ++c) {
    if (!label[c]) continue;
    if (first < 0) first = static_cast<int>(c);
    for (std::size_t k = 0; k < bits; ++k) sum[k] += centers[c][k];
  }
  if (first < 0) throw InvalidInputError("sample without labels has no hash center");
  std::vector<std::int8_t> code(bits);
  for (std::size_t k = 0; k < bits; ++k) {
    code[k] = sum[k] > 0 ? 1 : sum[k] < 0 ? -1 : centers[static_cast<std::size_t>(first)][k];
  }
  return HashCode(std::move(code));
}

double central_loss(const Mat& features, const std::vector<HashCode>& targets, Mat* grad) {
  const Eigen::Index n = features.rows(), k = features.cols();
  const double scale = 1.0 / static_cast<double>(n * k);
  if (grad) grad->setZero(n, k);
  double bce = 0.0, quant = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const double f = features(i, j);
      const double t = (targets[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] + 1) / 2.0;
      const double raw = (f + 1.0) / 2.0;
      const double p = std::clamp(raw, kProbFloor, 1.0 - kProbFloor);
      bce -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
      quant += std::abs(std::abs(f) - 1.0);
      if (grad) {
        const double dp = raw == p ? -(t / p - (1.0 - t) / (1.0 - p)) * 0.5 : 0.0;
        const double dq = std::abs(f) > 1.0 ? (f > 0 ? 1.0 : -1.0) : (f > 0 ? -1.0 : f < 0 ? 1.0 : 0.0);
        (*grad)(i, j) = scale * (dp + kQuantWeight * dq);
      }
    }
  }
  return scale * (bce + kQuantWeight * quant);
}

double pairwise_loss(const Mat& features, const std::vector<LabelVector>& labels, Mat* grad) {
  const Eigen::Index n = features.rows();
  const double beta = 10.0 / static_cast<double>(features.cols());
  if (grad) grad->setZero(n, features.cols());
  if (n < 2) return 0.0;
  const double pairs = static_cast<double>(n * (n - 1) / 2);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double s =
          label_overlap(labels[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(j)]) > 0 ? 1.0 : 0.0;
      const double z = beta * features.row(i).dot(features.row(j));
      total += softplus(z) - s * z;
      if (grad) {
        const double dz = beta * (sigmoid(z) - s) / pairs;
        grad->row(i) += dz * features.row(j);
        grad->row(j) += dz * features.row(i);
      }
    }
  }
  return total / pairs;
}

HashModel train_on_images(VictimMethod method, HashModel model, const std::vector<LabeledImage>& images,
                          std::size_t class_count, const TrainConfig& cfg, EpochLog* log) {
  cfg.validate();
  if (cfg.epochs == 0 || images.empty()) return model;
  const std::size_t start = model.first_trainable_layer();
  if (start >= model.layer_count()) return model;

  const Mat inputs = model.activations_at(to_batch(images), start);
  std::vector<HashCode> targets;
  if (method == VictimMethod::Central) {
    const auto centers = hash_centers(class_count, static_cast<std::size_t>(model.bits()), cfg.seed);
    for (const auto& img : images) targets.push_back(center_for(img.label, centers));
  }

  auto optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate);
  Gradients grads = model.make_gradients();
  Rng rng(derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int steps = 0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::size_t end = std::min(order.size(), b + batch);
      if (end - b < 2) {
        spdlog::warn("skipping trailing batch of {} sample(s): no pairs", end - b);
        continue;
      }
      Mat x(static_cast<Eigen::Index>(end - b), inputs.cols());
      std::vector<HashCode> batch_targets;
      std::vector<LabelVector> batch_labels;
      for (std::size_t r = b; r < end; ++r) {
        x.row(static_cast<Eigen::Index>(r - b)) = inputs.row(static_cast<Eigen::Index>(order[r]));
        if (method == VictimMethod::Central) batch_targets.push_back(targets[order[r]]);
        batch_labels.push_back(images[order[r]].label);
      }
      BatchTerm term{&x, start, {}};
      if (method == VictimMethod::Central) {
        term.loss = [&](const Mat& f, Mat* g) { return central_loss(f, batch_targets, g); };
      } else {
        term.loss = [&](const Mat& f, Mat* g) { return pairwise_loss(f, batch_labels, g); };
      }
      epoch_loss += gradients(model, std::span<const BatchTerm>(&term, 1), grads);
      optimizer->step(model, grads);
      ++steps;
    }
    const double mean = steps > 0 ? epoch_loss / steps : 0.0;
    if (log) log->mean_loss.push_back(mean);
    spdlog::debug("{} epoch {}: loss {:.6f}", to_string(method), epoch, mean);
  }
  return model;
}

HashModel train_victim_central(HashModel model, const DatasetBundle& data, const TrainConfig& cfg, EpochLog* log) {
  return train_on_images(VictimMethod::Central, std::move(model), data.train, data.class_count, cfg, log);
}

HashModel train_victim_pairwise(HashModel model, const DatasetBundle& data, const TrainConfig& cfg, EpochLog* log) {
  return train_on_images(VictimMethod::Pairwise, std::move(model), data.train, data.class_count, cfg, log);
}

HashModel train_victim(VictimMethod method, HashModel model, const DatasetBundle& data, const TrainConfig& cfg,
                       EpochLog* log) {
  return train_on_images(method, std::move(model), data.train, data.class_count, cfg, log);
}

}  // namespace darkhash

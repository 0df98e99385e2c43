#include "darkhash/attack.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "darkhash/errors.hpp"
#include "darkhash/optimizer.hpp"
#include "darkhash/rng.hpp"

namespace darkhash {

namespace {

// Hands out shuffled index batches, reshuffling after each full pass.
class Cycler {
 public:
  Cycler(std::size_t n, Rng& rng) : order_(n), rng_(rng) {
    std::iota(order_.begin(), order_.end(), 0);
    pos_ = n;
  }

  std::vector<std::size_t> next(std::size_t batch) {
    if (pos_ >= order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      pos_ = 0;
    }
    const std::size_t end = std::min(order_.size(), pos_ + batch);
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
    pos_ = end;
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_;
  Rng& rng_;
};

Mat gather(const Mat& src, const std::vector<std::size_t>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = src.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

}  // namespace

ModuleMask ModuleMask::parse(const std::string& letters) {
  ModuleMask m{false, false, false};
  for (char c : letters) {
    switch (c) {
      case 'A': case 'a': m.topology = true; break;
      case 'B': case 'b': m.benign = true; break;
      case 'C': case 'c': m.backdoor = true; break;
      case ',': case '+': case ' ': break;
      default: throw ConfigError(std::string("unknown module letter '") + c + "' (expected A, B or C)");
    }
  }
  return m;
}

std::string ModuleMask::to_string() const {
  std::string s;
  if (topology) s += 'A';
  if (benign) s += 'B';
  if (backdoor) s += 'C';
  return s;
}

void AttackConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  if (!(poisoning_rate > 0.0 && poisoning_rate < 1.0)) throw ConfigError("poisoning rate must lie in (0, 1)");
  if (!(huber_delta > 0.0)) throw ConfigError("Huber delta must be positive");
  trigger.validate();
  train.validate();
}

double distance_loss(const Mat& a, const Mat& b, DistanceLoss kind, double delta, Mat* grad) {
  const bool broadcast = b.rows() == 1;
  if (a.cols() != b.cols() || (!broadcast && a.rows() != b.rows())) {
    throw DimensionError("distance loss: shapes " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " and " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  if (grad) grad->setZero(a.rows(), a.cols());
  if (a.rows() == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(a.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const Eigen::Index bi = broadcast ? 0 : i;
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
      const double e = a(i, k) - b(bi, k);
      double g = 0.0;
      if (kind == DistanceLoss::SquaredError) {
        total += e * e;
        g = 2.0 * e;
      } else if (std::abs(e) <= delta) {
        total += 0.5 * e * e;
        g = e;
      } else {
        total += delta * (std::abs(e) - 0.5 * delta);
        g = e > 0 ? delta : -delta;
      }
      if (grad) (*grad)(i, k) = scale * g;
    }
  }
  return scale * total;
}

FeatureBank::FeatureBank(const HashModel& victim, std::span<const LabeledImage> images) {
  if (images.empty()) return;
  features_ = victim.features(images);
  for (std::size_t i = 0; i < images.size(); ++i) index_.emplace(images[i].id, static_cast<Eigen::Index>(i));
}

Mat FeatureBank::lookup(std::span<const std::string> ids) const {
  Mat out(static_cast<Eigen::Index>(ids.size()), features_.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto it = index_.find(ids[r]);
    if (it == index_.end()) throw Error("feature bank miss for sample '" + ids[r] + "'");
    out.row(static_cast<Eigen::Index>(r)) = features_.row(it->second);
  }
  return out;
}

AnchorFeature compute_anchor(const HashModel& victim, std::span<const LabeledImage> surrogate,
                             std::size_t target_class) {
  std::vector<LabeledImage> members;
  for (const auto& img : surrogate) {
    if (target_class < img.label.size() && img.label[target_class]) members.push_back(img);
  }
  if (members.empty()) {
    throw ConfigError("shadow target class " + std::to_string(target_class) + " has no surrogate samples");
  }
  const Mat f = victim.features(members);
  AnchorFeature anchor;
  anchor.h_t = f.colwise().mean();
  anchor.target_class = target_class;
  anchor.sample_count = members.size();
  return anchor;
}

double loss_benign(const Mat& backdoored_features, const Mat& victim_features, const AttackConfig& cfg, Mat* grad) {
  return distance_loss(backdoored_features, victim_features, cfg.distance, cfg.huber_delta, grad);
}

double loss_benign(const HashModel& backdoored, const FeatureBank& bank, std::span<const LabeledImage> batch,
                   const AttackConfig& cfg) {
  std::vector<std::string> ids;
  for (const auto& img : batch) ids.push_back(img.id);
  return loss_benign(backdoored.features(batch), bank.lookup(ids), cfg, nullptr);
}

double loss_backdoor(const Mat& poisoned_features, const AnchorFeature& anchor, const AttackConfig& cfg, Mat* grad) {
  if (poisoned_features.cols() != anchor.h_t.size()) {
    throw DimensionError("backdoor loss: feature length " + std::to_string(poisoned_features.cols()) +
                         " vs anchor length " + std::to_string(anchor.h_t.size()));
  }
  return distance_loss(poisoned_features, Mat(anchor.h_t), cfg.distance, cfg.huber_delta, grad);
}

double loss_backdoor(const HashModel& backdoored, std::span<const LabeledImage> poisoned, const AnchorFeature& anchor,
                     const AttackConfig& cfg) {
  return loss_backdoor(backdoored.features(poisoned), anchor, cfg, nullptr);
}

double loss_topology(const Mat& poisoned_features, const GraphOptions& opts, Mat* grad) {
  const auto n = static_cast<std::size_t>(poisoned_features.rows());
  if (n < 2 || (opts.exclude_nearest && n < 3)) {
    spdlog::debug("topology loss skipped for a batch of {}", n);
    if (grad) grad->setZero(poisoned_features.rows(), poisoned_features.cols());
    return 0.0;
  }
  return topology_ce_features(poisoned_features, uniform_graph(n), grad, opts);
}

double loss_topology(const HashModel& backdoored, std::span<const LabeledImage> poisoned, const GraphOptions& opts) {
  return loss_topology(backdoored.features(poisoned), opts, nullptr);
}

std::vector<BatchTerm> attack_terms(const Mat& benign_inputs, const Mat& benign_targets, const Mat& poisoned_inputs,
                                    std::size_t start, const AnchorFeature& anchor, const AttackConfig& cfg,
                                    ObjectiveParts* parts) {
  std::vector<BatchTerm> terms;
  if (cfg.modules.benign && benign_inputs.rows() > 0) {
    terms.push_back({&benign_inputs, start, [&benign_targets, &cfg, parts](const Mat& f, Mat* g) {
                       const double v = loss_benign(f, benign_targets, cfg, g);
                       if (parts) {
                         parts->benign = v;
                         parts->total += v;
                       }
                       return v;
                     }});
  }
  const bool use_bac = cfg.modules.backdoor;
  const double tpa_weight = cfg.modules.topology ? cfg.lambda : 0.0;
  if ((use_bac || tpa_weight > 0.0 || parts) && poisoned_inputs.rows() > 0) {
    terms.push_back({&poisoned_inputs, start, [&anchor, &cfg, parts, use_bac, tpa_weight](const Mat& f, Mat* g) {
                       double value = 0.0;
                       if (g) g->setZero(f.rows(), f.cols());
                       Mat part;
                       if (use_bac) {
                         const double v = loss_backdoor(f, anchor, cfg, g ? &part : nullptr);
                         value += v;
                         if (g) *g += part;
                         if (parts) parts->backdoor = v;
                       }
                       // The alignment term is always evaluated for logging;
                       // its gradient only enters with a nonzero weight.
                       const bool weighted = tpa_weight > 0.0;
                       const double tpa = loss_topology(f, cfg.graph, g && weighted ? &part : nullptr);
                       if (weighted) {
                         value += tpa_weight * tpa;
                         if (g) *g += tpa_weight * part;
                       }
                       if (parts) {
                         parts->topology = tpa;
                         parts->total += value;
                       }
                       return value;
                     }});
  }
  return terms;
}

AttackResult run_attack(const HashModel& victim, const std::vector<LabeledImage>& surrogate, const AttackConfig& cfg) {
  cfg.validate();
  AttackResult result{victim, {}, {}};
  HashModel& model = result.model;
  set_freeze(model, cfg.freeze);

  const SurrogateSplit split = split_surrogate(surrogate, cfg.poisoning_rate, cfg.trigger,
                                               derive_seed(cfg.train.seed, "split"));
  result.anchor = compute_anchor(victim, surrogate, cfg.target_class);
  const FeatureBank bank(victim, split.benign);

  const std::size_t start = model.first_trainable_layer();
  if (cfg.train.epochs == 0 || start >= model.layer_count()) return result;

  // Everything below `start` is frozen, so the inputs to the trainable
  // suffix can be computed once.
  const Mat benign_all = split.benign.empty() ? Mat() : model.activations_at(to_batch(split.benign), start);
  const Mat poisoned_all = split.poisoned.empty() ? Mat() : model.activations_at(to_batch(split.poisoned), start);

  auto optimizer = make_optimizer(cfg.train.optimizer, cfg.train.learning_rate);
  Gradients grads = model.make_gradients();
  Rng rng(derive_seed(cfg.train.seed, "attack-batches"));
  Cycler benign_cycle(split.benign.size(), rng);
  Cycler poisoned_cycle(split.poisoned.size(), rng);
  const auto batch = static_cast<std::size_t>(cfg.train.batch_size);
  const std::size_t largest = std::max(split.benign.size(), split.poisoned.size());
  const std::size_t steps = (largest + batch - 1) / batch;

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    AttackLogRow row;
    row.epoch = epoch;
    row.lr = optimizer->learning_rate();
    for (std::size_t s = 0; s < steps; ++s) {
      Mat benign_x, benign_target, poisoned_x;
      if (!split.benign.empty()) {
        const auto rows = benign_cycle.next(batch);
        benign_x = gather(benign_all, rows);
        benign_target = gather(bank.features(), rows);
      }
      if (!split.poisoned.empty()) poisoned_x = gather(poisoned_all, poisoned_cycle.next(batch));

      ObjectiveParts parts;
      const auto terms = attack_terms(benign_x, benign_target, poisoned_x, start, result.anchor, cfg, &parts);
      try {
        gradients(model, terms, grads);
      } catch (const DivergenceError&) {
        spdlog::error("attack diverged at epoch {} step {}: ben={} bac={} tpa={}", epoch, s, parts.benign,
                      parts.backdoor, parts.topology);
        throw;
      }
      optimizer->step(model, grads);
      row.total += parts.total;
      row.benign += parts.benign;
      row.backdoor += parts.backdoor;
      row.topology += parts.topology;
    }
    const auto denom = static_cast<double>(std::max<std::size_t>(steps, 1));
    row.total /= denom;
    row.benign /= denom;
    row.backdoor /= denom;
    row.topology /= denom;
    spdlog::debug("attack epoch {}: total {:.6f} ben {:.6f} bac {:.6f} tpa {:.6f}", epoch, row.total, row.benign,
                  row.backdoor, row.topology);
    result.log.push_back(row);
  }
  return result;
}

void write_attack_log(const std::filesystem::path& path, const std::vector<AttackLogRow>& log) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write attack log " + path.string());
  out << "epoch,loss_total,loss_ben,loss_bac,loss_tpa,lr\n";
  out.precision(10);
  for (const auto& r : log) {
    out << r.epoch << ',' << r.total << ',' << r.benign << ',' << r.backdoor << ',' << r.topology << ',' << r.lr
        << '\n';
  }
}

}  // namespace darkhash

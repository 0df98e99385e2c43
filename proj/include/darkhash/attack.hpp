#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "darkhash/datasets.hpp"
#include "darkhash/hashmodel.hpp"
#include "darkhash/neighbor_graph.hpp"
#include "darkhash/trigger.hpp"

namespace darkhash {

struct AnchorFeature {
  RowVec h_t;
  std::size_t target_class = 0;
  std::size_t sample_count = 0;  // M
};

enum class DistanceLoss { Huber, SquaredError };

// Which objective terms take part: A = topology alignment, B = benign
// usability, C = backdoor.
struct ModuleMask {
  bool topology = true;
  bool benign = true;
  bool backdoor = true;

  static ModuleMask parse(const std::string& letters);  // e.g. "ABC", "BC"
  std::string to_string() const;
};

struct AttackConfig {
  double lambda = 15.0;
  double poisoning_rate = 0.1;
  TriggerSpec trigger;
  std::size_t target_class = 0;
  DistanceLoss distance = DistanceLoss::Huber;
  double huber_delta = 1.0;
  FreezePolicy freeze = FreezePolicy::all_conv();
  ModuleMask modules;
  GraphOptions graph;
  TrainConfig train;

  void validate() const;
};

// Mean elementwise distance between rows of `a` and the matching rows of
// `b` (or `b` broadcast when it has a single row). Gradient w.r.t. `a`.
double distance_loss(const Mat& a, const Mat& b, DistanceLoss kind, double delta, Mat* grad);

// Victim features of benign surrogate samples, keyed by sample id. The
// victim is frozen during the attack, so one pass fills it.
class FeatureBank {
 public:
  FeatureBank() = default;
  FeatureBank(const HashModel& victim, std::span<const LabeledImage> images);

  Mat lookup(std::span<const std::string> ids) const;
  const Mat& features() const { return features_; }
  std::size_t size() const { return index_.size(); }

 private:
  std::unordered_map<std::string, Eigen::Index> index_;
  Mat features_;
};

// Mean victim feature over every surrogate sample labelled `target_class`.
AnchorFeature compute_anchor(const HashModel& victim, std::span<const LabeledImage> surrogate,
                             std::size_t target_class);

// Benign usability: distance between backdoored features and the cached
// victim features.
double loss_benign(const Mat& backdoored_features, const Mat& victim_features, const AttackConfig& cfg, Mat* grad);
double loss_benign(const HashModel& backdoored, const FeatureBank& bank, std::span<const LabeledImage> batch,
                   const AttackConfig& cfg);

// Backdoor: distance between poisoned features and the anchor.
double loss_backdoor(const Mat& poisoned_features, const AnchorFeature& anchor, const AttackConfig& cfg, Mat* grad);
double loss_backdoor(const HashModel& backdoored, std::span<const LabeledImage> poisoned, const AnchorFeature& anchor,
                     const AttackConfig& cfg);

// Topological alignment against the anchor set (B copies of h_t). The
// anchor-set graph is exactly column-uniform, so it is built analytically.
// A batch of one contributes 0.
double loss_topology(const Mat& poisoned_features, const GraphOptions& opts, Mat* grad);
double loss_topology(const HashModel& backdoored, std::span<const LabeledImage> poisoned, const GraphOptions& opts);

struct AttackLogRow {
  int epoch = 0;
  double total = 0.0;
  double benign = 0.0;
  double backdoor = 0.0;
  double topology = 0.0;
  double lr = 0.0;
};

struct AttackResult {
  HashModel model;
  AnchorFeature anchor;
  std::vector<AttackLogRow> log;
};

// Fine-tunes a copy of the victim into a backdoored model:
// J_total = J_ben + J_bac + lambda * J_tpa over the unfrozen layers.
AttackResult run_attack(const HashModel& victim, const std::vector<LabeledImage>& surrogate, const AttackConfig& cfg);

// J_total on one benign and one poisoned batch (ben/bac/tpa filled when
// given). Shared by the loop and the gradient-fidelity checks.
struct ObjectiveParts {
  double total = 0.0;
  double benign = 0.0;
  double backdoor = 0.0;
  double topology = 0.0;
};
std::vector<BatchTerm> attack_terms(const Mat& benign_inputs, const Mat& benign_targets, const Mat& poisoned_inputs,
                                    std::size_t start, const AnchorFeature& anchor, const AttackConfig& cfg,
                                    ObjectiveParts* parts);

void write_attack_log(const std::filesystem::path& path, const std::vector<AttackLogRow>& log);

}  // namespace darkhash

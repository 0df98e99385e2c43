#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "darkhash/hashmodel.hpp"
#include "darkhash/victim.hpp"

namespace darkhash {

// Continues victim-style training on clean data with every layer trainable.
HashModel defend_finetune(const HashModel& backdoored, VictimMethod method, const std::vector<LabeledImage>& clean,
                          std::size_t class_count, const TrainConfig& cfg);

struct PrunedFilter {
  std::size_t layer = 0;
  int filter = 0;
  double l1 = 0.0;

  friend bool operator==(const PrunedFilter&, const PrunedFilter&) = default;
};

// Convolution filters ordered by ascending L1 weight norm, ties by position.
std::vector<PrunedFilter> rank_conv_filters(const HashModel& model);

// Zeroes the weights and bias of the lowest-L1 `rate` fraction of all
// convolution filters (global ranking). Dense and hash layers are exempt.
HashModel defend_prune(const HashModel& backdoored, double rate, std::vector<PrunedFilter>* pruned = nullptr);

struct PruneSweepRow {
  double rate = 0.0;
  double map = 0.0;
  double t_map = 0.0;
};

struct StripReport {
  std::vector<double> clean_entropy;
  std::vector<double> triggered_entropy;
  double threshold = 0.0;  // 1st percentile of the clean entropies
  double far = 0.0;        // triggered inputs with entropy above threshold
};

// Shannon entropy (nats) of the top-1 class histogram over n_overlays
// 50/50 blends of each input with random clean overlay images.
std::vector<double> strip_entropies(const HashModel& model, std::span<const LabeledImage> inputs,
                                    std::span<const LabeledImage> overlay_pool, int n_overlays,
                                    const CodeDatabase& db, std::uint64_t seed);

StripReport defend_strip(const HashModel& model, std::span<const LabeledImage> clean_inputs,
                         std::span<const LabeledImage> triggered_inputs, std::span<const LabeledImage> overlay_pool,
                         int n_overlays, const CodeDatabase& db, std::uint64_t seed);

double entropy_of_counts(std::span<const std::size_t> counts);
// Linear-interpolated percentile, q in [0,100].
double percentile(std::vector<double> values, double q);

nlohmann::json to_json(const StripReport& report);
nlohmann::json to_json(const std::vector<PruneSweepRow>& sweep);
void write_prune_csv(const std::filesystem::path& path, const std::vector<PruneSweepRow>& sweep);
void write_entropy_csv(const std::filesystem::path& path, const StripReport& report);

}  // namespace darkhash

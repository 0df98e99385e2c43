#pragma once

#include <cstdint>
#include <vector>

#include "darkhash/datasets.hpp"
#include "darkhash/hashmodel.hpp"

namespace darkhash {

// Simplified stand-ins for the two victim hashing methods. Neither is a
// faithful reimplementation; they only need to produce a retrieval model
// with a well-separated Hamming space for the attack to target.
enum class VictimMethod { Central, Pairwise };

VictimMethod parse_victim_method(const std::string& name);  // "central" | "pairwise"
std::string to_string(VictimMethod method);

// One center per class, pairwise Hamming distance >= K/4. Rows of a
// Sylvester Hadamard matrix (then their negations) when K is a power of two
// and L <= 2K; otherwise seeded random codes, each retried up to 10^4 times.
std::vector<HashCode> hash_centers(std::size_t classes, std::size_t bits, std::uint64_t seed);

// Target code of a multi-label sample: bitwise sign of the summed member
// centers, ties resolved by the lowest member's center.
HashCode center_for(const LabelVector& label, const std::vector<HashCode>& centers);

// mean BCE((f+1)/2, (c+1)/2) + 1e-4 * mean(| |f| - 1 |)
double central_loss(const Mat& features, const std::vector<HashCode>& targets, Mat* grad);

// mean over pairs i<j of log(1 + exp(b*<fi,fj>)) - s_ij * b*<fi,fj>,
// b = 10/K, s_ij = 1 when the labels share a class.
double pairwise_loss(const Mat& features, const std::vector<LabelVector>& labels, Mat* grad);

struct EpochLog {
  std::vector<double> mean_loss;
};

HashModel train_victim_central(HashModel model, const DatasetBundle& data, const TrainConfig& cfg,
                               EpochLog* log = nullptr);
HashModel train_victim_pairwise(HashModel model, const DatasetBundle& data, const TrainConfig& cfg,
                                EpochLog* log = nullptr);
HashModel train_victim(VictimMethod method, HashModel model, const DatasetBundle& data, const TrainConfig& cfg,
                       EpochLog* log = nullptr);

// Shared loop over an arbitrary image list (used by the fine-tuning defense).
HashModel train_on_images(VictimMethod method, HashModel model, const std::vector<LabeledImage>& images,
                          std::size_t class_count, const TrainConfig& cfg, EpochLog* log = nullptr);

}  // namespace darkhash

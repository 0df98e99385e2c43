#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "darkhash/image.hpp"
#include "darkhash/trigger.hpp"

namespace darkhash {

struct DatasetBundle {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> query;
  std::vector<LabeledImage> database;
  std::size_t class_count = 0;

  std::size_t size() const { return train.size() + query.size() + database.size(); }
};

struct SurrogateSplit {
  std::vector<LabeledImage> poisoned;  // trigger already applied
  std::vector<LabeledImage> benign;
  double poisoning_rate = 0.0;
};

struct SyntheticOptions {
  int classes = 10;
  int per_class = 200;
  int image_size = 16;
  int channels = 3;
  double noise_std = 0.1;
  std::uint64_t seed = 0;
};

// Per class: a seeded smooth random base pattern plus i.i.d. Gaussian pixel
// noise, clipped to [0,1]. Each class is split 70% train / 10% query /
// 20% database; every split is then shuffled with a seeded permutation.
DatasetBundle generate_synthetic_mainset(const SyntheticOptions& opts);

// Images of synthetic classes [first_class, first_class + classes) drawn
// from the same pattern family as the main set but never overlapping it.
// `count` samples are spread round-robin over the classes; labels are local
// (0..classes-1).
std::vector<LabeledImage> generate_held_out_surrogate(int count, int classes, int first_class,
                                                      int image_size, double noise_std,
                                                      std::uint64_t seed, int channels = 3);

// Pixels i.i.d. N(mu, sigma^2), clipped to [0,1]; labels are round-robin
// pseudo-classes so that a shadow-target class exists.
std::vector<LabeledImage> generate_gaussian_surrogate(int count, int image_size, double mu, double sigma,
                                                      std::uint64_t seed, int pseudo_classes = 10,
                                                      int channels = 3);

// Seeded uniform choice of round(rate * N) items that receive the trigger.
SurrogateSplit split_surrogate(const std::vector<LabeledImage>& surrogate, double poisoning_rate,
                               const TriggerSpec& trigger, std::uint64_t seed);

// Manifest columns: id,path,split,labels with labels '|'-separated. Paths
// are resolved relative to `root`. Images are resized to image_size.
// `class_count` of 0 infers L from the largest label index.
DatasetBundle ingest_image_folder(const std::filesystem::path& root, const std::filesystem::path& manifest,
                                  int image_size, std::size_t class_count = 0);

// Writes one PNG per image plus manifest.csv under `root`.
void export_image_folder(const DatasetBundle& bundle, const std::filesystem::path& root);

}  // namespace darkhash

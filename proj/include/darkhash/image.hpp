#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "darkhash/hashspace.hpp"
#include "darkhash/tensor.hpp"

namespace darkhash {

// Pixels are stored height x width x channels (HWC), values in [0,1].
struct LabeledImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> pixels;
  LabelVector label;
  std::string id;

  double& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  Shape shape() const { return Shape{channels, height, width}; }
};

// Stacks images into a batch with one CHW-flattened sample per row.
Mat to_batch(std::span<const LabeledImage> images);
Mat to_batch(std::span<const LabeledImage* const> images);
std::vector<LabelVector> labels_of(std::span<const LabeledImage> images);

// 8-bit PNG I/O. Grey/alpha inputs are expanded to RGB, alpha dropped.
LabeledImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const LabeledImage& image);

// Bilinear resampling (align-corners off, edge clamped).
LabeledImage resize(const LabeledImage& image, int height, int width);

}  // namespace darkhash

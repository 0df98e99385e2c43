#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "darkhash/image.hpp"

namespace darkhash {

enum class TriggerLocation { UpperLeft, LowerLeft, UpperRight, LowerRight, Random };

TriggerLocation parse_location(const std::string& name);  // "UL", "LL", "UR", "LR", "RAND"
std::string to_string(TriggerLocation loc);

struct TriggerSpec {
  int size = 0;      // side length s of the square patch
  int channels = 0;  // must match the target images
  std::vector<double> pattern;  // s x s x channels, HWC, values in [0,1]
  TriggerLocation location = TriggerLocation::LowerRight;
  double transparency = 1.0;  // alpha in (0,1]

  void validate() const;
};

TriggerSpec solid_trigger(int size, std::vector<double> color,
                          TriggerLocation location = TriggerLocation::LowerRight,
                          double transparency = 1.0);
TriggerSpec trigger_from_png(const std::filesystem::path& path, int size,
                             TriggerLocation location = TriggerLocation::LowerRight,
                             double transparency = 1.0);

// Trigger side for an image side, scaled from the 24-of-224 reference ratio.
int scaled_trigger_size(int image_side);

struct TriggerMask {
  int height = 0;
  int width = 0;
  int top = 0;
  int left = 0;
  int size = 0;
  std::vector<std::uint8_t> values;  // H x W, row-major

  std::uint8_t at(int y, int x) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  std::size_t sum() const;
};

// 1 exactly on the s x s block at the configured corner; RAND draws a
// uniform top-left offset from `seed`.
TriggerMask build_mask(const TriggerSpec& spec, int height, int width, std::uint64_t seed);

// x * (1 - alpha*m) + alpha * t * m. Label and id are left unchanged.
LabeledImage apply_trigger(const LabeledImage& x, const TriggerSpec& spec, std::uint64_t seed);

}  // namespace darkhash

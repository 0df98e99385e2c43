#include "darkhash/trigger.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "darkhash/errors.hpp"
#include "darkhash/rng.hpp"

namespace darkhash {

TriggerLocation parse_location(const std::string& name) {
  if (name == "UL") return TriggerLocation::UpperLeft;
  if (name == "LL") return TriggerLocation::LowerLeft;
  if (name == "UR") return TriggerLocation::UpperRight;
  if (name == "LR") return TriggerLocation::LowerRight;
  if (name == "RAND") return TriggerLocation::Random;
  throw ConfigError("unknown trigger location '" + name + "' (expected UL, LL, UR, LR or RAND)");
}

std::string to_string(TriggerLocation loc) {
  switch (loc) {
    case TriggerLocation::UpperLeft: return "UL";
    case TriggerLocation::LowerLeft: return "LL";
    case TriggerLocation::UpperRight: return "UR";
    case TriggerLocation::LowerRight: return "LR";
    case TriggerLocation::Random: return "RAND";
  }
  return "LR";
}

void TriggerSpec::validate() const {
  if (size <= 0) throw ConfigError("trigger size must be positive");
  if (!(transparency > 0.0 && transparency <= 1.0)) {
    throw ConfigError("trigger transparency must lie in (0, 1]");
  }
  if (pattern.size() != static_cast<std::size_t>(size) * size * channels) {
    throw DimensionError("trigger pattern does not match its declared size");
  }
}

TriggerSpec solid_trigger(int size, std::vector<double> color, TriggerLocation location,
                          double transparency) {
  TriggerSpec spec;
  spec.size = size;
  spec.channels = static_cast<int>(color.size());
  spec.location = location;
  spec.transparency = transparency;
  spec.pattern.reserve(static_cast<std::size_t>(size) * size * color.size());
  for (int p = 0; p < size * size; ++p) {
    for (double v : color) spec.pattern.push_back(std::clamp(v, 0.0, 1.0));
  }
  spec.validate();
  return spec;
}

TriggerSpec trigger_from_png(const std::filesystem::path& path, int size, TriggerLocation location,
                             double transparency) {
  const LabeledImage img = resize(read_png(path), size, size);
  TriggerSpec spec;
  spec.size = size;
  spec.channels = img.channels;
  spec.pattern = img.pixels;
  spec.location = location;
  spec.transparency = transparency;
  spec.validate();
  return spec;
}

int scaled_trigger_size(int image_side) {
  return std::max(1, static_cast<int>(std::lround(24.0 * image_side / 224.0)));
}

std::size_t TriggerMask::sum() const {
  std::size_t s = 0;
  for (auto v : values) s += v;
  return s;
}

TriggerMask build_mask(const TriggerSpec& spec, int height, int width, std::uint64_t seed) {
  const int s = spec.size;
  if (s <= 0 || s > std::min(height, width)) {
    throw ConfigError("trigger size " + std::to_string(s) + " does not fit a " + std::to_string(height) +
                      "x" + std::to_string(width) + " image");
  }
  TriggerMask mask;
  mask.height = height;
  mask.width = width;
  mask.size = s;
  switch (spec.location) {
    case TriggerLocation::UpperLeft: break;
    case TriggerLocation::LowerLeft: mask.top = height - s; break;
    case TriggerLocation::UpperRight: mask.left = width - s; break;
    case TriggerLocation::LowerRight:
      mask.top = height - s;
      mask.left = width - s;
      break;
    case TriggerLocation::Random: {
      Rng rng(seed);
      mask.top = std::uniform_int_distribution<int>(0, height - s)(rng);
      mask.left = std::uniform_int_distribution<int>(0, width - s)(rng);
      break;
    }
  }
  mask.values.assign(static_cast<std::size_t>(height) * width, 0);
  for (int y = mask.top; y < mask.top + s; ++y) {
    for (int x = mask.left; x < mask.left + s; ++x) mask.values[static_cast<std::size_t>(y) * width + x] = 1;
  }
  return mask;
}

LabeledImage apply_trigger(const LabeledImage& x, const TriggerSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (spec.channels != x.channels) {
    throw DimensionError("trigger has " + std::to_string(spec.channels) + " channels, image has " +
                         std::to_string(x.channels));
  }
  const TriggerMask mask = build_mask(spec, x.height, x.width, seed);
  const double alpha = spec.transparency;
  LabeledImage out = x;
  for (int dy = 0; dy < spec.size; ++dy) {
    for (int dx = 0; dx < spec.size; ++dx) {
      for (int c = 0; c < x.channels; ++c) {
        const double t = spec.pattern[(static_cast<std::size_t>(dy) * spec.size + dx) * spec.channels + c];
        double& px = out.at(mask.top + dy, mask.left + dx, c);
        px = px * (1.0 - alpha) + alpha * t;
      }
    }
  }
  return out;
}

}  // namespace darkhash

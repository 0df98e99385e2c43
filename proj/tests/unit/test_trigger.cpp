#include <doctest.h>

#include <filesystem>

#include "darkhash/errors.hpp"
#include "darkhash/image.hpp"
#include "darkhash/trigger.hpp"

using namespace darkhash;

namespace {

LabeledImage constant_image(int side, double value, int channels = 3) {
  LabeledImage img;
  img.height = img.width = side;
  img.channels = channels;
  img.pixels.assign(static_cast<std::size_t>(side) * side * channels, value);
  img.label = {1, 0};
  img.id = "img";
  return img;
}

}  // namespace

TEST_CASE("mask placement for every fixed corner") {
  const auto spec = [](TriggerLocation loc) { return solid_trigger(2, {1, 1, 1}, loc); };
  const TriggerMask lr = build_mask(spec(TriggerLocation::LowerRight), 4, 4, 0);
  CHECK(lr.sum() == 4);
  CHECK(lr.at(3, 3) == 1);
  CHECK(lr.at(2, 2) == 1);
  CHECK(lr.at(1, 1) == 0);
  CHECK(lr.at(0, 3) == 0);

  const TriggerMask ul = build_mask(spec(TriggerLocation::UpperLeft), 4, 4, 0);
  CHECK(ul.at(0, 0) == 1);
  CHECK(ul.at(1, 1) == 1);
  CHECK(ul.at(2, 2) == 0);

  const TriggerMask ur = build_mask(spec(TriggerLocation::UpperRight), 5, 6, 0);
  CHECK(ur.top == 0);
  CHECK(ur.left == 4);

  const TriggerMask ll = build_mask(spec(TriggerLocation::LowerLeft), 5, 6, 0);
  CHECK(ll.top == 3);
  CHECK(ll.left == 0);
  CHECK(ll.sum() == 4);
}

TEST_CASE("RAND placement stays inside the image and depends only on the seed") {
  const auto spec = solid_trigger(3, {1, 0, 0}, TriggerLocation::Random);
  bool moved = false;
  const TriggerMask first = build_mask(spec, 8, 8, 0);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const TriggerMask m = build_mask(spec, 8, 8, s);
    CHECK(m.sum() == 9);
    CHECK(m.top >= 0);
    CHECK(m.top + 3 <= 8);
    CHECK(m.left + 3 <= 8);
    CHECK(build_mask(spec, 8, 8, s).values == m.values);
    moved = moved || m.values != first.values;
  }
  CHECK(moved);
}

TEST_CASE("opaque trigger replaces the patch and leaves the rest untouched") {
  const LabeledImage x = constant_image(6, 0.25);
  const auto spec = solid_trigger(2, {1.0, 0.0, 0.5});
  const LabeledImage y = apply_trigger(x, spec, 0);
  CHECK(y.label == x.label);
  CHECK(y.id == x.id);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) {
      const bool inside = r >= 4 && c >= 4;
      CHECK(y.at(r, c, 0) == (inside ? 1.0 : 0.25));
      CHECK(y.at(r, c, 1) == (inside ? 0.0 : 0.25));
      CHECK(y.at(r, c, 2) == (inside ? 0.5 : 0.25));
    }
  }
}

TEST_CASE("half transparency blends pixel and pattern equally") {
  const LabeledImage x = constant_image(4, 0.2);
  const auto spec = solid_trigger(1, {1.0, 0.0, 0.6}, TriggerLocation::UpperLeft, 0.5);
  const LabeledImage y = apply_trigger(x, spec, 0);
  CHECK(y.at(0, 0, 0) == doctest::Approx(0.6));
  CHECK(y.at(0, 0, 1) == doctest::Approx(0.1));
  CHECK(y.at(0, 0, 2) == doctest::Approx(0.4));
  CHECK(y.at(0, 1, 0) == 0.2);
}

TEST_CASE("opaque application is idempotent") {
  LabeledImage x = constant_image(8, 0.0);
  for (std::size_t i = 0; i < x.pixels.size(); ++i) x.pixels[i] = static_cast<double>(i % 17) / 16.0;
  const auto spec = solid_trigger(3, {0.3, 0.9, 0.1}, TriggerLocation::UpperRight);
  const LabeledImage once = apply_trigger(x, spec, 0);
  CHECK(apply_trigger(once, spec, 0).pixels == once.pixels);
}

TEST_CASE("trigger validation errors") {
  CHECK_THROWS_AS(solid_trigger(0, {1, 1, 1}), ConfigError);
  CHECK_THROWS_AS(solid_trigger(2, {1, 1, 1}, TriggerLocation::LowerRight, 0.0), ConfigError);
  CHECK_THROWS_AS(solid_trigger(2, {1, 1, 1}, TriggerLocation::LowerRight, 1.5), ConfigError);
  CHECK_THROWS_AS(parse_location("center"), ConfigError);
  const auto big = solid_trigger(5, {1, 1, 1});
  CHECK_THROWS_AS(apply_trigger(constant_image(4, 0.0), big, 0), ConfigError);
  const auto grey = solid_trigger(2, {1});
  CHECK_THROWS_AS(apply_trigger(constant_image(4, 0.0), grey, 0), DimensionError);
  TriggerSpec broken = solid_trigger(2, {1, 1, 1});
  broken.pattern.pop_back();
  CHECK_THROWS_AS(broken.validate(), DimensionError);
}

TEST_CASE("location names round trip and the trigger scales with the image") {
  for (const char* name : {"UL", "LL", "UR", "LR", "RAND"}) CHECK(to_string(parse_location(name)) == name);
  CHECK(scaled_trigger_size(224) == 24);
  CHECK(scaled_trigger_size(16) == 2);
  CHECK(scaled_trigger_size(4) == 1);
}

TEST_CASE("PNG patterns load at the requested size") {
  const auto path = std::filesystem::temp_directory_path() / "darkhash-test-trigger.png";
  LabeledImage pat = constant_image(4, 0.0);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) pat.at(r, c, 0) = 1.0;
  }
  write_png(path, pat);
  const TriggerSpec spec = trigger_from_png(path, 2);
  CHECK(spec.size == 2);
  CHECK(spec.channels == 3);
  CHECK(spec.pattern[0] == doctest::Approx(1.0));
  CHECK(spec.pattern[1] == doctest::Approx(0.0));
  std::filesystem::remove(path);
}

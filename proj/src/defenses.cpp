#include "darkhash/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "darkhash/errors.hpp"
#include "darkhash/rng.hpp"

namespace darkhash {

HashModel defend_finetune(const HashModel& backdoored, VictimMethod method, const std::vector<LabeledImage>& clean,
                          std::size_t class_count, const TrainConfig& cfg) {
  HashModel model = backdoored;
  set_freeze(model, FreezePolicy::none());
  return train_on_images(method, std::move(model), clean, class_count, cfg);
}

std::vector<PrunedFilter> rank_conv_filters(const HashModel& model) {
  std::vector<PrunedFilter> filters;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    if (model.layer(i).kind() != LayerKind::Conv2d) continue;
    const auto& conv = static_cast<const Conv2d&>(model.layer(i));
    const auto params = conv.params();
    for (int f = 0; f < conv.out_channels(); ++f) {
      double l1 = 0.0;
      for (std::size_t p = 0; p < conv.filter_size(); ++p) l1 += std::abs(params[f * conv.filter_size() + p]);
      filters.push_back({i, f, l1});
    }
  }
  std::stable_sort(filters.begin(), filters.end(),
                   [](const PrunedFilter& a, const PrunedFilter& b) { return a.l1 < b.l1; });
  return filters;
}

HashModel defend_prune(const HashModel& backdoored, double rate, std::vector<PrunedFilter>* pruned) {
  if (!(rate >= 0.0 && rate <= 0.9)) throw ConfigError("pruning rate must lie in [0, 0.9]");
  HashModel model = backdoored;
  auto ranking = rank_conv_filters(model);
  const auto count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(ranking.size()) + 1e-9));
  ranking.resize(count);
  for (const auto& f : ranking) {
    auto& conv = static_cast<Conv2d&>(model.layer(f.layer));
    auto params = conv.params();
    const std::size_t fs = conv.filter_size();
    std::fill_n(params.begin() + static_cast<std::ptrdiff_t>(f.filter * fs), fs, 0.0);
    params[static_cast<std::size_t>(conv.out_channels()) * fs + static_cast<std::size_t>(f.filter)] = 0.0;
  }
  if (pruned) *pruned = std::move(ranking);
  return model;
}

double entropy_of_counts(std::span<const std::size_t> counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidInputError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<double> strip_entropies(const HashModel& model, std::span<const LabeledImage> inputs,
                                    std::span<const LabeledImage> overlay_pool, int n_overlays,
                                    const CodeDatabase& db, std::uint64_t seed) {
  if (overlay_pool.empty()) throw InvalidInputError("STRIP needs a nonempty overlay pool");
  if (n_overlays < 8) throw InvalidInputError("STRIP needs at least 8 overlays per input");
  if (db.empty()) throw InvalidInputError("STRIP needs a nonempty database");
  Rng rng(derive_seed(seed, "strip"));
  std::vector<std::size_t> pool_order(overlay_pool.size());
  std::iota(pool_order.begin(), pool_order.end(), 0);
  std::vector<double> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) {
    std::shuffle(pool_order.begin(), pool_order.end(), rng);
    std::vector<LabeledImage> blends;
    for (int k = 0; k < n_overlays; ++k) {
      const LabeledImage& overlay = overlay_pool[pool_order[static_cast<std::size_t>(k) % pool_order.size()]];
      if (overlay.pixels.size() != x.pixels.size()) throw DimensionError("STRIP overlay shape mismatch");
      LabeledImage blend = x;
      for (std::size_t p = 0; p < blend.pixels.size(); ++p) blend.pixels[p] = 0.5 * (x.pixels[p] + overlay.pixels[p]);
      blends.push_back(std::move(blend));
    }
    const auto codes = quantize_rows(model.features(blends));
    std::vector<std::size_t> hist(db.label_count(), 0);
    for (const auto& code : codes) {
      const auto& label = db.labels[rank_database(code, db).front()];
      const auto dominant = std::find(label.begin(), label.end(), std::uint8_t{1}) - label.begin();
      ++hist[static_cast<std::size_t>(dominant)];
    }
    out.push_back(entropy_of_counts(hist));
  }
  return out;
}

StripReport defend_strip(const HashModel& model, std::span<const LabeledImage> clean_inputs,
                         std::span<const LabeledImage> triggered_inputs, std::span<const LabeledImage> overlay_pool,
                         int n_overlays, const CodeDatabase& db, std::uint64_t seed) {
  StripReport r;
  r.clean_entropy = strip_entropies(model, clean_inputs, overlay_pool, n_overlays, db, derive_seed(seed, "clean"));
  r.triggered_entropy =
      strip_entropies(model, triggered_inputs, overlay_pool, n_overlays, db, derive_seed(seed, "triggered"));
  r.threshold = percentile(r.clean_entropy, 1.0);
  std::size_t passed = 0;
  for (double h : r.triggered_entropy) passed += h > r.threshold ? 1 : 0;
  r.far = r.triggered_entropy.empty() ? 0.0
                                      : static_cast<double>(passed) / static_cast<double>(r.triggered_entropy.size());
  return r;
}

nlohmann::json to_json(const StripReport& report) {
  return {{"method", "strip"},
          {"threshold", report.threshold},
          {"far", report.far},
          {"clean_entropy", report.clean_entropy},
          {"triggered_entropy", report.triggered_entropy}};
}

nlohmann::json to_json(const std::vector<PruneSweepRow>& sweep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : sweep) rows.push_back({{"rate", r.rate}, {"map", r.map}, {"t_map", r.t_map}});
  return {{"method", "pruning"}, {"sweep", rows}};
}

void write_prune_csv(const std::filesystem::path& path, const std::vector<PruneSweepRow>& sweep) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(10);
  out << "rate,map,t_map\n";
  for (const auto& r : sweep) out << r.rate << ',' << r.map << ',' << r.t_map << '\n';
}

void write_entropy_csv(const std::filesystem::path& path, const StripReport& report) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(10);
  out << "kind,entropy\n";
  for (double h : report.clean_entropy) out << "clean," << h << '\n';
  for (double h : report.triggered_entropy) out << "triggered," << h << '\n';
}

}  // namespace darkhash

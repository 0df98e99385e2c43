#include "darkhash/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "darkhash/errors.hpp"
#include "darkhash/rng.hpp"

namespace darkhash {

namespace {

constexpr int kPatternGrid = 4;

LabeledImage blank(int size, int channels) {
  LabeledImage img;
  img.height = size;
  img.width = size;
  img.channels = channels;
  img.pixels.assign(static_cast<std::size_t>(size) * size * channels, 0.0);
  return img;
}

// Low-frequency pattern: a coarse uniform grid upsampled bilinearly.
LabeledImage class_pattern(std::uint64_t seed, int cls, int size, int channels) {
  Rng rng(derive_seed(derive_seed(seed, "pattern"), static_cast<std::uint64_t>(cls)));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  LabeledImage grid = blank(kPatternGrid, channels);
  for (auto& v : grid.pixels) v = unif(rng);
  return resize(grid, size, size);
}

LabeledImage noisy_copy(const LabeledImage& base, double noise_std, Rng& rng) {
  LabeledImage img = base;
  if (noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_std);
    for (auto& v : img.pixels) v = std::clamp(v + noise(rng), 0.0, 1.0);
  }
  return img;
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

}  // namespace

DatasetBundle generate_synthetic_mainset(const SyntheticOptions& opts) {
  if (opts.classes < 2) throw InvalidInputError("synthetic mainset needs at least 2 classes");
  if (opts.per_class < 20) throw InvalidInputError("synthetic mainset needs at least 20 samples per class");
  if (opts.image_size < 1 || opts.channels < 1) throw InvalidInputError("bad synthetic image shape");

  DatasetBundle bundle;
  bundle.class_count = static_cast<std::size_t>(opts.classes);
  const int n_train = static_cast<int>(std::lround(0.7 * opts.per_class));
  const int n_query = static_cast<int>(std::lround(0.1 * opts.per_class));
  for (int c = 0; c < opts.classes; ++c) {
    LabeledImage base = class_pattern(opts.seed, c, opts.image_size, opts.channels);
    base.label = one_hot(bundle.class_count, static_cast<std::size_t>(c));
    Rng rng(derive_seed(derive_seed(opts.seed, "noise"), static_cast<std::uint64_t>(c)));
    for (int k = 0; k < opts.per_class; ++k) {
      LabeledImage img = noisy_copy(base, opts.noise_std, rng);
      img.id = "m" + std::to_string(c) + "_" + std::to_string(k);
      if (k < n_train) {
        bundle.train.push_back(std::move(img));
      } else if (k < n_train + n_query) {
        bundle.query.push_back(std::move(img));
      } else {
        bundle.database.push_back(std::move(img));
      }
    }
  }
  // Interleave classes so index tie-breaking in ranking never favours a class.
  Rng order(derive_seed(opts.seed, "split-order"));
  std::shuffle(bundle.train.begin(), bundle.train.end(), order);
  std::shuffle(bundle.query.begin(), bundle.query.end(), order);
  std::shuffle(bundle.database.begin(), bundle.database.end(), order);
  return bundle;
}

std::vector<LabeledImage> generate_held_out_surrogate(int count, int classes, int first_class, int image_size,
                                                      double noise_std, std::uint64_t seed, int channels) {
  if (count < 1 || classes < 1) throw InvalidInputError("surrogate needs a positive count and class count");
  std::vector<LabeledImage> bases;
  for (int c = 0; c < classes; ++c) bases.push_back(class_pattern(seed, first_class + c, image_size, channels));
  Rng rng(derive_seed(seed, "surrogate-noise"));
  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int c = i % classes;
    LabeledImage img = noisy_copy(bases[static_cast<std::size_t>(c)], noise_std, rng);
    img.label = one_hot(static_cast<std::size_t>(classes), static_cast<std::size_t>(c));
    img.id = "s" + std::to_string(c) + "_" + std::to_string(i / classes);
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<LabeledImage> generate_gaussian_surrogate(int count, int image_size, double mu, double sigma,
                                                      std::uint64_t seed, int pseudo_classes, int channels) {
  if (!(sigma > 0.0)) throw InvalidInputError("gaussian surrogate needs sigma > 0");
  if (count < 1 || pseudo_classes < 1) throw InvalidInputError("gaussian surrogate needs positive counts");
  Rng rng(derive_seed(seed, "gaussian"));
  std::normal_distribution<double> dist(mu, sigma);
  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    LabeledImage img = blank(image_size, channels);
    for (auto& v : img.pixels) v = std::clamp(dist(rng), 0.0, 1.0);
    img.label = one_hot(static_cast<std::size_t>(pseudo_classes), static_cast<std::size_t>(i % pseudo_classes));
    img.id = "g" + std::to_string(i);
    out.push_back(std::move(img));
  }
  return out;
}

SurrogateSplit split_surrogate(const std::vector<LabeledImage>& surrogate, double poisoning_rate,
                               const TriggerSpec& trigger, std::uint64_t seed) {
  if (!(poisoning_rate > 0.0 && poisoning_rate < 1.0)) {
    throw ConfigError("poisoning rate must lie in (0, 1)");
  }
  const std::size_t n = surrogate.size();
  const auto n_poison = static_cast<std::size_t>(std::llround(poisoning_rate * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "poison-select"));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::uint8_t> chosen(n, 0);
  for (std::size_t i = 0; i < n_poison; ++i) chosen[order[i]] = 1;

  SurrogateSplit split;
  split.poisoning_rate = poisoning_rate;
  const std::uint64_t placement_seed = derive_seed(seed, "trigger-placement");
  for (std::size_t i = 0; i < n; ++i) {
    if (chosen[i]) {
      split.poisoned.push_back(apply_trigger(surrogate[i], trigger, derive_seed(placement_seed, i)));
    } else {
      split.benign.push_back(surrogate[i]);
    }
  }
  return split;
}

DatasetBundle ingest_image_folder(const std::filesystem::path& root, const std::filesystem::path& manifest,
                                  int image_size, std::size_t class_count) {
  std::ifstream in(manifest);
  if (!in) throw IngestionError("cannot open manifest " + manifest.string());

  struct Row {
    std::string id, path, split;
    std::vector<std::size_t> labels;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, ',');
    if (line_no == 1 && !fields.empty() && trim(fields[0]) == "id") continue;  // header
    if (fields.size() != 4) {
      throw IngestionError("manifest row " + std::to_string(line_no) + ": expected 4 columns, got " +
                           std::to_string(fields.size()));
    }
    Row row{trim(fields[0]), trim(fields[1]), trim(fields[2]), {}};
    if (row.split != "train" && row.split != "query" && row.split != "database") {
      throw IngestionError("manifest row " + std::to_string(line_no) + ": unknown split '" + row.split + "'");
    }
    for (const auto& tok : split_fields(trim(fields[3]), '|')) {
      std::size_t pos = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(tok, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != tok.size()) {
        throw IngestionError("manifest row " + std::to_string(line_no) + ": bad label '" + tok + "'");
      }
      row.labels.push_back(v);
      max_label = std::max<std::size_t>(max_label, v);
    }
    if (row.labels.empty()) throw IngestionError("manifest row " + std::to_string(line_no) + ": no labels");
    rows.push_back(std::move(row));
  }

  DatasetBundle bundle;
  bundle.class_count = class_count != 0 ? class_count : (rows.empty() ? 0 : max_label + 1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Row& row = rows[r];
    const auto path = root / row.path;
    if (!std::filesystem::exists(path)) {
      throw IngestionError("manifest row for id '" + row.id + "': missing file " + path.string());
    }
    LabeledImage img = resize(read_png(path), image_size, image_size);
    img.id = row.id;
    img.label.assign(bundle.class_count, 0);
    for (auto l : row.labels) {
      if (l >= bundle.class_count) throw IngestionError("manifest row for id '" + row.id + "': label out of range");
      img.label[l] = 1;
    }
    auto& dst = row.split == "train" ? bundle.train : row.split == "query" ? bundle.query : bundle.database;
    dst.push_back(std::move(img));
  }
  return bundle;
}

void export_image_folder(const DatasetBundle& bundle, const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "images");
  std::ofstream manifest(root / "manifest.csv");
  if (!manifest) throw IngestionError("cannot write manifest under " + root.string());
  manifest << "id,path,split,labels\n";
  auto emit = [&](const std::vector<LabeledImage>& images, const char* split) {
    for (const auto& img : images) {
      const std::string rel = "images/" + img.id + ".png";
      write_png(root / rel, img);
      manifest << img.id << ',' << rel << ',' << split << ',';
      bool first = true;
      for (std::size_t l = 0; l < img.label.size(); ++l) {
        if (!img.label[l]) continue;
        manifest << (first ? "" : "|") << l;
        first = false;
      }
      manifest << '\n';
    }
  };
  emit(bundle.train, "train");
  emit(bundle.query, "query");
  emit(bundle.database, "database");
}

}  // namespace darkhash

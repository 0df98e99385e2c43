#include "darkhash/hashspace.hpp"

#include <cmath>
#include <string>

#include "darkhash/errors.hpp"

namespace darkhash {

HashCode::HashCode(std::vector<std::int8_t> bits) : bits_(std::move(bits)) {
  for (std::size_t k = 0; k < bits_.size(); ++k) {
    if (bits_[k] != 1 && bits_[k] != -1) {
      throw InvalidInputError("hash code entry " + std::to_string(k) + " is not +1/-1");
    }
  }
}

HashCode HashCode::operator-() const {
  HashCode out;
  out.bits_.reserve(bits_.size());
  for (auto b : bits_) out.bits_.push_back(static_cast<std::int8_t>(-b));
  return out;
}

void CodeDatabase::push_back(HashCode code, LabelVector label, std::string id) {
  codes.push_back(std::move(code));
  labels.push_back(std::move(label));
  ids.push_back(std::move(id));
}

void CodeDatabase::validate() const {
  if (codes.size() != labels.size() || codes.size() != ids.size()) {
    throw InvalidInputError("code database: codes/labels/ids length mismatch");
  }
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i].size() != bits()) throw DimensionError("code database: mixed code lengths");
    if (labels[i].size() != label_count()) throw DimensionError("code database: mixed label lengths");
    bool any = false;
    for (auto v : labels[i]) any = any || v != 0;
    if (!any) throw InvalidInputError("code database: item " + ids[i] + " has no label");
  }
}

HashCode quantize(std::span<const double> feature) {
  std::vector<std::int8_t> bits(feature.size());
  for (std::size_t k = 0; k < feature.size(); ++k) {
    if (!std::isfinite(feature[k])) {
      throw InvalidInputError("quantize: non-finite feature entry at " + std::to_string(k));
    }
    bits[k] = feature[k] > 0.0 ? 1 : -1;
  }
  return HashCode(std::move(bits));
}

std::vector<HashCode> quantize_rows(const Mat& features) {
  std::vector<HashCode> out;
  out.reserve(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    out.push_back(quantize(std::span<const double>(features.row(r).data(),
                                                   static_cast<std::size_t>(features.cols()))));
  }
  return out;
}

int hamming_distance(const HashCode& a, const HashCode& b) {
  if (a.size() != b.size()) {
    throw DimensionError("hamming_distance: code lengths " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  int dot = 0;
  for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
  return (static_cast<int>(a.size()) - dot) / 2;
}

std::vector<std::size_t> rank_codes(const HashCode& query, std::span<const HashCode> codes) {
  // Counting sort on distance; a stable bucket pass gives the index tie rule.
  const std::size_t k = query.size();
  std::vector<int> dist(codes.size());
  std::vector<std::size_t> bucket(k + 2, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    dist[i] = hamming_distance(query, codes[i]);
    ++bucket[static_cast<std::size_t>(dist[i]) + 1];
  }
  for (std::size_t d = 1; d < bucket.size(); ++d) bucket[d] += bucket[d - 1];
  std::vector<std::size_t> order(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    order[bucket[static_cast<std::size_t>(dist[i])]++] = i;
  }
  return order;
}

std::vector<std::size_t> rank_database(const HashCode& query, const CodeDatabase& db) {
  return rank_codes(query, db.codes);
}

int label_overlap(const LabelVector& a, const LabelVector& b) {
  if (a.size() != b.size()) throw DimensionError("label vectors differ in length");
  int n = 0;
  for (std::size_t l = 0; l < a.size(); ++l) n += (a[l] != 0 && b[l] != 0) ? 1 : 0;
  return n;
}

LabelVector one_hot(std::size_t label_count, std::size_t cls) {
  if (cls >= label_count) throw InvalidInputError("class index out of range");
  LabelVector v(label_count, 0);
  v[cls] = 1;
  return v;
}

}  // namespace darkhash

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "darkhash/tensor.hpp"

namespace darkhash {

// Continuous hash-layer output before sign quantization.
using FeatureVector = std::vector<double>;

// Multi-label indicator vector of length L.
using LabelVector = std::vector<std::uint8_t>;

// K-bit code over {-1,+1}.
class HashCode {
 public:
  HashCode() = default;
  // Throws InvalidInputError if any entry is not exactly -1 or +1.
  explicit HashCode(std::vector<std::int8_t> bits);

  std::size_t size() const { return bits_.size(); }
  std::int8_t operator[](std::size_t k) const { return bits_[k]; }
  std::span<const std::int8_t> bits() const { return bits_; }

  HashCode operator-() const;
  friend bool operator==(const HashCode&, const HashCode&) = default;

 private:
  std::vector<std::int8_t> bits_;
};

struct CodeDatabase {
  std::vector<HashCode> codes;
  std::vector<LabelVector> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return codes.size(); }
  bool empty() const { return codes.empty(); }
  std::size_t bits() const { return codes.empty() ? 0 : codes.front().size(); }
  std::size_t label_count() const { return labels.empty() ? 0 : labels.front().size(); }

  void push_back(HashCode code, LabelVector label, std::string id);
  // Checks equal lengths, a shared K and L, and at least one set label bit.
  void validate() const;
};

// sign(v) = +1 if v > 0, else -1 (zero maps to -1).
HashCode quantize(std::span<const double> feature);
std::vector<HashCode> quantize_rows(const Mat& features);

// (K - <a,b>) / 2.
int hamming_distance(const HashCode& a, const HashCode& b);

// Ascending Hamming distance, ties by ascending index.
std::vector<std::size_t> rank_database(const HashCode& query, const CodeDatabase& db);
std::vector<std::size_t> rank_codes(const HashCode& query, std::span<const HashCode> codes);

// Number of shared classes between two label vectors.
int label_overlap(const LabelVector& a, const LabelVector& b);
LabelVector one_hot(std::size_t label_count, std::size_t cls);

}  // namespace darkhash

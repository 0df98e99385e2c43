#pragma once

#include <random>
#include <vector>

#include "darkhash/hashspace.hpp"
#include "oracles.hpp"

namespace testutil {

inline darkhash::HashCode to_code(const oracle::Code& c) {
  std::vector<std::int8_t> bits(c.begin(), c.end());
  return darkhash::HashCode(bits);
}

inline darkhash::LabelVector to_labels(const oracle::Labels& y) { return {y.begin(), y.end()}; }

inline darkhash::CodeDatabase to_db(const std::vector<oracle::Code>& codes, const std::vector<oracle::Labels>& labels) {
  darkhash::CodeDatabase db;
  for (std::size_t i = 0; i < codes.size(); ++i) db.push_back(to_code(codes[i]), to_labels(labels[i]), std::to_string(i));
  return db;
}

// Codes with few bits so that equal distances (ties) are common.
struct RandomInstance {
  std::vector<oracle::Code> queries, db;
  std::vector<oracle::Labels> qlabels, dblabels;
};

inline RandomInstance random_instance(std::mt19937_64& rng, std::size_t nq, std::size_t ndb, std::size_t k,
                                      std::size_t l) {
  RandomInstance r;
  for (std::size_t i = 0; i < nq; ++i) {
    r.queries.push_back(oracle::random_code(rng, k));
    r.qlabels.push_back(oracle::random_labels(rng, l));
  }
  for (std::size_t i = 0; i < ndb; ++i) {
    r.db.push_back(oracle::random_code(rng, k));
    r.dblabels.push_back(oracle::random_labels(rng, l));
  }
  return r;
}

}  // namespace testutil

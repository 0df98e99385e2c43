#include <doctest.h>

#include <random>

#include "darkhash/code_file.hpp"
#include "darkhash/errors.hpp"
#include "darkhash/hashspace.hpp"
#include "helpers.hpp"

using namespace darkhash;

TEST_CASE("quantize maps positives to +1 and zero or negatives to -1") {
  const std::vector<double> f{0.3, -0.2, 0.0, -0.0, 1e-300};
  const HashCode c = quantize(f);
  CHECK(std::vector<int>(c.bits().begin(), c.bits().end()) == std::vector<int>{1, -1, -1, -1, 1});
}

TEST_CASE("quantize agrees with an elementwise comparison loop") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> f(64);
    for (auto& v : f) v = g(rng);
    const HashCode c = quantize(f);
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(c[k] == (f[k] > 0 ? 1 : -1));
  }
}

TEST_CASE("HashCode rejects entries other than +-1") {
  CHECK_THROWS_AS(HashCode(std::vector<std::int8_t>{1, 0, -1}), InvalidInputError);
  CHECK_THROWS_AS(HashCode(std::vector<std::int8_t>{2}), InvalidInputError);
}

TEST_CASE("hamming distance examples and oracle") {
  const auto a = testutil::to_code({1, 1, 1, 1});
  CHECK(hamming_distance(a, a) == 0);
  CHECK(hamming_distance(a, -a) == 4);
  CHECK(hamming_distance(testutil::to_code({1, -1, 1, -1}), testutil::to_code({1, 1, 1, 1})) == 2);
  CHECK_THROWS_AS(hamming_distance(a, testutil::to_code({1, 1})), DimensionError);

  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = oracle::random_code(rng, 64), y = oracle::random_code(rng, 64);
    CHECK(hamming_distance(testutil::to_code(x), testutil::to_code(y)) == oracle::hamming(x, y));
  }
}

TEST_CASE("rank_database sorts by distance with index tie-break") {
  CodeDatabase db;
  db.push_back(testutil::to_code({-1, -1}), {1}, "a");
  db.push_back(testutil::to_code({1, -1}), {1}, "b");
  db.push_back(testutil::to_code({1, 1}), {1}, "c");
  db.push_back(testutil::to_code({-1, 1}), {1}, "d");
  CHECK(rank_database(testutil::to_code({1, 1}), db) == std::vector<std::size_t>{2, 1, 3, 0});

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = testutil::random_instance(rng, 1, 50, 8, 3);
    const auto got = rank_database(testutil::to_code(inst.queries[0]), testutil::to_db(inst.db, inst.dblabels));
    CHECK(got == oracle::rank(inst.queries[0], inst.db));
  }
}

TEST_CASE("rank output is a permutation") {
  std::mt19937_64 rng(4);
  const auto inst = testutil::random_instance(rng, 1, 37, 16, 4);
  auto order = rank_database(testutil::to_code(inst.queries[0]), testutil::to_db(inst.db, inst.dblabels));
  std::sort(order.begin(), order.end());
  for (std::size_t i = 0; i < order.size(); ++i) CHECK(order[i] == i);
}

TEST_CASE("code database validation") {
  CodeDatabase db;
  db.push_back(testutil::to_code({1, -1}), {1, 0}, "a");
  CHECK_NOTHROW(db.validate());
  db.labels[0] = {0, 0};
  CHECK_THROWS(db.validate());
}

TEST_CASE("DHC1 bit layout") {
  CodeDatabase db;
  db.push_back(testutil::to_code(std::vector<int>(8, 1)), {1}, "0");
  const auto bytes = encode_code_file(db);
  REQUIRE(bytes.size() == 16 + 1 + 1);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "DHC1");
  CHECK(bytes[16] == 0xFF);
  CHECK(bytes[17] == 0x01);

  // Alternating code starting with +1: bit k set for even k.
  oracle::Code alt(64);
  for (std::size_t k = 0; k < 64; ++k) alt[k] = k % 2 == 0 ? 1 : -1;
  CodeDatabase db2;
  db2.push_back(testutil::to_code(alt), {1}, "0");
  const auto b2 = encode_code_file(db2);
  for (int i = 0; i < 8; ++i) CHECK(b2[16 + static_cast<std::size_t>(i)] == 0x55);
  db2.codes[0] = -db2.codes[0];
  const auto b3 = encode_code_file(db2);
  for (int i = 0; i < 8; ++i) CHECK(b3[16 + static_cast<std::size_t>(i)] == 0xAA);
}

TEST_CASE("DHC1 round trip on random databases") {
  std::mt19937_64 rng(5);
  for (std::size_t k : {8u, 12u, 16u, 33u, 64u}) {
    const auto inst = testutil::random_instance(rng, 0, 25, k, 11);
    const CodeDatabase db = testutil::to_db(inst.db, inst.dblabels);
    const CodeDatabase back = decode_code_file(encode_code_file(db));
    CHECK(back.codes == db.codes);
    CHECK(back.labels == db.labels);
  }
}

TEST_CASE("DHC1 decoding rejects corrupt input") {
  CodeDatabase db;
  db.push_back(testutil::to_code({1, -1, 1}), {1, 0}, "0");
  auto bytes = encode_code_file(db);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_code_file(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_code_file(truncated), FormatError);
  auto padded = bytes;
  padded[16] |= 0x80;  // padding bit beyond K = 3
  CHECK_THROWS_AS(decode_code_file(padded), FormatError);
}

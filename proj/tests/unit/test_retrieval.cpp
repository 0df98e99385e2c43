#include <doctest.h>

#include <algorithm>
#include <random>

#include "darkhash/errors.hpp"
#include "darkhash/retrieval_eval.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace darkhash;
using testutil::to_code;
using testutil::to_db;

namespace {

std::vector<HashCode> codes_of(const std::vector<oracle::Code>& raw) {
  std::vector<HashCode> out;
  for (const auto& c : raw) out.push_back(to_code(c));
  return out;
}

std::vector<LabelVector> labels_of(const std::vector<oracle::Labels>& raw) {
  std::vector<LabelVector> out;
  for (const auto& y : raw) out.push_back(testutil::to_labels(y));
  return out;
}

}  // namespace

TEST_CASE("average precision reference values") {
  const std::vector<std::uint8_t> a{1, 0, 1, 0};
  CHECK(average_precision(a) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
  const std::vector<std::uint8_t> all{1, 1, 1};
  CHECK(average_precision(all) == 1.0);
  const std::vector<std::uint8_t> none{0, 0, 0};
  CHECK(average_precision(none) == 0.0);
  const std::vector<std::uint8_t> last{0, 0, 0, 1};
  CHECK(average_precision(last) == doctest::Approx(0.25));
}

TEST_CASE("mAP, t-mAP and PR agree with the loop oracles") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t k = trial % 2 ? 4 : 16;  // 4 bits forces many ties
    const auto inst = testutil::random_instance(rng, 1 + trial % 7, 5 + trial % 40, k, 5);
    const CodeDatabase db = to_db(inst.db, inst.dblabels);
    const auto queries = codes_of(inst.queries);
    const auto qlabels = labels_of(inst.qlabels);
    CHECK(std::abs(map_from_codes(queries, qlabels, db) - oracle::map(inst.queries, inst.qlabels, inst.db,
                                                                       inst.dblabels)) <= 1e-12);
    const std::size_t target = static_cast<std::size_t>(trial) % 5;
    CHECK(std::abs(t_map_from_codes(queries, db, target) - oracle::t_map(inst.queries, inst.db, inst.dblabels,
                                                                        target)) <= 1e-12);
    const auto pr = pr_curve_from_codes(queries, qlabels, db);
    const auto ref = oracle::pr11(inst.queries, inst.qlabels, inst.db, inst.dblabels);
    REQUIRE(pr.size() == 11);
    for (std::size_t i = 0; i < 11; ++i) {
      CHECK(pr[i].recall == doctest::Approx(i / 10.0));
      CHECK(std::abs(pr[i].precision - ref[i]) <= 1e-12);
    }
  }
}

TEST_CASE("ties keep database order") {
  // Every database code equals the query; only the first item is relevant.
  const oracle::Code q{1, 1, 1, 1};
  const CodeDatabase db = to_db({q, q, q}, {{1, 0}, {0, 1}, {0, 1}});
  const std::vector<HashCode> queries{to_code(q)};
  const std::vector<LabelVector> labels{{1, 0}};
  CHECK(map_from_codes(queries, labels, db) == 1.0);
  const std::vector<LabelVector> other{{0, 1}};
  CHECK(map_from_codes(queries, other, db) == doctest::Approx((0.5 + 2.0 / 3.0) / 2.0));
}

TEST_CASE("t-mAP equals mAP when every query carries the target label") {
  std::mt19937_64 rng(5);
  auto inst = testutil::random_instance(rng, 6, 30, 16, 4);
  for (auto& y : inst.qlabels) y = {0, 0, 1, 0};
  const CodeDatabase db = to_db(inst.db, inst.dblabels);
  CHECK(t_map_from_codes(codes_of(inst.queries), db, 2) ==
        map_from_codes(codes_of(inst.queries), labels_of(inst.qlabels), db));
}

TEST_CASE("mAP is invariant to query order") {
  std::mt19937_64 rng(9);
  auto inst = testutil::random_instance(rng, 8, 25, 8, 3);
  const CodeDatabase db = to_db(inst.db, inst.dblabels);
  const double before = map_from_codes(codes_of(inst.queries), labels_of(inst.qlabels), db);
  std::vector<std::size_t> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<oracle::Code> q;
  std::vector<oracle::Labels> y;
  for (auto i : perm) {
    q.push_back(inst.queries[i]);
    y.push_back(inst.qlabels[i]);
  }
  CHECK(map_from_codes(codes_of(q), labels_of(y), db) == doctest::Approx(before).epsilon(1e-14));
}

TEST_CASE("precision at top N") {
  const oracle::Code q{1, 1, 1, 1};
  const oracle::Code far{-1, -1, -1, -1};
  const CodeDatabase db = to_db({q, far, q}, {{1, 0}, {1, 0}, {0, 1}});
  const std::vector<HashCode> queries{to_code(q)};
  const std::vector<LabelVector> labels{{1, 0}};
  CHECK(precision_at_topn_from_codes(queries, labels, db, 1) == 1.0);
  CHECK(precision_at_topn_from_codes(queries, labels, db, 2) == 0.5);
  // N beyond the database is clipped to its size.
  CHECK(precision_at_topn_from_codes(queries, labels, db, 100) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(precision_at_topn_from_codes(queries, labels, db, 0), InvalidInputError);
}

TEST_CASE("target identification by top-1 votes") {
  const oracle::Code a{1, 1, 1, 1}, b{-1, -1, -1, -1};
  const CodeDatabase db = to_db({a, b}, {{0, 0, 1}, {1, 0, 0}});
  CHECK(identify_from_codes(std::vector<HashCode>{to_code(a), to_code(a), to_code(b)}, db) == 2);
  // One vote each: the smaller class index wins.
  CHECK(identify_from_codes(std::vector<HashCode>{to_code(a), to_code(b)}, db) == 0);
  CHECK_THROWS_AS(identify_from_codes(std::vector<HashCode>{}, db), InvalidInputError);
}

TEST_CASE("queries without relevant items are skipped by the PR curve but count as AP 0") {
  const oracle::Code q{1, 1};
  const CodeDatabase db = to_db({q, q}, {{1, 0}, {1, 0}});
  const std::vector<HashCode> queries{to_code(q), to_code(q)};
  const std::vector<LabelVector> labels{{1, 0}, {0, 1}};
  CHECK(map_from_codes(queries, labels, db) == 0.5);
  for (const auto& p : pr_curve_from_codes(queries, labels, db)) CHECK(p.precision == 1.0);
}

TEST_CASE("evaluation input errors") {
  const CodeDatabase empty;
  const std::vector<HashCode> queries{to_code({1, 1})};
  const std::vector<LabelVector> labels{{1}};
  CHECK_THROWS_AS(map_from_codes(queries, labels, empty), InvalidInputError);
  const CodeDatabase db = to_db({{1, 1}}, {{1}});
  CHECK_THROWS_AS(map_from_codes(std::vector<HashCode>{}, std::vector<LabelVector>{}, db), InvalidInputError);
}

TEST_CASE("reports serialise to JSON") {
  EvalReport r;
  r.map = 0.5;
  r.t_map = 0.25;
  r.identified_target = 3;
  r.precision_at[10] = 0.7;
  r.pr_points = {{0.0, 1.0}};
  const auto j = to_json(r);
  CHECK(j["map"] == 0.5);
  CHECK(j["t_map"] == 0.25);
  CHECK(j["identified_target"] == 3);
  CHECK(j["precision_at"]["10"] == 0.7);
  CHECK(j["pr_points"][0]["precision"] == 1.0);
}

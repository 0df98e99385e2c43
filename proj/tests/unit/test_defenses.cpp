#include <doctest.h>

#include <cmath>
#include <set>

#include "darkhash/datasets.hpp"
#include "darkhash/defenses.hpp"
#include "darkhash/errors.hpp"
#include "darkhash/retrieval_eval.hpp"

using namespace darkhash;

namespace {

HashModel small_model(std::uint64_t seed = 1) {
  Architecture arch;
  arch.conv_channels = {4, 6};
  arch.hidden = 8;
  return HashModel(Shape{3, 8, 8}, arch, seed);
}

DatasetBundle small_data() {
  SyntheticOptions o;
  o.classes = 3;
  o.per_class = 20;
  o.image_size = 8;
  o.seed = 4;
  return generate_synthetic_mainset(o);
}

}  // namespace

TEST_CASE("pruning at rate 0 is the identity") {
  const HashModel m = small_model();
  std::vector<PrunedFilter> pruned;
  CHECK(defend_prune(m, 0.0, &pruned).flat_parameters() == m.flat_parameters());
  CHECK(pruned.empty());
}

TEST_CASE("filters are ranked by L1 norm across every conv layer") {
  const HashModel m = small_model();
  const auto ranking = rank_conv_filters(m);
  CHECK(ranking.size() == 10);
  for (std::size_t i = 1; i < ranking.size(); ++i) CHECK(ranking[i - 1].l1 <= ranking[i].l1);
  std::set<std::size_t> layers;
  for (const auto& f : ranking) layers.insert(f.layer);
  CHECK(layers == std::set<std::size_t>{0, 3});
}

TEST_CASE("pruned sets grow monotonically and zero whole filters") {
  const HashModel m = small_model();
  std::vector<PrunedFilter> previous;
  for (double rate : {0.0, 0.3, 0.5, 0.8, 0.9}) {
    std::vector<PrunedFilter> pruned;
    const HashModel p = defend_prune(m, rate, &pruned);
    CHECK(pruned.size() == static_cast<std::size_t>(std::floor(rate * 10 + 1e-9)));
    CHECK(std::equal(previous.begin(), previous.end(), pruned.begin()));
    for (const auto& f : pruned) {
      const auto& conv = static_cast<const Conv2d&>(p.layer(f.layer));
      for (std::size_t k = 0; k < conv.filter_size(); ++k) CHECK(conv.params()[f.filter * conv.filter_size() + k] == 0.0);
      CHECK(conv.params()[conv.out_channels() * conv.filter_size() + f.filter] == 0.0);
    }
    // Dense layers are never touched.
    for (std::size_t i = 6; i < m.layer_count(); ++i) {
      CHECK(std::equal(m.layer(i).params().begin(), m.layer(i).params().end(), p.layer(i).params().begin()));
    }
    previous = pruned;
  }
}

TEST_CASE("pruning rate bounds") {
  const HashModel m = small_model();
  CHECK_THROWS_AS(defend_prune(m, -0.1), ConfigError);
  CHECK_THROWS_AS(defend_prune(m, 0.95), ConfigError);
}

TEST_CASE("entropy and percentile helpers") {
  const std::vector<std::size_t> uniform{4, 4, 4, 4};
  CHECK(entropy_of_counts(uniform) == doctest::Approx(std::log(4.0)));
  const std::vector<std::size_t> single{0, 9, 0};
  CHECK(entropy_of_counts(single) == 0.0);
  const std::vector<std::size_t> empty{0, 0};
  CHECK(entropy_of_counts(empty) == 0.0);
  CHECK(percentile({3, 1, 2, 4, 5}, 50) == 3.0);
  CHECK(percentile({1, 2}, 25) == doctest::Approx(1.25));
  CHECK(percentile({7}, 1) == 7.0);
  CHECK_THROWS_AS(percentile({}, 1), InvalidInputError);
}

TEST_CASE("STRIP entropies are bounded and seeded") {
  const DatasetBundle data = small_data();
  const HashModel m = small_model();
  const CodeDatabase db = encode_database(m, data.database);
  const auto a = strip_entropies(m, data.query, data.train, 8, db, 3);
  const auto b = strip_entropies(m, data.query, data.train, 8, db, 3);
  CHECK(a == b);
  CHECK(a.size() == data.query.size());
  for (double h : a) {
    CHECK(h >= 0.0);
    CHECK(h <= std::log(3.0) + 1e-12);
  }
  CHECK_THROWS_AS(strip_entropies(m, data.query, data.train, 7, db, 3), InvalidInputError);
  CHECK_THROWS_AS(strip_entropies(m, data.query, {}, 8, db, 3), InvalidInputError);

  const StripReport r = defend_strip(m, data.query, data.query, data.train, 8, db, 3);
  CHECK(r.threshold == doctest::Approx(percentile(r.clean_entropy, 1.0)));
  CHECK(r.far >= 0.0);
  CHECK(r.far <= 1.0);
}

TEST_CASE("fine-tuning for zero epochs leaves the model unchanged and unfreezes it") {
  const DatasetBundle data = small_data();
  HashModel m = small_model();
  set_freeze(m, FreezePolicy::all_conv());
  TrainConfig cfg;
  cfg.epochs = 0;
  const HashModel out = defend_finetune(m, VictimMethod::Central, data.train, 3, cfg);
  CHECK(out.flat_parameters() == m.flat_parameters());
  CHECK_FALSE(out.frozen(0));
  cfg.epochs = 1;
  cfg.batch_size = 8;
  const HashModel tuned = defend_finetune(m, VictimMethod::Central, data.train, 3, cfg);
  CHECK(tuned.layer(0).params()[0] != m.layer(0).params()[0]);
}

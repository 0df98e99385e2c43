#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "darkhash/attack.hpp"
#include "darkhash/errors.hpp"
#include "darkhash/neighbor_graph.hpp"
#include "finite_diff.hpp"
#include "oracles.hpp"

using namespace darkhash;

namespace {

Mat random_features(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Mat f(n, k);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = g(rng);
  return f;
}

oracle::Matrix to_rows(const Mat& m) {
  oracle::Matrix out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  return out;
}

struct SmallSetup {
  HashModel victim;
  std::vector<LabeledImage> surrogate;
  AttackConfig cfg;
};

SmallSetup small_setup() {
  Architecture arch;
  arch.conv_channels = {4};
  arch.hidden = 8;
  SmallSetup s{HashModel(Shape{3, 8, 8}, arch, 4), generate_held_out_surrogate(40, 4, 10, 8, 0.1, 6), {}};
  s.cfg.trigger = solid_trigger(2, {1, 0, 1});
  s.cfg.poisoning_rate = 0.25;
  s.cfg.train.epochs = 3;
  s.cfg.train.batch_size = 8;
  s.cfg.train.learning_rate = 1e-3;
  s.cfg.train.seed = 2;
  return s;
}

}  // namespace

TEST_CASE("graph of a hand-worked three point example") {
  Mat f(3, 2);
  f << 1, 0, 0, 1, 1, 1;
  const NeighborGraph g = build_graph(f);
  // d01 = 1, d02 = d12 = 1 - 1/sqrt2.
  const double d = 1.0 - 1.0 / std::sqrt(2.0);
  // Column 0: rho = d, weights w10 = 2 - (1 - d), w20 = 2.
  CHECK(g.p(1, 0) == doctest::Approx((1.0 + d) / (3.0 + d)));
  CHECK(g.p(2, 0) == doctest::Approx(2.0 / (3.0 + d)));
  // Column 2 is symmetric between 0 and 1.
  CHECK(g.p(0, 2) == doctest::Approx(0.5));
  CHECK(g.p(2, 2) == 0.0);
}

TEST_CASE("graph matches the loop oracle and is column stochastic") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Mat f = random_features(2 + seed % 9, 16, seed);
    const NeighborGraph g = build_graph(f);
    const auto ref = oracle::graph(to_rows(f));
    for (Eigen::Index j = 0; j < f.rows(); ++j) {
      CHECK(g.p.col(j).sum() == doctest::Approx(1.0).epsilon(1e-12));
      for (Eigen::Index i = 0; i < f.rows(); ++i) {
        CHECK(g.p(i, j) >= 0.0);
        CHECK(std::abs(g.p(i, j) - ref[i][j]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("graph is invariant to per-row positive scaling") {
  Mat f = random_features(7, 8, 3);
  const NeighborGraph a = build_graph(f);
  for (Eigen::Index i = 0; i < f.rows(); ++i) f.row(i) *= 0.1 + i;
  CHECK((build_graph(f).p - a.p).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("the nearest neighbour attains each column maximum") {
  const Mat f = random_features(12, 16, 8);
  const NeighborGraph g = build_graph(f);
  const Mat d = cosine_distances(f);
  for (Eigen::Index j = 0; j < f.rows(); ++j) {
    Eigen::Index nearest = j == 0 ? 1 : 0;
    for (Eigen::Index k = 0; k < f.rows(); ++k) {
      if (k != j && d(k, j) < d(nearest, j)) nearest = k;
    }
    CHECK(g.p(nearest, j) == doctest::Approx(g.p.col(j).maxCoeff()));
    CHECK(g.p(nearest, j) >= 1.0 / static_cast<double>(f.rows() - 1) - 1e-12);
  }
}

TEST_CASE("nearest-neighbour exclusion removes exactly that entry") {
  const Mat f = random_features(6, 8, 5);
  GraphOptions opts;
  opts.exclude_nearest = true;
  const NeighborGraph g = build_graph(f, opts);
  const NeighborGraph plain = build_graph(f);
  for (Eigen::Index j = 0; j < 6; ++j) {
    CHECK(g.p.col(j).sum() == doctest::Approx(1.0));
    Eigen::Index argmax = 0;
    plain.p.col(j).maxCoeff(&argmax);
    CHECK(g.p(argmax, j) == 0.0);
  }
  CHECK_THROWS_AS(build_graph(random_features(2, 4, 1), opts), InvalidInputError);
  CHECK_THROWS_AS(build_graph(random_features(1, 4, 1)), InvalidInputError);
}

TEST_CASE("topology cross entropy reference values") {
  CHECK(topology_ce(uniform_graph(3), uniform_graph(3)) == doctest::Approx(std::log(2.0)));
  NeighborGraph concentrated;
  concentrated.p = Mat::Zero(3, 3);
  concentrated.p(1, 0) = concentrated.p(0, 1) = concentrated.p(0, 2) = 1.0;
  // Half of each uniform column lands on a zero entry, floored at 1e-12.
  CHECK(topology_ce(concentrated, uniform_graph(3)) == doctest::Approx(-std::log(1e-12) / 2.0));
  CHECK_THROWS_AS(topology_ce(uniform_graph(3), uniform_graph(4)), DimensionError);
}

TEST_CASE("distance losses") {
  Mat a(1, 1), b(1, 1);
  a << 0.5;
  b << 0.0;
  CHECK(distance_loss(a, b, DistanceLoss::Huber, 1.0, nullptr) == doctest::Approx(0.125));
  a << 2.0;
  CHECK(distance_loss(a, b, DistanceLoss::Huber, 1.0, nullptr) == doctest::Approx(1.5));
  CHECK(distance_loss(a, b, DistanceLoss::SquaredError, 1.0, nullptr) == doctest::Approx(4.0));
  // Broadcast of a single row; mean over every element.
  Mat rows(2, 2);
  rows << 1, 0, 0, 1;
  Mat zero = Mat::Zero(1, 2);
  Mat grad;
  CHECK(distance_loss(rows, zero, DistanceLoss::SquaredError, 1.0, &grad) == doctest::Approx(0.5));
  CHECK(grad(0, 0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(distance_loss(rows, Mat::Zero(3, 2), DistanceLoss::Huber, 1.0, nullptr), DimensionError);
}

TEST_CASE("alignment against the anchor set") {
  // Identical features give a uniform graph, the minimum.
  const Mat same = Mat::Constant(5, 16, 0.3);
  CHECK(loss_topology(same, {}, nullptr) == doctest::Approx(std::log(4.0)));
  CHECK(loss_topology(Mat::Constant(2, 16, 0.3), {}, nullptr) == doctest::Approx(0.0));
  CHECK(loss_topology(Mat::Constant(1, 16, 0.3), {}, nullptr) == 0.0);
  // Gibbs: no batch beats the uniform graph.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CHECK(loss_topology(random_features(8, 16, seed), {}, nullptr) >= std::log(7.0) - 1e-12);
  }
}

TEST_CASE("gradient descent on free features lowers the alignment loss") {
  Mat f = random_features(6, 16, 4);
  const double start = loss_topology(f, {}, nullptr);
  Mat g;
  for (int it = 0; it < 200; ++it) {
    loss_topology(f, {}, &g);
    f -= 0.5 * g;
  }
  CHECK(loss_topology(f, {}, nullptr) < start);
}

TEST_CASE("alignment gradient matches finite differences on features") {
  for (bool exclude : {false, true}) {
    GraphOptions opts;
    opts.exclude_nearest = exclude;
    const Mat f = random_features(6, 8, 21);
    Mat g;
    loss_topology(f, opts, &g);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      Mat up = f, down = f;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double numeric = (loss_topology(up, opts, nullptr) - loss_topology(down, opts, nullptr)) / (2 * h);
      CHECK(g.data()[i] == doctest::Approx(numeric).epsilon(1e-5).scale(1e-3));
    }
  }
}

TEST_CASE("attack objective gradients match finite differences") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    HashModel m = fd::probe_net(static_cast<std::uint64_t>(trial));
    Mat benign(4, 36), poisoned(4, 36);
    for (Eigen::Index i = 0; i < benign.size(); ++i) benign.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < poisoned.size(); ++i) poisoned.data()[i] = u(rng);
    const Mat targets = m.forward(benign) * 0.5;
    AnchorFeature anchor{m.forward(poisoned).colwise().mean() * -1.0, 0, 4};
    AttackConfig cfg;
    cfg.freeze = FreezePolicy::none();
    for (const char* mods : {"A", "B", "C", "ABC"}) {
      cfg.modules = ModuleMask::parse(mods);
      const auto terms = attack_terms(benign, targets, poisoned, 0, anchor, cfg, nullptr);
      CHECK_MESSAGE(fd::gradient_error(m, terms) <= 1e-4, mods);
    }
  }
}

TEST_CASE("module masks") {
  CHECK(ModuleMask::parse("BC").to_string() == "BC");
  CHECK_FALSE(ModuleMask::parse("BC").topology);
  CHECK(ModuleMask::parse("a+b+c").to_string() == "ABC");
  CHECK_THROWS_AS(ModuleMask::parse("ABD"), ConfigError);
}

TEST_CASE("the anchor is the mean victim feature of the shadow target") {
  const SmallSetup s = small_setup();
  const AnchorFeature a = compute_anchor(s.victim, s.surrogate, 2);
  CHECK(a.sample_count == 10);
  std::vector<LabeledImage> members;
  for (const auto& img : s.surrogate) {
    if (img.label[2]) members.push_back(img);
  }
  CHECK((a.h_t - s.victim.features(members).colwise().mean()).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK_THROWS_AS(compute_anchor(s.victim, s.surrogate, 7), ConfigError);
}

TEST_CASE("feature bank lookups") {
  const SmallSetup s = small_setup();
  const FeatureBank bank(s.victim, s.surrogate);
  CHECK(bank.size() == 40);
  const std::vector<std::string> ids{s.surrogate[3].id};
  const Mat alone = s.victim.features(std::span(&s.surrogate[3], 1));
  CHECK((bank.lookup(ids) - alone).cwiseAbs().maxCoeff() <= 1e-12);
  const std::vector<std::string> missing{"nope"};
  CHECK_THROWS_AS(bank.lookup(missing), Error);
}

TEST_CASE("run_attack keeps frozen layers byte-identical") {
  const SmallSetup s = small_setup();
  const AttackResult r = run_attack(s.victim, s.surrogate, s.cfg);
  for (std::size_t i = 0; i < r.model.layer_count(); ++i) {
    const auto before = s.victim.layer(i).params();
    const auto after = r.model.layer(i).params();
    if (before.empty()) continue;
    const bool same = std::memcmp(before.data(), after.data(), before.size_bytes()) == 0;
    CHECK(same == (s.victim.layer(i).kind() == LayerKind::Conv2d));
  }
  CHECK(r.log.size() == 3);
}

TEST_CASE("zero attack epochs return the victim unchanged") {
  SmallSetup s = small_setup();
  s.cfg.train.epochs = 0;
  CHECK(run_attack(s.victim, s.surrogate, s.cfg).model.flat_parameters() == s.victim.flat_parameters());
}

TEST_CASE("dropping the alignment module equals lambda zero exactly") {
  SmallSetup s = small_setup();
  s.cfg.modules = ModuleMask::parse("BC");
  const auto masked = run_attack(s.victim, s.surrogate, s.cfg).model.flat_parameters();
  s.cfg.modules = ModuleMask::parse("ABC");
  s.cfg.lambda = 0.0;
  CHECK(run_attack(s.victim, s.surrogate, s.cfg).model.flat_parameters() == masked);
}

TEST_CASE("the attack is deterministic and lowers the backdoor loss") {
  SmallSetup s = small_setup();
  s.cfg.train.epochs = 20;
  const AttackResult a = run_attack(s.victim, s.surrogate, s.cfg);
  const AttackResult b = run_attack(s.victim, s.surrogate, s.cfg);
  CHECK(a.model.flat_parameters() == b.model.flat_parameters());
  CHECK(a.log.back().backdoor < a.log.front().backdoor);
}

TEST_CASE("attack configuration is validated") {
  SmallSetup s = small_setup();
  s.cfg.lambda = -1;
  CHECK_THROWS_AS(run_attack(s.victim, s.surrogate, s.cfg), ConfigError);
  s = small_setup();
  s.cfg.huber_delta = 0;
  CHECK_THROWS_AS(s.cfg.validate(), ConfigError);
}

#include <doctest.h>

#include <cmath>

#include "mir/baselines.hpp"
#include "mir/data.hpp"
#include "mir/errors.hpp"
#include "mir/moments.hpp"
#include "mir/rng.hpp"

using namespace mir;

namespace {

// Independent accumulation via std::pow, feature by feature; the oracle the
// implementation is checked against.
std::vector<double> brute_force_moments(const Bag& bag, std::size_t max_order) {
  std::vector<double> out(bag.width * max_order, 0.0);
  for (std::size_t j = 0; j < bag.width; ++j) {
    for (std::size_t k = 1; k <= max_order; ++k) {
      double sum = 0.0;
      for (std::size_t l = 0; l < bag.instance_count(); ++l) {
        sum += std::pow(bag.instance(l)[j], static_cast<double>(k));
      }
      out[j * max_order + (k - 1)] = sum / static_cast<double>(bag.instance_count());
    }
  }
  return out;
}

Bag random_bag(Rng& rng, std::size_t count, std::size_t width) {
  Bag bag;
  bag.id = "r";
  bag.width = width;
  bag.values.reserve(count * width);
  for (std::size_t i = 0; i < count * width; ++i) bag.values.push_back(rng.uniform(-2.0, 2.0));
  return bag;
}

}  // namespace

TEST_CASE("raw moments of a single feature") {
  Bag bag;
  bag.id = "m";
  bag.width = 1;
  bag.values = {1.0, 2.0, 3.0};
  std::vector<double> m = raw_moments(bag, 2);
  CHECK(m[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(m[1] == doctest::Approx(14.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("constant bag has moments c^k") {
  Bag bag;
  bag.id = "c";
  bag.width = 1;
  bag.values = {1.3, 1.3, 1.3, 1.3};
  std::vector<double> m = raw_moments(bag, 5);
  for (std::size_t k = 1; k <= 5; ++k) {
    CHECK(m[k - 1] == doctest::Approx(std::pow(1.3, static_cast<double>(k))).epsilon(1e-13));
  }
}

TEST_CASE("first moment equals the aggregated meta-instance") {
  Rng rng(4);
  Bag bag = random_bag(rng, 9, 3);
  std::vector<double> m = raw_moments(bag, 1);
  std::vector<double> mean = aggregate_mean(bag);
  REQUIRE(m.size() == mean.size());
  for (std::size_t j = 0; j < m.size(); ++j) CHECK(m[j] == doctest::Approx(mean[j]).epsilon(1e-15));
}

TEST_CASE("raw moments match the brute-force oracle on random bags") {
  Rng rng(100);
  for (int trial = 0; trial < 200; ++trial) {
    Bag bag = random_bag(rng, 1 + rng.below(30), 1 + rng.below(5));
    std::size_t order = 1 + rng.below(6);
    std::vector<double> fast = raw_moments(bag, order);
    std::vector<double> oracle = brute_force_moments(bag, order);
    REQUIRE(fast.size() == oracle.size());
    for (std::size_t i = 0; i < fast.size(); ++i) {
      double rel = std::abs(fast[i] - oracle[i]) / std::max(1.0, std::abs(oracle[i]));
      CHECK(rel < 1e-12);
    }
  }
}

TEST_CASE("raw moments are permutation invariant") {
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    Bag bag = random_bag(rng, 2 + rng.below(20), 1 + rng.below(4));
    std::vector<double> before = raw_moments(bag, 4);

    std::vector<std::size_t> order(bag.instance_count());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    Bag shuffled = bag;
    for (std::size_t l = 0; l < order.size(); ++l) {
      auto src = bag.instance(order[l]);
      std::copy(src.begin(), src.end(), shuffled.instance(l).begin());
    }

    std::vector<double> after = raw_moments(shuffled, 4);
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(std::abs(before[i] - after[i]) < 1e-12);
    }
  }
}

TEST_CASE("augment_dataset modes") {
  SynthSpec spec;
  spec.bag_count = 10;
  spec.instances_per_bag = 6;
  spec.feature_count = 2;
  Dataset ds = synth_generate(spec, 8);

  SUBCASE("order zero is the identity") {
    MomentConfig cfg{0, AttachMode::AppendPerInstance};
    Dataset out = augment_dataset(ds, cfg);
    CHECK(out.bags == ds.bags);
    CHECK(out.feature_count == ds.feature_count);
  }
  SUBCASE("replace-bag with m=1 collapses each bag to its mean") {
    MomentConfig cfg{1, AttachMode::ReplaceBag};
    Dataset out = augment_dataset(ds, cfg);
    CHECK(out.feature_count == 2);
    for (std::size_t b = 0; b < ds.bags.size(); ++b) {
      REQUIRE(out.bags[b].instance_count() == 1);
      std::vector<double> mean = aggregate_mean(ds.bags[b]);
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(out.bags[b].instance(0)[j] == doctest::Approx(mean[j]).epsilon(1e-15));
      }
    }
  }
  SUBCASE("append-per-instance widens every instance") {
    MomentConfig cfg{3, AttachMode::AppendPerInstance};
    Dataset out = augment_dataset(ds, cfg);
    CHECK(out.feature_count == 2 + 2 * 3);  // d' = d + d*m
    for (std::size_t b = 0; b < ds.bags.size(); ++b) {
      CHECK(out.bags[b].instance_count() == ds.bags[b].instance_count());
      std::vector<double> moments = raw_moments(ds.bags[b], 3);
      auto row = out.bags[b].instance(2);
      for (std::size_t j = 0; j < 2; ++j) CHECK(row[j] == ds.bags[b].instance(2)[j]);
      for (std::size_t i = 0; i < moments.size(); ++i) CHECK(row[2 + i] == moments[i]);
    }
    for (const Bag& bag : out.bags) CHECK(bag.width == out.feature_count);
  }
  SUBCASE("orders beyond the estimator-quality bound are rejected") {
    MomentConfig cfg{11, AttachMode::ReplaceBag};
    CHECK_THROWS_AS(augment_dataset(ds, cfg), Error);
  }
}

TEST_CASE("standardized pooled first and second moments are 0 and 1") {
  SynthSpec spec;
  spec.bag_count = 30;
  spec.instances_per_bag = 20;
  spec.feature_count = 3;
  spec.rule = SynthRule::LatentStddev;
  Dataset ds = synth_generate(spec, 77);
  Dataset standardized = apply_standardizer(fit_standardizer(ds), ds);

  // Pool all instances into one bag per feature and read its moments.
  Bag pooled;
  pooled.id = "pooled";
  pooled.width = 3;
  for (const Bag& bag : standardized.bags) {
    pooled.values.insert(pooled.values.end(), bag.values.begin(), bag.values.end());
  }
  std::vector<double> m = raw_moments(pooled, 2);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(std::abs(m[j * 2 + 0]) < 1e-9);
    CHECK(std::abs(m[j * 2 + 1] - 1.0) < 1e-9);
  }
}

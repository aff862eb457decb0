#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "mir/data.hpp"
#include "mir/errors.hpp"
#include "mir/rng.hpp"

using namespace mir;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("mir-data-test-" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("load_csv groups rows into bags") {
  TempDir tmp;
  std::string path = tmp.file("tiny.csv");
  write_file(path,
             "bag_id,label,f1,f2\n"
             "a,1.5,0.1,0.2\n"
             "a,1.5,0.3,0.4\n");
  Dataset ds = load_csv(path);
  REQUIRE(ds.bag_count() == 1);
  CHECK(ds.feature_count == 2);
  CHECK(ds.bags[0].instance_count() == 2);
  CHECK(ds.bags[0].label == 1.5);
  CHECK(ds.bags[0].instance(1)[0] == 0.3);
}

TEST_CASE("load_csv keeps bag order by first appearance and instance order by file") {
  TempDir tmp;
  std::string path = tmp.file("interleaved.csv");
  write_file(path,
             "bag_id,label,f1\n"
             "x,1,10\n"
             "y,2,20\n"
             "x,1,11\n");
  Dataset ds = load_csv(path);
  REQUIRE(ds.bag_count() == 2);
  CHECK(ds.bags[0].id == "x");
  CHECK(ds.bags[0].instance(0)[0] == 10.0);
  CHECK(ds.bags[0].instance(1)[0] == 11.0);
  CHECK(ds.bags[1].id == "y");
}

TEST_CASE("load_csv reports malformed rows with line numbers") {
  TempDir tmp;
  SUBCASE("ragged row") {
    std::string path = tmp.file("ragged.csv");
    write_file(path, "bag_id,label,f1,f2\na,1,0.1,0.2\na,1,0.1\n");
    CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("line 3"), DataError);
  }
  SUBCASE("non-numeric field") {
    std::string path = tmp.file("nan.csv");
    write_file(path, "bag_id,label,f1\na,1,oops\n");
    CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("line 2"), DataError);
  }
  SUBCASE("conflicting labels within a bag") {
    std::string path = tmp.file("conflict.csv");
    write_file(path, "bag_id,label,f1\na,1,0.1\na,2,0.2\n");
    CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("line 3"), DataError);
  }
  SUBCASE("bad header") {
    std::string path = tmp.file("header.csv");
    write_file(path, "id,y,f1\na,1,0.1\n");
    CHECK_THROWS_AS(load_csv(path), DataError);
  }
}

TEST_CASE("save then load round-trips bit-exactly") {
  TempDir tmp;
  Rng rng(11);
  Dataset ds;
  ds.name = "roundtrip";
  ds.feature_count = 3;
  for (int i = 0; i < 5; ++i) {
    Bag bag;
    bag.id = "bag" + std::to_string(i);
    bag.label = rng.normal(0.0, 10.0);
    bag.width = 3;
    std::size_t count = 1 + rng.below(4);
    for (std::size_t l = 0; l < count * 3; ++l) {
      bag.values.push_back(rng.normal(0.0, 1.0) * std::pow(10.0, rng.uniform(-8, 8)));
    }
    ds.bags.push_back(bag);
  }
  std::string path = tmp.file("roundtrip.csv");
  save_csv(ds, path);
  Dataset loaded = load_csv(path);
  REQUIRE(loaded.bag_count() == ds.bag_count());
  CHECK(loaded.feature_count == ds.feature_count);
  for (std::size_t i = 0; i < ds.bags.size(); ++i) {
    CHECK(loaded.bags[i] == ds.bags[i]);
  }
}

TEST_CASE("filter_by_instance_count") {
  Dataset ds;
  ds.name = "filter";
  ds.feature_count = 1;
  for (std::size_t count : {1, 2, 2}) {
    Bag bag;
    bag.id = "b" + std::to_string(ds.bags.size());
    bag.width = 1;
    bag.values.assign(count, 0.5);
    ds.bags.push_back(bag);
  }

  Dataset two = filter_by_instance_count(ds, 2);
  CHECK(two.bag_count() == 2);
  CHECK(two.bags[0].id == "b1");

  SUBCASE("identity when all bags match") {
    Dataset same = filter_by_instance_count(two, 2);
    CHECK(same.bags == two.bags);
  }
  SUBCASE("idempotent") {
    Dataset again = filter_by_instance_count(filter_by_instance_count(ds, 2), 2);
    CHECK(again.bags == two.bags);
  }
  SUBCASE("empty result is an error") {
    CHECK_THROWS_AS(filter_by_instance_count(ds, 7), DataError);
  }
}

TEST_CASE("standardizer uses the population convention") {
  Dataset ds;
  ds.name = "std";
  ds.feature_count = 2;
  Bag bag;
  bag.id = "b0";
  bag.width = 2;
  bag.values = {1.0, 5.0, 3.0, 5.0};  // feature 0: {1,3}; feature 1 constant
  ds.bags.push_back(bag);

  StandardizationStats stats = fit_standardizer(ds);
  CHECK(stats.mean[0] == 2.0);
  CHECK(stats.stddev[0] == 1.0);
  CHECK(stats.stddev[1] == 1.0);  // zero deviation replaced

  Dataset out = apply_standardizer(stats, ds);
  CHECK(out.bags[0].instance(0)[0] == -1.0);
  CHECK(out.bags[0].instance(1)[0] == 1.0);
  CHECK(out.bags[0].instance(0)[1] == 0.0);
  CHECK(out.bags[0].instance(1)[1] == 0.0);
}

TEST_CASE("standardization normalizes the fitting set and inverts exactly") {
  SynthSpec spec;
  spec.bag_count = 40;
  spec.instances_per_bag = 15;
  spec.feature_count = 3;
  spec.rule = SynthRule::LatentMean;
  Dataset ds = synth_generate(spec, 5);

  StandardizationStats stats = fit_standardizer(ds);
  Dataset out = apply_standardizer(stats, ds);

  std::size_t n = out.instance_total();
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0, var = 0.0;
    for (const Bag& bag : out.bags) {
      for (std::size_t l = 0; l < bag.instance_count(); ++l) mean += bag.instance(l)[j];
    }
    mean /= static_cast<double>(n);
    for (const Bag& bag : out.bags) {
      for (std::size_t l = 0; l < bag.instance_count(); ++l) {
        double d = bag.instance(l)[j] - mean;
        var += d * d;
      }
    }
    var /= static_cast<double>(n);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
  }

  Dataset back = invert_standardizer(stats, out);
  for (std::size_t b = 0; b < ds.bags.size(); ++b) {
    for (std::size_t i = 0; i < ds.bags[b].values.size(); ++i) {
      CHECK(std::abs(back.bags[b].values[i] - ds.bags[b].values[i]) < 1e-9);
    }
  }
}

TEST_CASE("validation bags keep a shifted mean under training stats") {
  SynthSpec spec;
  spec.bag_count = 6;
  spec.instances_per_bag = 10;
  spec.feature_count = 1;
  Dataset train = synth_generate(spec, 1);
  Dataset val = synth_generate(spec, 2);

  StandardizationStats stats = fit_standardizer(train);
  Dataset out = apply_standardizer(stats, val);
  double mean = 0.0;
  for (const Bag& bag : out.bags) {
    for (std::size_t l = 0; l < bag.instance_count(); ++l) mean += bag.instance(l)[0];
  }
  mean /= static_cast<double>(out.instance_total());
  CHECK(std::abs(mean) > 1e-6);  // stats fit on train only
}

TEST_CASE("synth_generate is deterministic and validates its spec") {
  SynthSpec spec;
  spec.bag_count = 12;
  spec.instances_per_bag = 7;
  spec.feature_count = 2;
  spec.rule = SynthRule::LatentStddev;
  spec.noise = 0.1;

  Dataset a = synth_generate(spec, 99);
  Dataset b = synth_generate(spec, 99);
  REQUIRE(a.bag_count() == b.bag_count());
  for (std::size_t i = 0; i < a.bags.size(); ++i) CHECK(a.bags[i] == b.bags[i]);
  validate(a);

  SynthSpec bad = spec;
  bad.bag_count = 0;
  CHECK_THROWS_AS(synth_generate(bad, 1), DataError);
}

TEST_CASE("latent-mean bags concentrate around their label") {
  SynthSpec spec;
  spec.bag_count = 60;
  spec.instances_per_bag = 1000;
  spec.feature_count = 1;
  spec.rule = SynthRule::LatentMean;
  Dataset ds = synth_generate(spec, 17);
  // se <= 1.5/sqrt(1000), so 0.15 is a >3 sigma bound per bag.
  std::size_t close = 0;
  for (const Bag& bag : ds.bags) {
    double mean = 0.0;
    for (double v : bag.values) mean += v;
    mean /= static_cast<double>(bag.values.size());
    if (std::abs(mean - bag.label) < 0.15) ++close;
  }
  CHECK(close >= 57);  // >= 95% of bags
}

TEST_CASE("latent-stddev labels are uncorrelated with bag means") {
  SynthSpec spec;
  spec.bag_count = 500;
  spec.instances_per_bag = 50;
  spec.feature_count = 1;
  spec.rule = SynthRule::LatentStddev;
  Dataset ds = synth_generate(spec, 23);

  std::vector<double> means, labels;
  for (const Bag& bag : ds.bags) {
    double mean = 0.0;
    for (double v : bag.values) mean += v;
    means.push_back(mean / static_cast<double>(bag.values.size()));
    labels.push_back(bag.label);
  }
  double mm = 0.0, ml = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    mm += means[i];
    ml += labels[i];
  }
  mm /= static_cast<double>(means.size());
  ml /= static_cast<double>(means.size());
  double cov = 0.0, vm = 0.0, vl = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    cov += (means[i] - mm) * (labels[i] - ml);
    vm += (means[i] - mm) * (means[i] - mm);
    vl += (labels[i] - ml) * (labels[i] - ml);
  }
  double correlation = cov / std::sqrt(vm * vl);
  CHECK(std::abs(correlation) < 0.1);
}

TEST_CASE("manifest lookup, scale, and filter") {
  TempDir tmp;
  SynthSpec spec;
  spec.bag_count = 8;
  spec.instances_per_bag = 4;
  spec.feature_count = 2;
  Dataset ds = synth_generate(spec, 3);
  ds.bags[5].values.resize(2 * 2);  // one bag with only 2 instances
  save_csv(ds, tmp.file("bags.csv"));

  write_file(tmp.file("manifest.txt"),
             "# datasets\n"
             "demo.path = bags.csv\n"
             "demo.scale = 100\n"
             "demo.filter_instances = 4\n");

  ManifestEntry entry = manifest_entry(tmp.file("manifest.txt"), "demo");
  CHECK(entry.scale == 100.0);
  Dataset loaded = load_from_manifest(tmp.file("manifest.txt"), "demo");
  CHECK(loaded.name == "demo");
  CHECK(loaded.bag_count() == 7);  // short bag filtered out

  CHECK_THROWS_AS(manifest_entry(tmp.file("manifest.txt"), "missing"), DataError);

  write_file(tmp.file("broken.txt"), "demo.path bags.csv\n");
  CHECK_THROWS_AS(load_manifest(tmp.file("broken.txt")), DataError);
}

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mir {

/// One labeled set of instances. Rows of `values` are the instances; all
/// rows share `width` features and the single real label.
struct Bag {
  std::string id;
  double label = 0.0;
  std::size_t width = 0;
  std::vector<double> values;  // row-major, instance_count() x width

  std::size_t instance_count() const { return width == 0 ? 0 : values.size() / width; }
  std::span<const double> instance(std::size_t l) const {
    return {values.data() + l * width, width};
  }
  std::span<double> instance(std::size_t l) { return {values.data() + l * width, width}; }

  bool operator==(const Bag&) const = default;
};

struct Dataset {
  std::string name;
  std::size_t feature_count = 0;
  std::vector<Bag> bags;

  std::size_t bag_count() const { return bags.size(); }
  std::size_t instance_total() const;
  std::vector<double> labels() const;
};

/// Checks the Bag/Dataset invariants; throws DataError on violation.
void validate(const Dataset& ds);

/// CSV with header `bag_id,label,f1,...,fd`. Rows are grouped by bag_id
/// (contiguity not required); instance order follows file order and bag
/// order follows first appearance.
Dataset load_csv(const std::string& path);
void save_csv(const Dataset& ds, const std::string& path);

/// Keeps only bags with exactly `n` instances, order preserved.
Dataset filter_by_instance_count(const Dataset& ds, std::size_t n);

struct StandardizationStats {
  std::vector<double> mean;    // per feature, pooled over all instances
  std::vector<double> stddev;  // population convention; exact zeros replaced by 1
};

StandardizationStats fit_standardizer(const Dataset& train);
Dataset apply_standardizer(const StandardizationStats& stats, const Dataset& ds);
Dataset invert_standardizer(const StandardizationStats& stats, const Dataset& ds);

enum class SynthRule { LatentMean, LatentStddev };

std::string synth_rule_name(SynthRule rule);
SynthRule parse_synth_rule(const std::string& name);

/// Per bag, latent mu ~ U(0,1) and s ~ U(0.5,1.5); every feature of every
/// instance ~ Normal(mu, s), plus optional Normal(0, noise). The label is mu
/// (LatentMean) or s (LatentStddev), so under LatentStddev the bag mean
/// carries no label signal.
struct SynthSpec {
  std::size_t bag_count = 0;
  std::size_t instances_per_bag = 0;
  std::size_t feature_count = 0;
  SynthRule rule = SynthRule::LatentMean;
  double noise = 0.0;
};

Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed);

/// Flat key-value manifest: `<name>.path`, `<name>.scale` (default 1),
/// `<name>.filter_instances` (optional). Relative paths resolve against the
/// manifest's directory.
struct ManifestEntry {
  std::string path;
  double scale = 1.0;
  std::optional<std::size_t> filter_instances;
};

std::map<std::string, ManifestEntry> load_manifest(const std::string& path);

/// Loads the named dataset and applies its instance-count filter if set.
Dataset load_from_manifest(const std::string& manifest_path, const std::string& name);
ManifestEntry manifest_entry(const std::string& manifest_path, const std::string& name);

}  // namespace mir

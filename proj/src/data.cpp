#include "mir/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "mir/errors.hpp"
#include "mir/rng.hpp"
#include "mir/text.hpp"

namespace mir {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t pos = text.find('\n', start);
    if (pos == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return lines;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace

std::size_t Dataset::instance_total() const {
  std::size_t n = 0;
  for (const Bag& bag : bags) n += bag.instance_count();
  return n;
}

std::vector<double> Dataset::labels() const {
  std::vector<double> out;
  out.reserve(bags.size());
  for (const Bag& bag : bags) out.push_back(bag.label);
  return out;
}

void validate(const Dataset& ds) {
  for (const Bag& bag : ds.bags) {
    if (bag.width != ds.feature_count) {
      throw DataError("dataset '" + ds.name + "': bag '" + bag.id + "' has " +
                      std::to_string(bag.width) + " features, expected " +
                      std::to_string(ds.feature_count));
    }
    if (bag.instance_count() == 0) {
      throw DataError("dataset '" + ds.name + "': bag '" + bag.id + "' has no instances");
    }
    if (bag.values.size() % bag.width != 0) {
      throw DataError("dataset '" + ds.name + "': bag '" + bag.id + "' has a ragged value block");
    }
    if (!std::isfinite(bag.label)) {
      throw DataError("dataset '" + ds.name + "': bag '" + bag.id + "' has a non-finite label");
    }
  }
}

Dataset load_csv(const std::string& path) {
  std::string text = read_file(path);
  std::vector<std::string_view> lines = split_lines(text);
  if (lines.empty()) throw DataError(path + ": empty file");

  std::vector<std::string_view> header = split(strip_cr(lines[0]), ',');
  if (header.size() < 3 || trim(header[0]) != "bag_id" || trim(header[1]) != "label") {
    throw DataError(path + ": line 1: header must be 'bag_id,label,f1,...,fd'");
  }
  std::size_t width = header.size() - 2;

  Dataset ds;
  ds.name = std::filesystem::path(path).stem().string();
  ds.feature_count = width;
  std::unordered_map<std::string, std::size_t> index;

  for (std::size_t li = 1; li < lines.size(); ++li) {
    std::string_view line = strip_cr(lines[li]);
    if (line.empty()) continue;
    std::string where = path + ": line " + std::to_string(li + 1);
    std::vector<std::string_view> fields = split(line, ',');
    if (fields.size() != width + 2) {
      throw DataError(where + ": expected " + std::to_string(width + 2) + " fields, got " +
                      std::to_string(fields.size()));
    }
    std::string id(trim(fields[0]));
    if (id.empty()) throw DataError(where + ": empty bag_id");
    auto label = parse_double(trim(fields[1]));
    if (!label || !std::isfinite(*label)) {
      throw DataError(where + ": bad label '" + std::string(fields[1]) + "'");
    }

    auto [it, inserted] = index.try_emplace(id, ds.bags.size());
    if (inserted) {
      Bag bag;
      bag.id = id;
      bag.label = *label;
      bag.width = width;
      ds.bags.push_back(std::move(bag));
    } else if (ds.bags[it->second].label != *label) {
      throw DataError(where + ": bag '" + id + "' has conflicting labels " +
                      to_decimal(ds.bags[it->second].label) + " and " + to_decimal(*label));
    }

    Bag& bag = ds.bags[it->second];
    for (std::size_t j = 0; j < width; ++j) {
      auto v = parse_double(trim(fields[j + 2]));
      if (!v || !std::isfinite(*v)) {
        throw DataError(where + ": non-numeric value '" + std::string(fields[j + 2]) +
                        "' in column " + std::to_string(j + 3));
      }
      bag.values.push_back(*v);
    }
  }
  if (ds.bags.empty()) throw DataError(path + ": no data rows");
  return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << "bag_id,label";
  for (std::size_t j = 1; j <= ds.feature_count; ++j) out << ",f" << j;
  out << '\n';
  for (const Bag& bag : ds.bags) {
    if (bag.id.find_first_of(",\n\r") != std::string::npos) {
      throw DataError("save_csv: bag id '" + bag.id + "' contains a delimiter");
    }
    std::string prefix = bag.id + "," + to_decimal(bag.label);
    for (std::size_t l = 0; l < bag.instance_count(); ++l) {
      out << prefix;
      for (double v : bag.instance(l)) out << ',' << to_decimal(v);
      out << '\n';
    }
  }
  if (!out) throw DataError("write failed: " + path);
}

Dataset filter_by_instance_count(const Dataset& ds, std::size_t n) {
  if (n < 1) throw DataError("filter_by_instance_count: count must be >= 1");
  Dataset out;
  out.name = ds.name;
  out.feature_count = ds.feature_count;
  for (const Bag& bag : ds.bags) {
    if (bag.instance_count() == n) out.bags.push_back(bag);
  }
  if (out.bags.empty()) {
    throw DataError("filter_by_instance_count: no bags in '" + ds.name + "' have " +
                    std::to_string(n) + " instances");
  }
  return out;
}

StandardizationStats fit_standardizer(const Dataset& train) {
  std::size_t d = train.feature_count;
  std::size_t n = train.instance_total();
  if (n == 0) throw DataError("fit_standardizer: dataset has no instances");

  StandardizationStats stats;
  stats.mean.assign(d, 0.0);
  stats.stddev.assign(d, 0.0);
  for (const Bag& bag : train.bags) {
    for (std::size_t l = 0; l < bag.instance_count(); ++l) {
      auto row = bag.instance(l);
      for (std::size_t j = 0; j < d; ++j) stats.mean[j] += row[j];
    }
  }
  for (std::size_t j = 0; j < d; ++j) stats.mean[j] /= static_cast<double>(n);

  for (const Bag& bag : train.bags) {
    for (std::size_t l = 0; l < bag.instance_count(); ++l) {
      auto row = bag.instance(l);
      for (std::size_t j = 0; j < d; ++j) {
        double delta = row[j] - stats.mean[j];
        stats.stddev[j] += delta * delta;
      }
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    stats.stddev[j] = std::sqrt(stats.stddev[j] / static_cast<double>(n));
    if (stats.stddev[j] == 0.0) stats.stddev[j] = 1.0;  // constant feature passes through
  }
  return stats;
}

Dataset apply_standardizer(const StandardizationStats& stats, const Dataset& ds) {
  if (stats.mean.size() != ds.feature_count) {
    throw DataError("apply_standardizer: stats for " + std::to_string(stats.mean.size()) +
                    " features, dataset has " + std::to_string(ds.feature_count));
  }
  Dataset out = ds;
  for (Bag& bag : out.bags) {
    for (std::size_t l = 0; l < bag.instance_count(); ++l) {
      auto row = bag.instance(l);
      for (std::size_t j = 0; j < bag.width; ++j) {
        row[j] = (row[j] - stats.mean[j]) / stats.stddev[j];
      }
    }
  }
  return out;
}

Dataset invert_standardizer(const StandardizationStats& stats, const Dataset& ds) {
  if (stats.mean.size() != ds.feature_count) {
    throw DataError("invert_standardizer: stats for " + std::to_string(stats.mean.size()) +
                    " features, dataset has " + std::to_string(ds.feature_count));
  }
  Dataset out = ds;
  for (Bag& bag : out.bags) {
    for (std::size_t l = 0; l < bag.instance_count(); ++l) {
      auto row = bag.instance(l);
      for (std::size_t j = 0; j < bag.width; ++j) {
        row[j] = row[j] * stats.stddev[j] + stats.mean[j];
      }
    }
  }
  return out;
}

std::string synth_rule_name(SynthRule rule) {
  return rule == SynthRule::LatentMean ? "latent-mean" : "latent-stddev";
}

SynthRule parse_synth_rule(const std::string& name) {
  if (name == "latent-mean") return SynthRule::LatentMean;
  if (name == "latent-stddev") return SynthRule::LatentStddev;
  throw DataError("unknown synthetic label rule '" + name + "'");
}

Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.bag_count == 0 || spec.instances_per_bag == 0 || spec.feature_count == 0) {
    throw DataError("synth_generate: bag count, instances per bag, and feature count must be positive");
  }
  if (spec.noise < 0.0) throw DataError("synth_generate: noise must be >= 0");

  Rng rng(seed);
  Dataset ds;
  ds.name = "synth-" + synth_rule_name(spec.rule);
  ds.feature_count = spec.feature_count;
  ds.bags.reserve(spec.bag_count);
  for (std::size_t i = 0; i < spec.bag_count; ++i) {
    double mu = rng.uniform(0.0, 1.0);
    double s = rng.uniform(0.5, 1.5);
    Bag bag;
    bag.id = "b" + std::to_string(i);
    bag.label = spec.rule == SynthRule::LatentMean ? mu : s;
    bag.width = spec.feature_count;
    bag.values.reserve(spec.instances_per_bag * spec.feature_count);
    for (std::size_t l = 0; l < spec.instances_per_bag; ++l) {
      for (std::size_t j = 0; j < spec.feature_count; ++j) {
        double v = rng.normal(mu, s);
        if (spec.noise > 0.0) v += rng.normal(0.0, spec.noise);
        bag.values.push_back(v);
      }
    }
    ds.bags.push_back(std::move(bag));
  }
  return ds;
}

std::map<std::string, ManifestEntry> load_manifest(const std::string& path) {
  std::string text = read_file(path);
  std::map<std::string, ManifestEntry> entries;
  std::vector<std::string_view> lines = split_lines(text);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    std::string_view line = trim(strip_cr(lines[li]));
    if (line.empty() || line.front() == '#') continue;
    std::string where = path + ": line " + std::to_string(li + 1);
    std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw DataError(where + ": expected 'key = value'");
    std::string_view key = trim(line.substr(0, eq));
    std::string_view value = trim(line.substr(eq + 1));
    std::size_t dot = key.find('.');
    if (dot == std::string_view::npos || dot == 0 || dot + 1 >= key.size()) {
      throw DataError(where + ": key must be '<dataset>.<field>'");
    }
    std::string name(key.substr(0, dot));
    std::string_view field = key.substr(dot + 1);
    ManifestEntry& entry = entries[name];
    if (field == "path") {
      entry.path = std::string(value);
    } else if (field == "scale") {
      auto v = parse_double(value);
      if (!v || !(*v > 0.0)) throw DataError(where + ": bad scale '" + std::string(value) + "'");
      entry.scale = *v;
    } else if (field == "filter_instances") {
      auto v = parse_size(value);
      if (!v || *v == 0) {
        throw DataError(where + ": bad filter_instances '" + std::string(value) + "'");
      }
      entry.filter_instances = *v;
    } else {
      throw DataError(where + ": unknown field '" + std::string(field) + "'");
    }
  }
  return entries;
}

ManifestEntry manifest_entry(const std::string& manifest_path, const std::string& name) {
  auto entries = load_manifest(manifest_path);
  auto it = entries.find(name);
  if (it == entries.end()) {
    throw DataError(manifest_path + ": no dataset named '" + name + "'");
  }
  if (it->second.path.empty()) {
    throw DataError(manifest_path + ": dataset '" + name + "' has no path");
  }
  ManifestEntry entry = it->second;
  std::filesystem::path p(entry.path);
  if (p.is_relative()) {
    entry.path = (std::filesystem::path(manifest_path).parent_path() / p).string();
  }
  return entry;
}

Dataset load_from_manifest(const std::string& manifest_path, const std::string& name) {
  ManifestEntry entry = manifest_entry(manifest_path, name);
  Dataset ds = load_csv(entry.path);
  ds.name = name;
  if (entry.filter_instances) {
    ds = filter_by_instance_count(ds, *entry.filter_instances);
  }
  validate(ds);
  return ds;
}

}  // namespace mir

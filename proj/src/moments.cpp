#include "mir/moments.hpp"

#include "mir/errors.hpp"

namespace mir {

std::string attach_mode_name(AttachMode mode) {
  return mode == AttachMode::ReplaceBag ? "replace-bag" : "append-per-instance";
}

AttachMode parse_attach_mode(const std::string& name) {
  if (name == "replace-bag") return AttachMode::ReplaceBag;
  if (name == "append-per-instance") return AttachMode::AppendPerInstance;
  throw DataError("unknown attach mode '" + name + "'");
}

std::vector<double> raw_moments(const Bag& bag, std::size_t max_order) {
  if (max_order < 1) throw Error("raw_moments: order must be >= 1");
  std::size_t d = bag.width;
  std::size_t count = bag.instance_count();
  if (count == 0) throw Error("raw_moments: empty bag");

  std::vector<double> out(d * max_order, 0.0);
  for (std::size_t l = 0; l < count; ++l) {
    auto row = bag.instance(l);
    for (std::size_t j = 0; j < d; ++j) {
      double power = 1.0;
      for (std::size_t k = 0; k < max_order; ++k) {
        power *= row[j];
        out[j * max_order + k] += power;
      }
    }
  }
  double inv = 1.0 / static_cast<double>(count);
  for (double& v : out) v *= inv;
  return out;
}

Dataset augment_dataset(const Dataset& ds, const MomentConfig& cfg) {
  if (cfg.max_order > kMaxMomentOrder) {
    throw Error("augment_dataset: moment order " + std::to_string(cfg.max_order) +
                " exceeds the supported maximum of " + std::to_string(kMaxMomentOrder));
  }
  if (cfg.max_order == 0) return ds;

  Dataset out;
  out.name = ds.name;
  std::size_t block = ds.feature_count * cfg.max_order;
  out.feature_count =
      cfg.attach == AttachMode::ReplaceBag ? block : ds.feature_count + block;
  out.bags.reserve(ds.bags.size());

  for (const Bag& bag : ds.bags) {
    std::vector<double> moments = raw_moments(bag, cfg.max_order);
    Bag next;
    next.id = bag.id;
    next.label = bag.label;
    next.width = out.feature_count;
    if (cfg.attach == AttachMode::ReplaceBag) {
      next.values = std::move(moments);
    } else {
      next.values.reserve(bag.instance_count() * next.width);
      for (std::size_t l = 0; l < bag.instance_count(); ++l) {
        auto row = bag.instance(l);
        next.values.insert(next.values.end(), row.begin(), row.end());
        next.values.insert(next.values.end(), moments.begin(), moments.end());
      }
    }
    out.bags.push_back(std::move(next));
  }
  return out;
}

}  // namespace mir

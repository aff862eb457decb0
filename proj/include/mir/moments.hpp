#pragma once

#include <vector>

#include "mir/data.hpp"

namespace mir {

enum class AttachMode { ReplaceBag, AppendPerInstance };

std::string attach_mode_name(AttachMode mode);
AttachMode parse_attach_mode(const std::string& name);

/// Raw-moment feature augmentation. Inputs should be standardized first so
/// high powers stay in range. Orders above 10 are rejected: the estimates
/// degrade faster than they inform.
struct MomentConfig {
  std::size_t max_order = 0;  // m; 0 disables augmentation
  AttachMode attach = AttachMode::AppendPerInstance;
};

inline constexpr std::size_t kMaxMomentOrder = 10;

/// Raw sample moments of each feature over the bag: entry j*m + (k-1) is
/// (1/L) sum_l x[l][j]^k for k = 1..m. The k=1 block is the bag mean.
std::vector<double> raw_moments(const Bag& bag, std::size_t max_order);

/// ReplaceBag: each bag becomes a single d*m instance (its moment vector).
/// AppendPerInstance: every instance gains the bag's d*m moments, so the
/// new width is d*(1+m). max_order 0 returns the dataset unchanged.
Dataset augment_dataset(const Dataset& ds, const MomentConfig& cfg);

}  // namespace mir

#pragma once

#include <optional>
#include <string>

#include "mir/attention.hpp"
#include "mir/baselines.hpp"
#include "mir/models.hpp"
#include "mir/moments.hpp"

namespace mir {

/// Feature pipeline fit at training time, stored so predictions on raw data
/// replay the same standardization and moment augmentation.
struct Preprocessing {
  StandardizationStats stats;
  MomentConfig moments;
};

/// Versioned JSON container for a trained model. Weight values round-trip
/// exactly. Exactly one of `attention`/`mlp` is set, matching `kind`; for
/// instance models `instance_aggregator` records the prediction rule.
struct Checkpoint {
  AlgorithmKind kind = AlgorithmKind::Attention;
  std::optional<AttentionConfig> attention_config;
  std::optional<AttentionModelParams> attention;
  std::optional<MLPRegressorParams> mlp;
  std::optional<Preprocessing> preprocessing;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Replays the stored standardization and moment augmentation on raw data.
Dataset checkpoint_preprocess(const Checkpoint& ckpt, const Dataset& raw);

/// Preprocesses and predicts every bag with the stored model.
std::vector<double> checkpoint_predict(const Checkpoint& ckpt, const Dataset& raw);

}  // namespace mir

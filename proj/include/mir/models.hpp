#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mir/attention.hpp"
#include "mir/baselines.hpp"
#include "mir/train.hpp"

namespace mir {

enum class AlgorithmKind { Attention, Aggregated, InstanceMean, InstanceMedian };

AlgorithmKind parse_algorithm(const std::string& name);
std::string algorithm_name(AlgorithmKind kind);

/// Attention-MIR: one training sample per bag.
class AttentionModel final : public TrainableModel {
 public:
  AttentionModel(const AttentionConfig& cfg, std::uint64_t seed);
  AttentionModel(const AttentionConfig& cfg, const AttentionModelParams& params);

  void bind(const Dataset& train) override;
  std::span<const NodePtr> parameters() override { return param_list_; }
  std::size_t sample_count() const override;
  NodePtr sample_loss(std::size_t index) override;
  double predict(const Bag& bag) const override;

  AttentionResult forward(const Bag& bag) const;
  const AttentionConfig& config() const { return cfg_; }
  AttentionModelParams params() const { return export_attention_params(nodes_); }

 private:
  AttentionConfig cfg_;
  AttentionParamNodes nodes_;
  std::vector<NodePtr> param_list_;
  const Dataset* train_ = nullptr;
};

/// Aggregated-MIR: each bag collapses to its meta-instance (feature mean).
class AggregatedModel final : public TrainableModel {
 public:
  AggregatedModel(std::size_t width, std::size_t input_dim, std::uint64_t seed);
  AggregatedModel(const MLPRegressorParams& params);

  void bind(const Dataset& train) override;
  std::span<const NodePtr> parameters() override { return param_list_; }
  std::size_t sample_count() const override;
  NodePtr sample_loss(std::size_t index) override;
  double predict(const Bag& bag) const override;

  MLPRegressorParams params() const { return export_mlp_params(nodes_); }

 private:
  MLPParamNodes nodes_;
  std::vector<NodePtr> param_list_;
  std::vector<std::vector<double>> meta_instances_;
  std::vector<double> labels_;
};

/// Instance-MIR: every (instance, bag label) pair is one training sample;
/// bag structure reappears only when aggregating predictions.
class InstanceModel final : public TrainableModel {
 public:
  InstanceModel(std::size_t width, std::size_t input_dim, InstanceAggregator aggregator,
                std::uint64_t seed);
  InstanceModel(const MLPRegressorParams& params, InstanceAggregator aggregator);

  void bind(const Dataset& train) override;
  std::span<const NodePtr> parameters() override { return param_list_; }
  std::size_t sample_count() const override;
  NodePtr sample_loss(std::size_t index) override;
  double predict(const Bag& bag) const override;

  MLPRegressorParams params() const { return export_mlp_params(nodes_); }
  InstanceAggregator aggregator() const { return aggregator_; }

 private:
  MLPParamNodes nodes_;
  std::vector<NodePtr> param_list_;
  InstanceAggregator aggregator_;
  const Dataset* train_ = nullptr;
  std::vector<std::pair<std::size_t, std::size_t>> samples_;  // (bag, instance)
};

}  // namespace mir

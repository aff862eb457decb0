#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mir/autodiff.hpp"
#include "mir/data.hpp"

namespace mir {

/// Single-hidden-layer regressor shared by the aggregated and instance
/// baselines: tanh hidden layer, linear scalar output.
struct MLPRegressorParams {
  Tensor hidden_w;  // width x input_dim
  Tensor hidden_b;  // width
  Tensor out_w;     // 1 x width
  Tensor out_b;     // 1
};

MLPRegressorParams init_mlp_params(std::size_t width, std::size_t input_dim, std::uint64_t seed);

struct MLPParamNodes {
  NodePtr hidden_w, hidden_b, out_w, out_b;
  std::vector<NodePtr> all() const;
};

MLPParamNodes mlp_param_nodes(const MLPRegressorParams& params, bool needs_grad);
MLPRegressorParams export_mlp_params(const MLPParamNodes& nodes);

/// Scalar prediction node for one input vector; shared loss-graph builder
/// for both baselines.
NodePtr build_mlp_graph(const MLPParamNodes& params, std::span<const double> x);

/// Feature-wise arithmetic mean of the bag; the aggregated-MIR meta-instance.
std::vector<double> aggregate_mean(const Bag& bag);

double mlp_predict(const MLPRegressorParams& params, std::span<const double> x);
/// Same arithmetic, reading the live parameter nodes; avoids a per-call copy
/// of the weight tensors during validation.
double mlp_predict(const MLPParamNodes& nodes, std::span<const double> x);

/// Predicts from the bag mean. Under replace-bag moment augmentation the bag
/// holds a single moment-vector instance, so the same path covers both.
double aggregated_predict(const MLPRegressorParams& params, const Bag& bag);

enum class InstanceAggregator { Mean, Median };

/// Mean or median of a prediction list; even-length median is the midpoint
/// of the two central values.
double aggregate_predictions(std::vector<double> predictions, InstanceAggregator aggregator);

/// Predicts every instance separately and aggregates per bag.
double instance_predict(const MLPRegressorParams& params, const Bag& bag,
                        InstanceAggregator aggregator);

}  // namespace mir

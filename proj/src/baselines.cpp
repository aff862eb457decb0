#include "mir/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "mir/errors.hpp"
#include "mir/rng.hpp"

namespace mir {

namespace {

double mlp_eval(const Tensor& hidden_w, const Tensor& hidden_b, const Tensor& out_w,
                const Tensor& out_b, std::span<const double> x) {
  if (hidden_w.cols() != x.size()) {
    throw ShapeError("mlp_predict: input of " + std::to_string(x.size()) +
                     " features, weights expect " + std::to_string(hidden_w.cols()));
  }
  std::size_t width = hidden_w.rows();
  double out = out_b[0];
  for (std::size_t i = 0; i < width; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += hidden_w.at(i, j) * x[j];
    out += out_w[i] * std::tanh(acc + hidden_b[i]);
  }
  return out;
}

}  // namespace

MLPRegressorParams init_mlp_params(std::size_t width, std::size_t input_dim, std::uint64_t seed) {
  if (width < 1 || input_dim < 1) throw Error("mlp init: width and input_dim must be >= 1");
  Rng rng(seed);
  MLPRegressorParams p;
  p.hidden_w = Tensor({width, input_dim});
  p.hidden_b = Tensor({width});
  p.out_w = Tensor({1, width});
  p.out_b = Tensor({1});
  double hidden_bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& v : p.hidden_w.values()) v = rng.uniform(-hidden_bound, hidden_bound);
  double out_bound = 1.0 / std::sqrt(static_cast<double>(width));
  for (double& v : p.out_w.values()) v = rng.uniform(-out_bound, out_bound);
  return p;
}

std::vector<NodePtr> MLPParamNodes::all() const { return {hidden_w, hidden_b, out_w, out_b}; }

MLPParamNodes mlp_param_nodes(const MLPRegressorParams& params, bool needs_grad) {
  MLPParamNodes nodes;
  nodes.hidden_w = leaf(params.hidden_w, needs_grad, "hidden_w");
  nodes.hidden_b = leaf(params.hidden_b, needs_grad, "hidden_b");
  nodes.out_w = leaf(params.out_w, needs_grad, "out_w");
  nodes.out_b = leaf(params.out_b, needs_grad, "out_b");
  return nodes;
}

MLPRegressorParams export_mlp_params(const MLPParamNodes& nodes) {
  MLPRegressorParams p;
  p.hidden_w = nodes.hidden_w->value;
  p.hidden_b = nodes.hidden_b->value;
  p.out_w = nodes.out_w->value;
  p.out_b = nodes.out_b->value;
  return p;
}

NodePtr build_mlp_graph(const MLPParamNodes& params, std::span<const double> x) {
  NodePtr input = constant(Tensor::vector(x));
  NodePtr hidden = tanh(add(matvec(params.hidden_w, input), params.hidden_b));
  return add(matvec(params.out_w, hidden), params.out_b);
}

std::vector<double> aggregate_mean(const Bag& bag) {
  std::size_t count = bag.instance_count();
  if (count == 0) throw Error("aggregate_mean: empty bag");
  std::vector<double> mean(bag.width, 0.0);
  for (std::size_t l = 0; l < count; ++l) {
    auto row = bag.instance(l);
    for (std::size_t j = 0; j < bag.width; ++j) mean[j] += row[j];
  }
  for (double& v : mean) v /= static_cast<double>(count);
  return mean;
}

double mlp_predict(const MLPRegressorParams& params, std::span<const double> x) {
  return mlp_eval(params.hidden_w, params.hidden_b, params.out_w, params.out_b, x);
}

double mlp_predict(const MLPParamNodes& nodes, std::span<const double> x) {
  return mlp_eval(nodes.hidden_w->value, nodes.hidden_b->value, nodes.out_w->value,
                  nodes.out_b->value, x);
}

double aggregated_predict(const MLPRegressorParams& params, const Bag& bag) {
  return mlp_predict(params, aggregate_mean(bag));
}

double aggregate_predictions(std::vector<double> predictions, InstanceAggregator aggregator) {
  std::size_t count = predictions.size();
  if (count == 0) throw Error("aggregate_predictions: empty list");
  if (aggregator == InstanceAggregator::Mean) {
    double sum = 0.0;
    for (double p : predictions) sum += p;
    return sum / static_cast<double>(count);
  }
  std::sort(predictions.begin(), predictions.end());
  std::size_t mid = count / 2;
  if (count % 2 == 1) return predictions[mid];
  return 0.5 * (predictions[mid - 1] + predictions[mid]);
}

double instance_predict(const MLPRegressorParams& params, const Bag& bag,
                        InstanceAggregator aggregator) {
  std::size_t count = bag.instance_count();
  if (count == 0) throw Error("instance_predict: empty bag");
  std::vector<double> predictions;
  predictions.reserve(count);
  for (std::size_t l = 0; l < count; ++l) {
    predictions.push_back(mlp_predict(params, bag.instance(l)));
  }
  return aggregate_predictions(std::move(predictions), aggregator);
}

}  // namespace mir

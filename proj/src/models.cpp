#include "mir/models.hpp"

#include "mir/errors.hpp"

namespace mir {

AlgorithmKind parse_algorithm(const std::string& name) {
  if (name == "attention") return AlgorithmKind::Attention;
  if (name == "aggregated") return AlgorithmKind::Aggregated;
  if (name == "instance-mean") return AlgorithmKind::InstanceMean;
  if (name == "instance-median") return AlgorithmKind::InstanceMedian;
  throw DataError("unknown algorithm '" + name +
                  "' (expected attention, aggregated, instance-mean, or instance-median)");
}

std::string algorithm_name(AlgorithmKind kind) {
  switch (kind) {
    case AlgorithmKind::Attention: return "attention";
    case AlgorithmKind::Aggregated: return "aggregated";
    case AlgorithmKind::InstanceMean: return "instance-mean";
    case AlgorithmKind::InstanceMedian: return "instance-median";
  }
  throw Error("algorithm_name: bad kind");
}

namespace {

NodePtr squared_error(const NodePtr& prediction, double label) {
  return square(sub(prediction, constant(Tensor::scalar(label))));
}

}  // namespace

AttentionModel::AttentionModel(const AttentionConfig& cfg, std::uint64_t seed)
    : AttentionModel(cfg, init_attention_params(cfg, seed)) {}

AttentionModel::AttentionModel(const AttentionConfig& cfg, const AttentionModelParams& params)
    : cfg_(cfg), nodes_(attention_param_nodes(params, true)), param_list_(nodes_.all()) {}

void AttentionModel::bind(const Dataset& train) { train_ = &train; }

std::size_t AttentionModel::sample_count() const {
  return train_ == nullptr ? 0 : train_->bags.size();
}

NodePtr AttentionModel::sample_loss(std::size_t index) {
  const Bag& bag = train_->bags[index];
  AttentionForward fwd = build_attention_graph(nodes_, cfg_, bag);
  return squared_error(fwd.prediction, bag.label);
}

double AttentionModel::predict(const Bag& bag) const {
  return build_attention_graph(nodes_, cfg_, bag).prediction->value[0];
}

AttentionResult AttentionModel::forward(const Bag& bag) const {
  return attention_forward(params(), cfg_, bag);
}

AggregatedModel::AggregatedModel(std::size_t width, std::size_t input_dim, std::uint64_t seed)
    : AggregatedModel(init_mlp_params(width, input_dim, seed)) {}

AggregatedModel::AggregatedModel(const MLPRegressorParams& params)
    : nodes_(mlp_param_nodes(params, true)), param_list_(nodes_.all()) {}

void AggregatedModel::bind(const Dataset& train) {
  meta_instances_.clear();
  labels_.clear();
  meta_instances_.reserve(train.bags.size());
  labels_.reserve(train.bags.size());
  for (const Bag& bag : train.bags) {
    meta_instances_.push_back(aggregate_mean(bag));
    labels_.push_back(bag.label);
  }
}

std::size_t AggregatedModel::sample_count() const { return meta_instances_.size(); }

NodePtr AggregatedModel::sample_loss(std::size_t index) {
  return squared_error(build_mlp_graph(nodes_, meta_instances_[index]), labels_[index]);
}

double AggregatedModel::predict(const Bag& bag) const {
  return mlp_predict(nodes_, aggregate_mean(bag));
}

InstanceModel::InstanceModel(std::size_t width, std::size_t input_dim,
                             InstanceAggregator aggregator, std::uint64_t seed)
    : InstanceModel(init_mlp_params(width, input_dim, seed), aggregator) {}

InstanceModel::InstanceModel(const MLPRegressorParams& params, InstanceAggregator aggregator)
    : nodes_(mlp_param_nodes(params, true)), param_list_(nodes_.all()), aggregator_(aggregator) {}

void InstanceModel::bind(const Dataset& train) {
  train_ = &train;
  samples_.clear();
  samples_.reserve(train.instance_total());
  for (std::size_t b = 0; b < train.bags.size(); ++b) {
    for (std::size_t l = 0; l < train.bags[b].instance_count(); ++l) {
      samples_.emplace_back(b, l);
    }
  }
}

std::size_t InstanceModel::sample_count() const { return samples_.size(); }

NodePtr InstanceModel::sample_loss(std::size_t index) {
  auto [b, l] = samples_[index];
  const Bag& bag = train_->bags[b];
  return squared_error(build_mlp_graph(nodes_, bag.instance(l)), bag.label);
}

double InstanceModel::predict(const Bag& bag) const {
  std::size_t count = bag.instance_count();
  std::vector<double> predictions;
  predictions.reserve(count);
  for (std::size_t l = 0; l < count; ++l) {
    predictions.push_back(mlp_predict(nodes_, bag.instance(l)));
  }
  return aggregate_predictions(std::move(predictions), aggregator_);
}

}  // namespace mir

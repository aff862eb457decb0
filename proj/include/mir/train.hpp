#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "mir/autodiff.hpp"
#include "mir/data.hpp"

namespace mir {

double mse_loss(std::span<const double> predictions, std::span<const double> labels);

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  /// Bags per step for bag-level models, instances for per-instance models.
  std::size_t batch_size = 16;
  std::size_t max_epochs = 500;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
};

/// Adam with decoupled weight decay over a flat list of parameter leaves.
/// Moment buffers are keyed by position, so the parameter list must stay
/// stable across steps.
class AdamOptimizer {
 public:
  AdamOptimizer(double learning_rate, double weight_decay);

  void step(std::span<const NodePtr> params, std::span<const Tensor> gradients);
  std::size_t steps_taken() const { return steps_; }

 private:
  double learning_rate_;
  double weight_decay_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
  std::size_t steps_ = 0;
  std::vector<Tensor> first_moment_;
  std::vector<Tensor> second_moment_;
};

/// Uniform view of one trainable algorithm: after bind() it enumerates its
/// training samples (bags, or instances for instance-MIR), builds a
/// squared-error graph per sample against persistent parameter leaves, and
/// predicts bag labels for validation.
class TrainableModel {
 public:
  virtual ~TrainableModel() = default;
  virtual void bind(const Dataset& train) = 0;
  virtual std::span<const NodePtr> parameters() = 0;
  virtual std::size_t sample_count() const = 0;
  virtual NodePtr sample_loss(std::size_t index) = 0;
  virtual double predict(const Bag& bag) const = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_rmse = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_rmse = std::numeric_limits<double>::infinity();
};

using EpochObserver = std::function<void(std::size_t epoch, std::span<const NodePtr> params)>;

/// Shuffles samples each epoch with the run seed, accumulates gradients over
/// each minibatch before one optimizer step, tracks validation RMSE, and
/// restores the parameters of the best validation epoch before returning.
/// Stops after `patience` epochs without improvement.
TrainHistory train(TrainableModel& model, const Dataset& train_set, const Dataset& validation_set,
                   const TrainConfig& cfg, const EpochObserver& observer = nullptr);

/// CSV `epoch,train_loss,val_rmse`.
void write_history_csv(std::ostream& out, const TrainHistory& history);

}  // namespace mir

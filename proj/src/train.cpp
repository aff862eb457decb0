#include "mir/train.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

#include "mir/errors.hpp"
#include "mir/rng.hpp"
#include "mir/text.hpp"

namespace mir {

double mse_loss(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size()) {
    throw Error("mse_loss: " + std::to_string(predictions.size()) + " predictions vs " +
                std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) throw Error("mse_loss: empty inputs");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    double diff = predictions[i] - labels[i];
    sum += diff * diff;
  }
  return sum / static_cast<double>(predictions.size());
}

AdamOptimizer::AdamOptimizer(double learning_rate, double weight_decay)
    : learning_rate_(learning_rate), weight_decay_(weight_decay) {
  if (!(learning_rate > 0.0)) throw Error("optimizer: learning rate must be > 0");
  if (weight_decay < 0.0) throw Error("optimizer: weight decay must be >= 0");
}

void AdamOptimizer::step(std::span<const NodePtr> params, std::span<const Tensor> gradients) {
  if (params.size() != gradients.size()) {
    throw Error("optimizer: " + std::to_string(params.size()) + " params vs " +
                std::to_string(gradients.size()) + " gradients");
  }
  if (first_moment_.empty()) {
    for (const NodePtr& p : params) {
      first_moment_.push_back(Tensor::zeros(p->value.shape()));
      second_moment_.push_back(Tensor::zeros(p->value.shape()));
    }
  }
  ++steps_;
  double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const NodePtr& p = params[pi];
    const Tensor& g = gradients[pi];
    if (!g.same_shape(p->value)) {
      throw ShapeError("optimizer: gradient " + g.shape_str() + " for parameter '" + p->label +
                       "' of shape " + p->value.shape_str());
    }
    auto pv = p->value.values();
    auto gv = g.values();
    auto m = first_moment_[pi].values();
    auto v = second_moment_[pi].values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      if (!std::isfinite(gv[i])) {
        throw NumericError("optimizer: non-finite gradient for parameter '" + p->label +
                           "' entry " + std::to_string(i));
      }
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gv[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gv[i] * gv[i];
      double m_hat = m[i] / bias1;
      double v_hat = v[i] / bias2;
      pv[i] -= learning_rate_ * (m_hat / (std::sqrt(v_hat) + epsilon_) + weight_decay_ * pv[i]);
    }
  }
}

namespace {

std::vector<double> predict_all(const TrainableModel& model, const Dataset& ds) {
  std::vector<double> out;
  out.reserve(ds.bags.size());
  for (const Bag& bag : ds.bags) out.push_back(model.predict(bag));
  return out;
}

double validation_rmse(const TrainableModel& model, const Dataset& ds) {
  std::vector<double> preds = predict_all(model, ds);
  std::vector<double> labels = ds.labels();
  return std::sqrt(mse_loss(preds, labels));
}

}  // namespace

TrainHistory train(TrainableModel& model, const Dataset& train_set, const Dataset& validation_set,
                   const TrainConfig& cfg, const EpochObserver& observer) {
  if (!(cfg.learning_rate > 0.0)) throw Error("train: learning rate must be > 0");
  if (cfg.patience < 1) throw Error("train: patience must be >= 1");
  if (cfg.batch_size < 1) throw Error("train: batch size must be >= 1");
  if (cfg.max_epochs < 1) throw Error("train: max epochs must be >= 1");
  if (train_set.bags.empty()) throw Error("train: empty training set");
  if (validation_set.bags.empty()) throw Error("train: empty validation set");

  model.bind(train_set);
  std::span<const NodePtr> params = model.parameters();
  std::size_t n = model.sample_count();
  if (n == 0) throw Error("train: model enumerated no training samples");

  AdamOptimizer optimizer(cfg.learning_rate, cfg.weight_decay);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<Tensor> accumulated(params.size());
  std::vector<Tensor> best_params;
  TrainHistory history;
  std::size_t epochs_without_improvement = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double squared_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t stop = std::min(n, start + cfg.batch_size);
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        accumulated[pi] = Tensor::zeros(params[pi]->value.shape());
      }
      for (std::size_t s = start; s < stop; ++s) {
        for (const NodePtr& p : params) p->grad = Tensor();
        NodePtr loss = model.sample_loss(order[s]);
        double value = loss->value[0];
        if (!std::isfinite(value)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", sample " + std::to_string(order[s]));
        }
        squared_sum += value;
        backward(loss);
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
          const Tensor& g = params[pi]->grad;
          if (g.numel() == 0) continue;  // parameter unused by this sample's graph
          auto acc = accumulated[pi].values();
          auto gv = g.values();
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gv[i];
        }
      }
      // Summed bag gradients become the batch-mean gradient before the step.
      double inv = 1.0 / static_cast<double>(stop - start);
      for (Tensor& g : accumulated) {
        for (double& v : g.values()) v *= inv;
      }
      optimizer.step(params, accumulated);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = squared_sum / static_cast<double>(n);
    record.val_rmse = validation_rmse(model, validation_set);
    if (!std::isfinite(record.val_rmse)) {
      throw NumericError("train: non-finite validation RMSE at epoch " + std::to_string(epoch));
    }
    history.epochs.push_back(record);
    if (observer) observer(epoch, params);

    if (record.val_rmse < history.best_val_rmse) {
      history.best_val_rmse = record.val_rmse;
      history.best_epoch = epoch;
      best_params.clear();
      for (const NodePtr& p : params) best_params.push_back(p->value);
      epochs_without_improvement = 0;
    } else {
      ++epochs_without_improvement;
      if (epochs_without_improvement >= cfg.patience) break;
    }
  }

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    params[pi]->value = best_params[pi];
  }
  return history;
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
  out << "epoch,train_loss,val_rmse\n";
  for (const EpochRecord& r : history.epochs) {
    out << r.epoch << ',' << to_decimal(r.train_loss) << ',' << to_decimal(r.val_rmse) << '\n';
  }
}

}  // namespace mir

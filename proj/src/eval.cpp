#include "mir/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "mir/errors.hpp"
#include "mir/rng.hpp"
#include "mir/text.hpp"

namespace mir {

namespace {

// Distinct stream tags so plan shuffles, model inits, and epoch shuffles
// never draw from overlapping sequences.
constexpr std::uint64_t kPlanStream = 0x5157;
constexpr std::uint64_t kModelStream = 0x3A11;
constexpr std::uint64_t kTrainStream = 0x7E55;

Dataset take_bags(const Dataset& ds, std::span<const std::size_t> indices,
                  const std::string& suffix) {
  Dataset out;
  out.name = ds.name + suffix;
  out.feature_count = ds.feature_count;
  out.bags.reserve(indices.size());
  for (std::size_t i : indices) out.bags.push_back(ds.bags[i]);
  return out;
}

double mean_of(std::span<const double> xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

double std_of(std::span<const double> xs, double mean) {
  double sum = 0.0;
  for (double x : xs) sum += (x - mean) * (x - mean);
  return std::sqrt(sum / static_cast<double>(xs.size()));
}

}  // namespace

FoldPlan make_fold_plan(std::size_t bag_count, std::size_t folds, std::size_t repeats,
                        std::uint64_t seed) {
  if (folds < 2) throw Error("fold plan: need at least 2 folds");
  if (repeats < 1) throw Error("fold plan: need at least 1 repetition");
  if (bag_count < 2 * folds) {
    throw Error("fold plan: " + std::to_string(bag_count) + " bags cannot fill " +
                std::to_string(folds) + " folds of at least 2 bags each");
  }

  FoldPlan plan;
  plan.folds = folds;
  plan.repeats = repeats;
  plan.cells.resize(repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    Rng rng(mix_seed(mix_seed(seed, kPlanStream), r));
    std::vector<std::size_t> order(bag_count);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    // First bag_count % folds folds take one extra bag.
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::size_t base = bag_count / folds, extra = bag_count % folds, start = 0;
    for (std::size_t k = 0; k < folds; ++k) {
      std::size_t size = base + (k < extra ? 1 : 0);
      ranges.emplace_back(start, size);
      start += size;
    }

    plan.cells[r].resize(folds);
    for (std::size_t k = 0; k < folds; ++k) {
      FoldCell& cell = plan.cells[r][k];
      auto [held_start, held_size] = ranges[k];
      for (std::size_t i = 0; i < held_size; ++i) {
        std::size_t bag = order[held_start + i];
        // Alternating halves keep the two sizes within one of each other.
        (i % 2 == 0 ? cell.validation : cell.test).push_back(bag);
      }
      for (std::size_t i = 0; i < bag_count; ++i) {
        if (i < held_start || i >= held_start + held_size) cell.train.push_back(order[i]);
      }
    }
  }
  return plan;
}

double rmse(std::span<const double> predictions, std::span<const double> labels, double scale) {
  return scale * std::sqrt(mse_loss(predictions, labels));
}

AttachMode default_attach_mode(AlgorithmKind kind) {
  return kind == AlgorithmKind::Aggregated ? AttachMode::ReplaceBag
                                           : AttachMode::AppendPerInstance;
}

MomentConfig moment_config(const AlgorithmSpec& spec) {
  MomentConfig cfg;
  cfg.max_order = spec.moment_order;
  cfg.attach = spec.attach.value_or(default_attach_mode(spec.kind));
  return cfg;
}

std::string describe(const AlgorithmSpec& spec) {
  std::string out = "hidden=" + std::to_string(spec.hidden);
  if (spec.kind == AlgorithmKind::Attention) out += " steps=" + std::to_string(spec.steps);
  out += " moments=" + std::to_string(spec.moment_order);
  if (spec.moment_order > 0) out += " attach=" + attach_mode_name(moment_config(spec).attach);
  out += " lr=" + to_decimal(spec.train.learning_rate);
  out += " wd=" + to_decimal(spec.train.weight_decay);
  out += " batch=" + std::to_string(spec.train.batch_size);
  out += " epochs=" + std::to_string(spec.train.max_epochs);
  out += " patience=" + std::to_string(spec.train.patience);
  return out;
}

CVReport run_cv_with_factory(const ModelFactory& factory, const TrainConfig& train_cfg,
                             const MomentConfig& moments, const Dataset& ds, const CVConfig& cfg,
                             const std::string& algorithm_label,
                             const std::string& hyperparameters) {
  validate(ds);
  FoldPlan plan = make_fold_plan(ds.bag_count(), cfg.folds, cfg.repeats, cfg.seed);

  CVReport report;
  report.algorithm = algorithm_label;
  report.dataset = ds.name;
  report.hyperparameters = hyperparameters;
  report.scale = cfg.scale;
  report.entries.resize(cfg.repeats * cfg.folds);

  std::atomic<std::size_t> next_cell{0};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    while (!failed.load()) {
      std::size_t c = next_cell.fetch_add(1);
      if (c >= report.entries.size()) break;
      std::size_t r = c / cfg.folds, k = c % cfg.folds;
      try {
        const FoldCell& cell = plan.cells[r][k];
        Dataset train_set = take_bags(ds, cell.train, "-train");
        Dataset val_set = take_bags(ds, cell.validation, "-val");
        Dataset test_set = take_bags(ds, cell.test, "-test");

        StandardizationStats stats = fit_standardizer(train_set);
        train_set = apply_standardizer(stats, train_set);
        val_set = apply_standardizer(stats, val_set);
        test_set = apply_standardizer(stats, test_set);
        if (moments.max_order > 0) {
          train_set = augment_dataset(train_set, moments);
          val_set = augment_dataset(val_set, moments);
          test_set = augment_dataset(test_set, moments);
        }

        std::uint64_t cell_seed = mix_seed(cfg.seed, r * cfg.folds + k);
        TrainConfig tc = train_cfg;
        tc.seed = mix_seed(cell_seed, kTrainStream);
        auto model = factory(train_set.feature_count, mix_seed(cell_seed, kModelStream));
        TrainHistory history = train(*model, train_set, val_set, tc);

        std::vector<double> predictions;
        predictions.reserve(test_set.bags.size());
        for (const Bag& bag : test_set.bags) predictions.push_back(model->predict(bag));
        std::vector<double> labels = test_set.labels();

        RunEntry& entry = report.entries[c];
        entry.repetition = r + 1;
        entry.fold = k + 1;
        entry.test_rmse = rmse(predictions, labels, cfg.scale);
        entry.val_rmse = cfg.scale * history.best_val_rmse;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        failure = "cv run (repetition " + std::to_string(r + 1) + ", fold " +
                  std::to_string(k + 1) + ") failed: " + e.what();
        failed.store(true);
      }
    }
  };

  std::size_t threads = std::max<std::size_t>(1, std::min(cfg.threads, report.entries.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failed.load()) throw NumericError(failure);

  std::vector<double> test_values, val_values;
  for (const RunEntry& e : report.entries) {
    test_values.push_back(e.test_rmse);
    val_values.push_back(e.val_rmse);
  }
  report.mean_test_rmse = mean_of(test_values);
  report.std_test_rmse = std_of(test_values, report.mean_test_rmse);
  report.mean_val_rmse = mean_of(val_values);
  return report;
}

namespace {

ModelFactory make_model_factory(const AlgorithmSpec& spec) {
  switch (spec.kind) {
    case AlgorithmKind::Attention:
      return [hidden = spec.hidden, steps = spec.steps](
                 std::size_t input_dim, std::uint64_t seed) -> std::unique_ptr<TrainableModel> {
        return std::make_unique<AttentionModel>(AttentionConfig{hidden, steps, input_dim}, seed);
      };
    case AlgorithmKind::Aggregated:
      return [hidden = spec.hidden](std::size_t input_dim,
                                    std::uint64_t seed) -> std::unique_ptr<TrainableModel> {
        return std::make_unique<AggregatedModel>(hidden, input_dim, seed);
      };
    case AlgorithmKind::InstanceMean:
    case AlgorithmKind::InstanceMedian: {
      auto aggregator = spec.kind == AlgorithmKind::InstanceMean ? InstanceAggregator::Mean
                                                                 : InstanceAggregator::Median;
      return [hidden = spec.hidden, aggregator](
                 std::size_t input_dim, std::uint64_t seed) -> std::unique_ptr<TrainableModel> {
        return std::make_unique<InstanceModel>(hidden, input_dim, aggregator, seed);
      };
    }
  }
  throw Error("run_cv: bad algorithm kind");
}

}  // namespace

CVReport run_cv(const AlgorithmSpec& spec, const Dataset& ds, const CVConfig& cfg) {
  return run_cv_with_factory(make_model_factory(spec), spec.train, moment_config(spec), ds, cfg,
                             algorithm_name(spec.kind), describe(spec));
}

SingleRun train_single(const AlgorithmSpec& spec, const Dataset& train_raw,
                       const Dataset& val_raw, std::uint64_t seed) {
  StandardizationStats stats = fit_standardizer(train_raw);
  Dataset train_set = apply_standardizer(stats, train_raw);
  Dataset val_set = apply_standardizer(stats, val_raw);
  MomentConfig moments = moment_config(spec);
  if (moments.max_order > 0) {
    train_set = augment_dataset(train_set, moments);
    val_set = augment_dataset(val_set, moments);
  }

  auto model = make_model_factory(spec)(train_set.feature_count, mix_seed(seed, kModelStream));
  TrainConfig tc = spec.train;
  tc.seed = mix_seed(seed, kTrainStream);

  SingleRun run;
  run.history = train(*model, train_set, val_set, tc);

  run.checkpoint.kind = spec.kind;
  run.checkpoint.preprocessing = Preprocessing{stats, moments};
  if (auto* attention = dynamic_cast<AttentionModel*>(model.get())) {
    run.checkpoint.attention_config = attention->config();
    run.checkpoint.attention = attention->params();
  } else if (auto* aggregated = dynamic_cast<AggregatedModel*>(model.get())) {
    run.checkpoint.mlp = aggregated->params();
  } else if (auto* instance = dynamic_cast<InstanceModel*>(model.get())) {
    run.checkpoint.mlp = instance->params();
  }
  return run;
}

std::vector<SweepPoint> processing_step_sweep(const Dataset& ds,
                                              std::span<const std::size_t> step_values,
                                              const AlgorithmSpec& base, const CVConfig& cfg) {
  if (step_values.empty()) throw Error("step sweep: no step values");
  std::vector<SweepPoint> points;
  points.reserve(step_values.size());
  for (std::size_t steps : step_values) {
    AlgorithmSpec spec = base;
    spec.kind = AlgorithmKind::Attention;
    spec.steps = steps;
    CVReport report = run_cv(spec, ds, cfg);
    points.push_back({static_cast<double>(steps), report.mean_test_rmse, report.std_test_rmse});
  }
  return points;
}

std::vector<SweepPoint> moment_sweep(const Dataset& ds, std::span<const std::size_t> orders,
                                     const AlgorithmSpec& base, const CVConfig& cfg) {
  if (orders.empty()) throw Error("moment sweep: no moment orders");
  std::vector<SweepPoint> points;
  points.reserve(orders.size());
  for (std::size_t m : orders) {
    AlgorithmSpec spec = base;
    spec.moment_order = m;
    CVReport report = run_cv(spec, ds, cfg);
    points.push_back({static_cast<double>(m), report.mean_test_rmse, report.std_test_rmse});
  }
  return points;
}

GridSelection run_grid(std::span<const AlgorithmSpec> candidates, const Dataset& ds,
                       const CVConfig& cfg) {
  if (candidates.empty()) throw Error("grid: no candidates");
  GridSelection selection;
  selection.reports.reserve(candidates.size());
  for (const AlgorithmSpec& spec : candidates) {
    selection.reports.push_back(run_cv(spec, ds, cfg));
  }
  for (std::size_t i = 1; i < selection.reports.size(); ++i) {
    if (selection.reports[i].mean_val_rmse <
        selection.reports[selection.best_index].mean_val_rmse) {
      selection.best_index = i;
    }
  }
  return selection;
}

void write_report_csv(std::ostream& out, const CVReport& report) {
  out << "repetition,fold,test_rmse\n";
  for (const RunEntry& e : report.entries) {
    out << e.repetition << ',' << e.fold << ',' << to_decimal(e.test_rmse) << '\n';
  }
  out << "# summary algorithm=" << report.algorithm << " dataset=" << report.dataset
      << " runs=" << report.entries.size() << " mean=" << to_decimal(report.mean_test_rmse)
      << " std=" << to_decimal(report.std_test_rmse) << " scale=" << to_decimal(report.scale)
      << '\n';
}

void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points) {
  out << "x,mean_rmse,std_rmse\n";
  for (const SweepPoint& p : points) {
    out << to_decimal(p.x) << ',' << to_decimal(p.mean_rmse) << ',' << to_decimal(p.std_rmse)
        << '\n';
  }
}

}  // namespace mir

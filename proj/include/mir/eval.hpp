#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mir/checkpoint.hpp"
#include "mir/data.hpp"
#include "mir/models.hpp"
#include "mir/moments.hpp"
#include "mir/train.hpp"

namespace mir {

struct FoldCell {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// cells[r][k] for repetition r and fold k. Per repetition the bags are
/// reshuffled with a derived seed; fold k is held out and split in half into
/// validation and test (alternating positions), the rest train.
struct FoldPlan {
  std::size_t folds = 0;
  std::size_t repeats = 0;
  std::vector<std::vector<FoldCell>> cells;
};

FoldPlan make_fold_plan(std::size_t bag_count, std::size_t folds, std::size_t repeats,
                        std::uint64_t seed);

/// scale * sqrt(mean squared error); scale 100 is the AOD reporting
/// convention.
double rmse(std::span<const double> predictions, std::span<const double> labels,
            double scale = 1.0);

struct AlgorithmSpec {
  AlgorithmKind kind = AlgorithmKind::Attention;
  std::size_t hidden = 256;      // LSTM size, or MLP width for the baselines
  std::size_t steps = 2;         // attention processing steps
  std::size_t moment_order = 0;  // m; 0 = no augmentation
  std::optional<AttachMode> attach;  // defaults per algorithm when unset
  TrainConfig train;
};

/// Aggregated consumes moments as its meta-instance; the other algorithms
/// keep their instances and append.
AttachMode default_attach_mode(AlgorithmKind kind);
MomentConfig moment_config(const AlgorithmSpec& spec);
std::string describe(const AlgorithmSpec& spec);

struct CVConfig {
  std::size_t folds = 5;
  std::size_t repeats = 10;
  double scale = 1.0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct RunEntry {
  std::size_t repetition = 0;  // 1-based
  std::size_t fold = 0;        // 1-based
  double test_rmse = 0.0;
  double val_rmse = 0.0;
};

struct CVReport {
  std::string algorithm;
  std::string dataset;
  std::string hyperparameters;
  double scale = 1.0;
  std::vector<RunEntry> entries;  // repeats * folds, ordered by (r, k)
  double mean_test_rmse = 0.0;
  double std_test_rmse = 0.0;
  double mean_val_rmse = 0.0;
};

using ModelFactory =
    std::function<std::unique_ptr<TrainableModel>(std::size_t input_dim, std::uint64_t seed)>;

/// Full protocol for one algorithm: per cell, standardize on the training
/// bags, apply the moment augmentation, train with a derived seed, and score
/// the held-out test half. Cells run independently across `threads`; the
/// report is identical regardless of thread count.
CVReport run_cv(const AlgorithmSpec& spec, const Dataset& ds, const CVConfig& cfg);

CVReport run_cv_with_factory(const ModelFactory& factory, const TrainConfig& train_cfg,
                             const MomentConfig& moments, const Dataset& ds, const CVConfig& cfg,
                             const std::string& algorithm_label,
                             const std::string& hyperparameters = "");

struct SweepPoint {
  double x = 0.0;
  double mean_rmse = 0.0;
  double std_rmse = 0.0;
};

std::vector<SweepPoint> processing_step_sweep(const Dataset& ds,
                                              std::span<const std::size_t> step_values,
                                              const AlgorithmSpec& base, const CVConfig& cfg);

std::vector<SweepPoint> moment_sweep(const Dataset& ds, std::span<const std::size_t> orders,
                                     const AlgorithmSpec& base, const CVConfig& cfg);

/// Grid search evaluated by mean validation RMSE; ties keep the earlier
/// candidate.
struct GridSelection {
  std::size_t best_index = 0;
  std::vector<CVReport> reports;
};

GridSelection run_grid(std::span<const AlgorithmSpec> candidates, const Dataset& ds,
                       const CVConfig& cfg);

/// Rows `repetition,fold,test_rmse` followed by one `# summary ...` line.
void write_report_csv(std::ostream& out, const CVReport& report);
/// Rows `x,mean_rmse,std_rmse`.
void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points);

/// One training run outside the CV grid: standardizes on the raw training
/// bags, applies the algorithm's moment augmentation, trains, and packages
/// the weights with their preprocessing for later prediction.
struct SingleRun {
  Checkpoint checkpoint;
  TrainHistory history;
};

SingleRun train_single(const AlgorithmSpec& spec, const Dataset& train_raw,
                       const Dataset& val_raw, std::uint64_t seed);

}  // namespace mir

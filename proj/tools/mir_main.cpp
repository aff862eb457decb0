#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mir/attention.hpp"
#include "mir/checkpoint.hpp"
#include "mir/errors.hpp"
#include "mir/eval.hpp"
#include "mir/rng.hpp"
#include "mir/text.hpp"

namespace fs = std::filesystem;
using namespace mir;

namespace {

// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
struct UsageError : Error {
  using Error::Error;
};

constexpr std::size_t kDefaultBagBatch = 16;
constexpr std::size_t kDefaultInstanceBatch = 256;

struct CommonOptions {
  std::string manifest;
  std::string dataset;
  std::size_t hidden = 256;
  std::size_t steps = 2;
  std::size_t moments = 0;
  std::string attach;  // empty = per-algorithm default
  std::size_t folds = 5;
  std::size_t repeats = 10;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::size_t batch = 0;  // 0 = per-algorithm default
  std::size_t epochs = 500;
  std::size_t patience = 20;
};

void add_model_flags(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--hidden", o.hidden, "LSTM size / MLP width");
  cmd->add_option("--attach-mode", o.attach, "moment attachment")
      ->check(CLI::IsMember({"replace-bag", "append-per-instance"}));
  cmd->add_option("--lr", o.learning_rate, "learning rate");
  cmd->add_option("--weight-decay", o.weight_decay, "decoupled L2 coefficient");
  cmd->add_option("--batch", o.batch, "minibatch size (bags; instances for instance-MIR)");
  cmd->add_option("--epochs", o.epochs, "max training epochs");
  cmd->add_option("--patience", o.patience, "early-stop patience");
}

void add_protocol_flags(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--manifest", o.manifest, "dataset manifest file")->required();
  cmd->add_option("--dataset", o.dataset, "dataset name in the manifest")->required();
  cmd->add_option("--folds", o.folds, "cross-validation folds");
  cmd->add_option("--repeats", o.repeats, "cross-validation repetitions");
  cmd->add_option("--threads", o.threads, "parallel fold runs");
  cmd->add_option("--seed", o.seed, "root seed");
  cmd->add_option("--out", o.out_dir, "output directory");
}

AlgorithmSpec build_spec(const CommonOptions& o, AlgorithmKind kind) {
  AlgorithmSpec spec;
  spec.kind = kind;
  spec.hidden = o.hidden;
  spec.steps = o.steps;
  spec.moment_order = o.moments;
  if (!o.attach.empty()) spec.attach = parse_attach_mode(o.attach);
  spec.train.learning_rate = o.learning_rate;
  spec.train.weight_decay = o.weight_decay;
  bool per_instance = kind == AlgorithmKind::InstanceMean || kind == AlgorithmKind::InstanceMedian;
  spec.train.batch_size =
      o.batch != 0 ? o.batch : (per_instance ? kDefaultInstanceBatch : kDefaultBagBatch);
  spec.train.max_epochs = o.epochs;
  spec.train.patience = o.patience;
  return spec;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::vector<AlgorithmSpec> load_grid(const std::string& path, const AlgorithmSpec& base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open grid file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("grid " + path + ": " + e.what());
  }
  if (!j.is_array() || j.empty()) throw DataError("grid " + path + ": expected a non-empty array");

  std::vector<AlgorithmSpec> specs;
  for (const auto& item : j) {
    if (!item.is_object()) throw DataError("grid " + path + ": entries must be objects");
    AlgorithmSpec spec = base;
    if (item.contains("hidden")) spec.hidden = item.at("hidden").get<std::size_t>();
    if (item.contains("steps")) spec.steps = item.at("steps").get<std::size_t>();
    if (item.contains("moments")) spec.moment_order = item.at("moments").get<std::size_t>();
    if (item.contains("attach")) spec.attach = parse_attach_mode(item.at("attach").get<std::string>());
    if (item.contains("lr")) spec.train.learning_rate = item.at("lr").get<double>();
    if (item.contains("weight_decay")) spec.train.weight_decay = item.at("weight_decay").get<double>();
    if (item.contains("batch")) spec.train.batch_size = item.at("batch").get<std::size_t>();
    if (item.contains("epochs")) spec.train.max_epochs = item.at("epochs").get<std::size_t>();
    if (item.contains("patience")) spec.train.patience = item.at("patience").get<std::size_t>();
    specs.push_back(spec);
  }
  return specs;
}

void print_report(const CVReport& report) {
  std::cout << report.algorithm << " on " << report.dataset << ": mean test RMSE "
            << to_decimal(report.mean_test_rmse) << " (std " << to_decimal(report.std_test_rmse)
            << ", " << report.entries.size() << " runs, scale " << to_decimal(report.scale)
            << ")\n";
}

int cmd_cv(const CommonOptions& o, const std::string& algo, const std::string& grid_path,
           const std::string& save_model) {
  ManifestEntry entry = manifest_entry(o.manifest, o.dataset);
  Dataset ds = load_from_manifest(o.manifest, o.dataset);

  AlgorithmKind kind = parse_algorithm(algo);
  AlgorithmSpec spec = build_spec(o, kind);
  CVConfig cv;
  cv.folds = o.folds;
  cv.repeats = o.repeats;
  cv.scale = entry.scale;
  cv.seed = o.seed;
  cv.threads = o.threads;

  CVReport report;
  if (!grid_path.empty()) {
    std::vector<AlgorithmSpec> grid = load_grid(grid_path, spec);
    GridSelection selection = run_grid(grid, ds, cv);
    auto grid_csv = open_output(fs::path(o.out_dir) /
                                ("grid_" + o.dataset + "_" + algo + ".csv"));
    grid_csv << "candidate,hyperparameters,mean_val_rmse,mean_test_rmse\n";
    for (std::size_t i = 0; i < selection.reports.size(); ++i) {
      const CVReport& r = selection.reports[i];
      grid_csv << i << ",\"" << r.hyperparameters << "\"," << to_decimal(r.mean_val_rmse) << ','
               << to_decimal(r.mean_test_rmse) << '\n';
    }
    report = selection.reports[selection.best_index];
    spec = grid[selection.best_index];
    std::cout << "grid winner by validation RMSE: candidate " << selection.best_index << " ("
              << report.hyperparameters << ")\n";
  } else {
    report = run_cv(spec, ds, cv);
  }

  auto out = open_output(fs::path(o.out_dir) / ("cv_" + o.dataset + "_" + algo + ".csv"));
  write_report_csv(out, report);
  print_report(report);

  if (!save_model.empty()) {
    // Refit on the first plan cell so the saved model matches the protocol's
    // train/validation discipline.
    FoldPlan plan = make_fold_plan(ds.bag_count(), cv.folds, cv.repeats, cv.seed);
    const FoldCell& cell = plan.cells[0][0];
    Dataset train_raw, val_raw;
    train_raw.name = ds.name;
    val_raw.name = ds.name;
    train_raw.feature_count = val_raw.feature_count = ds.feature_count;
    for (std::size_t i : cell.train) train_raw.bags.push_back(ds.bags[i]);
    for (std::size_t i : cell.validation) val_raw.bags.push_back(ds.bags[i]);
    SingleRun run = train_single(spec, train_raw, val_raw, mix_seed(cv.seed, 0));
    save_checkpoint(run.checkpoint, save_model);
    auto history = open_output(save_model + ".history.csv");
    write_history_csv(history, run.history);
    std::cout << "saved model to " << save_model << " (best val RMSE "
              << to_decimal(cv.scale * run.history.best_val_rmse) << ")\n";
  }
  return 0;
}

int cmd_sweep_steps(const CommonOptions& o, const std::vector<std::size_t>& steps) {
  ManifestEntry entry = manifest_entry(o.manifest, o.dataset);
  Dataset ds = load_from_manifest(o.manifest, o.dataset);
  AlgorithmSpec spec = build_spec(o, AlgorithmKind::Attention);
  CVConfig cv{o.folds, o.repeats, entry.scale, o.seed, o.threads};

  std::vector<SweepPoint> points = processing_step_sweep(ds, steps, spec, cv);
  auto out = open_output(fs::path(o.out_dir) / ("steps_" + o.dataset + "_attention.csv"));
  write_sweep_csv(out, points);
  for (const SweepPoint& p : points) {
    std::cout << "T=" << p.x << ": mean test RMSE " << to_decimal(p.mean_rmse) << " (std "
              << to_decimal(p.std_rmse) << ")\n";
  }
  return 0;
}

int cmd_sweep_moments(const CommonOptions& o, const std::vector<std::string>& algos,
                      const std::vector<std::size_t>& orders) {
  ManifestEntry entry = manifest_entry(o.manifest, o.dataset);
  Dataset ds = load_from_manifest(o.manifest, o.dataset);
  CVConfig cv{o.folds, o.repeats, entry.scale, o.seed, o.threads};

  for (const std::string& algo : algos) {
    AlgorithmSpec spec = build_spec(o, parse_algorithm(algo));
    std::vector<SweepPoint> points = moment_sweep(ds, orders, spec, cv);
    auto out = open_output(fs::path(o.out_dir) / ("moments_" + o.dataset + "_" + algo + ".csv"));
    write_sweep_csv(out, points);
    for (const SweepPoint& p : points) {
      std::cout << algo << " m=" << p.x << ": mean test RMSE " << to_decimal(p.mean_rmse)
                << " (std " << to_decimal(p.std_rmse) << ")\n";
    }
  }
  return 0;
}

int cmd_synth(std::size_t bags, std::size_t instances, std::size_t features,
              const std::string& rule, double noise, std::uint64_t seed,
              const std::string& out_path) {
  SynthSpec spec;
  spec.bag_count = bags;
  spec.instances_per_bag = instances;
  spec.feature_count = features;
  spec.rule = parse_synth_rule(rule);
  spec.noise = noise;

  Dataset ds = synth_generate(spec, seed);
  fs::path path(out_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_csv(ds, out_path);

  auto meta = open_output(path.string() + ".meta");
  meta << "rule = " << synth_rule_name(spec.rule) << '\n'
       << "bags = " << bags << '\n'
       << "instances = " << instances << '\n'
       << "features = " << features << '\n'
       << "noise = " << to_decimal(noise) << '\n'
       << "seed = " << seed << '\n';
  std::cout << "wrote " << ds.bag_count() << " bags (" << ds.instance_total() << " instances) to "
            << out_path << '\n';
  return 0;
}

int cmd_grad_check(std::uint64_t seed, double eps) {
  // The full forward + MSE composite at the documented desk scale.
  AttentionConfig cfg{4, 2, 5};
  AttentionModelParams params = init_attention_params(cfg, seed);
  Rng rng(mix_seed(seed, 1));
  Bag bag;
  bag.id = "grad-check";
  bag.width = 5;
  bag.label = rng.normal(0.0, 1.0);
  for (int i = 0; i < 3 * 5; ++i) bag.values.push_back(rng.normal(0.0, 1.0));

  AttentionParamNodes nodes = attention_param_nodes(params, true);
  std::vector<NodePtr> leaves = nodes.all();
  GradCheckResult result = grad_check(
      [&] {
        AttentionForward fwd = build_attention_graph(nodes, cfg, bag);
        return square(sub(fwd.prediction, constant(Tensor::scalar(bag.label))));
      },
      leaves, eps);

  std::cout << "max relative error " << to_decimal(result.max_rel_error) << " at "
            << result.worst_param << "[" << result.worst_index << "] (analytic "
            << to_decimal(result.analytic) << ", central difference "
            << to_decimal(result.numeric) << ")\n";
  if (result.max_rel_error >= 1e-4) {
    std::cerr << "grad-check FAILED: error above 1e-4\n";
    return 3;
  }
  std::cout << "grad-check passed\n";
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path, const std::string& trace_path) {
  Checkpoint ckpt = load_checkpoint(model_path);
  if (!trace_path.empty() && ckpt.kind != AlgorithmKind::Attention) {
    throw UsageError("--trace requires an attention model checkpoint");
  }
  Dataset raw = load_csv(data_path);
  validate(raw);
  std::vector<double> predictions = checkpoint_predict(ckpt, raw);

  auto out = open_output(out_path);
  out << "bag_id,prediction\n";
  for (std::size_t i = 0; i < raw.bags.size(); ++i) {
    out << raw.bags[i].id << ',' << to_decimal(predictions[i]) << '\n';
  }

  if (!trace_path.empty()) {
    Dataset prepared = checkpoint_preprocess(ckpt, raw);
    AttentionParamNodes nodes = attention_param_nodes(*ckpt.attention, false);
    auto trace_out = open_output(trace_path);
    write_trace_header(trace_out);
    for (const Bag& bag : prepared.bags) {
      AttentionForward fwd = build_attention_graph(nodes, *ckpt.attention_config, bag);
      write_trace_csv(trace_out, bag.id, extract_trace(fwd));
    }
  }
  std::cout << "wrote " << predictions.size() << " predictions to " << out_path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiple-instance regression toolkit"};
  app.require_subcommand(1);

  CommonOptions o;
  static const std::vector<std::string> kAlgorithms = {"attention", "aggregated", "instance-mean",
                                                       "instance-median"};

  // cv
  auto* cv = app.add_subcommand("cv", "repeated k-fold cross-validation for one algorithm");
  std::string cv_algo = "attention";
  std::string grid_path, save_model;
  add_protocol_flags(cv, o);
  add_model_flags(cv, o);
  cv->add_option("--algo", cv_algo, "algorithm")->check(CLI::IsMember(kAlgorithms));
  cv->add_option("--steps", o.steps, "attention processing steps");
  cv->add_option("--moments", o.moments, "raw-moment augmentation order");
  cv->add_option("--grid", grid_path, "JSON hyperparameter grid, selected by validation RMSE");
  cv->add_option("--save-model", save_model, "write a checkpoint trained on the first plan cell");

  // sweep-steps
  auto* sweep_steps = app.add_subcommand("sweep-steps", "attention test RMSE per processing-step count");
  std::vector<std::size_t> step_values;
  add_protocol_flags(sweep_steps, o);
  add_model_flags(sweep_steps, o);
  sweep_steps->add_option("--steps", step_values, "processing-step values")
      ->required()
      ->delimiter(',');
  sweep_steps->add_option("--moments", o.moments, "raw-moment augmentation order");

  // sweep-moments
  auto* sweep_moments = app.add_subcommand("sweep-moments", "test RMSE per moment order");
  std::vector<std::string> sweep_algos = kAlgorithms;
  std::vector<std::size_t> moment_values;
  add_protocol_flags(sweep_moments, o);
  add_model_flags(sweep_moments, o);
  sweep_moments->add_option("--algo", sweep_algos, "algorithms to sweep")
      ->check(CLI::IsMember(kAlgorithms));
  sweep_moments->add_option("--steps", o.steps, "attention processing steps");
  sweep_moments->add_option("--moments", moment_values, "moment orders")
      ->required()
      ->delimiter(',');

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic bag dataset");
  std::size_t synth_bags = 0, synth_instances = 0, synth_features = 0;
  std::string synth_rule = "latent-mean", synth_out;
  double synth_noise = 0.0;
  std::uint64_t synth_seed = 0;
  synth->add_option("--bags", synth_bags, "number of bags")->required();
  synth->add_option("--instances", synth_instances, "instances per bag")->required();
  synth->add_option("--features", synth_features, "features per instance")->required();
  synth->add_option("--rule", synth_rule, "label rule")
      ->check(CLI::IsMember({"latent-mean", "latent-stddev"}));
  synth->add_option("--noise", synth_noise, "extra per-value Gaussian noise");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output CSV path")->required();

  // grad-check
  auto* grad = app.add_subcommand("grad-check", "validate gradients of the attention composite");
  std::uint64_t grad_seed = 1;
  double grad_eps = 1e-5;
  grad->add_option("--seed", grad_seed, "parameter/bag seed");
  grad->add_option("--eps", grad_eps, "central-difference step");

  // predict
  auto* predict = app.add_subcommand("predict", "predict bag labels with a saved checkpoint");
  std::string predict_model, predict_data, predict_out = "predictions.csv", predict_trace;
  predict->add_option("--model", predict_model, "checkpoint file")->required();
  predict->add_option("--data", predict_data, "input CSV")->required();
  predict->add_option("--out", predict_out, "predictions CSV");
  predict->add_option("--trace", predict_trace, "attention trace CSV");

  try {
    app.parse(argc, argv);
    if (cv->parsed()) return cmd_cv(o, cv_algo, grid_path, save_model);
    if (sweep_steps->parsed()) return cmd_sweep_steps(o, step_values);
    if (sweep_moments->parsed()) return cmd_sweep_moments(o, sweep_algos, moment_values);
    if (synth->parsed()) {
      return cmd_synth(synth_bags, synth_instances, synth_features, synth_rule, synth_noise,
                       synth_seed, synth_out);
    }
    if (grad->parsed()) return cmd_grad_check(grad_seed, grad_eps);
    if (predict->parsed()) return cmd_predict(predict_model, predict_data, predict_out, predict_trace);
    return 1;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

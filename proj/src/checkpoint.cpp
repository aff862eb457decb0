#include "mir/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "mir/errors.hpp"

namespace mir {

namespace {

using nlohmann::json;

constexpr int kVersion = 1;

json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape()}, {"data", std::vector<double>(t.values().begin(), t.values().end())}};
}

Tensor tensor_from_json(const json& j, const std::string& name) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("data")) {
    throw DataError("checkpoint: malformed tensor '" + name + "'");
  }
  auto shape = j.at("shape").get<std::vector<std::size_t>>();
  auto data = j.at("data").get<std::vector<double>>();
  try {
    return Tensor(std::move(shape), std::move(data));
  } catch (const ShapeError& e) {
    throw DataError("checkpoint: tensor '" + name + "': " + e.what());
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json j;
  j["format"] = "mir-model";
  j["version"] = kVersion;
  j["kind"] = algorithm_name(ckpt.kind);

  if (ckpt.kind == AlgorithmKind::Attention) {
    if (!ckpt.attention || !ckpt.attention_config) {
      throw Error("save_checkpoint: attention checkpoint without attention params");
    }
    const AttentionConfig& cfg = *ckpt.attention_config;
    const AttentionModelParams& p = *ckpt.attention;
    j["attention"] = {
        {"hidden", cfg.hidden},     {"steps", cfg.steps},
        {"input_dim", cfg.input_dim},
        {"embed_w", tensor_to_json(p.embed_w)}, {"embed_b", tensor_to_json(p.embed_b)},
        {"lstm_w", tensor_to_json(p.lstm_w)},   {"lstm_b", tensor_to_json(p.lstm_b)},
        {"head_w", tensor_to_json(p.head_w)},   {"head_b", tensor_to_json(p.head_b)},
        {"out_w", tensor_to_json(p.out_w)},     {"out_b", tensor_to_json(p.out_b)},
    };
  } else {
    if (!ckpt.mlp) throw Error("save_checkpoint: baseline checkpoint without mlp params");
    const MLPRegressorParams& p = *ckpt.mlp;
    j["mlp"] = {
        {"hidden_w", tensor_to_json(p.hidden_w)},
        {"hidden_b", tensor_to_json(p.hidden_b)},
        {"out_w", tensor_to_json(p.out_w)},
        {"out_b", tensor_to_json(p.out_b)},
    };
  }

  if (ckpt.preprocessing) {
    j["preprocessing"] = {
        {"mean", ckpt.preprocessing->stats.mean},
        {"stddev", ckpt.preprocessing->stats.stddev},
        {"moment_order", ckpt.preprocessing->moments.max_order},
        {"attach", attach_mode_name(ckpt.preprocessing->moments.attach)},
    };
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", "") != "mir-model") {
    throw DataError("checkpoint " + path + ": not a mir-model file");
  }
  if (j.value("version", 0) != kVersion) {
    throw DataError("checkpoint " + path + ": unsupported version");
  }

  Checkpoint ckpt;
  ckpt.kind = parse_algorithm(j.value("kind", ""));
  if (ckpt.kind == AlgorithmKind::Attention) {
    if (!j.contains("attention")) throw DataError("checkpoint " + path + ": missing attention block");
    const json& a = j.at("attention");
    AttentionConfig cfg;
    cfg.hidden = a.value("hidden", std::size_t{0});
    cfg.steps = a.value("steps", std::size_t{0});
    cfg.input_dim = a.value("input_dim", std::size_t{0});
    AttentionModelParams p;
    p.embed_w = tensor_from_json(a.at("embed_w"), "embed_w");
    p.embed_b = tensor_from_json(a.at("embed_b"), "embed_b");
    p.lstm_w = tensor_from_json(a.at("lstm_w"), "lstm_w");
    p.lstm_b = tensor_from_json(a.at("lstm_b"), "lstm_b");
    p.head_w = tensor_from_json(a.at("head_w"), "head_w");
    p.head_b = tensor_from_json(a.at("head_b"), "head_b");
    p.out_w = tensor_from_json(a.at("out_w"), "out_w");
    p.out_b = tensor_from_json(a.at("out_b"), "out_b");
    ckpt.attention_config = cfg;
    ckpt.attention = std::move(p);
  } else {
    if (!j.contains("mlp")) throw DataError("checkpoint " + path + ": missing mlp block");
    const json& m = j.at("mlp");
    MLPRegressorParams p;
    p.hidden_w = tensor_from_json(m.at("hidden_w"), "hidden_w");
    p.hidden_b = tensor_from_json(m.at("hidden_b"), "hidden_b");
    p.out_w = tensor_from_json(m.at("out_w"), "out_w");
    p.out_b = tensor_from_json(m.at("out_b"), "out_b");
    ckpt.mlp = std::move(p);
  }

  if (j.contains("preprocessing")) {  // absent for models trained on prepared data
    const json& pp = j.at("preprocessing");
    Preprocessing prep;
    prep.stats.mean = pp.at("mean").get<std::vector<double>>();
    prep.stats.stddev = pp.at("stddev").get<std::vector<double>>();
    prep.moments.max_order = pp.value("moment_order", std::size_t{0});
    prep.moments.attach = parse_attach_mode(pp.value("attach", "append-per-instance"));
    if (prep.stats.mean.size() != prep.stats.stddev.size()) {
      throw DataError("checkpoint " + path + ": preprocessing mean/stddev length mismatch");
    }
    ckpt.preprocessing = std::move(prep);
  }
  return ckpt;
}

Dataset checkpoint_preprocess(const Checkpoint& ckpt, const Dataset& raw) {
  if (!ckpt.preprocessing) return raw;
  Dataset out = apply_standardizer(ckpt.preprocessing->stats, raw);
  if (ckpt.preprocessing->moments.max_order > 0) {
    out = augment_dataset(out, ckpt.preprocessing->moments);
  }
  return out;
}

std::vector<double> checkpoint_predict(const Checkpoint& ckpt, const Dataset& raw) {
  Dataset prepared = checkpoint_preprocess(ckpt, raw);
  std::vector<double> out;
  out.reserve(prepared.bags.size());
  switch (ckpt.kind) {
    case AlgorithmKind::Attention: {
      if (!ckpt.attention || !ckpt.attention_config) {
        throw DataError("checkpoint_predict: attention checkpoint without weights");
      }
      return predict_dataset(*ckpt.attention, *ckpt.attention_config, prepared);
    }
    case AlgorithmKind::Aggregated: {
      if (!ckpt.mlp) throw DataError("checkpoint_predict: missing mlp weights");
      for (const Bag& bag : prepared.bags) out.push_back(aggregated_predict(*ckpt.mlp, bag));
      return out;
    }
    case AlgorithmKind::InstanceMean:
    case AlgorithmKind::InstanceMedian: {
      if (!ckpt.mlp) throw DataError("checkpoint_predict: missing mlp weights");
      auto aggregator = ckpt.kind == AlgorithmKind::InstanceMean ? InstanceAggregator::Mean
                                                                 : InstanceAggregator::Median;
      for (const Bag& bag : prepared.bags) {
        out.push_back(instance_predict(*ckpt.mlp, bag, aggregator));
      }
      return out;
    }
  }
  throw Error("checkpoint_predict: bad kind");
}

}  // namespace mir

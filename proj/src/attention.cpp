#include "mir/attention.hpp"

#include <cmath>
#include <ostream>

#include "mir/errors.hpp"
#include "mir/rng.hpp"
#include "mir/text.hpp"

namespace mir {

namespace {

void uniform_init(Tensor& t, std::size_t fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
}

void check_simplex(std::span<const double> coefficients) {
  double sum = 0.0;
  for (double a : coefficients) {
    if (!(a >= 0.0)) {
      throw NumericError("attention: coefficient " + to_decimal(a) + " outside the simplex");
    }
    sum += a;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw NumericError("attention: coefficients sum to " + to_decimal(sum));
  }
}

}  // namespace

AttentionModelParams init_attention_params(const AttentionConfig& cfg, std::uint64_t seed) {
  if (cfg.hidden < 1 || cfg.steps < 1 || cfg.input_dim < 1) {
    throw Error("attention config: hidden, steps, and input_dim must be >= 1");
  }
  std::size_t h = cfg.hidden;
  Rng rng(seed);
  AttentionModelParams p;
  p.embed_w = Tensor({h, cfg.input_dim});
  p.embed_b = Tensor({h});
  p.lstm_w = Tensor({4 * h, 2 * h});
  p.lstm_b = Tensor({4 * h});
  p.head_w = Tensor({h, 2 * h});
  p.head_b = Tensor({h});
  p.out_w = Tensor({1, h});
  p.out_b = Tensor({1});
  uniform_init(p.embed_w, cfg.input_dim, rng);
  uniform_init(p.lstm_w, 2 * h, rng);
  uniform_init(p.head_w, 2 * h, rng);
  uniform_init(p.out_w, h, rng);
  // Forget gate opens at 1 so early cell state survives the first updates.
  for (std::size_t i = h; i < 2 * h; ++i) p.lstm_b[i] = 1.0;
  return p;
}

std::vector<NodePtr> AttentionParamNodes::all() const {
  return {embed_w, embed_b, lstm_w, lstm_b, head_w, head_b, out_w, out_b};
}

AttentionParamNodes attention_param_nodes(const AttentionModelParams& params, bool needs_grad) {
  AttentionParamNodes nodes;
  nodes.embed_w = leaf(params.embed_w, needs_grad, "embed_w");
  nodes.embed_b = leaf(params.embed_b, needs_grad, "embed_b");
  nodes.lstm_w = leaf(params.lstm_w, needs_grad, "lstm_w");
  nodes.lstm_b = leaf(params.lstm_b, needs_grad, "lstm_b");
  nodes.head_w = leaf(params.head_w, needs_grad, "head_w");
  nodes.head_b = leaf(params.head_b, needs_grad, "head_b");
  nodes.out_w = leaf(params.out_w, needs_grad, "out_w");
  nodes.out_b = leaf(params.out_b, needs_grad, "out_b");
  return nodes;
}

AttentionModelParams export_attention_params(const AttentionParamNodes& nodes) {
  AttentionModelParams p;
  p.embed_w = nodes.embed_w->value;
  p.embed_b = nodes.embed_b->value;
  p.lstm_w = nodes.lstm_w->value;
  p.lstm_b = nodes.lstm_b->value;
  p.head_w = nodes.head_w->value;
  p.head_b = nodes.head_b->value;
  p.out_w = nodes.out_w->value;
  p.out_b = nodes.out_b->value;
  return p;
}

AttentionForward build_attention_graph(const AttentionParamNodes& params,
                                       const AttentionConfig& cfg, const Bag& bag) {
  if (cfg.steps < 1) {
    throw Error("attention forward: at least one processing step required");
  }
  if (bag.width != cfg.input_dim) {
    throw ShapeError("attention forward: bag '" + bag.id + "' has " + std::to_string(bag.width) +
                     " features, model expects " + std::to_string(cfg.input_dim));
  }
  std::size_t count = bag.instance_count();
  if (count == 0) throw Error("attention forward: bag '" + bag.id + "' is empty");
  std::size_t h = cfg.hidden;

  std::vector<NodePtr> rows;
  rows.reserve(count);
  for (std::size_t l = 0; l < count; ++l) {
    NodePtr x = constant(Tensor::vector(bag.instance(l)));
    rows.push_back(tanh(add(matvec(params.embed_w, x), params.embed_b)));
  }
  NodePtr memory = stack_rows(rows);

  NodePtr read_state = constant(Tensor::zeros({2 * h}));
  NodePtr cell = constant(Tensor::zeros({h}));

  AttentionForward fwd;
  fwd.score_nodes.reserve(cfg.steps);
  fwd.coefficient_nodes.reserve(cfg.steps);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    NodePtr gates = add(matvec(params.lstm_w, read_state), params.lstm_b);
    NodePtr gate_in = sigmoid(slice(gates, 0, h));
    NodePtr gate_forget = sigmoid(slice(gates, h, h));
    NodePtr gate_cell = tanh(slice(gates, 2 * h, h));
    NodePtr gate_out = sigmoid(slice(gates, 3 * h, h));
    cell = add(mul(gate_forget, cell), mul(gate_in, gate_cell));
    NodePtr hidden = mul(gate_out, tanh(cell));

    NodePtr scores = matvec(memory, hidden);
    NodePtr coefficients = softmax(scores);
    check_simplex(coefficients->value.values());
    NodePtr read = tmatvec(memory, coefficients);
    read_state = concat(hidden, read);

    fwd.score_nodes.push_back(scores);
    fwd.coefficient_nodes.push_back(coefficients);
  }

  NodePtr head = tanh(add(matvec(params.head_w, read_state), params.head_b));
  fwd.prediction = add(matvec(params.out_w, head), params.out_b);
  return fwd;
}

Tensor embed_instances(const AttentionModelParams& params, const Bag& bag) {
  if (bag.width != params.embed_w.cols()) {
    throw ShapeError("embed_instances: bag '" + bag.id + "' has " + std::to_string(bag.width) +
                     " features, weights expect " + std::to_string(params.embed_w.cols()));
  }
  std::size_t h = params.embed_w.rows();
  std::size_t count = bag.instance_count();
  Tensor memory({count, h});
  for (std::size_t l = 0; l < count; ++l) {
    auto x = bag.instance(l);
    for (std::size_t i = 0; i < h; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < bag.width; ++j) acc += params.embed_w.at(i, j) * x[j];
      memory.at(l, i) = std::tanh(acc + params.embed_b[i]);
    }
  }
  return memory;
}

AttentionTrace extract_trace(const AttentionForward& fwd) {
  AttentionTrace trace;
  trace.scores.reserve(fwd.score_nodes.size());
  trace.coefficients.reserve(fwd.coefficient_nodes.size());
  for (std::size_t t = 0; t < fwd.score_nodes.size(); ++t) {
    auto e = fwd.score_nodes[t]->value.values();
    auto a = fwd.coefficient_nodes[t]->value.values();
    trace.scores.emplace_back(e.begin(), e.end());
    trace.coefficients.emplace_back(a.begin(), a.end());
  }
  return trace;
}

AttentionResult attention_forward(const AttentionModelParams& params, const AttentionConfig& cfg,
                                  const Bag& bag) {
  AttentionParamNodes nodes = attention_param_nodes(params, false);
  AttentionForward fwd = build_attention_graph(nodes, cfg, bag);
  return {fwd.prediction->value[0], extract_trace(fwd)};
}

std::vector<double> salience(const AttentionTrace& trace) {
  if (trace.coefficients.empty()) throw Error("salience: trace has no steps");
  return trace.coefficients.back();
}

std::vector<double> predict_dataset(const AttentionModelParams& params,
                                    const AttentionConfig& cfg, const Dataset& ds) {
  // One set of parameter leaves shared by every bag's graph.
  AttentionParamNodes nodes = attention_param_nodes(params, false);
  std::vector<double> out;
  out.reserve(ds.bags.size());
  for (const Bag& bag : ds.bags) {
    out.push_back(build_attention_graph(nodes, cfg, bag).prediction->value[0]);
  }
  return out;
}

void write_trace_header(std::ostream& out) {
  out << "bag_id,step,instance_index,score,coefficient\n";
}

void write_trace_csv(std::ostream& out, const std::string& bag_id, const AttentionTrace& trace) {
  for (std::size_t t = 0; t < trace.scores.size(); ++t) {
    for (std::size_t l = 0; l < trace.scores[t].size(); ++l) {
      out << bag_id << ',' << (t + 1) << ',' << l << ',' << to_decimal(trace.scores[t][l]) << ','
          << to_decimal(trace.coefficients[t][l]) << '\n';
    }
  }
}

}  // namespace mir

#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mir/autodiff.hpp"
#include "mir/data.hpp"

namespace mir {

/// One processing step runs the LSTM cell on the previous read state, scores
/// every instance embedding against the new hidden state by dot product,
/// softmaxes the scores into attention coefficients, and reads the memory as
/// their weighted sum. The prediction head consumes the final [hidden, read]
/// concatenation. Both MLPs are single layered with `hidden` neurons.
struct AttentionConfig {
  std::size_t hidden = 256;  // LSTM size; both MLP widths match it
  std::size_t steps = 2;     // processing steps T
  std::size_t input_dim = 0;
};

struct AttentionModelParams {
  Tensor embed_w;  // hidden x input_dim
  Tensor embed_b;  // hidden
  Tensor lstm_w;   // 4*hidden x 2*hidden, gate order [input, forget, cell, output]
  Tensor lstm_b;   // 4*hidden
  Tensor head_w;   // hidden x 2*hidden
  Tensor head_b;   // hidden
  Tensor out_w;    // 1 x hidden
  Tensor out_b;    // 1
};

/// Weights uniform in +-1/sqrt(fan_in), biases zero except the forget-gate
/// block which starts at 1.
AttentionModelParams init_attention_params(const AttentionConfig& cfg, std::uint64_t seed);

/// Per-step instance scores e and attention coefficients a; outer index is
/// the step t-1, inner index the instance.
struct AttentionTrace {
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<double>> coefficients;
};

struct AttentionParamNodes {
  NodePtr embed_w, embed_b, lstm_w, lstm_b, head_w, head_b, out_w, out_b;
  std::vector<NodePtr> all() const;
};

AttentionParamNodes attention_param_nodes(const AttentionModelParams& params, bool needs_grad);
AttentionModelParams export_attention_params(const AttentionParamNodes& nodes);

struct AttentionForward {
  NodePtr prediction;  // scalar
  std::vector<NodePtr> score_nodes;
  std::vector<NodePtr> coefficient_nodes;
};

/// Builds the full processing-step graph for one bag; shared by training and
/// inference. Every softmax output is checked against the simplex invariant
/// (nonnegative, sum 1 within 1e-12) and a violation throws NumericError.
AttentionForward build_attention_graph(const AttentionParamNodes& params,
                                       const AttentionConfig& cfg, const Bag& bag);

/// Instance memory matrix: row l is tanh(W1 x_l + b1).
Tensor embed_instances(const AttentionModelParams& params, const Bag& bag);

struct AttentionResult {
  double prediction = 0.0;
  AttentionTrace trace;
};

/// Copies the per-step scores and coefficients out of a built graph.
AttentionTrace extract_trace(const AttentionForward& fwd);

AttentionResult attention_forward(const AttentionModelParams& params, const AttentionConfig& cfg,
                                  const Bag& bag);

/// Final-step attention coefficients; the per-instance salience read-off.
std::vector<double> salience(const AttentionTrace& trace);

std::vector<double> predict_dataset(const AttentionModelParams& params,
                                    const AttentionConfig& cfg, const Dataset& ds);

/// CSV rows `bag_id,step,instance_index,score,coefficient`; steps 1-based,
/// instances 0-based.
void write_trace_csv(std::ostream& out, const std::string& bag_id, const AttentionTrace& trace);
void write_trace_header(std::ostream& out);

}  // namespace mir

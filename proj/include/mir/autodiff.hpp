#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mir/tensor.hpp"

namespace mir {

enum class OpKind {
  Leaf,
  MatVec,     // y = A x
  TMatVec,    // y = A^T x
  Add,
  Sub,
  Mul,        // elementwise
  Tanh,
  Sigmoid,
  Dot,        // two vectors -> scalar
  Softmax,    // vector -> vector, max-subtracted
  Concat,     // two vectors
  StackRows,  // n vectors of width w -> n x w matrix
  MeanVecs,   // mean of n same-shape vectors
  Square,     // elementwise
  Scale,      // multiply by a fixed constant
  Slice,      // contiguous window of a vector
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of a dynamic computation graph. Values are computed eagerly as
/// ops are built; backward() fills grad for every node reachable from the
/// loss. Graphs are rebuilt per bag, so nodes are cheap and short-lived;
/// leaf parameter nodes persist across graphs.
struct Node {
  OpKind op = OpKind::Leaf;
  std::vector<NodePtr> inputs;
  Tensor value;
  Tensor grad;  // sized during backward; same shape as value
  bool needs_grad = false;
  double factor = 1.0;      // Scale
  std::size_t offset = 0;   // Slice
  std::string label;        // leaf identification in diagnostics
};

NodePtr leaf(Tensor value, bool needs_grad = false, std::string label = "");
NodePtr constant(Tensor value);

NodePtr matvec(const NodePtr& m, const NodePtr& x);
NodePtr tmatvec(const NodePtr& m, const NodePtr& x);
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr tanh(const NodePtr& x);
NodePtr sigmoid(const NodePtr& x);
NodePtr dot(const NodePtr& a, const NodePtr& b);
NodePtr softmax(const NodePtr& x);
NodePtr concat(const NodePtr& a, const NodePtr& b);
NodePtr stack_rows(std::span<const NodePtr> rows);
NodePtr mean_vecs(std::span<const NodePtr> vecs);
NodePtr square(const NodePtr& x);
NodePtr scale(const NodePtr& x, double factor);
NodePtr slice(const NodePtr& x, std::size_t offset, std::size_t extent);

/// Reverse pass from a scalar node. Grads of all reachable nodes are reset
/// first, so repeated calls without graph mutation give identical results.
void backward(const NodePtr& loss);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central-difference validation of backward(). `build_loss` must construct
/// a fresh scalar graph reading the current values of `params` on each call;
/// entries are perturbed in place by +-eps. Relative error is
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckResult grad_check(const std::function<NodePtr()>& build_loss,
                           std::span<const NodePtr> params, double eps);

}  // namespace mir

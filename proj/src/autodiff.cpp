#include "mir/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "mir/errors.hpp"

namespace mir {

namespace {

bool any_needs_grad(const std::vector<NodePtr>& inputs) {
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const NodePtr& n) { return n->needs_grad; });
}

NodePtr make(OpKind op, std::vector<NodePtr> inputs, Tensor value) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->needs_grad = any_needs_grad(inputs);
  node->inputs = std::move(inputs);
  node->value = std::move(value);
  return node;
}

void require_vector(const char* op, const NodePtr& x) {
  if (x->value.rank() != 1) {
    throw ShapeError(std::string(op) + ": expected a vector, got " + x->value.shape_str());
  }
}

void require_same_shape(const char* op, const NodePtr& a, const NodePtr& b) {
  if (!a->value.same_shape(b->value)) {
    throw ShapeError(std::string(op) + ": shape " + a->value.shape_str() +
                     " does not match " + b->value.shape_str());
  }
}

// Accumulation target; allocated lazily so untouched nodes carry no grad.
Tensor& grad_of(const NodePtr& n) {
  if (!n->grad.same_shape(n->value)) n->grad = Tensor::zeros(n->value.shape());
  return n->grad;
}

void accumulate_matvec(const Node* node) {
  const NodePtr& m = node->inputs[0];
  const NodePtr& x = node->inputs[1];
  auto g = node->grad.values();
  std::size_t rows = m->value.rows(), cols = m->value.cols();
  if (m->needs_grad) {
    auto gm = grad_of(m).values();
    auto xv = x->value.values();
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) gm[i * cols + j] += g[i] * xv[j];
    }
  }
  if (x->needs_grad) {
    auto gx = grad_of(x).values();
    auto mv = m->value.values();
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) gx[j] += mv[i * cols + j] * g[i];
    }
  }
}

void accumulate_tmatvec(const Node* node) {
  const NodePtr& m = node->inputs[0];
  const NodePtr& x = node->inputs[1];
  auto g = node->grad.values();
  std::size_t rows = m->value.rows(), cols = m->value.cols();
  if (m->needs_grad) {
    auto gm = grad_of(m).values();
    auto xv = x->value.values();
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) gm[i * cols + j] += xv[i] * g[j];
    }
  }
  if (x->needs_grad) {
    auto gx = grad_of(x).values();
    auto mv = m->value.values();
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) gx[i] += mv[i * cols + j] * g[j];
    }
  }
}

void accumulate(const Node* node) {
  auto g = node->grad.values();
  switch (node->op) {
    case OpKind::Leaf:
      break;
    case OpKind::MatVec:
      accumulate_matvec(node);
      break;
    case OpKind::TMatVec:
      accumulate_tmatvec(node);
      break;
    case OpKind::Add:
      for (int k = 0; k < 2; ++k) {
        const NodePtr& in = node->inputs[k];
        if (!in->needs_grad) continue;
        auto gi = grad_of(in).values();
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
      break;
    case OpKind::Sub: {
      if (node->inputs[0]->needs_grad) {
        auto ga = grad_of(node->inputs[0]).values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (node->inputs[1]->needs_grad) {
        auto gb = grad_of(node->inputs[1]).values();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
      break;
    }
    case OpKind::Mul: {
      const NodePtr& a = node->inputs[0];
      const NodePtr& b = node->inputs[1];
      if (a->needs_grad) {
        auto ga = grad_of(a).values();
        auto bv = b->value.values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b->needs_grad) {
        auto gb = grad_of(b).values();
        auto av = a->value.values();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
      break;
    }
    case OpKind::Tanh: {
      const NodePtr& x = node->inputs[0];
      if (!x->needs_grad) break;
      auto gx = grad_of(x).values();
      auto y = node->value.values();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case OpKind::Sigmoid: {
      const NodePtr& x = node->inputs[0];
      if (!x->needs_grad) break;
      auto gx = grad_of(x).values();
      auto y = node->value.values();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case OpKind::Dot: {
      const NodePtr& a = node->inputs[0];
      const NodePtr& b = node->inputs[1];
      double g0 = g[0];
      if (a->needs_grad) {
        auto ga = grad_of(a).values();
        auto bv = b->value.values();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g0 * bv[i];
      }
      if (b->needs_grad) {
        auto gb = grad_of(b).values();
        auto av = a->value.values();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g0 * av[i];
      }
      break;
    }
    case OpKind::Softmax: {
      const NodePtr& x = node->inputs[0];
      if (!x->needs_grad) break;
      auto gx = grad_of(x).values();
      auto y = node->value.values();
      double inner = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) inner += g[i] * y[i];
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += y[i] * (g[i] - inner);
      break;
    }
    case OpKind::Concat: {
      std::size_t n0 = node->inputs[0]->value.numel();
      if (node->inputs[0]->needs_grad) {
        auto ga = grad_of(node->inputs[0]).values();
        for (std::size_t i = 0; i < n0; ++i) ga[i] += g[i];
      }
      if (node->inputs[1]->needs_grad) {
        auto gb = grad_of(node->inputs[1]).values();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[n0 + i];
      }
      break;
    }
    case OpKind::StackRows: {
      std::size_t width = node->value.cols();
      for (std::size_t r = 0; r < node->inputs.size(); ++r) {
        const NodePtr& row = node->inputs[r];
        if (!row->needs_grad) continue;
        auto gr = grad_of(row).values();
        for (std::size_t j = 0; j < width; ++j) gr[j] += g[r * width + j];
      }
      break;
    }
    case OpKind::MeanVecs: {
      double inv = 1.0 / static_cast<double>(node->inputs.size());
      for (const NodePtr& in : node->inputs) {
        if (!in->needs_grad) continue;
        auto gi = grad_of(in).values();
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * inv;
      }
      break;
    }
    case OpKind::Square: {
      const NodePtr& x = node->inputs[0];
      if (!x->needs_grad) break;
      auto gx = grad_of(x).values();
      auto xv = x->value.values();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * xv[i] * g[i];
      break;
    }
    case OpKind::Scale: {
      const NodePtr& x = node->inputs[0];
      if (!x->needs_grad) break;
      auto gx = grad_of(x).values();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * node->factor;
      break;
    }
    case OpKind::Slice: {
      const NodePtr& x = node->inputs[0];
      if (!x->needs_grad) break;
      auto gx = grad_of(x).values();
      for (std::size_t i = 0; i < g.size(); ++i) gx[node->offset + i] += g[i];
      break;
    }
  }
}

// Post-order over the graph (inputs before consumers), iterative to keep
// deep chains off the call stack.
std::vector<Node*> topo_order(const NodePtr& root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* in = node->inputs[next++].get();
      if (visited.insert(in).second) stack.emplace_back(in, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

NodePtr leaf(Tensor value, bool needs_grad, std::string label) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->needs_grad = needs_grad;
  node->label = std::move(label);
  return node;
}

NodePtr constant(Tensor value) { return leaf(std::move(value), false); }

NodePtr matvec(const NodePtr& m, const NodePtr& x) {
  require_vector("matvec", x);
  if (m->value.rank() != 2 || m->value.cols() != x->value.numel()) {
    throw ShapeError("matvec: matrix " + m->value.shape_str() + " incompatible with vector " +
                     x->value.shape_str());
  }
  std::size_t rows = m->value.rows(), cols = m->value.cols();
  Tensor out({rows});
  auto mv = m->value.values();
  auto xv = x->value.values();
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += mv[i * cols + j] * xv[j];
    out[i] = acc;
  }
  return make(OpKind::MatVec, {m, x}, std::move(out));
}

NodePtr tmatvec(const NodePtr& m, const NodePtr& x) {
  require_vector("tmatvec", x);
  if (m->value.rank() != 2 || m->value.rows() != x->value.numel()) {
    throw ShapeError("tmatvec: matrix " + m->value.shape_str() + " incompatible with vector " +
                     x->value.shape_str());
  }
  std::size_t rows = m->value.rows(), cols = m->value.cols();
  Tensor out({cols});
  auto mv = m->value.values();
  auto xv = x->value.values();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j] += mv[i * cols + j] * xv[i];
  }
  return make(OpKind::TMatVec, {m, x}, std::move(out));
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
  require_same_shape("add", a, b);
  Tensor out(a->value.shape());
  auto av = a->value.values(), bv = b->value.values();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  return make(OpKind::Add, {a, b}, std::move(out));
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
  require_same_shape("sub", a, b);
  Tensor out(a->value.shape());
  auto av = a->value.values(), bv = b->value.values();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
  return make(OpKind::Sub, {a, b}, std::move(out));
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  require_same_shape("mul", a, b);
  Tensor out(a->value.shape());
  auto av = a->value.values(), bv = b->value.values();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  return make(OpKind::Mul, {a, b}, std::move(out));
}

NodePtr tanh(const NodePtr& x) {
  Tensor out(x->value.shape());
  auto xv = x->value.values();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(xv[i]);
  return make(OpKind::Tanh, {x}, std::move(out));
}

NodePtr sigmoid(const NodePtr& x) {
  Tensor out(x->value.shape());
  auto xv = x->value.values();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  return make(OpKind::Sigmoid, {x}, std::move(out));
}

NodePtr dot(const NodePtr& a, const NodePtr& b) {
  require_vector("dot", a);
  require_vector("dot", b);
  require_same_shape("dot", a, b);
  double acc = 0.0;
  auto av = a->value.values(), bv = b->value.values();
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  return make(OpKind::Dot, {a, b}, Tensor::scalar(acc));
}

NodePtr softmax(const NodePtr& x) {
  require_vector("softmax", x);
  if (x->value.numel() == 0) throw ShapeError("softmax: empty vector");
  auto xv = x->value.values();
  // Max subtraction keeps exp in range without changing the result.
  double mx = xv[0];
  for (double v : xv) mx = std::max(mx, v);
  Tensor out(x->value.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = std::exp(xv[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] /= sum;
  return make(OpKind::Softmax, {x}, std::move(out));
}

NodePtr concat(const NodePtr& a, const NodePtr& b) {
  require_vector("concat", a);
  require_vector("concat", b);
  std::vector<double> data;
  data.reserve(a->value.numel() + b->value.numel());
  auto av = a->value.values(), bv = b->value.values();
  data.insert(data.end(), av.begin(), av.end());
  data.insert(data.end(), bv.begin(), bv.end());
  return make(OpKind::Concat, {a, b}, Tensor::vector(std::move(data)));
}

NodePtr stack_rows(std::span<const NodePtr> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  std::size_t width = rows[0]->value.numel();
  std::vector<double> data;
  data.reserve(rows.size() * width);
  for (const NodePtr& row : rows) {
    require_vector("stack_rows", row);
    if (row->value.numel() != width) {
      throw ShapeError("stack_rows: row " + row->value.shape_str() + " does not match width " +
                       std::to_string(width));
    }
    auto rv = row->value.values();
    data.insert(data.end(), rv.begin(), rv.end());
  }
  return make(OpKind::StackRows, std::vector<NodePtr>(rows.begin(), rows.end()),
              Tensor::matrix(rows.size(), width, std::move(data)));
}

NodePtr mean_vecs(std::span<const NodePtr> vecs) {
  if (vecs.empty()) throw ShapeError("mean_vecs: no inputs");
  Tensor out(vecs[0]->value.shape());
  for (const NodePtr& v : vecs) {
    require_same_shape("mean_vecs", vecs[0], v);
    auto vv = v->value.values();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += vv[i];
  }
  double inv = 1.0 / static_cast<double>(vecs.size());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= inv;
  return make(OpKind::MeanVecs, std::vector<NodePtr>(vecs.begin(), vecs.end()), std::move(out));
}

NodePtr square(const NodePtr& x) {
  Tensor out(x->value.shape());
  auto xv = x->value.values();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] * xv[i];
  return make(OpKind::Square, {x}, std::move(out));
}

NodePtr scale(const NodePtr& x, double factor) {
  Tensor out(x->value.shape());
  auto xv = x->value.values();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] * factor;
  NodePtr node = make(OpKind::Scale, {x}, std::move(out));
  node->factor = factor;
  return node;
}

NodePtr slice(const NodePtr& x, std::size_t offset, std::size_t extent) {
  require_vector("slice", x);
  if (offset + extent > x->value.numel()) {
    throw ShapeError("slice: window [" + std::to_string(offset) + ", " +
                     std::to_string(offset + extent) + ") exceeds vector " +
                     x->value.shape_str());
  }
  Tensor out({extent});
  auto xv = x->value.values();
  for (std::size_t i = 0; i < extent; ++i) out[i] = xv[offset + i];
  NodePtr node = make(OpKind::Slice, {x}, std::move(out));
  node->offset = offset;
  return node;
}

void backward(const NodePtr& loss) {
  if (loss->value.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + loss->value.shape_str());
  }
  std::vector<Node*> order = topo_order(loss);
  for (Node* node : order) {
    node->grad = Tensor::zeros(node->value.shape());
  }
  loss->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->op == OpKind::Leaf || !node->needs_grad) continue;
    accumulate(node);
  }
}

GradCheckResult grad_check(const std::function<NodePtr()>& build_loss,
                           std::span<const NodePtr> params, double eps) {
  if (!(eps > 0.0) || eps > 1e-2) throw Error("grad_check: eps must be in (0, 1e-2]");
  NodePtr loss = build_loss();
  if (loss->value.numel() != 1) throw Error("grad_check: loss must be scalar");
  if (!std::isfinite(loss->value[0])) throw NumericError("grad_check: non-finite loss value");
  for (const NodePtr& p : params) p->grad = Tensor();  // drop grads of any earlier graph
  backward(loss);

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const NodePtr& p : params) {
    analytic.push_back(p->grad.same_shape(p->value) ? p->grad : Tensor::zeros(p->value.shape()));
  }

  auto eval = [&](const NodePtr& p, std::size_t i, double delta) {
    double saved = p->value[i];
    p->value[i] = saved + delta;
    NodePtr node = build_loss();
    p->value[i] = saved;
    double v = node->value[0];
    if (!std::isfinite(v)) {
      throw NumericError("grad_check: non-finite value while perturbing '" + p->label + "' entry " +
                         std::to_string(i));
    }
    return v;
  };

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const NodePtr& p = params[pi];
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      double up = eval(p, i, eps);
      double down = eval(p, i, -eps);
      double numeric = (up - down) / (2.0 * eps);
      double a = analytic[pi][i];
      double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel >= result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p->label.empty() ? ("param" + std::to_string(pi)) : p->label;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace mir

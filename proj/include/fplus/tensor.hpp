#pragma once

// Dense n-dimensional tensors with reverse-mode automatic differentiation.
//
// Every operation records its inputs and a backward rule on the freshly
// created output node, so the computation graph is the set of nodes
// reachable from a result through its parents. backward() on a scalar loss
// replays those rules in reverse topological order and accumulates (+=)
// gradients into every requires-grad leaf. Calling backward() again without
// zero_grad() accumulates again; intermediate gradients are transient and
// reset on every call.
//
// All storage is 64-bit, row-major. Shapes are immutable after
// construction; reshape copies.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace fplus {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

inline std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return parents.empty(); }

  // Accumulate into a parent's gradient, skipping constants.
  static void add_grad(Node& parent, std::size_t i, double g) {
    if (parent.requires_grad) parent.grad[i] += g;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size()) {
      throw std::invalid_argument(
          "tensor: shape " + shape_to_string(shape) + " implies " +
          std::to_string(shape_numel(shape)) + " elements, got " +
          std::to_string(values.size()));
    }
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->values = std::move(values);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->grad.assign(node_->values.size(), 0.0);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->values.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  std::span<const double> data() const { return node_->values; }
  // Mutable access to a leaf's storage; optimizers update weights through
  // this between graph constructions.
  std::span<double> data() { return node_->values; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<const double> grad() const {
    if (!has_grad()) {
      throw std::logic_error("tensor: gradient requested but none allocated");
    }
    return node_->grad;
  }

  void zero_grad() {
    if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  double item() const {
    if (size() != 1) {
      throw std::invalid_argument("tensor: item() on non-scalar shape " +
                                  shape_to_string(shape()));
    }
    return node_->values[0];
  }

  std::shared_ptr<detail::Node> node() const { return node_; }

  static Tensor from_node(std::shared_ptr<detail::Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Extension point for custom differentiable operations: wraps precomputed
// forward values into a graph node. backward_fn reads self.grad and
// accumulates into self.parents via Node::add_grad.
inline Tensor make_op(Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs,
                      std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->parents.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    node->parents.push_back(t.node());
    node->requires_grad = node->requires_grad || t.requires_grad();
  }
  if (node->requires_grad) {
    node->grad.assign(node->values.size(), 0.0);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor::from_node(std::move(node));
}

// Ordered record of the operations reachable from a root, every node's
// inputs preceding it.
class Graph {
 public:
  static Graph trace(const Tensor& root) {
    Graph g;
    g.root_ = root.node();
    if (!g.root_) return g;
    std::unordered_set<detail::Node*> visited;
    // Iterative post-order so deep chains cannot overflow the stack.
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(g.root_.get(), 0);
    visited.insert(g.root_.get());
    while (!stack.empty()) {
      auto& [node, next_child] = stack.back();
      if (next_child < node->parents.size()) {
        detail::Node* parent = node->parents[next_child++].get();
        if (visited.insert(parent).second) stack.emplace_back(parent, 0);
      } else {
        g.nodes_.push_back(node);
        stack.pop_back();
      }
    }
    return g;
  }

  std::size_t size() const { return nodes_.size(); }

  bool topologically_ordered() const {
    std::unordered_set<const detail::Node*> seen;
    for (const detail::Node* node : nodes_) {
      for (const auto& parent : node->parents) {
        if (!seen.count(parent.get())) return false;
      }
      seen.insert(node);
    }
    return true;
  }

  // Seeds d(root)/d(root) = 1 and replays backward rules in reverse order.
  // Leaf gradients accumulate; intermediate gradients are reset first.
  void run_backward() {
    if (!root_ || !root_->requires_grad) return;
    for (detail::Node* node : nodes_) {
      if (!node->is_leaf()) {
        std::fill(node->grad.begin(), node->grad.end(), 0.0);
      }
    }
    root_->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      detail::Node* node = *it;
      if (node->backward_fn) node->backward_fn(*node);
    }
  }

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<detail::Node*> nodes_;
};

inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument(
        "backward: loss must be scalar, got shape " +
        (loss.defined() ? shape_to_string(loss.shape()) : std::string("<empty>")));
  }
  Graph::trace(loss).run_backward();
}

inline void zero_grad(std::span<Tensor> params) {
  for (Tensor& p : params) p.zero_grad();
}

// ---------------------------------------------------------------------------
// Primitive operations

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    detail::Node& pa = *self.parents[0];
    detail::Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      detail::Node::add_grad(pa, i, self.grad[i]);
      detail::Node::add_grad(pb, i, self.grad[i]);
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    detail::Node& pa = *self.parents[0];
    detail::Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      detail::Node::add_grad(pa, i, self.grad[i]);
      detail::Node::add_grad(pb, i, -self.grad[i]);
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    detail::Node& pa = *self.parents[0];
    detail::Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      detail::Node::add_grad(pa, i, self.grad[i] * pb.values[i]);
      detail::Node::add_grad(pb, i, self.grad[i] * pa.values[i]);
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
  return make_op(a.shape(), std::move(out), {a}, [c](detail::Node& self) {
    detail::Node& pa = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      detail::Node::add_grad(pa, i, self.grad[i] * c);
    }
  });
}

// Elementwise map by a scalar function and its derivative. Backward
// multiplies the upstream gradient by df at the recorded input.
inline Tensor elementwise_apply(const Tensor& x,
                                const std::function<double(double)>& f,
                                std::function<double(double)> df) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x.data()[i]);
  return make_op(x.shape(), std::move(out), {x},
                 [df = std::move(df)](detail::Node& self) {
                   detail::Node& px = *self.parents[0];
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     detail::Node::add_grad(px, i, self.grad[i] * df(px.values[i]));
                   }
                 });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_to_string(a.shape()) + " x " +
                                shape_to_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = pa[i * k + kk];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aik * pb[kk * n + j];
    }
  }
  return make_op({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    detail::Node& na = *self.parents[0];
    detail::Node& nb = *self.parents[1];
    const double* g = self.grad.data();
    if (na.requires_grad) {  // grad_a = upstream . b^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * nb.values[kk * n + j];
          na.grad[i * k + kk] += acc;
        }
      }
    }
    if (nb.requires_grad) {  // grad_b = a^T . upstream
      for (std::size_t kk = 0; kk < k; ++kk) {
        for (std::size_t i = 0; i < m; ++i) {
          const double aik = na.values[i * k + kk];
          for (std::size_t j = 0; j < n; ++j) nb.grad[kk * n + j] += aik * g[i * n + j];
        }
      }
    }
  });
}

// x + b with b broadcast over the last axis (the only broadcast supported).
inline Tensor bias_add(const Tensor& x, const Tensor& b) {
  if (x.rank() < 1 || b.rank() != 1 || b.size() == 0 ||
      x.shape().back() != b.shape()[0]) {
    throw std::invalid_argument("bias_add: bias " + shape_to_string(b.shape()) +
                                " does not match last axis of " +
                                shape_to_string(x.shape()));
  }
  const std::size_t last = b.size();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + b.data()[i % last];
  return make_op(x.shape(), std::move(out), {x, b}, [last](detail::Node& self) {
    detail::Node& px = *self.parents[0];
    detail::Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      detail::Node::add_grad(px, i, self.grad[i]);
      detail::Node::add_grad(pb, i % last, self.grad[i]);
    }
  });
}

inline Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_op({1}, {total}, {x}, [](detail::Node& self) {
    detail::Node& px = *self.parents[0];
    for (std::size_t i = 0; i < px.values.size(); ++i) {
      detail::Node::add_grad(px, i, self.grad[0]);
    }
  });
}

// Copy semantics: the result owns its storage.
inline Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.size()) {
    throw std::invalid_argument("reshape: cannot view " +
                                shape_to_string(x.shape()) + " as " +
                                shape_to_string(new_shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op(std::move(new_shape), std::move(out), {x}, [](detail::Node& self) {
    detail::Node& px = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      detail::Node::add_grad(px, i, self.grad[i]);
    }
  });
}

}  // namespace fplus

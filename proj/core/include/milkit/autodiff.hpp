#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "milkit/tensor.hpp"

namespace milkit::ad {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool grad_allocated = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backprop;

  Tensor& ensure_grad();
};

}  // namespace detail

/// Handle to a node in a dynamically built computation graph. Graphs are
/// rebuilt per forward pass; leaves (parameters, inputs) persist across
/// passes and accumulate gradients until zero_grad().
class Var {
 public:
  Var() = default;

  static Var leaf(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  const Tensor& grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad();

  explicit operator bool() const { return static_cast<bool>(node_); }

  // Internal: graph plumbing for the op constructors below.
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Var from_node(std::shared_ptr<detail::Node> n);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Reverse pass from a scalar root. Gradients accumulate (+=) into every
/// node with requires_grad reachable from the root.
void backward(const Var& root);

// --- elementwise ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var tanh_v(const Var& x);
Var sigmoid_v(const Var& x);
Var selu_v(const Var& x);
Var relu_v(const Var& x);

// --- linear algebra ---
Var matmul_nt(const Var& a, const Var& b);  // [N,K] x [M,K] -> [N,M] (b transposed)
Var matvec(const Var& m, const Var& v);     // [N,K] x [K]   -> [N]
Var dot(const Var& a, const Var& b);        // [N] . [N]     -> [1]
Var linear(const Var& x, const Var& w, const Var& b);  // [N,F],[O,F],[O] -> [N,O]

// --- reductions over a vector ---
Var softmax1d(const Var& x);  // stable (max subtraction)
Var mean1d(const Var& x);
Var max1d(const Var& x);      // ties resolve to the lowest index

/// z[m] = sum_k a[k] * h[k,m];  a:[K], h:[K,M] -> [M]
Var weighted_rows(const Var& a, const Var& h);

// --- conv stack ---
Var conv2d(const Var& x, const Var& w, const Var& b);  // stride 1, same padding, odd kernel
Var maxpool2x2(const Var& x);                          // stride 2, border windows clipped
Var flatten2(const Var& x);                            // [N,...] -> [N, rest]

/// Binary cross-entropy of a scalar probability against a 0/1 label,
/// with the probability clamped to [1e-7, 1 - 1e-7].
Var bce(const Var& p, double label);

constexpr double kBceEps = 1e-7;

}  // namespace milkit::ad

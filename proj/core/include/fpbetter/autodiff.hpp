#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "fpbetter/tensor.hpp"

namespace fpb {

using NodeId = std::size_t;

enum class Op {
  leaf,
  affine,
  conv2d,
  relu,
  add,
  scale,
  global_avg_pool,
  flatten,
  softmax_cross_entropy,
};

std::string_view op_name(Op op) noexcept;

/// Gradients of a scalar with respect to every differentiable leaf.
class Gradients {
 public:
  /// Gradient for `leaf`; throws if the node is not a differentiable leaf.
  const Tensor& at(NodeId leaf) const;
  bool contains(NodeId leaf) const noexcept;

 private:
  friend class Graph;
  std::vector<std::optional<Tensor>> by_node_;
};

/// Tape of primitive operations. Forward values are computed eagerly as nodes
/// are appended, so node ids are already a topological order.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  NodeId leaf(Tensor value, bool requires_grad = true);
  /// Leaf that aliases `value` without copying; `value` must outlive the graph.
  NodeId leaf_ref(const Tensor& value, bool requires_grad = true);

  /// x [B, in], w [out, in], b [out] -> [B, out]
  NodeId affine(NodeId x, NodeId w, NodeId b);
  /// x [B, C, H, W], w [O, C, k, k] with odd k, b [O] -> [B, O, H', W']
  NodeId conv2d(NodeId x, NodeId w, NodeId b, std::size_t stride);
  NodeId relu(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId x, double factor);
  /// [B, C, H, W] -> [B, C]
  NodeId global_avg_pool(NodeId x);
  /// [B, ...] -> [B, prod(...)]
  NodeId flatten(NodeId x);
  /// Mean over the batch of -log softmax(logits)[label]; logits [B, K].
  NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels);

  const Tensor& value(NodeId id) const;
  Op op(NodeId id) const { return nodes_.at(id).op; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }

  /// Reverse-mode sweep from a scalar node. Does not modify the graph, so
  /// repeated calls return identical results. Differentiable leaves that the
  /// loss does not depend on receive exact zeros.
  Gradients backward(NodeId loss) const;

 private:
  struct Node {
    Op op = Op::leaf;
    std::vector<NodeId> inputs;
    Tensor value;
    const Tensor* external = nullptr;
    bool requires_grad = false;
    double factor = 1.0;
    std::size_t stride = 1;
    std::vector<int> labels;
    Tensor saved;  // softmax probabilities for the fused loss
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const;
  void backprop_node(NodeId id, const Tensor& grad,
                     std::vector<std::optional<Tensor>>& grads) const;

  std::vector<Node> nodes_;
};

/// Per-example cross-entropy of logits [B, K]; used where a graph is not needed.
std::vector<double> cross_entropy_per_example(const Tensor& logits, const std::vector<int>& labels);

/// Index of the largest logit in each row, ties resolved to the lowest index.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace fpb

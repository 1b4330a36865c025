#include "fpbetter/autodiff.hpp"

#include <cmath>
#include <string>

#include "fpbetter/error.hpp"
#include "fpbetter/kernels.hpp"

namespace fpb {

std::string_view op_name(Op op) noexcept {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::affine: return "affine";
    case Op::conv2d: return "conv2d";
    case Op::relu: return "relu";
    case Op::add: return "add";
    case Op::scale: return "scale";
    case Op::global_avg_pool: return "global_avg_pool";
    case Op::flatten: return "flatten";
    case Op::softmax_cross_entropy: return "softmax_cross_entropy";
  }
  return "unknown";
}

const Tensor& Gradients::at(NodeId leaf) const {
  if (!contains(leaf)) {
    throw Error("no gradient recorded for node " + std::to_string(leaf));
  }
  return *by_node_[leaf];
}

bool Gradients::contains(NodeId leaf) const noexcept {
  return leaf < by_node_.size() && by_node_[leaf].has_value();
}

NodeId Graph::push(Node node) {
  for (NodeId in : node.inputs) {
    if (in >= nodes_.size()) throw Error("graph input refers to a later node");
    node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id >= nodes_.size()) throw Error("unknown graph node " + std::to_string(id));
  return nodes_[id];
}

const Tensor& Graph::value(NodeId id) const {
  const Node& n = node(id);
  return n.external ? *n.external : n.value;
}

NodeId Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

NodeId Graph::leaf_ref(const Tensor& value, bool requires_grad) {
  Node n;
  n.external = &value;
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

NodeId Graph::affine(NodeId x, NodeId w, NodeId b) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || wv.dim(1) != xv.dim(1) ||
      bv.dim(0) != wv.dim(0)) {
    throw ShapeError("affine: x " + shape_to_string(xv.shape()) + ", w " +
                     shape_to_string(wv.shape()) + ", b " + shape_to_string(bv.shape()));
  }
  const std::size_t batch = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  Node n;
  n.op = Op::affine;
  n.inputs = {x, w, b};
  n.value = Tensor(Shape{batch, out});
  kernels::affine_forward(xv.data(), wv.data(), bv.data(), n.value.data(), batch, in, out);
  return push(std::move(n));
}

namespace {

kernels::ConvGeometry conv_geometry(const Tensor& x, const Tensor& w, std::size_t stride) {
  return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride};
}

}  // namespace

NodeId Graph::conv2d(NodeId x, NodeId w, NodeId b, std::size_t stride) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  if (xv.rank() != 4 || wv.rank() != 4 || bv.rank() != 1 || wv.dim(1) != xv.dim(1) ||
      wv.dim(2) != wv.dim(3) || wv.dim(2) % 2 == 0 || bv.dim(0) != wv.dim(0)) {
    throw ShapeError("conv2d: x " + shape_to_string(xv.shape()) + ", w " +
                     shape_to_string(wv.shape()) + ", b " + shape_to_string(bv.shape()));
  }
  if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
  const auto g = conv_geometry(xv, wv, stride);
  Node n;
  n.op = Op::conv2d;
  n.inputs = {x, w, b};
  n.stride = stride;
  n.value = Tensor(Shape{g.batch, g.out_channels, g.out_height(), g.out_width()});
  kernels::conv2d_forward(xv.data(), wv.data(), bv.data(), n.value.data(), g);
  return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::relu;
  n.inputs = {x};
  n.value = Tensor(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) n.value[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.shape() != bv.shape()) {
    throw ShapeError("add: " + shape_to_string(av.shape()) + " vs " + shape_to_string(bv.shape()));
  }
  Node n;
  n.op = Op::add;
  n.inputs = {a, b};
  n.value = av + bv;
  return push(std::move(n));
}

NodeId Graph::scale(NodeId x, double factor) {
  Node n;
  n.op = Op::scale;
  n.inputs = {x};
  n.factor = factor;
  n.value = value(x) * factor;
  return push(std::move(n));
}

NodeId Graph::global_avg_pool(NodeId x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 4) throw ShapeError("global_avg_pool expects [B, C, H, W]");
  const std::size_t bc = xv.dim(0) * xv.dim(1);
  const std::size_t area = xv.dim(2) * xv.dim(3);
  Node n;
  n.op = Op::global_avg_pool;
  n.inputs = {x};
  n.value = Tensor(Shape{xv.dim(0), xv.dim(1)});
  for (std::size_t i = 0; i < bc; ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < area; ++p) acc += xv[i * area + p];
    n.value[i] = acc / static_cast<double>(area);
  }
  return push(std::move(n));
}

NodeId Graph::flatten(NodeId x) {
  const Tensor& xv = value(x);
  if (xv.rank() < 1) throw ShapeError("flatten of rank-0 tensor");
  Node n;
  n.op = Op::flatten;
  n.inputs = {x};
  n.value = xv.reshaped(Shape{xv.dim(0), xv.size() / xv.dim(0)});
  return push(std::move(n));
}

NodeId Graph::softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
  const Tensor& z = value(logits);
  if (z.rank() != 2 || z.dim(0) != labels.size()) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_to_string(z.shape()) + " with " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = z.dim(0), classes = z.dim(1);
  Node n;
  n.op = Op::softmax_cross_entropy;
  n.inputs = {logits};
  n.saved = Tensor(z.shape());
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ShapeError("label " + std::to_string(label) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    const double* row = z.data().data() + b * classes;
    double peak = row[0];
    for (std::size_t k = 1; k < classes; ++k) peak = std::max(peak, row[k]);
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      const double e = std::exp(row[k] - peak);
      n.saved[b * classes + k] = e;
      denom += e;
    }
    for (std::size_t k = 0; k < classes; ++k) n.saved[b * classes + k] /= denom;
    total += std::log(denom) + peak - row[label];
  }
  n.value = Tensor::scalar(total / static_cast<double>(batch));
  n.labels = std::move(labels);
  return push(std::move(n));
}

Gradients Graph::backward(NodeId loss) const {
  if (value(loss).size() != 1) {
    throw ShapeError("backward: loss node " + std::to_string(loss) + " is not scalar");
  }
  std::vector<std::optional<Tensor>> grads(loss + 1);
  grads[loss] = Tensor(value(loss).shape(), 1.0);
  for (NodeId id = loss + 1; id-- > 0;) {
    if (!grads[id]) continue;
    const Node& n = nodes_[id];
    if (!value(id).all_finite()) {
      throw NonFiniteError("non-finite value at node " + std::to_string(id) + " (" +
                               std::string(op_name(n.op)) + ")",
                           id);
    }
    if (!grads[id]->all_finite()) {
      throw NonFiniteError("non-finite gradient at node " + std::to_string(id) + " (" +
                               std::string(op_name(n.op)) + ")",
                           id);
    }
    if (n.op != Op::leaf) {
      backprop_node(id, *grads[id], grads);
      grads[id].reset();
    }
  }

  Gradients out;
  out.by_node_.resize(nodes_.size());
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (n.op != Op::leaf || !n.requires_grad) continue;
    if (id < grads.size() && grads[id]) {
      out.by_node_[id] = std::move(*grads[id]);
    } else {
      out.by_node_[id] = Tensor(value(id).shape(), 0.0);
    }
  }
  return out;
}

void Graph::backprop_node(NodeId id, const Tensor& grad,
                          std::vector<std::optional<Tensor>>& grads) const {
  const Node& n = nodes_[id];
  auto wants = [&](std::size_t slot) { return nodes_[n.inputs[slot]].requires_grad; };
  auto slot_grad = [&](std::size_t slot) -> Tensor& {
    auto& g = grads[n.inputs[slot]];
    if (!g) g = Tensor(value(n.inputs[slot]).shape(), 0.0);
    return *g;
  };
  auto empty = std::span<double>{};

  switch (n.op) {
    case Op::leaf:
      break;
    case Op::affine: {
      const Tensor& x = value(n.inputs[0]);
      const Tensor& w = value(n.inputs[1]);
      kernels::affine_backward(grad.data(), x.data(), w.data(),
                               wants(0) ? slot_grad(0).data() : empty,
                               wants(1) ? slot_grad(1).data() : empty,
                               wants(2) ? slot_grad(2).data() : empty, x.dim(0), x.dim(1),
                               w.dim(0));
      break;
    }
    case Op::conv2d: {
      const Tensor& x = value(n.inputs[0]);
      const Tensor& w = value(n.inputs[1]);
      kernels::conv2d_backward(grad.data(), x.data(), w.data(),
                               wants(0) ? slot_grad(0).data() : empty,
                               wants(1) ? slot_grad(1).data() : empty,
                               wants(2) ? slot_grad(2).data() : empty,
                               conv_geometry(x, w, n.stride));
      break;
    }
    case Op::relu: {
      if (!wants(0)) break;
      const Tensor& x = value(n.inputs[0]);
      Tensor& g = slot_grad(0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0) g[i] += grad[i];
      }
      break;
    }
    case Op::add:
      if (wants(0)) slot_grad(0) += grad;
      if (wants(1)) slot_grad(1) += grad;
      break;
    case Op::scale: {
      if (!wants(0)) break;
      Tensor& g = slot_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.factor * grad[i];
      break;
    }
    case Op::global_avg_pool: {
      if (!wants(0)) break;
      const Tensor& x = value(n.inputs[0]);
      const std::size_t area = x.dim(2) * x.dim(3);
      Tensor& g = slot_grad(0);
      for (std::size_t i = 0; i < grad.size(); ++i) {
        const double share = grad[i] / static_cast<double>(area);
        for (std::size_t p = 0; p < area; ++p) g[i * area + p] += share;
      }
      break;
    }
    case Op::flatten: {
      if (!wants(0)) break;
      Tensor& g = slot_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad[i];
      break;
    }
    case Op::softmax_cross_entropy: {
      if (!wants(0)) break;
      const std::size_t batch = n.saved.dim(0), classes = n.saved.dim(1);
      const double upstream = grad[0] / static_cast<double>(batch);
      Tensor& g = slot_grad(0);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t k = 0; k < classes; ++k) {
          const double onehot = static_cast<int>(k) == n.labels[b] ? 1.0 : 0.0;
          g[b * classes + k] += upstream * (n.saved[b * classes + k] - onehot);
        }
      }
      break;
    }
  }
}

std::vector<double> cross_entropy_per_example(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("cross_entropy_per_example: shape mismatch");
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  std::vector<double> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = logits.data().data() + b * classes;
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes) {
      throw ShapeError("label outside class range");
    }
    double peak = row[0];
    for (std::size_t k = 1; k < classes; ++k) peak = std::max(peak, row[k]);
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k) denom += std::exp(row[k] - peak);
    out[b] = std::log(denom) + peak - row[labels[b]];
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows expects [B, K]");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  std::vector<int> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = logits.data().data() + b * classes;
    std::size_t best = 0;
    for (std::size_t k = 1; k < classes; ++k) {
      if (row[k] > row[best]) best = k;
    }
    out[b] = static_cast<int>(best);
  }
  return out;
}

}  // namespace fpb

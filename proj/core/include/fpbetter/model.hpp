#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fpbetter/autodiff.hpp"
#include "fpbetter/tensor.hpp"

namespace fpb {

enum class LayerKind { affine, conv };

/// One residual block: out = shortcut(x) + beta * branch(x), where
/// branch(x) = layer2(relu(layer1(relu(x)))). A projection shortcut is used
/// when the stride is 2 or the width changes.
struct BlockSpec {
  std::size_t in_width = 0;
  std::size_t out_width = 0;
  std::size_t stride = 1;

  bool has_projection() const noexcept { return stride != 1 || in_width != out_width; }
  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct NetworkSpec {
  std::string name;
  LayerKind kind = LayerKind::affine;
  /// Per-example input shape: {features} for affine nets, {C, H, W} for conv.
  Shape input_shape;
  std::size_t stem_width = 0;
  std::size_t kernel = 3;
  std::vector<BlockSpec> blocks;
  std::size_t classes = 0;

  std::size_t block_count() const noexcept { return blocks.size(); }
  /// Throws ShapeError if the blocks do not chain or a field is degenerate.
  void validate() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Four affine residual blocks of width 64.
NetworkSpec resmlp4(std::size_t input_features, std::size_t classes, std::size_t width = 64);
/// Six conv blocks at widths 16/32/64, stride 2 entering stages 2 and 3.
NetworkSpec rescnn6(const Shape& input_shape, std::size_t classes);
/// Looks up "resmlp-4" or "rescnn-6".
NetworkSpec network_preset(std::string_view name, const Shape& input_shape, std::size_t classes);

/// Named trainable tensors in a fixed order: stem, then per block layer1,
/// layer2, optional shortcut, then head; weight before bias.
class ParameterSet {
 public:
  ParameterSet() = default;

  void add(std::string name, Tensor value);
  std::size_t size() const noexcept { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
  Tensor& operator[](std::size_t i) { return tensors_.at(i); }
  /// Index of `name`; throws if absent.
  std::size_t index_of(std::string_view name) const;
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
  std::size_t element_count() const noexcept;

  std::uint64_t seed = 0;

  bool bitwise_equal(const ParameterSet& other) const noexcept;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

/// Weights ~ N(0, 2 / fan_in), biases zero; deterministic in `seed`.
ParameterSet build_network(const NetworkSpec& spec, std::uint64_t seed);

/// A group of parameters forming one layer (weight and bias).
struct LayerGroup {
  std::string name;
  std::vector<std::size_t> params;
  /// Block whose residual branch contains the layer, or -1 for stem, head
  /// and projection shortcuts, which are never dropped.
  int branch_of_block = -1;
};

std::vector<LayerGroup> layer_groups(const NetworkSpec& spec, const ParameterSet& params);

/// One bit per residual block; 1 keeps the branch.
struct BlockMask {
  std::vector<std::uint8_t> bits;

  static BlockMask all_ones(std::size_t blocks) { return {std::vector<std::uint8_t>(blocks, 1)}; }
  static BlockMask all_zeros(std::size_t blocks) { return {std::vector<std::uint8_t>(blocks, 0)}; }
  std::size_t size() const noexcept { return bits.size(); }
  bool keeps(std::size_t block) const { return bits.at(block) != 0; }
  bool is_all_ones() const noexcept;
  friend bool operator==(const BlockMask&, const BlockMask&) = default;
};

/// Number of active blocks in the mask.
std::size_t effective_block_count(const BlockMask& mask) noexcept;

enum class BranchScaling { none, survival_probability };

struct Scaling {
  BranchScaling kind = BranchScaling::none;
  /// Survival probability per block; used only for survival_probability.
  std::vector<double> survival;

  static Scaling none() { return {}; }
};

struct ForwardPass {
  Graph graph;
  NodeId input = 0;
  NodeId logits = 0;
  /// Leaf node for each parameter, aligned with the ParameterSet.
  std::vector<NodeId> params;
  /// Whether each parameter takes part in this pass.
  std::vector<bool> param_active;
  std::size_t executed_branches = 0;
};

/// Masked forward pass over a batch [B, input_shape...]. Branches with a zero
/// mask bit are not executed, so their parameters receive exact zero
/// gradients. The graph aliases `params`, which must outlive the result.
ForwardPass forward(const NetworkSpec& spec, const ParameterSet& params, const Tensor& input,
                    const BlockMask& mask, const Scaling& scaling = Scaling::none(),
                    bool input_requires_grad = false);

/// Logits for a batch without keeping the graph around.
Tensor predict(const NetworkSpec& spec, const ParameterSet& params, const Tensor& input,
               const Scaling& scaling = Scaling::none());

std::string_view to_string(LayerKind kind) noexcept;
LayerKind parse_layer_kind(std::string_view text);

}  // namespace fpb

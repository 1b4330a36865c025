#include "fpbetter/model.hpp"

#include <algorithm>
#include <cmath>

#include "fpbetter/error.hpp"
#include "fpbetter/rng.hpp"

namespace fpb {

std::string_view to_string(LayerKind kind) noexcept {
  return kind == LayerKind::affine ? "affine" : "conv";
}

LayerKind parse_layer_kind(std::string_view text) {
  if (text == "affine") return LayerKind::affine;
  if (text == "conv") return LayerKind::conv;
  throw ConfigError("unknown layer kind '" + std::string(text) + "'");
}

void NetworkSpec::validate() const {
  if (blocks.empty()) throw ShapeError(name + ": network needs at least one residual block");
  if (classes < 2) throw ShapeError(name + ": need at least two classes");
  if (stem_width == 0) throw ShapeError(name + ": stem width must be positive");
  if (kind == LayerKind::affine) {
    if (input_shape.size() != 1 || input_shape[0] == 0) {
      throw ShapeError(name + ": affine network expects input shape {features}");
    }
  } else {
    if (input_shape.size() != 3 || shape_numel(input_shape) == 0) {
      throw ShapeError(name + ": conv network expects input shape {C, H, W}");
    }
    if (kernel % 2 == 0) throw ShapeError(name + ": conv kernel must be odd");
  }
  std::size_t width = stem_width;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const BlockSpec& b = blocks[i];
    if (b.in_width != width) {
      throw ShapeError(name + ": block " + std::to_string(i) + " expects width " +
                       std::to_string(b.in_width) + " but receives " + std::to_string(width));
    }
    if (b.out_width == 0) throw ShapeError(name + ": zero block width");
    if (b.stride != 1 && b.stride != 2) throw ShapeError(name + ": stride must be 1 or 2");
    if (kind == LayerKind::affine && b.stride != 1) {
      throw ShapeError(name + ": affine blocks cannot be strided");
    }
    width = b.out_width;
  }
}

NetworkSpec resmlp4(std::size_t input_features, std::size_t classes, std::size_t width) {
  NetworkSpec spec;
  spec.name = "resmlp-4";
  spec.kind = LayerKind::affine;
  spec.input_shape = {input_features};
  spec.stem_width = width;
  spec.blocks.assign(4, BlockSpec{width, width, 1});
  spec.classes = classes;
  spec.validate();
  return spec;
}

NetworkSpec rescnn6(const Shape& input_shape, std::size_t classes) {
  NetworkSpec spec;
  spec.name = "rescnn-6";
  spec.kind = LayerKind::conv;
  spec.input_shape = input_shape;
  spec.stem_width = 16;
  spec.kernel = 3;
  spec.blocks = {{16, 16, 1}, {16, 16, 1}, {16, 32, 2}, {32, 32, 1}, {32, 64, 2}, {64, 64, 1}};
  spec.classes = classes;
  spec.validate();
  return spec;
}

NetworkSpec network_preset(std::string_view name, const Shape& input_shape, std::size_t classes) {
  if (name == "resmlp-4") {
    if (input_shape.empty()) throw ShapeError("resmlp-4 needs an input shape");
    return resmlp4(shape_numel(input_shape), classes);
  }
  if (name == "rescnn-6") return rescnn6(input_shape, classes);
  throw ConfigError("unknown network preset '" + std::string(name) + "'");
}

void ParameterSet::add(std::string name, Tensor value) {
  for (const auto& existing : names_) {
    if (existing == name) throw Error("duplicate parameter name '" + name + "'");
  }
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

std::size_t ParameterSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw Error("no parameter named '" + std::string(name) + "'");
}

std::size_t ParameterSet::element_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool ParameterSet::bitwise_equal(const ParameterSet& other) const noexcept {
  if (names_ != other.names_ || seed != other.seed) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (!tensors_[i].bitwise_equal(other.tensors_[i])) return false;
  }
  return true;
}

namespace {

struct LayerShapes {
  Shape weight;
  Shape bias;
  std::size_t fan_in;
};

LayerShapes layer_shapes(const NetworkSpec& spec, std::size_t in, std::size_t out,
                         std::size_t kernel) {
  if (spec.kind == LayerKind::affine) return {{out, in}, {out}, in};
  return {{out, in, kernel, kernel}, {out}, in * kernel * kernel};
}

void add_layer(ParameterSet& params, Rng& rng, const std::string& prefix, const LayerShapes& s) {
  Tensor w(s.weight);
  const double stddev = std::sqrt(2.0 / static_cast<double>(s.fan_in));
  for (double& v : w.data()) v = stddev * rng.normal();
  params.add(prefix + ".weight", std::move(w));
  params.add(prefix + ".bias", Tensor(s.bias, 0.0));
}

std::string block_prefix(std::size_t i) { return "blocks." + std::to_string(i); }

}  // namespace

ParameterSet build_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = Rng::stream(seed, StreamId::init);
  ParameterSet params;
  params.seed = seed;
  // Features for affine nets, channels for conv nets.
  const std::size_t in_width = spec.input_shape[0];
  add_layer(params, rng, "stem", layer_shapes(spec, in_width, spec.stem_width, spec.kernel));
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const BlockSpec& b = spec.blocks[i];
    const std::string prefix = block_prefix(i);
    add_layer(params, rng, prefix + ".layer1", layer_shapes(spec, b.in_width, b.out_width, spec.kernel));
    add_layer(params, rng, prefix + ".layer2", layer_shapes(spec, b.out_width, b.out_width, spec.kernel));
    if (b.has_projection()) {
      add_layer(params, rng, prefix + ".shortcut", layer_shapes(spec, b.in_width, b.out_width, 1));
    }
  }
  const std::size_t last = spec.blocks.back().out_width;
  LayerShapes head{{spec.classes, last}, {spec.classes}, last};
  add_layer(params, rng, "head", head);
  return params;
}

std::vector<LayerGroup> layer_groups(const NetworkSpec& spec, const ParameterSet& params) {
  std::vector<LayerGroup> groups;
  auto group = [&](const std::string& prefix, int block) {
    groups.push_back({prefix, {params.index_of(prefix + ".weight"), params.index_of(prefix + ".bias")},
                      block});
  };
  group("stem", -1);
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const std::string prefix = block_prefix(i);
    group(prefix + ".layer1", static_cast<int>(i));
    group(prefix + ".layer2", static_cast<int>(i));
    if (spec.blocks[i].has_projection()) group(prefix + ".shortcut", -1);
  }
  group("head", -1);
  return groups;
}

bool BlockMask::is_all_ones() const noexcept {
  for (auto b : bits) {
    if (b == 0) return false;
  }
  return true;
}

std::size_t effective_block_count(const BlockMask& mask) noexcept {
  std::size_t n = 0;
  for (auto b : mask.bits) n += b != 0 ? 1 : 0;
  return n;
}

namespace {

// Parameter indices of one layer inside the ordered ParameterSet.
struct Cursor {
  std::size_t next = 0;
  std::pair<std::size_t, std::size_t> take() {
    next += 2;
    return {next - 2, next - 1};
  }
};

}  // namespace

ForwardPass forward(const NetworkSpec& spec, const ParameterSet& params, const Tensor& input,
                    const BlockMask& mask, const Scaling& scaling, bool input_requires_grad) {
  const std::size_t blocks = spec.block_count();
  if (mask.size() != blocks) {
    throw ShapeError("mask has " + std::to_string(mask.size()) + " bits for " +
                     std::to_string(blocks) + " blocks");
  }
  if (input.rank() != spec.input_shape.size() + 1 ||
      !std::equal(spec.input_shape.begin(), spec.input_shape.end(), input.shape().begin() + 1)) {
    throw ShapeError("input " + shape_to_string(input.shape()) + " does not match network input " +
                     shape_to_string(spec.input_shape));
  }
  const bool scaled = scaling.kind == BranchScaling::survival_probability;
  if (scaled) {
    if (scaling.survival.size() != blocks) {
      throw ShapeError("survival scaling needs one probability per block");
    }
    if (!mask.is_all_ones()) {
      throw DomainError("survival-probability scaling applies to the full network only");
    }
  }

  ForwardPass pass;
  Graph& g = pass.graph;
  pass.input = g.leaf_ref(input, input_requires_grad);
  pass.params.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) pass.params.push_back(g.leaf_ref(params[i]));
  pass.param_active.assign(params.size(), false);

  const bool conv = spec.kind == LayerKind::conv;
  auto apply = [&](NodeId x, std::pair<std::size_t, std::size_t> p, std::size_t stride) {
    pass.param_active[p.first] = pass.param_active[p.second] = true;
    const NodeId w = pass.params[p.first], b = pass.params[p.second];
    return conv ? g.conv2d(x, w, b, stride) : g.affine(x, w, b);
  };

  Cursor cursor;
  NodeId h = apply(pass.input, cursor.take(), 1);
  for (std::size_t i = 0; i < blocks; ++i) {
    const BlockSpec& b = spec.blocks[i];
    const auto layer1 = cursor.take();
    const auto layer2 = cursor.take();
    NodeId shortcut = h;
    if (b.has_projection()) shortcut = apply(h, cursor.take(), b.stride);
    if (!mask.keeps(i)) {
      h = shortcut;
      continue;
    }
    NodeId branch = apply(g.relu(h), layer1, b.stride);
    branch = apply(g.relu(branch), layer2, 1);
    if (scaled) branch = g.scale(branch, scaling.survival[i]);
    h = g.add(shortcut, branch);
    ++pass.executed_branches;
  }
  h = g.relu(h);
  if (conv) h = g.global_avg_pool(h);
  const auto head = cursor.take();
  pass.param_active[head.first] = pass.param_active[head.second] = true;
  pass.logits = g.affine(h, pass.params[head.first], pass.params[head.second]);
  return pass;
}

Tensor predict(const NetworkSpec& spec, const ParameterSet& params, const Tensor& input,
               const Scaling& scaling) {
  ForwardPass pass = forward(spec, params, input, BlockMask::all_ones(spec.block_count()), scaling);
  return pass.graph.value(pass.logits);
}

}  // namespace fpb

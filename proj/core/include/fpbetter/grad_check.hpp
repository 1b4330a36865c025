#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fpbetter/autodiff.hpp"

namespace fpb {

/// Builds a scalar-valued graph on top of the given leaf nodes and returns
/// the loss node. Must be deterministic.
using GraphBuilder = std::function<NodeId(Graph&, std::span<const NodeId>)>;

struct GradCheckReport {
  std::string label;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_leaf = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients with central differences
/// (f(w + h) - f(w - h)) / 2h on every coordinate of every leaf. The relative
/// error of a coordinate is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(std::string label, const GraphBuilder& build,
                           const std::vector<Tensor>& leaves, double h = 1e-5,
                           double floor = 1e-6);

}  // namespace fpb

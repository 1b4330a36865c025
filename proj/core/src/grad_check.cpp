#include "fpbetter/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "fpbetter/error.hpp"

namespace fpb {

namespace {

double evaluate(const GraphBuilder& build, const std::vector<Tensor>& leaves) {
  Graph g;
  std::vector<NodeId> ids;
  ids.reserve(leaves.size());
  for (const Tensor& t : leaves) ids.push_back(g.leaf(t, false));
  return g.value(build(g, ids)).item();
}

}  // namespace

GradCheckReport grad_check(std::string label, const GraphBuilder& build,
                           const std::vector<Tensor>& leaves, double h, double floor) {
  if (!(h > 0.0)) throw DomainError("grad_check: step must be positive");

  Graph g;
  std::vector<NodeId> ids;
  ids.reserve(leaves.size());
  for (const Tensor& t : leaves) ids.push_back(g.leaf(t));
  const NodeId loss = build(g, ids);
  const Gradients grads = g.backward(loss);

  GradCheckReport report;
  report.label = std::move(label);
  std::vector<Tensor> probe = leaves;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const Tensor& analytic = grads.at(ids[l]);
    for (std::size_t i = 0; i < leaves[l].size(); ++i) {
      const double origin = probe[l][i];
      probe[l][i] = origin + h;
      const double up = evaluate(build, probe);
      probe[l][i] = origin - h;
      const double down = evaluate(build, probe);
      probe[l][i] = origin;

      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i];
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      ++report.coordinates;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel_err > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = std::max(report.max_rel_error, rel_err);
        report.worst_leaf = l;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace fpb

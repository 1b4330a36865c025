#include "fpbetter/eval.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "fpbetter/error.hpp"
#include "fpbetter/parallel.hpp"

namespace fpb {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t count_correct(const NetworkSpec& spec, const ParameterSet& params, const Tensor& inputs,
                          const std::vector<int>& labels, const Scaling& scaling) {
  const std::vector<int> predicted = argmax_rows(predict(spec, params, inputs, scaling));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i] ? 1 : 0;
  return correct;
}

double fraction(const std::vector<std::size_t>& counts, std::size_t total) {
  std::size_t sum = 0;
  for (auto c : counts) sum += c;
  return static_cast<double>(sum) / static_cast<double>(total);
}

}  // namespace

double accuracy(const NetworkSpec& spec, const ParameterSet& params, const Dataset& data,
                const Scaling& scaling, std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  const auto batches = ordered_batches(data, batch_size);
  std::vector<std::size_t> correct(batches.size());
  parallel_for(batches.size(), [&](std::size_t b) {
    correct[b] = count_correct(spec, params, batches[b].inputs, batches[b].labels, scaling);
  });
  return fraction(correct, data.size());
}

double robust_accuracy(const NetworkSpec& spec, const ParameterSet& params, const Dataset& data,
                       const AttackConfig& attack, std::uint64_t seed, const Scaling& scaling,
                       std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  attack.validate();
  const auto batches = ordered_batches(data, batch_size);
  std::vector<std::size_t> correct(batches.size());
  parallel_for(batches.size(), [&](std::size_t b) {
    Rng rng = Rng::stream(seed, StreamId::eval, b);
    const Batch& batch = batches[b];
    const Tensor delta = pgd(spec, params, batch.inputs, batch.labels, attack, rng, scaling);
    correct[b] = count_correct(spec, params, batch.inputs + delta, batch.labels, scaling);
  });
  return fraction(correct, data.size());
}

std::vector<double> per_example_losses(const NetworkSpec& spec, const ParameterSet& params,
                                       const Dataset& data, const Scaling& scaling,
                                       std::size_t batch_size) {
  const auto batches = ordered_batches(data, batch_size);
  std::vector<std::vector<double>> parts(batches.size());
  parallel_for(batches.size(), [&](std::size_t b) {
    parts[b] = cross_entropy_per_example(predict(spec, params, batches[b].inputs, scaling),
                                         batches[b].labels);
  });
  std::vector<double> out;
  out.reserve(data.size());
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

double empirical_risk(const NetworkSpec& spec, const ParameterSet& params, const Dataset& data,
                      const Scaling& scaling, std::size_t batch_size) {
  if (data.size() == 0) throw DomainError("empirical_risk of an empty dataset");
  const auto losses = per_example_losses(spec, params, data, scaling, batch_size);
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(losses.size());
}

EvalReport evaluate(const std::string& tag, const NetworkSpec& spec, const ParameterSet& params,
                    const Dataset& data, const std::vector<NamedAttack>& attacks, std::uint64_t seed,
                    const Scaling& scaling) {
  EvalReport report;
  report.tag = tag;
  report.examples = data.size();
  report.clean_accuracy = accuracy(spec, params, data, scaling);
  report.empirical_risk = empirical_risk(spec, params, data, scaling);
  for (const auto& [name, attack] : attacks) {
    report.robust.emplace_back(name, robust_accuracy(spec, params, data, attack, seed, scaling));
  }
  return report;
}

std::optional<std::size_t> overfitting_monitor(std::span<const double> robust_history, double peak,
                                               double floor) {
  double best_so_far = -1.0;
  for (std::size_t e = 0; e < robust_history.size(); ++e) {
    if (e > 0 && robust_history[e] < floor && best_so_far >= peak) return e;
    best_so_far = std::max(best_so_far, robust_history[e]);
  }
  return std::nullopt;
}

Landscape loss_landscape(const InputObjective& objective, const Tensor& example, double epsilon,
                         std::size_t grid, Rng& rng, std::size_t pgd_steps) {
  if (grid < 3 || grid % 2 == 0) throw DomainError("landscape grid must be odd and >= 3");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw DomainError("landscape epsilon must be >= 0");

  Landscape out;
  out.grid = grid;
  out.epsilon = epsilon;
  out.adversarial_direction = Tensor(example.shape(), 0.0);
  out.rademacher_direction = Tensor(example.shape(), 0.0);
  for (double& v : out.rademacher_direction.data()) v = epsilon * rng.rademacher();

  if (epsilon > 0.0) {
    AttackConfig attack;
    attack.epsilon = epsilon;
    attack.alpha = 2.5 * epsilon / static_cast<double>(pgd_steps);
    attack.steps = pgd_steps;
    attack.init = AttackInit::zero;
    Tensor delta = pgd(objective, example, attack, rng);
    const double peak = delta.max_abs();
    if (peak > 0.0) out.adversarial_direction = delta * (epsilon / peak);
  }

  const double half = static_cast<double>(grid - 1);
  out.coefficients.resize(grid);
  for (std::size_t i = 0; i < grid; ++i) {
    out.coefficients[i] = epsilon * (2.0 * static_cast<double>(i) - half) / half;
  }

  // Unit (infinity-norm) directions; zero when epsilon is zero.
  const double inv = epsilon > 0.0 ? 1.0 / epsilon : 0.0;
  const Tensor adv_unit = out.adversarial_direction * inv;
  const Tensor rad_unit = out.rademacher_direction * inv;
  out.loss.resize(grid * grid);
  for (std::size_t i = 0; i < grid; ++i) {
    for (std::size_t j = 0; j < grid; ++j) {
      Tensor point = example;
      const double a = out.coefficients[i], b = out.coefficients[j];
      if (a != 0.0 || b != 0.0) point += adv_unit * a + rad_unit * b;
      const double loss = objective(point).loss;
      if (!std::isfinite(loss)) throw NonFiniteError("non-finite landscape loss");
      out.loss[i * grid + j] = loss;
    }
  }
  return out;
}

Landscape loss_landscape(const NetworkSpec& spec, const ParameterSet& params, const Tensor& example,
                         int label, double epsilon, std::size_t grid, std::uint64_t seed) {
  Shape batched{1};
  batched.insert(batched.end(), example.shape().begin(), example.shape().end());
  const Tensor input = example.reshaped(batched);
  const std::vector<int> labels{label};
  Rng rng = Rng::stream(seed, StreamId::landscape);
  Landscape out = loss_landscape(
      network_objective(spec, params, labels, BlockMask::all_ones(spec.block_count())), input,
      epsilon, grid, rng);
  out.adversarial_direction = out.adversarial_direction.reshaped(example.shape());
  out.rademacher_direction = out.rademacher_direction.reshaped(example.shape());
  return out;
}

void write_eval_csv(std::ostream& out, const std::vector<EvalReport>& reports) {
  out << "tag,examples,clean_accuracy,empirical_risk";
  if (!reports.empty()) {
    for (const auto& [name, _] : reports.front().robust) out << ",robust:" << name;
  }
  out << '\n';
  for (const auto& r : reports) {
    out << r.tag << ',' << r.examples << ',' << fmt(r.clean_accuracy) << ',' << fmt(r.empirical_risk);
    for (const auto& [_, acc] : r.robust) out << ',' << fmt(acc);
    out << '\n';
  }
}

void write_landscape_csv(std::ostream& out, const Landscape& landscape) {
  out << "row,col,adv_coef,rad_coef,loss\n";
  for (std::size_t i = 0; i < landscape.grid; ++i) {
    for (std::size_t j = 0; j < landscape.grid; ++j) {
      out << i << ',' << j << ',' << fmt(landscape.coefficients[i]) << ','
          << fmt(landscape.coefficients[j]) << ',' << fmt(landscape.loss[i * landscape.grid + j])
          << '\n';
    }
  }
}

}  // namespace fpb

// fpbetter: train, evaluate and inspect FP-Better runs from the command line.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fpbetter/bound.hpp"
#include "fpbetter/checkpoint.hpp"
#include "fpbetter/config.hpp"
#include "fpbetter/error.hpp"
#include "fpbetter/eval.hpp"
#include "fpbetter/sampler.hpp"
#include "fpbetter/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kCheckpoint = 4,
  kData = 5,
  kNumeric = 6,
  kIo = 7,
};

struct CliError : std::runtime_error {
  CliError(std::string kind, int code, const std::string& message)
      : std::runtime_error(message), kind(std::move(kind)), code(code) {}
  std::string kind;
  int code;
};

int report_error(const std::string& kind, int code, const std::string& message) {
  std::cerr << "error kind=" << kind << " exit=" << code << " message=" << json(message).dump() << '\n';
  return code;
}

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string method;
  std::string ablation;
  std::string checkpoint;
  bool quiet = false;
};

std::vector<std::string> overrides(const Options& o) {
  std::vector<std::string> v = o.sets;
  if (o.seed) v.push_back("train.seed=" + std::to_string(*o.seed));
  if (!o.method.empty()) v.push_back("train.method=" + json(o.method).dump());
  if (!o.ablation.empty()) v.push_back("train.ablation=" + json(o.ablation).dump());
  return v;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError("io", kIo, "cannot read '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw CliError("io", kIo, "cannot write '" + path.string() + "'");
}

std::string config_text(const Options& o, const std::string& fallback = {}) {
  if (o.config.empty()) return fallback;
  if (!fs::exists(o.config)) {
    throw CliError("missing_config", kConfig, "missing config file '" + o.config + "'");
  }
  return read_text(o.config);
}

fpb::RunConfig resolve_config(const Options& o, const std::string& fallback = {}) {
  return fpb::parse_run_config(config_text(o, fallback), overrides(o));
}

fpb::Checkpoint open_checkpoint(const Options& o) {
  if (o.checkpoint.empty()) throw CliError("missing_checkpoint", kCheckpoint, "--checkpoint is required");
  if (!fs::exists(o.checkpoint)) {
    throw CliError("missing_checkpoint", kCheckpoint, "missing checkpoint '" + o.checkpoint + "'");
  }
  try {
    return fpb::load_checkpoint(o.checkpoint);
  } catch (const fpb::DataFormatError& e) {
    throw CliError("bad_checkpoint", kCheckpoint, std::string("unreadable checkpoint: ") + e.what());
  }
}

fs::path output_dir(const Options& o, const fpb::RunConfig& cfg) {
  fs::path dir = o.out.empty() ? fs::path(cfg.output_dir) : fs::path(o.out);
  fs::create_directories(dir);
  return dir;
}

fs::path report_dir(const Options& o) {
  fs::path dir = o.out.empty() ? fs::path(o.checkpoint).parent_path() : fs::path(o.out);
  if (dir.empty()) dir = ".";
  fs::create_directories(dir);
  return dir;
}

fpb::Scaling checkpoint_scaling(const fpb::RunConfig& cfg, const fpb::Checkpoint& ck) {
  if (cfg.eval.scaling == fpb::BranchScaling::none) return fpb::Scaling::none();
  return {fpb::BranchScaling::survival_probability,
          fpb::spatial_probabilities(ck.spec.block_count(), ck.sampler.p_min, ck.sampler.mode)};
}

const fpb::Dataset& held_out(const fpb::DataSplits& d) { return d.eval.size() > 0 ? d.eval : d.train; }

json report_json(const fpb::EvalReport& r) {
  json robust = json::object();
  for (const auto& [name, acc] : r.robust) robust[name] = acc;
  return {{"examples", r.examples},
          {"clean_accuracy", r.clean_accuracy},
          {"empirical_risk", r.empirical_risk},
          {"robust", robust}};
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

// ---------------------------------------------------------------------------
// train

struct RunOutcome {
  fpb::EvalReport best;
  fpb::EvalReport last;
};

RunOutcome run_training(const fpb::RunConfig& cfg, const fs::path& dir, bool quiet) {
  fs::create_directories(dir);
  const std::string resolved = fpb::resolved_config_json(cfg);
  write_text(dir / "resolved_config.json", resolved);

  const fpb::DataSplits data = fpb::load_data(cfg.data);
  const fpb::NetworkSpec spec = fpb::resolve_network(cfg, data.train);
  const fpb::TrainConfig tc = fpb::resolve_train_config(cfg, data.train);

  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
  std::ofstream timing(dir / "timing.jsonl", std::ios::binary);
  if (!metrics || !timing) throw CliError("io", kIo, "cannot write metrics in '" + dir.string() + "'");

  fpb::TrainHooks hooks;
  hooks.on_epoch = [&](const fpb::EpochMetrics& m) {
    metrics << fpb::metrics_record(m) << '\n' << std::flush;
    timing << fpb::timing_record(m) << '\n' << std::flush;
    if (!quiet) {
      std::fprintf(stderr, "[%s] epoch %zu/%zu loss %.4f p_min %.3f clean %.4f pgd %.4f (%.1fs)\n",
                   std::string(fpb::to_string(tc.method)).c_str(), m.epoch + 1, tc.epochs,
                   m.train_adv_loss, m.p_min, m.clean_accuracy, m.robust_accuracy, m.wall_time_s);
    }
  };
  fpb::TrainResult result = fpb::train(spec, tc, data.train, data.eval, hooks);
  result.best.config_json = resolved;
  result.last.config_json = resolved;
  fpb::save_checkpoint(result.best, dir / "checkpoint_best.fpbc");
  fpb::save_checkpoint(result.last, dir / "checkpoint_last.fpbc");

  const fpb::Dataset eval = fpb::match_input_shape(held_out(data), spec);
  const auto attacks = fpb::evaluation_attacks(cfg, eval);
  RunOutcome outcome;
  outcome.best = fpb::evaluate("best", spec, result.best.params, eval, attacks, tc.seed,
                               checkpoint_scaling(cfg, result.best));
  outcome.last = fpb::evaluate("last", spec, result.last.params, eval, attacks, tc.seed,
                               checkpoint_scaling(cfg, result.last));
  {
    std::ofstream csv(dir / "eval.csv", std::ios::binary);
    fpb::write_eval_csv(csv, {outcome.best, outcome.last});
  }

  json summary = {{"method", std::string(fpb::to_string(tc.method))},
                  {"ablation", std::string(fpb::to_string(cfg.ablation))},
                  {"seed", tc.seed},
                  {"epochs", tc.epochs},
                  {"network", spec.name},
                  {"train_examples", data.train.size()},
                  {"eval_examples", eval.size()},
                  {"best_epoch", result.best.epoch},
                  {"best_selection_accuracy", result.best.robust_accuracy},
                  {"collapse_epoch", result.collapse_epoch ? json(*result.collapse_epoch) : json(nullptr)},
                  {"best", report_json(outcome.best)},
                  {"last", report_json(outcome.last)}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  return outcome;
}

int cmd_train(const Options& o) {
  const fpb::RunConfig cfg = resolve_config(o);
  const fs::path dir = output_dir(o, cfg);
  const RunOutcome r = run_training(cfg, dir, o.quiet);
  fpb::write_eval_csv(std::cout, {r.best, r.last});
  return kOk;
}

// ---------------------------------------------------------------------------
// evaluate

int cmd_evaluate(const Options& o) {
  const fpb::Checkpoint ck = open_checkpoint(o);
  const fpb::RunConfig cfg = resolve_config(o, ck.config_json);
  const fpb::DataSplits data = fpb::load_data(cfg.data);
  const fpb::Dataset eval = fpb::match_input_shape(held_out(data), ck.spec);
  const auto attacks = fpb::evaluation_attacks(cfg, eval);
  const fpb::EvalReport report = fpb::evaluate(fs::path(o.checkpoint).stem().string(), ck.spec, ck.params,
                                               eval, attacks, cfg.train.seed, checkpoint_scaling(cfg, ck));
  fpb::write_eval_csv(std::cout, {report});
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    std::ofstream csv(fs::path(o.out) / "eval.csv", std::ios::binary);
    fpb::write_eval_csv(csv, {report});
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// compare

struct Aggregate {
  std::vector<double> values;
  std::string text() const {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    if (values.size() < 2) return percent(mean);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return percent(mean) + " +- " + percent(std::sqrt(ss / static_cast<double>(values.size() - 1)));
  }
};

int cmd_compare(const Options& o, std::vector<std::string> methods, std::vector<std::uint64_t> seeds) {
  if (methods.size() < 2) throw CliError("usage", kUsage, "compare needs at least two methods");
  const fpb::RunConfig base = resolve_config(o);
  const fs::path dir = output_dir(o, base);
  if (seeds.empty()) seeds.push_back(base.train.seed);

  std::vector<std::string> columns;
  std::map<std::string, std::map<std::string, Aggregate>> table;
  std::ostringstream runs;
  for (const auto& method : methods) {
    for (std::uint64_t seed : seeds) {
      Options per_run = o;
      per_run.method = method;
      per_run.seed = seed;
      const fpb::RunConfig cfg = resolve_config(per_run);
      const RunOutcome r = run_training(cfg, dir / method / ("seed-" + std::to_string(seed)), o.quiet);

      std::vector<std::pair<std::string, double>> row;
      for (const auto* rep : {&r.best, &r.last}) {
        row.emplace_back("clean_" + rep->tag, rep->clean_accuracy);
        for (const auto& [name, acc] : rep->robust) row.emplace_back(name + "_" + rep->tag, acc);
      }
      if (columns.empty()) {
        runs << "method,seed";
        for (const auto& [name, v] : row) {
          columns.push_back(name);
          runs << ',' << name;
        }
        runs << '\n';
      }
      runs << method << ',' << seed;
      for (const auto& [name, v] : row) {
        table[method][name].values.push_back(v);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        runs << ',' << buf;
      }
      runs << '\n';
    }
  }
  write_text(dir / "compare_runs.csv", runs.str());

  std::ostringstream summary;
  summary << "method";
  for (const auto& c : columns) summary << ',' << c;
  summary << '\n';
  for (const auto& method : methods) {
    summary << method;
    for (const auto& c : columns) summary << ',' << table[method][c].text();
    summary << '\n';
  }
  write_text(dir / "compare.csv", summary.str());

  std::size_t width = 8;
  for (const auto& c : columns) width = std::max(width, c.size());
  std::printf("%-12s", "method");
  for (const auto& c : columns) std::printf(" %*s", static_cast<int>(width + 10), c.c_str());
  std::printf("\n");
  for (const auto& method : methods) {
    std::printf("%-12s", method.c_str());
    for (const auto& c : columns) {
      std::printf(" %*s", static_cast<int>(width + 10), table[method][c].text().c_str());
    }
    std::printf("\n");
  }
  std::printf("(accuracy in %%, mean +- sample std over %zu seed(s))\n", seeds.size());
  return kOk;
}

// ---------------------------------------------------------------------------
// bound

int cmd_bound(const Options& o) {
  const fpb::Checkpoint ck = open_checkpoint(o);
  const fpb::RunConfig cfg = resolve_config(o, ck.config_json);
  const fpb::DataSplits data = fpb::load_data(cfg.data);
  const fpb::Dataset train = fpb::match_input_shape(data.train, ck.spec);
  const fpb::TrainConfig tc = fpb::resolve_train_config(cfg, data.train);

  fpb::AttackConfig attack = tc.attack;
  if (tc.method != fpb::Method::pgd_at) attack.steps = 1;
  const auto mode =
      cfg.bound.intensity_mode == "subnetwork" ? fpb::MaskMode::subnetwork : fpb::MaskMode::full;
  const auto survival = fpb::spatial_probabilities(ck.spec.block_count(), ck.sampler.p_min, ck.sampler.mode);

  fpb::BoundInputs in;
  in.intensity = fpb::layerwise_intensity(ck.spec, ck.params, train, attack, mode, survival,
                                          tc.batch_size, tc.seed);
  const double per_epoch = std::ceil(static_cast<double>(train.size()) / static_cast<double>(tc.batch_size));
  in.iterations = std::max(1.0, static_cast<double>(ck.epoch) * per_epoch);
  in.samples = static_cast<double>(train.size());
  in.delta_prime = cfg.bound.delta_prime;
  in.laplace_b = fpb::estimate_laplace_b(ck.spec, ck.params, train, tc.batch_size, cfg.bound.laplace_batches,
                                         attack, tc.seed);
  in.l_erm = in.intensity.clean_norm;
  in.loss_bound = cfg.bound.loss_bound;
  in.gamma = cfg.bound.gamma;
  in.c = cfg.bound.c;
  in.batch_size = tc.batch_size;
  in.exclude_undefined = cfg.bound.exclude_undefined;

  const fpb::BoundReport report = fpb::compute_bound(in);
  std::string text = fpb::format_bound_report(report);
  if (data.eval.size() > 0) {
    const fpb::Dataset eval = fpb::match_input_shape(data.eval, ck.spec);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", fpb::empirical_risk(ck.spec, ck.params, eval));
    text += std::string("heldout_risk = ") + buf + " (context only)\n";
  }
  std::cout << text;
  write_text(report_dir(o) / "bound_report.txt", text);
  return kOk;
}

// ---------------------------------------------------------------------------
// landscape

int cmd_landscape(const Options& o, std::size_t index, std::size_t grid, const std::string& split) {
  const fpb::Checkpoint ck = open_checkpoint(o);
  const fpb::RunConfig cfg = resolve_config(o, ck.config_json);
  const fpb::DataSplits data = fpb::load_data(cfg.data);
  const fpb::Dataset& source = split == "train" ? data.train : held_out(data);
  const fpb::Dataset set = fpb::match_input_shape(source, ck.spec);
  if (index >= set.size()) throw CliError("usage", kUsage, "--index is out of range");

  const fpb::Dataset one = set.subset(std::vector<std::size_t>{index});
  const fpb::Tensor example = one.examples.reshaped(ck.spec.input_shape);
  const fpb::Landscape land = fpb::loss_landscape(ck.spec, ck.params, example, one.labels.front(),
                                                  cfg.eval.epsilon, grid, cfg.train.seed);
  const fs::path path = report_dir(o) / "landscape.csv";
  std::ofstream out(path, std::ios::binary);
  fpb::write_landscape_csv(out, land);
  if (!out) throw CliError("io", kIo, "cannot write '" + path.string() + "'");
  std::cout << path.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// export-curves

int cmd_export_curves(const std::vector<std::string>& runs, const std::string& out) {
  std::ostringstream csv;
  csv << "run,epoch,lr,p_min,expected_blocks,train_adv_loss,clean_acc,pgd10_acc,train_pgd10_acc,"
         "executed_branch_fraction\n";
  auto cell = [](double v) {
    if (std::isnan(v)) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& run : runs) {
    fs::path file = fs::is_directory(run) ? fs::path(run) / "metrics.jsonl" : fs::path(run);
    if (!fs::exists(file)) throw CliError("io", kIo, "missing metrics file '" + file.string() + "'");
    std::istringstream lines(read_text(file));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      fpb::EpochMetrics m;
      try {
        m = fpb::parse_metrics_record(line);
      } catch (const fpb::Error& e) {
        throw CliError("data", kData, "bad metrics record in '" + file.string() + "': " + e.what());
      }
      csv << run << ',' << m.epoch << ',' << cell(m.lr) << ',' << cell(m.p_min) << ','
          << cell(m.expected_blocks) << ',' << cell(m.train_adv_loss) << ',' << cell(m.clean_accuracy) << ','
          << cell(m.robust_accuracy) << ',' << cell(m.train_robust_accuracy) << ','
          << cell(m.executed_branch_fraction) << '\n';
    }
  }
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    fs::create_directories(out);
    write_text(fs::path(out) / "curves.csv", csv.str());
  }
  return kOk;
}

void add_config_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--set", o.sets, "Override a config key, e.g. --set train.epochs=5 (repeatable)")
      ->allow_extra_args(false);
  cmd->add_option("--out", o.out, "Output directory");
}

void add_run_options(CLI::App* cmd, Options& o) {
  add_config_options(cmd, o);
  cmd->add_option("--seed", o.seed, "Training seed (train.seed)");
  cmd->add_option("--ablation", o.ablation, "spatial | temporal | both (fp-better only)");
  cmd->add_flag("--quiet", o.quiet, "Suppress per-epoch progress");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FP-Better: fast adversarial training with subnetwork sampling", "fpbetter"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Options o;
  auto* train = app.add_subcommand("train", "Train one model and write checkpoints and metrics");
  add_run_options(train, o);
  train->add_option("--method", o.method, "fp-better | fgsm-rs | pgd-at | standard");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint against the configured attacks");
  add_config_options(evaluate, o);
  evaluate->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();

  std::vector<std::string> methods = {"fp-better", "fgsm-rs", "pgd-at", "standard"};
  std::vector<std::uint64_t> seeds;
  auto* compare = app.add_subcommand("compare", "Train several methods over several seeds and tabulate");
  add_run_options(compare, o);
  compare->add_option("--methods", methods, "Comma-separated methods")->delimiter(',');
  compare->add_option("--seeds", seeds, "Comma-separated seeds")->delimiter(',');

  auto* bound = app.add_subcommand("bound", "Report the generalization-bound quantities for a checkpoint");
  add_config_options(bound, o);
  bound->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();

  std::size_t index = 0;
  std::size_t grid = 21;
  std::string split = "eval";
  auto* landscape = app.add_subcommand("landscape", "Loss surface around one example");
  add_config_options(landscape, o);
  landscape->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  landscape->add_option("--index", index, "Example index");
  landscape->add_option("--grid", grid, "Odd grid size (>= 3)");
  landscape->add_option("--split", split, "eval | train")->check(CLI::IsMember({"eval", "train"}));

  std::vector<std::string> runs;
  std::string curves_out;
  auto* curves = app.add_subcommand("export-curves", "Convert metrics.jsonl logs into a CSV table");
  curves->add_option("--run", runs, "Run directory or metrics.jsonl file (repeatable)")->required();
  curves->add_option("--out", curves_out, "Directory for curves.csv (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << '\n';
    return report_error("usage", kUsage, e.what());
  }

  try {
    if (*train) return cmd_train(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*compare) return cmd_compare(o, methods, seeds);
    if (*bound) return cmd_bound(o);
    if (*landscape) return cmd_landscape(o, index, grid, split);
    if (*curves) return cmd_export_curves(runs, curves_out);
  } catch (const CliError& e) {
    return report_error(e.kind, e.code, e.what());
  } catch (const fpb::ConfigError& e) {
    return report_error("config", kConfig, e.what());
  } catch (const fpb::DataFormatError& e) {
    return report_error("data", kData, e.what());
  } catch (const fpb::Error& e) {
    return report_error("numeric", kNumeric, e.what());
  } catch (const std::exception& e) {
    return report_error("internal", kInternal, e.what());
  }
  return kUsage;
}

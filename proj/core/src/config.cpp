#include "fpbetter/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fpbetter/error.hpp"

namespace fpb {

using nlohmann::json;

std::string_view to_string(Ablation a) noexcept {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::spatial: return "spatial";
    case Ablation::temporal: return "temporal";
    case Ablation::both: return "both";
  }
  return "none";
}

Ablation parse_ablation(std::string_view text) {
  if (text == "none") return Ablation::none;
  if (text == "spatial") return Ablation::spatial;
  if (text == "temporal") return Ablation::temporal;
  if (text == "both") return Ablation::both;
  throw ConfigError("unknown ablation '" + std::string(text) + "' (expected none|spatial|temporal|both)");
}

namespace {

std::string_view scaling_name(BranchScaling s) {
  return s == BranchScaling::none ? "none" : "survival_probability";
}

BranchScaling parse_scaling(std::string_view text) {
  if (text == "none") return BranchScaling::none;
  if (text == "survival_probability") return BranchScaling::survival_probability;
  throw ConfigError("unknown eval.scaling '" + std::string(text) + "'");
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json to_json(const RunConfig& c) {
  const DataConfig& d = c.data;
  const TrainConfig& t = c.train;
  json j;
  j["data"] = {{"source", d.source},
               {"n_per_class", d.n_per_class},
               {"eval_n_per_class", d.eval_n_per_class},
               {"centers", d.centers},
               {"sigma", d.sigma},
               {"seed", d.seed},
               {"eval_seed", d.eval_seed},
               {"images", d.images},
               {"labels", d.labels},
               {"eval_images", d.eval_images},
               {"eval_labels", d.eval_labels},
               {"train_files", d.train_files},
               {"eval_files", d.eval_files},
               {"limit", d.limit},
               {"eval_limit", d.eval_limit}};
  j["model"] = {{"preset", c.model.preset}, {"width", c.model.width}};
  j["train"] = {{"method", std::string(to_string(t.method))},
                {"ablation", std::string(to_string(c.ablation))},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"lr", t.lr},
                {"momentum", t.momentum},
                {"weight_decay", t.weight_decay},
                {"lr_decay_factor", t.lr_decay_factor},
                {"lr_decay_points", t.lr_decay_points},
                {"update_target", std::string(to_string(t.update_target))},
                {"seed", t.seed},
                {"eval_every_epoch", t.eval_every_epoch},
                {"monitor_examples", t.monitor_examples},
                {"collapse_peak", t.collapse_peak},
                {"collapse_floor", t.collapse_floor},
                {"augment", t.augment}};
  j["attack"] = {{"epsilon", t.attack.epsilon},
                 {"alpha", optional_number(c.attack_alpha)},
                 {"steps", t.attack.steps},
                 {"init", std::string(to_string(t.attack.init))},
                 {"clip", c.attack_clip},
                 {"clip_lo", t.attack.clip_lo},
                 {"clip_hi", t.attack.clip_hi}};
  j["sampler"] = {{"mode", std::string(to_string(t.sampler.mode))},
                  {"p_min", t.sampler.p_min},
                  {"mu", t.sampler.mu}};
  j["eval"] = {{"epsilon", c.eval.epsilon},
               {"pgd_alpha", optional_number(c.eval.pgd_alpha)},
               {"pgd_steps", c.eval.pgd_steps},
               {"fgsm", c.eval.fgsm},
               {"scaling", std::string(scaling_name(c.eval.scaling))}};
  j["bound"] = {{"delta_prime", c.bound.delta_prime},
                {"gamma", c.bound.gamma},
                {"c", c.bound.c},
                {"loss_bound", c.bound.loss_bound},
                {"laplace_batches", c.bound.laplace_batches},
                {"intensity_mode", c.bound.intensity_mode},
                {"exclude_undefined", c.bound.exclude_undefined}};
  j["output"] = {{"dir", c.output_dir}};
  return j;
}

// Typed reads with the dotted key in every error message.
class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  const json& at(const std::string& section, const std::string& key) const {
    return root_.at(section).at(key);
  }

  double number(const std::string& s, const std::string& k) const {
    const json& v = at(s, k);
    if (!v.is_number()) fail(s, k, "a number");
    return v.get<double>();
  }
  std::optional<double> optional(const std::string& s, const std::string& k) const {
    if (at(s, k).is_null()) return std::nullopt;
    return number(s, k);
  }
  std::uint64_t unsigned_int(const std::string& s, const std::string& k) const {
    const json& v = at(s, k);
    if (!v.is_number_unsigned()) fail(s, k, "a non-negative integer");
    return v.get<std::uint64_t>();
  }
  bool boolean(const std::string& s, const std::string& k) const {
    const json& v = at(s, k);
    if (!v.is_boolean()) fail(s, k, "true or false");
    return v.get<bool>();
  }
  std::string string(const std::string& s, const std::string& k) const {
    const json& v = at(s, k);
    if (!v.is_string()) fail(s, k, "a string");
    return v.get<std::string>();
  }
  template <class T>
  std::vector<T> list(const std::string& s, const std::string& k) const {
    const json& v = at(s, k);
    try {
      if (!v.is_array()) throw std::invalid_argument("not an array");
      return v.get<std::vector<T>>();
    } catch (const std::exception&) {
      fail(s, k, "a list of the right element type");
    }
  }

 private:
  [[noreturn]] static void fail(const std::string& s, const std::string& k, const char* what) {
    throw ConfigError("config key " + s + "." + k + " must be " + what);
  }
  const json& root_;
};

template <class F>
auto with_key(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("config key " + key + ": " + e.what());
  }
}

RunConfig from_json(const json& j) {
  const Reader r(j);
  RunConfig c;
  DataConfig& d = c.data;
  d.source = r.string("data", "source");
  d.n_per_class = r.unsigned_int("data", "n_per_class");
  d.eval_n_per_class = r.unsigned_int("data", "eval_n_per_class");
  d.centers.clear();
  for (const auto& row : r.list<json>("data", "centers")) {
    if (!row.is_array()) throw ConfigError("config key data.centers must be a list of points");
    std::vector<double> point;
    for (const auto& v : row) {
      if (!v.is_number()) throw ConfigError("config key data.centers must hold numbers");
      point.push_back(v.get<double>());
    }
    d.centers.push_back(std::move(point));
  }
  d.sigma = r.number("data", "sigma");
  d.seed = r.unsigned_int("data", "seed");
  d.eval_seed = r.unsigned_int("data", "eval_seed");
  d.images = r.string("data", "images");
  d.labels = r.string("data", "labels");
  d.eval_images = r.string("data", "eval_images");
  d.eval_labels = r.string("data", "eval_labels");
  d.train_files = r.list<std::string>("data", "train_files");
  d.eval_files = r.list<std::string>("data", "eval_files");
  d.limit = r.unsigned_int("data", "limit");
  d.eval_limit = r.unsigned_int("data", "eval_limit");
  if (d.source != "blobs" && d.source != "idx" && d.source != "cifar") {
    throw ConfigError("config key data.source must be blobs, idx or cifar");
  }

  c.model.preset = r.string("model", "preset");
  c.model.width = r.unsigned_int("model", "width");

  TrainConfig& t = c.train;
  t.method = with_key("train.method", [&] { return parse_method(r.string("train", "method")); });
  c.ablation = parse_ablation(r.string("train", "ablation"));
  t.epochs = r.unsigned_int("train", "epochs");
  t.batch_size = r.unsigned_int("train", "batch_size");
  t.lr = r.number("train", "lr");
  t.momentum = r.number("train", "momentum");
  t.weight_decay = r.number("train", "weight_decay");
  t.lr_decay_factor = r.number("train", "lr_decay_factor");
  t.lr_decay_points = r.list<double>("train", "lr_decay_points");
  t.update_target = with_key("train.update_target",
                             [&] { return parse_update_target(r.string("train", "update_target")); });
  t.seed = r.unsigned_int("train", "seed");
  t.eval_every_epoch = r.boolean("train", "eval_every_epoch");
  t.monitor_examples = r.unsigned_int("train", "monitor_examples");
  t.collapse_peak = r.number("train", "collapse_peak");
  t.collapse_floor = r.number("train", "collapse_floor");
  t.augment = r.boolean("train", "augment");

  t.attack.epsilon = r.number("attack", "epsilon");
  c.attack_alpha = r.optional("attack", "alpha");
  t.attack.steps = r.unsigned_int("attack", "steps");
  t.attack.init = with_key("attack.init", [&] { return parse_attack_init(r.string("attack", "init")); });
  c.attack_clip = r.string("attack", "clip");
  if (c.attack_clip != "auto" && c.attack_clip != "on" && c.attack_clip != "off") {
    throw ConfigError("config key attack.clip must be auto, on or off");
  }
  t.attack.clip_lo = r.number("attack", "clip_lo");
  t.attack.clip_hi = r.number("attack", "clip_hi");

  t.sampler.mode = with_key("sampler.mode", [&] { return parse_schedule_mode(r.string("sampler", "mode")); });
  t.sampler.p_min = r.number("sampler", "p_min");
  t.sampler.mu = r.number("sampler", "mu");

  c.eval.epsilon = r.number("eval", "epsilon");
  c.eval.pgd_alpha = r.optional("eval", "pgd_alpha");
  c.eval.pgd_steps = r.list<std::size_t>("eval", "pgd_steps");
  c.eval.fgsm = r.boolean("eval", "fgsm");
  c.eval.scaling = parse_scaling(r.string("eval", "scaling"));

  c.bound.delta_prime = r.number("bound", "delta_prime");
  c.bound.gamma = r.number("bound", "gamma");
  c.bound.c = r.number("bound", "c");
  c.bound.loss_bound = r.number("bound", "loss_bound");
  c.bound.laplace_batches = r.unsigned_int("bound", "laplace_batches");
  c.bound.intensity_mode = r.string("bound", "intensity_mode");
  if (c.bound.intensity_mode != "full" && c.bound.intensity_mode != "subnetwork") {
    throw ConfigError("config key bound.intensity_mode must be full or subnetwork");
  }
  c.bound.exclude_undefined = r.boolean("bound", "exclude_undefined");

  c.output_dir = r.string("output", "dir");

  if (c.ablation != Ablation::none && t.method != Method::fp_better) {
    throw ConfigError("train.ablation applies to method fp-better only");
  }
  return c;
}

// Replaces leaves of `base` with those of `patch`. Keys absent from `base`
// are unknown and rejected; sections must stay objects.
void merge_checked(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) {
    throw ConfigError("config " + (prefix.empty() ? "document" : prefix) + " must be an object");
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key);
    } else {
      if (it.value().is_object()) throw ConfigError("config key '" + key + "' is not a section");
      slot = it.value();
    }
  }
}

json parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("invalid override '" + text + "' (expected key=value)");
  }
  const std::string key = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json patch = json::object();
  json* cursor = &patch;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("invalid override '" + text + "' (empty key segment)");
    if (dot == std::string::npos) {
      (*cursor)[part] = value;
      break;
    }
    cursor = &(*cursor)[part];
    *cursor = json::object();
    start = dot + 1;
  }
  return patch;
}

}  // namespace

std::string default_config_json() { return to_json(RunConfig{}).dump(2) + "\n"; }

RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides) {
  json doc = to_json(RunConfig{});
  if (!json_text.empty()) {
    json file = json::parse(json_text, nullptr, false);
    if (file.is_discarded()) throw ConfigError("config file is not valid JSON");
    merge_checked(doc, file, "");
  }
  for (const auto& o : overrides) {
    merge_checked(doc, parse_override(o), "");
  }
  return from_json(doc);
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::vector<std::string>& overrides) {
  std::string text;
  if (file) {
    std::ifstream in(*file, std::ios::binary);
    if (!in) throw ConfigError("missing config file '" + file->string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  return parse_run_config(text, overrides);
}

std::string resolved_config_json(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

DataSplits load_data(const DataConfig& c) {
  DataSplits out;
  if (c.source == "blobs") {
    if (c.centers.empty()) throw ConfigError("data.centers is empty");
    const std::size_t dims = c.centers.front().size();
    out.train = make_blobs(c.n_per_class, dims, c.centers, c.sigma, c.seed);
    if (c.eval_n_per_class > 0) {
      out.eval = make_blobs(c.eval_n_per_class, dims, c.centers, c.sigma, c.eval_seed);
    }
  } else if (c.source == "idx") {
    if (c.images.empty() || c.labels.empty()) {
      throw ConfigError("data.images and data.labels are required for idx");
    }
    out.train = load_idx(c.images, c.labels);
    if (!c.eval_images.empty()) out.eval = load_idx(c.eval_images, c.eval_labels);
  } else {
    if (c.train_files.empty()) throw ConfigError("data.train_files is required for cifar");
    std::vector<std::filesystem::path> train(c.train_files.begin(), c.train_files.end());
    out.train = load_cifar_binary(train);
    if (!c.eval_files.empty()) {
      std::vector<std::filesystem::path> eval(c.eval_files.begin(), c.eval_files.end());
      out.eval = load_cifar_binary(eval);
    }
  }
  if (c.limit > 0) out.train = out.train.head(c.limit);
  if (c.eval_limit > 0 && out.eval.size() > 0) out.eval = out.eval.head(c.eval_limit);
  return out;
}

namespace {

void apply_clip(AttackConfig& a, const RunConfig& config, const Dataset& data) {
  if (config.attack_clip == "off") {
    a.clip = false;
  } else if (config.attack_clip == "on") {
    a.clip = true;
    a.clip_lo = config.train.attack.clip_lo;
    a.clip_hi = config.train.attack.clip_hi;
  } else {
    a.clip = data.range.bounded;
    if (a.clip) {
      a.clip_lo = data.range.lo;
      a.clip_hi = data.range.hi;
    }
  }
}

}  // namespace

TrainConfig resolve_train_config(const RunConfig& config, const Dataset& train) {
  TrainConfig t = config.train;
  t.attack.alpha = config.attack_alpha.value_or(1.25 * t.attack.epsilon);
  if (t.attack.alpha <= 0.0 && !config.attack_alpha) t.attack.alpha = 1.0;  // epsilon = 0
  apply_clip(t.attack, config, train);

  switch (config.ablation) {
    case Ablation::none: break;
    case Ablation::spatial:
      t.sampler.mode = ScheduleMode::linear;
      t.sampler.mu = 0.0;
      break;
    case Ablation::temporal:
      t.sampler.mode = ScheduleMode::uniform;
      break;
    case Ablation::both:
      t.sampler.mode = ScheduleMode::linear;
      break;
  }

  t.eval_attack.epsilon = config.eval.epsilon;
  t.eval_attack.alpha = config.eval.pgd_alpha.value_or(config.eval.epsilon / 4.0);
  t.eval_attack.steps = config.eval.pgd_steps.empty() ? 10 : config.eval.pgd_steps.front();
  t.eval_attack.init = AttackInit::zero;
  apply_clip(t.eval_attack, config, train);
  if (t.eval_attack.alpha <= 0.0) t.eval_attack.alpha = 1.0;  // epsilon = 0: any step is a no-op
  t.eval_scaling = config.eval.scaling;
  with_key("train", [&] {
    t.validate();
    return 0;
  });
  return t;
}

NetworkSpec resolve_network(const RunConfig& config, const Dataset& train) {
  const Shape shape = train.example_shape();
  return with_key("model.preset", [&] {
    if (config.model.preset == "resmlp-4") {
      return resmlp4(shape_numel(shape), train.classes, config.model.width);
    }
    return network_preset(config.model.preset, shape, train.classes);
  });
}

std::vector<NamedAttack> evaluation_attacks(const RunConfig& config, const Dataset& data) {
  std::vector<NamedAttack> out;
  const double eps = config.eval.epsilon;
  if (config.eval.fgsm) {
    AttackConfig a{eps, eps > 0.0 ? eps : 1.0, 1, AttackInit::zero, false, 0.0, 1.0};
    apply_clip(a, config, data);
    out.emplace_back("fgsm", a);
  }
  for (std::size_t k : config.eval.pgd_steps) {
    if (k == 0) throw ConfigError("config key eval.pgd_steps must hold positive step counts");
    double alpha = config.eval.pgd_alpha.value_or(eps / 4.0);
    if (alpha <= 0.0) alpha = 1.0;
    AttackConfig a{eps, alpha, k, AttackInit::zero, false, 0.0, 1.0};
    apply_clip(a, config, data);
    out.emplace_back("pgd" + std::to_string(k), a);
  }
  return out;
}

}  // namespace fpb

#include "f2scil/experiment_config.hpp"

#include <cstdio>
#include <type_traits>

#include "f2scil/error.hpp"

namespace f2scil {

using nlohmann::json;

namespace {

const char* scope_name(ReplayScope s) {
  switch (s) {
    case ReplayScope::old_entries: return "old_entries";
    case ReplayScope::old_renormalized: return "old_renormalized";
    case ReplayScope::all_entries: return "all_entries";
  }
  return "?";
}
const char* cswa_name(CswaMode m) { return m == CswaMode::normalized ? "normalized" : "paper_exact"; }

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

bool same_kind(const json& want, const json& got) {
  if (want.is_number()) return got.is_number();
  if (want.is_array()) return got.is_array();
  if (want.is_object()) return got.is_object();
  if (want.is_boolean()) return got.is_boolean();
  if (want.is_string()) return got.is_string();
  return true;
}

// Overlays `patch` onto `base`, rejecting keys the defaults do not have.
void overlay(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config section '" + (path.empty() ? "<root>" : path) + "' must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string full = join(path, key);
    auto it = base.find(key);
    if (it == base.end()) throw ConfigError("unknown config key '" + full + "'");
    if (!same_kind(*it, value))
      throw ConfigError("config key '" + full + "' expects " + std::string(it->type_name()) + ", got " +
                        std::string(value.type_name()));
    if (it->is_object())
      overlay(*it, value, full);
    else
      *it = value;
  }
}

void check_count(const json& v, const std::string& key) {
  if (v.is_number_float() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
    throw ConfigError("config key '" + key + "' must be a nonnegative integer");
  if (v.is_array())
    for (const auto& e : v) check_count(e, key);
}

template <class T>
T get(const json& j, const std::string& section, const std::string& key) {
  if constexpr (std::is_unsigned_v<T> || std::is_same_v<T, std::vector<std::size_t>>)
    check_count(j.at(section).at(key), section + "." + key);
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + section + "." + key + "': " + e.what());
  }
}

void check(bool ok, const std::string& key, const std::string& constraint) {
  if (!ok) throw ConfigError("config key '" + key + "' must satisfy " + constraint);
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::finetune: return "finetune";
    case Method::baseline_kd: return "baseline_kd";
    case Method::sdd: return "sdd";
    case Method::sdd_nagr_only: return "sdd_nagr_only";
    case Method::sdd_cswa_only: return "sdd_cswa_only";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::finetune, Method::baseline_kd, Method::sdd, Method::sdd_nagr_only, Method::sdd_cswa_only})
    if (to_string(m) == s) return m;
  throw ConfigError("config key 'method' must be one of finetune, baseline_kd, sdd, sdd_nagr_only, sdd_cswa_only (got '" +
                    s + "')");
}

json to_json(const ExperimentConfig& c) {
  const LossWeights& w = c.loss();
  return json{
      {"seed", c.seed},
      {"method", to_string(c.method)},
      {"data",
       {{"source", c.data.source},
        {"classes", c.data.blobs.classes},
        {"dim", c.data.blobs.dim},
        {"per_class", c.data.blobs.per_class},
        {"test_per_class", c.data.blobs.test_per_class},
        {"spread", c.data.blobs.spread},
        {"center_scale", c.data.blobs.center_scale},
        {"train_csv", c.data.train_csv.string()},
        {"test_csv", c.data.test_csv.string()}}},
      {"schedule",
       {{"base_classes", c.schedule.base_classes},
        {"sessions", c.schedule.sessions},
        {"way", c.schedule.way},
        {"shot", c.schedule.shot}}},
      {"federation",
       {{"clients", c.federation.clients}, {"alpha", c.federation.alpha}, {"rounds", c.federation.rounds}}},
      {"model", {{"hidden", c.model.hidden}, {"bn_momentum", c.model.bn_momentum}, {"bn_epsilon", c.model.bn_epsilon}}},
      {"base",
       {{"epochs", c.base.epochs},
        {"batch_size", c.base.batch_size},
        {"lr", c.base.lr},
        {"momentum", c.base.momentum},
        {"milestones", c.base.milestones},
        {"gamma", c.base.gamma}}},
      {"client",
       {{"epochs", c.client.epochs},
        {"batch_size_new", c.client.batch_size_new},
        {"batch_size_replay", c.client.batch_size_replay},
        {"lr_backbone_and_old", c.client.lr_backbone_and_old},
        {"lr_new_head", c.client.lr_new_head},
        {"momentum", c.client.momentum},
        {"update_bn_stats", c.client.update_bn_stats},
        {"replay_scope", scope_name(c.client.replay_scope)}}},
      {"loss",
       {{"alpha", w.alpha},
        {"beta", w.beta},
        {"k", w.k},
        {"lambda1", w.lambda1},
        {"lambda2", w.lambda2},
        {"lambda3", w.lambda3},
        {"lambda4", w.lambda4},
        {"rce_log_zero", w.rce_log_zero},
        {"temperature", w.temperature}}},
      {"generator",
       {{"epochs", c.generator.epochs},
        {"rounds", c.generator.rounds},
        {"batch_size", c.generator.batch_size},
        {"noise_dim", c.generator.noise_dim},
        {"hidden", c.generator.hidden},
        {"lr", c.generator.generator_lr},
        {"student_lr", c.generator.student_lr},
        {"student_momentum", c.generator.student_momentum}}},
      {"replay", {{"capacity_per_class", c.replay.capacity_per_class}, {"label_noise", c.replay.label_noise}}},
      {"aggregation", {{"cswa_mode", cswa_name(c.cswa_mode)}}},
      {"output", {{"checkpoints", c.output.checkpoints}, {"export_synthetic", c.output.export_synthetic}}},
  };
}

ExperimentConfig config_from_json(const json& patch) {
  json j = to_json(ExperimentConfig{});
  if (!patch.is_null()) overlay(j, patch, "");

  ExperimentConfig c;
  check_count(j.at("seed"), "seed");
  c.seed = j.at("seed").get<std::uint64_t>();
  c.method = parse_method(j.at("method").get<std::string>());

  c.data.source = get<std::string>(j, "data", "source");
  c.data.blobs.classes = get<std::size_t>(j, "data", "classes");
  c.data.blobs.dim = get<std::size_t>(j, "data", "dim");
  c.data.blobs.per_class = get<std::size_t>(j, "data", "per_class");
  c.data.blobs.test_per_class = get<std::size_t>(j, "data", "test_per_class");
  c.data.blobs.spread = get<double>(j, "data", "spread");
  c.data.blobs.center_scale = get<double>(j, "data", "center_scale");
  c.data.train_csv = get<std::string>(j, "data", "train_csv");
  c.data.test_csv = get<std::string>(j, "data", "test_csv");

  c.schedule.base_classes = get<std::size_t>(j, "schedule", "base_classes");
  c.schedule.sessions = get<std::size_t>(j, "schedule", "sessions");
  c.schedule.way = get<std::size_t>(j, "schedule", "way");
  c.schedule.shot = get<std::size_t>(j, "schedule", "shot");

  c.federation.clients = get<std::size_t>(j, "federation", "clients");
  c.federation.alpha = get<double>(j, "federation", "alpha");
  c.federation.rounds = get<std::size_t>(j, "federation", "rounds");

  c.model.hidden = get<std::vector<std::size_t>>(j, "model", "hidden");
  c.model.bn_momentum = get<double>(j, "model", "bn_momentum");
  c.model.bn_epsilon = get<double>(j, "model", "bn_epsilon");

  c.base.epochs = get<std::size_t>(j, "base", "epochs");
  c.base.batch_size = get<std::size_t>(j, "base", "batch_size");
  c.base.lr = get<double>(j, "base", "lr");
  c.base.momentum = get<double>(j, "base", "momentum");
  c.base.milestones = get<std::vector<std::size_t>>(j, "base", "milestones");
  c.base.gamma = get<double>(j, "base", "gamma");

  c.client.epochs = get<std::size_t>(j, "client", "epochs");
  c.client.batch_size_new = get<std::size_t>(j, "client", "batch_size_new");
  c.client.batch_size_replay = get<std::size_t>(j, "client", "batch_size_replay");
  c.client.lr_backbone_and_old = get<double>(j, "client", "lr_backbone_and_old");
  c.client.lr_new_head = get<double>(j, "client", "lr_new_head");
  c.client.momentum = get<double>(j, "client", "momentum");
  c.client.update_bn_stats = get<bool>(j, "client", "update_bn_stats");
  const auto scope = get<std::string>(j, "client", "replay_scope");
  if (scope == "old_entries")
    c.client.replay_scope = ReplayScope::old_entries;
  else if (scope == "old_renormalized")
    c.client.replay_scope = ReplayScope::old_renormalized;
  else if (scope == "all_entries")
    c.client.replay_scope = ReplayScope::all_entries;
  else
    throw ConfigError("config key 'client.replay_scope' must be old_entries, old_renormalized or all_entries");

  LossWeights& w = c.loss();
  w.alpha = get<double>(j, "loss", "alpha");
  w.beta = get<double>(j, "loss", "beta");
  w.k = get<double>(j, "loss", "k");
  w.lambda1 = get<double>(j, "loss", "lambda1");
  w.lambda2 = get<double>(j, "loss", "lambda2");
  w.lambda3 = get<double>(j, "loss", "lambda3");
  w.lambda4 = get<double>(j, "loss", "lambda4");
  w.rce_log_zero = get<double>(j, "loss", "rce_log_zero");
  w.temperature = get<double>(j, "loss", "temperature");

  c.generator.epochs = get<std::size_t>(j, "generator", "epochs");
  c.generator.rounds = get<std::size_t>(j, "generator", "rounds");
  c.generator.batch_size = get<std::size_t>(j, "generator", "batch_size");
  c.generator.noise_dim = get<std::size_t>(j, "generator", "noise_dim");
  c.generator.hidden = get<std::vector<std::size_t>>(j, "generator", "hidden");
  c.generator.generator_lr = get<double>(j, "generator", "lr");
  c.generator.student_lr = get<double>(j, "generator", "student_lr");
  c.generator.student_momentum = get<double>(j, "generator", "student_momentum");

  c.replay.capacity_per_class = get<std::size_t>(j, "replay", "capacity_per_class");
  c.replay.label_noise = get<double>(j, "replay", "label_noise");

  const auto mode = get<std::string>(j, "aggregation", "cswa_mode");
  if (mode == "normalized")
    c.cswa_mode = CswaMode::normalized;
  else if (mode == "paper_exact")
    c.cswa_mode = CswaMode::paper_exact;
  else
    throw ConfigError("config key 'aggregation.cswa_mode' must be normalized or paper_exact");

  c.output.checkpoints = get<bool>(j, "output", "checkpoints");
  c.output.export_synthetic = get<bool>(j, "output", "export_synthetic");

  validate(c);
  return c;
}

void validate(ExperimentConfig& c) {
  check(c.data.source == "blobs" || c.data.source == "csv", "data.source", "one of blobs, csv");
  if (c.data.source == "csv")
    check(!c.data.train_csv.empty() && !c.data.test_csv.empty(), "data.train_csv", "set (with data.test_csv) for csv data");
  check(c.data.blobs.classes >= 2, "data.classes", ">= 2");
  check(c.data.blobs.dim >= 2, "data.dim", ">= 2");
  check(c.data.blobs.per_class >= 1, "data.per_class", ">= 1");
  check(c.data.blobs.test_per_class >= 1, "data.test_per_class", ">= 1");
  check(c.data.blobs.spread >= 0.0, "data.spread", ">= 0");
  check(c.data.blobs.center_scale > 0.0, "data.center_scale", "> 0");
  check(c.schedule.base_classes >= 1, "schedule.base_classes", ">= 1");
  check(c.schedule.sessions == 0 || (c.schedule.way >= 1 && c.schedule.shot >= 1), "schedule.way",
        ">= 1 (and schedule.shot >= 1) when schedule.sessions > 0");
  if (c.data.source == "blobs")
    check(c.schedule.base_classes + c.schedule.sessions * c.schedule.way <= c.data.blobs.classes,
          "schedule.base_classes", "base_classes + sessions * way <= data.classes");
  check(c.federation.clients >= 1, "federation.clients", ">= 1");
  check(c.federation.alpha > 0.0, "federation.alpha", "> 0 (Dirichlet concentration)");
  check(c.federation.rounds >= 1, "federation.rounds", ">= 1");
  check(!c.model.hidden.empty(), "model.hidden", "at least one layer");
  for (auto h : c.model.hidden) check(h >= 1, "model.hidden", "positive widths");
  check(c.model.bn_momentum > 0.0 && c.model.bn_momentum < 1.0, "model.bn_momentum", "0 < m < 1");
  check(c.model.bn_epsilon > 0.0, "model.bn_epsilon", "> 0");
  check(c.base.epochs >= 1, "base.epochs", ">= 1");
  check(c.base.batch_size >= 2, "base.batch_size", ">= 2");
  check(c.base.lr > 0.0, "base.lr", "> 0");
  check(c.base.momentum >= 0.0 && c.base.momentum < 1.0, "base.momentum", "0 <= m < 1");
  check(c.base.gamma > 0.0, "base.gamma", "> 0");
  check(c.client.epochs >= 1, "client.epochs", ">= 1");
  check(c.client.batch_size_new >= 1, "client.batch_size_new", ">= 1");
  check(c.client.lr_backbone_and_old >= 0.0, "client.lr_backbone_and_old", ">= 0");
  check(c.client.lr_new_head >= c.client.lr_backbone_and_old, "client.lr_new_head", ">= client.lr_backbone_and_old");
  check(c.client.momentum >= 0.0 && c.client.momentum < 1.0, "client.momentum", "0 <= m < 1");
  const LossWeights& w = c.loss();
  for (auto [name, v] : {std::pair{"loss.alpha", w.alpha}, {"loss.beta", w.beta}, {"loss.k", w.k},
                         {"loss.lambda1", w.lambda1}, {"loss.lambda2", w.lambda2}, {"loss.lambda3", w.lambda3},
                         {"loss.lambda4", w.lambda4}})
    check(v >= 0.0, name, ">= 0");
  check(w.rce_log_zero < 0.0, "loss.rce_log_zero", "< 0");
  check(w.temperature > 0.0, "loss.temperature", "> 0");
  check(c.generator.epochs >= 1, "generator.epochs", ">= 1");
  check(c.generator.rounds >= 1, "generator.rounds", ">= 1");
  check(c.generator.batch_size >= 2, "generator.batch_size", ">= 2");
  check(c.generator.noise_dim >= 1, "generator.noise_dim", ">= 1");
  check(!c.generator.hidden.empty(), "generator.hidden", "at least one layer");
  check(c.generator.generator_lr > 0.0, "generator.lr", "> 0");
  check(c.generator.student_lr > 0.0, "generator.student_lr", "> 0");
  check(c.replay.capacity_per_class >= 1, "replay.capacity_per_class", ">= 1");
  check(c.replay.label_noise >= 0.0 && c.replay.label_noise <= 1.0, "replay.label_noise", "0 <= p <= 1");
  c.generator.weights = c.loss();
}

json preset(const std::string& name) {
  if (name == "cifar100-hparams")
    return {{"loss", {{"alpha", 1}, {"beta", 1}, {"k", 1}, {"lambda1", 1}, {"lambda2", 1}, {"lambda3", 1}, {"lambda4", 1}}},
            {"client", {{"epochs", 15}}}};
  if (name == "miniimagenet-hparams")
    return {{"loss",
             {{"alpha", 1}, {"beta", 1}, {"k", 0.5}, {"lambda1", 10}, {"lambda2", 0.1}, {"lambda3", 1}, {"lambda4", 1}}},
            {"client", {{"epochs", 30}}}};
  if (name == "desk") return {{"generator", {{"epochs", 50}, {"rounds", 20}}}, {"loss", {{"k", 2.0}}}};
  throw ConfigError("unknown preset '" + name + "' (known: cifar100-hparams, miniimagenet-hparams, desk)");
}

std::vector<std::string> preset_names() { return {"cifar100-hparams", "miniimagenet-hparams", "desk"}; }

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must look like key=value");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (!node->is_object()) *node = json::object();
    start = dot + 1;
  }
}

std::string run_id(const ExperimentConfig& cfg) {
  // FNV-1a over the canonical dump; output flags do not change results.
  json j = to_json(cfg);
  j.erase("output");
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%08llx", static_cast<unsigned long long>(h & 0xffffffffULL));
  return to_string(cfg.method) + "-s" + std::to_string(cfg.seed) + "-" + buf;
}

}  // namespace f2scil

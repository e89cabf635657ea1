#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "f2scil/aggregator.hpp"
#include "f2scil/client_trainer.hpp"
#include "f2scil/datasets.hpp"
#include "f2scil/generator_lab.hpp"

namespace f2scil {

enum class Method { finetune, baseline_kd, sdd, sdd_nagr_only, sdd_cswa_only };

std::string to_string(Method m);
Method parse_method(const std::string& s);  // throws ConfigError

struct DataConfig {
  std::string source = "blobs";  // blobs | csv
  BlobsConfig blobs;
  std::filesystem::path train_csv, test_csv;
};

struct FederationConfig {
  std::size_t clients = 3;
  double alpha = 1.0;  // Dirichlet concentration
  std::size_t rounds = 1;
};

struct ModelConfig {
  std::vector<std::size_t> hidden = {64, 64};
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
};

/// Centralized base-session training: SGD with step decay.
struct BaseTrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double lr = 0.1;
  double momentum = 0.9;
  std::vector<std::size_t> milestones = {60, 70};
  double gamma = 0.1;
};

struct ReplayConfig {
  std::size_t capacity_per_class = 200;
  double label_noise = 0.0;  // fraction of pseudo labels flipped at insertion
};

struct OutputConfig {
  bool checkpoints = false;
  bool export_synthetic = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  Method method = Method::sdd;
  DataConfig data;
  ScheduleConfig schedule;
  FederationConfig federation;
  ModelConfig model;
  BaseTrainConfig base;
  ClientConfig client;
  GenLabConfig generator;
  ReplayConfig replay;
  CswaMode cswa_mode = CswaMode::normalized;
  OutputConfig output;

  // client.weights is the single source of loss weights; the generator's
  // copy is synchronized by validate().
  LossWeights& loss() { return client.weights; }
  const LossWeights& loss() const { return client.weights; }
};

/// Nested JSON form with every key present.
nlohmann::json to_json(const ExperimentConfig& cfg);
/// Overlays j on the defaults. Unknown keys and out-of-range values throw
/// ConfigError naming the key.
ExperimentConfig config_from_json(const nlohmann::json& j);
/// Range checks across sections; also copies loss weights into the generator.
void validate(ExperimentConfig& cfg);

/// Named bundles of overrides ("cifar100-hparams", "miniimagenet-hparams",
/// "desk"). Throws ConfigError for an unknown name.
nlohmann::json preset(const std::string& name);
std::vector<std::string> preset_names();

/// Applies "a.b.c=value"; value is parsed as JSON when possible, else kept
/// as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Stable identifier: method, seed and a hash of the canonical config.
std::string run_id(const ExperimentConfig& cfg);

}  // namespace f2scil

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "f2scil/models.hpp"
#include "f2scil/tensor.hpp"

namespace f2scil {

struct LabeledDataset {
  Tensor samples;           // (n, d)
  std::vector<int> labels;  // n entries in [0, class_count)
  std::size_t class_count = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return samples.cols(); }
  LabeledDataset subset(std::span<const std::size_t> indices) const;
  /// Throws ContractViolation when labels and samples disagree.
  void validate() const;
};

struct BlobsConfig {
  std::size_t classes = 20;
  std::size_t dim = 16;
  std::size_t per_class = 100;      // training samples per class
  std::size_t test_per_class = 50;  // held-out samples per class
  double spread = 0.7;              // isotropic standard deviation
  double center_scale = 1.0;        // standard deviation of the class centers
};

struct BlobsSplit {
  LabeledDataset train;
  LabeledDataset test;
  Tensor centers;  // (classes, dim)
};

/// Isotropic Gaussian clusters around seeded random centers.
BlobsSplit make_blobs(const BlobsConfig& cfg, std::uint64_t seed);

/// One row per sample: feature columns followed by an integer label.
LabeledDataset read_csv_dataset(const std::filesystem::path& path);

struct ScheduleConfig {
  std::size_t base_classes = 12;
  std::size_t sessions = 4;  // T incremental sessions
  std::size_t way = 2;       // N new classes per session
  std::size_t shot = 5;      // K training samples per new class
};

/// Base-plus-incremental class timeline. Classes are relabeled to their
/// position in class_order, so session t owns the contiguous id range
/// classes_of(t).
struct SessionSchedule {
  ScheduleConfig config;
  std::size_t total_classes = 0;
  std::vector<int> class_order;  // schedule id -> original class id

  ColumnRange classes_of(std::size_t session) const;
  std::size_t classes_through(std::size_t session) const { return classes_of(session).end; }
  std::size_t session_count() const { return config.sessions + 1; }
};

struct SessionData {
  std::size_t session = 0;
  ColumnRange classes;
  LabeledDataset train;  // session 0: all base data; t ≥ 1: N·K samples
  LabeledDataset test;   // every class seen through this session
};

struct ScheduledData {
  SessionSchedule schedule;
  std::vector<SessionData> sessions;
  Tensor lower;  // per-dimension envelope of the base training data
  Tensor upper;
};

/// Throws ConfigError when the dataset lacks classes or samples.
ScheduledData build_schedule(const LabeledDataset& train, const LabeledDataset& test, const ScheduleConfig& cfg,
                             std::uint64_t seed);

struct ClientShard {
  std::size_t client_id = 0;
  std::vector<std::size_t> indices;  // into the session's training set, ascending
  std::size_t sample_count() const { return indices.size(); }
};

/// Per class: draw Dirichlet(alpha·1_M) proportions, round n_c·p by largest
/// remainder (ties to the lower client id) and hand out a seeded shuffle of
/// the class's samples in client order. Throws ConfigError for alpha ≤ 0 or
/// clients = 0.
std::vector<ClientShard> dirichlet_partition(const LabeledDataset& session_data, std::size_t clients, double alpha,
                                             std::uint64_t seed);

/// Per-client class histogram; rows are clients, columns class ids.
std::vector<std::vector<std::size_t>> shard_class_counts(const LabeledDataset& data,
                                                         std::span<const ClientShard> shards);

nlohmann::json schedule_to_json(const ScheduledData& data);
nlohmann::json shards_to_json(const LabeledDataset& data, std::span<const ClientShard> shards);

}  // namespace f2scil

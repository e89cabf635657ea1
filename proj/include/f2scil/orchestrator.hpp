#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "f2scil/experiment_config.hpp"

namespace f2scil {

struct SessionMetrics {
  std::size_t session = 0;
  std::size_t classes_seen = 0;
  std::size_t test_size = 0;
  double overall = 0.0;
  std::optional<double> old_acc;  // absent at session 0
  double new_acc = 0.0;
  std::vector<double> per_class;
  nlohmann::json audit = nlohmann::json::object();  // aggregation weights, buffer stats
  double wall_seconds = 0.0;                        // not part of the metrics record
};

/// Accuracy of `model` on the session's test set, split into classes learned
/// before the session and the session's own classes.
SessionMetrics evaluate_session(const Classifier& model, const SessionData& data);

struct ExperimentResult {
  std::string run_id;
  std::vector<SessionMetrics> sessions;
  double final_acc = 0.0;
  double average_acc = 0.0;
};

/// The state a run carries from one session to the next.
struct RunState {
  Classifier global;
  ReplayBuffer buffer;
};

/// Loads or synthesizes the data and builds the session schedule.
ScheduledData prepare_data(const ExperimentConfig& cfg);

/// Cross-entropy SGD over all base-class data.
Classifier train_base_model(const ExperimentConfig& cfg, const LabeledDataset& train);

/// Base model, then the base-session generator with the base model as the
/// sole teacher; the buffer is seeded with every base class.
RunState run_base_session(const ExperimentConfig& cfg, const ScheduledData& data, SessionMetrics& metrics);

/// One incremental session per the configured method. Replaces state.global
/// and extends state.buffer.
void run_incremental_session(const ExperimentConfig& cfg, const ScheduledData& data, std::size_t session,
                             RunState& state, SessionMetrics& metrics);

/// Writes metrics.jsonl, timings.jsonl, summary.csv and manifest.json into
/// run_dir (when given). Metrics are flushed after every session.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::optional<std::filesystem::path>& run_dir = std::nullopt);

nlohmann::json metrics_record(const ExperimentConfig& cfg, const std::string& run_id, const SessionMetrics& m);

}  // namespace f2scil

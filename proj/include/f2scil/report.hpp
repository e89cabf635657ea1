#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace f2scil {

/// Per-session overall accuracies of one run, read back from metrics.jsonl.
struct RunSummary {
  std::string run_id;
  std::string method;
  std::uint64_t seed = 0;
  std::vector<double> overall;  // indexed by session
  std::vector<double> old_acc;  // NaN where absent
  std::size_t runs = 1;         // > 1 for a seed-averaged row

  double average() const;
};

/// One entry per run id, in order of first appearance.
std::vector<RunSummary> load_metrics(const std::filesystem::path& metrics_file);

/// Session-wise mean of several runs (all must have the same session count).
RunSummary mean_of(const std::vector<RunSummary>& runs);

/// Accuracies in percent, columns 0..T then Average.
std::string render_report(const std::vector<RunSummary>& runs);
std::string render_report_csv(const std::vector<RunSummary>& runs);

/// The first row is the reference. Every other row gets per-session deltas
/// (reference − row) and Improvement = reference average − row average.
std::string render_compare(const std::vector<RunSummary>& rows);
std::string render_compare_csv(const std::vector<RunSummary>& rows);

}  // namespace f2scil

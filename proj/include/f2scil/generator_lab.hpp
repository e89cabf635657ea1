#pragma once

#include <deque>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "f2scil/losses.hpp"
#include "f2scil/models.hpp"
#include "f2scil/rng.hpp"

namespace f2scil {

/// A banked synthetic pool X̃_t. pseudo_labels is empty until relabel().
struct SyntheticSet {
  Tensor samples;  // (n, d)
  std::vector<int> condition_labels;
  std::vector<int> pseudo_labels;
  std::size_t session = 0;

  std::size_t size() const { return condition_labels.size(); }
};

struct ReplayEntry {
  std::vector<double> sample;
  int pseudo_label = 0;
  int condition_label = 0;
  std::size_t session = 0;
};

struct ReplayBatch {
  Tensor samples;
  std::vector<int> labels;  // pseudo labels
};

/// Per-class FIFO of relabeled synthetic samples, keyed by pseudo label.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity_per_class = 200) : capacity_(capacity_per_class) {}

  /// Inserts a relabeled pool. The oldest entries of a class are evicted
  /// once it exceeds capacity.
  void add(const SyntheticSet& relabeled);
  /// Class-balanced draw with replacement: n / classes per class, the
  /// remainder to distinct randomly chosen classes. Throws EmptyBufferError.
  ReplayBatch sample(std::size_t n, Rng& rng) const;

  bool empty() const { return entries_.empty(); }
  std::size_t size() const;
  std::vector<int> classes() const;
  std::size_t capacity_per_class() const { return capacity_; }
  const std::map<int, std::deque<ReplayEntry>>& entries() const { return entries_; }
  /// Throws BufferGapError unless the stored class keys are exactly [0, classes_learned).
  void check_covers(std::size_t classes_learned) const;

 private:
  std::size_t capacity_;
  std::map<int, std::deque<ReplayEntry>> entries_;
};

ReplayBatch replay_sample(const ReplayBuffer& buffer, std::size_t n, std::uint64_t seed);

struct GenLabConfig {
  std::size_t epochs = 100;
  std::size_t rounds = 50;  // generator/student rounds per epoch
  std::size_t batch_size = 64;
  std::size_t noise_dim = 32;
  std::vector<std::size_t> hidden = {64, 64};
  double generator_lr = 1e-3;  // Adam
  double student_lr = 0.2;     // SGD
  double student_momentum = 0.9;
  bool train_student = true;
  LossWeights weights;
};

/// Per-epoch means of the generator loss terms, for diagnostics.
struct GenEpochTrace {
  double fidelity = 0, entropy = 0, bn = 0, transfer = 0, student = 0;
};

struct GeneratorSession {
  ConditionalGenerator generator;
  Classifier student;
  SyntheticSet pool;  // condition labels only
  std::vector<GenEpochTrace> trace;
};

/// Session-t logit slice of the teacher ensemble, averaged over teachers.
/// Teachers run in eval mode; when bn_trace is given each teacher's batch
/// norm input moments are appended to it (one vector per teacher).
Var teacher_logits(Graph& g, Var x, std::span<const Classifier* const> teachers, std::size_t session,
                   std::vector<std::vector<BnLayerStats>>* bn_trace = nullptr);
Tensor teacher_logits(const Tensor& x, std::span<const Classifier* const> teachers, std::size_t session);

/// Alternating generator/student optimization against frozen teachers. One
/// batch of x̃ per epoch (the last round's) is banked into the pool.
/// student_init, when given, replaces the seeded student initialization.
GeneratorSession train_generator_session(std::span<const Classifier* const> teachers, std::size_t session,
                                         const Tensor& lower, const Tensor& upper, const GenLabConfig& cfg,
                                         std::uint64_t seed, const Classifier* student_init = nullptr);

/// y* = argmax over the labeling model's session slice, as a global class id.
SyntheticSet relabel(const SyntheticSet& pool, const Classifier& labeler);

/// Replaces a fraction of pseudo labels with a uniformly drawn different
/// class in [0, classes). Returns the number of flipped labels.
std::size_t corrupt_labels(SyntheticSet& pool, double fraction, std::size_t classes, std::uint64_t seed);

/// Rows: features..., condition_label, pseudo_label, session.
void write_synthetic_csv(const std::filesystem::path& path, const SyntheticSet& set);
void write_buffer_csv(const std::filesystem::path& path, const ReplayBuffer& buffer);

}  // namespace f2scil

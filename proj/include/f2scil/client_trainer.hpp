#pragma once

#include <vector>

#include "f2scil/datasets.hpp"
#include "f2scil/generator_lab.hpp"
#include "f2scil/losses.hpp"
#include "f2scil/models.hpp"

namespace f2scil {

/// How the replay loss reads the model's distribution on x̃.
///   old_entries: softmax over the whole head, loss terms over old classes only
///   old_renormalized: softmax over the old-class logits alone
///   all_entries: softmax over the whole head, RCE over every column
enum class ReplayScope { old_entries, old_renormalized, all_entries };

struct ClientConfig {
  std::size_t epochs = 15;
  std::size_t batch_size_new = 16;
  std::size_t batch_size_replay = 0;  // 0: same as batch_size_new
  double lr_backbone_and_old = 1e-4;
  double lr_new_head = 0.1;
  double momentum = 0.9;
  bool update_bn_stats = true;
  ReplayScope replay_scope = ReplayScope::old_entries;
  LossWeights weights;
};

enum class ReplaySupervision { noise_robust, distillation };

struct ClientUpdate {
  Classifier model;
  std::size_t sample_count = 0;
  std::size_t steps = 0;
  double last_loss = 0.0;
};

/// One client's local session update. The model's head must already hold
/// the session's columns. Each step takes one shuffled batch of the shard
/// and a fresh replay batch, forwarded together so batch norm sees both.
ClientUpdate local_update_nagr(const Classifier& global, const LabeledDataset& shard, const ReplayBuffer* replay,
                               const ClientConfig& cfg, std::uint64_t seed);

/// As local_update_nagr, with replay supervision replaced by KL distillation
/// from the frozen previous global model on the old-class slice.
ClientUpdate local_update_baseline_kd(const Classifier& global, const Classifier& previous,
                                      const LabeledDataset& shard, const ReplayBuffer* replay,
                                      const ClientConfig& cfg, std::uint64_t seed);

struct ClientJob {
  const LabeledDataset* shard = nullptr;
  std::uint64_t seed = 0;
};

/// Runs every job on its own copy of `global`, in parallel. The first
/// exception thrown by any client is rethrown after all clients finish.
std::vector<ClientUpdate> train_clients(const Classifier& global, const Classifier* previous,
                                        std::span<const ClientJob> jobs, const ReplayBuffer* replay,
                                        const ClientConfig& cfg, ReplaySupervision supervision);

}  // namespace f2scil

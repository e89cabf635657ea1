#include "f2scil/client_trainer.hpp"

#include <algorithm>
#include <exception>
#include <numeric>

#include "f2scil/error.hpp"
#include "f2scil/optimizer.hpp"

namespace f2scil {
namespace {

OptimizerConfig client_optimizer(const ClientConfig& cfg) {
  OptimizerConfig oc = OptimizerConfig::sgd(cfg.lr_new_head, cfg.momentum);
  oc.rates[ParamGroup::backbone] = cfg.lr_backbone_and_old;
  oc.rates[ParamGroup::head_old] = cfg.lr_backbone_and_old;
  oc.rates[ParamGroup::head_new] = cfg.lr_new_head;
  return oc;
}

ClientUpdate local_update(const Classifier& global, const Classifier* previous, const LabeledDataset& shard,
                          const ReplayBuffer* replay, const ClientConfig& cfg, std::uint64_t seed,
                          ReplaySupervision supervision) {
  if (cfg.lr_new_head < cfg.lr_backbone_and_old || cfg.lr_backbone_and_old < 0.0)
    throw ConfigError("client rates need lr_new_head >= lr_backbone_and_old >= 0");
  require(cfg.batch_size_new >= 1, "client batch size must be >= 1");
  ClientUpdate out{global, shard.size(), 0, 0.0};
  if (shard.size() == 0) return out;

  Classifier& model = out.model;
  const std::size_t session = model.session_count() - 1;
  const ColumnRange fresh = model.session_columns(session);
  for (int l : shard.labels)
    require(l >= static_cast<int>(fresh.begin) && l < static_cast<int>(fresh.end),
            "client shard label " + std::to_string(l) + " outside the session's classes");
  const std::size_t old_classes = fresh.begin;
  const bool use_replay = cfg.weights.k != 0.0 && old_classes > 0 && replay != nullptr;
  if (use_replay && replay->empty()) throw EmptyBufferError("client replay requested but the buffer is empty");
  if (use_replay && supervision == ReplaySupervision::distillation) {
    require(previous != nullptr, "distillation needs the previous global model");
    require(previous->classes_seen() == old_classes, "previous global model must cover exactly the old classes");
  }
  const std::size_t replay_n = cfg.batch_size_replay ? cfg.batch_size_replay : cfg.batch_size_new;

  Optimizer opt(client_optimizer(cfg));
  Rng rng(seed);
  std::vector<std::size_t> order(shard.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size_new) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size_new);
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      Tensor x = shard.samples.gather_rows(idx);
      std::vector<int> y;
      for (auto i : idx) y.push_back(shard.labels[i]);
      const std::size_t b_new = y.size();

      ReplayBatch rb;
      if (use_replay) {
        rb = replay->sample(replay_n, rng);
        x = concat_rows(x, rb.samples);
      }
      const BnMode mode = x.rows() >= 2 ? BnMode::train : BnMode::eval;

      Graph g;
      Var logits = model.forward(g, g.constant(x), mode, cfg.update_bn_stats);
      Var new_logits = use_replay ? ad::slice_rows(logits, 0, b_new) : logits;
      Var loss;
      if (!use_replay) {
        loss = cross_entropy(new_logits, y);
      } else {
        Var rep = ad::slice_rows(logits, b_new, x.rows());
        if (supervision == ReplaySupervision::noise_robust) {
          const LossWeights& w = cfg.weights;
          switch (cfg.replay_scope) {
            case ReplayScope::old_entries:
              loss = ad::add(cross_entropy(new_logits, y),
                             ad::scale(noise_robust_loss_old_entries(rep, rb.labels, old_classes, w.alpha, w.beta,
                                                                     w.rce_log_zero),
                                       w.k));
              break;
            case ReplayScope::old_renormalized:
              loss = client_loss(new_logits, y, ad::slice_cols(rep, 0, old_classes), rb.labels, w);
              break;
            case ReplayScope::all_entries:
              loss = client_loss(new_logits, y, rep, rb.labels, w);
              break;
          }
        } else {
          Var teacher = previous->forward_frozen(g, g.constant(rb.samples), BnMode::eval);
          const double temp = cfg.weights.temperature;
          Var kd = cfg.replay_scope == ReplayScope::old_renormalized
                       ? student_loss(teacher, ad::slice_cols(rep, 0, old_classes), temp)
                       : distillation_loss_old_entries(teacher, rep, temp);
          loss = ad::add(cross_entropy(new_logits, y), ad::scale(kd, cfg.weights.k));
        }
      }
      zero_grads(model.parameters());
      g.backward(loss);
      g.accumulate_parameter_grads();
      opt.step(model.parameters());
      out.last_loss = loss.value().item();
      ++out.steps;
    }
  }
  return out;
}

}  // namespace

ClientUpdate local_update_nagr(const Classifier& global, const LabeledDataset& shard, const ReplayBuffer* replay,
                               const ClientConfig& cfg, std::uint64_t seed) {
  return local_update(global, nullptr, shard, replay, cfg, seed, ReplaySupervision::noise_robust);
}

ClientUpdate local_update_baseline_kd(const Classifier& global, const Classifier& previous,
                                      const LabeledDataset& shard, const ReplayBuffer* replay,
                                      const ClientConfig& cfg, std::uint64_t seed) {
  return local_update(global, &previous, shard, replay, cfg, seed, ReplaySupervision::distillation);
}

std::vector<ClientUpdate> train_clients(const Classifier& global, const Classifier* previous,
                                        std::span<const ClientJob> jobs, const ReplayBuffer* replay,
                                        const ClientConfig& cfg, ReplaySupervision supervision) {
  std::vector<ClientUpdate> out(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t m = 0; m < n; ++m) {
    try {
      out[m] = local_update(global, previous, *jobs[m].shard, replay, cfg, jobs[m].seed, supervision);
    } catch (...) {
      errors[m] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace f2scil

#include "f2scil/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>

#include "f2scil/checkpoint.hpp"
#include "f2scil/error.hpp"
#include "f2scil/optimizer.hpp"

namespace f2scil {

using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

bool uses_generator(Method m) { return m != Method::finetune; }
bool uses_cswa(Method m) { return m == Method::sdd || m == Method::sdd_cswa_only; }
ReplaySupervision supervision_of(Method m) {
  return m == Method::baseline_kd || m == Method::sdd_cswa_only ? ReplaySupervision::distillation
                                                                  : ReplaySupervision::noise_robust;
}

ClassifierShape classifier_shape(const ExperimentConfig& cfg, std::size_t input_dim) {
  ClassifierShape s;
  s.input_dim = input_dim;
  s.hidden = cfg.model.hidden;
  s.base_classes = cfg.schedule.base_classes;
  s.bn_momentum = cfg.model.bn_momentum;
  s.bn_epsilon = cfg.model.bn_epsilon;
  return s;
}

// Pseudo-labels the pool with `labeler`, optionally corrupts a fraction of
// them, and banks it. Returns the fraction of pseudo labels that agree with
// the condition labels before corruption.
double bank_pool(const ExperimentConfig& cfg, const SyntheticSet& pool, const Classifier& labeler,
                 std::size_t classes_learned, std::size_t session, ReplayBuffer& buffer, json& audit) {
  SyntheticSet relabeled = relabel(pool, labeler);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < relabeled.size(); ++i) agree += relabeled.pseudo_labels[i] == relabeled.condition_labels[i];
  const std::size_t flipped = corrupt_labels(relabeled, cfg.replay.label_noise, classes_learned,
                                             derive_seed(cfg.seed, SeedTag::replay_noise, {session}));
  buffer.add(relabeled);
  const double agreement = relabeled.size() ? static_cast<double>(agree) / static_cast<double>(relabeled.size()) : 0.0;
  audit["pool_size"] = relabeled.size();
  audit["relabel_agreement"] = agreement;
  audit["labels_flipped"] = flipped;
  audit["buffer_size"] = buffer.size();
  return agreement;
}

double teacher_confidence(const SyntheticSet& pool, std::span<const Classifier* const> teachers, std::size_t session) {
  Graph g;
  Tensor p = ad::softmax(teacher_logits(g, g.constant(pool.samples), teachers, session)).value();
  const std::size_t begin = teachers.front()->session_columns(session).begin;
  double s = 0.0;
  for (std::size_t r = 0; r < pool.size(); ++r)
    s += p.at(r, static_cast<std::size_t>(pool.condition_labels[r]) - begin);
  return pool.size() ? s / static_cast<double>(pool.size()) : 0.0;
}

json tensor_rows(const Tensor& t) {
  json rows = json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) rows.push_back(std::vector<double>(t.row(r).begin(), t.row(r).end()));
  return rows;
}

}  // namespace

SessionMetrics evaluate_session(const Classifier& model, const SessionData& data) {
  SessionMetrics m;
  m.session = data.session;
  m.classes_seen = data.classes.end;
  m.test_size = data.test.size();
  require(model.classes_seen() >= data.classes.end, "model does not cover the session's classes");
  const auto pred = model.predict_labels(data.test.samples);
  std::vector<double> hits(m.classes_seen, 0.0), seen(m.classes_seen, 0.0);
  double old_hits = 0, old_n = 0, new_hits = 0, new_n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int y = data.test.labels[i];
    const bool ok = pred[i] == y;
    const auto c = static_cast<std::size_t>(y);
    hits.at(c) += ok;
    seen.at(c) += 1;
    if (c < data.classes.begin) {
      old_hits += ok;
      old_n += 1;
    } else {
      new_hits += ok;
      new_n += 1;
    }
  }
  require(old_n + new_n > 0, "session test set is empty");
  m.overall = (old_hits + new_hits) / (old_n + new_n);
  if (data.session > 0 && old_n > 0) m.old_acc = old_hits / old_n;
  m.new_acc = new_n > 0 ? new_hits / new_n : 0.0;
  for (std::size_t c = 0; c < m.classes_seen; ++c) m.per_class.push_back(seen[c] > 0 ? hits[c] / seen[c] : 0.0);
  return m;
}

ScheduledData prepare_data(const ExperimentConfig& cfg) {
  LabeledDataset train, test;
  if (cfg.data.source == "csv") {
    train = read_csv_dataset(cfg.data.train_csv);
    test = read_csv_dataset(cfg.data.test_csv);
    const std::size_t classes = std::max(train.class_count, test.class_count);
    train.class_count = test.class_count = classes;
  } else {
    auto split = make_blobs(cfg.data.blobs, derive_seed(cfg.seed, SeedTag::dataset));
    train = std::move(split.train);
    test = std::move(split.test);
  }
  return build_schedule(train, test, cfg.schedule, derive_seed(cfg.seed, SeedTag::schedule));
}

Classifier train_base_model(const ExperimentConfig& cfg, const LabeledDataset& train) {
  Classifier model(classifier_shape(cfg, train.dim()), derive_seed(cfg.seed, SeedTag::base_model));
  Optimizer opt(OptimizerConfig::sgd(cfg.base.lr, cfg.base.momentum).all_groups(cfg.base.lr));
  Rng rng(derive_seed(cfg.seed, SeedTag::base_training));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.base.epochs; ++epoch) {
    if (std::find(cfg.base.milestones.begin(), cfg.base.milestones.end(), epoch) != cfg.base.milestones.end())
      opt.scale_rates(cfg.base.gamma);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.base.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.base.batch_size);
      if (stop - start < 2) continue;  // batch norm needs two rows
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      std::vector<int> y;
      for (auto i : idx) y.push_back(train.labels[i]);
      Graph g;
      Var loss = cross_entropy(model.forward(g, g.constant(train.samples.gather_rows(idx)), BnMode::train), y);
      zero_grads(model.parameters());
      g.backward(loss);
      g.accumulate_parameter_grads();
      opt.step(model.parameters());
    }
  }
  return model;
}

RunState run_base_session(const ExperimentConfig& cfg, const ScheduledData& data, SessionMetrics& metrics) {
  const SessionData& s0 = data.sessions.front();
  RunState state{train_base_model(cfg, s0.train), ReplayBuffer(cfg.replay.capacity_per_class)};
  metrics = evaluate_session(state.global, s0);
  if (uses_generator(cfg.method) && cfg.schedule.sessions > 0) {
    const Classifier* teachers[] = {&state.global};
    auto gen = train_generator_session(teachers, 0, data.lower, data.upper, cfg.generator,
                                       derive_seed(cfg.seed, SeedTag::generator, {0, 0}));
    metrics.audit["teacher_confidence"] = teacher_confidence(gen.pool, teachers, 0);
    bank_pool(cfg, gen.pool, state.global, s0.classes.end, 0, state.buffer, metrics.audit);
    state.buffer.check_covers(s0.classes.end);
  }
  return state;
}

void run_incremental_session(const ExperimentConfig& cfg, const ScheduledData& data, std::size_t t, RunState& state,
                             SessionMetrics& metrics) {
  require(t >= 1 && t < data.sessions.size(), "incremental session index out of range");
  const SessionData& sd = data.sessions[t];
  const std::size_t old_classes = sd.classes.begin;
  const bool replay = uses_generator(cfg.method);
  if (replay) state.buffer.check_covers(old_classes);

  const Classifier previous = state.global;
  Classifier expanded = previous;
  expanded.expand_head(sd.classes.width(), derive_seed(cfg.seed, SeedTag::head_expansion, {t}));

  const auto shards = dirichlet_partition(sd.train, cfg.federation.clients, cfg.federation.alpha,
                                          derive_seed(cfg.seed, SeedTag::partition, {t}));
  std::vector<LabeledDataset> shard_data;
  std::vector<std::size_t> counts;
  for (const auto& s : shards) {
    shard_data.push_back(sd.train.subset(s.indices));
    counts.push_back(s.sample_count());
  }

  ClientConfig ccfg = cfg.client;
  if (!replay) ccfg.weights.k = 0.0;

  json rounds = json::array();
  Classifier global = expanded;
  SyntheticSet final_pool;
  for (std::size_t r = 0; r < cfg.federation.rounds; ++r) {
    json audit;
    std::vector<ClientJob> jobs;
    for (std::size_t m = 0; m < shards.size(); ++m)
      jobs.push_back({&shard_data[m], derive_seed(cfg.seed, SeedTag::client, {t, r, m})});
    auto updates = train_clients(global, &previous, jobs, replay ? &state.buffer : nullptr, ccfg,
                                 supervision_of(cfg.method));
    std::vector<const Classifier*> locals;
    for (const auto& u : updates) locals.push_back(&u.model);
    audit["client_counts"] = counts;
    audit["count_weights"] = count_weights(counts);

    if (replay) {
      auto gen = train_generator_session(locals, t, data.lower, data.upper, cfg.generator,
                                         derive_seed(cfg.seed, SeedTag::generator, {t, r}));
      audit["teacher_confidence"] = teacher_confidence(gen.pool, locals, t);
      final_pool = std::move(gen.pool);
    }

    if (uses_cswa(cfg.method)) {
      const AccuracyMatrix acc = accuracy_matrix(locals, final_pool, sd.classes);
      const Tensor weights = cswa_weights(acc, cfg.cswa_mode);
      ParamBlocks blocks = aggregate_old(locals, counts);
      for (const auto& name : {Classifier::head_weight_name(t), Classifier::head_bias_name(t)}) {
        std::vector<Tensor> parts;
        for (const Classifier* m : locals) parts.push_back(m->parameter(name).value);
        blocks[name] = cswa_aggregate_new(parts, weights);
      }
      global = assemble_global(expanded, blocks);
      audit["accuracy_matrix"] = tensor_rows(acc.values);
      audit["cswa_weights"] = tensor_rows(weights);
    } else {
      global = fedavg_full(locals, counts);
    }
    rounds.push_back(std::move(audit));
  }
  state.global = std::move(global);
  metrics = evaluate_session(state.global, sd);
  metrics.audit["rounds"] = std::move(rounds);
  if (replay) {
    bank_pool(cfg, final_pool, state.global, sd.classes.end, t, state.buffer, metrics.audit);
  }
}

json metrics_record(const ExperimentConfig& cfg, const std::string& id, const SessionMetrics& m) {
  return json{{"run_id", id},
              {"method", to_string(cfg.method)},
              {"seed", cfg.seed},
              {"alpha", cfg.federation.alpha},
              {"session", m.session},
              {"classes_seen", m.classes_seen},
              {"test_size", m.test_size},
              {"overall", m.overall},
              {"old", m.old_acc ? json(*m.old_acc) : json(nullptr)},
              {"new", m.new_acc},
              {"per_class", m.per_class},
              {"audit", m.audit}};
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& run_dir) {
  ExperimentResult result;
  result.run_id = run_id(cfg);
  std::ofstream metrics_out, timings_out;
  if (run_dir) {
    std::filesystem::create_directories(*run_dir);
    json manifest{{"tool", "f2scil"},
                  {"version", kToolVersion},
                  {"run_id", result.run_id},
                  {"config", to_json(cfg)},
                  {"seeds",
                   {{"master", cfg.seed},
                    {"dataset", derive_seed(cfg.seed, SeedTag::dataset)},
                    {"schedule", derive_seed(cfg.seed, SeedTag::schedule)},
                    {"base_model", derive_seed(cfg.seed, SeedTag::base_model)},
                    {"base_training", derive_seed(cfg.seed, SeedTag::base_training)}}},
                  {"artifacts",
                   {{"metrics", "metrics.jsonl"},
                    {"timings", "timings.jsonl"},
                    {"summary", "summary.csv"},
                    {"checkpoints", cfg.output.checkpoints ? json("checkpoints") : json(nullptr)},
                    {"synthetic", cfg.output.export_synthetic ? json("synthetic") : json(nullptr)}}}};
    std::ofstream(*run_dir / "manifest.json") << manifest.dump(2) << '\n';
    metrics_out.open(*run_dir / "metrics.jsonl", std::ios::trunc);
    timings_out.open(*run_dir / "timings.jsonl", std::ios::trunc);
    if (cfg.output.checkpoints) std::filesystem::create_directories(*run_dir / "checkpoints");
    if (cfg.output.export_synthetic) std::filesystem::create_directories(*run_dir / "synthetic");
  }

  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  const ScheduledData data = prepare_data(cfg);

  auto emit = [&](SessionMetrics& m, const RunState& state, clock::time_point start) {
    m.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
    result.sessions.push_back(m);
    if (!run_dir) return;
    metrics_out << metrics_record(cfg, result.run_id, m).dump() << '\n';
    metrics_out.flush();
    timings_out << json{{"run_id", result.run_id}, {"session", m.session}, {"wall_seconds", m.wall_seconds}}.dump()
                << '\n';
    timings_out.flush();
    if (cfg.output.checkpoints)
      save_classifier(*run_dir / "checkpoints" / ("session_" + std::to_string(m.session) + ".ckpt"), state.global);
    if (cfg.output.export_synthetic && !state.buffer.empty())
      write_buffer_csv(*run_dir / "synthetic" / ("buffer_session_" + std::to_string(m.session) + ".csv"),
                       state.buffer);
  };

  SessionMetrics m0;
  RunState state = run_base_session(cfg, data, m0);
  emit(m0, state, t0);
  for (std::size_t t = 1; t < data.sessions.size(); ++t) {
    t0 = clock::now();
    SessionMetrics m;
    run_incremental_session(cfg, data, t, state, m);
    emit(m, state, t0);
  }

  double sum = 0.0;
  for (const auto& m : result.sessions) sum += m.overall;
  result.final_acc = result.sessions.back().overall;
  result.average_acc = sum / static_cast<double>(result.sessions.size());

  if (run_dir) {
    std::ofstream csv(*run_dir / "summary.csv", std::ios::trunc);
    csv.precision(17);
    csv << "run_id,method,seed,alpha";
    for (const auto& m : result.sessions) csv << ",session_" << m.session;
    csv << ",final,average\n";
    csv << result.run_id << ',' << to_string(cfg.method) << ',' << cfg.seed << ',' << cfg.federation.alpha;
    for (const auto& m : result.sessions) csv << ',' << m.overall;
    csv << ',' << result.final_acc << ',' << result.average_acc << '\n';
  }
  return result;
}

}  // namespace f2scil

#include "f2scil/generator_lab.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "f2scil/error.hpp"
#include "f2scil/optimizer.hpp"

namespace f2scil {

void ReplayBuffer::add(const SyntheticSet& relabeled) {
  require(relabeled.pseudo_labels.size() == relabeled.size(), "replay buffer accepts relabeled pools only");
  require(relabeled.samples.rows() == relabeled.size(), "synthetic pool rows and labels disagree");
  for (std::size_t i = 0; i < relabeled.size(); ++i) {
    const auto row = relabeled.samples.row(i);
    auto& q = entries_[relabeled.pseudo_labels[i]];
    q.push_back({std::vector<double>(row.begin(), row.end()), relabeled.pseudo_labels[i],
                 relabeled.condition_labels[i], relabeled.session});
    if (q.size() > capacity_) q.pop_front();
  }
}

std::size_t ReplayBuffer::size() const {
  std::size_t n = 0;
  for (const auto& [c, q] : entries_) n += q.size();
  return n;
}

std::vector<int> ReplayBuffer::classes() const {
  std::vector<int> out;
  for (const auto& [c, q] : entries_) out.push_back(c);
  return out;
}

void ReplayBuffer::check_covers(std::size_t classes_learned) const {
  std::vector<int> expected(classes_learned);
  std::iota(expected.begin(), expected.end(), 0);
  const auto have = classes();
  if (have == expected) return;
  std::string missing;
  for (int c : expected)
    if (!entries_.count(c)) missing += " " + std::to_string(c);
  throw BufferGapError("replay buffer holds " + std::to_string(have.size()) + " classes, expected " +
                       std::to_string(classes_learned) + (missing.empty() ? "" : "; missing:" + missing));
}

ReplayBatch ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (entries_.empty()) throw EmptyBufferError("replay requested from an empty buffer");
  std::vector<const std::deque<ReplayEntry>*> queues;
  for (const auto& [c, q] : entries_) queues.push_back(&q);
  const std::size_t k = queues.size();
  std::vector<std::size_t> per_class(k, n / k);
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < n % k; ++i) ++per_class[order[i]];

  const std::size_t d = queues.front()->front().sample.size();
  ReplayBatch out{Tensor({n, d}), {}};
  out.labels.reserve(n);
  std::size_t row = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uniform_int_distribution<std::size_t> pick(0, queues[c]->size() - 1);
    for (std::size_t j = 0; j < per_class[c]; ++j, ++row) {
      const ReplayEntry& e = (*queues[c])[pick(rng)];
      std::copy(e.sample.begin(), e.sample.end(), out.samples.row(row).begin());
      out.labels.push_back(e.pseudo_label);
    }
  }
  return out;
}

ReplayBatch replay_sample(const ReplayBuffer& buffer, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return buffer.sample(n, rng);
}

Var teacher_logits(Graph& g, Var x, std::span<const Classifier* const> teachers, std::size_t session,
                   std::vector<std::vector<BnLayerStats>>* bn_trace) {
  require(!teachers.empty(), "teacher ensemble is empty");
  const ColumnRange cols = teachers.front()->session_columns(session);
  Var total;
  for (const Classifier* t : teachers) {
    require(t->session_columns(session) == cols, "teachers disagree on the session column range");
    std::vector<BnLayerStats>* trace = nullptr;
    if (bn_trace) trace = &bn_trace->emplace_back();
    Var slice = logits_slice(t->forward_frozen(g, x, BnMode::eval, trace), *t, session);
    total = total.valid() ? ad::add(total, slice) : slice;
  }
  if (teachers.size() == 1) return total;
  return ad::scale(total, 1.0 / static_cast<double>(teachers.size()));
}

Tensor teacher_logits(const Tensor& x, std::span<const Classifier* const> teachers, std::size_t session) {
  Graph g;
  return teacher_logits(g, g.constant(x), teachers, session).value();
}

GeneratorSession train_generator_session(std::span<const Classifier* const> teachers, std::size_t session,
                                         const Tensor& lower, const Tensor& upper, const GenLabConfig& cfg,
                                         std::uint64_t seed, const Classifier* student_init) {
  require(!teachers.empty(), "generator training needs at least one teacher");
  require(cfg.epochs >= 1 && cfg.rounds >= 1 && cfg.batch_size >= 2, "generator lab counts must be >= 1, batch >= 2");
  const Classifier& ref = *teachers.front();
  const ColumnRange classes = ref.session_columns(session);

  GeneratorShape gs;
  gs.noise_dim = cfg.noise_dim;
  gs.class_begin = classes.begin;
  gs.class_count = classes.width();
  gs.hidden = cfg.hidden;
  gs.output_dim = ref.input_dim();
  gs.lower = lower;
  gs.upper = upper;

  GeneratorSession out;
  out.generator = ConditionalGenerator(gs, derive_seed(seed, SeedTag::generator, {0}));
  if (student_init) {
    out.student = *student_init;
  } else {
    ClassifierShape ss = ref.shape();
    ss.base_classes = classes.width();
    out.student = Classifier(ss, derive_seed(seed, SeedTag::student));
  }
  require(out.student.classes_seen() == classes.width() && out.student.input_dim() == ref.input_dim(),
          "student must match the session's class count and input dim");
  out.pool.session = session;

  Optimizer gen_opt(OptimizerConfig::adam(cfg.generator_lr));
  Optimizer stu_opt(OptimizerConfig::sgd(cfg.student_lr, cfg.student_momentum));
  Rng rng(derive_seed(seed, SeedTag::generator, {1}));
  std::uniform_int_distribution<int> pick_label(static_cast<int>(classes.begin), static_cast<int>(classes.end) - 1);
  const LossWeights& w = cfg.weights;
  const double inv_rounds = 1.0 / static_cast<double>(cfg.rounds);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    GenEpochTrace tr;
    for (std::size_t round = 0; round < cfg.rounds; ++round) {
      Tensor z = normal_tensor({cfg.batch_size, cfg.noise_dim}, rng);
      std::vector<int> labels(cfg.batch_size);
      for (int& l : labels) l = pick_label(rng);
      std::vector<int> local(labels);
      for (int& l : local) l -= static_cast<int>(classes.begin);

      // Generator step on the four-term objective.
      Graph g;
      Var x = out.generator.forward(g, z, labels, BnMode::train);
      std::vector<std::vector<BnLayerStats>> bn;
      Var t_logits = teacher_logits(g, x, teachers, session, &bn);
      GeneratorLossTerms terms{generator_fidelity_loss(t_logits, local), generator_entropy_loss(t_logits),
                               bn_stat_loss(bn), {}};
      if (w.lambda4 != 0.0) {
        Var s_logits = out.student.forward_frozen(g, x, BnMode::train);
        terms.transfer = transferability_loss(t_logits, s_logits, w.temperature);
      } else {
        terms.transfer = g.constant(Tensor::scalar(0.0));
      }
      Var loss = generator_total_loss(terms, w);
      zero_grads(out.generator.parameters());
      g.backward(loss);
      g.accumulate_parameter_grads();
      gen_opt.step(out.generator.parameters());

      tr.fidelity += terms.fidelity.value().item() * inv_rounds;
      tr.entropy += terms.entropy.value().item() * inv_rounds;
      tr.bn += terms.bn.value().item() * inv_rounds;
      tr.transfer += terms.transfer.value().item() * inv_rounds;

      // Student step on the detached batch.
      const Tensor x_fixed = x.value();
      if (cfg.train_student) {
        Graph gs2;
        Var xs = gs2.constant(x_fixed);
        Var target = gs2.constant(t_logits.value());
        Var s_logits = out.student.forward(gs2, xs, BnMode::train);
        Var s_loss = student_loss(target, s_logits, w.temperature);
        zero_grads(out.student.parameters());
        gs2.backward(s_loss);
        gs2.accumulate_parameter_grads();
        stu_opt.step(out.student.parameters());
        tr.student += s_loss.value().item() * inv_rounds;
      }

      if (round + 1 == cfg.rounds) {
        out.pool.samples = out.pool.samples.empty() ? x_fixed : concat_rows(out.pool.samples, x_fixed);
        out.pool.condition_labels.insert(out.pool.condition_labels.end(), labels.begin(), labels.end());
      }
    }
    out.trace.push_back(tr);
  }
  return out;
}

SyntheticSet relabel(const SyntheticSet& pool, const Classifier& labeler) {
  SyntheticSet out = pool;
  const ColumnRange cols = labeler.session_columns(pool.session);
  Graph g;
  Tensor slice = logits_slice(labeler.forward_frozen(g, g.constant(pool.samples), BnMode::eval), labeler,
                              pool.session)
                     .value();
  out.pseudo_labels.resize(pool.size());
  for (std::size_t r = 0; r < pool.size(); ++r) {
    const auto row = slice.row(r);
    out.pseudo_labels[r] = static_cast<int>(cols.begin + (std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return out;
}

std::size_t corrupt_labels(SyntheticSet& pool, double fraction, std::size_t classes, std::uint64_t seed) {
  require(fraction >= 0.0 && fraction <= 1.0, "label noise fraction must lie in [0, 1]");
  require(pool.pseudo_labels.size() == pool.size(), "corrupt_labels needs a relabeled pool");
  if (fraction == 0.0 || classes < 2) return 0;
  Rng rng(seed);
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto flips = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pool.size())));
  std::uniform_int_distribution<int> other(0, static_cast<int>(classes) - 2);
  for (std::size_t i = 0; i < flips; ++i) {
    int& y = pool.pseudo_labels[idx[i]];
    const int draw = other(rng);
    y = draw >= y ? draw + 1 : draw;
  }
  return flips;
}

namespace {

void write_row(std::ofstream& f, std::span<const double> x, int cond, int pseudo, std::size_t session) {
  for (double v : x) f << v << ',';
  f << cond << ',' << pseudo << ',' << session << '\n';
}

std::ofstream open_csv(const std::filesystem::path& path, std::size_t dim) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.precision(17);
  for (std::size_t i = 0; i < dim; ++i) f << 'x' << i << ',';
  f << "condition_label,pseudo_label,session\n";
  return f;
}

}  // namespace

void write_synthetic_csv(const std::filesystem::path& path, const SyntheticSet& set) {
  auto f = open_csv(path, set.samples.cols());
  for (std::size_t r = 0; r < set.size(); ++r)
    write_row(f, set.samples.row(r), set.condition_labels[r],
              set.pseudo_labels.empty() ? -1 : set.pseudo_labels[r], set.session);
}

void write_buffer_csv(const std::filesystem::path& path, const ReplayBuffer& buffer) {
  const std::size_t d = buffer.empty() ? 0 : buffer.entries().begin()->second.front().sample.size();
  auto f = open_csv(path, d);
  for (const auto& [c, q] : buffer.entries())
    for (const auto& e : q) write_row(f, e.sample, e.condition_label, e.pseudo_label, e.session);
}

}  // namespace f2scil

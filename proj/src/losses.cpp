#include "f2scil/losses.hpp"

#include <algorithm>

#include "f2scil/error.hpp"

namespace f2scil {
namespace {

void check_labels(const Var& x, std::span<const int> labels, const char* op) {
  require(x.value().rank() == 2, std::string(op) + " expects a (batch, classes) matrix");
  require(x.value().rows() == labels.size(), std::string(op) + ": one label per row required");
  require(x.value().rows() > 0, std::string(op) + " on an empty batch");
}

Var weighted(Var term, double w) { return ad::scale(term, w); }

}  // namespace

Var cross_entropy(Var logits, std::span<const int> labels) {
  check_labels(logits, labels, "cross_entropy");
  Graph& g = logits.graph();
  Var picked = ad::mul(ad::log_softmax(logits), g.constant(one_hot(labels, logits.value().cols())));
  return ad::neg(ad::scale(ad::sum(picked), 1.0 / static_cast<double>(labels.size())));
}

Var reverse_cross_entropy(Var probs, std::span<const int> labels, double log_zero) {
  check_labels(probs, labels, "reverse_cross_entropy");
  Graph& g = probs.graph();
  // log(y*) is 0 on the labeled class and log_zero elsewhere.
  Tensor log_target = one_hot(labels, probs.value().cols());
  for (double& v : log_target.data()) v = v > 0.5 ? 0.0 : log_zero;
  Var s = ad::sum(ad::mul(probs, g.constant(std::move(log_target))));
  return ad::neg(ad::scale(s, 1.0 / static_cast<double>(labels.size())));
}

Var noise_robust_loss(Var logits, std::span<const int> pseudo_labels, double alpha, double beta, double log_zero) {
  Var ce = weighted(cross_entropy(logits, pseudo_labels), alpha);
  if (beta == 0.0) return ce;
  return ad::add(ce, weighted(reverse_cross_entropy(ad::softmax(logits), pseudo_labels, log_zero), beta));
}

Var noise_robust_loss_old_entries(Var logits, std::span<const int> pseudo_labels, std::size_t old_classes,
                                  double alpha, double beta, double log_zero) {
  check_labels(logits, pseudo_labels, "noise_robust_loss_old_entries");
  require(old_classes >= 1 && old_classes <= logits.value().cols(), "old class count outside the logit columns");
  for (int y : pseudo_labels) require(y >= 0 && static_cast<std::size_t>(y) < old_classes, "pseudo label outside the old classes");
  Graph& g = logits.graph();
  Var logp = ad::slice_cols(ad::log_softmax(logits), 0, old_classes);
  Var picked = ad::mul(logp, g.constant(one_hot(pseudo_labels, old_classes)));
  Var ce = ad::neg(ad::scale(ad::sum(picked), 1.0 / static_cast<double>(pseudo_labels.size())));
  Var loss = weighted(ce, alpha);
  if (beta == 0.0) return loss;
  Var p = ad::slice_cols(ad::softmax(logits), 0, old_classes);
  return ad::add(loss, weighted(reverse_cross_entropy(p, pseudo_labels, log_zero), beta));
}

Var client_loss(Var new_logits, std::span<const int> new_labels, Var replay_logits,
                std::span<const int> replay_pseudo_labels, const LossWeights& w) {
  require(!new_labels.empty(), "client_loss needs a nonempty batch of new-class samples");
  Var loss = cross_entropy(new_logits, new_labels);
  if (!replay_logits.valid() || replay_pseudo_labels.empty() || w.k == 0.0) return loss;
  Var old = noise_robust_loss(replay_logits, replay_pseudo_labels, w.alpha, w.beta, w.rce_log_zero);
  return ad::add(loss, weighted(old, w.k));
}

Var info_entropy(Var probs) {
  require(probs.value().rank() == 2 && probs.value().rows() > 0, "info_entropy expects a nonempty matrix");
  const double c = static_cast<double>(probs.value().cols());
  const double b = static_cast<double>(probs.value().rows());
  Var plogp = ad::sum(ad::mul(probs, ad::log(probs)));
  return ad::scale(plogp, -1.0 / (c * b));
}

Var generator_fidelity_loss(Var teacher_logits, std::span<const int> labels) {
  return cross_entropy(teacher_logits, labels);
}

Var generator_entropy_loss(Var teacher_logits) { return ad::neg(info_entropy(ad::softmax(teacher_logits))); }

Var bn_stat_loss(std::span<const std::vector<BnLayerStats>> per_teacher) {
  require(!per_teacher.empty(), "bn_stat_loss needs at least one teacher");
  const std::size_t layers = per_teacher.front().size();
  require(layers > 0, "bn_stat_loss: teacher reports no batch norm layers");
  Graph& g = per_teacher.front().front().batch_mean.graph();
  Var total;
  for (const auto& teacher : per_teacher) {
    require(teacher.size() == layers, "bn_stat_loss: teachers report different numbers of layers");
    for (const auto& l : teacher) {
      Var dm = ad::l2_norm(ad::sub(l.batch_mean, g.constant(l.running_mean)));
      Var dv = ad::l2_norm(ad::sub(l.batch_var, g.constant(l.running_var)));
      Var term = ad::add(dm, dv);
      total = total.valid() ? ad::add(total, term) : term;
    }
  }
  return ad::scale(total, 1.0 / static_cast<double>(per_teacher.size()));
}

Var kl_rows(Var teacher_logits, Var student_logits, double temperature) {
  require(teacher_logits.shape() == student_logits.shape(), "KL between logits of different shapes");
  require(temperature > 0.0, "KL temperature must be positive");
  const double inv_t = 1.0 / temperature;
  Var lt = ad::log_softmax(ad::scale(teacher_logits, inv_t));
  Var ls = ad::log_softmax(ad::scale(student_logits, inv_t));
  Var pt = ad::softmax(ad::scale(teacher_logits, inv_t));
  return ad::row_sum(ad::mul(pt, ad::sub(lt, ls)));
}

Tensor disagreement_gate(const Tensor& teacher_logits, const Tensor& student_logits) {
  require(teacher_logits.shape() == student_logits.shape(), "gate over logits of different shapes");
  Tensor gate({teacher_logits.rows()});
  for (std::size_t r = 0; r < teacher_logits.rows(); ++r) {
    const auto t = teacher_logits.row(r);
    const auto s = student_logits.row(r);
    const auto at = std::max_element(t.begin(), t.end()) - t.begin();
    const auto as = std::max_element(s.begin(), s.end()) - s.begin();
    gate[r] = at != as ? 1.0 : 0.0;
  }
  return gate;
}

Var transferability_loss(Var teacher_logits, Var student_logits, double temperature) {
  Graph& g = teacher_logits.graph();
  Var kl = kl_rows(teacher_logits, student_logits, temperature);
  Var gated = ad::mul(kl, g.constant(disagreement_gate(teacher_logits.value(), student_logits.value())));
  return ad::neg(ad::mean(gated));
}

Var student_loss(Var teacher_logits, Var student_logits, double temperature) {
  return ad::mean(kl_rows(teacher_logits, student_logits, temperature));
}

Var distillation_loss_old_entries(Var teacher_logits, Var student_logits, double temperature) {
  const std::size_t c = teacher_logits.value().cols();
  require(teacher_logits.value().rows() == student_logits.value().rows() && student_logits.value().cols() >= c,
          "distillation needs matching rows and a student with at least the teacher's columns");
  require(teacher_logits.value().rows() > 0, "distillation on an empty batch");
  const double inv_t = 1.0 / temperature;
  Var logp = ad::log_softmax(ad::scale(teacher_logits, inv_t));
  Var p = ad::softmax(ad::scale(teacher_logits, inv_t));
  Var logq = ad::slice_cols(ad::log_softmax(ad::scale(student_logits, inv_t)), 0, c);
  Var s = ad::sum(ad::mul(p, ad::sub(logp, logq)));
  return ad::scale(s, 1.0 / static_cast<double>(teacher_logits.value().rows()));
}

Var generator_total_loss(const GeneratorLossTerms& terms, const LossWeights& w) {
  Var total = weighted(terms.fidelity, w.lambda1);
  total = ad::add(total, weighted(terms.entropy, w.lambda2));
  total = ad::add(total, weighted(terms.bn, w.lambda3));
  return ad::add(total, weighted(terms.transfer, w.lambda4));
}

}  // namespace f2scil

#pragma once

#include <span>
#include <vector>

#include "f2scil/autodiff.hpp"
#include "f2scil/batchnorm.hpp"

namespace f2scil {

struct LossWeights {
  double alpha = 1.0;  // CE weight inside the noise-robust replay loss
  double beta = 1.0;   // RCE weight inside the noise-robust replay loss
  double k = 1.0;      // replay loss weight in the client objective
  double lambda1 = 1.0;  // generator fidelity
  double lambda2 = 1.0;  // generator entropy
  double lambda3 = 1.0;  // BN statistic alignment
  double lambda4 = 1.0;  // teacher/student transferability
  double rce_log_zero = -4.0;  // value substituted for log(0) in RCE
  double temperature = 1.0;    // softmax temperature of the KL terms
};

/// Mean over the batch of -log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const int> labels);

/// Mean over the batch of -Σ_i p_i log(y*_i) with log(0) := log_zero.
/// For rows of probs that sum to 1 this is -log_zero * (1 - p_label).
Var reverse_cross_entropy(Var probs, std::span<const int> labels, double log_zero = -4.0);

/// alpha * CE + beta * RCE on the distribution softmax(logits).
Var noise_robust_loss(Var logits, std::span<const int> pseudo_labels, double alpha, double beta,
                      double log_zero = -4.0);

/// CE(new) + k * noise_robust(replay). replay_logits may be an invalid Var
/// (empty buffer); new_labels must not be empty.
/// Noise-robust loss restricted to the first `old_classes` entries of the
/// full distribution softmax(logits), with no renormalization: CE reads
/// −log p_y, RCE sums only over the old entries.
Var noise_robust_loss_old_entries(Var logits, std::span<const int> pseudo_labels, std::size_t old_classes,
                                  double alpha, double beta, double log_zero = -4.0);

Var client_loss(Var new_logits, std::span<const int> new_labels, Var replay_logits,
                std::span<const int> replay_pseudo_labels, const LossWeights& w);

/// Batch mean of -(1/c) Σ_i p_i log p_i, c = number of columns.
Var info_entropy(Var probs);

Var generator_fidelity_loss(Var teacher_logits, std::span<const int> labels);
Var generator_entropy_loss(Var teacher_logits);

/// (1/M) Σ_m Σ_l (‖μ_l - μ_{m,l}‖ + ‖σ²_l - σ²_{m,l}‖) over per-teacher layer
/// lists. Every teacher must report the same number of layers.
Var bn_stat_loss(std::span<const std::vector<BnLayerStats>> per_teacher);

/// Per-row KL(softmax(teacher/T) ‖ softmax(student/T)), shape (b).
Var kl_rows(Var teacher_logits, Var student_logits, double temperature = 1.0);

/// Argmax disagreement gate ω per row (1 where the predicted classes differ).
Tensor disagreement_gate(const Tensor& teacher_logits, const Tensor& student_logits);

/// Batch mean of -ω·KL(teacher ‖ student). Always ≤ 0.
Var transferability_loss(Var teacher_logits, Var student_logits, double temperature = 1.0);

/// Batch mean of KL(teacher ‖ student). Also the distillation loss of the
/// baseline client trainer.
Var student_loss(Var teacher_logits, Var student_logits, double temperature = 1.0);

/// Batch-mean Σ_i p_i (log p_i − log q_i) with p = softmax(teacher/T) over
/// the teacher's c columns and q the first c entries of the student's full
/// softmax(student/T). Equals student_loss when the student has c columns.
Var distillation_loss_old_entries(Var teacher_logits, Var student_logits, double temperature = 1.0);

struct GeneratorLossTerms {
  Var fidelity;
  Var entropy;
  Var bn;
  Var transfer;
};

Var generator_total_loss(const GeneratorLossTerms& terms, const LossWeights& w);

}  // namespace f2scil

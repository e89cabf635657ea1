#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "f2scil/batchnorm.hpp"
#include "f2scil/losses.hpp"
#include "f2scil/models.hpp"

namespace f2scil::testing {
namespace {

double evaluate(const LossBuilder& loss, const std::vector<Tensor>& inputs) {
  Graph g;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.variable(t));
  return loss(g, leaves).value().item();
}

double norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

Tensor uni(Tensor::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return uniform_tensor(std::move(shape), rng, lo, hi);
}

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<int> labels(Rng& rng, std::size_t n, std::size_t classes) {
  std::vector<int> out(n);
  std::uniform_int_distribution<int> d(0, static_cast<int>(classes) - 1);
  for (int& l : out) l = d(rng);
  return out;
}

// Labels travel through the sampler as a tensor of integral doubles so the
// case stays a pure function of its inputs; the builder never perturbs it.
std::vector<int> as_labels(const Tensor& t) {
  std::vector<int> out;
  for (double v : t.data()) out.push_back(static_cast<int>(std::lround(v)));
  return out;
}

Tensor label_tensor(const std::vector<int>& l) {
  std::vector<double> d(l.begin(), l.end());
  return Tensor::vector(d);
}

// A random weighting so that a matrix-valued op reduces to a scalar with a
// nontrivial gradient.
Var project(Graph& g, Var x, std::uint64_t salt) {
  Rng rng(0xabcdefULL + salt + x.value().size());
  Tensor w = uniform_tensor(x.value().shape(), rng, -1.0, 1.0);
  return ad::sum(ad::mul(x, g.constant(std::move(w))));
}

}  // namespace

double gradient_relative_error(const LossBuilder& loss, const std::vector<Tensor>& inputs, double step) {
  Graph g;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.variable(t));
  Var out = loss(g, leaves);
  g.backward(out);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = g.grad(leaves[k]);
    Tensor numeric = Tensor::zeros_like(inputs[k]);
    std::vector<Tensor> probe = inputs;
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      probe[k][i] = x0 + step;
      const double fp = evaluate(loss, probe);
      probe[k][i] = x0 - step;
      const double fm = evaluate(loss, probe);
      probe[k][i] = x0;
      numeric[i] = (fp - fm) / (2.0 * step);
    }
    Tensor diff = analytic;
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= numeric[i];
    const double denom = std::max({norm(analytic), norm(numeric), 1e-6});
    worst = std::max(worst, norm(diff) / denom);
  }
  return worst;
}

std::vector<GradCheckCase> gradient_cases() {
  std::vector<GradCheckCase> cases;
  auto add = [&](std::string name, InputSampler s, LossBuilder l) {
    cases.push_back({std::move(name), std::move(s), std::move(l)});
  };

  // --- primitive ops
  add("matmul",
      [](Rng& r) {
        const auto m = dim(r, 1, 4), k = dim(r, 1, 4), n = dim(r, 1, 4);
        return std::vector<Tensor>{uni({m, k}, r), uni({k, n}, r)};
      },
      [](Graph& g, const std::vector<Var>& v) { return project(g, ad::matmul(v[0], v[1]), 1); });
  add("add_row",
      [](Rng& r) {
        const auto b = dim(r, 1, 4), n = dim(r, 1, 5);
        return std::vector<Tensor>{uni({b, n}, r), uni({n}, r)};
      },
      [](Graph& g, const std::vector<Var>& v) { return project(g, ad::add_row(v[0], v[1]), 2); });
  add("mul_row",
      [](Rng& r) {
        const auto b = dim(r, 1, 4), n = dim(r, 1, 5);
        return std::vector<Tensor>{uni({b, n}, r), uni({n}, r)};
      },
      [](Graph& g, const std::vector<Var>& v) { return project(g, ad::mul_row(v[0], v[1]), 3); });
  auto pair_sampler = [](Rng& r) {
    const auto b = dim(r, 1, 4), n = dim(r, 1, 5);
    return std::vector<Tensor>{uni({b, n}, r), uni({b, n}, r)};
  };
  add("add", pair_sampler, [](Graph& g, const std::vector<Var>& v) { return project(g, ad::add(v[0], v[1]), 4); });
  add("sub", pair_sampler, [](Graph& g, const std::vector<Var>& v) { return project(g, ad::sub(v[0], v[1]), 5); });
  add("mul", pair_sampler, [](Graph& g, const std::vector<Var>& v) { return project(g, ad::mul(v[0], v[1]), 6); });
  auto one_sampler = [](Rng& r) { return std::vector<Tensor>{uni({dim(r, 1, 4), dim(r, 1, 5)}, r)}; };
  add("scale", one_sampler, [](Graph& g, const std::vector<Var>& v) { return project(g, ad::scale(v[0], -1.7), 7); });
  add("relu", one_sampler, [](Graph& g, const std::vector<Var>& v) { return project(g, ad::relu(v[0]), 8); });
  add("tanh", one_sampler, [](Graph& g, const std::vector<Var>& v) { return project(g, ad::tanh(v[0]), 9); });
  add("softmax", one_sampler, [](Graph& g, const std::vector<Var>& v) { return project(g, ad::softmax(v[0]), 10); });
  add("log_softmax", one_sampler,
      [](Graph& g, const std::vector<Var>& v) { return project(g, ad::log_softmax(v[0]), 11); });
  add("log",
      [](Rng& r) { return std::vector<Tensor>{uni({dim(r, 1, 4), dim(r, 1, 5)}, r, 0.1, 1.0)}; },
      [](Graph& g, const std::vector<Var>& v) { return project(g, ad::log(v[0]), 12); });
  add("concat_cols",
      [](Rng& r) {
        const auto b = dim(r, 1, 4);
        return std::vector<Tensor>{uni({b, dim(r, 1, 3)}, r), uni({b, dim(r, 1, 3)}, r), uni({b, dim(r, 1, 3)}, r)};
      },
      [](Graph& g, const std::vector<Var>& v) { return project(g, ad::concat_cols(v), 13); });
  add("slice_cols",
      [](Rng& r) { return std::vector<Tensor>{uni({dim(r, 1, 4), dim(r, 3, 6)}, r)}; },
      [](Graph& g, const std::vector<Var>& v) { return project(g, ad::slice_cols(v[0], 1, 3), 14); });
  add("concat_rows",
      [](Rng& r) {
        const auto n = dim(r, 1, 4);
        return std::vector<Tensor>{uni({dim(r, 1, 3), n}, r), uni({dim(r, 1, 3), n}, r)};
      },
      [](Graph& g, const std::vector<Var>& v) { return project(g, ad::concat_rows(v[0], v[1]), 15); });
  add("slice_rows",
      [](Rng& r) { return std::vector<Tensor>{uni({dim(r, 3, 6), dim(r, 1, 4)}, r)}; },
      [](Graph& g, const std::vector<Var>& v) { return project(g, ad::slice_rows(v[0], 1, 3), 16); });
  add("sum", one_sampler, [](Graph&, const std::vector<Var>& v) { return ad::sum(ad::mul(v[0], v[0])); });
  add("mean", one_sampler, [](Graph&, const std::vector<Var>& v) { return ad::mean(ad::mul(v[0], v[0])); });
  add("row_sum", one_sampler, [](Graph& g, const std::vector<Var>& v) { return project(g, ad::row_sum(v[0]), 17); });
  add("column_mean",
      [](Rng& r) { return std::vector<Tensor>{uni({dim(r, 2, 5), dim(r, 1, 4)}, r)}; },
      [](Graph& g, const std::vector<Var>& v) { return project(g, ad::column_mean(v[0]), 18); });
  add("column_var",
      [](Rng& r) { return std::vector<Tensor>{uni({dim(r, 2, 5), dim(r, 1, 4)}, r)}; },
      [](Graph& g, const std::vector<Var>& v) { return project(g, ad::column_var(v[0]), 19); });
  add("l2_norm", one_sampler, [](Graph&, const std::vector<Var>& v) { return ad::l2_norm(v[0]); });
  add("batch_norm_train",
      [](Rng& r) {
        const auto b = dim(r, 3, 6), n = dim(r, 1, 4);
        return std::vector<Tensor>{uni({b, n}, r), uni({n}, r, 0.5, 1.5), uni({n}, r)};
      },
      [](Graph& g, const std::vector<Var>& v) {
        return project(g, ad::batch_norm_train(v[0], v[1], v[2], 1e-5).y, 20);
      });
  add("batch_norm_eval",
      [](Rng& r) {
        const auto b = dim(r, 1, 5), n = dim(r, 1, 4);
        return std::vector<Tensor>{uni({b, n}, r), uni({n}, r, 0.5, 1.5), uni({n}, r)};
      },
      [](Graph& g, const std::vector<Var>& v) {
        const std::size_t n = v[1].value().size();
        Tensor rm({n}, 0.1), rv({n}, 0.7);
        return project(g, ad::batch_norm_eval(v[0], v[1], v[2], rm, rv, 1e-5), 21);
      });
  add("batchnorm_forward(train) chain",
      [](Rng& r) {
        const auto b = dim(r, 3, 6), n = dim(r, 2, 4);
        return std::vector<Tensor>{uni({b, 3}, r), uni({3, n}, r), uni({n}, r, 0.5, 1.5), uni({n}, r)};
      },
      [](Graph& g, const std::vector<Var>& v) {
        auto st = BatchNormState::fresh(v[2].value().size());
        Var h = batchnorm_forward(ad::matmul(v[0], v[1]), v[2], v[3], st, BnMode::train).y;
        return project(g, ad::tanh(ad::relu(h)), 22);
      });

  // --- losses
  auto logits_labels = [](Rng& r) {
    const auto b = dim(r, 1, 5), c = dim(r, 2, 5);
    return std::vector<Tensor>{uni({b, c}, r, -2.0, 2.0), label_tensor(labels(r, b, c))};
  };
  add("cross_entropy", logits_labels,
      [](Graph&, const std::vector<Var>& v) { return cross_entropy(v[0], as_labels(v[1].value())); });
  add("reverse_cross_entropy", logits_labels, [](Graph&, const std::vector<Var>& v) {
    return reverse_cross_entropy(ad::softmax(v[0]), as_labels(v[1].value()), -4.0);
  });
  add("noise_robust_loss", logits_labels, [](Graph&, const std::vector<Var>& v) {
    return noise_robust_loss(v[0], as_labels(v[1].value()), 0.7, 1.3, -4.0);
  });
  // the last two columns play the session's new classes
  add("noise_robust_loss_old_entries",
      [](Rng& r) {
        const auto b = dim(r, 1, 5), c = dim(r, 3, 6);
        return std::vector<Tensor>{uni({b, c}, r, -2.0, 2.0), label_tensor(labels(r, b, c - 2))};
      },
      [](Graph&, const std::vector<Var>& v) {
        return noise_robust_loss_old_entries(v[0], as_labels(v[1].value()), v[0].value().cols() - 2, 0.7, 1.3,
                                             -4.0);
      });
  add("distillation_loss_old_entries",
      [](Rng& r) {
        const auto b = dim(r, 1, 5), o = dim(r, 2, 4), c = o + dim(r, 1, 3);
        return std::vector<Tensor>{uni({b, o}, r, -2.0, 2.0), uni({b, c}, r, -2.0, 2.0)};
      },
      [](Graph&, const std::vector<Var>& v) { return distillation_loss_old_entries(v[0], v[1], 1.5); });
  add("client_loss",
      [](Rng& r) {
        const auto b = dim(r, 1, 4), br = dim(r, 1, 4), c = dim(r, 3, 6);
        return std::vector<Tensor>{uni({b, c}, r, -2.0, 2.0), label_tensor(labels(r, b, c)),
                                   uni({br, c}, r, -2.0, 2.0), label_tensor(labels(r, br, c - 1))};
      },
      [](Graph&, const std::vector<Var>& v) {
        LossWeights w;
        w.k = 0.5;
        return client_loss(v[0], as_labels(v[1].value()), v[2], as_labels(v[3].value()), w);
      });
  add("info_entropy", one_sampler, [](Graph&, const std::vector<Var>& v) { return info_entropy(ad::softmax(v[0])); });
  add("generator_fidelity_loss", logits_labels, [](Graph&, const std::vector<Var>& v) {
    return generator_fidelity_loss(v[0], as_labels(v[1].value()));
  });
  add("generator_entropy_loss", one_sampler,
      [](Graph&, const std::vector<Var>& v) { return generator_entropy_loss(v[0]); });
  add("bn_stat_loss",
      [](Rng& r) {
        const auto b = dim(r, 2, 5);
        return std::vector<Tensor>{uni({b, 3}, r), uni({b, 2}, r), uni({b, 3}, r), uni({b, 2}, r)};
      },
      [](Graph&, const std::vector<Var>& v) {
        std::vector<std::vector<BnLayerStats>> teachers(2);
        for (std::size_t m = 0; m < 2; ++m)
          for (std::size_t l = 0; l < 2; ++l) {
            const Var& x = v[2 * m + l];
            const std::size_t n = x.value().cols();
            teachers[m].push_back({ad::column_mean(x), ad::column_var(x), Tensor({n}, 0.3 * (m + 1.0)),
                                   Tensor({n}, 0.5 + 0.2 * l)});
          }
        return bn_stat_loss(teachers);
      });
  auto two_logits = [](Rng& r) {
    const auto b = dim(r, 1, 5), c = dim(r, 2, 4);
    return std::vector<Tensor>{uni({b, c}, r, -2.0, 2.0), uni({b, c}, r, -2.0, 2.0)};
  };
  add("transferability_loss", two_logits,
      [](Graph&, const std::vector<Var>& v) { return transferability_loss(v[0], v[1], 1.0); });
  add("student_loss", two_logits, [](Graph&, const std::vector<Var>& v) { return student_loss(v[0], v[1], 1.0); });
  add("student_loss(T=2)", two_logits,
      [](Graph&, const std::vector<Var>& v) { return student_loss(v[0], v[1], 2.0); });
  add("generator_total_loss",
      [](Rng& r) {
        const auto b = dim(r, 2, 5), c = dim(r, 2, 4);
        return std::vector<Tensor>{uni({b, 3}, r), uni({3, c}, r), uni({3, c}, r), label_tensor(labels(r, b, c))};
      },
      [](Graph&, const std::vector<Var>& v) {
        // x̃ feeds a "teacher" and a "student" linear map.
        Var teacher = ad::matmul(v[0], v[1]);
        Var student = ad::matmul(v[0], v[2]);
        std::vector<std::vector<BnLayerStats>> bn(1);
        bn[0].push_back({ad::column_mean(v[0]), ad::column_var(v[0]), Tensor({3}, 0.1), Tensor({3}, 0.4)});
        LossWeights w;
        w.lambda1 = 10.0;
        w.lambda2 = 0.1;
        GeneratorLossTerms terms{generator_fidelity_loss(teacher, as_labels(v[3].value())),
                                 generator_entropy_loss(teacher), bn_stat_loss(bn),
                                 transferability_loss(teacher, student)};
        return generator_total_loss(terms, w);
      });
  add("classifier forward + CE",
      [](Rng& r) {
        const auto b = dim(r, 3, 5);
        return std::vector<Tensor>{uni({b, 4}, r), label_tensor(labels(r, b, 5))};
      },
      [](Graph& g, const std::vector<Var>& v) {
        ClassifierShape s;
        s.input_dim = 4;
        s.hidden = {5, 3};
        s.base_classes = 3;
        static const Classifier proto = [&] {
          Classifier c(s, 99);
          c.expand_head(2, 100);
          return c;
        }();
        Classifier m = proto;
        Var logits = m.forward(g, v[0], BnMode::train);
        return cross_entropy(logits, as_labels(v[1].value()));
      });
  return cases;
}

}  // namespace f2scil::testing

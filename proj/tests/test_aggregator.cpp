#include <doctest.h>

#include "aggregation_oracle.hpp"
#include "f2scil/error.hpp"

using namespace f2scil;
using namespace f2scil::testing;

namespace {

// Every parameter set to `v`.
Classifier filled(double v, std::size_t c = 2) {
  ClassifierShape s;
  s.input_dim = 2;
  s.hidden = {3};
  s.base_classes = 2;
  Classifier m(s, 1);
  m.expand_head(c, 2);
  for (auto& p : m.parameters()) p.value.fill(v);
  return m;
}

AccuracyMatrix acc_of(std::size_t M, std::size_t c, std::vector<double> v) {
  return AccuracyMatrix{Tensor::matrix(M, c, std::move(v)), {}, ColumnRange{0, c}};
}

// Separating model from the relabel tests: logits = relu(x) scaled.
Classifier separating_model() {
  ClassifierShape s;
  s.input_dim = 2;
  s.hidden = {2};
  s.base_classes = 2;
  Classifier m(s, 5);
  const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  m.parameter("backbone.fc0.weight").value = eye;
  m.parameter("backbone.fc0.bias").value.fill(0.0);
  m.parameter(Classifier::head_weight_name(0)).value = eye;
  m.parameter(Classifier::head_bias_name(0)).value.fill(0.0);
  return m;
}

}  // namespace

TEST_CASE("count weights") {
  CHECK(count_weights(std::vector<std::size_t>{2, 3}) == std::vector<double>{0.4, 0.6});
  CHECK(count_weights(std::vector<std::size_t>{0, 0, 0, 0}) == std::vector<double>{0.25, 0.25, 0.25, 0.25});
}

TEST_CASE("aggregate_old hand examples") {
  Classifier a = filled(1.0), b = filled(2.0);
  const Classifier* ab[] = {&a, &b};
  ParamBlocks r = aggregate_old(ab, std::vector<std::size_t>{2, 3});
  CHECK(r.count(Classifier::head_weight_name(1)) == 0);
  CHECK(r.count(Classifier::head_weight_name(0)) == 1);
  CHECK(r.count("backbone.fc0_bn.running_var") == 1);
  for (const auto& [name, t] : r)
    for (double v : t.data()) CHECK(v == doctest::Approx(1.6).epsilon(1e-15));

  ParamBlocks solo = aggregate_old(ab, std::vector<std::size_t>{0, 7});
  for (const auto& [name, t] : solo)
    for (double v : t.data()) CHECK(v == 2.0);

  Classifier c = filled(3.0);
  const Classifier* same[] = {&c, &c, &c};
  for (const auto& [name, t] : aggregate_old(same, std::vector<std::size_t>{1, 4, 2}))
    for (double v : t.data()) CHECK(v == doctest::Approx(3.0).epsilon(1e-15));

  CHECK_THROWS_AS(aggregate_old(ab, std::vector<std::size_t>{1}), ContractViolation);
}

TEST_CASE("fedavg_full hand examples") {
  Classifier a = filled(2.0), b = filled(6.0);
  const Classifier* ab[] = {&a, &b};
  const Classifier avg = fedavg_full(ab, std::vector<std::size_t>{1, 3});
  for (const auto& p : avg.parameters())
    for (double v : p.value.data()) CHECK(v == 5.0);
  Classifier pos = filled(0.7), neg = filled(-0.7);
  const Classifier* pn[] = {&pos, &neg};
  const Classifier zero = fedavg_full(pn, std::vector<std::size_t>{4, 4});
  for (const auto& p : zero.parameters())
    for (double v : p.value.data()) CHECK(v == 0.0);
}

TEST_CASE("class accuracy on synthetic samples") {
  Classifier m = separating_model();
  SyntheticSet pool;
  pool.samples = Tensor::matrix(6, 2, {1, 0, 2, 0, 0, 1, 0, 3, 1, 0, 0, 1});
  SUBCASE("all correct") {
    pool.condition_labels = {0, 0, 1, 1, 0, 1};
    CHECK(eval_class_accuracy(m, pool, {0, 2}) == std::vector<double>{1.0, 1.0});
  }
  SUBCASE("all wrong") {
    pool.condition_labels = {1, 1, 0, 0, 1, 0};
    CHECK(eval_class_accuracy(m, pool, {0, 2}) == std::vector<double>{0.0, 0.0});
  }
  SUBCASE("half of one class") {
    // class 0 rows: two predicted 0, two predicted 1; class 1 rows: all predicted 1
    pool.samples = Tensor::matrix(6, 2, {1, 0, 2, 0, 0, 1, 0, 3, 0, 1, 0, 1});
    pool.condition_labels = {0, 0, 0, 0, 1, 1};
    CHECK(eval_class_accuracy(m, pool, {0, 2}) == std::vector<double>{0.5, 1.0});
  }
  SUBCASE("missing class") {
    pool.condition_labels.assign(6, 0);
    CHECK_THROWS_AS(eval_class_accuracy(m, pool, {0, 2}), ContractViolation);
  }
  SUBCASE("matrix rows per client") {
    pool.condition_labels = {0, 0, 1, 1, 0, 1};
    const Classifier* two[] = {&m, &m};
    AccuracyMatrix a = accuracy_matrix(two, pool, {0, 2});
    CHECK(a.client_count() == 2);
    CHECK(a.clients == std::vector<std::size_t>{0, 1});
    for (double v : a.values.data()) CHECK(v == 1.0);
  }
}

TEST_CASE("CSWA hand examples") {
  Rng rng(3);
  const Tensor w1 = normal_tensor({4, 2}, rng), w2 = normal_tensor({4, 2}, rng);
  const Tensor blocks[] = {w1, w2};

  SUBCASE("one client with perfect accuracy is the identity") {
    const Tensor w = cswa_weights(acc_of(1, 2, {1, 1}), CswaMode::normalized);
    CHECK(cswa_aggregate_new(std::span(blocks, 1), w) == w1);
  }
  SUBCASE("disjoint accuracies pick columns") {
    const Tensor w = cswa_weights(acc_of(2, 2, {1, 0, 0, 1}), CswaMode::normalized);
    const Tensor r = cswa_aggregate_new(blocks, w);
    CHECK(max_abs_diff(r, oracle_cswa(blocks, w)) <= 1e-12);
    for (std::size_t row = 0; row < 4; ++row) {
      CHECK(r.at(row, 0) == w1.at(row, 0));
      CHECK(r.at(row, 1) == w2.at(row, 1));
    }
  }
  SUBCASE("equal accuracies give the mean") {
    const Tensor w = cswa_weights(acc_of(2, 2, {0.3, 0.8, 0.3, 0.8}), CswaMode::normalized);
    const Tensor r = cswa_aggregate_new(blocks, w);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(std::abs(r[i] - 0.5 * (w1[i] + w2[i])) <= 1e-12);
  }
  SUBCASE("paper_exact scales each column by its accuracy sum") {
    const AccuracyMatrix a = acc_of(2, 2, {0.2, 0.9, 0.6, 0.5});
    const Tensor norm = cswa_aggregate_new(blocks, cswa_weights(a, CswaMode::normalized));
    const Tensor raw = cswa_aggregate_new(blocks, cswa_weights(a, CswaMode::paper_exact));
    const double sums[] = {0.8, 1.4};
    for (std::size_t row = 0; row < 4; ++row)
      for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(raw.at(row, i) - sums[i] * norm.at(row, i)) <= 1e-12);
  }
  SUBCASE("zero columns fall back to uniform") {
    const Tensor w = cswa_weights(acc_of(2, 2, {0, 1, 0, 0}), CswaMode::normalized);
    CHECK(w.at(0, 0) == 0.5);
    CHECK(w.at(1, 0) == 0.5);
    CHECK(w.at(0, 1) == 1.0);
    CHECK(w.at(1, 1) == 0.0);
  }
  SUBCASE("contract errors") {
    CHECK_THROWS_AS(cswa_aggregate_new(blocks, Tensor({3, 2}, 0.5)), ContractViolation);
    CHECK_THROWS_AS(cswa_aggregate_new(blocks, Tensor({2, 3}, 0.5)), ContractViolation);
    CHECK_THROWS_AS(cswa_weights(acc_of(1, 2, {1.5, 0}), CswaMode::normalized), ContractViolation);
  }
}

TEST_CASE("assemble_global") {
  Rng rng(8);
  Classifier a = random_client(5, 3, 2, rng);
  ParamBlocks own;
  for (const auto& p : a.parameters()) own[p.name] = p.value;
  Classifier back = assemble_global(a, own);
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    CHECK(back.parameters()[i].value == a.parameters()[i].value);

  // changing the new block leaves the old logit columns alone
  ParamBlocks moved = own;
  for (double& v : moved[Classifier::head_weight_name(1)].data()) v += 1.0;
  for (double& v : moved[Classifier::head_bias_name(1)].data()) v -= 2.0;
  const Tensor x = normal_tensor({4, 3}, rng);
  const Tensor l1 = back.predict(x), l2 = assemble_global(a, moved).predict(x);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(l1.at(r, c) == l2.at(r, c));

  ParamBlocks missing = own;
  missing.erase(Classifier::head_bias_name(0));
  CHECK_THROWS_AS(assemble_global(a, missing), ContractViolation);
  ParamBlocks reshaped = own;
  reshaped[Classifier::head_bias_name(0)] = Tensor({4});
  CHECK_THROWS_AS(assemble_global(a, reshaped), ContractViolation);
}

TEST_CASE("aggregation matches the dense oracle on random instances") {
  const OracleReport r = run_aggregation_oracle(20261015, 200);
  CHECK(r.aggregate_old <= 1e-12);
  CHECK(r.cswa_normalized <= 1e-12);
  CHECK(r.cswa_paper_exact <= 1e-12);
  CHECK(r.assemble <= 1e-12);
  CHECK(r.fedavg <= 1e-12);
}

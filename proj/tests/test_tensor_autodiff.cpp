#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "f2scil/autodiff.hpp"
#include "f2scil/batchnorm.hpp"
#include "f2scil/checkpoint.hpp"
#include "f2scil/error.hpp"
#include "f2scil/kernels.hpp"
#include "f2scil/models.hpp"
#include "f2scil/optimizer.hpp"
#include "f2scil/rng.hpp"
#include "gradcheck.hpp"

using namespace f2scil;

TEST_CASE("grad of sum and self dot") {
  Parameter p{"p", Tensor::vector({0.3, -1.0, 2.0}), std::nullopt, ParamGroup::backbone};
  Graph g;
  Var loss = ad::sum(g.parameter(p));
  Parameter* ps[] = {&p};
  auto grads = grad(loss, ps);
  CHECK(grads.at("p") == Tensor::vector({1.0, 1.0, 1.0}));

  Parameter q{"q", Tensor::vector({1.0, 2.0}), std::nullopt, ParamGroup::backbone};
  Graph g2;
  Var v = g2.parameter(q);
  Parameter* qs[] = {&q};
  CHECK(grad(ad::sum(ad::mul(v, v)), qs).at("q") == Tensor::vector({2.0, 4.0}));
}

TEST_CASE("disconnected parameter gets a zero gradient") {
  Parameter a{"a", Tensor::vector({1.0, 2.0}), std::nullopt, ParamGroup::backbone};
  Parameter b{"b", Tensor::vector({5.0}), std::nullopt, ParamGroup::backbone};
  Graph g;
  Var va = g.parameter(a);
  g.parameter(b);
  Parameter* ps[] = {&a, &b};
  auto grads = grad(ad::sum(va), ps);
  CHECK(grads.at("b") == Tensor::vector({0.0}));
}

TEST_CASE("non-scalar loss is a contract violation") {
  Graph g;
  Var x = g.variable(Tensor::vector({1.0, 2.0}));
  CHECK_THROWS_AS(g.backward(x), ContractViolation);
}

TEST_CASE("finite-difference check of every op and loss") {
  Rng rng(20261015);
  for (const auto& c : testing::gradient_cases()) {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) worst = std::max(worst, testing::gradient_relative_error(c.loss, c.inputs(rng)));
    INFO(c.name << " worst relative error " << worst);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("log clamps at the floor") {
  Graph g;
  Var y = ad::log(g.constant(Tensor::vector({0.0, -3.0, 1.0})));
  CHECK(y.value()[0] == doctest::Approx(std::log(1e-12)));
  CHECK(y.value()[1] == doctest::Approx(std::log(1e-12)));
  CHECK(y.value().all_finite());
}

TEST_CASE("softmax rows are nonnegative and sum to one") {
  Rng rng(7);
  Tensor x = uniform_tensor({9, 6}, rng, -30.0, 30.0);
  Graph g;
  Tensor p = ad::softmax(g.constant(x)).value();
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (double v : p.row(r)) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("batch norm") {
  SUBCASE("standardized input with identity affine is unchanged") {
    Tensor x = Tensor::matrix(4, 2, {1, -1, -1, 1, 1, 1, -1, -1});
    Graph g;
    auto st = BatchNormState::fresh(2, 0.1, 1e-12);
    auto out = batchnorm_forward(g.constant(x), g.constant(Tensor({2}, 1.0)), g.constant(Tensor({2}, 0.0)), st,
                                 BnMode::train);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(out.y.value()[i] - x[i]) <= 1e-6);
  }
  SUBCASE("train output is standardized and running mean follows the EMA") {
    Rng rng(3);
    Tensor x = uniform_tensor({16, 3}, rng, -2.0, 5.0);
    Graph g;
    auto st = BatchNormState::fresh(3);
    st.running_mean = Tensor::vector({0.5, -0.5, 2.0});
    const Tensor old = st.running_mean;
    auto out = batchnorm_forward(g.constant(x), g.constant(Tensor({3}, 1.0)), g.constant(Tensor({3}, 0.0)), st,
                                 BnMode::train);
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0, v = 0.0, bm = 0.0;
      for (std::size_t r = 0; r < 16; ++r) {
        m += out.y.value().at(r, c) / 16.0;
        bm += x.at(r, c) / 16.0;
      }
      for (std::size_t r = 0; r < 16; ++r) v += std::pow(out.y.value().at(r, c) - m, 2) / 16.0;
      CHECK(std::abs(m) <= 1e-6);
      // eps = 1e-5 shrinks the variance slightly; 1 - var ≈ eps / batch_var.
      CHECK(std::abs(v - 1.0) <= 1e-5 / out.batch_var[c] + 1e-9);
      CHECK(st.running_mean[c] == doctest::Approx(0.9 * old[c] + 0.1 * bm).epsilon(1e-14));
    }
  }
  SUBCASE("batch of one in train mode is degenerate") {
    Graph g;
    auto st = BatchNormState::fresh(2);
    CHECK_THROWS_AS(batchnorm_forward(g.constant(Tensor({1, 2}, 1.0)), g.constant(Tensor({2}, 1.0)),
                                      g.constant(Tensor({2}, 0.0)), st, BnMode::train),
                    DegenerateBatchError);
    CHECK_NOTHROW(batchnorm_forward(g.constant(Tensor({1, 2}, 1.0)), g.constant(Tensor({2}, 1.0)),
                                    g.constant(Tensor({2}, 0.0)), st, BnMode::eval));
  }
}

TEST_CASE("optimizer") {
  SUBCASE("plain sgd step") {
    std::vector<Parameter> ps{{"p", Tensor::vector({1.0}), Tensor::vector({0.5}), ParamGroup::backbone}};
    Optimizer opt(OptimizerConfig::sgd(0.1));
    opt.step(ps);
    CHECK(ps[0].value[0] == doctest::Approx(0.95).epsilon(1e-15));
  }
  SUBCASE("rate 0 leaves a group bit-identical") {
    Rng rng(1);
    std::vector<Parameter> ps{{"b", uniform_tensor({5}, rng, -1, 1), uniform_tensor({5}, rng, -1, 1),
                               ParamGroup::backbone},
                              {"h", uniform_tensor({3}, rng, -1, 1), uniform_tensor({3}, rng, -1, 1),
                               ParamGroup::head_new}};
    const Tensor before = ps[0].value;
    for (auto kind : {OptimizerKind::sgd_momentum, OptimizerKind::adam}) {
      OptimizerConfig cfg = kind == OptimizerKind::adam ? OptimizerConfig::adam(0.1) : OptimizerConfig::sgd(0.1, 0.9);
      cfg.rates[ParamGroup::backbone] = 0.0;
      Optimizer opt(cfg);
      for (int i = 0; i < 3; ++i) opt.step(ps);
      CHECK(ps[0].value == before);
    }
  }
  SUBCASE("adam first step matches the recurrence") {
    std::vector<Parameter> ps{{"p", Tensor::vector({0.3, -2.0}), Tensor::vector({0.7, -1e-3}), ParamGroup::head_new}};
    Optimizer opt(OptimizerConfig::adam(1e-3));
    opt.step(ps);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double init[] = {0.3, -2.0}, gr[] = {0.7, -1e-3};
    for (int i = 0; i < 2; ++i) {
      const double m = (1 - b1) * gr[i], v = (1 - b2) * gr[i] * gr[i];
      const double mh = m / (1 - b1), vh = v / (1 - b2);
      CHECK(std::abs(ps[0].value[i] - (init[i] - 1e-3 * mh / (std::sqrt(vh) + eps))) <= 1e-12);
    }
  }
  SUBCASE("missing gradient or rate is a contract violation") {
    std::vector<Parameter> ps{{"p", Tensor::vector({1.0}), std::nullopt, ParamGroup::backbone}};
    Optimizer opt(OptimizerConfig::sgd(0.1));
    CHECK_THROWS_AS(opt.step(ps), ContractViolation);
    ps[0].grad = Tensor::vector({1.0});
    ps[0].group = ParamGroup::head_old;
    OptimizerConfig cfg;
    cfg.rates[ParamGroup::backbone] = 0.1;
    Optimizer opt2(cfg);
    CHECK_THROWS_AS(opt2.step(ps), ContractViolation);
  }
}

TEST_CASE("identical seeds give bit-identical training") {
  auto train = [] {
    ClassifierShape s;
    s.input_dim = 6;
    s.hidden = {8, 8};
    s.base_classes = 4;
    Classifier m(s, 11);
    Rng rng(5);
    Optimizer opt(OptimizerConfig::sgd(0.05, 0.9));
    for (int step = 0; step < 10; ++step) {
      Graph g;
      Tensor x = normal_tensor({8, 6}, rng);
      Var logits = m.forward(g, g.constant(x), BnMode::train);
      Var loss = ad::mean(ad::mul(logits, logits));
      zero_grads(m.parameters());
      g.backward(loss);
      g.accumulate_parameter_grads();
      opt.step(m.parameters());
    }
    return m.parameters();
  };
  auto a = train(), b = train();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].value == b[i].value);
}

TEST_CASE("parallel kernels equal the serial reference bit for bit") {
  Rng rng(9);
  for (std::size_t n : {3u, 64u, 200u}) {
    Tensor a = uniform_tensor({n, n + 1}, rng, -1, 1), b = uniform_tensor({n + 1, n}, rng, -1, 1);
    Tensor c1({n, n}), c2({n, n});
    kernels::gemm(a, b, c1);
    kernels::reference::gemm(a, b, c2);
    CHECK(c1 == c2);
    Tensor at = uniform_tensor({n + 1, n}, rng, -1, 1);
    c1 = Tensor({n, n});
    c2 = c1;
    kernels::gemm_at_b(at, b.slice_rows(0, n + 1), c1);
    kernels::reference::gemm_at_b(at, b.slice_rows(0, n + 1), c2);
    CHECK(c1 == c2);
    kernels::gemm_a_bt(a, a, c1);
    kernels::reference::gemm_a_bt(a, a, c2);
    CHECK(c1 == c2);
    c1 = Tensor({n, n + 1});
    c2 = c1;
    kernels::softmax_rows(a, c1);
    kernels::reference::softmax_rows(a, c2);
    CHECK(c1 == c2);
    std::vector<double> m1(n + 1), v1(n + 1), m2(n + 1), v2(n + 1);
    kernels::column_moments(a, m1, v1);
    kernels::reference::column_moments(a, m2, v2);
    CHECK(m1 == m2);
    CHECK(v1 == v2);
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  ClassifierShape s;
  s.input_dim = 5;
  s.hidden = {7, 6};
  s.base_classes = 3;
  Classifier m(s, 21);
  m.expand_head(2, 22);
  m.parameter("backbone.fc0_bn.running_var").value[0] = 0.1 + 1e-17;
  const auto path = std::filesystem::temp_directory_path() / "f2scil_ckpt_test.bin";
  save_classifier(path, m);
  Classifier back = load_classifier(path);
  std::filesystem::remove(path);
  REQUIRE(back.parameters().size() == m.parameters().size());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    CHECK(back.parameters()[i].name == m.parameters()[i].name);
    CHECK(back.parameters()[i].group == m.parameters()[i].group);
    CHECK(back.parameters()[i].value == m.parameters()[i].value);
  }
  CHECK(back.session_map() == m.session_map());
  Rng rng(2);
  Tensor x = normal_tensor({4, 5}, rng);
  CHECK(back.predict(x) == m.predict(x));
}

#include "f2scil/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "f2scil/error.hpp"
#include "f2scil/kernels.hpp"

namespace f2scil {

const Tensor& Var::value() const { return graph_->value(*this); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Graph::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, false, {}, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, true, false, {}, {}, &p});
  return Var(this, nodes_.size() - 1);
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id_];
  return n.has_grad ? n.grad : Tensor::zeros_like(n.value);
}

Tensor& Graph::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor::zeros_like(n.value);
    n.has_grad = true;
  }
  return n.grad;
}

Var Graph::record(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& v : inputs) {
    require(v.graph_ == this, "op mixes nodes from different graphs");
    n.inputs.push_back(v.id_);
    n.requires_grad = n.requires_grad || nodes_[v.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var loss) {
  require(loss.graph_ == this, "backward on a node of another graph");
  require(nodes_[loss.id_].value.size() == 1,
          "backward needs a scalar loss, got shape " + shape_string(nodes_[loss.id_].value.shape()));
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad_ref(loss.id_)[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.requires_grad && n.backward) n.backward(*this, i);
  }
}

void Graph::accumulate_parameter_grads() {
  for (auto& n : nodes_) {
    if (!n.param) continue;
    Parameter& p = *n.param;
    if (!p.grad) p.grad = Tensor::zeros_like(p.value);
    if (!n.has_grad) continue;
    auto dst = p.grad->data();
    auto src = n.grad.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

Tensor Graph::bound_grad(const Parameter& p) const {
  Tensor out = Tensor::zeros_like(p.value);
  for (const auto& n : nodes_) {
    if (n.param != &p || !n.has_grad) continue;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += n.grad[k];
  }
  return out;
}

std::map<std::string, Tensor> grad(Var loss, std::span<Parameter* const> params) {
  Graph& g = loss.graph();
  g.backward(loss);
  std::map<std::string, Tensor> out;
  for (const Parameter* p : params) out.emplace(p->name, g.bound_grad(*p));
  return out;
}

namespace ad {
namespace {

void require_matrix(const Tensor& t, const char* op) {
  require(t.rank() == 2, std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
}

void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

Tensor map_values(const Tensor& x, double (*f)(double)) {
  Tensor y = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return y;
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  require(av.cols() == bv.rows(),
          "matmul shape mismatch " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  Tensor out({av.rows(), bv.cols()});
  kernels::gemm(av, bv, out);
  return a.graph().record(std::move(out), {a, b}, [](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    const std::size_t ia = g.input(self, 0), ib = g.input(self, 1);
    if (g.requires_grad(ia)) kernels::gemm_a_bt(dy, g.value_at(ib), g.grad_ref(ia), true);
    if (g.requires_grad(ib)) kernels::gemm_at_b(g.value_at(ia), dy, g.grad_ref(ib), true);
  });
}

Var add_row(Var x, Var v) {
  const Tensor& xv = x.value();
  const Tensor& vv = v.value();
  require_matrix(xv, "add_row");
  require(vv.rank() == 1 && vv.size() == xv.cols(), "add_row vector length mismatch");
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += vv[c];
  return x.graph().record(std::move(out), {x, v}, [](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    const std::size_t ix = g.input(self, 0), iv = g.input(self, 1);
    if (g.requires_grad(ix)) add_into(g.grad_ref(ix), dy);
    if (g.requires_grad(iv)) {
      Tensor& dv = g.grad_ref(iv);
      for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t c = 0; c < dy.cols(); ++c) dv[c] += dy.at(r, c);
    }
  });
}

Var mul_row(Var x, Var v) {
  const Tensor& xv = x.value();
  const Tensor& vv = v.value();
  require_matrix(xv, "mul_row");
  require(vv.rank() == 1 && vv.size() == xv.cols(), "mul_row vector length mismatch");
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) *= vv[c];
  return x.graph().record(std::move(out), {x, v}, [](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    const std::size_t ix = g.input(self, 0), iv = g.input(self, 1);
    const Tensor& xv = g.value_at(ix);
    const Tensor& vv = g.value_at(iv);
    if (g.requires_grad(ix)) {
      Tensor& dx = g.grad_ref(ix);
      for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t c = 0; c < dy.cols(); ++c) dx.at(r, c) += dy.at(r, c) * vv[c];
    }
    if (g.requires_grad(iv)) {
      Tensor& dv = g.grad_ref(iv);
      for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t c = 0; c < dy.cols(); ++c) dv[c] += dy.at(r, c) * xv.at(r, c);
    }
  });
}

Var add(Var a, Var b) {
  require(a.shape() == b.shape(), "add shape mismatch " + shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
  Tensor out = a.value();
  add_into(out, b.value());
  return a.graph().record(std::move(out), {a, b}, [](Graph& g, std::size_t self) {
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t in = g.input(self, k);
      if (g.requires_grad(in)) add_into(g.grad_ref(in), g.out_grad(self));
    }
  });
}

Var sub(Var a, Var b) {
  require(a.shape() == b.shape(), "sub shape mismatch");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.graph().record(std::move(out), {a, b}, [](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    const std::size_t ia = g.input(self, 0), ib = g.input(self, 1);
    if (g.requires_grad(ia)) add_into(g.grad_ref(ia), dy);
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad_ref(ib);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
    }
  });
}

Var mul(Var a, Var b) {
  require(a.shape() == b.shape(), "mul shape mismatch");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.graph().record(std::move(out), {a, b}, [](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    const std::size_t ia = g.input(self, 0), ib = g.input(self, 1);
    if (g.requires_grad(ia)) {
      Tensor& da = g.grad_ref(ia);
      const Tensor& bv = g.value_at(ib);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad_ref(ib);
      const Tensor& av = g.value_at(ia);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
    }
  });
}

Var scale(Var x, double s) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= s;
  return x.graph().record(std::move(out), {x}, [s](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    Tensor& dx = g.grad_ref(g.input(self, 0));
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += s * dy[i];
  });
}

Var neg(Var x) { return scale(x, -1.0); }

Var relu(Var x) {
  Tensor out = map_values(x.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  return x.graph().record(std::move(out), {x}, [](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    const std::size_t ix = g.input(self, 0);
    const Tensor& xv = g.value_at(ix);
    Tensor& dx = g.grad_ref(ix);
    for (std::size_t i = 0; i < dy.size(); ++i)
      if (xv[i] > 0.0) dx[i] += dy[i];
  });
}

Var tanh(Var x) {
  Tensor out = map_values(x.value(), [](double v) { return std::tanh(v); });
  return x.graph().record(std::move(out), {x}, [](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    const Tensor& y = g.value_at(self);
    Tensor& dx = g.grad_ref(g.input(self, 0));
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
  });
}

Var softmax(Var x) {
  require_matrix(x.value(), "softmax");
  Tensor out = Tensor::zeros_like(x.value());
  kernels::softmax_rows(x.value(), out);
  return x.graph().record(std::move(out), {x}, [](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    const Tensor& y = g.value_at(self);
    Tensor& dx = g.grad_ref(g.input(self, 0));
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += dy.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) dx.at(r, c) += y.at(r, c) * (dy.at(r, c) - dot);
    }
  });
}

Var log_softmax(Var x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "log_softmax");
  Tensor out = Tensor::zeros_like(xv);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    const auto row = xv.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < xv.cols(); ++c) out.at(r, c) = row[c] - lse;
  }
  return x.graph().record(std::move(out), {x}, [](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    const Tensor& y = g.value_at(self);
    Tensor& dx = g.grad_ref(g.input(self, 0));
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) s += dy.at(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) dx.at(r, c) += dy.at(r, c) - std::exp(y.at(r, c)) * s;
    }
  });
}

Var log(Var x) {
  Tensor out = map_values(x.value(), [](double v) { return std::log(std::max(v, kLogFloor)); });
  return x.graph().record(std::move(out), {x}, [](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    const std::size_t ix = g.input(self, 0);
    const Tensor& xv = g.value_at(ix);
    Tensor& dx = g.grad_ref(ix);
    for (std::size_t i = 0; i < dy.size(); ++i)
      if (xv[i] > kLogFloor) dx[i] += dy[i] / xv[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_cols");
    require(p.value().rows() == rows, "concat_cols row count mismatch");
    cols += p.value().cols();
  }
  Tensor out({rows, cols});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out.at(r, off + c) = v.at(r, c);
    off += v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].graph().record(std::move(out), std::move(inputs), [n = parts.size()](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t in = g.input(self, k);
      const std::size_t w = g.value_at(in).cols();
      if (g.requires_grad(in)) {
        Tensor& dx = g.grad_ref(in);
        for (std::size_t r = 0; r < dy.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) dx.at(r, c) += dy.at(r, off + c);
      }
      off += w;
    }
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require_matrix(xv, "slice_cols");
  require(begin <= end && end <= xv.cols(), "slice_cols range out of bounds");
  Tensor out({xv.rows(), end - begin});
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) out.at(r, c - begin) = xv.at(r, c);
  return x.graph().record(std::move(out), {x}, [begin](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    Tensor& dx = g.grad_ref(g.input(self, 0));
    for (std::size_t r = 0; r < dy.rows(); ++r)
      for (std::size_t c = 0; c < dy.cols(); ++c) dx.at(r, begin + c) += dy.at(r, c);
  });
}

Var concat_rows(Var a, Var b) {
  Tensor out = f2scil::concat_rows(a.value(), b.value());
  return a.graph().record(std::move(out), {a, b}, [](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    const std::size_t ia = g.input(self, 0), ib = g.input(self, 1);
    const std::size_t na = g.value_at(ia).size();
    if (g.requires_grad(ia)) {
      Tensor& da = g.grad_ref(ia);
      for (std::size_t i = 0; i < na; ++i) da[i] += dy[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad_ref(ib);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[na + i];
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  Tensor out = x.value().slice_rows(begin, end);
  return x.graph().record(std::move(out), {x}, [begin](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    Tensor& dx = g.grad_ref(g.input(self, 0));
    const std::size_t off = begin * dy.cols();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[off + i] += dy[i];
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.graph().record(Tensor::scalar(s), {x}, [](Graph& g, std::size_t self) {
    const double d = g.out_grad(self)[0];
    for (double& v : g.grad_ref(g.input(self, 0)).data()) v += d;
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  require(n > 0, "mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var row_sum(Var x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "row_sum");
  Tensor out({xv.rows()});
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double s = 0.0;
    for (double v : xv.row(r)) s += v;
    out[r] = s;
  }
  return x.graph().record(std::move(out), {x}, [](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    Tensor& dx = g.grad_ref(g.input(self, 0));
    for (std::size_t r = 0; r < dx.rows(); ++r)
      for (std::size_t c = 0; c < dx.cols(); ++c) dx.at(r, c) += dy[r];
  });
}

Var column_mean(Var x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "column_mean");
  require(xv.rows() > 0, "column_mean of empty batch");
  Tensor mu({xv.cols()}), var({xv.cols()});
  kernels::column_moments(xv, mu.data(), var.data());
  return x.graph().record(std::move(mu), {x}, [](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    Tensor& dx = g.grad_ref(g.input(self, 0));
    const double inv = 1.0 / static_cast<double>(dx.rows());
    for (std::size_t r = 0; r < dx.rows(); ++r)
      for (std::size_t c = 0; c < dx.cols(); ++c) dx.at(r, c) += dy[c] * inv;
  });
}

Var column_var(Var x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "column_var");
  require(xv.rows() > 0, "column_var of empty batch");
  Tensor mu({xv.cols()}), var({xv.cols()});
  kernels::column_moments(xv, mu.data(), var.data());
  return x.graph().record(std::move(var), {x}, [mu = std::move(mu)](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    const std::size_t ix = g.input(self, 0);
    const Tensor& xv = g.value_at(ix);
    Tensor& dx = g.grad_ref(ix);
    const double k = 2.0 / static_cast<double>(xv.rows());
    for (std::size_t r = 0; r < xv.rows(); ++r)
      for (std::size_t c = 0; c < xv.cols(); ++c) dx.at(r, c) += dy[c] * k * (xv.at(r, c) - mu[c]);
  });
}

Var l2_norm(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v * v;
  return x.graph().record(Tensor::scalar(std::sqrt(s)), {x}, [](Graph& g, std::size_t self) {
    const double n = g.value_at(self)[0];
    if (n == 0.0) return;  // subgradient 0 at the origin
    const double d = g.out_grad(self)[0] / n;
    const std::size_t ix = g.input(self, 0);
    const Tensor& xv = g.value_at(ix);
    Tensor& dx = g.grad_ref(ix);
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += d * xv[i];
  });
}

BatchNormTrainResult batch_norm_train(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  require_matrix(xv, "batch_norm_train");
  const std::size_t b = xv.rows(), n = xv.cols();
  require(gamma.value().rank() == 1 && gamma.value().size() == n && beta.value().shape() == gamma.value().shape(),
          "batch_norm_train affine parameter shape mismatch");
  if (b < 2) throw DegenerateBatchError("batch normalization in train mode needs at least 2 rows, got " +
                                        std::to_string(b));
  Tensor mu({n}), var({n});
  kernels::column_moments(xv, mu.data(), var.data());
  Tensor inv_std({n});
  for (std::size_t c = 0; c < n; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  Tensor xhat({b, n});
  Tensor out({b, n});
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      xhat.at(r, c) = (xv.at(r, c) - mu[c]) * inv_std[c];
      out.at(r, c) = xhat.at(r, c) * gv[c] + bv[c];
    }
  Var y = x.graph().record(
      std::move(out), {x, gamma, beta}, [xhat = std::move(xhat), inv_std](Graph& g, std::size_t self) {
        const Tensor& dy = g.out_grad(self);
        const std::size_t ix = g.input(self, 0), ig = g.input(self, 1), ib = g.input(self, 2);
        const std::size_t b = dy.rows(), n = dy.cols();
        if (g.requires_grad(ig)) {
          Tensor& dg = g.grad_ref(ig);
          for (std::size_t r = 0; r < b; ++r)
            for (std::size_t c = 0; c < n; ++c) dg[c] += dy.at(r, c) * xhat.at(r, c);
        }
        if (g.requires_grad(ib)) {
          Tensor& dbt = g.grad_ref(ib);
          for (std::size_t r = 0; r < b; ++r)
            for (std::size_t c = 0; c < n; ++c) dbt[c] += dy.at(r, c);
        }
        if (g.requires_grad(ix)) {
          const Tensor& gv = g.value_at(ig);
          Tensor& dx = g.grad_ref(ix);
          const double inv_b = 1.0 / static_cast<double>(b);
          for (std::size_t c = 0; c < n; ++c) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t r = 0; r < b; ++r) {
              const double dxh = dy.at(r, c) * gv[c];
              s1 += dxh;
              s2 += dxh * xhat.at(r, c);
            }
            for (std::size_t r = 0; r < b; ++r) {
              const double dxh = dy.at(r, c) * gv[c];
              dx.at(r, c) += inv_b * inv_std[c] * (static_cast<double>(b) * dxh - s1 - xhat.at(r, c) * s2);
            }
          }
        }
      });
  return {y, std::move(mu), std::move(var)};
}

Var batch_norm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean, const Tensor& running_var, double eps) {
  const Tensor& xv = x.value();
  require_matrix(xv, "batch_norm_eval");
  const std::size_t b = xv.rows(), n = xv.cols();
  require(running_mean.size() == n && running_var.size() == n && gamma.value().size() == n &&
              beta.value().size() == n,
          "batch_norm_eval statistic shape mismatch");
  Tensor inv_std({n});
  for (std::size_t c = 0; c < n; ++c) inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);
  Tensor xhat({b, n}), out({b, n});
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      xhat.at(r, c) = (xv.at(r, c) - running_mean[c]) * inv_std[c];
      out.at(r, c) = xhat.at(r, c) * gv[c] + bv[c];
    }
  return x.graph().record(
      std::move(out), {x, gamma, beta}, [xhat = std::move(xhat), inv_std](Graph& g, std::size_t self) {
        const Tensor& dy = g.out_grad(self);
        const std::size_t ix = g.input(self, 0), ig = g.input(self, 1), ib = g.input(self, 2);
        const Tensor& gv = g.value_at(ig);
        for (std::size_t r = 0; r < dy.rows(); ++r)
          for (std::size_t c = 0; c < dy.cols(); ++c) {
            const double d = dy.at(r, c);
            if (g.requires_grad(ix)) g.grad_ref(ix).at(r, c) += d * gv[c] * inv_std[c];
            if (g.requires_grad(ig)) g.grad_ref(ig)[c] += d * xhat.at(r, c);
            if (g.requires_grad(ib)) g.grad_ref(ib)[c] += d;
          }
      });
}

}  // namespace ad
}  // namespace f2scil

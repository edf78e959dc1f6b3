#include "maepde/numkit/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "maepde/numkit/fft.hpp"

namespace maepde::numkit {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using CMapM = Eigen::Map<const RowMat>;
using Stride = Eigen::OuterStride<>;
using SMapM = Eigen::Map<RowMat, 0, Stride>;
using CSMapM = Eigen::Map<const RowMat, 0, Stride>;
using Vec = Eigen::Map<Eigen::VectorXd>;
using CVec = Eigen::Map<const Eigen::VectorXd>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw NumkitError(msg);
}

void require_same(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank(const Var& x, std::size_t r, const char* op) {
  require(x.value().rank() == r,
          std::string(op) + ": expected rank " + std::to_string(r) + ", got " + shape_str(x.shape()));
}

CMapM as_matrix(const Tensor& t) { return CMapM(t.data(), t.dim(0), t.dim(1)); }
MapM as_matrix(Tensor& t) { return MapM(t.data(), t.dim(0), t.dim(1)); }

// Parent i, or nullptr if it does not need a gradient.
Node* wants(Node& self, std::size_t i) {
  Node* p = self.parents[i].get();
  return p->requires_grad ? p : nullptr;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  out += b.value();
  return make_result("add", std::move(out), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i)
      if (Node* p = wants(self, i)) p->grad_buffer() += self.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out = a.value();
  out -= b.value();
  return make_result("sub", std::move(out), {a, b}, [](Node& self) {
    if (Node* p = wants(self, 0)) p->grad_buffer() += self.grad;
    if (Node* p = wants(self, 1)) p->grad_buffer() -= self.grad;
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result("mul", std::move(out), {a, b}, [](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    if (pa->requires_grad) {
      auto& g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value() * s;
  return make_result("scale", std::move(out), {a}, [s](Node& self) {
    if (Node* p = wants(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
    }
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.values()) v += s;
  return make_result("add_scalar", std::move(out), {a}, [](Node& self) {
    if (Node* p = wants(self, 0)) p->grad_buffer() += self.grad;
  });
}

Var gelu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
  return make_result("gelu", std::move(out), {x}, [](Node& self) {
    if (Node* p = wants(self, 0)) {
      auto& g = p->grad_buffer();
      const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = p->value[i];
        const double d = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
        g[i] += self.grad[i] * d;
      }
    }
  });
}

Var detach(const Var& x) { return Var(x.value(), false); }

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result("reshape", std::move(out), {x}, [](Node& self) {
    if (Node* p = wants(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var add_rowvec(const Var& x, const Var& v) {
  require_rank(x, 2, "add_rowvec");
  require(v.value().size() == x.dim(1), "add_rowvec: vector length does not match columns");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out = x.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += v.value()[c];
  return make_result("add_rowvec", std::move(out), {x, v}, [rows, cols](Node& self) {
    if (Node* p = wants(self, 0)) p->grad_buffer() += self.grad;
    if (Node* p = wants(self, 1)) {
      auto& g = p->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
    }
  });
}

Var mul_rowvec(const Var& x, const Var& v) {
  require_rank(x, 2, "mul_rowvec");
  require(v.value().size() == x.dim(1), "mul_rowvec: vector length does not match columns");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out = x.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] *= v.value()[c];
  return make_result("mul_rowvec", std::move(out), {x, v}, [rows, cols](Node& self) {
    Node* px = self.parents[0].get();
    Node* pv = self.parents[1].get();
    if (px->requires_grad) {
      auto& g = px->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r * cols + c] * pv->value[c];
    }
    if (pv->requires_grad) {
      auto& g = pv->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c] * px->value[r * cols + c];
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  require(a.dim(1) == b.dim(0), "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out(Shape{a.dim(0), b.dim(1)});
  as_matrix(out).noalias() = as_matrix(a.value()) * as_matrix(b.value());
  return make_result("matmul", std::move(out), {a, b}, [](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    const auto g = as_matrix(std::as_const(self.grad));
    if (pa->requires_grad) as_matrix(pa->grad_buffer()).noalias() += g * as_matrix(std::as_const(pb->value)).transpose();
    if (pb->requires_grad) as_matrix(pb->grad_buffer()).noalias() += as_matrix(std::as_const(pa->value)).transpose() * g;
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  require(x.dim(1) == w.dim(0), "linear: input width " + std::to_string(x.dim(1)) + " vs weight " + shape_str(w.shape()));
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.value().size() == w.dim(1), "linear: bias length mismatch");
  const std::size_t rows = x.dim(0), out_dim = w.dim(1);
  Tensor out(Shape{rows, out_dim});
  auto om = as_matrix(out);
  om.noalias() = as_matrix(x.value()) * as_matrix(w.value());
  if (has_bias) om.rowwise() += CVec(bias.value().data(), out_dim).transpose();
  std::vector<Var> parents{x, w};
  if (has_bias) parents.push_back(bias);
  return make_result("linear", std::move(out), std::move(parents), [has_bias, out_dim](Node& self) {
    Node* px = self.parents[0].get();
    Node* pw = self.parents[1].get();
    const auto g = as_matrix(std::as_const(self.grad));
    if (px->requires_grad) as_matrix(px->grad_buffer()).noalias() += g * as_matrix(std::as_const(pw->value)).transpose();
    if (pw->requires_grad) as_matrix(pw->grad_buffer()).noalias() += as_matrix(std::as_const(px->value)).transpose() * g;
    if (has_bias) {
      Node* pb = self.parents[2].get();
      if (pb->requires_grad) Vec(pb->grad_buffer().data(), out_dim) += g.colwise().sum().transpose();
    }
  });
}

Var softmax_rows(const Var& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * cols;
    const double m = *std::max_element(row, row + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += (row[c] = std::exp(row[c] - m));
    for (std::size_t c = 0; c < cols; ++c) row[c] /= s;
  }
  return make_result("softmax_rows", std::move(out), {x}, [rows, cols](Node& self) {
    if (Node* p = wants(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = self.value.data() + r * cols;
        const double* gy = self.grad.data() + r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += y[c] * gy[c];
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += y[c] * (gy[c] - dot);
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  require(cols >= 2, "layer_norm: normalized extent must be >= 2");
  require(gamma.value().size() == cols && beta.value().size() == cols, "layer_norm: affine parameter length mismatch");
  Tensor xhat(x.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.value().data() + r * cols;
    double m = 0.0;
    for (std::size_t c = 0; c < cols; ++c) m += row[c];
    m /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - m) * (row[c] - m);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) xhat[r * cols + c] = (row[c] - m) * inv_std[r];
  }
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out[r * cols + c] = xhat[r * cols + c] * gamma.value()[c] + beta.value()[c];
  return make_result("layer_norm", std::move(out), {x, gamma, beta},
                     [rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       Node* px = self.parents[0].get();
                       Node* pg = self.parents[1].get();
                       Node* pb = self.parents[2].get();
                       if (pg->requires_grad || pb->requires_grad) {
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < cols; ++c) {
                             const double gy = self.grad[r * cols + c];
                             if (pg->requires_grad) pg->grad_buffer()[c] += gy * xhat[r * cols + c];
                             if (pb->requires_grad) pb->grad_buffer()[c] += gy;
                           }
                       }
                       if (px->requires_grad) {
                         auto& g = px->grad_buffer();
                         const double n = static_cast<double>(cols);
                         for (std::size_t r = 0; r < rows; ++r) {
                           double m1 = 0.0, m2 = 0.0;
                           for (std::size_t c = 0; c < cols; ++c) {
                             const double dxh = self.grad[r * cols + c] * pg->value[c];
                             m1 += dxh;
                             m2 += dxh * xhat[r * cols + c];
                           }
                           m1 /= n;
                           m2 /= n;
                           for (std::size_t c = 0; c < cols; ++c) {
                             const double dxh = self.grad[r * cols + c] * pg->value[c];
                             g[r * cols + c] += inv_std[r] * (dxh - m1 - xhat[r * cols + c] * m2);
                           }
                         }
                       }
                     });
}

Var attention(const Var& q, const Var& k, const Var& v, std::size_t n_heads, const std::vector<bool>& key_valid) {
  require_rank(q, 2, "attention");
  require_rank(k, 2, "attention");
  require_rank(v, 2, "attention");
  const std::size_t tq = q.dim(0), tk = k.dim(0), d = q.dim(1);
  require(k.dim(1) == d && v.dim(1) == d && v.dim(0) == tk, "attention: dimension mismatch between q, k, v");
  require(n_heads > 0 && d % n_heads == 0, "attention: embedding dim " + std::to_string(d) +
                                               " not divisible by " + std::to_string(n_heads) + " heads");
  require(key_valid.empty() || key_valid.size() == tk, "attention: key mask length mismatch");
  const bool masked = !key_valid.empty();
  if (masked) require(std::find(key_valid.begin(), key_valid.end(), true) != key_valid.end(), "attention: all keys masked");
  const std::size_t dh = d / n_heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor out(Shape{tq, d});
  std::vector<RowMat> probs(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    CSMapM qh(q.value().data() + h * dh, tq, dh, Stride(d));
    CSMapM kh(k.value().data() + h * dh, tk, dh, Stride(d));
    CSMapM vh(v.value().data() + h * dh, tk, dh, Stride(d));
    RowMat s = (qh * kh.transpose()) * sc;
    for (std::size_t i = 0; i < tq; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < tk; ++j)
        if (!masked || key_valid[j]) m = std::max(m, s(i, j));
      double z = 0.0;
      for (std::size_t j = 0; j < tk; ++j) {
        s(i, j) = (!masked || key_valid[j]) ? std::exp(s(i, j) - m) : 0.0;
        z += s(i, j);
      }
      s.row(i) /= z;
    }
    SMapM oh(out.data() + h * dh, tq, dh, Stride(d));
    oh.noalias() = s * vh;
    probs[h] = std::move(s);
  }
  return make_result("attention", std::move(out), {q, k, v}, [=, probs = std::move(probs)](Node& self) {
    Node* pq = self.parents[0].get();
    Node* pk = self.parents[1].get();
    Node* pv = self.parents[2].get();
    for (std::size_t h = 0; h < n_heads; ++h) {
      const RowMat& p = probs[h];
      CSMapM go(self.grad.data() + h * dh, tq, dh, Stride(d));
      CSMapM qh(pq->value.data() + h * dh, tq, dh, Stride(d));
      CSMapM kh(pk->value.data() + h * dh, tk, dh, Stride(d));
      CSMapM vh(pv->value.data() + h * dh, tk, dh, Stride(d));
      if (pv->requires_grad) {
        SMapM gv(pv->grad_buffer().data() + h * dh, tk, dh, Stride(d));
        gv.noalias() += p.transpose() * go;
      }
      if (!pq->requires_grad && !pk->requires_grad) continue;
      RowMat dp = go * vh.transpose();
      RowMat ds(tq, tk);
      for (std::size_t i = 0; i < tq; ++i) {
        const double dot = p.row(i).dot(dp.row(i));
        ds.row(i) = p.row(i).cwiseProduct(dp.row(i).array().matrix() - RowMat::Constant(1, tk, dot));
      }
      ds *= sc;
      if (pq->requires_grad) {
        SMapM gq(pq->grad_buffer().data() + h * dh, tq, dh, Stride(d));
        gq.noalias() += ds * kh;
      }
      if (pk->requires_grad) {
        SMapM gk(pk->grad_buffer().data() + h * dh, tk, dh, Stride(d));
        gk.noalias() += ds.transpose() * qh;
      }
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t cols = parts[0].dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    require(p.dim(1) == cols, "concat_rows: column count mismatch");
    rows += p.dim(0);
  }
  Tensor out(Shape{rows, cols});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + off);
    off += p.value().size();
  }
  return make_result("concat_rows", std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& pp : self.parents) {
      const std::size_t n = pp->value.size();
      if (pp->requires_grad) {
        auto& g = pp->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

Var gather_rows(const Var& x, const std::vector<std::size_t>& rows) {
  require_rank(x, 2, "gather_rows");
  const std::size_t cols = x.dim(1);
  for (auto r : rows) require(r < x.dim(0), "gather_rows: row index out of range");
  Tensor out(Shape{rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x.value().data() + rows[i] * cols, cols, out.data() + i * cols);
  return make_result("gather_rows", std::move(out), {x}, [rows, cols](Node& self) {
    if (Node* p = wants(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < cols; ++c) g[rows[i] * cols + c] += self.grad[i * cols + c];
    }
  });
}

Var repeat_rows(const Var& row, std::size_t n) {
  const std::size_t cols = row.value().size();
  Tensor out(Shape{n, cols});
  for (std::size_t i = 0; i < n; ++i) std::copy_n(row.value().data(), cols, out.data() + i * cols);
  return make_result("repeat_rows", std::move(out), {row}, [n, cols](Node& self) {
    if (Node* p = wants(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[i * cols + c];
    }
  });
}

Var mean_rows(const Var& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  require(rows > 0, "mean_rows: empty input");
  Tensor out(Shape{1, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += x.value()[r * cols + c];
  out *= 1.0 / static_cast<double>(rows);
  return make_result("mean_rows", std::move(out), {x}, [rows, cols](Node& self) {
    if (Node* p = wants(self, 0)) {
      auto& g = p->grad_buffer();
      const double inv = 1.0 / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[c] * inv;
    }
  });
}

Var sum(const Var& x) {
  Tensor out = Tensor::scalar(numkit::sum(x.value()));
  return make_result("sum", std::move(out), {x}, [](Node& self) {
    if (Node* p = wants(self, 0)) {
      auto& g = p->grad_buffer();
      for (auto& v : g.values()) v += self.grad[0];
    }
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var mse(const Var& pred, const Var& target, const Tensor* weights) {
  require_same(pred, target, "mse");
  if (weights) require(weights->shape() == pred.shape(), "mse: weight shape mismatch");
  const std::size_t n = pred.value().size();
  double wsum = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights ? (*weights)[i] : 1.0;
    const double d = pred.value()[i] - target.value()[i];
    acc += w * d * d;
    wsum += w;
  }
  require(wsum > 0.0, "mse: zero total weight");
  std::vector<double> w;
  if (weights) w = weights->storage();
  return make_result("mse", Tensor::scalar(acc / wsum), {pred, target}, [w = std::move(w), wsum, n](Node& self) {
    Node* pp = self.parents[0].get();
    Node* pt = self.parents[1].get();
    const double s = 2.0 * self.grad[0] / wsum;
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = w.empty() ? 1.0 : w[i];
      const double gi = s * wi * (pp->value[i] - pt->value[i]);
      if (pp->requires_grad) pp->grad_buffer()[i] += gi;
      if (pt->requires_grad) pt->grad_buffer()[i] -= gi;
    }
  });
}

Var cross_entropy(const Var& logits, std::size_t label) {
  const std::size_t c = logits.value().size();
  require(label < c, "cross_entropy: label out of range");
  const double* z = logits.value().data();
  const double m = *std::max_element(z, z + c);
  double s = 0.0;
  for (std::size_t i = 0; i < c; ++i) s += std::exp(z[i] - m);
  const double lse = m + std::log(s);
  return make_result("cross_entropy", Tensor::scalar(lse - z[label]), {logits}, [label, lse, c](Node& self) {
    if (Node* p = wants(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < c; ++i) {
        const double pi = std::exp(p->value[i] - lse);
        g[i] += self.grad[0] * (pi - (i == label ? 1.0 : 0.0));
      }
    }
  });
}

namespace {

struct ConvGeom {
  std::size_t cin, h, w, cout, kh, kw;
};

void im2col(const double* x, const ConvGeom& g, double* cols) {
  const long ph = static_cast<long>(g.kh / 2), pw = static_cast<long>(g.kw / 2);
  const std::size_t hw = g.h * g.w;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t di = 0; di < g.kh; ++di)
      for (std::size_t dj = 0; dj < g.kw; ++dj) {
        double* row = cols + ((ci * g.kh + di) * g.kw + dj) * hw;
        for (std::size_t y = 0; y < g.h; ++y) {
          const long sy = static_cast<long>(y) + static_cast<long>(di) - ph;
          for (std::size_t xx = 0; xx < g.w; ++xx) {
            const long sx = static_cast<long>(xx) + static_cast<long>(dj) - pw;
            const bool in = sy >= 0 && sy < static_cast<long>(g.h) && sx >= 0 && sx < static_cast<long>(g.w);
            row[y * g.w + xx] = in ? x[(ci * g.h + sy) * g.w + sx] : 0.0;
          }
        }
      }
}

void col2im_add(const double* cols, const ConvGeom& g, double* x) {
  const long ph = static_cast<long>(g.kh / 2), pw = static_cast<long>(g.kw / 2);
  const std::size_t hw = g.h * g.w;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t di = 0; di < g.kh; ++di)
      for (std::size_t dj = 0; dj < g.kw; ++dj) {
        const double* row = cols + ((ci * g.kh + di) * g.kw + dj) * hw;
        for (std::size_t y = 0; y < g.h; ++y) {
          const long sy = static_cast<long>(y) + static_cast<long>(di) - ph;
          if (sy < 0 || sy >= static_cast<long>(g.h)) continue;
          for (std::size_t xx = 0; xx < g.w; ++xx) {
            const long sx = static_cast<long>(xx) + static_cast<long>(dj) - pw;
            if (sx < 0 || sx >= static_cast<long>(g.w)) continue;
            x[(ci * g.h + sy) * g.w + sx] += row[y * g.w + xx];
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& bias) {
  require_rank(x, 3, "conv2d");
  require_rank(w, 4, "conv2d");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), w.dim(0), w.dim(2), w.dim(3)};
  require(w.dim(1) == g.cin, "conv2d: weight expects " + std::to_string(w.dim(1)) + " input channels, got " +
                                 std::to_string(g.cin));
  require(g.kh % 2 == 1 && g.kw % 2 == 1, "conv2d: kernel extents must be odd");
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.value().size() == g.cout, "conv2d: bias length mismatch");
  const std::size_t hw = g.h * g.w, kdim = g.cin * g.kh * g.kw;
  const bool pointwise = g.kh == 1 && g.kw == 1;

  Tensor out(Shape{g.cout, g.h, g.w});
  MapM om(out.data(), g.cout, hw);
  CMapM wm(w.value().data(), g.cout, kdim);
  if (pointwise) {
    om.noalias() = wm * CMapM(x.value().data(), g.cin, hw);
  } else {
    RowMat cols(kdim, hw);
    im2col(x.value().data(), g, cols.data());
    om.noalias() = wm * cols;
  }
  if (has_bias) om.colwise() += CVec(bias.value().data(), g.cout);
  std::vector<Var> parents{x, w};
  if (has_bias) parents.push_back(bias);
  return make_result("conv2d", std::move(out), std::move(parents), [g, has_bias, hw, kdim, pointwise](Node& self) {
    Node* px = self.parents[0].get();
    Node* pw = self.parents[1].get();
    CMapM go(self.grad.data(), g.cout, hw);
    CMapM wm(pw->value.data(), g.cout, kdim);
    if (pointwise) {
      CMapM xm(px->value.data(), g.cin, hw);
      if (pw->requires_grad) MapM(pw->grad_buffer().data(), g.cout, kdim).noalias() += go * xm.transpose();
      if (px->requires_grad) MapM(px->grad_buffer().data(), g.cin, hw).noalias() += wm.transpose() * go;
    } else {
      if (pw->requires_grad) {
        RowMat cols(kdim, hw);
        im2col(px->value.data(), g, cols.data());
        MapM(pw->grad_buffer().data(), g.cout, kdim).noalias() += go * cols.transpose();
      }
      if (px->requires_grad) {
        RowMat dcols = wm.transpose() * go;
        col2im_add(dcols.data(), g, px->grad_buffer().data());
      }
    }
    if (has_bias) {
      Node* pb = self.parents[2].get();
      if (pb->requires_grad) Vec(pb->grad_buffer().data(), g.cout) += go.rowwise().sum();
    }
  });
}

Var group_norm(const Var& x, std::size_t groups, double eps) {
  require_rank(x, 3, "group_norm");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  require(groups > 0 && c % groups == 0, "group_norm: channels not divisible by groups");
  const std::size_t per = (c / groups) * hw;
  require(per >= 2, "group_norm: group extent must be >= 2");
  Tensor out(x.shape());
  std::vector<double> inv_std(groups);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const double* src = x.value().data() + gi * per;
    double m = 0.0;
    for (std::size_t i = 0; i < per; ++i) m += src[i];
    m /= static_cast<double>(per);
    double var = 0.0;
    for (std::size_t i = 0; i < per; ++i) var += (src[i] - m) * (src[i] - m);
    var /= static_cast<double>(per);
    inv_std[gi] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < per; ++i) out[gi * per + i] = (src[i] - m) * inv_std[gi];
  }
  return make_result("group_norm", std::move(out), {x}, [groups, per, inv_std = std::move(inv_std)](Node& self) {
    if (Node* p = wants(self, 0)) {
      auto& g = p->grad_buffer();
      const double n = static_cast<double>(per);
      for (std::size_t gi = 0; gi < groups; ++gi) {
        const double* gy = self.grad.data() + gi * per;
        const double* xh = self.value.data() + gi * per;
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
          m1 += gy[i];
          m2 += gy[i] * xh[i];
        }
        m1 /= n;
        m2 /= n;
        for (std::size_t i = 0; i < per; ++i) g[gi * per + i] += inv_std[gi] * (gy[i] - m1 - xh[i] * m2);
      }
    }
  });
}

Var channel_affine(const Var& x, const Var& scale_v, const Var& shift_v) {
  require_rank(x, 3, "channel_affine");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  const bool has_scale = scale_v.defined(), has_shift = shift_v.defined();
  if (has_scale) require(scale_v.value().size() == c, "channel_affine: scale length mismatch");
  if (has_shift) require(shift_v.value().size() == c, "channel_affine: shift length mismatch");
  Tensor out = x.value();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double s = has_scale ? scale_v.value()[ch] : 1.0;
    const double b = has_shift ? shift_v.value()[ch] : 0.0;
    double* row = out.data() + ch * hw;
    if (has_scale)
      for (std::size_t i = 0; i < hw; ++i) row[i] *= s;
    if (has_shift)
      for (std::size_t i = 0; i < hw; ++i) row[i] += b;
  }
  std::vector<Var> parents{x};
  if (has_scale) parents.push_back(scale_v);
  if (has_shift) parents.push_back(shift_v);
  return make_result("channel_affine", std::move(out), std::move(parents), [=](Node& self) {
    Node* px = self.parents[0].get();
    Node* ps = has_scale ? self.parents[1].get() : nullptr;
    Node* pb = has_shift ? self.parents[has_scale ? 2 : 1].get() : nullptr;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* gy = self.grad.data() + ch * hw;
      const double s = ps ? ps->value[ch] : 1.0;
      if (px->requires_grad) {
        double* gx = px->grad_buffer().data() + ch * hw;
        for (std::size_t i = 0; i < hw; ++i) gx[i] += gy[i] * s;
      }
      if (ps && ps->requires_grad) {
        const double* xv = px->value.data() + ch * hw;
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) acc += gy[i] * xv[i];
        ps->grad_buffer()[ch] += acc;
      }
      if (pb && pb->requires_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) acc += gy[i];
        pb->grad_buffer()[ch] += acc;
      }
    }
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const std::size_t h = parts[0].dim(1), w = parts[0].dim(2);
  std::size_t c = 0;
  for (const auto& p : parts) {
    require_rank(p, 3, "concat_channels");
    require(p.dim(1) == h && p.dim(2) == w, "concat_channels: spatial extent mismatch");
    c += p.dim(0);
  }
  Tensor out(Shape{c, h, w});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + off);
    off += p.value().size();
  }
  return make_result("concat_channels", std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& pp : self.parents) {
      const std::size_t n = pp->value.size();
      if (pp->requires_grad) {
        auto& g = pp->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

Var avg_pool(const Var& x, std::size_t fh, std::size_t fw) {
  require_rank(x, 3, "avg_pool");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  require(fh > 0 && fw > 0 && h % fh == 0 && w % fw == 0, "avg_pool: extent not divisible by pooling factor");
  const std::size_t oh = h / fh, ow = w / fw;
  const double inv = 1.0 / static_cast<double>(fh * fw);
  Tensor out(Shape{c, oh, ow});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx)
        out[(ch * oh + y / fh) * ow + xx / fw] += x.value()[(ch * h + y) * w + xx] * inv;
  return make_result("avg_pool", std::move(out), {x}, [=](Node& self) {
    if (Node* p = wants(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t xx = 0; xx < w; ++xx)
            g[(ch * h + y) * w + xx] += self.grad[(ch * oh + y / fh) * ow + xx / fw] * inv;
    }
  });
}

Var upsample_nearest(const Var& x, std::size_t fh, std::size_t fw) {
  require_rank(x, 3, "upsample_nearest");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = h * fh, ow = w * fw;
  Tensor out(Shape{c, oh, ow});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) out[(ch * oh + y) * ow + xx] = x.value()[(ch * h + y / fh) * w + xx / fw];
  return make_result("upsample_nearest", std::move(out), {x}, [=](Node& self) {
    if (Node* p = wants(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t xx = 0; xx < ow; ++xx)
            g[(ch * h + y / fh) * w + xx / fw] += self.grad[(ch * oh + y) * ow + xx];
    }
  });
}

namespace {

struct SpectralGeom {
  std::size_t cin, cout, h, w, wh;  // wh = w/2 + 1
  std::size_t blocks, mh, mw;       // mh, mw are the weight extents
  std::size_t eff_mh, eff_mw;       // modes actually used for this input
};

// Frequency row addressed by (block, r).
std::size_t spectral_row(const SpectralGeom& g, std::size_t b, std::size_t r) {
  return b == 0 ? r : g.h - g.eff_mh + r;
}

std::size_t widx(const SpectralGeom& g, std::size_t b, std::size_t i, std::size_t o, std::size_t r, std::size_t m) {
  return (((b * g.cin + i) * g.cout + o) * g.mh + r) * g.mw + m;
}

}  // namespace

Var spectral_conv(const Var& x, const Var& w_re, const Var& w_im) {
  require_rank(x, 3, "spectral_conv");
  require_rank(w_re, 5, "spectral_conv");
  require(w_re.shape() == w_im.shape(), "spectral_conv: real/imaginary weight shapes differ");
  SpectralGeom g{};
  g.cin = x.dim(0);
  g.h = x.dim(1);
  g.w = x.dim(2);
  g.wh = g.w / 2 + 1;
  g.blocks = w_re.dim(0);
  g.cout = w_re.dim(2);
  g.mh = w_re.dim(3);
  g.mw = w_re.dim(4);
  require(w_re.dim(1) == g.cin, "spectral_conv: weight expects " + std::to_string(w_re.dim(1)) + " input channels");
  if (g.h == 1) {
    require(g.blocks == 1 && g.mh == 1, "spectral_conv: 1D input needs a single block with one row mode");
    g.eff_mh = 1;
  } else {
    require(g.blocks == 2, "spectral_conv: 2D input needs two weight blocks");
    g.eff_mh = std::min(g.mh, g.h / 2);
  }
  g.eff_mw = std::min(g.mw, g.wh);

  Spectrum xs = rfft2(x.value());
  Spectrum ys(Shape{g.cout, g.h, g.wh});
  const auto& wr = w_re.value();
  const auto& wi = w_im.value();
  for (std::size_t b = 0; b < g.blocks; ++b)
    for (std::size_t r = 0; r < g.eff_mh; ++r) {
      const std::size_t row = spectral_row(g, b, r);
      for (std::size_t i = 0; i < g.cin; ++i)
        for (std::size_t m = 0; m < g.eff_mw; ++m) {
          const Complex xv = xs[(i * g.h + row) * g.wh + m];
          for (std::size_t o = 0; o < g.cout; ++o) {
            const std::size_t k = widx(g, b, i, o, r, m);
            ys[(o * g.h + row) * g.wh + m] += Complex(wr[k], wi[k]) * xv;
          }
        }
    }
  Tensor out = irfft2(ys, g.w);
  return make_result("spectral_conv", std::move(out), {x, w_re, w_im}, [g, xs = std::move(xs)](Node& self) {
    Node* px = self.parents[0].get();
    Node* pr = self.parents[1].get();
    Node* pi = self.parents[2].get();
    // Adjoint of irfft2: rfft of the upstream gradient with the Hermitian
    // weights c/W (c = 1 at DC and Nyquist, 2 elsewhere), then a forward
    // FFT over rows scaled by 1/H.
    Spectrum gy = rfft(self.grad, 2);
    for (std::size_t o = 0; o < g.cout; ++o)
      for (std::size_t row = 0; row < g.h; ++row)
        for (std::size_t m = 0; m < g.wh; ++m) {
          const bool single = m == 0 || (g.w % 2 == 0 && m == g.wh - 1);
          gy[(o * g.h + row) * g.wh + m] *= (single ? 1.0 : 2.0) / static_cast<double>(g.w);
        }
    if (g.h > 1) {
      fft_inplace(gy, 1, false);
      for (auto& v : gy.values) v /= static_cast<double>(g.h);
    }
    Spectrum gx(Shape{g.cin, g.h, g.wh});
    for (std::size_t b = 0; b < g.blocks; ++b)
      for (std::size_t r = 0; r < g.eff_mh; ++r) {
        const std::size_t row = spectral_row(g, b, r);
        for (std::size_t i = 0; i < g.cin; ++i)
          for (std::size_t m = 0; m < g.eff_mw; ++m) {
            const Complex xv = xs[(i * g.h + row) * g.wh + m];
            Complex acc{};
            for (std::size_t o = 0; o < g.cout; ++o) {
              const std::size_t k = widx(g, b, i, o, r, m);
              const Complex gv = gy[(o * g.h + row) * g.wh + m];
              const Complex gw = gv * std::conj(xv);
              if (pr->requires_grad) pr->grad_buffer()[k] += gw.real();
              if (pi->requires_grad) pi->grad_buffer()[k] += gw.imag();
              acc += std::conj(Complex(pr->value[k], pi->value[k])) * gv;
            }
            gx[(i * g.h + row) * g.wh + m] += acc;
          }
      }
    if (!px->requires_grad) return;
    // Adjoint of rfft2: H * ifft over rows, then W * irfft of gx / c.
    if (g.h > 1) {
      fft_inplace(gx, 1, true);
      for (auto& v : gx.values) v *= static_cast<double>(g.h);
    }
    for (std::size_t i = 0; i < g.cin; ++i)
      for (std::size_t row = 0; row < g.h; ++row)
        for (std::size_t m = 0; m < g.wh; ++m) {
          const bool single = m == 0 || (g.w % 2 == 0 && m == g.wh - 1);
          gx[(i * g.h + row) * g.wh + m] *= (single ? 1.0 : 0.5) * static_cast<double>(g.w);
        }
    px->grad_buffer() += irfft(gx, 2, g.w);
  });
}

Var resample(const Var& x, const Tensor& mh, const Tensor& mw) {
  require_rank(x, 3, "resample");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  require(mh.rank() == 2 && mh.dim(1) == h, "resample: row matrix does not match input height");
  require(mw.rank() == 2 && mw.dim(1) == w, "resample: column matrix does not match input width");
  const std::size_t oh = mh.dim(0), ow = mw.dim(0);
  Tensor out(Shape{c, oh, ow});
  const auto mhm = as_matrix(mh);
  const auto mwm = as_matrix(mw);
  for (std::size_t ch = 0; ch < c; ++ch) {
    MapM(out.data() + ch * oh * ow, oh, ow).noalias() = mhm * CMapM(x.value().data() + ch * h * w, h, w) * mwm.transpose();
  }
  return make_result("resample", std::move(out), {x}, [=](Node& self) {
    if (Node* p = wants(self, 0)) {
      const auto mhm = as_matrix(mh);
      const auto mwm = as_matrix(mw);
      for (std::size_t ch = 0; ch < c; ++ch) {
        MapM(p->grad_buffer().data() + ch * h * w, h, w).noalias() +=
            mhm.transpose() * CMapM(self.grad.data() + ch * oh * ow, oh, ow) * mwm;
      }
    }
  });
}

}  // namespace maepde::numkit

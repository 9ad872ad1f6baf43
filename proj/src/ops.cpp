#include "tcm/ops.hpp"

#include <algorithm>
#include <cmath>

#include "tcm/errors.hpp"
#include "tcm/kernels/kernels.hpp"

namespace tcm::ag {

namespace {

const kernels::KernelTable& K() { return kernels::active(); }

void require(bool cond, const std::string& what) {
  if (!cond) throw DimensionMismatch(what);
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

bool wants_grad(const Node* n) { return n->requires_grad; }

Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s;
  out.back() = last;
  return out;
}

}  // namespace

std::size_t rows_of(const Tensor& t) {
  return t.rank() == 0 ? 1 : t.size() / t.shape().back();
}
std::size_t cols_of(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  OpBuilder op({m, n}, {a, b});
  K().gemm(m, n, k, a.values().data(), k, b.values().data(), n, op.out->value.data(), n);
  Node* an = a.node();
  Node* bn = b.node();
  return op.finish([an, bn, m, n, k](Node& self) {
    if (wants_grad(an))
      K().gemm_nt(m, k, n, self.grad.data(), n, bn->value.data(), n, an->grad_buffer(), k);
    if (wants_grad(bn))
      K().gemm_tn(k, n, m, an->value.data(), k, self.grad.data(), n, bn->grad_buffer(), n);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require(w.rank() == 2 && cols_of(x) == w.dim(0),
          "linear: input " + shape_str(x.shape()) + " weight " + shape_str(w.shape()));
  const std::size_t m = rows_of(x), k = w.dim(0), n = w.dim(1);
  if (bias.defined()) require(bias.size() == n, "linear: bias size");
  OpBuilder op(with_last(x.shape(), n), {x, w, bias});
  double* out = op.out->value.data();
  if (bias.defined())
    for (std::size_t i = 0; i < m; ++i)
      std::copy(bias.values().begin(), bias.values().end(), out + i * n);
  K().gemm(m, n, k, x.values().data(), k, w.values().data(), n, out, n);
  Node* xn = x.node();
  Node* wn = w.node();
  Node* bn = bias.defined() ? bias.node() : nullptr;
  return op.finish([xn, wn, bn, m, n, k](Node& self) {
    const double* g = self.grad.data();
    if (wants_grad(xn)) K().gemm_nt(m, k, n, g, n, wn->value.data(), n, xn->grad_buffer(), k);
    if (wants_grad(wn)) K().gemm_tn(k, n, m, xn->value.data(), k, g, n, wn->grad_buffer(), n);
    if (bn && wants_grad(bn)) {
      double* gb = bn->grad_buffer();
      for (std::size_t i = 0; i < m; ++i) K().axpy(n, 1.0, g + i * n, gb);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  OpBuilder op(a.shape(), {a, b});
  K().add(a.size(), a.values().data(), b.values().data(), op.out->value.data());
  Node* an = a.node();
  Node* bn = b.node();
  return op.finish([an, bn](Node& self) {
    const std::size_t n = self.value.size();
    if (wants_grad(an)) K().axpy(n, 1.0, self.grad.data(), an->grad_buffer());
    if (wants_grad(bn)) K().axpy(n, 1.0, self.grad.data(), bn->grad_buffer());
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  OpBuilder op(a.shape(), {a, b});
  for (std::size_t i = 0; i < a.size(); ++i) op.out->value[i] = a[i] - b[i];
  Node* an = a.node();
  Node* bn = b.node();
  return op.finish([an, bn](Node& self) {
    const std::size_t n = self.value.size();
    if (wants_grad(an)) K().axpy(n, 1.0, self.grad.data(), an->grad_buffer());
    if (wants_grad(bn)) K().axpy(n, -1.0, self.grad.data(), bn->grad_buffer());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  OpBuilder op(a.shape(), {a, b});
  K().mul(a.size(), a.values().data(), b.values().data(), op.out->value.data());
  Node* an = a.node();
  Node* bn = b.node();
  return op.finish([an, bn](Node& self) {
    const std::size_t n = self.value.size();
    if (wants_grad(an)) {
      double* g = an->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * bn->value[i];
    }
    if (wants_grad(bn)) {
      double* g = bn->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * an->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  OpBuilder op(a.shape(), {a});
  K().scale(a.size(), s, a.values().data(), op.out->value.data());
  Node* an = a.node();
  return op.finish([an, s](Node& self) {
    K().axpy(self.value.size(), s, self.grad.data(), an->grad_buffer());
  });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  const std::size_t n = cols_of(x), m = rows_of(x);
  require(v.size() == n, "add_rowvec: row length " + std::to_string(n) +
                             " vs vector " + shape_str(v.shape()));
  OpBuilder op(x.shape(), {x, v});
  for (std::size_t i = 0; i < m; ++i)
    K().add(n, x.values().data() + i * n, v.values().data(), op.out->value.data() + i * n);
  Node* xn = x.node();
  Node* vn = v.node();
  return op.finish([xn, vn, m, n](Node& self) {
    if (wants_grad(xn)) K().axpy(m * n, 1.0, self.grad.data(), xn->grad_buffer());
    if (wants_grad(vn)) {
      double* g = vn->grad_buffer();
      for (std::size_t i = 0; i < m; ++i) K().axpy(n, 1.0, self.grad.data() + i * n, g);
    }
  });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  require(s.size() == 1, "mul_scalar: scalar operand has shape " + shape_str(s.shape()));
  OpBuilder op(x.shape(), {x, s});
  const double sv = s[0];
  K().scale(x.size(), sv, x.values().data(), op.out->value.data());
  Node* xn = x.node();
  Node* sn = s.node();
  return op.finish([xn, sn](Node& self) {
    const std::size_t n = self.value.size();
    if (wants_grad(xn)) K().axpy(n, sn->value[0], self.grad.data(), xn->grad_buffer());
    if (wants_grad(sn)) sn->grad_buffer()[0] += K().dot(n, self.grad.data(), xn->value.data());
  });
}

Tensor div_scalar(const Tensor& x, const Tensor& s) {
  require(s.size() == 1, "div_scalar: scalar operand has shape " + shape_str(s.shape()));
  OpBuilder op(x.shape(), {x, s});
  const double sv = s[0];
  for (std::size_t i = 0; i < x.size(); ++i) op.out->value[i] = x[i] / sv;
  Node* xn = x.node();
  Node* sn = s.node();
  return op.finish([xn, sn](Node& self) {
    const std::size_t n = self.value.size();
    const double sv = sn->value[0];
    if (wants_grad(xn)) K().axpy(n, 1.0 / sv, self.grad.data(), xn->grad_buffer());
    if (wants_grad(sn))
      sn->grad_buffer()[0] -= K().dot(n, self.grad.data(), self.value.data()) / sv;
  });
}

Tensor add_scalars(const Tensor& a, const Tensor& b) {
  require(a.size() == 1 && b.size() == 1, "add_scalars: operands must be scalars");
  OpBuilder op({1}, {a, b});
  op.out->value[0] = a[0] + b[0];
  Node* an = a.node();
  Node* bn = b.node();
  return op.finish([an, bn](Node& self) {
    if (wants_grad(an)) an->grad_buffer()[0] += self.grad[0];
    if (wants_grad(bn)) bn->grad_buffer()[0] += self.grad[0];
  });
}

Tensor relu(const Tensor& x) {
  OpBuilder op(x.shape(), {x});
  K().relu(x.size(), x.values().data(), op.out->value.data());
  Node* xn = x.node();
  return op.finish([xn](Node& self) {
    double* g = xn->grad_buffer();
    for (std::size_t i = 0; i < self.value.size(); ++i)
      if (xn->value[i] > 0.0) g[i] += self.grad[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  OpBuilder op(x.shape(), {x});
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    // Branches keep exp() from overflowing for large |v|.
    op.out->value[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  Node* xn = x.node();
  return op.finish([xn](Node& self) {
    double* g = xn->grad_buffer();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor exp(const Tensor& x) {
  OpBuilder op(x.shape(), {x});
  for (std::size_t i = 0; i < x.size(); ++i) op.out->value[i] = std::exp(x[i]);
  Node* xn = x.node();
  return op.finish([xn](Node& self) {
    double* g = xn->grad_buffer();
    for (std::size_t i = 0; i < self.value.size(); ++i) g[i] += self.grad[i] * self.value[i];
  });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  OpBuilder op(x.shape(), {x});
  for (std::size_t i = 0; i < x.size(); ++i) op.out->value[i] = std::clamp(x[i], lo, hi);
  Node* xn = x.node();
  return op.finish([xn, lo, hi](Node& self) {
    double* g = xn->grad_buffer();
    for (std::size_t i = 0; i < self.value.size(); ++i)
      if (xn->value[i] > lo && xn->value[i] < hi) g[i] += self.grad[i];
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t n = cols_of(x), m = rows_of(x);
  require(gamma.size() == n && beta.size() == n,
          "layer_norm: affine parameters must have length " + std::to_string(n));
  OpBuilder op(x.shape(), {x, gamma, beta});
  std::vector<double> xhat(x.size());
  std::vector<double> rstd(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.values().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * rstd[i];
      op.out->value[i * n + j] = xhat[i * n + j] * gamma[j] + beta[j];
    }
  }
  Node* xn = x.node();
  Node* gn = gamma.node();
  Node* bn = beta.node();
  return op.finish([xn, gn, bn, m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
    const double* dy = self.grad.data();
    if (wants_grad(gn)) {
      double* g = gn->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += dy[i * n + j] * xhat[i * n + j];
    }
    if (wants_grad(bn)) {
      double* g = bn->grad_buffer();
      for (std::size_t i = 0; i < m; ++i) K().axpy(n, 1.0, dy + i * n, g);
    }
    if (wants_grad(xn)) {
      double* g = xn->grad_buffer();
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < m; ++i) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double d = dy[i * n + j] * gn->value[j];
          mean_d += d;
          mean_dx += d * xhat[i * n + j];
        }
        mean_d *= inv_n;
        mean_dx *= inv_n;
        for (std::size_t j = 0; j < n; ++j) {
          const double d = dy[i * n + j] * gn->value[j];
          g[i * n + j] += rstd[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
        }
      }
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t n = cols_of(x), m = rows_of(x);
  OpBuilder op(x.shape(), {x});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.values().data() + i * n;
    double* out = op.out->value.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = std::exp(row[j] - mx);
      s += out[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[j] /= s;
  }
  Node* xn = x.node();
  return op.finish([xn, m, n](Node& self) {
    double* g = xn->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = self.value.data() + i * n;
      const double* dy = self.grad.data() + i * n;
      const double s = K().dot(n, y, dy);
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (dy[j] - s);
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(numel(shape) == x.size(),
          "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  OpBuilder op(std::move(shape), {x});
  std::copy(x.values().begin(), x.values().end(), op.out->value.begin());
  Node* xn = x.node();
  return op.finish([xn](Node& self) {
    K().axpy(self.value.size(), 1.0, self.grad.data(), xn->grad_buffer());
  });
}

Tensor transpose(const Tensor& x) {
  require(x.rank() == 2, "transpose: needs a 2-D tensor");
  const std::size_t m = x.dim(0), n = x.dim(1);
  OpBuilder op({n, m}, {x});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) op.out->value[j * m + i] = x[i * n + j];
  Node* xn = x.node();
  return op.finish([xn, m, n](Node& self) {
    double* g = xn->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t n = cols_of(x), m = rows_of(x);
  require(begin < end && end <= n, "slice_cols: bad range");
  const std::size_t w = end - begin;
  OpBuilder op(with_last(x.shape(), w), {x});
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(x.values().data() + i * n + begin, w, op.out->value.data() + i * w);
  Node* xn = x.node();
  return op.finish([xn, m, n, w, begin](Node& self) {
    double* g = xn->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      K().axpy(w, 1.0, self.grad.data() + i * w, g + i * n + begin);
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require(x.rank() == 2 && begin < end && end <= x.dim(0), "slice_rows: bad range");
  const std::size_t n = x.dim(1);
  OpBuilder op({end - begin, n}, {x});
  std::copy_n(x.values().data() + begin * n, (end - begin) * n, op.out->value.data());
  Node* xn = x.node();
  return op.finish([xn, begin, n](Node& self) {
    K().axpy(self.value.size(), 1.0, self.grad.data(), xn->grad_buffer() + begin * n);
  });
}

namespace {

// Variadic ops can't use OpBuilder's initializer_list, so they wire inputs by hand.
std::shared_ptr<Node> variadic_node(Shape shape, const std::vector<Tensor>& parts) {
  auto out = std::make_shared<Node>();
  out->value.assign(numel(shape), 0.0);
  out->shape = std::move(shape);
  if (!grad_enabled()) return out;
  bool any = false;
  for (const Tensor& t : parts) any = any || t.requires_grad();
  if (any) {
    out->requires_grad = true;
    for (const Tensor& t : parts) out->inputs.push_back(t.node_ptr());
  }
  return out;
}

}  // namespace

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t m = rows_of(parts[0]);
  std::size_t total = 0;
  for (const Tensor& t : parts) {
    require(rows_of(t) == m, "concat_cols: row count mismatch");
    total += cols_of(t);
  }
  auto out = variadic_node(with_last(parts[0].shape(), total), parts);
  std::size_t off = 0;
  std::vector<std::size_t> widths;
  for (const Tensor& t : parts) {
    const std::size_t w = cols_of(t);
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(t.values().data() + i * w, w, out->value.data() + i * total + off);
    off += w;
    widths.push_back(w);
  }
  if (out->requires_grad) {
    out->backward = [m, total, widths](Node& self) {
      std::size_t off = 0;
      for (std::size_t p = 0; p < self.inputs.size(); ++p) {
        Node* in = self.inputs[p].get();
        const std::size_t w = widths[p];
        if (in->requires_grad) {
          double* g = in->grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            K().axpy(w, 1.0, self.grad.data() + i * total + off, g + i * w);
        }
        off += w;
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t n = cols_of(parts[0]);
  std::size_t m = 0;
  for (const Tensor& t : parts) {
    require(cols_of(t) == n, "concat_rows: column count mismatch");
    m += rows_of(t);
  }
  auto out = variadic_node({m, n}, parts);
  std::size_t off = 0;
  for (const Tensor& t : parts) {
    std::copy(t.values().begin(), t.values().end(), out->value.begin() + off);
    off += t.size();
  }
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      std::size_t off = 0;
      for (auto& in : self.inputs) {
        if (in->requires_grad)
          K().axpy(in->value.size(), 1.0, self.grad.data() + off, in->grad_buffer());
        off += in->value.size();
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor mean_rows(const Tensor& x) {
  const std::size_t n = cols_of(x), m = rows_of(x);
  OpBuilder op({1, n}, {x});
  for (std::size_t i = 0; i < m; ++i)
    K().axpy(n, 1.0, x.values().data() + i * n, op.out->value.data());
  K().scale(n, 1.0 / static_cast<double>(m), op.out->value.data(), op.out->value.data());
  Node* xn = x.node();
  return op.finish([xn, m, n](Node& self) {
    double* g = xn->grad_buffer();
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) K().axpy(n, inv, self.grad.data(), g + i * n);
  });
}

Tensor sum(const Tensor& x) {
  OpBuilder op({1}, {x});
  double s = 0.0;
  for (double v : x.values()) s += v;
  op.out->value[0] = s;
  Node* xn = x.node();
  return op.finish([xn](Node& self) {
    double* g = xn->grad_buffer();
    for (std::size_t i = 0; i < xn->value.size(); ++i) g[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t kernel,
              std::size_t stride, std::size_t pad) {
  require(x.rank() == 3, "conv2d: input must be H x W x C, got " + shape_str(x.shape()));
  const std::size_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
  const std::size_t patch = kernel * kernel * cin;
  require(w.rank() == 2 && w.dim(0) == patch,
          "conv2d: weight " + shape_str(w.shape()) + " for " + std::to_string(cin) +
              " input channels and kernel " + std::to_string(kernel));
  require(h + 2 * pad >= kernel && wd + 2 * pad >= kernel, "conv2d: input smaller than kernel");
  const std::size_t cout = w.dim(1);
  const std::size_t ho = (h + 2 * pad - kernel) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - kernel) / stride + 1;

  // im2col: one row per output position.
  std::vector<double> col(ho * wo * patch, 0.0);
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox) {
      double* row = col.data() + (oy * wo + ox) * patch;
      for (std::size_t ky = 0; ky < kernel; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                  static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
          std::copy_n(x.values().data() + (iy * wd + ix) * cin, cin,
                      row + (ky * kernel + kx) * cin);
        }
      }
    }

  OpBuilder op({ho, wo, cout}, {x, w, bias});
  double* out = op.out->value.data();
  if (bias.defined())
    for (std::size_t i = 0; i < ho * wo; ++i)
      std::copy(bias.values().begin(), bias.values().end(), out + i * cout);
  K().gemm(ho * wo, cout, patch, col.data(), patch, w.values().data(), cout, out, cout);

  Node* xn = x.node();
  Node* wn = w.node();
  Node* bn = bias.defined() ? bias.node() : nullptr;
  return op.finish([=, col = std::move(col)](Node& self) {
    const double* g = self.grad.data();
    const std::size_t npos = ho * wo;
    if (wants_grad(wn)) K().gemm_tn(patch, cout, npos, col.data(), patch, g, cout, wn->grad_buffer(), cout);
    if (bn && wants_grad(bn)) {
      double* gb = bn->grad_buffer();
      for (std::size_t i = 0; i < npos; ++i) K().axpy(cout, 1.0, g + i * cout, gb);
    }
    if (wants_grad(xn)) {
      std::vector<double> dcol(npos * patch, 0.0);
      K().gemm_nt(npos, patch, cout, g, cout, wn->value.data(), cout, dcol.data(), patch);
      double* gx = xn->grad_buffer();
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const double* row = dcol.data() + (oy * wo + ox) * patch;
          for (std::size_t ky = 0; ky < kernel; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < kernel; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                        static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
              K().axpy(cin, 1.0, row + (ky * kernel + kx) * cin, gx + (iy * wd + ix) * cin);
            }
          }
        }
    }
  });
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double w0, w1;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    taps[o] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require(x.rank() == 3, "upsample_bilinear: input must be H x W x C");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const auto ty = bilinear_taps(h, out_h);
  const auto tx = bilinear_taps(w, out_w);
  OpBuilder op({out_h, out_w, c}, {x});
  const double* in = x.values().data();
  double* out = op.out->value.data();
  for (std::size_t oy = 0; oy < out_h; ++oy)
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      double* dst = out + (oy * out_w + ox) * c;
      const Tap& a = ty[oy];
      const Tap& b = tx[ox];
      K().axpy(c, a.w0 * b.w0, in + (a.i0 * w + b.i0) * c, dst);
      K().axpy(c, a.w0 * b.w1, in + (a.i0 * w + b.i1) * c, dst);
      K().axpy(c, a.w1 * b.w0, in + (a.i1 * w + b.i0) * c, dst);
      K().axpy(c, a.w1 * b.w1, in + (a.i1 * w + b.i1) * c, dst);
    }
  Node* xn = x.node();
  return op.finish([xn, ty, tx, out_h, out_w, w, c](Node& self) {
    double* g = xn->grad_buffer();
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const double* src = self.grad.data() + (oy * out_w + ox) * c;
        const Tap& a = ty[oy];
        const Tap& b = tx[ox];
        K().axpy(c, a.w0 * b.w0, src, g + (a.i0 * w + b.i0) * c);
        K().axpy(c, a.w0 * b.w1, src, g + (a.i0 * w + b.i1) * c);
        K().axpy(c, a.w1 * b.w0, src, g + (a.i1 * w + b.i0) * c);
        K().axpy(c, a.w1 * b.w1, src, g + (a.i1 * w + b.i1) * c);
      }
  });
}

Tensor bce_mean(const Tensor& p, std::span<const double> y, std::span<const double> mask,
                double eps) {
  require(y.size() == p.size() && mask.size() == p.size(), "bce_mean: size mismatch");
  OpBuilder op({1}, {p});
  double count = 0.0, total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const double q = std::clamp(p[i], eps, 1.0 - eps);
    total -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
    count += 1.0;
  }
  op.out->value[0] = count > 0.0 ? total / count : 0.0;
  Node* pn = p.node();
  std::vector<double> yv(y.begin(), y.end()), mv(mask.begin(), mask.end());
  return op.finish([pn, yv = std::move(yv), mv = std::move(mv), count, eps](Node& self) {
    if (count == 0.0) return;
    double* g = pn->grad_buffer();
    const double scale = self.grad[0] / count;
    for (std::size_t i = 0; i < yv.size(); ++i) {
      const double q = pn->value[i];
      if (mv[i] == 0.0 || q <= eps || q >= 1.0 - eps) continue;
      g[i] += scale * (-(yv[i] / q) + (1.0 - yv[i]) / (1.0 - q));
    }
  });
}

Tensor dice_loss(const Tensor& p, std::span<const double> y, std::span<const double> mask,
                 double smooth) {
  require(y.size() == p.size() && mask.size() == p.size(), "dice_loss: size mismatch");
  OpBuilder op({1}, {p});
  double inter = 0.0, psum = 0.0, ysum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (mask[i] == 0.0) continue;
    inter += p[i] * y[i];
    psum += p[i];
    ysum += y[i];
  }
  const double num = 2.0 * inter + smooth;
  const double den = psum + ysum + smooth;
  op.out->value[0] = 1.0 - num / den;
  Node* pn = p.node();
  std::vector<double> yv(y.begin(), y.end()), mv(mask.begin(), mask.end());
  return op.finish([pn, yv = std::move(yv), mv = std::move(mv), num, den](Node& self) {
    double* g = pn->grad_buffer();
    for (std::size_t i = 0; i < yv.size(); ++i) {
      if (mv[i] == 0.0) continue;
      // d/dp_i of -(num/den) = -(2 y_i den - num) / den^2
      g[i] += self.grad[0] * -(2.0 * yv[i] * den - num) / (den * den);
    }
  });
}

}  // namespace tcm::ag

#include "quantart/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>

#include "quantart/kernels.hpp"

namespace quantart {
namespace {

template <class T>
using NodeT = detail::Node<T>;
template <class T>
using BackwardFn = typename NodeT<T>::BackwardFn;

template <class T>
void check_finite(const std::vector<T>& v, const char* op) {
  for (const T x : v)
    if (!std::isfinite(x)) throw ValueError(std::string("non-finite value produced by ") + op);
}

// Builds an op result. The graph edge is recorded only when recording is on
// and some input needs a gradient.
template <class T>
Tensor<T> make(Shape shape, std::vector<T> value, std::initializer_list<const Tensor<T>*> inputs,
               const char* op, BackwardFn<T> fn) {
  if (validation_enabled()) check_finite(value, op);
  auto node = std::make_shared<NodeT<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (grad_enabled())
    for (const auto* in : inputs) needs = needs || in->requires_grad();
  if (needs) {
    node->requires_grad = true;
    for (const auto* in : inputs) node->inputs.push_back(in->node());
    node->backward = std::move(fn);
  }
  return Tensor<T>(std::move(node));
}

template <class T>
const std::vector<T>& val(const NodeT<T>& self, std::size_t i) {
  return self.inputs[i]->value;
}

template <class T>
const kernels::KernelTable<T>& K() {
  return kernels::table<T>();
}

template <class T>
void require_defined(const Tensor<T>& t, const char* what) {
  if (!t.defined()) throw ShapeError(std::string(what) + ": undefined tensor");
}

// Unary op helper: fn computes y from x, dfn computes dy/dx from (x, y).
template <class T, class F, class DF>
Tensor<T> unary(const Tensor<T>& x, const char* name, F fn, DF dfn) {
  require_defined(x, name);
  std::vector<T> y(x.numel());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = fn(xv[i]);
  return make<T>(x.shape(), std::move(y), {&x}, name,
                 [dfn](const NodeT<T>& self, const std::vector<T>& g, auto& ig) {
                   const auto& xin = val(self, 0);
                   auto& dx = *ig[0];
                   for (std::size_t i = 0; i < g.size(); ++i)
                     dx[i] += g[i] * dfn(xin[i], self.value[i]);
                 });
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

template <class T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a, "elementwise");
  require_defined(b, "elementwise");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::size_t inner = b.numel();
  bool ok = b.numel() == 1 || as == bs;
  if (!ok && bs.size() <= as.size()) ok = std::equal(bs.begin(), bs.end(), as.end() - bs.size());
  if (!ok)
    throw ShapeError("elementwise op: shapes " + to_string(as) + " and " + to_string(bs) +
                     " are not broadcast-compatible");
  const std::size_t outer = a.numel() / inner;
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(a.numel());
  const auto& k = K<T>();

  if (inner == a.numel() && op != BinaryOp::div) {
    if (op == BinaryOp::add) k.add(out.size(), av.data(), bv.data(), out.data());
    if (op == BinaryOp::sub) k.sub(out.size(), av.data(), bv.data(), out.data());
    if (op == BinaryOp::mul) k.mul(out.size(), av.data(), bv.data(), out.data());
  } else {
    for (std::size_t o = 0; o < outer; ++o) {
      const T* ai = av.data() + o * inner;
      T* oi = out.data() + o * inner;
      switch (op) {
        case BinaryOp::add: for (std::size_t i = 0; i < inner; ++i) oi[i] = ai[i] + bv[i]; break;
        case BinaryOp::sub: for (std::size_t i = 0; i < inner; ++i) oi[i] = ai[i] - bv[i]; break;
        case BinaryOp::mul: for (std::size_t i = 0; i < inner; ++i) oi[i] = ai[i] * bv[i]; break;
        case BinaryOp::div: for (std::size_t i = 0; i < inner; ++i) oi[i] = ai[i] / bv[i]; break;
      }
    }
  }

  static constexpr const char* names[] = {"add", "sub", "mul", "div"};
  return make<T>(as, std::move(out), {&a, &b}, names[static_cast<int>(op)],
                 [op, inner, outer](const NodeT<T>& self, const std::vector<T>& g, auto& ig) {
                   const auto& x = val(self, 0);
                   const auto& y = val(self, 1);
                   if (auto* da = ig[0]) {
                     for (std::size_t o = 0; o < outer; ++o)
                       for (std::size_t i = 0; i < inner; ++i) {
                         const std::size_t j = o * inner + i;
                         switch (op) {
                           case BinaryOp::add:
                           case BinaryOp::sub: (*da)[j] += g[j]; break;
                           case BinaryOp::mul: (*da)[j] += g[j] * y[i]; break;
                           case BinaryOp::div: (*da)[j] += g[j] / y[i]; break;
                         }
                       }
                   }
                   if (auto* db = ig[1]) {
                     for (std::size_t o = 0; o < outer; ++o)
                       for (std::size_t i = 0; i < inner; ++i) {
                         const std::size_t j = o * inner + i;
                         switch (op) {
                           case BinaryOp::add: (*db)[i] += g[j]; break;
                           case BinaryOp::sub: (*db)[i] -= g[j]; break;
                           case BinaryOp::mul: (*db)[i] += g[j] * x[j]; break;
                           case BinaryOp::div: (*db)[i] -= g[j] * x[j] / (y[i] * y[i]); break;
                         }
                       }
                   }
                 });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return unary(a, "add_scalar", [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  require_defined(a, "mul_scalar");
  std::vector<T> out(a.numel());
  K<T>().scale(out.size(), s, a.values().data(), out.data());
  return make<T>(a.shape(), std::move(out), {&a}, "mul_scalar",
                 [s](const NodeT<T>&, const std::vector<T>& g, auto& ig) {
                   K<T>().axpy(g.size(), s, g.data(), ig[0]->data());
                 });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary(x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& x) {
  return unary(x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return unary(x, "sqrt", [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(x, "abs", [](T v) { return std::abs(v); },
               [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(x, "sigmoid", [](T v) { return stable_sigmoid(v); },
               [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> silu(const Tensor<T>& x) {
  return unary(x, "silu", [](T v) { return v * stable_sigmoid(v); },
               [](T v, T) {
                 const T s = stable_sigmoid(v);
                 return s + v * s * (T(1) - s);
               });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(x, "relu", [](T v) { return v > T(0) ? v : T(0); },
               [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return unary(x, "leaky_relu", [slope](T v) { return v > T(0) ? v : slope * v; },
               [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <class T>
Tensor<T> softplus(const Tensor<T>& x) {
  return unary(x, "softplus",
               [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); },
               [](T v, T) { return stable_sigmoid(v); });
}

// ---------------------------------------------------------------------------
// reductions

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  require_defined(x, "sum");
  T s = T(0);
  for (const T v : x.values()) s += v;
  return make<T>(Shape{}, std::vector<T>{s}, {&x}, "sum",
                 [](const NodeT<T>&, const std::vector<T>& g, auto& ig) {
                   for (auto& d : *ig[0]) d += g[0];
                 });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  require_defined(x, "mean");
  const T inv = T(1) / static_cast<T>(x.numel());
  T s = T(0);
  for (const T v : x.values()) s += v;
  return make<T>(Shape{}, std::vector<T>{s * inv}, {&x}, "mean",
                 [inv](const NodeT<T>&, const std::vector<T>& g, auto& ig) {
                   const T gi = g[0] * inv;
                   for (auto& d : *ig[0]) d += gi;
                 });
}

namespace {
template <class T>
Shape drop_last(const Tensor<T>& x, const char* name) {
  if (x.ndim() == 0) throw ShapeError(std::string(name) + " needs at least one axis");
  return Shape(x.shape().begin(), x.shape().end() - 1);
}
}  // namespace

template <class T>
Tensor<T> sum_lastdim(const Tensor<T>& x) {
  require_defined(x, "sum_lastdim");
  Shape out_shape = drop_last(x, "sum_lastdim");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  std::vector<T> out(rows, T(0));
  const auto& xv = x.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < n; ++i) out[r] += xv[r * n + i];
  return make<T>(std::move(out_shape), std::move(out), {&x}, "sum_lastdim",
                 [n, rows](const NodeT<T>&, const std::vector<T>& g, auto& ig) {
                   auto& dx = *ig[0];
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t i = 0; i < n; ++i) dx[r * n + i] += g[r];
                 });
}

template <class T>
Tensor<T> mean_lastdim(const Tensor<T>& x) {
  require_defined(x, "mean_lastdim");
  return mul_scalar(sum_lastdim(x), T(1) / static_cast<T>(x.shape().back()));
}

template <class T>
Tensor<T> center_lastdim(const Tensor<T>& x) {
  require_defined(x, "center_lastdim");
  if (x.ndim() == 0) throw ShapeError("center_lastdim needs at least one axis");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  const T inv = T(1) / static_cast<T>(n);
  const auto& xv = x.values();
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    T s = T(0);
    for (std::size_t i = 0; i < n; ++i) s += xv[r * n + i];
    const T m = s * inv;
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] = xv[r * n + i] - m;
  }
  return make<T>(x.shape(), std::move(out), {&x}, "center_lastdim",
                 [n, rows, inv](const NodeT<T>&, const std::vector<T>& g, auto& ig) {
                   auto& dx = *ig[0];
                   for (std::size_t r = 0; r < rows; ++r) {
                     T s = T(0);
                     for (std::size_t i = 0; i < n; ++i) s += g[r * n + i];
                     const T m = s * inv;
                     for (std::size_t i = 0; i < n; ++i) dx[r * n + i] += g[r * n + i] - m;
                   }
                 });
}

template <class T>
Tensor<T> l2_norm_lastdim(const Tensor<T>& x) {
  require_defined(x, "l2_norm_lastdim");
  Shape out_shape = drop_last(x, "l2_norm_lastdim");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  const auto& xv = x.values();
  std::vector<T> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T s = T(0);
    for (std::size_t i = 0; i < n; ++i) s += xv[r * n + i] * xv[r * n + i];
    out[r] = std::sqrt(s);
  }
  return make<T>(std::move(out_shape), std::move(out), {&x}, "l2_norm_lastdim",
                 [n, rows](const NodeT<T>& self, const std::vector<T>& g, auto& ig) {
                   const auto& xin = val(self, 0);
                   auto& dx = *ig[0];
                   for (std::size_t r = 0; r < rows; ++r) {
                     const T norm = self.value[r];
                     if (norm == T(0)) continue;
                     const T scale = g[r] / norm;
                     for (std::size_t i = 0; i < n; ++i) dx[r * n + i] += scale * xin[r * n + i];
                   }
                 });
}

// ---------------------------------------------------------------------------
// shape

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require_defined(x, "reshape");
  if (numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  return make<T>(std::move(shape), x.values(), {&x}, "reshape",
                 [](const NodeT<T>&, const std::vector<T>& g, auto& ig) {
                   auto& dx = *ig[0];
                   for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
                 });
}

namespace {
template <class T>
void transpose_block(const T* in, T* out, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
}
}  // namespace

template <class T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
  require_defined(x, "transpose_last2");
  if (x.ndim() < 2) throw ShapeError("transpose_last2 needs >= 2 axes, got " + to_string(x.shape()));
  Shape s = x.shape();
  const std::size_t m = s[s.size() - 2];
  const std::size_t n = s[s.size() - 1];
  const std::size_t batch = x.numel() / (m * n);
  std::swap(s[s.size() - 2], s[s.size() - 1]);
  std::vector<T> out(x.numel());
  for (std::size_t b = 0; b < batch; ++b)
    transpose_block(x.values().data() + b * m * n, out.data() + b * m * n, m, n);
  return make<T>(std::move(s), std::move(out), {&x}, "transpose_last2",
                 [m, n, batch](const NodeT<T>&, const std::vector<T>& g, auto& ig) {
                   auto& dx = *ig[0];
                   for (std::size_t b = 0; b < batch; ++b)
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j)
                         dx[b * m * n + i * n + j] += g[b * m * n + j * m + i];
                 });
}

template <class T>
Tensor<T> to_tokens(const Tensor<T>& x) {
  require_defined(x, "to_tokens");
  if (x.ndim() != 4) throw ShapeError("to_tokens expects B x C x H x W, got " + to_string(x.shape()));
  const auto b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  return transpose_last2(reshape(x, Shape{b, c, hw}));
}

template <class T>
Tensor<T> from_tokens(const Tensor<T>& t, std::size_t h, std::size_t w) {
  require_defined(t, "from_tokens");
  if (t.ndim() != 3 || t.dim(1) != h * w)
    throw ShapeError("from_tokens: " + to_string(t.shape()) + " is not B x (" + std::to_string(h) +
                     "*" + std::to_string(w) + ") x C");
  const auto b = t.dim(0), c = t.dim(2);
  return reshape(transpose_last2(t), Shape{b, c, h, w});
}

// ---------------------------------------------------------------------------
// linear algebra

namespace {

// c[m,n] (+)= a[m,k] * b[k,n] with a and/or b given transposed in memory.
template <class T>
void gemm_t(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
            T* c, bool accumulate) {
  std::vector<T> at, bt;
  if (ta) {
    at.resize(m * k);
    transpose_block(a, at.data(), k, m);
    a = at.data();
  }
  if (tb) {
    bt.resize(k * n);
    transpose_block(b, bt.data(), n, k);
    b = bt.data();
  }
  K<T>().gemm(m, n, k, a, b, c, accumulate);
}

}  // namespace

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  K<T>().gemm(m, n, k, a.values().data(), b.values().data(), out.data(), false);
  return make<T>(Shape{m, n}, std::move(out), {&a, &b}, "matmul",
                 [m, n, k](const NodeT<T>& self, const std::vector<T>& g, auto& ig) {
                   if (ig[0]) gemm_t(false, true, m, k, n, g.data(), val(self, 1).data(), ig[0]->data(), true);
                   if (ig[1]) gemm_t(true, false, k, n, m, val(self, 0).data(), g.data(), ig[1]->data(), true);
                 });
}

template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a, "bmm");
  require_defined(b, "bmm");
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw ShapeError("bmm: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
  const std::size_t B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<T> out(B * m * n);
  for (std::size_t i = 0; i < B; ++i)
    K<T>().gemm(m, n, k, a.values().data() + i * m * k, b.values().data() + i * k * n,
                out.data() + i * m * n, false);
  return make<T>(Shape{B, m, n}, std::move(out), {&a, &b}, "bmm",
                 [B, m, n, k](const NodeT<T>& self, const std::vector<T>& g, auto& ig) {
                   for (std::size_t i = 0; i < B; ++i) {
                     const T* gi = g.data() + i * m * n;
                     if (ig[0])
                       gemm_t(false, true, m, k, n, gi, val(self, 1).data() + i * k * n,
                              ig[0]->data() + i * m * k, true);
                     if (ig[1])
                       gemm_t(true, false, k, n, m, val(self, 0).data() + i * m * k, gi,
                              ig[1]->data() + i * k * n, true);
                   }
                 });
}

// ---------------------------------------------------------------------------
// convolution

namespace {

struct ConvGeom {
  std::size_t B, C, H, W, O, k, stride, pad, Ho, Wo;
  std::size_t cols_rows() const { return C * k * k; }
  std::size_t cols_cols() const { return Ho * Wo; }
};

template <class T>
void im2col(const ConvGeom& g, const T* x, T* cols) {
  const std::size_t P = g.Ho * g.Wo;
  for (std::size_t c = 0; c < g.C; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = cols + ((c * g.k + ky) * g.k + kx) * P;
        for (std::size_t oy = 0; oy < g.Ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.Wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.H) &&
                                ix < static_cast<long>(g.W);
            row[oy * g.Wo + ox] = inside ? x[(c * g.H + iy) * g.W + ix] : T(0);
          }
        }
      }
}

template <class T>
void col2im(const ConvGeom& g, const T* cols, T* dx) {
  const std::size_t P = g.Ho * g.Wo;
  for (std::size_t c = 0; c < g.C; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = cols + ((c * g.k + ky) * g.k + kx) * P;
        for (std::size_t oy = 0; oy < g.Ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.H)) continue;
          for (std::size_t ox = 0; ox < g.Wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.W)) continue;
            dx[(c * g.H + iy) * g.W + ix] += row[oy * g.Wo + ox];
          }
        }
      }
}

}  // namespace

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad) {
  require_defined(x, "conv2d");
  require_defined(kernel, "conv2d");
  if (x.ndim() != 4) throw ShapeError("conv2d: input must be B x C x H x W, got " + to_string(x.shape()));
  if (kernel.ndim() != 4 || kernel.dim(2) != kernel.dim(3))
    throw ShapeError("conv2d: kernel must be O x C x k x k, got " + to_string(kernel.shape()));
  if (kernel.dim(1) != x.dim(1))
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(1)) + " channels, kernel " +
                     to_string(kernel.shape()) + " expects " + std::to_string(kernel.dim(1)));
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), kernel.dim(0), kernel.dim(2), stride, pad, 0, 0};
  if (g.H + 2 * pad < g.k || g.W + 2 * pad < g.k)
    throw ShapeError("conv2d: kernel " + std::to_string(g.k) + "x" + std::to_string(g.k) +
                     " is larger than padded input " + to_string(x.shape()) + " (pad " +
                     std::to_string(pad) + ")");
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != g.O))
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " does not match " +
                     std::to_string(g.O) + " output channels");
  g.Ho = (g.H + 2 * pad - g.k) / stride + 1;
  g.Wo = (g.W + 2 * pad - g.k) / stride + 1;

  const bool pointwise = g.k == 1 && stride == 1 && pad == 0;
  const std::size_t R = g.cols_rows(), P = g.cols_cols();
  std::vector<T> out(g.B * g.O * P);
  std::vector<T> cols(pointwise ? 0 : R * P);
  const auto& xv = x.values();
  const auto& wv = kernel.values();
  for (std::size_t b = 0; b < g.B; ++b) {
    const T* xb = xv.data() + b * g.C * g.H * g.W;
    const T* src = xb;
    if (!pointwise) {
      im2col(g, xb, cols.data());
      src = cols.data();
    }
    T* ob = out.data() + b * g.O * P;
    K<T>().gemm(g.O, P, R, wv.data(), src, ob, false);
    if (bias.defined())
      for (std::size_t o = 0; o < g.O; ++o) {
        const T bo = bias.values()[o];
        for (std::size_t p = 0; p < P; ++p) ob[o * P + p] += bo;
      }
  }

  Tensor<T> bias_or_zero = bias;
  const bool has_bias = bias.defined();
  auto fn = [g, pointwise, has_bias](const NodeT<T>& self, const std::vector<T>& grad, auto& ig) {
    const std::size_t R = g.cols_rows(), P = g.cols_cols();
    const auto& xin = val(self, 0);
    const auto& w = val(self, 1);
    std::vector<T> cols(pointwise ? 0 : R * P);
    std::vector<T> dcols(ig[0] && !pointwise ? R * P : 0);
    for (std::size_t b = 0; b < g.B; ++b) {
      const T* gb = grad.data() + b * g.O * P;
      const T* xb = xin.data() + b * g.C * g.H * g.W;
      const T* src = xb;
      if (ig[1]) {
        if (!pointwise) {
          im2col(g, xb, cols.data());
          src = cols.data();
        }
        gemm_t(false, true, g.O, R, P, gb, src, ig[1]->data(), true);
      }
      if (ig[0]) {
        T* dxb = ig[0]->data() + b * g.C * g.H * g.W;
        if (pointwise) {
          gemm_t(true, false, R, P, g.O, w.data(), gb, dxb, true);
        } else {
          gemm_t(true, false, R, P, g.O, w.data(), gb, dcols.data(), false);
          col2im(g, dcols.data(), dxb);
        }
      }
      if (has_bias && ig.size() > 2 && ig[2]) {
        auto& db = *ig[2];
        for (std::size_t o = 0; o < g.O; ++o)
          for (std::size_t p = 0; p < P; ++p) db[o] += gb[o * P + p];
      }
    }
  };
  if (has_bias)
    return make<T>(Shape{g.B, g.O, g.Ho, g.Wo}, std::move(out), {&x, &kernel, &bias_or_zero},
                   "conv2d", fn);
  return make<T>(Shape{g.B, g.O, g.Ho, g.Wo}, std::move(out), {&x, &kernel}, "conv2d", fn);
}

// ---------------------------------------------------------------------------
// normalization / resampling

template <class T>
Tensor<T> group_norm(const Tensor<T>& x, std::size_t groups, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
  require_defined(x, "group_norm");
  if (x.ndim() < 2) throw ShapeError("group_norm: input must be B x C x ..., got " + to_string(x.shape()));
  const std::size_t B = x.dim(0), C = x.dim(1);
  if (groups == 0 || C % groups != 0)
    throw ShapeError("group_norm: " + std::to_string(C) + " channels not divisible into " +
                     std::to_string(groups) + " groups");
  if (gamma.numel() != C || beta.numel() != C)
    throw ShapeError("group_norm: affine parameters must have " + std::to_string(C) + " entries");
  const std::size_t spatial = x.numel() / (B * C);
  const std::size_t cpg = C / groups;
  const std::size_t n = cpg * spatial;
  const auto& xv = x.values();
  const auto& gm = gamma.values();
  const auto& bt = beta.values();
  std::vector<T> xhat(x.numel()), rstd(B * groups), out(x.numel());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t base = (b * C + gi * cpg) * spatial;
      T s = T(0);
      for (std::size_t i = 0; i < n; ++i) s += xv[base + i];
      const T mu = s / static_cast<T>(n);
      T v = T(0);
      for (std::size_t i = 0; i < n; ++i) {
        const T d = xv[base + i] - mu;
        v += d * d;
      }
      v /= static_cast<T>(n);
      const T r = T(1) / std::sqrt(v + eps);
      rstd[b * groups + gi] = r;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = gi * cpg + i / spatial;
        const T h = (xv[base + i] - mu) * r;
        xhat[base + i] = h;
        out[base + i] = gm[c] * h + bt[c];
      }
    }
  return make<T>(x.shape(), std::move(out), {&x, &gamma, &beta}, "group_norm",
                 [B, C, groups, spatial, cpg, n, xhat = std::move(xhat), rstd = std::move(rstd)](
                     const NodeT<T>& self, const std::vector<T>& g, auto& ig) {
                   const auto& gm = val(self, 1);
                   for (std::size_t b = 0; b < B; ++b)
                     for (std::size_t gi = 0; gi < groups; ++gi) {
                       const std::size_t base = (b * C + gi * cpg) * spatial;
                       T sum_d = T(0), sum_dh = T(0);
                       for (std::size_t i = 0; i < n; ++i) {
                         const std::size_t c = gi * cpg + i / spatial;
                         const T d = g[base + i] * gm[c];
                         sum_d += d;
                         sum_dh += d * xhat[base + i];
                         if (ig[1]) (*ig[1])[c] += g[base + i] * xhat[base + i];
                         if (ig[2]) (*ig[2])[c] += g[base + i];
                       }
                       if (!ig[0]) continue;
                       const T r = rstd[b * groups + gi];
                       const T inv_n = T(1) / static_cast<T>(n);
                       for (std::size_t i = 0; i < n; ++i) {
                         const std::size_t c = gi * cpg + i / spatial;
                         const T d = g[base + i] * gm[c];
                         (*ig[0])[base + i] +=
                             r * (d - inv_n * sum_d - xhat[base + i] * inv_n * sum_dh);
                       }
                     }
                 });
}

template <class T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  require_defined(x, "upsample_nearest2x");
  if (x.ndim() != 4) throw ShapeError("upsample: input must be B x C x H x W, got " + to_string(x.shape()));
  const std::size_t BC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<T> out(BC * 4 * H * W);
  const auto& xv = x.values();
  for (std::size_t p = 0; p < BC; ++p)
    for (std::size_t y = 0; y < 2 * H; ++y)
      for (std::size_t xx = 0; xx < 2 * W; ++xx)
        out[(p * 2 * H + y) * 2 * W + xx] = xv[(p * H + y / 2) * W + xx / 2];
  return make<T>(Shape{x.dim(0), x.dim(1), 2 * H, 2 * W}, std::move(out), {&x}, "upsample_nearest2x",
                 [BC, H, W](const NodeT<T>&, const std::vector<T>& g, auto& ig) {
                   auto& dx = *ig[0];
                   for (std::size_t p = 0; p < BC; ++p)
                     for (std::size_t y = 0; y < 2 * H; ++y)
                       for (std::size_t xx = 0; xx < 2 * W; ++xx)
                         dx[(p * H + y / 2) * W + xx / 2] += g[(p * 2 * H + y) * 2 * W + xx];
                 });
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  require_defined(x, "softmax");
  if (axis >= x.ndim())
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + to_string(x.shape()));
  const std::size_t len = x.dim(axis);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);
  const std::size_t outer = x.numel() / (len * inner);
  const auto& xv = x.values();
  std::vector<T> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = xv[base];
      for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, xv[base + i * inner]);
      T s = T(0);
      for (std::size_t i = 0; i < len; ++i) {
        const T e = std::exp(xv[base + i * inner] - mx);
        out[base + i * inner] = e;
        s += e;
      }
      const T inv = T(1) / s;
      for (std::size_t i = 0; i < len; ++i) out[base + i * inner] *= inv;
    }
  return make<T>(x.shape(), std::move(out), {&x}, "softmax",
                 [outer, inner, len](const NodeT<T>& self, const std::vector<T>& g, auto& ig) {
                   const auto& y = self.value;
                   auto& dx = *ig[0];
                   for (std::size_t o = 0; o < outer; ++o)
                     for (std::size_t in = 0; in < inner; ++in) {
                       const std::size_t base = o * len * inner + in;
                       T dot = T(0);
                       for (std::size_t i = 0; i < len; ++i)
                         dot += g[base + i * inner] * y[base + i * inner];
                       for (std::size_t i = 0; i < len; ++i) {
                         const std::size_t j = base + i * inner;
                         dx[j] += y[j] * (g[j] - dot);
                       }
                     }
                 });
}

// ---------------------------------------------------------------------------
// gradient routing

template <class T>
Tensor<T> stop_gradient(const Tensor<T>& x) {
  require_defined(x, "stop_gradient");
  auto node = std::make_shared<NodeT<T>>();
  node->shape = x.shape();
  node->value = x.values();
  node->op = "stop_gradient";
  return Tensor<T>(std::move(node));
}

template <class T>
Tensor<T> straight_through(const Tensor<T>& z, const Tensor<T>& q) {
  require_defined(z, "straight_through");
  require_defined(q, "straight_through");
  if (z.shape() != q.shape())
    throw ShapeError("straight_through: shapes " + to_string(z.shape()) + " and " +
                     to_string(q.shape()) + " differ");
  return make<T>(q.shape(), q.values(), {&z}, "straight_through",
                 [](const NodeT<T>&, const std::vector<T>& g, auto& ig) {
                   auto& dz = *ig[0];
                   for (std::size_t i = 0; i < g.size(); ++i) dz[i] += g[i];
                 });
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::int32_t>& index) {
  require_defined(table, "gather_rows");
  if (table.ndim() != 2) throw ShapeError("gather_rows: table must be N x d, got " + to_string(table.shape()));
  if (index.empty()) throw ShapeError("gather_rows: empty index list");
  const std::size_t N = table.dim(0), d = table.dim(1);
  std::vector<T> out(index.size() * d);
  const auto& tv = table.values();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= N)
      throw ShapeError("gather_rows: index " + std::to_string(index[i]) + " outside [0," +
                       std::to_string(N) + ")");
    std::copy_n(tv.data() + static_cast<std::size_t>(index[i]) * d, d, out.data() + i * d);
  }
  return make<T>(Shape{index.size(), d}, std::move(out), {&table}, "gather_rows",
                 [index, d](const NodeT<T>&, const std::vector<T>& g, auto& ig) {
                   auto& dt = *ig[0];
                   for (std::size_t i = 0; i < index.size(); ++i) {
                     T* row = dt.data() + static_cast<std::size_t>(index[i]) * d;
                     for (std::size_t c = 0; c < d; ++c) row[c] += g[i * d + c];
                   }
                 });
}

template <class T>
Tensor<T> lerp(T p, const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a, "lerp");
  require_defined(b, "lerp");
  if (a.shape() != b.shape())
    throw ShapeError("lerp: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
  std::vector<T> out;
  if (p == T(0)) {
    out = b.values();
  } else if (p == T(1)) {
    out = a.values();
  } else {
    out.resize(a.numel());
    K<T>().lerp(out.size(), p, a.values().data(), b.values().data(), out.data());
  }
  return make<T>(a.shape(), std::move(out), {&a, &b}, "lerp",
                 [p](const NodeT<T>&, const std::vector<T>& g, auto& ig) {
                   if (ig[0]) K<T>().axpy(g.size(), p, g.data(), ig[0]->data());
                   if (ig[1]) K<T>().axpy(g.size(), T(1) - p, g.data(), ig[1]->data());
                 });
}

// ---------------------------------------------------------------------------

#define QUANTART_INSTANTIATE_OPS(T)                                                            \
  template Tensor<T> elementwise(BinaryOp, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                         \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                         \
  template Tensor<T> exp(const Tensor<T>&);                                                   \
  template Tensor<T> log(const Tensor<T>&);                                                   \
  template Tensor<T> sqrt(const Tensor<T>&);                                                  \
  template Tensor<T> square(const Tensor<T>&);                                                \
  template Tensor<T> abs(const Tensor<T>&);                                                   \
  template Tensor<T> tanh(const Tensor<T>&);                                                  \
  template Tensor<T> sigmoid(const Tensor<T>&);                                               \
  template Tensor<T> silu(const Tensor<T>&);                                                  \
  template Tensor<T> relu(const Tensor<T>&);                                                  \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                         \
  template Tensor<T> softplus(const Tensor<T>&);                                              \
  template Tensor<T> sum(const Tensor<T>&);                                                   \
  template Tensor<T> mean(const Tensor<T>&);                                                  \
  template Tensor<T> sum_lastdim(const Tensor<T>&);                                           \
  template Tensor<T> mean_lastdim(const Tensor<T>&);                                          \
  template Tensor<T> center_lastdim(const Tensor<T>&);                                        \
  template Tensor<T> l2_norm_lastdim(const Tensor<T>&);                                       \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                        \
  template Tensor<T> transpose_last2(const Tensor<T>&);                                       \
  template Tensor<T> to_tokens(const Tensor<T>&);                                             \
  template Tensor<T> from_tokens(const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, \
                            std::size_t);                                                     \
  template Tensor<T> group_norm(const Tensor<T>&, std::size_t, const Tensor<T>&,              \
                                const Tensor<T>&, T);                                         \
  template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                    \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                  \
  template Tensor<T> stop_gradient(const Tensor<T>&);                                         \
  template Tensor<T> straight_through(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::int32_t>&);         \
  template Tensor<T> lerp(T, const Tensor<T>&, const Tensor<T>&);

QUANTART_INSTANTIATE_OPS(float)
QUANTART_INSTANTIATE_OPS(double)

}  // namespace quantart

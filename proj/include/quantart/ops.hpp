#pragma once
// Differentiable tensor ops. All ops are explicitly instantiated for float
// and double.
//
// Layout conventions: images and feature maps are B x C x H x W, token
// sequences are B x N x C. Convolution is cross-correlation (the kernel is
// not flipped), matching the usual deep-learning convention.
//
// Broadcasting is limited to two cases: b is a single element, or b's shape
// equals a trailing suffix of a's shape.

#include <cstdint>
#include <vector>

#include "quantart/tensor.hpp"

namespace quantart {

enum class BinaryOp { add, sub, mul, div };

template <class T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::add, a, b); }
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::sub, a, b); }
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::mul, a, b); }
template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::div, a, b); }

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <class T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s);
template <class T>
Tensor<T> neg(const Tensor<T>& a) { return mul_scalar(a, T(-1)); }

template <class T> Tensor<T> exp(const Tensor<T>& x);
template <class T> Tensor<T> log(const Tensor<T>& x);
template <class T> Tensor<T> sqrt(const Tensor<T>& x);
template <class T> Tensor<T> square(const Tensor<T>& x);
template <class T> Tensor<T> abs(const Tensor<T>& x);
template <class T> Tensor<T> tanh(const Tensor<T>& x);
template <class T> Tensor<T> sigmoid(const Tensor<T>& x);
template <class T> Tensor<T> silu(const Tensor<T>& x);
template <class T> Tensor<T> relu(const Tensor<T>& x);
template <class T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
// log(1 + e^x), evaluated without overflow.
template <class T> Tensor<T> softplus(const Tensor<T>& x);

template <class T> Tensor<T> sum(const Tensor<T>& x);
template <class T> Tensor<T> mean(const Tensor<T>& x);
// Reductions over the last axis; the result drops that axis.
template <class T> Tensor<T> sum_lastdim(const Tensor<T>& x);
template <class T> Tensor<T> mean_lastdim(const Tensor<T>& x);
// x minus its mean along the last axis.
template <class T> Tensor<T> center_lastdim(const Tensor<T>& x);
// Euclidean norm along the last axis. The gradient at a zero vector is taken
// as zero (a valid subgradient).
template <class T> Tensor<T> l2_norm_lastdim(const Tensor<T>& x);

template <class T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
// [..., m, n] -> [..., n, m]
template <class T> Tensor<T> transpose_last2(const Tensor<T>& x);

// a[m,k] * b[k,n]
template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// a[B,m,k] * b[B,k,n]
template <class T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);

// x[B,C,H,W] (*) kernel[O,C,k,k] + bias[O]; bias may be undefined.
// Output spatial size floor((H + 2*pad - k) / stride) + 1, zero padding.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad);

// Group normalization over (C/groups, H, W) per sample with per-channel affine.
template <class T>
Tensor<T> group_norm(const Tensor<T>& x, std::size_t groups, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = T(1e-5));

template <class T> Tensor<T> upsample_nearest2x(const Tensor<T>& x);

// Max-subtracted softmax along axis.
template <class T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

// Forward: bit-identical copy of x. Backward: contributes nothing to x.
template <class T> Tensor<T> stop_gradient(const Tensor<T>& x);

// Forward: value of q. Backward: the incoming gradient flows to z unchanged
// and nothing flows to q.
template <class T> Tensor<T> straight_through(const Tensor<T>& z, const Tensor<T>& q);

// rows[i] = table[index[i]] for table [N,d]; gradients scatter-add into table.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::int32_t>& index);

// p*a + (1-p)*b, exact endpoint copies at p == 0 and p == 1.
template <class T> Tensor<T> lerp(T p, const Tensor<T>& a, const Tensor<T>& b);

// [B,C,H,W] -> [B,H*W,C] and back.
template <class T> Tensor<T> to_tokens(const Tensor<T>& x);
template <class T> Tensor<T> from_tokens(const Tensor<T>& t, std::size_t h, std::size_t w);

template <class T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <class T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

}  // namespace quantart

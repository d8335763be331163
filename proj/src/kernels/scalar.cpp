#include "quantart/kernels.hpp"

namespace quantart::kernels {
namespace {

template <class T>
void gemm_scalar(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
                 bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    }
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void add_scalar(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <class T>
void sub_scalar(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <class T>
void mul_scalar(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <class T>
void axpy_scalar(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void scale_scalar(std::size_t n, T alpha, const T* x, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <class T>
void lerp_scalar(std::size_t n, T p, const T* a, const T* b, T* out) {
  const T q = T(1) - p;
  for (std::size_t i = 0; i < n; ++i) out[i] = p * a[i] + q * b[i];
}

template <class T>
void nearest_scalar(std::size_t m, std::size_t n_codes, std::size_t d, const T* z,
                    const T* codes_t, std::int32_t* index, T* best) {
  for (std::size_t r = 0; r < m; ++r) {
    const T* zr = z + r * d;
    T best_dist = T(0);
    std::int32_t best_k = -1;
    for (std::size_t k = 0; k < n_codes; ++k) {
      T acc = T(0);
      for (std::size_t c = 0; c < d; ++c) {
        const T diff = zr[c] - codes_t[c * n_codes + k];
        acc += diff * diff;
      }
      if (best_k < 0 || acc < best_dist) {
        best_dist = acc;
        best_k = static_cast<std::int32_t>(k);
      }
    }
    index[r] = best_k;
    if (best) best[r] = best_dist;
  }
}

template <class T>
KernelTable<T> make_scalar() {
  return KernelTable<T>{&gemm_scalar<T>, &add_scalar<T>,   &sub_scalar<T>,  &mul_scalar<T>,
                        &axpy_scalar<T>, &scale_scalar<T>, &lerp_scalar<T>, &nearest_scalar<T>};
}

}  // namespace

template <class T>
const KernelTable<T>& scalar_table() {
  static const KernelTable<T> t = make_scalar<T>();
  return t;
}

template const KernelTable<float>& scalar_table<float>();
template const KernelTable<double>& scalar_table<double>();

}  // namespace quantart::kernels

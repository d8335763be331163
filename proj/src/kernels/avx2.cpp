// AVX2 variants of the scalar kernels. This translation unit is the only one
// compiled with -mavx2; it deliberately avoids standard-library templates so
// no AVX2-encoded inline functions leak into other translation units.
//
// Accumulation order per output element matches the scalar loops exactly and
// no FMA is used, so results are bit-identical to the reference kernels.

#include "quantart/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#define QUANTART_HAVE_AVX2_TU 1
#include <immintrin.h>
#else
#define QUANTART_HAVE_AVX2_TU 0
#endif

namespace quantart::kernels {

#if QUANTART_HAVE_AVX2_TU
namespace {

struct F32 {
  using T = float;
  using V = __m256;
  static constexpr std::size_t W = 8;
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V set1(T x) { return _mm256_set1_ps(x); }
  static V zero() { return _mm256_setzero_ps(); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static V sub(V a, V b) { return _mm256_sub_ps(a, b); }
  static V mul(V a, V b) { return _mm256_mul_ps(a, b); }
};

struct F64 {
  using T = double;
  using V = __m256d;
  static constexpr std::size_t W = 4;
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V set1(T x) { return _mm256_set1_pd(x); }
  static V zero() { return _mm256_setzero_pd(); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static V sub(V a, V b) { return _mm256_sub_pd(a, b); }
  static V mul(V a, V b) { return _mm256_mul_pd(a, b); }
};

template <class S>
void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const typename S::T* a,
               const typename S::T* b, typename S::T* c, bool accumulate) {
  using T = typename S::T;
  using V = typename S::V;
  constexpr std::size_t W = S::W;
  constexpr std::size_t MR = 4;
  constexpr std::size_t NR = 2 * W;

  std::size_t i0 = 0;
  for (; i0 + MR <= m; i0 += MR) {
    std::size_t j0 = 0;
    for (; j0 + NR <= n; j0 += NR) {
      V acc[MR][2];
      for (std::size_t r = 0; r < MR; ++r) {
        T* crow = c + (i0 + r) * n + j0;
        acc[r][0] = accumulate ? S::load(crow) : S::zero();
        acc[r][1] = accumulate ? S::load(crow + W) : S::zero();
      }
      for (std::size_t p = 0; p < k; ++p) {
        const T* brow = b + p * n + j0;
        const V b0 = S::load(brow);
        const V b1 = S::load(brow + W);
        for (std::size_t r = 0; r < MR; ++r) {
          const V av = S::set1(a[(i0 + r) * k + p]);
          acc[r][0] = S::add(acc[r][0], S::mul(av, b0));
          acc[r][1] = S::add(acc[r][1], S::mul(av, b1));
        }
      }
      for (std::size_t r = 0; r < MR; ++r) {
        T* crow = c + (i0 + r) * n + j0;
        S::store(crow, acc[r][0]);
        S::store(crow + W, acc[r][1]);
      }
    }
    for (; j0 + W <= n; j0 += W) {
      V acc[MR];
      for (std::size_t r = 0; r < MR; ++r)
        acc[r] = accumulate ? S::load(c + (i0 + r) * n + j0) : S::zero();
      for (std::size_t p = 0; p < k; ++p) {
        const V b0 = S::load(b + p * n + j0);
        for (std::size_t r = 0; r < MR; ++r)
          acc[r] = S::add(acc[r], S::mul(S::set1(a[(i0 + r) * k + p]), b0));
      }
      for (std::size_t r = 0; r < MR; ++r) S::store(c + (i0 + r) * n + j0, acc[r]);
    }
    for (; j0 < n; ++j0) {
      for (std::size_t r = 0; r < MR; ++r) {
        T acc = accumulate ? c[(i0 + r) * n + j0] : T(0);
        for (std::size_t p = 0; p < k; ++p) acc += a[(i0 + r) * k + p] * b[p * n + j0];
        c[(i0 + r) * n + j0] = acc;
      }
    }
  }
  for (; i0 < m; ++i0) {
    T* crow = c + i0 * n;
    std::size_t j0 = 0;
    for (; j0 + W <= n; j0 += W) {
      V acc = accumulate ? S::load(crow + j0) : S::zero();
      for (std::size_t p = 0; p < k; ++p)
        acc = S::add(acc, S::mul(S::set1(a[i0 * k + p]), S::load(b + p * n + j0)));
      S::store(crow + j0, acc);
    }
    for (; j0 < n; ++j0) {
      T acc = accumulate ? crow[j0] : T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[i0 * k + p] * b[p * n + j0];
      crow[j0] = acc;
    }
  }
}

template <class S, class VOp, class SOp>
void binary_avx2(std::size_t n, const typename S::T* a, const typename S::T* b,
                 typename S::T* out, VOp vop, SOp sop) {
  std::size_t i = 0;
  for (; i + S::W <= n; i += S::W) S::store(out + i, vop(S::load(a + i), S::load(b + i)));
  for (; i < n; ++i) out[i] = sop(a[i], b[i]);
}

template <class S>
void add_avx2(std::size_t n, const typename S::T* a, const typename S::T* b, typename S::T* out) {
  using T = typename S::T;
  binary_avx2<S>(n, a, b, out, [](auto x, auto y) { return S::add(x, y); },
                 [](T x, T y) { return x + y; });
}

template <class S>
void sub_avx2(std::size_t n, const typename S::T* a, const typename S::T* b, typename S::T* out) {
  using T = typename S::T;
  binary_avx2<S>(n, a, b, out, [](auto x, auto y) { return S::sub(x, y); },
                 [](T x, T y) { return x - y; });
}

template <class S>
void mul_avx2(std::size_t n, const typename S::T* a, const typename S::T* b, typename S::T* out) {
  using T = typename S::T;
  binary_avx2<S>(n, a, b, out, [](auto x, auto y) { return S::mul(x, y); },
                 [](T x, T y) { return x * y; });
}

template <class S>
void axpy_avx2(std::size_t n, typename S::T alpha, const typename S::T* x, typename S::T* y) {
  const auto av = S::set1(alpha);
  std::size_t i = 0;
  for (; i + S::W <= n; i += S::W) S::store(y + i, S::add(S::load(y + i), S::mul(av, S::load(x + i))));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <class S>
void scale_avx2(std::size_t n, typename S::T alpha, const typename S::T* x, typename S::T* out) {
  const auto av = S::set1(alpha);
  std::size_t i = 0;
  for (; i + S::W <= n; i += S::W) S::store(out + i, S::mul(av, S::load(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

template <class S>
void lerp_avx2(std::size_t n, typename S::T p, const typename S::T* a, const typename S::T* b,
               typename S::T* out) {
  using T = typename S::T;
  const T q = T(1) - p;
  const auto pv = S::set1(p);
  const auto qv = S::set1(q);
  std::size_t i = 0;
  for (; i + S::W <= n; i += S::W)
    S::store(out + i, S::add(S::mul(pv, S::load(a + i)), S::mul(qv, S::load(b + i))));
  for (; i < n; ++i) out[i] = p * a[i] + q * b[i];
}

template <class S>
void nearest_avx2(std::size_t m, std::size_t n_codes, std::size_t d, const typename S::T* z,
                  const typename S::T* codes_t, std::int32_t* index, typename S::T* best) {
  using T = typename S::T;
  using V = typename S::V;
  constexpr std::size_t W = S::W;
  constexpr std::size_t KB = 4 * W;
  alignas(32) T dist[KB];

  for (std::size_t r = 0; r < m; ++r) {
    const T* zr = z + r * d;
    T best_dist = T(0);
    std::int32_t best_k = -1;
    auto consider = [&](std::size_t k, T acc) {
      if (best_k < 0 || acc < best_dist) {
        best_dist = acc;
        best_k = static_cast<std::int32_t>(k);
      }
    };
    std::size_t k0 = 0;
    for (; k0 + KB <= n_codes; k0 += KB) {
      V acc0 = S::zero(), acc1 = S::zero(), acc2 = S::zero(), acc3 = S::zero();
      for (std::size_t c = 0; c < d; ++c) {
        const V zc = S::set1(zr[c]);
        const T* row = codes_t + c * n_codes + k0;
        const V d0 = S::sub(zc, S::load(row));
        const V d1 = S::sub(zc, S::load(row + W));
        const V d2 = S::sub(zc, S::load(row + 2 * W));
        const V d3 = S::sub(zc, S::load(row + 3 * W));
        acc0 = S::add(acc0, S::mul(d0, d0));
        acc1 = S::add(acc1, S::mul(d1, d1));
        acc2 = S::add(acc2, S::mul(d2, d2));
        acc3 = S::add(acc3, S::mul(d3, d3));
      }
      S::store(dist, acc0);
      S::store(dist + W, acc1);
      S::store(dist + 2 * W, acc2);
      S::store(dist + 3 * W, acc3);
      for (std::size_t j = 0; j < KB; ++j) consider(k0 + j, dist[j]);
    }
    for (; k0 + W <= n_codes; k0 += W) {
      V acc = S::zero();
      for (std::size_t c = 0; c < d; ++c) {
        const V diff = S::sub(S::set1(zr[c]), S::load(codes_t + c * n_codes + k0));
        acc = S::add(acc, S::mul(diff, diff));
      }
      S::store(dist, acc);
      for (std::size_t j = 0; j < W; ++j) consider(k0 + j, dist[j]);
    }
    for (; k0 < n_codes; ++k0) {
      T acc = T(0);
      for (std::size_t c = 0; c < d; ++c) {
        const T diff = zr[c] - codes_t[c * n_codes + k0];
        acc += diff * diff;
      }
      consider(k0, acc);
    }
    index[r] = best_k;
    if (best) best[r] = best_dist;
  }
}

template <class S>
KernelTable<typename S::T> make_avx2() {
  return KernelTable<typename S::T>{&gemm_avx2<S>, &add_avx2<S>,   &sub_avx2<S>,  &mul_avx2<S>,
                                    &axpy_avx2<S>, &scale_avx2<S>, &lerp_avx2<S>, &nearest_avx2<S>};
}

}  // namespace

template <>
const KernelTable<float>& avx2_table<float>() {
  static const KernelTable<float> t = make_avx2<F32>();
  return t;
}

template <>
const KernelTable<double>& avx2_table<double>() {
  static const KernelTable<double> t = make_avx2<F64>();
  return t;
}

bool avx2_available() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
}

#else

template <>
const KernelTable<float>& avx2_table<float>() {
  return scalar_table<float>();
}

template <>
const KernelTable<double>& avx2_table<double>() {
  return scalar_table<double>();
}

bool avx2_available() { return false; }

#endif

}  // namespace quantart::kernels

#pragma once
// Data-parallel inner loops used by the tensor ops.
//
// Every kernel has a scalar reference implementation and an AVX2 variant.
// The AVX2 variants keep the per-element accumulation order of the scalar
// loops and never use fused multiply-add, so both backends produce
// bit-identical results. The active backend is chosen once at startup from
// CPUID and can be forced with QUANTART_KERNELS=scalar|avx2.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace quantart::kernels {

enum class Backend { scalar, avx2 };

template <class T>
struct KernelTable {
  // c[m,n] = a[m,k] * b[k,n]  (c is overwritten unless accumulate)
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
               bool accumulate);
  void (*add)(std::size_t n, const T* a, const T* b, T* out);
  void (*sub)(std::size_t n, const T* a, const T* b, T* out);
  void (*mul)(std::size_t n, const T* a, const T* b, T* out);
  // y += alpha * x
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
  // out = alpha * x
  void (*scale)(std::size_t n, T alpha, const T* x, T* out);
  // out = p * a + (1 - p) * b, with (1 - p) computed once
  void (*lerp)(std::size_t n, T p, const T* a, const T* b, T* out);
  // For each of m query rows of width d, the index of the nearest of n_codes
  // codes by squared L2 distance; ties go to the lowest index. codes_t is the
  // codebook transposed to d x n_codes. best may be null.
  void (*nearest)(std::size_t m, std::size_t n_codes, std::size_t d, const T* z, const T* codes_t,
                  std::int32_t* index, T* best);
};

template <class T>
const KernelTable<T>& scalar_table();

template <class T>
const KernelTable<T>& avx2_table();

bool avx2_available();

Backend active_backend();
// Throws std::invalid_argument when the requested backend is unavailable.
void set_backend(Backend b);
std::string_view backend_name(Backend b);

template <class T>
const KernelTable<T>& table();

}  // namespace quantart::kernels

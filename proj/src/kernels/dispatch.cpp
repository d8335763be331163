#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "quantart/kernels.hpp"

namespace quantart::kernels {
namespace {

Backend detect() {
  if (const char* env = std::getenv("QUANTART_KERNELS")) {
    const std::string v(env);
    if (v == "scalar") return Backend::scalar;
    if (v == "avx2" && avx2_available()) return Backend::avx2;
  }
  return avx2_available() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{detect()};
  return b;
}

}  // namespace

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_available())
    throw std::invalid_argument("AVX2 kernels requested but the CPU does not support AVX2");
  current().store(b, std::memory_order_relaxed);
}

std::string_view backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

template <class T>
const KernelTable<T>& table() {
  return active_backend() == Backend::avx2 ? avx2_table<T>() : scalar_table<T>();
}

template const KernelTable<float>& table<float>();
template const KernelTable<double>& table<double>();

}  // namespace quantart::kernels

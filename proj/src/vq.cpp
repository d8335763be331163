#include "quantart/vq.hpp"

#include <cmath>

#include "quantart/kernels.hpp"

namespace quantart {

std::string to_string(Domain d) { return d == Domain::photo ? "photo" : "art"; }

template <class T>
Codebook<T>::Codebook(std::size_t n, std::size_t dim, Domain domain, Rng& rng) : domain_(domain) {
  if (n == 0 || dim == 0) throw ValueError("codebook needs N >= 1 and d >= 1");
  const double bound = 1.0 / static_cast<double>(n);
  entries = Tensor<T>::uniform({n, dim}, rng, -bound, bound, true);
}

template <class T>
Codebook<T> Codebook<T>::from_entries(Tensor<T> e, Domain domain) {
  if (e.ndim() != 2) throw ShapeError("codebook entries must be N x d, got " + to_string(e.shape()));
  Codebook cb;
  cb.entries = std::move(e);
  cb.domain_ = domain;
  return cb;
}

template <class T>
std::vector<std::int32_t> nearest_entries(std::span<const T> rows, std::size_t d,
                                          const Tensor<T>& entries) {
  if (entries.ndim() != 2 || entries.dim(1) != d)
    throw ShapeError("quantize: vectors of width " + std::to_string(d) + " against codebook " +
                     to_string(entries.shape()));
  const std::size_t n = entries.dim(0);
  const std::size_t m = rows.size() / d;
  std::vector<T> codes_t(n * d);
  const auto& ev = entries.values();
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t c = 0; c < d; ++c) codes_t[c * n + k] = ev[k * d + c];
  std::vector<std::int32_t> index(m);
  kernels::table<T>().nearest(m, n, d, rows.data(), codes_t.data(), index.data(), nullptr);
  return index;
}

template <class T>
QuantizationResult<T> quantize(const Tensor<T>& z, const Codebook<T>& codebook) {
  if (z.ndim() != 4 || z.dim(1) != codebook.dim())
    throw ShapeError("quantize: feature map " + to_string(z.shape()) + " does not have " +
                     std::to_string(codebook.dim()) + " channels");
  const std::size_t B = z.dim(0), d = z.dim(1), h = z.dim(2), w = z.dim(3);
  QuantizationResult<T> r;
  {
    NoGradGuard no_grad;
    const auto tokens = to_tokens(z);
    r.indices = nearest_entries<T>(tokens.data(), d, codebook.entries);
  }
  r.index_shape = {B, h, w};
  auto rows = gather_rows(codebook.entries, r.indices);
  r.quantized = from_tokens(reshape(rows, Shape{B, h * w, d}), h, w);
  r.straight_through = straight_through(z, r.quantized);
  return r;
}

template <class T>
VqLosses<T> vq_losses(const Tensor<T>& z, const QuantizationResult<T>& q) {
  if (z.shape() != q.quantized.shape())
    throw ShapeError("vq_losses: z " + to_string(z.shape()) + " vs quantized " +
                     to_string(q.quantized.shape()));
  VqLosses<T> out;
  out.codebook_term = mean(square(sub(stop_gradient(z), q.quantized)));
  out.commitment_term = mean(square(sub(stop_gradient(q.quantized), z)));
  return out;
}

std::size_t UsageStats::used() const {
  std::size_t n = 0;
  for (auto c : histogram) n += c > 0;
  return n;
}

UsageStats usage_stats(std::span<const std::int32_t> indices, std::size_t codebook_size) {
  if (indices.empty()) throw ValueError("usage_stats: no indices given");
  UsageStats s;
  s.histogram.assign(codebook_size, 0);
  for (auto i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= codebook_size)
      throw ValueError("usage_stats: index " + std::to_string(i) + " outside [0," +
                       std::to_string(codebook_size) + ")");
    ++s.histogram[static_cast<std::size_t>(i)];
  }
  const double total = static_cast<double>(indices.size());
  double entropy = 0.0;
  for (auto c : s.histogram) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    entropy -= p * std::log(p);
  }
  s.perplexity = std::exp(entropy);
  return s;
}

template <class T>
std::size_t reseed_dead_entries(Codebook<T>& codebook, const UsageStats& usage, const Tensor<T>& z,
                                Rng& rng) {
  if (usage.histogram.size() != codebook.size())
    throw ShapeError("reseed_dead_entries: usage histogram does not match codebook size");
  NoGradGuard no_grad;
  const auto tokens = to_tokens(z);
  const std::size_t d = codebook.dim();
  const std::size_t rows = tokens.numel() / d;
  std::uniform_int_distribution<std::size_t> pick(0, rows - 1);
  std::vector<T> e = codebook.entries.values();
  std::size_t replaced = 0;
  for (std::size_t k = 0; k < codebook.size(); ++k) {
    if (usage.histogram[k] != 0) continue;
    const std::size_t r = pick(rng);
    for (std::size_t c = 0; c < d; ++c) e[k * d + c] = tokens.values()[r * d + c];
    ++replaced;
  }
  if (replaced) codebook.entries.assign(std::move(e));
  return replaced;
}

#define QUANTART_INSTANTIATE_VQ(T)                                                                 \
  template class Codebook<T>;                                                                      \
  template std::vector<std::int32_t> nearest_entries(std::span<const T>, std::size_t,             \
                                                     const Tensor<T>&);                            \
  template QuantizationResult<T> quantize(const Tensor<T>&, const Codebook<T>&);                  \
  template VqLosses<T> vq_losses(const Tensor<T>&, const QuantizationResult<T>&);                 \
  template std::size_t reseed_dead_entries(Codebook<T>&, const UsageStats&, const Tensor<T>&, Rng&);

QUANTART_INSTANTIATE_VQ(float)
QUANTART_INSTANTIATE_VQ(double)

}  // namespace quantart

#pragma once
// Learnable codebooks and nearest-entry vector quantization.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "quantart/nn.hpp"

namespace quantart {

enum class Domain { photo, art };

std::string to_string(Domain d);

template <class T>
class Codebook {
 public:
  using Scalar = T;
  Codebook() = default;
  // Entries drawn uniformly from [-1/N, 1/N].
  Codebook(std::size_t entries, std::size_t dim, Domain domain, Rng& rng);
  static Codebook from_entries(Tensor<T> entries, Domain domain);

  std::size_t size() const { return entries.dim(0); }
  std::size_t dim() const { return entries.dim(1); }
  Domain domain() const { return domain_; }
  void collect(const std::string& prefix, nn::ParamList<T>& out) { out.push_back({prefix + "entries", &entries}); }

  Tensor<T> entries;  // N x d

 private:
  Domain domain_ = Domain::photo;
};

template <class T>
struct QuantizationResult {
  // Codebook rows laid out like z. Gradients reach the codebook entries.
  Tensor<T> quantized;
  // Same value as quantized; gradients pass to z unchanged.
  Tensor<T> straight_through;
  // Row-major B x h x w grid of entry indices.
  std::vector<std::int32_t> indices;
  Shape index_shape;
};

// Nearest entry by squared L2 distance for each row of a (rows x d) matrix;
// ties resolve to the lowest index.
template <class T>
std::vector<std::int32_t> nearest_entries(std::span<const T> rows, std::size_t d,
                                          const Tensor<T>& entries);

// z: B x d x h x w. Throws ShapeError when z's channel count differs from d.
template <class T>
QuantizationResult<T> quantize(const Tensor<T>& z, const Codebook<T>& codebook);

template <class T>
struct VqLosses {
  Tensor<T> codebook_term;    // mean (sg[z] - q)^2, reaches entries only
  Tensor<T> commitment_term;  // mean (sg[q] - z)^2, reaches the encoder only
};

template <class T>
VqLosses<T> vq_losses(const Tensor<T>& z, const QuantizationResult<T>& q);

struct UsageStats {
  std::vector<std::size_t> histogram;
  double perplexity = 1.0;  // exp(entropy of the empirical index distribution)
  std::size_t used() const;
};

// Throws ValueError on empty input or an index outside [0, codebook_size).
UsageStats usage_stats(std::span<const std::int32_t> indices, std::size_t codebook_size);

// Reinitializes every unused entry with a randomly chosen encoder output
// vector from z (B x d x h x w). Returns the number of entries replaced.
template <class T>
std::size_t reseed_dead_entries(Codebook<T>& codebook, const UsageStats& usage, const Tensor<T>& z,
                                Rng& rng);

}  // namespace quantart

#pragma once
// Inference: alpha/beta feature fusion, the fused art decoder, and stylize().

#include "quantart/bundle.hpp"

namespace quantart {

struct FusionParams {
  double alpha = 1.0;  // quantized vs continuous path
  double beta = 1.0;   // stylized vs content feature
  // Throws ValueError (no clamping) when either lies outside [0, 1].
  void validate() const;
};

enum class DecoderFusion { parameters, outputs };

// p*a + (1-p)*b; p == 0 and p == 1 return exact copies of b and a.
template <class T>
Tensor<T> fuse(double p, const Tensor<T>& a, const Tensor<T>& b);

// fuse(alpha, fuse(beta, zhat_y, zhat_c), fuse(beta, z_y, z_c))
template <class T>
Tensor<T> fuse_features(const Tensor<T>& zhat_y, const Tensor<T>& zhat_c, const Tensor<T>& z_y,
                        const Tensor<T>& z_c, const FusionParams& params);

// Per-parameter fuse(alpha, quantized, continuous) into a fresh decoder.
template <class T>
nn::Decoder<T> build_fused_decoder(const nn::Decoder<T>& quantized, const nn::Decoder<T>& continuous,
                                   double alpha);

template <class T>
struct StylizeTrace {
  Tensor<T> z_c, z_s, z_y;
  // Undefined when the bundle has no quantized path.
  Tensor<T> zhat_c, zhat_s, zhat_y, pre_quant;
  std::vector<std::int32_t> zhat_y_indices;
  Tensor<T> z_test;
  Tensor<T> output;
};

// content: B x 3 x H x W, style: B x 3 x H' x W', values in [-1, 1].
template <class T>
StylizeTrace<T> stylize_trace(const Tensor<T>& content, const Tensor<T>& style, const FusionParams& params,
                              const ModelBundle<T>& bundle, DecoderFusion mode = DecoderFusion::parameters);

template <class T>
Tensor<T> stylize(const Tensor<T>& content, const Tensor<T>& style, const FusionParams& params,
                  const ModelBundle<T>& bundle, DecoderFusion mode = DecoderFusion::parameters);

}  // namespace quantart

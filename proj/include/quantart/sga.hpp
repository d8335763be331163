#pragma once
// Style-guided attention: attention block, SGA module, M-deep stack, and the
// feature-level content / style / adversarial objectives.

#include "quantart/autoencoder.hpp"

namespace quantart {

// softmax(f_q(q) f_k(k)^T) f_v(v) + q over flattened spatial positions.
// q is B x d x h x w, k and v are B x d x h' x w'.
template <class T>
class AttentionBlock {
 public:
  using Scalar = T;
  AttentionBlock() = default;
  AttentionBlock(std::size_t dim, bool scale, Rng& rng);
  Tensor<T> forward(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) const;
  // B x (h*w) x (h'*w') attention weights.
  Tensor<T> weights(const Tensor<T>& q, const Tensor<T>& k) const;
  void collect(const std::string& prefix, nn::ParamList<T>& out);
  std::size_t dim() const { return f_q.weight.dim(0); }

  nn::Linear<T> f_q;
  nn::Linear<T> f_k;
  nn::Linear<T> f_v;

 private:
  bool scale_ = false;
};

// out = Attn(Attn(r, r, r), s, s) with r = ResBlock(z_c).
// self_only mode replaces the second block's key/value with its own query.
template <class T>
class SGAModule {
 public:
  using Scalar = T;
  SGAModule() = default;
  SGAModule(std::size_t dim, std::size_t groups, nn::Activation act, const SgaConfig& cfg, Rng& rng);
  Tensor<T> forward(const Tensor<T>& z_c, const Tensor<T>& z_s) const;
  void collect(const std::string& prefix, nn::ParamList<T>& out);

  nn::ResBlock<T> res;
  AttentionBlock<T> self_attn;
  AttentionBlock<T> cross_attn;

 private:
  SgaConfig cfg_;
};

template <class T>
class SGAStack {
 public:
  using Scalar = T;
  SGAStack() = default;
  SGAStack(std::size_t dim, std::size_t groups, nn::Activation act, const SgaConfig& cfg, Rng& rng);
  Tensor<T> forward(const Tensor<T>& z_c, const Tensor<T>& z_s) const;
  void collect(const std::string& prefix, nn::ParamList<T>& out);
  const SgaConfig& config() const { return cfg_; }

  std::vector<SGAModule<T>> modules;

 private:
  SgaConfig cfg_;
};

// mean (a - b)^2
template <class T>
Tensor<T> content_loss(const Tensor<T>& z_y, const Tensor<T>& z_c);

// Per-sample ||mu(a) - mu(b)||_2 + ||sigma(a) - sigma(b)||_2 over channel
// statistics taken across spatial positions, averaged over the batch.
// sigma = sqrt(population variance + 1e-6).
template <class T>
Tensor<T> style_loss(const Tensor<T>& z_y, const Tensor<T>& z_s);

template <class T>
struct SGALossReport {
  Tensor<T> content;
  Tensor<T> style;
  Tensor<T> featadv_gen;
  Tensor<T> featadv_disc;  // adversarial_value on (z_s, sg[z_y])
  Tensor<T> codebook;      // quantized path only, zero otherwise
  Tensor<T> total;
  double adv_weight = 0.0;
  Tensor<T> disc_loss() const { return neg(featadv_disc); }
};

template <class T>
SGALossReport<T> sga_losses(const Tensor<T>& z_y, const Tensor<T>& z_c, const Tensor<T>& z_s,
                            const nn::PatchDiscriminator<T>& disc, const LossWeights& w, double adv_weight);

template <class T>
struct QuantizedSGAResult {
  Tensor<T> zhat_y;     // exact rows of the art codebook (or pre_quant when not re-quantizing)
  Tensor<T> pre_quant;  // stack output
  std::vector<std::int32_t> indices;
};

template <class T>
QuantizedSGAResult<T> sga_quantized_forward(const SGAStack<T>& stack, const Tensor<T>& zhat_c,
                                            const Tensor<T>& zhat_s, const Codebook<T>& art_codebook,
                                            bool requantize = true);

// sga_losses evaluated on pre_quant plus mean (sg[zhat_y] - pre_quant)^2.
template <class T>
SGALossReport<T> sga_hat_loss(const Tensor<T>& zhat_c, const Tensor<T>& zhat_s, const Tensor<T>& zhat_y,
                              const Tensor<T>& pre_quant, const nn::PatchDiscriminator<T>& disc,
                              const LossWeights& w, double adv_weight);

template <class T>
double recompose(const SGALossReport<T>& r, const LossWeights& w);

}  // namespace quantart

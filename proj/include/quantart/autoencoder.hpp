#pragma once
// Stage-1 autoencoder pairs (continuous and quantized, one per domain) and
// their reconstruction / adversarial objectives.

#include <optional>

#include "quantart/config.hpp"
#include "quantart/vq.hpp"

namespace quantart {

// Value of log D(real) + log(1 - D(fake)) averaged over the logit grids,
// with D = sigmoid(logits). The discriminator maximizes it.
template <class T>
Tensor<T> adversarial_value(const Tensor<T>& real_logits, const Tensor<T>& fake_logits);

// Non-saturating generator loss: mean of -log D(fake).
template <class T>
Tensor<T> adversarial_generator_loss(const Tensor<T>& fake_logits);

template <class T>
class AutoencoderPair {
 public:
  using Scalar = T;
  AutoencoderPair() = default;
  AutoencoderPair(Domain domain, bool quantized, const ModelConfig& cfg, Rng& rng);

  // Encoder output before any quantization.
  Tensor<T> encode(const Tensor<T>& x) const { return encoder.forward(x); }
  bool quantized() const { return quantized_; }
  Domain domain() const { return domain_; }

  // encoder, decoder and codebook
  void collect_generator(const std::string& prefix, nn::ParamList<T>& out);
  void collect_discriminator(const std::string& prefix, nn::ParamList<T>& out);
  void collect(const std::string& prefix, nn::ParamList<T>& out);

  nn::Encoder<T> encoder;
  nn::Decoder<T> decoder;
  Codebook<T> codebook;  // defined only for quantized pairs
  nn::PatchDiscriminator<T> discriminator;

 private:
  Domain domain_ = Domain::photo;
  bool quantized_ = false;
};

template <class T>
struct Reconstruction {
  Tensor<T> x_rec;
  Tensor<T> latent;  // encoder output
  std::optional<QuantizationResult<T>> q;
};

// Continuous pair: D(E(x)). Quantized pair: D(ST(Q(E(x)))).
template <class T>
Reconstruction<T> reconstruct(const AutoencoderPair<T>& pair, const Tensor<T>& x);

template <class T>
struct StageOneLossReport {
  Tensor<T> recon_l1;
  Tensor<T> adv_gen;
  Tensor<T> adv_disc;  // adversarial_value on (x, sg[x_rec])
  Tensor<T> codebook_term;
  Tensor<T> commitment_term;
  // recon*w.recon + adv_weight*adv_gen + codebook*w.codebook + commitment*w.commitment
  Tensor<T> total;
  double adv_weight = 0.0;
  // What the discriminator minimizes.
  Tensor<T> disc_loss() const { return neg(adv_disc); }
};

template <class T>
StageOneLossReport<T> ae_loss(const Tensor<T>& x, const Tensor<T>& x_rec,
                              const nn::PatchDiscriminator<T>& disc, const LossWeights& w,
                              double adv_weight);

template <class T>
StageOneLossReport<T> vq_ae_loss(const Tensor<T>& x, const Tensor<T>& x_rec, const Tensor<T>& z,
                                 const QuantizationResult<T>& q, const nn::PatchDiscriminator<T>& disc,
                                 const LossWeights& w, double adv_weight);

// Sum of the weighted parts of a report, recomputed in double.
template <class T>
double recompose(const StageOneLossReport<T>& r, const LossWeights& w);

}  // namespace quantart

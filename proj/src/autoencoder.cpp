#include "quantart/autoencoder.hpp"

#include <cmath>

namespace quantart {

template <class T>
Tensor<T> adversarial_value(const Tensor<T>& real_logits, const Tensor<T>& fake_logits) {
  // log sigmoid(l) = -softplus(-l), log(1 - sigmoid(l)) = -softplus(l)
  auto real_term = mean(softplus(neg(real_logits)));
  auto fake_term = mean(softplus(fake_logits));
  return neg(add(real_term, fake_term));
}

template <class T>
Tensor<T> adversarial_generator_loss(const Tensor<T>& fake_logits) {
  return mean(softplus(neg(fake_logits)));
}

template <class T>
AutoencoderPair<T>::AutoencoderPair(Domain domain, bool quantized, const ModelConfig& cfg, Rng& rng)
    : domain_(domain), quantized_(quantized) {
  const auto stack = cfg.stack();
  encoder = nn::Encoder<T>(stack, rng);
  decoder = nn::Decoder<T>(stack, rng);
  if (quantized) codebook = Codebook<T>(cfg.codebook_size, cfg.latent_dim, domain, rng);
  discriminator = nn::PatchDiscriminator<T>(nn::DiscriminatorKind::image, cfg.channels, cfg.disc_channels, rng);
}

template <class T>
void AutoencoderPair<T>::collect_generator(const std::string& prefix, nn::ParamList<T>& out) {
  encoder.collect(prefix + "encoder.", out);
  decoder.collect(prefix + "decoder.", out);
  if (quantized_) codebook.collect(prefix + "codebook.", out);
}

template <class T>
void AutoencoderPair<T>::collect_discriminator(const std::string& prefix, nn::ParamList<T>& out) {
  discriminator.collect(prefix + "disc.", out);
}

template <class T>
void AutoencoderPair<T>::collect(const std::string& prefix, nn::ParamList<T>& out) {
  collect_generator(prefix, out);
  collect_discriminator(prefix, out);
}

template <class T>
Reconstruction<T> reconstruct(const AutoencoderPair<T>& pair, const Tensor<T>& x) {
  if (validation_enabled()) {
    for (T v : x.data())
      if (!(v >= T(-1) && v <= T(1)))
        throw ValueError("reconstruct: input value " + std::to_string(static_cast<double>(v)) +
                         " outside [-1, 1]");
  }
  Reconstruction<T> r;
  r.latent = pair.encode(x);
  if (pair.quantized()) {
    r.q = quantize(r.latent, pair.codebook);
    r.x_rec = pair.decoder.forward(r.q->straight_through);
  } else {
    r.x_rec = pair.decoder.forward(r.latent);
  }
  return r;
}

namespace {

template <class T>
Tensor<T> weighted(const Tensor<T>& t, double w) {
  return mul_scalar(t, static_cast<T>(w));
}

}  // namespace

template <class T>
StageOneLossReport<T> ae_loss(const Tensor<T>& x, const Tensor<T>& x_rec,
                              const nn::PatchDiscriminator<T>& disc, const LossWeights& w,
                              double adv_weight) {
  if (x.shape() != x_rec.shape())
    throw ShapeError("ae_loss: x " + to_string(x.shape()) + " vs x_rec " + to_string(x_rec.shape()));
  StageOneLossReport<T> r;
  r.adv_weight = adv_weight;
  r.recon_l1 = mean(abs(sub(x_rec, x)));
  r.adv_gen = adversarial_generator_loss(disc.forward(x_rec));
  r.adv_disc = adversarial_value(disc.forward(x), disc.forward(stop_gradient(x_rec)));
  r.codebook_term = Tensor<T>::scalar(T(0));
  r.commitment_term = Tensor<T>::scalar(T(0));
  r.total = add(weighted(r.recon_l1, w.recon), weighted(r.adv_gen, adv_weight));
  return r;
}

template <class T>
StageOneLossReport<T> vq_ae_loss(const Tensor<T>& x, const Tensor<T>& x_rec, const Tensor<T>& z,
                                 const QuantizationResult<T>& q, const nn::PatchDiscriminator<T>& disc,
                                 const LossWeights& w, double adv_weight) {
  auto r = ae_loss(x, x_rec, disc, w, adv_weight);
  auto vq = vq_losses(z, q);
  r.codebook_term = vq.codebook_term;
  r.commitment_term = vq.commitment_term;
  r.total = add(r.total, add(weighted(vq.codebook_term, w.codebook), weighted(vq.commitment_term, w.commitment)));
  return r;
}

template <class T>
double recompose(const StageOneLossReport<T>& r, const LossWeights& w) {
  return w.recon * static_cast<double>(r.recon_l1.item()) +
         r.adv_weight * static_cast<double>(r.adv_gen.item()) +
         w.codebook * static_cast<double>(r.codebook_term.item()) +
         w.commitment * static_cast<double>(r.commitment_term.item());
}

#define QUANTART_INSTANTIATE_AE(T)                                                                    \
  template Tensor<T> adversarial_value(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> adversarial_generator_loss(const Tensor<T>&);                                   \
  template class AutoencoderPair<T>;                                                                 \
  template Reconstruction<T> reconstruct(const AutoencoderPair<T>&, const Tensor<T>&);               \
  template StageOneLossReport<T> ae_loss(const Tensor<T>&, const Tensor<T>&,                          \
                                         const nn::PatchDiscriminator<T>&, const LossWeights&, double); \
  template StageOneLossReport<T> vq_ae_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                            const QuantizationResult<T>&,                             \
                                            const nn::PatchDiscriminator<T>&, const LossWeights&,     \
                                            double);                                                  \
  template double recompose(const StageOneLossReport<T>&, const LossWeights&);

QUANTART_INSTANTIATE_AE(float)
QUANTART_INSTANTIATE_AE(double)

}  // namespace quantart

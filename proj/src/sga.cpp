#include "quantart/sga.hpp"

#include <cmath>

namespace quantart {

namespace {

template <class T>
void check_map(const Tensor<T>& x, std::size_t d, const char* what) {
  if (x.ndim() != 4 || x.dim(1) != d)
    throw ShapeError(std::string(what) + ": expected B x " + std::to_string(d) + " x h x w, got " +
                     to_string(x.shape()));
}

}  // namespace

template <class T>
AttentionBlock<T>::AttentionBlock(std::size_t dim, bool scale, Rng& rng)
    : f_q(dim, dim, rng), f_k(dim, dim, rng), f_v(dim, dim, rng), scale_(scale) {}

template <class T>
Tensor<T> AttentionBlock<T>::weights(const Tensor<T>& q, const Tensor<T>& k) const {
  const std::size_t d = dim();
  check_map(q, d, "attention query");
  check_map(k, d, "attention key");
  if (q.dim(0) != k.dim(0))
    throw ShapeError("attention: batch sizes differ, q " + to_string(q.shape()) + " k " + to_string(k.shape()));
  auto qe = f_q.forward(to_tokens(q));
  auto ke = f_k.forward(to_tokens(k));
  auto logits = bmm(qe, transpose_last2(ke));
  if (scale_) logits = mul_scalar(logits, static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
  return softmax(logits, 2);
}

template <class T>
Tensor<T> AttentionBlock<T>::forward(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) const {
  check_map(v, dim(), "attention value");
  if (k.shape() != v.shape())
    throw ShapeError("attention: key " + to_string(k.shape()) + " and value " + to_string(v.shape()) +
                     " must match");
  auto a = weights(q, k);
  auto out = add(bmm(a, f_v.forward(to_tokens(v))), to_tokens(q));
  return from_tokens(out, q.dim(2), q.dim(3));
}

template <class T>
void AttentionBlock<T>::collect(const std::string& prefix, nn::ParamList<T>& out) {
  f_q.collect(prefix + "f_q.", out);
  f_k.collect(prefix + "f_k.", out);
  f_v.collect(prefix + "f_v.", out);
}

template <class T>
SGAModule<T>::SGAModule(std::size_t dim, std::size_t groups, nn::Activation act, const SgaConfig& cfg,
                        Rng& rng)
    : cfg_(cfg) {
  if (cfg.resblock) res = nn::ResBlock<T>(dim, dim, groups, act, rng);
  if (cfg.self_attn) self_attn = AttentionBlock<T>(dim, cfg.attn_scale, rng);
  cross_attn = AttentionBlock<T>(dim, cfg.attn_scale, rng);
}

template <class T>
Tensor<T> SGAModule<T>::forward(const Tensor<T>& z_c, const Tensor<T>& z_s) const {
  const std::size_t d = cross_attn.dim();
  check_map(z_c, d, "SGA content feature");
  check_map(z_s, d, "SGA style feature");
  auto h = cfg_.resblock ? res.forward(z_c) : z_c;
  if (cfg_.self_attn) h = self_attn.forward(h, h, h);
  if (cfg_.mode == SgaMode::self_only) return cross_attn.forward(h, h, h);
  return cross_attn.forward(h, z_s, z_s);
}

template <class T>
void SGAModule<T>::collect(const std::string& prefix, nn::ParamList<T>& out) {
  if (cfg_.resblock) res.collect(prefix + "res.", out);
  if (cfg_.self_attn) self_attn.collect(prefix + "self_attn.", out);
  cross_attn.collect(prefix + "cross_attn.", out);
}

template <class T>
SGAStack<T>::SGAStack(std::size_t dim, std::size_t groups, nn::Activation act, const SgaConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg.modules == 0) throw ValueError("SGA stack needs at least one module");
  for (std::size_t i = 0; i < cfg.modules; ++i) modules.emplace_back(dim, groups, act, cfg, rng);
}

template <class T>
Tensor<T> SGAStack<T>::forward(const Tensor<T>& z_c, const Tensor<T>& z_s) const {
  auto h = z_c;
  for (const auto& m : modules) h = m.forward(h, z_s);
  return h;
}

template <class T>
void SGAStack<T>::collect(const std::string& prefix, nn::ParamList<T>& out) {
  for (std::size_t i = 0; i < modules.size(); ++i) modules[i].collect(prefix + "module" + std::to_string(i) + ".", out);
}

// ---------------------------------------------------------------------------

template <class T>
Tensor<T> content_loss(const Tensor<T>& z_y, const Tensor<T>& z_c) {
  if (z_y.shape() != z_c.shape())
    throw ShapeError("content_loss: " + to_string(z_y.shape()) + " vs " + to_string(z_c.shape()));
  return mean(square(sub(z_y, z_c)));
}

namespace {

template <class T>
std::pair<Tensor<T>, Tensor<T>> channel_moments(const Tensor<T>& z) {
  auto flat = reshape(z, Shape{z.dim(0), z.dim(1), z.dim(2) * z.dim(3)});
  auto mu = mean_lastdim(flat);
  auto var = mean_lastdim(square(center_lastdim(flat)));
  return {mu, sqrt(add_scalar(var, T(1e-6)))};
}

}  // namespace

template <class T>
Tensor<T> style_loss(const Tensor<T>& z_y, const Tensor<T>& z_s) {
  if (z_y.ndim() != 4 || z_s.ndim() != 4 || z_y.dim(0) != z_s.dim(0) || z_y.dim(1) != z_s.dim(1))
    throw ShapeError("style_loss: " + to_string(z_y.shape()) + " vs " + to_string(z_s.shape()) +
                     " (batch and channels must agree)");
  auto [mu_y, sd_y] = channel_moments(z_y);
  auto [mu_s, sd_s] = channel_moments(z_s);
  auto per_sample = add(l2_norm_lastdim(sub(mu_y, mu_s)), l2_norm_lastdim(sub(sd_y, sd_s)));
  return mean(per_sample);
}

template <class T>
SGALossReport<T> sga_losses(const Tensor<T>& z_y, const Tensor<T>& z_c, const Tensor<T>& z_s,
                            const nn::PatchDiscriminator<T>& disc, const LossWeights& w, double adv_weight) {
  SGALossReport<T> r;
  r.adv_weight = adv_weight;
  r.content = content_loss(z_y, z_c);
  r.style = style_loss(z_y, z_s);
  r.featadv_gen = adversarial_generator_loss(disc.forward(z_y));
  r.featadv_disc = adversarial_value(disc.forward(z_s), disc.forward(stop_gradient(z_y)));
  r.codebook = Tensor<T>::scalar(T(0));
  r.total = add(add(mul_scalar(r.content, static_cast<T>(w.content)), mul_scalar(r.style, static_cast<T>(w.style))),
                mul_scalar(r.featadv_gen, static_cast<T>(adv_weight)));
  return r;
}

template <class T>
QuantizedSGAResult<T> sga_quantized_forward(const SGAStack<T>& stack, const Tensor<T>& zhat_c,
                                            const Tensor<T>& zhat_s, const Codebook<T>& art_codebook,
                                            bool requantize) {
  QuantizedSGAResult<T> r;
  r.pre_quant = stack.forward(zhat_c, zhat_s);
  if (!requantize) {
    r.zhat_y = r.pre_quant;
    return r;
  }
  auto q = quantize(stop_gradient(r.pre_quant), art_codebook);
  r.zhat_y = stop_gradient(q.quantized);
  r.indices = std::move(q.indices);
  return r;
}

template <class T>
SGALossReport<T> sga_hat_loss(const Tensor<T>& zhat_c, const Tensor<T>& zhat_s, const Tensor<T>& zhat_y,
                              const Tensor<T>& pre_quant, const nn::PatchDiscriminator<T>& disc,
                              const LossWeights& w, double adv_weight) {
  if (zhat_y.shape() != pre_quant.shape())
    throw ShapeError("sga_hat_loss: zhat_y " + to_string(zhat_y.shape()) + " vs pre_quant " +
                     to_string(pre_quant.shape()));
  auto r = sga_losses(pre_quant, zhat_c, zhat_s, disc, w, adv_weight);
  r.codebook = mean(square(sub(stop_gradient(zhat_y), pre_quant)));
  r.total = add(r.total, mul_scalar(r.codebook, static_cast<T>(w.sga_commitment)));
  return r;
}

template <class T>
double recompose(const SGALossReport<T>& r, const LossWeights& w) {
  return w.content * static_cast<double>(r.content.item()) + w.style * static_cast<double>(r.style.item()) +
         r.adv_weight * static_cast<double>(r.featadv_gen.item()) +
         w.sga_commitment * static_cast<double>(r.codebook.item());
}

#define QUANTART_INSTANTIATE_SGA(T)                                                                        \
  template class AttentionBlock<T>;                                                                        \
  template class SGAModule<T>;                                                                             \
  template class SGAStack<T>;                                                                              \
  template Tensor<T> content_loss(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> style_loss(const Tensor<T>&, const Tensor<T>&);                                       \
  template SGALossReport<T> sga_losses(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,               \
                                       const nn::PatchDiscriminator<T>&, const LossWeights&, double);      \
  template QuantizedSGAResult<T> sga_quantized_forward(const SGAStack<T>&, const Tensor<T>&,               \
                                                       const Tensor<T>&, const Codebook<T>&, bool);        \
  template SGALossReport<T> sga_hat_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                                         const Tensor<T>&, const nn::PatchDiscriminator<T>&,               \
                                         const LossWeights&, double);                                      \
  template double recompose(const SGALossReport<T>&, const LossWeights&);

QUANTART_INSTANTIATE_SGA(float)
QUANTART_INSTANTIATE_SGA(double)

}  // namespace quantart

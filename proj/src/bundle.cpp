#include "quantart/bundle.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_set>

#include "quantart/hash.hpp"

namespace quantart {

template <class T>
ModelBundle<T>::ModelBundle(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
  cfg.validate();
  Rng rng(seed);
  photo = AutoencoderPair<T>(Domain::photo, false, cfg, rng);
  art = AutoencoderPair<T>(Domain::art, false, cfg, rng);
  if (cfg.quantization) {
    photo_hat = AutoencoderPair<T>(Domain::photo, true, cfg, rng);
    art_hat = AutoencoderPair<T>(Domain::art, true, cfg, rng);
    if (cfg.shared_encoders || cfg.shared_autoencoders) {
      photo_hat.encoder = photo.encoder;
      art_hat.encoder = art.encoder;
    }
    if (cfg.shared_autoencoders) {
      photo_hat.decoder = photo.decoder;
      art_hat.decoder = art.decoder;
    }
  }
  sga = SGAStack<T>(cfg.latent_dim, cfg.groups, cfg.activation, cfg.sga, rng);
  feat_disc = nn::PatchDiscriminator<T>(nn::DiscriminatorKind::feature, cfg.latent_dim, cfg.feat_disc_channels, rng);
  if (cfg.quantization) {
    sga_hat = SGAStack<T>(cfg.latent_dim, cfg.groups, cfg.activation, cfg.sga, rng);
    feat_disc_hat =
        nn::PatchDiscriminator<T>(nn::DiscriminatorKind::feature, cfg.latent_dim, cfg.feat_disc_channels, rng);
  }
}

template <class T>
nn::ParamList<T> dedupe(nn::ParamList<T> params) {
  std::unordered_set<const void*> seen;
  nn::ParamList<T> out;
  for (auto& p : params)
    if (seen.insert(p.tensor->node().get()).second) out.push_back(p);
  return out;
}

template <class T>
nn::ParamList<T> ModelBundle<T>::stage1_generator_params() {
  nn::ParamList<T> out;
  photo.collect_generator("photo.", out);
  art.collect_generator("art.", out);
  if (quantized()) {
    photo_hat.collect_generator("photo_hat.", out);
    art_hat.collect_generator("art_hat.", out);
  }
  return dedupe(std::move(out));
}

template <class T>
nn::ParamList<T> ModelBundle<T>::stage1_discriminator_params() {
  nn::ParamList<T> out;
  photo.collect_discriminator("photo.", out);
  art.collect_discriminator("art.", out);
  if (quantized()) {
    photo_hat.collect_discriminator("photo_hat.", out);
    art_hat.collect_discriminator("art_hat.", out);
  }
  return out;
}

template <class T>
nn::ParamList<T> ModelBundle<T>::stage1_params() {
  auto out = stage1_generator_params();
  for (auto& p : stage1_discriminator_params()) out.push_back(p);
  return out;
}

template <class T>
nn::ParamList<T> ModelBundle<T>::stage2_generator_params() {
  nn::ParamList<T> out;
  sga.collect("sga.", out);
  if (quantized()) sga_hat.collect("sga_hat.", out);
  return out;
}

template <class T>
nn::ParamList<T> ModelBundle<T>::stage2_discriminator_params() {
  nn::ParamList<T> out;
  feat_disc.collect("feat_disc.", out);
  if (quantized()) feat_disc_hat.collect("feat_disc_hat.", out);
  return out;
}

template <class T>
nn::ParamList<T> ModelBundle<T>::stage2_params() {
  auto out = stage2_generator_params();
  for (auto& p : stage2_discriminator_params()) out.push_back(p);
  return out;
}

template <class T>
nn::ParamList<T> ModelBundle<T>::all_params() {
  auto out = stage1_params();
  for (auto& p : stage2_params()) out.push_back(p);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

template <class T>
std::vector<std::string> ModelBundle<T>::missing_components(bool need_quantized) const {
  std::vector<std::string> missing;
  auto check = [&](bool ok, const char* name) {
    if (!ok) missing.emplace_back(name);
  };
  check(!photo.encoder.empty() && !photo.decoder.empty(), "photo autoencoder");
  check(!art.encoder.empty() && !art.decoder.empty(), "art autoencoder");
  check(!sga.modules.empty(), "SGA stack");
  if (need_quantized) {
    check(quantized() && photo_hat.codebook.entries.defined(), "quantized photo autoencoder");
    check(quantized() && art_hat.codebook.entries.defined(), "quantized art autoencoder");
    check(quantized() && !sga_hat.modules.empty(), "quantized SGA stack");
  }
  return missing;
}

template <class T>
std::string parameter_hash(const nn::ParamList<T>& params) {
  std::vector<std::uint8_t> buf;
  auto put = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  };
  auto put_u32 = [&](std::uint32_t v) {
    std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8), std::uint8_t(v >> 16), std::uint8_t(v >> 24)};
    put(b, 4);
  };
  for (const auto& p : params) {
    put_u32(static_cast<std::uint32_t>(p.name.size()));
    put(p.name.data(), p.name.size());
    put_u32(static_cast<std::uint32_t>(p.tensor->ndim()));
    for (auto d : p.tensor->shape()) put_u32(static_cast<std::uint32_t>(d));
    for (T v : p.tensor->data()) {
      const float f = static_cast<float>(v);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put_u32(u);
    }
  }
  return sha256_hex(buf);
}

template <class T>
ParamSnapshot<T> snapshot(const nn::ParamList<T>& params) {
  ParamSnapshot<T> s;
  for (const auto& p : params) s.values.push_back(p.tensor->values());
  return s;
}

#define QUANTART_INSTANTIATE_BUNDLE(T)                                    \
  template class ModelBundle<T>;                                          \
  template nn::ParamList<T> dedupe(nn::ParamList<T>);                     \
  template std::string parameter_hash(const nn::ParamList<T>&);           \
  template ParamSnapshot<T> snapshot(const nn::ParamList<T>&);

QUANTART_INSTANTIATE_BUNDLE(float)
QUANTART_INSTANTIATE_BUNDLE(double)

}  // namespace quantart

#include "quantart/fusion.hpp"

#include <cmath>

namespace quantart {

void FusionParams::validate() const {
  auto check = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0))
      throw ValueError(std::string(name) + " = " + std::to_string(v) + " is outside [0, 1]");
  };
  check(alpha, "alpha");
  check(beta, "beta");
}

template <class T>
Tensor<T> fuse(double p, const Tensor<T>& a, const Tensor<T>& b) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValueError("fuse: weight " + std::to_string(p) + " is outside [0, 1]");
  if (a.shape() != b.shape()) throw ShapeError("fuse: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  return lerp(static_cast<T>(p), a, b);
}

template <class T>
Tensor<T> fuse_features(const Tensor<T>& zhat_y, const Tensor<T>& zhat_c, const Tensor<T>& z_y,
                        const Tensor<T>& z_c, const FusionParams& params) {
  params.validate();
  return fuse(params.alpha, fuse(params.beta, zhat_y, zhat_c), fuse(params.beta, z_y, z_c));
}

template <class T>
nn::Decoder<T> build_fused_decoder(const nn::Decoder<T>& quantized, const nn::Decoder<T>& continuous,
                                   double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ValueError("fused decoder: alpha " + std::to_string(alpha) + " is outside [0, 1]");
  auto q = quantized;
  auto fused = nn::deep_copy(continuous);
  auto qp = nn::parameters(q);
  auto fp = nn::parameters(fused);
  if (qp.size() != fp.size())
    throw ShapeError("fused decoder: decoders have " + std::to_string(qp.size()) + " and " +
                     std::to_string(fp.size()) + " parameters");
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < qp.size(); ++i) {
    if (qp[i].name != fp[i].name || qp[i].tensor->shape() != fp[i].tensor->shape())
      throw ShapeError("fused decoder: parameter " + qp[i].name + " " + to_string(qp[i].tensor->shape()) +
                       " does not match " + fp[i].name + " " + to_string(fp[i].tensor->shape()));
    fp[i].tensor->assign(fuse(alpha, *qp[i].tensor, *fp[i].tensor).values());
  }
  return fused;
}

template <class T>
StylizeTrace<T> stylize_trace(const Tensor<T>& content, const Tensor<T>& style, const FusionParams& params,
                              const ModelBundle<T>& bundle, DecoderFusion mode) {
  params.validate();
  const bool need_q = params.alpha != 0.0;
  if (need_q && !bundle.quantized())
    throw ValueError("alpha = " + std::to_string(params.alpha) +
                     " needs the quantized path, but this model was built without quantization");
  const auto missing = bundle.missing_components(bundle.quantized());
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ValueError("model bundle is missing: " + list);
  }
  if (content.ndim() != 4 || style.ndim() != 4 || content.dim(0) != style.dim(0))
    throw ShapeError("stylize: content " + to_string(content.shape()) + " and style " + to_string(style.shape()) +
                     " must be B x 3 x H x W with equal batch");

  NoGradGuard no_grad;
  StylizeTrace<T> t;
  t.z_c = bundle.photo.encode(content);
  t.z_s = bundle.art.encode(style);
  t.z_y = bundle.sga.forward(t.z_c, t.z_s);
  if (bundle.quantized()) {
    t.zhat_c = quantize(bundle.photo_hat.encode(content), bundle.photo_hat.codebook).quantized;
    t.zhat_s = quantize(bundle.art_hat.encode(style), bundle.art_hat.codebook).quantized;
    auto r = sga_quantized_forward(bundle.sga_hat, t.zhat_c, t.zhat_s, bundle.art_hat.codebook,
                                   bundle.config.sga_quantization);
    t.zhat_y = r.zhat_y;
    t.pre_quant = r.pre_quant;
    t.zhat_y_indices = std::move(r.indices);
    t.z_test = fuse_features(t.zhat_y, t.zhat_c, t.z_y, t.z_c, params);
  } else {
    t.z_test = fuse(params.beta, t.z_y, t.z_c);
  }

  if (!bundle.quantized()) {
    t.output = bundle.art.decoder.forward(t.z_test);
  } else if (mode == DecoderFusion::outputs) {
    t.output = fuse(params.alpha, bundle.art_hat.decoder.forward(t.z_test), bundle.art.decoder.forward(t.z_test));
  } else {
    const auto fused = build_fused_decoder(bundle.art_hat.decoder, bundle.art.decoder, params.alpha);
    t.output = fused.forward(t.z_test);
  }
  return t;
}

template <class T>
Tensor<T> stylize(const Tensor<T>& content, const Tensor<T>& style, const FusionParams& params,
                  const ModelBundle<T>& bundle, DecoderFusion mode) {
  return stylize_trace(content, style, params, bundle, mode).output;
}

#define QUANTART_INSTANTIATE_FUSION(T)                                                                  \
  template Tensor<T> fuse(double, const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> fuse_features(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                \
                                   const Tensor<T>&, const FusionParams&);                              \
  template nn::Decoder<T> build_fused_decoder(const nn::Decoder<T>&, const nn::Decoder<T>&, double);    \
  template StylizeTrace<T> stylize_trace(const Tensor<T>&, const Tensor<T>&, const FusionParams&,       \
                                         const ModelBundle<T>&, DecoderFusion);                         \
  template Tensor<T> stylize(const Tensor<T>&, const Tensor<T>&, const FusionParams&,                   \
                             const ModelBundle<T>&, DecoderFusion);

QUANTART_INSTANTIATE_FUSION(float)
QUANTART_INSTANTIATE_FUSION(double)

}  // namespace quantart

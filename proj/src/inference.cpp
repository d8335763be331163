#include "quantart/inference.hpp"

#include <algorithm>
#include <cmath>

#include "quantart/dataset.hpp"

namespace quantart {

std::pair<std::size_t, std::size_t> working_size(std::size_t width, std::size_t height, std::size_t factor,
                                                 std::size_t max_side) {
  if (width == 0 || height == 0 || factor == 0) throw ValueError("working_size: zero extent");
  const double scale = std::min(1.0, static_cast<double>(max_side) / static_cast<double>(std::max(width, height)));
  auto round_to = [factor](double v) {
    const auto k = static_cast<std::size_t>(std::llround(v / static_cast<double>(factor)));
    return std::max<std::size_t>(1, k) * factor;
  };
  return {round_to(width * scale), round_to(height * scale)};
}

template <class T>
Image stylize_image(const Image& content, const Image& style, const FusionParams& params,
                    const ModelBundle<T>& bundle, const InferenceOptions& opt) {
  params.validate();
  const auto [w, h] = working_size(content.width, content.height, std::size_t{1} << bundle.config.channel_mult.size(),
                                   std::max(opt.max_side, bundle.config.image_size));
  const auto c = to_tensor<T>({resize(content, w, h)});
  const auto s = to_tensor<T>({square_resize(style, bundle.config.image_size)});
  const auto out = stylize(c, s, params, bundle, opt.mode);
  return resize(to_image(out), content.width, content.height);
}

template Image stylize_image(const Image&, const Image&, const FusionParams&, const ModelBundle<float>&,
                             const InferenceOptions&);
template Image stylize_image(const Image&, const Image&, const FusionParams&, const ModelBundle<double>&,
                             const InferenceOptions&);

}  // namespace quantart

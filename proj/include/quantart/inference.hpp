#pragma once
// Image-level stylization shared by the CLI and the HTTP service.

#include "quantart/fusion.hpp"
#include "quantart/image_io.hpp"

namespace quantart {

struct InferenceOptions {
  DecoderFusion mode = DecoderFusion::parameters;
  // Longest side the content image is processed at; the result is resized
  // back to the content's original size.
  std::size_t max_side = 256;
};

// Working size for a content image: longest side capped at max_side, both
// sides rounded to a positive multiple of the encoder downscale factor.
std::pair<std::size_t, std::size_t> working_size(std::size_t width, std::size_t height, std::size_t factor,
                                                 std::size_t max_side);

// Style is centre-cropped and resized to the model's image size.
template <class T>
Image stylize_image(const Image& content, const Image& style, const FusionParams& params,
                    const ModelBundle<T>& bundle, const InferenceOptions& opt = {});

}  // namespace quantart

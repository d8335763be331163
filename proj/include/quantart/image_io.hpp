#pragma once
// 8-bit RGB images: PNG/JPEG decode, PNG encode, resizing, tensor conversion.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "quantart/tensor.hpp"

namespace quantart {

inline constexpr std::size_t kMaxImageSide = 4096;

struct Image {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, interleaved
  bool operator==(const Image&) const = default;
};

// PNG or JPEG, detected from the leading bytes. Throws IoError when the data
// cannot be decoded and ValueError when a side is outside [1, 4096].
Image decode_image(std::span<const std::uint8_t> bytes);
Image read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& img);
void write_png(const std::filesystem::path& path, const Image& img);

// Separable: area averaging along axes that shrink, bilinear (half-pixel
// centres) along axes that grow.
Image resize(const Image& img, std::size_t width, std::size_t height);
Image flip_horizontal(const Image& img);

// Stacks equally sized images into B x 3 x H x W with values in [-1, 1].
template <class T>
Tensor<T> to_tensor(const std::vector<Image>& images);

// Sample b of a B x 3 x H x W tensor, clamped to [-1, 1] and rounded.
template <class T>
Image to_image(const Tensor<T>& t, std::size_t b = 0);

// Places equally sized tiles into a rows x cols mosaic.
Image mosaic(const std::vector<Image>& tiles, std::size_t rows, std::size_t cols);

}  // namespace quantart

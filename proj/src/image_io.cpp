#include "quantart/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>

#include <jpeglib.h>
#include <png.h>

#include "quantart/checkpoint.hpp"

namespace quantart {

namespace {

void check_size(std::size_t w, std::size_t h) {
  if (w < 1 || h < 1 || w > kMaxImageSide || h > kMaxImageSide)
    throw ValueError("image is " + std::to_string(w) + "x" + std::to_string(h) + ", sides must lie in [1, " +
                     std::to_string(kMaxImageSide) + "]");
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw IoError(std::string("PNG decode failed: ") + img.message);
  img.format = PNG_FORMAT_RGB;
  try {
    check_size(img.width, img.height);
  } catch (...) {
    png_image_free(&img);
    throw;
  }
  Image out;
  out.width = img.width;
  out.height = img.height;
  out.rgb.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("PNG decode failed: " + msg);
  }
  return out;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Image decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  Image out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError(std::string("JPEG decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const std::size_t w = cinfo.output_width, h = cinfo.output_height;
  if (w < 1 || h < 1 || w > kMaxImageSide || h > kMaxImageSide) {
    jpeg_destroy_decompress(&cinfo);
    check_size(w, h);
  }
  out.width = w;
  out.height = h;
  out.rgb.resize(w * h * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

// Output sample i of a 1-D resampling as (source index, weight) pairs.
std::vector<std::vector<std::pair<std::size_t, double>>> resample_weights(std::size_t src, std::size_t dst) {
  std::vector<std::vector<std::pair<std::size_t, double>>> w(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    if (dst < src) {
      const double lo = i * scale, hi = (i + 1) * scale;
      for (auto k = static_cast<std::size_t>(std::floor(lo)); k < src && k < hi; ++k) {
        const double overlap = std::min(hi, k + 1.0) - std::max(lo, static_cast<double>(k));
        if (overlap > 0) w[i].push_back({k, overlap / scale});
      }
    } else {
      const double x = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(src - 1));
      const auto k = static_cast<std::size_t>(std::floor(x));
      const double f = x - k;
      w[i].push_back({k, 1.0 - f});
      if (f > 0 && k + 1 < src) w[i].push_back({k + 1, f});
    }
  }
  return w;
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes) {
  static const std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0) return decode_png(bytes);
  if (bytes.size() >= 3 && bytes[0] == 0xff && bytes[1] == 0xd8 && bytes[2] == 0xff) return decode_jpeg(bytes);
  throw IoError("unrecognized image data (expected PNG or JPEG)");
}

Image read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_image(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  } catch (const ValueError& e) {
    throw ValueError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  check_size(img.width, img.height);
  if (img.rgb.size() != img.width * img.height * 3) throw ShapeError("encode_png: pixel buffer size mismatch");
  png_image p;
  std::memset(&p, 0, sizeof p);
  p.version = PNG_IMAGE_VERSION;
  p.width = static_cast<png_uint_32>(img.width);
  p.height = static_cast<png_uint_32>(img.height);
  p.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&p, nullptr, &size, 0, img.rgb.data(), 0, nullptr))
    throw IoError(std::string("PNG encode failed: ") + p.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&p, out.data(), &size, 0, img.rgb.data(), 0, nullptr))
    throw IoError(std::string("PNG encode failed: ") + p.message);
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img) { write_file(path, encode_png(img)); }

Image resize(const Image& img, std::size_t width, std::size_t height) {
  check_size(width, height);
  if (width == img.width && height == img.height) return img;
  const auto wx = resample_weights(img.width, width);
  const auto wy = resample_weights(img.height, height);
  std::vector<double> rows(img.height * width * 3, 0.0);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (auto [k, w] : wx[x])
        for (std::size_t c = 0; c < 3; ++c)
          rows[(y * width + x) * 3 + c] += w * img.rgb[(y * img.width + k) * 3 + c];
  Image out;
  out.width = width;
  out.height = height;
  out.rgb.resize(width * height * 3);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double v = 0;
        for (auto [k, w] : wy[y]) v += w * rows[(k * width + x) * 3 + c];
        out.rgb[(y * width + x) * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out = img;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out.rgb[(y * img.width + x) * 3 + c] = img.rgb[(y * img.width + (img.width - 1 - x)) * 3 + c];
  return out;
}

template <class T>
Tensor<T> to_tensor(const std::vector<Image>& images) {
  if (images.empty()) throw ValueError("to_tensor: no images");
  const std::size_t w = images[0].width, h = images[0].height;
  std::vector<T> v(images.size() * 3 * h * w);
  for (std::size_t b = 0; b < images.size(); ++b) {
    const auto& img = images[b];
    if (img.width != w || img.height != h)
      throw ShapeError("to_tensor: image " + std::to_string(b) + " is " + std::to_string(img.width) + "x" +
                       std::to_string(img.height) + ", expected " + std::to_string(w) + "x" + std::to_string(h));
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < h * w; ++i)
        v[((b * 3 + c) * h * w) + i] = static_cast<T>(img.rgb[i * 3 + c] / 127.5 - 1.0);
  }
  return Tensor<T>::from({images.size(), 3, h, w}, std::move(v));
}

template <class T>
Image to_image(const Tensor<T>& t, std::size_t b) {
  if (t.ndim() != 4 || t.dim(1) != 3 || b >= t.dim(0))
    throw ShapeError("to_image: expected B x 3 x H x W with sample " + std::to_string(b) + ", got " +
                     to_string(t.shape()));
  const std::size_t h = t.dim(2), w = t.dim(3);
  Image img;
  img.width = w;
  img.height = h;
  img.rgb.resize(w * h * 3);
  const auto d = t.data();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < h * w; ++i) {
      const double v = std::clamp(static_cast<double>(d[(b * 3 + c) * h * w + i]), -1.0, 1.0);
      img.rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5));
    }
  return img;
}

Image mosaic(const std::vector<Image>& tiles, std::size_t rows, std::size_t cols) {
  if (tiles.size() != rows * cols || tiles.empty())
    throw ValueError("mosaic: " + std::to_string(tiles.size()) + " tiles for a " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " grid");
  const std::size_t tw = tiles[0].width, th = tiles[0].height;
  Image out;
  out.width = tw * cols;
  out.height = th * rows;
  out.rgb.assign(out.width * out.height * 3, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const auto& t = tiles[r * cols + c];
      if (t.width != tw || t.height != th) throw ShapeError("mosaic: tiles differ in size");
      for (std::size_t y = 0; y < th; ++y)
        std::memcpy(&out.rgb[((r * th + y) * out.width + c * tw) * 3], &t.rgb[y * tw * 3], tw * 3);
    }
  return out;
}

template Tensor<float> to_tensor(const std::vector<Image>&);
template Tensor<double> to_tensor(const std::vector<Image>&);
template Image to_image(const Tensor<float>&, std::size_t);
template Image to_image(const Tensor<double>&, std::size_t);

}  // namespace quantart

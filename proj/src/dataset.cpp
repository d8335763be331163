#include "quantart/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace quantart {

namespace fs = std::filesystem;

Image square_resize(const Image& img, std::size_t size) {
  const std::size_t side = std::min(img.width, img.height);
  Image crop;
  crop.width = crop.height = side;
  crop.rgb.resize(side * side * 3);
  const std::size_t x0 = (img.width - side) / 2, y0 = (img.height - side) / 2;
  for (std::size_t y = 0; y < side; ++y)
    std::copy_n(&img.rgb[((y0 + y) * img.width + x0) * 3], side * 3, &crop.rgb[y * side * 3]);
  return resize(crop, size, size);
}

ImageDataset load_image_dir(const fs::path& dir, std::size_t size) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("dataset directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
  }
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  if (files.empty()) throw IoError("dataset directory has no PNG/JPEG files: " + dir.string());
  std::sort(files.begin(), files.end());
  ImageDataset d;
  for (const auto& f : files) {
    Image img;
    try {
      img = read_image(f);
    } catch (const ValueError& e) {
      throw IoError(e.what());
    }
    d.images.push_back(square_resize(img, size));
    d.names.push_back(f.filename().string());
  }
  return d;
}

namespace {

struct Rgb {
  double r, g, b;
};

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L)); }

Image photo_texture(std::size_t size, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Rgb base{u(rng), u(rng), u(rng)};
  const Rgb tint{u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5};
  const double angle = u(rng) * 2 * std::numbers::pi;
  struct Blob {
    double x, y, radius;
    Rgb c;
  };
  std::vector<Blob> blobs(3);
  for (auto& b : blobs) b = {u(rng), u(rng), 0.1 + 0.25 * u(rng), {u(rng), u(rng), u(rng)}};
  std::normal_distribution<double> noise(0.0, 0.01);
  Image img;
  img.width = img.height = size;
  img.rgb.resize(size * size * 3);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double fx = (x + 0.5) / size, fy = (y + 0.5) / size;
      const double g = (fx - 0.5) * std::cos(angle) + (fy - 0.5) * std::sin(angle);
      Rgb c{base.r + tint.r * g, base.g + tint.g * g, base.b + tint.b * g};
      for (const auto& b : blobs) {
        const double d2 = (fx - b.x) * (fx - b.x) + (fy - b.y) * (fy - b.y);
        const double a = 0.6 * std::exp(-d2 / (2 * b.radius * b.radius));
        c = {c.r + a * (b.c.r - c.r), c.g + a * (b.c.g - c.g), c.b + a * (b.c.b - c.b)};
      }
      auto* p = &img.rgb[(y * size + x) * 3];
      p[0] = to_u8(c.r + noise(rng));
      p[1] = to_u8(c.g + noise(rng));
      p[2] = to_u8(c.b + noise(rng));
    }
  return img;
}

Rgb saturated(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // HSV with s = 1, v in [0.7, 1]
  const double h = u(rng) * 6.0, v = 0.7 + 0.3 * u(rng);
  const double f = h - std::floor(h);
  const double q = v * (1 - f), t = v * f;
  switch (static_cast<int>(h) % 6) {
    case 0: return {v, t, 0};
    case 1: return {q, v, 0};
    case 2: return {0, v, t};
    case 3: return {0, q, v};
    case 4: return {t, 0, v};
    default: return {v, 0, q};
  }
}

Image art_texture(std::size_t size, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Rgb a = saturated(rng), b = saturated(rng), ink{0.05 + 0.1 * u(rng), 0.05, 0.1};
  const double angle = u(rng) * std::numbers::pi;
  const double freq = 2.0 + std::floor(u(rng) * 5.0);
  const double phase = u(rng) * 2 * std::numbers::pi;
  const std::size_t cell = std::max<std::size_t>(2, size / (2 + static_cast<std::size_t>(u(rng) * 4)));
  Image img;
  img.width = img.height = size;
  img.rgb.resize(size * size * 3);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double fx = (x + 0.5) / size, fy = (y + 0.5) / size;
      const double s = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * freq * (fx * std::cos(angle) + fy * std::sin(angle)) + phase);
      Rgb c{a.r + s * (b.r - a.r), a.g + s * (b.g - a.g), a.b + s * (b.b - a.b)};
      if (((x / cell) + (y / cell)) % 2 == 0 && s > 0.8) c = ink;
      auto* p = &img.rgb[(y * size + x) * 3];
      p[0] = to_u8(c.r);
      p[1] = to_u8(c.g);
      p[2] = to_u8(c.b);
    }
  return img;
}

}  // namespace

ImageDataset synthetic_textures(Domain domain, std::size_t count, std::size_t size, std::uint64_t seed) {
  if (size == 0) throw ValueError("synthetic_textures: size must be positive");
  Rng rng(seed * 2654435761ULL + (domain == Domain::photo ? 1 : 2));
  ImageDataset d;
  for (std::size_t i = 0; i < count; ++i) {
    d.images.push_back(domain == Domain::photo ? photo_texture(size, rng) : art_texture(size, rng));
    auto idx = std::to_string(i);
    if (idx.size() < 3) idx.insert(0, 3 - idx.size(), '0');
    d.names.push_back(to_string(domain) + "_" + idx + ".png");
  }
  return d;
}

BatchSampler::BatchSampler(std::size_t n, std::size_t batch, std::uint64_t seed, bool flip)
    : n_(n), batch_(batch), flip_(flip), rng_(seed) {
  if (n == 0) throw ValueError("BatchSampler: empty dataset");
  if (batch == 0) throw ValueError("BatchSampler: batch size must be >= 1");
  reshuffle();
}

void BatchSampler::reshuffle() {
  order_.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
  std::shuffle(order_.begin(), order_.end(), rng_);
  pos_ = 0;
}

std::vector<std::pair<std::size_t, bool>> BatchSampler::next() {
  std::vector<std::pair<std::size_t, bool>> out;
  std::bernoulli_distribution coin(0.5);
  while (out.size() < std::min(batch_, n_)) {
    if (pos_ == n_) {
      reshuffle();
      ++epoch_;
    }
    const std::size_t idx = order_[pos_++];
    out.push_back({idx, flip_ && coin(rng_)});
  }
  return out;
}

template <class T>
Tensor<T> batch_tensor(const ImageDataset& data, const std::vector<std::pair<std::size_t, bool>>& picks) {
  std::vector<Image> imgs;
  imgs.reserve(picks.size());
  for (auto [i, flip] : picks) imgs.push_back(flip ? flip_horizontal(data.images.at(i)) : data.images.at(i));
  return to_tensor<T>(imgs);
}

template Tensor<float> batch_tensor(const ImageDataset&, const std::vector<std::pair<std::size_t, bool>>&);
template Tensor<double> batch_tensor(const ImageDataset&, const std::vector<std::pair<std::size_t, bool>>&);

}  // namespace quantart

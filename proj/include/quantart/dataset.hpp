#pragma once
// Image datasets: directories of PNG/JPEG files, seeded synthetic textures,
// and a seeded batch sampler.

#include <filesystem>
#include <string>

#include "quantart/image_io.hpp"
#include "quantart/vq.hpp"

namespace quantart {

struct ImageDataset {
  std::vector<Image> images;  // all size x size
  std::vector<std::string> names;
  std::size_t size() const { return images.size(); }
};

// Every .png/.jpg/.jpeg file in dir (sorted by name), centre-cropped to a
// square and resized to size x size. Throws IoError naming the path when the
// directory is missing, empty, or a file cannot be decoded.
ImageDataset load_image_dir(const std::filesystem::path& dir, std::size_t size);

// Centre crop to a square, then resize.
Image square_resize(const Image& img, std::size_t size);

// Photo textures are smooth gradients with soft blobs; art textures are
// saturated stripe and checker patterns. Deterministic in (domain, count, size, seed).
ImageDataset synthetic_textures(Domain domain, std::size_t count, std::size_t size, std::uint64_t seed);

// Draws min(batch, dataset size) indices per call, walking a seeded
// permutation that is redrawn at every epoch boundary (a batch may straddle
// two epochs).
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed, bool flip);
  // Indices of the next batch and, per index, whether to flip it.
  std::vector<std::pair<std::size_t, bool>> next();
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();
  std::size_t n_, batch_;
  bool flip_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::size_t epoch_ = 0;
};

template <class T>
Tensor<T> batch_tensor(const ImageDataset& data, const std::vector<std::pair<std::size_t, bool>>& picks);

}  // namespace quantart

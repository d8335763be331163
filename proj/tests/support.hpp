#pragma once
// Shared helpers for the test binaries.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "quantart/bundle.hpp"
#include "quantart/ops.hpp"

namespace qt_test {

using namespace quantart;

// ||a - n|| / (||a|| + ||n||) over the checked entries, 0 when both vanish.
struct GradCheck {
  double rel_error = 0.0;
  double abs_error = 0.0;
  std::size_t checked = 0;
};

// Compares backward() against central differences for the given leaves.
// At most max_entries per leaf are probed (chosen with rng); leaves must be
// double-precision and requires_grad.
inline GradCheck gradcheck(const std::function<TensorD()>& loss, std::vector<TensorD*> leaves, Rng& rng,
                           std::size_t max_entries = 24, double h = 1e-6) {
  const auto grads = backward(loss());
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0, max_abs = 0.0;
  std::size_t checked = 0;
  for (auto* leaf : leaves) {
    const auto analytic = grads.of(*leaf);
    std::vector<std::size_t> idx(leaf->numel());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(idx.size(), max_entries));
    for (auto i : idx) {
      auto v = leaf->values();
      const double orig = v[i];
      v[i] = orig + h;
      leaf->assign(v);
      const double up = loss().item();
      v[i] = orig - h;
      leaf->assign(v);
      const double down = loss().item();
      v[i] = orig;
      leaf->assign(v);
      const double numeric = (up - down) / (2 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
      max_abs = std::max(max_abs, std::abs(analytic[i] - numeric));
      ++checked;
    }
  }
  const double denom = std::sqrt(a2) + std::sqrt(n2);
  return {denom == 0.0 ? 0.0 : std::sqrt(diff2) / denom, max_abs, checked};
}

template <class T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false) {
  return Tensor<T>::randn(std::move(shape), rng, stddev, requires_grad);
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Small model for fast component tests.
inline ModelConfig tiny_model_config() {
  ModelConfig c;
  c.image_size = 16;
  c.base_channels = 8;
  c.channel_mult = {1, 2};
  c.res_blocks = 1;
  c.latent_dim = 8;
  c.codebook_size = 16;
  c.groups = 4;
  c.disc_channels = 8;
  c.feat_disc_channels = 8;
  c.sga.modules = 1;
  return c;
}

// Fresh directory under the system temp dir, removed by the destructor.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("quantart_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

template <class T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin(),
                                              [](T x, T y) { return std::memcmp(&x, &y, sizeof(T)) == 0; });
}

}  // namespace qt_test

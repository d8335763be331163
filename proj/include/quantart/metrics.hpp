#pragma once
// Fidelity metrics over a frozen feature backbone: Gram style loss,
// perceptual distance, Frechet distance and ArtFID.
//
// The backbone is a frozen copy of the trained quantized art encoder, so
// values are only comparable between runs that share a backbone.

#include <string>

#include "quantart/bundle.hpp"

namespace quantart {

template <class T>
class FeatureBackbone {
 public:
  explicit FeatureBackbone(const nn::Encoder<T>& encoder);
  // Activations after every down block, then the latent.
  std::vector<Tensor<T>> taps(const Tensor<T>& images) const;
  const std::string& hash() const { return hash_; }

 private:
  nn::Encoder<T> encoder_;
  std::string hash_;
};

// Art encoder of the quantized path, or the continuous one when the bundle
// has no quantized path.
template <class T>
FeatureBackbone<T> backbone_from(const ModelBundle<T>& bundle);

// Per-sample Gram matrices F F^T / (C H W) of a B x C x H x W map.
template <class T>
std::vector<double> gram_matrices(const Tensor<T>& features);

// Sum over taps of ||G(y) - G(s)||_F^2, averaged over the batch.
template <class T>
double gram_loss(const Tensor<T>& y, const Tensor<T>& s, const FeatureBackbone<T>& backbone);

// Sum over taps of mean squared difference after scaling each feature
// vector (across channels) to unit length.
template <class T>
double perceptual_distance(const Tensor<T>& a, const Tensor<T>& b, const FeatureBackbone<T>& backbone);

struct GaussianMoments {
  std::vector<double> mean;
  std::vector<double> cov;  // D x D row-major
  std::size_t dim() const { return mean.size(); }
  std::size_t n_samples = 0;
};

// Unbiased moments of n x D samples (row-major). Needs n > D.
GaussianMoments gaussian_moments(const std::vector<double>& samples, std::size_t n, std::size_t d);

// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S2^1/2 S1 S2^1/2)^1/2).
// Throws ValueError on dimension mismatch, asymmetric covariances, or
// eigenvalues below -1e-6; smaller negative eigenvalues are clipped to 0.
double frechet_distance(const GaussianMoments& a, const GaussianMoments& b);

// Every final-tap feature vector (one per spatial location) of every image.
template <class T>
GaussianMoments feature_moments(const Tensor<T>& images, const FeatureBackbone<T>& backbone);

// (1 + lpips) * (1 + fid); both must be >= 0.
double artfid(double lpips, double fid);

nlohmann::json metric_report(const std::string& metric, double value, std::size_t n_samples,
                             const std::string& backbone_hash);

}  // namespace quantart

#include "quantart/metrics.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace quantart {

template <class T>
FeatureBackbone<T>::FeatureBackbone(const nn::Encoder<T>& encoder) : encoder_(nn::deep_copy(encoder)) {
  hash_ = parameter_hash(nn::parameters(encoder_));
}

template <class T>
std::vector<Tensor<T>> FeatureBackbone<T>::taps(const Tensor<T>& images) const {
  NoGradGuard no_grad;
  return encoder_.forward_taps(images);
}

template <class T>
FeatureBackbone<T> backbone_from(const ModelBundle<T>& bundle) {
  return FeatureBackbone<T>(bundle.quantized() ? bundle.art_hat.encoder : bundle.art.encoder);
}

namespace {

template <class T>
void check_pair(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": image batches differ in size, " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
}

}  // namespace

template <class T>
std::vector<double> gram_matrices(const Tensor<T>& f) {
  if (f.ndim() != 4) throw ShapeError("gram_matrices expects B x C x H x W, got " + to_string(f.shape()));
  const std::size_t B = f.dim(0), C = f.dim(1), P = f.dim(2) * f.dim(3);
  const double norm = static_cast<double>(C * P);
  std::vector<double> g(B * C * C, 0.0);
  const auto d = f.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t j = i; j < C; ++j) {
        double s = 0.0;
        const T* fi = &d[(b * C + i) * P];
        const T* fj = &d[(b * C + j) * P];
        for (std::size_t p = 0; p < P; ++p) s += static_cast<double>(fi[p]) * static_cast<double>(fj[p]);
        g[(b * C + i) * C + j] = g[(b * C + j) * C + i] = s / norm;
      }
  return g;
}

template <class T>
double gram_loss(const Tensor<T>& y, const Tensor<T>& s, const FeatureBackbone<T>& backbone) {
  check_pair(y, s, "gram_loss");
  const auto ty = backbone.taps(y), ts = backbone.taps(s);
  double loss = 0.0;
  for (std::size_t t = 0; t < ty.size(); ++t) {
    const auto gy = gram_matrices(ty[t]), gs = gram_matrices(ts[t]);
    double sq = 0.0;
    for (std::size_t i = 0; i < gy.size(); ++i) sq += (gy[i] - gs[i]) * (gy[i] - gs[i]);
    loss += sq / static_cast<double>(y.dim(0));
  }
  return loss;
}

template <class T>
double perceptual_distance(const Tensor<T>& a, const Tensor<T>& b, const FeatureBackbone<T>& backbone) {
  check_pair(a, b, "perceptual_distance");
  const auto ta = backbone.taps(a), tb = backbone.taps(b);
  double dist = 0.0;
  for (std::size_t t = 0; t < ta.size(); ++t) {
    const std::size_t B = ta[t].dim(0), C = ta[t].dim(1), P = ta[t].dim(2) * ta[t].dim(3);
    const auto da = ta[t].data(), db = tb[t].data();
    double sq = 0.0;
    for (std::size_t n = 0; n < B; ++n)
      for (std::size_t p = 0; p < P; ++p) {
        double na = 0.0, nb = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          const double x = da[(n * C + c) * P + p], y = db[(n * C + c) * P + p];
          na += x * x;
          nb += y * y;
        }
        na = std::sqrt(na) + 1e-10;
        nb = std::sqrt(nb) + 1e-10;
        for (std::size_t c = 0; c < C; ++c) {
          const double diff = da[(n * C + c) * P + p] / na - db[(n * C + c) * P + p] / nb;
          sq += diff * diff;
        }
      }
    dist += sq / static_cast<double>(B * C * P);
  }
  return dist;
}

GaussianMoments gaussian_moments(const std::vector<double>& samples, std::size_t n, std::size_t d) {
  if (samples.size() != n * d) throw ShapeError("gaussian_moments: sample buffer is not n x D");
  if (n <= d)
    throw ValueError("gaussian_moments: need more samples than dimensions, got n = " + std::to_string(n) +
                     ", D = " + std::to_string(d));
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> X(samples.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const Eigen::RowVectorXd mu = X.colwise().mean();
  const Mat centered = X.rowwise() - mu;
  const Mat cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  GaussianMoments m;
  m.mean.assign(mu.data(), mu.data() + d);
  m.cov.resize(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      m.cov[i * d + j] = 0.5 * (cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +
                                cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)));
  m.n_samples = n;
  return m;
}

namespace {

Eigen::MatrixXd as_matrix(const GaussianMoments& m, const char* which) {
  const auto d = static_cast<Eigen::Index>(m.dim());
  if (m.cov.size() != m.dim() * m.dim())
    throw ShapeError(std::string("frechet_distance: covariance of ") + which + " is not D x D");
  Eigen::MatrixXd c(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) c(i, j) = m.cov[static_cast<std::size_t>(i * d + j)];
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw ValueError(std::string("frechet_distance: covariance of ") + which + " is not symmetric");
  return c;
}

Eigen::VectorXd checked_eigenvalues(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& es, const char* what) {
  if (es.info() != Eigen::Success) throw ValueError(std::string("frechet_distance: eigensolver failed on ") + what);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-6)
      throw ValueError(std::string("frechet_distance: ") + what + " has eigenvalue " + std::to_string(ev(i)) +
                       " (not positive semi-definite)");
    if (ev(i) < 0) ev(i) = 0;
  }
  return ev;
}

}  // namespace

double frechet_distance(const GaussianMoments& a, const GaussianMoments& b) {
  if (a.dim() != b.dim() || a.dim() == 0)
    throw ShapeError("frechet_distance: dimensions " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
  const Eigen::MatrixXd s1 = as_matrix(a, "first"), s2 = as_matrix(b, "second");
  double mean_term = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(s2);
  const Eigen::VectorXd ev2 = checked_eigenvalues(es2, "second covariance");
  const Eigen::MatrixXd s2h = es2.eigenvectors() * ev2.cwiseSqrt().asDiagonal() * es2.eigenvectors().transpose();
  Eigen::MatrixXd m = s2h * s1 * s2h;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esm(m, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd evm = checked_eigenvalues(esm, "S2^1/2 S1 S2^1/2");
  const double tr_sqrt = evm.cwiseSqrt().sum();
  const double d = mean_term + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
  return d < 0 && d > -1e-9 ? 0.0 : d;
}

template <class T>
GaussianMoments feature_moments(const Tensor<T>& images, const FeatureBackbone<T>& backbone) {
  const auto f = backbone.taps(images).back();
  const std::size_t B = f.dim(0), C = f.dim(1), P = f.dim(2) * f.dim(3);
  std::vector<double> samples(B * P * C);
  const auto d = f.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) samples[(b * P + p) * C + c] = d[(b * C + c) * P + p];
  return gaussian_moments(samples, B * P, C);
}

double artfid(double lpips, double fid) {
  if (!(lpips >= 0.0) || !(fid >= 0.0))
    throw ValueError("artfid: inputs must be >= 0, got lpips = " + std::to_string(lpips) + ", fid = " +
                     std::to_string(fid));
  return (1.0 + lpips) * (1.0 + fid);
}

nlohmann::json metric_report(const std::string& metric, double value, std::size_t n_samples,
                             const std::string& backbone_hash) {
  return {{"metric", metric}, {"value", value}, {"n_samples", n_samples}, {"backbone_hash", backbone_hash}};
}

#define QUANTART_INSTANTIATE_METRICS(T)                                                       \
  template class FeatureBackbone<T>;                                                          \
  template FeatureBackbone<T> backbone_from(const ModelBundle<T>&);                           \
  template std::vector<double> gram_matrices(const Tensor<T>&);                               \
  template double gram_loss(const Tensor<T>&, const Tensor<T>&, const FeatureBackbone<T>&);    \
  template double perceptual_distance(const Tensor<T>&, const Tensor<T>&, const FeatureBackbone<T>&); \
  template GaussianMoments feature_moments(const Tensor<T>&, const FeatureBackbone<T>&);

QUANTART_INSTANTIATE_METRICS(float)
QUANTART_INSTANTIATE_METRICS(double)

}  // namespace quantart

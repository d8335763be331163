#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "quantart/dataset.hpp"
#include "quantart/metrics.hpp"
#include "oracles.hpp"

using namespace quantart;

namespace {

GaussianMoments moments_from(const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
  GaussianMoments m;
  const auto d = static_cast<std::size_t>(mu.size());
  m.mean.assign(mu.data(), mu.data() + d);
  m.cov.resize(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) m.cov[i * d + j] = cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return m;
}

Eigen::MatrixXd random_rotation(std::size_t d, Rng& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = nd(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return qr.householderQ();
}

}  // namespace

TEST(Frechet, DiagonalClosedForm) {
  const auto st = qt_test::frechet_oracle(100);
  EXPECT_EQ(st.cases, 100u);
  EXPECT_LT(st.max_error, 1e-6);
  EXPECT_LT(st.identical, 1e-9);
}

TEST(Frechet, CommutingCovariancesInRotatedBasis) {
  // Shared eigenbasis Q: the trace term reduces to sum (sqrt l1 - sqrt l2)^2.
  Rng rng(21);
  std::uniform_real_distribution<double> ev(0.1, 3.0);
  std::normal_distribution<double> nd;
  for (int c = 0; c < 20; ++c) {
    const std::size_t d = qt_test::pick(rng, 2, 12);
    const auto q = random_rotation(d, rng);
    Eigen::VectorXd l1(d), l2(d), m1(d), m2(d);
    double expect = 0;
    for (std::size_t i = 0; i < d; ++i) {
      l1(i) = ev(rng), l2(i) = ev(rng), m1(i) = nd(rng), m2(i) = nd(rng);
      expect += (m1(i) - m2(i)) * (m1(i) - m2(i)) + std::pow(std::sqrt(l1(i)) - std::sqrt(l2(i)), 2);
    }
    Eigen::MatrixXd s1 = q * l1.asDiagonal() * q.transpose(), s2 = q * l2.asDiagonal() * q.transpose();
    s1 = 0.5 * (s1 + s1.transpose()), s2 = 0.5 * (s2 + s2.transpose());
    EXPECT_NEAR(frechet_distance(moments_from(m1, s1), moments_from(m2, s2)), expect, 1e-8);
  }
}

TEST(Frechet, RejectsBadInputs) {
  GaussianMoments a;
  a.mean = {0, 0};
  a.cov = {1, 0, 0, 1};
  GaussianMoments neg = a;
  neg.cov = {1, 0, 0, -0.1};
  EXPECT_THROW(frechet_distance(a, neg), ValueError);
  GaussianMoments asym = a;
  asym.cov = {1, 0.5, 0, 1};
  EXPECT_THROW(frechet_distance(asym, a), ValueError);
  GaussianMoments three;
  three.mean = {0, 0, 0};
  three.cov.assign(9, 0.0);
  EXPECT_THROW(frechet_distance(a, three), ShapeError);
  // Round-off scale negatives are clipped.
  GaussianMoments tiny = a;
  tiny.cov = {1, 0, 0, -1e-9};
  EXPECT_NEAR(frechet_distance(a, tiny), 1.0, 1e-6);
}

TEST(GaussianMoments, UnbiasedAndNeedsMoreSamplesThanDims) {
  // Samples (0,0) (2,0) (0,4) (2,4): mean (1,2), var (4/3, 16/3), cov 0.
  const std::vector<double> x{0, 0, 2, 0, 0, 4, 2, 4};
  const auto m = gaussian_moments(x, 4, 2);
  EXPECT_DOUBLE_EQ(m.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(m.mean[1], 2.0);
  EXPECT_NEAR(m.cov[0], 4.0 / 3, 1e-12);
  EXPECT_NEAR(m.cov[3], 16.0 / 3, 1e-12);
  EXPECT_NEAR(m.cov[1], 0.0, 1e-12);
  EXPECT_EQ(m.n_samples, 4u);
  EXPECT_THROW(gaussian_moments(std::vector<double>(4, 0.0), 2, 2), ValueError);
  EXPECT_THROW(gaussian_moments(std::vector<double>(5, 0.0), 2, 2), ShapeError);
}

TEST(ArtFid, FormulaAgainstReportedValues) {
  EXPECT_NEAR(artfid(0.581, 17.787), 29.70, 0.05);
  EXPECT_NEAR(artfid(0.681, 36.618), 63.24, 0.05);
  EXPECT_NEAR(artfid(0.581, 17.787), 29.695, 0.05);
  EXPECT_NEAR(artfid(0.681, 36.618), 63.240, 0.05);
  EXPECT_DOUBLE_EQ(artfid(0, 0), 1.0);
  EXPECT_THROW(artfid(-0.1, 3), ValueError);
  EXPECT_THROW(artfid(0.1, std::nan("")), ValueError);
}

TEST(Gram, MatchesDirectDefinition) {
  Rng rng(8);
  const auto f = TensorD::randn({2, 3, 2, 5}, rng);
  const auto g = gram_matrices(f);
  ASSERT_EQ(g.size(), 2u * 9);
  const auto v = f.values();
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double s = 0;
        for (std::size_t p = 0; p < 10; ++p) s += v[(b * 3 + i) * 10 + p] * v[(b * 3 + j) * 10 + p];
        EXPECT_NEAR(g[(b * 3 + i) * 3 + j], s / 30.0, 1e-12);
      }
}

class BackboneMetrics : public ::testing::Test {
 protected:
  BackboneMetrics() : bundle(qt_test::fusion_bundle()), backbone(backbone_from(bundle)) {
    a = to_tensor<float>(synthetic_textures(Domain::photo, 4, 16, 1).images);
    b = to_tensor<float>(synthetic_textures(Domain::art, 4, 16, 1).images);
  }
  static TensorF reversed(const TensorF& x) {
    const std::size_t per = x.numel() / x.dim(0);
    std::vector<float> v(x.numel());
    for (std::size_t i = 0; i < x.dim(0); ++i)
      std::copy_n(x.values().begin() + (x.dim(0) - 1 - i) * per, per, v.begin() + i * per);
    return TensorF::from(x.shape(), v);
  }
  ModelBundle<float> bundle;
  FeatureBackbone<float> backbone;
  TensorF a, b;
};

TEST_F(BackboneMetrics, GramLossProperties) {
  EXPECT_EQ(gram_loss(a, a, backbone), 0.0);
  const double l = gram_loss(a, b, backbone);
  EXPECT_GT(l, 0.0);
  EXPECT_NEAR(gram_loss(reversed(a), reversed(b), backbone), l, 1e-9 * l);
  EXPECT_THROW(gram_loss(a, TensorF::zeros({2, 3, 16, 16}), backbone), ShapeError);
}

TEST_F(BackboneMetrics, PerceptualDistanceProperties) {
  EXPECT_EQ(perceptual_distance(a, a, backbone), 0.0);
  const double d = perceptual_distance(a, b, backbone);
  EXPECT_GT(d, 0.0);
  EXPECT_NEAR(perceptual_distance(b, a, backbone), d, 1e-12);
  EXPECT_NEAR(perceptual_distance(reversed(a), reversed(b), backbone), d, 1e-9 * d);
}

TEST_F(BackboneMetrics, FeatureMomentsCountLocations) {
  const auto m = feature_moments(a, backbone);
  const auto last = backbone.taps(a).back();
  EXPECT_EQ(m.dim(), last.dim(1));
  EXPECT_EQ(m.n_samples, 4 * last.dim(2) * last.dim(3));
  EXPECT_LT(std::abs(frechet_distance(m, m)), 1e-9);
  // Batch order does not change the distribution.
  const auto r = feature_moments(reversed(a), backbone);
  const auto mb = feature_moments(b, backbone);
  EXPECT_NEAR(frechet_distance(r, mb), frechet_distance(m, mb), 1e-8);
}

TEST_F(BackboneMetrics, BackboneIsTheQuantizedArtEncoderAndFrozen) {
  EXPECT_EQ(backbone.hash(), parameter_hash(nn::parameters(bundle.art_hat.encoder)));
  const auto before = gram_loss(a, b, backbone);
  for (auto& p : nn::parameters(bundle.art_hat.encoder)) {
    std::vector<float> v(p.tensor->numel(), 0.5f);
    p.tensor->assign(v);
  }
  EXPECT_EQ(gram_loss(a, b, backbone), before);
}

TEST(MetricReport, Fields) {
  const auto j = metric_report("artfid", 2.5, 10, "abc");
  EXPECT_EQ(j["metric"], "artfid");
  EXPECT_EQ(j["value"], 2.5);
  EXPECT_EQ(j["n_samples"], 10);
  EXPECT_EQ(j["backbone_hash"], "abc");
}

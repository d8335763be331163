#include <gtest/gtest.h>

#include <set>

#include "quantart/bundle.hpp"
#include "support.hpp"

using namespace quantart;
using qt_test::bit_equal;
using qt_test::random_tensor;

namespace {

template <class M>
void scale_params(M& m, double s) {
  for (auto& p : nn::parameters(m)) {
    std::vector<typename M::Scalar> v(p.tensor->values());
    for (auto& e : v) e = static_cast<typename M::Scalar>(e * s);
    p.tensor->assign(std::move(v));
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------------------
// autoencoders

TEST(Autoencoder, ShapesAndPaths) {
  const auto cfg = qt_test::tiny_model_config();
  Rng rng(1);
  AutoencoderPair<float> cont(Domain::photo, false, cfg, rng), quant(Domain::art, true, cfg, rng);
  const auto x = TensorF::uniform({2, 3, 16, 16}, rng, -1, 1);
  const auto rc = reconstruct(cont, x);
  EXPECT_EQ(rc.x_rec.shape(), x.shape());
  EXPECT_EQ(rc.latent.shape(), (Shape{2, cfg.latent_dim, cfg.code_size(), cfg.code_size()}));
  EXPECT_FALSE(rc.q.has_value());
  EXPECT_FALSE(cont.codebook.entries.defined());
  const auto rq = reconstruct(quant, x);
  ASSERT_TRUE(rq.q.has_value());
  EXPECT_EQ(rq.q->indices.size(), 2 * cfg.code_size() * cfg.code_size());
  EXPECT_EQ(quant.codebook.entries.shape(), (Shape{cfg.codebook_size, cfg.latent_dim}));
  EXPECT_EQ(quant.domain(), Domain::art);
  EXPECT_THROW(reconstruct(cont, TensorF::zeros({1, 3, 15, 16})), ShapeError);
}

TEST(Autoencoder, CodeSize) {
  ModelConfig c;
  EXPECT_EQ(c.code_size(), 8u);
  c.set_code_size(4);
  EXPECT_EQ(c.channel_mult.size(), 3u);
  EXPECT_EQ(c.code_size(), 4u);
  c.set_code_size(16);
  EXPECT_EQ(c.channel_mult, (std::vector<std::size_t>{1}));
  EXPECT_THROW(c.set_code_size(32), ValueError);
  EXPECT_THROW(c.set_code_size(12), ValueError);
  c.image_size = 21;
  EXPECT_THROW(c.validate(), ValueError);
}

TEST(Adversarial, ValueAndGeneratorLossOracle) {
  const auto real = TensorD::from({1, 1, 1, 3}, {-2.0, 0.0, 3.0});
  const auto fake = TensorD::from({1, 1, 1, 3}, {1.0, -1.0, 0.5});
  double v = 0, g = 0;
  for (int i = 0; i < 3; ++i) {
    v += std::log(sigmoid(real[i])) + std::log(1 - sigmoid(fake[i]));
    g += -std::log(sigmoid(fake[i]));
  }
  EXPECT_NEAR(adversarial_value(real, fake).item(), v / 3, 1e-12);
  EXPECT_NEAR(adversarial_generator_loss(fake).item(), g / 3, 1e-12);
  // Saturated logits stay finite.
  const auto big = TensorD::from({1, 1, 1, 2}, {-800.0, 800.0});
  EXPECT_TRUE(std::isfinite(adversarial_value(big, big).item()));
  EXPECT_NEAR(adversarial_generator_loss(big).item(), 400.0, 1e-9);
}

TEST(Losses, ReportsRecomposeWithinTolerance) {
  const auto cfg = qt_test::tiny_model_config();
  const LossWeights w;
  ModelBundle<float> b(cfg, 2);
  Rng rng(3);
  const auto x = TensorF::uniform({2, 3, 16, 16}, rng, -1, 1);
  const auto rc = reconstruct(b.photo, x);
  const auto r1 = ae_loss(x, rc.x_rec, b.photo.discriminator, w, 0.5);
  EXPECT_NEAR(r1.total.item(), recompose(r1, w), 1e-6);
  EXPECT_EQ(r1.codebook_term.item(), 0.0f);
  const auto rq = reconstruct(b.art_hat, x);
  const auto r2 = vq_ae_loss(x, rq.x_rec, rq.latent, *rq.q, b.art_hat.discriminator, w, 0.8);
  EXPECT_NEAR(r2.total.item(), recompose(r2, w), 1e-6);
  EXPECT_GT(r2.codebook_term.item(), 0.0f);
  // Codebook and commitment terms carry the same value; only their routing differs.
  EXPECT_EQ(r2.codebook_term.item(), r2.commitment_term.item());

  const auto zc = b.photo.encode(x), zs = b.art.encode(x);
  const auto zy = b.sga.forward(zc, zs);
  const auto s1 = sga_losses(zy, zc, zs, b.feat_disc, w, 0.8);
  EXPECT_NEAR(s1.total.item(), recompose(s1, w), 1e-6);
  const auto zhc = quantize(b.photo_hat.encode(x), b.photo_hat.codebook).quantized;
  const auto zhs = quantize(b.art_hat.encode(x), b.art_hat.codebook).quantized;
  const auto q = sga_quantized_forward(b.sga_hat, zhc, zhs, b.art_hat.codebook);
  const auto s2 = sga_hat_loss(zhc, zhs, q.zhat_y, q.pre_quant, b.feat_disc_hat, w, 0.8);
  EXPECT_NEAR(s2.total.item(), recompose(s2, w), 1e-6);
  EXPECT_GT(s2.codebook.item(), 0.0f);
}

TEST(Losses, ContentAndStyleOracle) {
  // One sample, two channels, four positions.
  const auto a = TensorD::from({1, 2, 2, 2}, {1, 2, 3, 4, 0, 0, 0, 0});
  const auto b = TensorD::from({1, 2, 1, 2}, {1, 1, 2, 2});
  EXPECT_NEAR(content_loss(a, TensorD::zeros({1, 2, 2, 2})).item(), 30.0 / 8, 1e-12);
  // mu: (2.5, 0) vs (1, 2); sigma: (sqrt(1.25 + e), sqrt(e)) vs (sqrt(e), sqrt(e))
  const double e = 1e-6;
  const double mu = std::hypot(1.5, 2.0);
  const double sd = std::sqrt(1.25 + e) - std::sqrt(e);
  EXPECT_NEAR(style_loss(a, b).item(), mu + sd, 1e-9);
  EXPECT_NEAR(style_loss(a, a).item(), 0.0, 1e-12);
  EXPECT_THROW(style_loss(a, TensorD::zeros({1, 3, 2, 2})), ShapeError);
  EXPECT_THROW(content_loss(a, b), ShapeError);
}

// ---------------------------------------------------------------------------
// attention and SGA

TEST(Attention, WeightsAreRowStochastic) {
  Rng rng(4);
  AttentionBlock<double> attn(4, false, rng);
  const auto q = random_tensor<double>({2, 4, 2, 3}, rng), k = random_tensor<double>({2, 4, 3, 1}, rng);
  const auto a = attn.weights(q, k);
  ASSERT_EQ(a.shape(), (Shape{2, 6, 3}));
  for (std::size_t r = 0; r < 12; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_GE(a[r * 3 + c], 0.0);
      s += a[r * 3 + c];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Attention, ZeroValueProjectionLeavesResidual) {
  Rng rng(5);
  AttentionBlock<double> attn(3, true, rng);
  scale_params(attn.f_v, 0.0);
  const auto q = random_tensor<double>({1, 3, 2, 2}, rng), kv = random_tensor<double>({1, 3, 2, 2}, rng);
  EXPECT_TRUE(bit_equal(attn.forward(q, kv, kv), q));
}

TEST(Attention, KeyValuePermutationInvariance) {
  Rng rng(6);
  AttentionBlock<double> attn(3, false, rng);
  const auto q = random_tensor<double>({1, 3, 2, 2}, rng), k = random_tensor<double>({1, 3, 1, 4}, rng),
             v = random_tensor<double>({1, 3, 1, 4}, rng);
  // Reverse the four key/value positions.
  auto rev = [](const TensorD& t) {
    std::vector<double> out(t.numel());
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 4; ++p) out[c * 4 + p] = t[c * 4 + 3 - p];
    return TensorD::from(t.shape(), out);
  };
  const auto y1 = attn.forward(q, k, v), y2 = attn.forward(q, rev(k), rev(v));
  for (std::size_t i = 0; i < y1.numel(); ++i) EXPECT_NEAR(y1[i], y2[i], 1e-12);
}

TEST(Attention, ScaleDividesLogitsBySqrtDim) {
  Rng rng(7);
  AttentionBlock<double> scaled(4, true, rng);
  AttentionBlock<double> plain(4, false, rng);
  plain.f_q = nn::deep_copy(scaled.f_q), plain.f_k = nn::deep_copy(scaled.f_k), plain.f_v = nn::deep_copy(scaled.f_v);
  scale_params(plain.f_q, 0.5);  // 1/sqrt(4)
  const auto q = random_tensor<double>({1, 4, 2, 2}, rng), k = random_tensor<double>({1, 4, 2, 1}, rng);
  const auto a = scaled.weights(q, k), b = plain.weights(q, k);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(SGA, SelfOnlyModeIgnoresStyle) {
  SgaConfig sc;
  sc.mode = SgaMode::self_only;
  Rng rng(8);
  SGAModule<float> mod(4, 2, nn::Activation::silu, sc, rng);
  const auto zc = TensorF::randn({1, 4, 2, 2}, rng), s1 = TensorF::randn({1, 4, 2, 2}, rng),
             s2 = TensorF::randn({1, 4, 3, 3}, rng);
  EXPECT_TRUE(bit_equal(mod.forward(zc, s1), mod.forward(zc, s2)));
  SGAModule<float> cross(4, 2, nn::Activation::silu, SgaConfig{}, rng);
  EXPECT_FALSE(bit_equal(cross.forward(zc, s1), cross.forward(zc, s2)));
}

TEST(SGA, AblationsDropParameters) {
  Rng rng(9);
  auto count = [&](SgaConfig sc) {
    SGAModule<float> m(4, 2, nn::Activation::silu, sc, rng);
    return nn::parameters(m).size();
  };
  SgaConfig full, no_res, no_self;
  no_res.resblock = false;
  no_self.self_attn = false;
  EXPECT_EQ(count(no_self), count(full) - 6);
  EXPECT_LT(count(no_res), count(full));
  // Without the ResBlock or self-attention, a zero value projection makes the module the identity.
  SgaConfig bare = no_res;
  bare.self_attn = false;
  SGAModule<float> m(4, 2, nn::Activation::silu, bare, rng);
  scale_params(m.cross_attn.f_v, 0.0);
  const auto zc = TensorF::randn({1, 4, 2, 2}, rng);
  EXPECT_TRUE(bit_equal(m.forward(zc, TensorF::randn({1, 4, 2, 2}, rng)), zc));
}

TEST(SGA, StackComposesModules) {
  SgaConfig sc;
  sc.modules = 3;
  Rng rng(10);
  SGAStack<float> stack(4, 2, nn::Activation::silu, sc, rng);
  const auto zc = TensorF::randn({2, 4, 2, 2}, rng), zs = TensorF::randn({2, 4, 2, 2}, rng);
  auto h = zc;
  for (const auto& m : stack.modules) h = m.forward(h, zs);
  EXPECT_TRUE(bit_equal(stack.forward(zc, zs), h));
  sc.modules = 0;
  EXPECT_THROW(SGAStack<float>(4, 2, nn::Activation::silu, sc, rng), ValueError);
  EXPECT_THROW(stack.forward(zc, TensorF::randn({2, 3, 2, 2}, rng)), ShapeError);
}

TEST(SGA, QuantizedForwardRequantizesWithStopGradient) {
  ModelBundle<double> b(qt_test::tiny_model_config(), 11);
  Rng rng(12);
  auto zc = random_tensor<double>({1, 8, 4, 4}, rng, 1, true);
  const auto zs = random_tensor<double>({1, 8, 4, 4}, rng);
  const auto r = sga_quantized_forward(b.sga_hat, zc, zs, b.art_hat.codebook);
  EXPECT_EQ(r.indices.size(), 16u);
  for (std::size_t p = 0; p < 16; ++p)
    for (std::size_t c = 0; c < 8; ++c)
      EXPECT_EQ(r.zhat_y[c * 16 + p], b.art_hat.codebook.entries[static_cast<std::size_t>(r.indices[p]) * 8 + c]);
  // The commitment part pushes pre_quant toward zhat_y only.
  const auto g = backward(sum(r.zhat_y));
  const auto gz = g.of(zc);
  EXPECT_TRUE(std::all_of(gz.begin(), gz.end(), [](double v) { return v == 0.0; }));
}

// ---------------------------------------------------------------------------
// bundle

TEST(Bundle, ParameterGroupsAreDisjointAndComplete) {
  ModelBundle<float> b(qt_test::tiny_model_config(), 13);
  std::set<const void*> s1, s2;
  for (auto& p : b.stage1_params()) EXPECT_TRUE(s1.insert(p.tensor->node().get()).second) << p.name;
  for (auto& p : b.stage2_params()) EXPECT_TRUE(s2.insert(p.tensor->node().get()).second) << p.name;
  for (auto* n : s2) EXPECT_EQ(s1.count(n), 0u);
  const auto all = b.all_params();
  EXPECT_EQ(all.size(), s1.size() + s2.size());
  for (std::size_t i = 1; i < all.size(); ++i) EXPECT_LT(all[i - 1].name, all[i].name);
  EXPECT_EQ(b.stage1_generator_params().size() + b.stage1_discriminator_params().size(), s1.size());
  EXPECT_EQ(b.stage2_generator_params().size() + b.stage2_discriminator_params().size(), s2.size());
  EXPECT_TRUE(b.missing_components(true).empty());
}

TEST(Bundle, SharingAliasesModules) {
  auto cfg = qt_test::tiny_model_config();
  cfg.shared_encoders = true;
  ModelBundle<float> b(cfg, 14);
  EXPECT_EQ(nn::parameters(b.photo.encoder)[0].tensor->node(), nn::parameters(b.photo_hat.encoder)[0].tensor->node());
  EXPECT_NE(nn::parameters(b.photo.decoder)[0].tensor->node(), nn::parameters(b.photo_hat.decoder)[0].tensor->node());
  const auto n_shared = b.stage1_params().size();
  ModelBundle<float> plain(qt_test::tiny_model_config(), 14);
  EXPECT_EQ(n_shared + 2 * nn::parameters(plain.photo.encoder).size(), plain.stage1_params().size());
  cfg.shared_autoencoders = true;
  ModelBundle<float> c(cfg, 14);
  EXPECT_EQ(nn::parameters(c.art.decoder)[0].tensor->node(), nn::parameters(c.art_hat.decoder)[0].tensor->node());
}

TEST(Bundle, NoQuantizationHasNoQuantizedComponents) {
  auto cfg = qt_test::tiny_model_config();
  cfg.quantization = false;
  ModelBundle<float> b(cfg, 15);
  for (auto& p : b.all_params()) {
    EXPECT_EQ(p.name.find("_hat"), std::string::npos) << p.name;
    EXPECT_EQ(p.name.find("codebook"), std::string::npos) << p.name;
  }
  EXPECT_TRUE(b.missing_components(false).empty());
  EXPECT_FALSE(b.missing_components(true).empty());
}

TEST(Bundle, ParameterHashIsValueAndOrderSensitive) {
  ModelBundle<float> a(qt_test::tiny_model_config(), 16), b(qt_test::tiny_model_config(), 16);
  EXPECT_EQ(parameter_hash(a.stage1_params()), parameter_hash(b.stage1_params()));
  auto params = b.stage1_params();
  std::vector<float> v(params[3].tensor->values());
  v[0] = std::nextafter(v[0], 1.0f);
  params[3].tensor->assign(v);
  EXPECT_NE(parameter_hash(a.stage1_params()), parameter_hash(b.stage1_params()));
  auto rev = a.stage1_params();
  std::reverse(rev.begin(), rev.end());
  EXPECT_NE(parameter_hash(rev), parameter_hash(a.stage1_params()));
  EXPECT_EQ(parameter_hash(a.stage1_params()).size(), 64u);
  ModelBundle<float> c(qt_test::tiny_model_config(), 17);
  EXPECT_NE(parameter_hash(a.stage1_params()), parameter_hash(c.stage1_params()));
}

// ---------------------------------------------------------------------------
// configuration records

TEST(Config, JsonRoundTripAndUnknownKeys) {
  auto m = qt_test::tiny_model_config();
  m.sga.mode = SgaMode::self_only;
  m.shared_encoders = true;
  EXPECT_EQ(to_json(model_config_from_json(to_json(m))), to_json(m));
  TrainConfig t;
  t.learning_rate = 3e-4;
  t.reseed_dead = true;
  t.weights.style = 2.0;
  EXPECT_EQ(to_json(train_config_from_json(to_json(t))), to_json(t));
  EXPECT_THROW(model_config_from_json({{"imagesize", 8}}), ValueError);
  EXPECT_THROW(train_config_from_json({{"weights", {{"stlye", 1}}}}), ValueError);
  EXPECT_EQ(model_config_from_json(nlohmann::json::object()).latent_dim, ModelConfig{}.latent_dim);
  EXPECT_THROW(sga_mode_from_string("both"), ValueError);
}

TEST(Config, FullScaleValues) {
  const auto m = full_scale_model_config();
  const auto t = full_scale_train_config();
  EXPECT_EQ(m.image_size, 256u);
  EXPECT_EQ(m.codebook_size, 1024u);
  EXPECT_EQ(m.latent_dim, 256u);
  EXPECT_EQ(m.sga.modules, 6u);
  EXPECT_EQ(m.code_size(), 16u);
  EXPECT_DOUBLE_EQ(t.learning_rate, 4.5e-6);
  EXPECT_EQ(t.batch_size, 32u);
  EXPECT_EQ(t.epochs, 50u);
  EXPECT_NO_THROW(m.validate());
}

TEST(Config, AdversarialWarmupAndStepCounts) {
  TrainConfig t;
  t.warmup_fraction = 0.25;
  EXPECT_DOUBLE_EQ(t.adv_weight(0.8, 0, 100), 0.0);
  EXPECT_DOUBLE_EQ(t.adv_weight(0.8, 10, 100), 0.8 * 0.4);
  EXPECT_DOUBLE_EQ(t.adv_weight(0.8, 25, 100), 0.8);
  t.adv_warmup = false;
  EXPECT_DOUBLE_EQ(t.adv_weight(0.8, 0, 100), 0.8);
  t.batch_size = 5;
  t.epochs = 3;
  EXPECT_EQ(t.steps_per_epoch(16), 4u);
  EXPECT_EQ(t.total_steps(16), 12u);
  t.steps = 7;
  EXPECT_EQ(t.total_steps(16), 7u);
}

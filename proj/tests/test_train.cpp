#include <gtest/gtest.h>

#include "quantart/checkpoint.hpp"
#include "quantart/train.hpp"
#include "support.hpp"

using namespace quantart;

namespace {

struct Toy {
  ImageDataset photos = synthetic_textures(Domain::photo, 6, 16, 1);
  ImageDataset arts = synthetic_textures(Domain::art, 5, 16, 2);
};

TrainConfig short_run(std::size_t steps, int stage = 1) {
  TrainConfig t;
  t.stage = stage;
  t.steps = steps;
  t.batch_size = 3;
  t.learning_rate = 1e-3;
  t.seed = 9;
  return t;
}

}  // namespace

TEST(Train, StageOneUpdatesOnlyStageOneParameters) {
  Toy toy;
  ModelBundle<float> b(qt_test::tiny_model_config(), 1);
  const auto s2 = snapshot(b.stage2_params());
  const auto s1 = snapshot(b.stage1_params());
  std::vector<nlohmann::json> records;
  const auto summary = train_stage1(b, short_run(4), toy.photos, toy.arts, [&](const nlohmann::json& j) { records.push_back(j); });
  EXPECT_EQ(summary.steps, 4u);
  EXPECT_EQ(b.stage, 1);
  EXPECT_EQ(b.stage1_hash, parameter_hash(b.stage1_params()));
  EXPECT_TRUE(snapshot(b.stage2_params()) == s2);
  EXPECT_FALSE(snapshot(b.stage1_params()) == s1);
  for (const auto* name : {"photo", "art", "photo_hat", "art_hat"}) EXPECT_EQ(summary.recon_history.at(name).size(), 4u);
  // Two steps per epoch with batch 3 over six photos.
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[1]["step"], 4);
  EXPECT_EQ(records[1]["epoch"], 1);
  EXPECT_TRUE(records[0]["pairs"]["art_hat"].contains("perplexity"));
  EXPECT_FALSE(records[0]["pairs"]["art"].contains("perplexity"));
  EXPECT_EQ(b.provenance["stage1"]["steps"], 4);
}

TEST(Train, ZeroStepsChangesNothingButTheStage) {
  Toy toy;
  ModelBundle<float> b(qt_test::tiny_model_config(), 1);
  const auto before = parameter_hash(b.all_params());
  auto cfg = short_run(0);
  cfg.epochs = 0;
  EXPECT_EQ(train_stage1(b, cfg, toy.photos, toy.arts).steps, 0u);
  EXPECT_EQ(parameter_hash(b.all_params()), before);
  EXPECT_EQ(b.stage, 1);
}

TEST(Train, StageOrderIsEnforced) {
  Toy toy;
  ModelBundle<float> b(qt_test::tiny_model_config(), 1);
  EXPECT_THROW(train_stage2(b, short_run(1, 2), toy.photos, toy.arts), ValueError);
  train_stage1(b, short_run(1), toy.photos, toy.arts);
  EXPECT_THROW(train_stage1(b, short_run(1), toy.photos, toy.arts), ValueError);
  EXPECT_THROW(train_stage1(b, short_run(1), ImageDataset{}, toy.arts), ValueError);
  // A bundle whose stage-1 parameters no longer match their recorded hash.
  auto tampered = b;
  tampered.stage1_hash = std::string(64, '0');
  EXPECT_THROW(train_stage2(tampered, short_run(1, 2), toy.photos, toy.arts), ValueError);
}

TEST(Train, StageTwoFreezesStageOne) {
  Toy toy;
  ModelBundle<float> b(qt_test::tiny_model_config(), 2);
  train_stage1(b, short_run(2), toy.photos, toy.arts);
  const auto hash1 = b.stage1_hash;
  const auto s2 = snapshot(b.stage2_params());
  std::vector<nlohmann::json> records;
  const auto summary = train_stage2(b, short_run(3, 2), toy.photos, toy.arts, [&](const nlohmann::json& j) { records.push_back(j); });
  EXPECT_EQ(summary.steps, 3u);
  EXPECT_EQ(summary.stage1_hash, hash1);
  EXPECT_EQ(parameter_hash(b.stage1_params()), hash1);
  EXPECT_FALSE(snapshot(b.stage2_params()) == s2);
  EXPECT_EQ(b.stage, 2);
  EXPECT_EQ(summary.style_history.size(), 3u);
  EXPECT_EQ(summary.style_hat_history.size(), 3u);
  ASSERT_FALSE(records.empty());
  EXPECT_TRUE(records.back()["losses"].contains("sga_hat"));
  // Continued training from a stage-2 bundle is allowed.
  EXPECT_NO_THROW(train_stage2(b, short_run(1, 2), toy.photos, toy.arts));
}

TEST(Train, SeededRunsAreByteIdentical) {
  Toy toy;
  auto run = [&] {
    ModelBundle<float> b(qt_test::tiny_model_config(), 5);
    auto cfg = short_run(3);
    cfg.reseed_dead = true;
    train_stage1(b, cfg, toy.photos, toy.arts);
    train_stage2(b, short_run(2, 2), toy.photos, toy.arts);
    return serialize_bundle(b);
  };
  const auto a = run();
  EXPECT_EQ(a, run());
  ModelBundle<float> other(qt_test::tiny_model_config(), 5);
  auto cfg = short_run(3);
  cfg.seed = 10;
  train_stage1(other, cfg, toy.photos, toy.arts);
  train_stage2(other, short_run(2, 2), toy.photos, toy.arts);
  EXPECT_NE(serialize_bundle(other), a);
}

TEST(Train, DivergenceIsReported) {
  Toy toy;
  ModelBundle<float> b(qt_test::tiny_model_config(), 3);
  auto cfg = short_run(6);
  cfg.learning_rate = 1e30;
  try {
    train_stage1(b, cfg, toy.photos, toy.arts);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 1"), std::string::npos) << e.what();
  }
}

TEST(Train, AblatedModelsTrain) {
  Toy toy;
  for (int variant = 0; variant < 3; ++variant) {
    auto mc = qt_test::tiny_model_config();
    if (variant == 0) mc.quantization = false;
    if (variant == 1) mc.sga_quantization = false, mc.sga.mode = SgaMode::self_only;
    if (variant == 2) mc.shared_autoencoders = true, mc.sga.resblock = false, mc.sga.self_attn = false;
    ModelBundle<float> b(mc, 6);
    const auto s1 = train_stage1(b, short_run(2), toy.photos, toy.arts);
    EXPECT_EQ(s1.recon_history.size(), mc.quantization ? 4u : 2u) << variant;
    const auto s2 = train_stage2(b, short_run(2, 2), toy.photos, toy.arts);
    EXPECT_EQ(s2.style_hat_history.empty(), !mc.quantization) << variant;
  }
}

TEST(Train, EvaluationIsDeterministic) {
  Toy toy;
  ModelBundle<float> b(qt_test::tiny_model_config(), 7);
  const auto e1 = evaluate_stage1(b, toy.photos, toy.arts), e2 = evaluate_stage1(b, toy.photos, toy.arts);
  EXPECT_EQ(e1.recon_l1, e2.recon_l1);
  EXPECT_EQ(e1.perplexity.size(), 2u);
  EXPECT_GE(e1.perplexity.at("art_hat"), 1.0);
  const auto s = evaluate_style(b, toy.photos, toy.arts);
  EXPECT_EQ(s.pairs, 5u);
  EXPECT_GT(s.style, 0.0);
  EXPECT_EQ(s.style, evaluate_style(b, toy.photos, toy.arts).style);
}

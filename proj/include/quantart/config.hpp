#pragma once
// Plain configuration records for models and training, with JSON round-trip.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "quantart/nn.hpp"

namespace quantart {

struct LossWeights {
  double recon = 1.0;
  double adv = 0.8;
  double codebook = 1.0;
  double commitment = 0.25;
  double content = 1.0;
  double style = 10.0;
  double featadv = 0.8;
  double sga_commitment = 1.0;
};

enum class SgaMode { cross, self_only };

std::string to_string(SgaMode m);
SgaMode sga_mode_from_string(const std::string& s);

struct SgaConfig {
  std::size_t modules = 2;
  bool attn_scale = false;  // divide logits by sqrt(d)
  bool self_attn = true;
  bool resblock = true;
  SgaMode mode = SgaMode::cross;
};

struct ModelConfig {
  std::size_t image_size = 32;
  std::size_t channels = 3;
  std::size_t base_channels = 16;
  std::vector<std::size_t> channel_mult{1, 2};  // 8x8 latent at 32px
  std::size_t res_blocks = 2;
  std::size_t latent_dim = 64;
  std::size_t codebook_size = 128;
  std::size_t groups = 8;
  nn::Activation activation = nn::Activation::silu;
  std::size_t disc_channels = 16;
  std::size_t feat_disc_channels = 64;
  SgaConfig sga;

  bool quantization = true;       // false: no quantized pairs, no alpha path
  bool sga_quantization = true;   // false: quantized SGA output is not re-quantized
  bool shared_encoders = false;   // E_C == Ê_C and E_S == Ê_S
  bool shared_autoencoders = false;  // encoder and decoder shared per domain

  nn::StackConfig stack() const;
  // Latent spatial extent for image_size inputs.
  std::size_t code_size() const;
  // Sets the number of down blocks so that image_size / 2^n == code; extra
  // blocks reuse the last channel multiplier.
  void set_code_size(std::size_t code);
  void validate() const;
};

struct TrainConfig {
  int stage = 1;
  std::size_t epochs = 50;
  std::size_t steps = 0;  // when nonzero, overrides epochs
  std::size_t batch_size = 8;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights weights;
  std::uint64_t seed = 0;
  bool adv_warmup = true;
  double warmup_fraction = 0.2;
  bool reseed_dead = false;
  bool flip = true;

  void validate() const;
  std::size_t total_steps(std::size_t dataset_size) const;
  std::size_t steps_per_epoch(std::size_t dataset_size) const;
  // Adversarial weight at a 0-based step.
  double adv_weight(double base, std::size_t step, std::size_t total) const;
};

// Full-scale values: 256px images, N=1024, d=256, six SGA modules,
// lr 4.5e-6, batch 32, 50 epochs.
ModelConfig full_scale_model_config();
TrainConfig full_scale_train_config();

nlohmann::json to_json(const LossWeights& w);
nlohmann::json to_json(const SgaConfig& c);
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
// Missing keys keep their defaults; unknown keys are an error.
LossWeights loss_weights_from_json(const nlohmann::json& j);
SgaConfig sga_config_from_json(const nlohmann::json& j);
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace quantart

#include "quantart/config.hpp"

#include <cmath>
#include <set>

namespace quantart {

using nlohmann::json;

std::string to_string(SgaMode m) { return m == SgaMode::cross ? "cross" : "self_only"; }

SgaMode sga_mode_from_string(const std::string& s) {
  if (s == "cross") return SgaMode::cross;
  if (s == "self_only") return SgaMode::self_only;
  throw ValueError("unknown SGA mode '" + s + "' (expected cross or self_only)");
}

nn::StackConfig ModelConfig::stack() const {
  nn::StackConfig s;
  s.in_channels = channels;
  s.base_channels = base_channels;
  s.channel_mult = channel_mult;
  s.res_blocks = res_blocks;
  s.latent_dim = latent_dim;
  s.groups = groups;
  s.activation = activation;
  return s;
}

std::size_t ModelConfig::code_size() const { return image_size >> channel_mult.size(); }

void ModelConfig::set_code_size(std::size_t code) {
  if (code == 0 || image_size % code != 0)
    throw ValueError("code size " + std::to_string(code) + " does not divide image size " +
                     std::to_string(image_size));
  std::size_t ratio = image_size / code, n = 0;
  while (ratio > 1 && ratio % 2 == 0) ratio /= 2, ++n;
  if (ratio != 1 || n == 0)
    throw ValueError("image size / code size must be a power of two >= 2, got " +
                     std::to_string(image_size) + "/" + std::to_string(code));
  const std::size_t last = channel_mult.empty() ? 1 : channel_mult.back();
  channel_mult.resize(n, last);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValueError("model config: " + m); };
  if (channel_mult.empty()) fail("channel_mult is empty");
  if (channel_mult.size() >= 31) fail("too many down blocks");
  const std::size_t f = std::size_t{1} << channel_mult.size();
  if (image_size == 0 || image_size % f != 0)
    fail("image_size " + std::to_string(image_size) + " is not a multiple of " + std::to_string(f));
  if (channels == 0 || base_channels == 0 || latent_dim == 0) fail("channel counts must be positive");
  if (groups == 0) fail("groups must be positive");
  for (auto m : channel_mult)
    if (m == 0 || (base_channels * m) % groups != 0)
      fail("block channels " + std::to_string(base_channels * m) + " not divisible into " +
           std::to_string(groups) + " groups");
  if (latent_dim % groups != 0)
    fail("latent_dim " + std::to_string(latent_dim) + " not divisible into " + std::to_string(groups) +
         " groups");
  if (res_blocks == 0) fail("res_blocks must be >= 1");
  if (codebook_size == 0) fail("codebook_size must be >= 1");
  if (disc_channels == 0 || feat_disc_channels == 0) fail("discriminator channels must be positive");
  if (sga.modules == 0) fail("sga.modules must be >= 1");
  if (!quantization && (shared_encoders || shared_autoencoders))
    fail("sharing between pairs needs the quantized pairs");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValueError("train config: " + m); };
  if (stage != 1 && stage != 2) fail("stage must be 1 or 2");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
  if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1) fail("Adam betas must lie in [0,1)");
  if (!(adam_eps > 0)) fail("adam_eps must be positive");
  if (warmup_fraction < 0 || warmup_fraction > 1) fail("warmup_fraction must lie in [0,1]");
  for (double w : {weights.recon, weights.adv, weights.codebook, weights.commitment, weights.content,
                   weights.style, weights.featadv, weights.sga_commitment})
    if (!(w >= 0) || !std::isfinite(w)) fail("loss weights must be finite and >= 0");
}

std::size_t TrainConfig::steps_per_epoch(std::size_t n) const {
  return n == 0 ? 0 : (n + batch_size - 1) / batch_size;
}

std::size_t TrainConfig::total_steps(std::size_t n) const {
  return steps ? steps : epochs * steps_per_epoch(n);
}

double TrainConfig::adv_weight(double base, std::size_t step, std::size_t total) const {
  if (!adv_warmup || warmup_fraction <= 0.0 || total == 0) return base;
  const double ramp = warmup_fraction * static_cast<double>(total);
  const double t = static_cast<double>(step) / ramp;
  return t >= 1.0 ? base : base * t;
}

ModelConfig full_scale_model_config() {
  ModelConfig c;
  c.image_size = 256;
  c.base_channels = 128;
  c.channel_mult = {1, 1, 2, 2};
  c.res_blocks = 2;
  c.latent_dim = 256;
  c.codebook_size = 1024;
  c.groups = 32;
  c.disc_channels = 64;
  c.feat_disc_channels = 256;
  c.sga.modules = 6;
  return c;
}

TrainConfig full_scale_train_config() {
  TrainConfig t;
  t.epochs = 50;
  t.batch_size = 32;
  t.learning_rate = 4.5e-6;
  return t;
}

// ---------------------------------------------------------------------------

namespace {

void check_keys(const json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ValueError(std::string(what) + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ValueError(std::string(what) + ": unknown key '" + it.key() + "'");
}

template <class V>
void get(const json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

}  // namespace

json to_json(const LossWeights& w) {
  return {{"recon", w.recon},     {"adv", w.adv},         {"codebook", w.codebook},
          {"commitment", w.commitment}, {"content", w.content}, {"style", w.style},
          {"featadv", w.featadv}, {"sga_commitment", w.sga_commitment}};
}

json to_json(const SgaConfig& c) {
  return {{"modules", c.modules},   {"attn_scale", c.attn_scale}, {"self_attn", c.self_attn},
          {"resblock", c.resblock}, {"mode", to_string(c.mode)}};
}

json to_json(const ModelConfig& c) {
  return {{"image_size", c.image_size},
          {"channels", c.channels},
          {"base_channels", c.base_channels},
          {"channel_mult", c.channel_mult},
          {"res_blocks", c.res_blocks},
          {"latent_dim", c.latent_dim},
          {"codebook_size", c.codebook_size},
          {"groups", c.groups},
          {"activation", nn::to_string(c.activation)},
          {"disc_channels", c.disc_channels},
          {"feat_disc_channels", c.feat_disc_channels},
          {"sga", to_json(c.sga)},
          {"quantization", c.quantization},
          {"sga_quantization", c.sga_quantization},
          {"shared_encoders", c.shared_encoders},
          {"shared_autoencoders", c.shared_autoencoders}};
}

json to_json(const TrainConfig& c) {
  return {{"stage", c.stage},
          {"epochs", c.epochs},
          {"steps", c.steps},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"weights", to_json(c.weights)},
          {"seed", c.seed},
          {"adv_warmup", c.adv_warmup},
          {"warmup_fraction", c.warmup_fraction},
          {"reseed_dead", c.reseed_dead},
          {"flip", c.flip}};
}

LossWeights loss_weights_from_json(const json& j) {
  check_keys(j, {"recon", "adv", "codebook", "commitment", "content", "style", "featadv", "sga_commitment"},
             "weights");
  LossWeights w;
  get(j, "recon", w.recon);
  get(j, "adv", w.adv);
  get(j, "codebook", w.codebook);
  get(j, "commitment", w.commitment);
  get(j, "content", w.content);
  get(j, "style", w.style);
  get(j, "featadv", w.featadv);
  get(j, "sga_commitment", w.sga_commitment);
  return w;
}

SgaConfig sga_config_from_json(const json& j) {
  check_keys(j, {"modules", "attn_scale", "self_attn", "resblock", "mode"}, "sga");
  SgaConfig c;
  get(j, "modules", c.modules);
  get(j, "attn_scale", c.attn_scale);
  get(j, "self_attn", c.self_attn);
  get(j, "resblock", c.resblock);
  if (j.contains("mode")) c.mode = sga_mode_from_string(j.at("mode").get<std::string>());
  return c;
}

ModelConfig model_config_from_json(const json& j) {
  check_keys(j,
             {"image_size", "channels", "base_channels", "channel_mult", "res_blocks", "latent_dim",
              "codebook_size", "groups", "activation", "disc_channels", "feat_disc_channels", "sga",
              "quantization", "sga_quantization", "shared_encoders", "shared_autoencoders"},
             "model");
  ModelConfig c;
  get(j, "image_size", c.image_size);
  get(j, "channels", c.channels);
  get(j, "base_channels", c.base_channels);
  get(j, "channel_mult", c.channel_mult);
  get(j, "res_blocks", c.res_blocks);
  get(j, "latent_dim", c.latent_dim);
  get(j, "codebook_size", c.codebook_size);
  get(j, "groups", c.groups);
  if (j.contains("activation")) c.activation = nn::activation_from_string(j.at("activation").get<std::string>());
  get(j, "disc_channels", c.disc_channels);
  get(j, "feat_disc_channels", c.feat_disc_channels);
  if (j.contains("sga")) c.sga = sga_config_from_json(j.at("sga"));
  get(j, "quantization", c.quantization);
  get(j, "sga_quantization", c.sga_quantization);
  get(j, "shared_encoders", c.shared_encoders);
  get(j, "shared_autoencoders", c.shared_autoencoders);
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  check_keys(j,
             {"stage", "epochs", "steps", "batch_size", "learning_rate", "adam_beta1", "adam_beta2",
              "adam_eps", "weights", "seed", "adv_warmup", "warmup_fraction", "reseed_dead", "flip"},
             "train");
  TrainConfig c;
  get(j, "stage", c.stage);
  get(j, "epochs", c.epochs);
  get(j, "steps", c.steps);
  get(j, "batch_size", c.batch_size);
  get(j, "learning_rate", c.learning_rate);
  get(j, "adam_beta1", c.adam_beta1);
  get(j, "adam_beta2", c.adam_beta2);
  get(j, "adam_eps", c.adam_eps);
  if (j.contains("weights")) c.weights = loss_weights_from_json(j.at("weights"));
  get(j, "seed", c.seed);
  get(j, "adv_warmup", c.adv_warmup);
  get(j, "warmup_fraction", c.warmup_fraction);
  get(j, "reseed_dead", c.reseed_dead);
  get(j, "flip", c.flip);
  return c;
}

}  // namespace quantart

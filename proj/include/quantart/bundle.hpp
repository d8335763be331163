#pragma once
// The full model: four autoencoder pairs (two with codebooks), two SGA
// stacks and their feature discriminators, plus the config they were built
// from and which training stage they have completed.

#include <string>

#include "quantart/sga.hpp"

namespace quantart {

template <class T>
class ModelBundle {
 public:
  using Scalar = T;
  ModelBundle() = default;
  ModelBundle(const ModelConfig& cfg, std::uint64_t seed);

  ModelConfig config;
  int stage = 0;           // last completed training stage
  std::string stage1_hash;  // parameter_hash of stage-1 parameters, set once stage 1 is done
  nlohmann::json provenance = nlohmann::json::object();

  AutoencoderPair<T> photo;      // E_C, D_C
  AutoencoderPair<T> art;        // E_S, D_S
  AutoencoderPair<T> photo_hat;  // Ê_C, D̂_C, photo codebook
  AutoencoderPair<T> art_hat;    // Ê_S, D̂_S, art codebook
  SGAStack<T> sga;
  SGAStack<T> sga_hat;
  nn::PatchDiscriminator<T> feat_disc;
  nn::PatchDiscriminator<T> feat_disc_hat;

  bool quantized() const { return config.quantization; }

  // Parameter groups in a fixed order, without duplicates when pairs share
  // modules.
  nn::ParamList<T> stage1_generator_params();
  nn::ParamList<T> stage1_discriminator_params();
  nn::ParamList<T> stage1_params();
  nn::ParamList<T> stage2_generator_params();
  nn::ParamList<T> stage2_discriminator_params();
  nn::ParamList<T> stage2_params();
  // Everything, sorted by name.
  nn::ParamList<T> all_params();

  // Names of components an inference call needs but the bundle lacks.
  std::vector<std::string> missing_components(bool need_quantized) const;
};

// Removes later entries that alias an earlier tensor.
template <class T>
nn::ParamList<T> dedupe(nn::ParamList<T> params);

// Hex SHA-256 over (name, shape, float32 little-endian values) of each entry,
// in the order given.
template <class T>
std::string parameter_hash(const nn::ParamList<T>& params);

template <class T>
struct ParamSnapshot {
  std::vector<std::vector<T>> values;
  bool operator==(const ParamSnapshot&) const = default;
};

template <class T>
ParamSnapshot<T> snapshot(const nn::ParamList<T>& params);

}  // namespace quantart

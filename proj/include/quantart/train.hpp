#pragma once
// Stage-1 (autoencoders and codebooks) and Stage-2 (SGA stacks, everything
// else frozen) training loops.

#include <functional>
#include <map>

#include "quantart/adam.hpp"
#include "quantart/bundle.hpp"
#include "quantart/dataset.hpp"

namespace quantart {

// Receives one JSON record per epoch.
using LogSink = std::function<void(const nlohmann::json&)>;

struct StageOneSummary {
  std::size_t steps = 0;
  // Per pair ("photo", "art", "photo_hat", "art_hat"): generator loss parts per step.
  std::map<std::string, std::vector<double>> recon_history;
  std::map<std::string, std::vector<double>> total_history;
};

struct StageTwoSummary {
  std::size_t steps = 0;
  std::vector<double> style_history;      // continuous stack
  std::vector<double> style_hat_history;  // quantized stack (pre-quantization output)
  std::vector<double> total_history;
  std::string stage1_hash;
};

// Trains the four pairs jointly on one summed objective; no parameter is
// shared between pairs unless a sharing flag is set, so each pair sees only
// its own gradients.
template <class T>
StageOneSummary train_stage1(ModelBundle<T>& bundle, const TrainConfig& cfg, const ImageDataset& photos,
                             const ImageDataset& arts, const LogSink& log = {});

// Throws ValueError unless bundle.stage == 1 (or 2 for continued training).
// Asserts that stage-1 parameters are bit-identical afterwards.
template <class T>
StageTwoSummary train_stage2(ModelBundle<T>& bundle, const TrainConfig& cfg, const ImageDataset& photos,
                             const ImageDataset& arts, const LogSink& log = {});

struct StageOneEval {
  std::map<std::string, double> recon_l1;  // mean absolute error over the dataset
  std::map<std::string, double> perplexity;
  std::map<std::string, std::size_t> codes_used;
};

template <class T>
StageOneEval evaluate_stage1(const ModelBundle<T>& bundle, const ImageDataset& photos, const ImageDataset& arts);

struct StyleEval {
  double style = 0.0;      // continuous stack output vs art feature
  double style_hat = 0.0;  // quantized stack output (before re-quantization) vs quantized art feature
  double content = 0.0;
  std::size_t pairs = 0;
};

// Pairs photos[i] with arts[i] for i < min(sizes).
template <class T>
StyleEval evaluate_style(const ModelBundle<T>& bundle, const ImageDataset& photos, const ImageDataset& arts);

}  // namespace quantart

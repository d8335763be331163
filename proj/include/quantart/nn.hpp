#pragma once
// Network building blocks: convolution, group norm, per-location linear maps,
// ResBlocks, encoder/decoder stacks and patch discriminators.
//
// Every block exposes collect(prefix, out) which appends (name, tensor*)
// pairs for its parameters in a fixed order. Parameter tensors are leaves;
// copying a block shares them, deep_copy() does not.

#include <memory>
#include <string>
#include <vector>

#include "quantart/ops.hpp"

namespace quantart::nn {

enum class Activation { silu, relu, leaky_relu };

using quantart::to_string;

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

template <class T>
Tensor<T> activate(const Tensor<T>& x, Activation a);

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T>* tensor;
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;

template <class M>
auto parameters(M& module, const std::string& prefix = "") {
  ParamList<typename M::Scalar> out;
  module.collect(prefix, out);
  return out;
}

template <class T>
void zero_parameters(ParamList<T> params);

// Replaces every parameter handle with a fresh leaf holding the same values.
template <class M>
M deep_copy(const M& module) {
  M copy = module;
  for (auto& p : parameters(copy)) *p.tensor = p.tensor->detach(true);
  return copy;
}

template <class T>
class Conv2d {
 public:
  using Scalar = T;
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad,
         Rng& rng, bool bias = true);
  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride_, pad_); }
  void collect(const std::string& prefix, ParamList<T>& out);
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }

  Tensor<T> weight;
  Tensor<T> bias;

 private:
  std::size_t stride_ = 1;
  std::size_t pad_ = 0;
};

template <class T>
class GroupNorm {
 public:
  using Scalar = T;
  GroupNorm() = default;
  GroupNorm(std::size_t channels, std::size_t groups);
  Tensor<T> forward(const Tensor<T>& x) const { return group_norm(x, groups_, gamma, beta); }
  void collect(const std::string& prefix, ParamList<T>& out);

  Tensor<T> gamma;
  Tensor<T> beta;

 private:
  std::size_t groups_ = 1;
};

// y = x W + b applied over the last axis.
template <class T>
class Linear {
 public:
  using Scalar = T;
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out);

  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]
};

// out = shortcut(x) + conv2(act(norm(conv1(x)))). The shortcut is the identity
// when channel counts agree and a 1x1 projection otherwise, so a block with
// zero conv weights and biases maps x to x.
template <class T>
class ResBlock {
 public:
  using Scalar = T;
  ResBlock() = default;
  ResBlock(std::size_t in, std::size_t out, std::size_t groups, Activation act, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out);
  std::size_t in_channels() const { return conv1.in_channels(); }
  std::size_t out_channels() const { return conv1.out_channels(); }
  bool has_projection() const { return has_shortcut_; }

  Conv2d<T> conv1;
  GroupNorm<T> norm1;
  Conv2d<T> conv2;
  Conv2d<T> shortcut;

 private:
  Activation act_ = Activation::silu;
  bool has_shortcut_ = false;
};

// 3x3 stride-2 convolution; spatial extents must be even.
template <class T>
class Downsample {
 public:
  using Scalar = T;
  Downsample() = default;
  Downsample(std::size_t channels, Rng& rng) : conv(channels, channels, 3, 2, 1, rng) {}
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) { conv.collect(prefix + "conv.", out); }

  Conv2d<T> conv;
};

// Nearest-neighbour 2x upsampling followed by a 3x3 convolution.
template <class T>
class Upsample {
 public:
  using Scalar = T;
  Upsample() = default;
  Upsample(std::size_t channels, Rng& rng) : conv(channels, channels, 3, 1, 1, rng) {}
  Tensor<T> forward(const Tensor<T>& x) const { return conv.forward(upsample_nearest2x(x)); }
  void collect(const std::string& prefix, ParamList<T>& out) { conv.collect(prefix + "conv.", out); }

  Conv2d<T> conv;
};

struct StackConfig {
  std::size_t in_channels = 3;
  std::size_t base_channels = 16;
  // One entry per down/up block; channels of block i = base_channels * mult[i].
  std::vector<std::size_t> channel_mult{1, 2, 2, 4};
  std::size_t res_blocks = 2;
  std::size_t latent_dim = 64;
  std::size_t groups = 8;
  Activation activation = Activation::silu;

  std::size_t num_blocks() const { return channel_mult.size(); }
  std::size_t downscale() const { return std::size_t{1} << num_blocks(); }
};

template <class T>
class Encoder {
 public:
  using Scalar = T;
  Encoder() = default;
  Encoder(const StackConfig& cfg, Rng& rng);
  // B x in_channels x H x W  ->  B x latent_dim x H/2^n x W/2^n
  Tensor<T> forward(const Tensor<T>& x) const;
  // Activations after each down block, followed by the latent.
  std::vector<Tensor<T>> forward_taps(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out);
  const StackConfig& config() const { return cfg_; }
  bool empty() const { return blocks_.empty(); }

 private:
  struct Block {
    std::vector<ResBlock<T>> res;
    Downsample<T> down;
  };
  StackConfig cfg_;
  Conv2d<T> conv_in_;
  std::vector<Block> blocks_;
  GroupNorm<T> norm_out_;
  Conv2d<T> conv_out_;
};

template <class T>
class Decoder {
 public:
  using Scalar = T;
  Decoder() = default;
  Decoder(const StackConfig& cfg, Rng& rng);
  // B x latent_dim x h x w  ->  B x in_channels x h*2^n x w*2^n, values in (-1, 1)
  Tensor<T> forward(const Tensor<T>& z) const;
  void collect(const std::string& prefix, ParamList<T>& out);
  const StackConfig& config() const { return cfg_; }
  bool empty() const { return blocks_.empty(); }

 private:
  struct Block {
    std::vector<ResBlock<T>> res;
    Upsample<T> up;
  };
  StackConfig cfg_;
  Conv2d<T> conv_in_;
  std::vector<Block> blocks_;
  GroupNorm<T> norm_out_;
  Conv2d<T> conv_out_;
};

enum class DiscriminatorKind { image, feature };

// Maps an image (or a feature map) to a grid of real/fake logits.
//  image:   4x4/s2 -> 4x4/s2 -> 3x3/s1, leaky ReLU 0.2 between layers
//  feature: 1x1 -> 3x3, leaky ReLU 0.2 between layers
template <class T>
class PatchDiscriminator {
 public:
  using Scalar = T;
  PatchDiscriminator() = default;
  PatchDiscriminator(DiscriminatorKind kind, std::size_t in_channels, std::size_t channels, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out);
  std::size_t in_channels() const { return layers_.front().in_channels(); }
  bool empty() const { return layers_.empty(); }

 private:
  DiscriminatorKind kind_ = DiscriminatorKind::image;
  std::vector<Conv2d<T>> layers_;
};

}  // namespace quantart::nn

#include "quantart/nn.hpp"

#include <cmath>

namespace quantart::nn {

Activation activation_from_string(const std::string& s) {
  if (s == "silu") return Activation::silu;
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu") return Activation::leaky_relu;
  throw ValueError("unknown activation '" + s + "' (expected silu, relu or leaky_relu)");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::silu: return "silu";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
  }
  return "silu";
}

template <class T>
Tensor<T> activate(const Tensor<T>& x, Activation a) {
  switch (a) {
    case Activation::silu: return silu(x);
    case Activation::relu: return relu(x);
    case Activation::leaky_relu: return leaky_relu(x, T(0.2));
  }
  return silu(x);
}

template <class T>
void zero_parameters(ParamList<T> params) {
  for (auto& p : params) p.tensor->assign(std::vector<T>(p.tensor->numel(), T(0)));
}

// ---------------------------------------------------------------------------

template <class T>
Conv2d<T>::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                  std::size_t pad, Rng& rng, bool with_bias)
    : stride_(stride), pad_(pad) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
  weight = Tensor<T>::uniform({out, in, kernel, kernel}, rng, -bound, bound, true);
  if (with_bias) bias = Tensor<T>::uniform({out}, rng, -bound, bound, true);
}

template <class T>
void Conv2d<T>::collect(const std::string& prefix, ParamList<T>& out) {
  out.push_back({prefix + "weight", &weight});
  if (bias.defined()) out.push_back({prefix + "bias", &bias});
}

template <class T>
GroupNorm<T>::GroupNorm(std::size_t channels, std::size_t groups) : groups_(groups) {
  if (groups == 0 || channels % groups != 0)
    throw ShapeError("GroupNorm: " + std::to_string(channels) + " channels cannot be split into " +
                     std::to_string(groups) + " groups");
  gamma = Tensor<T>::full({channels}, T(1), true);
  beta = Tensor<T>::zeros({channels}, true);
}

template <class T>
void GroupNorm<T>::collect(const std::string& prefix, ParamList<T>& out) {
  out.push_back({prefix + "gamma", &gamma});
  out.push_back({prefix + "beta", &beta});
}

template <class T>
Linear<T>::Linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = Tensor<T>::uniform({in, out}, rng, -bound, bound, true);
  bias = Tensor<T>::uniform({out}, rng, -bound, bound, true);
}

template <class T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  const std::size_t in = weight.dim(0);
  if (x.ndim() == 0 || x.shape().back() != in)
    throw ShapeError("Linear: input " + to_string(x.shape()) + " does not end in " + std::to_string(in));
  Shape out_shape = x.shape();
  out_shape.back() = weight.dim(1);
  auto flat = reshape(x, Shape{x.numel() / in, in});
  return reshape(add(matmul(flat, weight), bias), std::move(out_shape));
}

template <class T>
void Linear<T>::collect(const std::string& prefix, ParamList<T>& out) {
  out.push_back({prefix + "weight", &weight});
  out.push_back({prefix + "bias", &bias});
}

template <class T>
ResBlock<T>::ResBlock(std::size_t in, std::size_t out, std::size_t groups, Activation act, Rng& rng)
    : conv1(in, out, 3, 1, 1, rng),
      norm1(out, groups),
      conv2(out, out, 3, 1, 1, rng),
      act_(act),
      has_shortcut_(in != out) {
  if (has_shortcut_) shortcut = Conv2d<T>(in, out, 1, 1, 0, rng);
}

template <class T>
Tensor<T> ResBlock<T>::forward(const Tensor<T>& x) const {
  if (x.ndim() != 4 || x.dim(1) != in_channels())
    throw ShapeError("ResBlock: expected " + std::to_string(in_channels()) +
                     " input channels, got shape " + to_string(x.shape()));
  auto h = conv1.forward(x);
  h = activate(norm1.forward(h), act_);
  h = conv2.forward(h);
  return add(has_shortcut_ ? shortcut.forward(x) : x, h);
}

template <class T>
void ResBlock<T>::collect(const std::string& prefix, ParamList<T>& out) {
  conv1.collect(prefix + "conv1.", out);
  norm1.collect(prefix + "norm1.", out);
  conv2.collect(prefix + "conv2.", out);
  if (has_shortcut_) shortcut.collect(prefix + "shortcut.", out);
}

template <class T>
Tensor<T> Downsample<T>::forward(const Tensor<T>& x) const {
  if (x.ndim() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
    throw ShapeError("Downsample: spatial extents must be even, got " + to_string(x.shape()));
  return conv.forward(x);
}

// ---------------------------------------------------------------------------

namespace {
void check_stack(const StackConfig& cfg) {
  if (cfg.channel_mult.empty()) throw ValueError("encoder/decoder needs at least one block");
  if (cfg.res_blocks == 0) throw ValueError("encoder/decoder needs at least one ResBlock per block");
  if (cfg.latent_dim == 0 || cfg.base_channels == 0) throw ValueError("channel counts must be positive");
}
}  // namespace

template <class T>
Encoder<T>::Encoder(const StackConfig& cfg, Rng& rng) : cfg_(cfg) {
  check_stack(cfg);
  conv_in_ = Conv2d<T>(cfg.in_channels, cfg.base_channels, 3, 1, 1, rng);
  std::size_t ch = cfg.base_channels;
  for (std::size_t b = 0; b < cfg.num_blocks(); ++b) {
    Block blk;
    const std::size_t out = cfg.base_channels * cfg.channel_mult[b];
    for (std::size_t r = 0; r < cfg.res_blocks; ++r) {
      blk.res.emplace_back(ch, out, cfg.groups, cfg.activation, rng);
      ch = out;
    }
    blk.down = Downsample<T>(ch, rng);
    blocks_.push_back(std::move(blk));
  }
  norm_out_ = GroupNorm<T>(ch, cfg.groups);
  conv_out_ = Conv2d<T>(ch, cfg.latent_dim, 1, 1, 0, rng);
}

template <class T>
std::vector<Tensor<T>> Encoder<T>::forward_taps(const Tensor<T>& x) const {
  if (x.ndim() != 4 || x.dim(1) != cfg_.in_channels)
    throw ShapeError("Encoder: expected B x " + std::to_string(cfg_.in_channels) +
                     " x H x W input, got " + to_string(x.shape()));
  const std::size_t f = cfg_.downscale();
  if (x.dim(2) % f != 0 || x.dim(3) % f != 0)
    throw ShapeError("Encoder: spatial extents of " + to_string(x.shape()) + " must be multiples of " +
                     std::to_string(f));
  std::vector<Tensor<T>> taps;
  auto h = conv_in_.forward(x);
  for (const auto& blk : blocks_) {
    for (const auto& r : blk.res) h = r.forward(h);
    h = blk.down.forward(h);
    taps.push_back(h);
  }
  h = activate(norm_out_.forward(h), cfg_.activation);
  taps.push_back(conv_out_.forward(h));
  return taps;
}

template <class T>
Tensor<T> Encoder<T>::forward(const Tensor<T>& x) const {
  return forward_taps(x).back();
}

template <class T>
void Encoder<T>::collect(const std::string& prefix, ParamList<T>& out) {
  conv_in_.collect(prefix + "conv_in.", out);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string p = prefix + "block" + std::to_string(b) + ".";
    for (std::size_t r = 0; r < blocks_[b].res.size(); ++r)
      blocks_[b].res[r].collect(p + "res" + std::to_string(r) + ".", out);
    blocks_[b].down.collect(p + "down.", out);
  }
  norm_out_.collect(prefix + "norm_out.", out);
  conv_out_.collect(prefix + "conv_out.", out);
}

template <class T>
Decoder<T>::Decoder(const StackConfig& cfg, Rng& rng) : cfg_(cfg) {
  check_stack(cfg);
  std::size_t ch = cfg.base_channels * cfg.channel_mult.back();
  conv_in_ = Conv2d<T>(cfg.latent_dim, ch, 3, 1, 1, rng);
  for (std::size_t i = cfg.num_blocks(); i-- > 0;) {
    Block blk;
    const std::size_t out = cfg.base_channels * cfg.channel_mult[i];
    for (std::size_t r = 0; r < cfg.res_blocks; ++r) {
      blk.res.emplace_back(ch, out, cfg.groups, cfg.activation, rng);
      ch = out;
    }
    blk.up = Upsample<T>(ch, rng);
    blocks_.push_back(std::move(blk));
  }
  norm_out_ = GroupNorm<T>(ch, cfg.groups);
  conv_out_ = Conv2d<T>(ch, cfg.in_channels, 3, 1, 1, rng);
}

template <class T>
Tensor<T> Decoder<T>::forward(const Tensor<T>& z) const {
  if (z.ndim() != 4 || z.dim(1) != cfg_.latent_dim)
    throw ShapeError("Decoder: expected B x " + std::to_string(cfg_.latent_dim) +
                     " x h x w latent, got " + to_string(z.shape()));
  auto h = conv_in_.forward(z);
  for (const auto& blk : blocks_) {
    for (const auto& r : blk.res) h = r.forward(h);
    h = blk.up.forward(h);
  }
  h = activate(norm_out_.forward(h), cfg_.activation);
  return tanh(conv_out_.forward(h));
}

template <class T>
void Decoder<T>::collect(const std::string& prefix, ParamList<T>& out) {
  conv_in_.collect(prefix + "conv_in.", out);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string p = prefix + "block" + std::to_string(b) + ".";
    for (std::size_t r = 0; r < blocks_[b].res.size(); ++r)
      blocks_[b].res[r].collect(p + "res" + std::to_string(r) + ".", out);
    blocks_[b].up.collect(p + "up.", out);
  }
  norm_out_.collect(prefix + "norm_out.", out);
  conv_out_.collect(prefix + "conv_out.", out);
}

// ---------------------------------------------------------------------------

template <class T>
PatchDiscriminator<T>::PatchDiscriminator(DiscriminatorKind kind, std::size_t in_channels,
                                          std::size_t channels, Rng& rng)
    : kind_(kind) {
  if (kind == DiscriminatorKind::image) {
    layers_.emplace_back(in_channels, channels, 4, 2, 1, rng);
    layers_.emplace_back(channels, 2 * channels, 4, 2, 1, rng);
    layers_.emplace_back(2 * channels, 1, 3, 1, 1, rng);
  } else {
    layers_.emplace_back(in_channels, channels, 1, 1, 0, rng);
    layers_.emplace_back(channels, 1, 3, 1, 1, rng);
  }
}

template <class T>
Tensor<T> PatchDiscriminator<T>::forward(const Tensor<T>& x) const {
  if (x.ndim() != 4 || x.dim(1) != in_channels())
    throw ShapeError("PatchDiscriminator: expected " + std::to_string(in_channels()) +
                     " input channels, got shape " + to_string(x.shape()));
  auto h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h);
    if (i + 1 < layers_.size()) h = leaky_relu(h, T(0.2));
  }
  return h;
}

template <class T>
void PatchDiscriminator<T>::collect(const std::string& prefix, ParamList<T>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].collect(prefix + "layer" + std::to_string(i) + ".", out);
}

#define QUANTART_INSTANTIATE_NN(T)                        \
  template Tensor<T> activate(const Tensor<T>&, Activation); \
  template void zero_parameters(ParamList<T>);            \
  template class Conv2d<T>;                               \
  template class GroupNorm<T>;                            \
  template class Linear<T>;                               \
  template class ResBlock<T>;                             \
  template class Downsample<T>;                           \
  template class Upsample<T>;                             \
  template class Encoder<T>;                              \
  template class Decoder<T>;                              \
  template class PatchDiscriminator<T>;

QUANTART_INSTANTIATE_NN(float)
QUANTART_INSTANTIATE_NN(double)

}  // namespace quantart::nn

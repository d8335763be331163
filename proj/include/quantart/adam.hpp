#pragma once
// Bias-corrected Adam.

#include <vector>

#include "quantart/nn.hpp"

namespace quantart {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::size_t t = 0;
};

// One update of p in place. Empty state is initialized to zeros.
template <class T>
void adam_step(std::vector<T>& p, const std::vector<T>& g, AdamState<T>& state, const AdamHyper& h);

// Adam over a fixed, ordered parameter list.
template <class T>
class Adam {
 public:
  Adam(nn::ParamList<T> params, AdamHyper hyper);
  void step(const Gradients<T>& grads);
  const nn::ParamList<T>& params() const { return params_; }
  const AdamHyper& hyper() const { return hyper_; }

 private:
  nn::ParamList<T> params_;
  AdamHyper hyper_;
  std::vector<AdamState<T>> state_;
};

}  // namespace quantart

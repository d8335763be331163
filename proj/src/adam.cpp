#include "quantart/adam.hpp"

#include <cmath>

namespace quantart {

template <class T>
void adam_step(std::vector<T>& p, const std::vector<T>& g, AdamState<T>& s, const AdamHyper& h) {
  if (g.size() != p.size())
    throw ShapeError("adam_step: " + std::to_string(p.size()) + " parameters but " + std::to_string(g.size()) +
                     " gradients");
  if (s.m.empty() && s.v.empty()) {
    s.m.assign(p.size(), T(0));
    s.v.assign(p.size(), T(0));
  }
  if (s.m.size() != p.size() || s.v.size() != p.size()) throw ShapeError("adam_step: state does not match parameters");
  ++s.t;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(s.t));
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  for (std::size_t i = 0; i < p.size(); ++i) {
    s.m[i] = b1 * s.m[i] + (T(1) - b1) * g[i];
    s.v[i] = b2 * s.v[i] + (T(1) - b2) * g[i] * g[i];
    const double mhat = static_cast<double>(s.m[i]) / c1;
    const double vhat = static_cast<double>(s.v[i]) / c2;
    p[i] = static_cast<T>(static_cast<double>(p[i]) - h.lr * mhat / (std::sqrt(vhat) + h.eps));
  }
}

template <class T>
Adam<T>::Adam(nn::ParamList<T> params, AdamHyper hyper)
    : params_(std::move(params)), hyper_(hyper), state_(params_.size()) {}

template <class T>
void Adam<T>::step(const Gradients<T>& grads) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& t = *params_[i].tensor;
    std::vector<T> p = t.values();
    adam_step(p, grads.of(t), state_[i], hyper_);
    t.assign(std::move(p));
  }
}

#define QUANTART_INSTANTIATE_ADAM(T)                                                           \
  template void adam_step(std::vector<T>&, const std::vector<T>&, AdamState<T>&, const AdamHyper&); \
  template class Adam<T>;

QUANTART_INSTANTIATE_ADAM(float)
QUANTART_INSTANTIATE_ADAM(double)

}  // namespace quantart

#include "stc/adam.hpp"

#include <cmath>

namespace stc {

AdamState AdamState::init_like(const std::vector<Tensor>& params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Tensor& p : params) {
    s.m.push_back(Tensor::zeros(p.dims(), p.dtype()));
    s.v.push_back(Tensor::zeros(p.dims(), p.dtype()));
  }
  return s;
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: parameter/gradient/state count mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    if (!p.same_shape(g) || !p.same_shape(state.m[i]))
      throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i));
    dispatch(p.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto pd = p.data<T>();
      auto gd = g.data<T>();
      auto md = state.m[i].data<T>();
      auto vd = state.v[i].data<T>();
      const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
      const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
      const T ibc1 = static_cast<T>(1.0 / bc1), ibc2 = static_cast<T>(1.0 / bc2);
      for (int64_t j = 0; j < p.size(); ++j) {
        md[j] = b1 * md[j] + (T(1) - b1) * gd[j];
        vd[j] = b2 * vd[j] + (T(1) - b2) * gd[j] * gd[j];
        const T mhat = md[j] * ibc1;
        const T vhat = vd[j] * ibc2;
        pd[j] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    });
  }
}

}  // namespace stc

#pragma once

#include <vector>

#include "stc/tensor.hpp"

namespace stc {

struct AdamConfig {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  int64_t step = 0;

  static AdamState init_like(const std::vector<Tensor>& params);
};

// Standard Adam update with bias correction; params and state mutated in place.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, const AdamConfig& cfg);

}  // namespace stc

#pragma once

#include <utility>

#include "stc/geometry.hpp"
#include "stc/ops.hpp"
#include "stc/tensor.hpp"

namespace stc {

enum class WarpMode { forward_splat, inverse_sample };

// Compiled warp: a channel-shared linear map over pixels plus the validity
// mask. Built once per frame pair (geometry is constant under the gradient).
struct WarpPlan {
  PixelMap map;
  Tensor validity;            // H x W f32 in {0,1}
  int valid_src_count = 0;    // forward_splat: source pixels whose full splat lands in-frame
  double pre_norm_mass = 0.0; // forward_splat: total splatted weight before normalization
};

// depth is d_t for forward_splat (source frame), d_{t+1} for inverse_sample
// (target frame, motion = M_{t+1,t}).
WarpPlan make_warp_plan(const DepthMap& depth, const Se3Motion& motion, const Intrinsics& k,
                        WarpMode mode);

// src is H x W x C logits; returns warped logits (zero where invalid) and the
// validity mask in src's dtype.
std::pair<Tensor, Tensor> warp_logits(const Tensor& src, const DepthMap& depth,
                                      const Se3Motion& motion, const Intrinsics& k,
                                      WarpMode mode);

}  // namespace stc

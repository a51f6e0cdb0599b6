#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "stc/tensor.hpp"

namespace stc {

// Pure forward operations (the tape wraps the same kernels for training).

// input HxWxCin, kernel KHxKWxCinxCout (odd KH/KW), bias Cout.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

Tensor relu(const Tensor& t);

// logits HxWxC, C >= 2; per-pixel channel softmax with max subtraction.
Tensor softmax_channels(const Tensor& logits);

// Channel-shared sparse linear operator between pixel grids:
// out[dst[i], c] += w[i] * in[src[i], c]. The geometric warp compiles to one
// of these, which keeps its gradient exact (the transpose map).
struct PixelMap {
  int src_h = 0, src_w = 0;
  int dst_h = 0, dst_w = 0;
  std::vector<int32_t> dst;
  std::vector<int32_t> src;
  std::vector<double> w;

  size_t nnz() const { return w.size(); }
  void add(int32_t d, int32_t s, double weight) {
    dst.push_back(d);
    src.push_back(s);
    w.push_back(weight);
  }
};

Tensor apply_pixel_map(const PixelMap& m, const Tensor& src);
Tensor apply_pixel_map_transpose(const PixelMap& m, const Tensor& dst_grad);

void check_conv_shapes(const Tensor& input, const Tensor& kernel, const Tensor& bias);

}  // namespace stc

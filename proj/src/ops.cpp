#include "stc/ops.hpp"

#include "stc/kernels.hpp"

namespace stc {

void check_conv_shapes(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  if (input.rank() != 3) throw ShapeError("conv2d: input must be HxWxCin, got " + input.shape_str());
  if (kernel.rank() != 4)
    throw ShapeError("conv2d: kernel must be KHxKWxCinxCout, got " + kernel.shape_str());
  if (bias.rank() != 1) throw ShapeError("conv2d: bias must be rank 1");
  if (kernel.dim(0) % 2 == 0 || kernel.dim(1) % 2 == 0)
    throw ContractError("conv2d: kernel extents must be odd");
  if (kernel.dim(2) != input.dim(2))
    throw ShapeError("conv2d: kernel cin " + std::to_string(kernel.dim(2)) +
                     " does not match input channels " + std::to_string(input.dim(2)));
  if (bias.dim(0) != kernel.dim(3)) throw ShapeError("conv2d: bias length does not match cout");
  if (input.dtype() != kernel.dtype() || input.dtype() != bias.dtype())
    throw ShapeError("conv2d: mixed dtypes");
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  check_conv_shapes(input, kernel, bias);
  const int h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const int kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
  Tensor out = Tensor::zeros({h, w, cout}, input.dtype());
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::conv2d_forward(input.data<T>().data(), h, w, cin, kernel.data<T>().data(), kh,
                            kw, cout, bias.data<T>().data(), out.data<T>().data());
  });
  STC_DEBUG_FINITE(out, "conv2d");
  return out;
}

Tensor relu(const Tensor& t) {
  Tensor out = Tensor::zeros(t.dims(), t.dtype());
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::relu_forward(t.data<T>().data(), out.data<T>().data(), t.size());
  });
  return out;
}

Tensor softmax_channels(const Tensor& logits) {
  if (logits.rank() != 3) throw ShapeError("softmax_channels: need HxWxC");
  if (logits.dim(2) < 2) throw ContractError("softmax_channels: C must be >= 2");
  Tensor out = Tensor::zeros(logits.dims(), logits.dtype());
  dispatch(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::softmax_channels_forward(logits.data<T>().data(), logits.dim(0), logits.dim(1),
                                      logits.dim(2), out.data<T>().data());
  });
  STC_DEBUG_FINITE(out, "softmax_channels");
  return out;
}

Tensor apply_pixel_map(const PixelMap& m, const Tensor& src) {
  if (src.rank() != 3 || src.dim(0) != m.src_h || src.dim(1) != m.src_w)
    throw ShapeError("pixel map: src grid mismatch");
  const int c = src.dim(2);
  Tensor out = Tensor::zeros({m.dst_h, m.dst_w, c}, src.dtype());
  dispatch(src.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* sp = src.data<T>().data();
    T* op = out.data<T>().data();
    for (size_t i = 0; i < m.nnz(); ++i) {
      const T wt = static_cast<T>(m.w[i]);
      const T* s = sp + static_cast<long>(m.src[i]) * c;
      T* o = op + static_cast<long>(m.dst[i]) * c;
      for (int ch = 0; ch < c; ++ch) o[ch] += wt * s[ch];
    }
  });
  return out;
}

Tensor apply_pixel_map_transpose(const PixelMap& m, const Tensor& dst_grad) {
  if (dst_grad.rank() != 3 || dst_grad.dim(0) != m.dst_h || dst_grad.dim(1) != m.dst_w)
    throw ShapeError("pixel map transpose: dst grid mismatch");
  const int c = dst_grad.dim(2);
  Tensor out = Tensor::zeros({m.src_h, m.src_w, c}, dst_grad.dtype());
  dispatch(dst_grad.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* gp = dst_grad.data<T>().data();
    T* op = out.data<T>().data();
    for (size_t i = 0; i < m.nnz(); ++i) {
      const T wt = static_cast<T>(m.w[i]);
      const T* g = gp + static_cast<long>(m.dst[i]) * c;
      T* o = op + static_cast<long>(m.src[i]) * c;
      for (int ch = 0; ch < c; ++ch) o[ch] += wt * g[ch];
    }
  });
  return out;
}

}  // namespace stc

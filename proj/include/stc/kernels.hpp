#pragma once

// Raw numeric kernels on channels-last buffers. Shape checking lives in the
// callers (ops.cpp / tape.cpp); these assume consistent extents.

namespace stc::kernels {

// in: HxWxCin, k: KHxKWxCinxCout, bias: Cout (may be null), out: HxWxCout.
// Zero padding (kh-1)/2 x (kw-1)/2, stride 1, odd kernels only.
template <typename T>
void conv2d_forward(const T* in, int h, int w, int cin, const T* k, int kh, int kw,
                    int cout, const T* bias, T* out);

// Accumulates into din (caller zeroes or reuses an accumulator).
template <typename T>
void conv2d_backward_input(const T* dout, int h, int w, int cout, const T* k, int kh,
                           int kw, int cin, T* din);

// Accumulates into dk (KHxKWxCinxCout) and dbias (Cout, may be null).
template <typename T>
void conv2d_backward_kernel(const T* in, const T* dout, int h, int w, int cin, int kh,
                            int kw, int cout, T* dk, T* dbias);

template <typename T>
void relu_forward(const T* in, T* out, long n);

// din += dout * (in > 0); subgradient at 0 is 0.
template <typename T>
void relu_backward(const T* in, const T* dout, T* din, long n);

// Per-pixel softmax over the trailing channel axis, max-subtracted.
template <typename T>
void softmax_channels_forward(const T* in, int h, int w, int c, T* out);

// dx += s .* (g - sum_c(g .* s)) per pixel, where s is the forward output.
template <typename T>
void softmax_channels_backward(const T* s, const T* g, int h, int w, int c, T* dx);

}  // namespace stc::kernels

#pragma once

#include "stc/tape.hpp"
#include "stc/tensor.hpp"

namespace stc {

// Integer class ids in [0, C), stored H x W.
struct SegMask {
  std::vector<int32_t> ids;
  int h = 0, w = 0;

  int32_t at(int y, int x) const { return ids[static_cast<size_t>(y) * w + x]; }
  size_t size() const { return ids.size(); }
};

SegMask argmax_channels(const Tensor& logits);

// --- weighting functions W(x, c); all return H x W x C maps normalized to
// sum 1 over valid entries (identically zero when nothing is valid). They are
// constants under the gradient.

Tensor weight_uniform(int h, int w, int c, const Tensor& validity);
// logits = predicted L_{t+1}; one-hot at per-pixel argmax (ties -> lowest id).
Tensor weight_label_prior(const Tensor& logits, const Tensor& validity);
// Sobel magnitude on the grayscale mean, threshold 0.1 * max, dilated 1 px.
Tensor edge_map(const Tensor& image);
// Edge map broadcast across c channels; all-zero edge map falls back to uniform.
Tensor weight_pixel_prior(const Tensor& image_t1, int c, const Tensor& validity);

// --- differentiable losses (scalar tape nodes) ---

// sum_{x,c} W(x,c) |warped - predicted|; W constant, grads into both logits.
NodeId consistency_l1(Tape& t, NodeId warped, NodeId predicted, Tensor weights);

// 0.2 * uniform + 0.4 * label-prior + 0.4 * pixel-prior mix of Eq. 1.
struct ConsistencyMix {
  double uniform = 0.2;
  double label_prior = 0.4;
  double pixel_prior = 0.4;
};
NodeId combined_consistency(Tape& t, NodeId warped, NodeId predicted, const Tensor& image_t1,
                            const Tensor& validity, const ConsistencyMix& mix = {});

// Mean over valid pixels of -log softmax(logits)[target]; grads into logits only.
// Returns a scalar 0 node when no pixel is valid.
NodeId masked_ce(Tape& t, NodeId logits, const SegMask& targets, const Tensor& validity);

// CE against argmax pseudo-labels of the target-frame prediction (constant).
inline NodeId pseudo_label_ce(Tape& t, NodeId warped, const SegMask& pseudo,
                              const Tensor& validity) {
  return masked_ce(t, warped, pseudo, validity);
}
// Supervised CE against ground truth on labeled pixels.
inline NodeId supervised_ce(Tape& t, NodeId logits, const SegMask& labels,
                            const Tensor& label_validity) {
  return masked_ce(t, logits, labels, label_validity);
}

}  // namespace stc

#pragma once

#include <vector>

#include "stc/losses.hpp"
#include "stc/tape.hpp"
#include "stc/tensor.hpp"

namespace stc {

struct LayerSpec {
  int ksize = 3;
  int cin = 0;
  int cout = 0;
  bool relu = true;
};

struct ArchDescriptor {
  std::vector<LayerSpec> layers;
  int classes() const { return layers.empty() ? 0 : layers.back().cout; }
  int64_t param_count() const;
  void validate() const;  // chained shapes, odd kernels, C >= 2

  // conv3x3(3->16) ReLU, conv3x3(16->32) ReLU, conv3x3(32->32) ReLU, conv1x1(32->C).
  static ArchDescriptor reference(int classes);
};

struct SegmenterParams {
  ArchDescriptor arch;
  std::vector<Tensor> kernels;  // ksize x ksize x cin x cout
  std::vector<Tensor> biases;   // cout
};

// He-scaled kernels (sd = sqrt(2 / fan_in)), zero biases; deterministic per seed.
SegmenterParams init_params(const ArchDescriptor& arch, uint64_t seed, Dtype dt = Dtype::F32);

// Pure forward (evaluation); image is H x W x 3 in [0,1].
Tensor segmenter_forward(const Tensor& image, const SegmenterParams& params);

// Tape forward reusing already-pushed parameter leaves, so several frames in
// one step share the same trainable nodes.
struct ParamNodes {
  std::vector<NodeId> kernels;
  std::vector<NodeId> biases;
};
ParamNodes push_params(Tape& t, const SegmenterParams& params, bool trainable = true);
NodeId segmenter_forward(Tape& t, NodeId image, const ArchDescriptor& arch,
                         const ParamNodes& nodes);

inline SegMask predict(const Tensor& logits) { return argmax_channels(logits); }

}  // namespace stc

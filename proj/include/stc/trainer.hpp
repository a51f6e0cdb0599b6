#pragma once

#include <cstdint>
#include <vector>

#include "stc/checkpoint.hpp"
#include "stc/config.hpp"
#include "stc/dataset.hpp"
#include "stc/metrics.hpp"

namespace stc {

struct LabelSplit {
  std::vector<uint8_t> labeled;  // one flag per training-pool frame
  double fraction = 0.0;
  uint64_t seed = 0;

  int count() const;
};

// Uniform selection without replacement; count = max(1, round(fraction * n)).
LabelSplit split_labels(int total_frames, double fraction, uint64_t seed);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> loss_curve;  // total loss per step
};

// Frame pool shared by both phases: training scenes flattened scene-major.
// Consistency pairs are adjacent (t, t+1) with both frames unlabeled; when a
// split labels everything the pool falls back to all adjacent pairs so the
// phase still runs.
struct TrainPool {
  const Dataset* data = nullptr;
  int train_scene_end = 0;               // scenes [0, end) are trainable
  std::vector<std::pair<int, int>> frames;  // (scene, frame)
  std::vector<int> labeled;                 // indices into frames
  std::vector<std::pair<int, int>> pairs;   // (scene, frame t)

  static TrainPool build(const Dataset& data, const LabelSplit& split, double eval_fraction);
};

TrainResult train_baseline(const Dataset& data, const LabelSplit& split, const TrainConfig& cfg,
                           uint64_t seed);

TrainResult train_with_consistency(const Dataset& data, const LabelSplit& split,
                                   const Checkpoint& baseline, const TrainConfig& cfg,
                                   uint64_t seed);

// MIOU of a parameter set over the held-out scenes (or the training scenes
// when eval_split is false).
IouReport evaluate(const Dataset& data, const SegmenterParams& params, double eval_fraction,
                   bool eval_split = true);

// Class pixel shares in the labeled training frames (Fig. 2 x-axis).
std::vector<double> labeled_class_frequency(const Dataset& data, const LabelSplit& split,
                                            double eval_fraction);

}  // namespace stc

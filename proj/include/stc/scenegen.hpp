#pragma once

#include <array>
#include <vector>

#include "stc/geometry.hpp"
#include "stc/losses.hpp"
#include "stc/tensor.hpp"

namespace stc {

// Dataset-level generation parameters. One config covers scene layout,
// rendering, and trajectory so a dataset is reproducible from (config, seed).
struct SceneConfig {
  double room_w = 4.2, room_d = 4.2, room_h = 2.6;  // extents in meters
  double extent_jitter = 0.12;                      // relative per-scene size jitter
  int min_objects = 6, max_objects = 10;
  int classes = 10;  // 0 wall, 1 floor, 2 ceiling, 3.. objects
  int image_size = 48;
  int frames_per_scene = 48;
  int scenes = 24;
  double focal_factor = 0.75;   // fx = fy = focal_factor * image_size
  double texture_noise = 0.55;  // value-noise amplitude on albedo
  double texture_freq = 2.2;    // noise cells per meter
  double rarity_decay = 0.55;   // successive object-class size ratio
  uint64_t palette_seed = 7;    // class colors shared across scenes
  // Trajectory: low-pass random walk with hard per-step motion ceilings.
  double max_step_rot = 0.1, max_step_trans = 0.2;
  double walk_trans_sigma = 0.12, walk_rot_sigma = 0.08, walk_smooth = 0.8;

  void validate() const;
  Intrinsics intrinsics() const;
  int object_classes() const { return classes - 3; }
};

struct SceneBox {
  Eigen::Vector3d lo, hi;
  int cls = 0;
};

struct SceneDescriptor {
  double rw = 0, rh = 0, rd = 0;  // x in [0,rw], y in [0,rh] (up), z in [0,rd]
  std::vector<SceneBox> boxes;
  std::vector<std::array<double, 3>> palette;  // base rgb per class
  uint64_t seed = 0;
};

struct Frame {
  Tensor rgb;  // H x W x 3 f32 in [0,1]
  DepthMap depth;
  SegMask seg;
  Se3Motion pose;  // camera-to-world
  Intrinsics intrinsics;
  int index = 0;
};

struct Sequence {
  SceneDescriptor scene;
  std::vector<Frame> frames;
  uint64_t seed = 0;
};

SceneDescriptor generate_scene(const SceneConfig& cfg, uint64_t seed);

std::vector<Se3Motion> generate_trajectory(const SceneConfig& cfg, const SceneDescriptor& scene,
                                           uint64_t seed);

Frame raycast_frame(const SceneDescriptor& scene, const Se3Motion& pose, const Intrinsics& k,
                    int size, int index = 0, double texture_noise = 0.35,
                    double texture_freq = 2.2);

Sequence generate_sequence(const SceneConfig& cfg, uint64_t seed);

// Pixel share per class over a set of frames; sums to 1.
std::vector<double> class_census(const std::vector<Sequence>& seqs, int classes);

}  // namespace stc

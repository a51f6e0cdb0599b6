#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stc/config.hpp"
#include "stc/scenegen.hpp"

namespace stc {

struct Dataset {
  SceneConfig cfg;
  uint64_t seed = 0;
  std::vector<Sequence> seqs;

  int frames_total() const;
  // Held-out evaluation scenes are the trailing ceil-rounded share.
  int eval_scene_start(double eval_fraction) const;
};

// Renders cfg.scenes sequences with per-scene seeds derived from seed.
Dataset generate_dataset(const SceneConfig& cfg, uint64_t seed);

// Layout: dir/manifest.json + dir/scene_###/{rgb,depth,seg}_####.stct.
// seg is stored as f32 class ids. Writing is deterministic byte-for-byte.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace stc

#pragma once

#include <filesystem>

#include "stc/adam.hpp"
#include "stc/segmenter.hpp"

namespace stc {

// Parameters plus optimizer state; the flat tensor order is
// [kernel0, bias0, kernel1, bias1, ...] and adam.m/v follow it.
struct Checkpoint {
  SegmenterParams params;
  AdamState adam;  // empty m/v when the optimizer has not run
  int64_t step = 0;
  int phase = 1;
  uint64_t config_hash = 0;
};

std::vector<Tensor> flatten_params(const SegmenterParams& p);
void unflatten_params(const std::vector<Tensor>& flat, SegmenterParams& p);

// Directory layout: checkpoint.json + one STCT file per tensor, each
// checksummed in the manifest. save(load(dir)) is byte-identical.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace stc

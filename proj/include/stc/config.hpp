#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "stc/losses.hpp"
#include "stc/scenegen.hpp"
#include "stc/warp.hpp"

namespace stc {

// Table 2 rows: baseline (phase 1 only) plus six consistency variants.
enum class LossVariant { baseline, uniform, label_prior, pixel_prior, combined, ce, combined_ce };

const char* loss_variant_name(LossVariant v);
LossVariant parse_loss_variant(const std::string& s);
bool variant_uses_l1(LossVariant v);
bool variant_uses_ce(LossVariant v);

struct TrainConfig {
  int phase1_steps = 1600;
  int phase2_steps = 2400;
  int labeled_per_step = 2;
  int pairs_per_step = 2;
  double lr = 2e-3;
  // Within each phase the rate decays linearly to lr * lr_final_factor;
  // 1.0 keeps it constant, which trains the slower-converging weighted
  // variants further within a fixed step budget.
  double lr_final_factor = 1.0;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  double lambda_consistency = 1.0;
  std::string warp_mode = "forward_splat";
  std::string loss_variant = "combined";
  double mix_uniform = 0.2, mix_label = 0.4, mix_pixel = 0.4;
  double sigma_rot = 0.0, sigma_trans = 0.0, sigma_depth = 0.0;
  double eval_fraction = 0.2;  // share of scenes held out for evaluation

  void validate() const;
  LossVariant variant() const { return parse_loss_variant(loss_variant); }
  WarpMode warp() const;
  ConsistencyMix mix() const { return {mix_uniform, mix_label, mix_pixel}; }
};

struct ExperimentConfig {
  SceneConfig scene;
  TrainConfig train;
  std::vector<double> fractions = {0.005, 0.01, 0.02, 0.04, 0.08};
  std::vector<uint64_t> seeds = {1, 2, 3};
  uint64_t data_seed = 42;

  void validate() const;
};

void to_json(nlohmann::json& j, const SceneConfig& c);
void from_json(const nlohmann::json& j, SceneConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

// Reads a JSON config; absent keys keep their defaults. Empty path -> defaults.
ExperimentConfig load_config(const std::string& path);

// "a.b.c=value" overrides on the JSON form (value parsed as JSON when possible,
// else taken as a string).
void apply_override(nlohmann::json& j, const std::string& assignment);

// FNV-1a of the canonical (sorted-key) dump; detects mismatched resumes.
uint64_t config_hash(const nlohmann::json& j);

}  // namespace stc

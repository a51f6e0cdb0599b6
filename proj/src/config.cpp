#include "stc/config.hpp"

#include <fstream>

#include "stc/errors.hpp"
#include "stc/warp.hpp"

namespace stc {

namespace {

// Assigns only when the key is present, so partial configs inherit defaults.
template <typename T>
void get_if_present(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

const char* loss_variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::baseline: return "baseline";
    case LossVariant::uniform: return "uniform";
    case LossVariant::label_prior: return "label_prior";
    case LossVariant::pixel_prior: return "pixel_prior";
    case LossVariant::combined: return "combined";
    case LossVariant::ce: return "ce";
    case LossVariant::combined_ce: return "combined_ce";
  }
  return "?";
}

LossVariant parse_loss_variant(const std::string& s) {
  for (LossVariant v : {LossVariant::baseline, LossVariant::uniform, LossVariant::label_prior,
                        LossVariant::pixel_prior, LossVariant::combined, LossVariant::ce,
                        LossVariant::combined_ce})
    if (s == loss_variant_name(v)) return v;
  throw ConfigError("unknown loss variant '" + s + "'");
}

bool variant_uses_l1(LossVariant v) {
  return v == LossVariant::uniform || v == LossVariant::label_prior ||
         v == LossVariant::pixel_prior || v == LossVariant::combined ||
         v == LossVariant::combined_ce;
}

bool variant_uses_ce(LossVariant v) {
  return v == LossVariant::ce || v == LossVariant::combined_ce;
}

WarpMode TrainConfig::warp() const {
  if (warp_mode == "forward_splat") return WarpMode::forward_splat;
  if (warp_mode == "inverse_sample") return WarpMode::inverse_sample;
  throw ConfigError("unknown warp mode '" + warp_mode + "'");
}

void TrainConfig::validate() const {
  if (phase1_steps < 0 || phase2_steps < 0) throw ConfigError("step counts must be >= 0");
  if (labeled_per_step < 0 || pairs_per_step < 0) throw ConfigError("batch sizes must be >= 0");
  if (lr <= 0) throw ConfigError("lr must be positive");
  if (lr_final_factor < 0 || lr_final_factor > 1)
    throw ConfigError("lr_final_factor must be in [0,1]");
  if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
    throw ConfigError("adam betas must be in [0,1)");
  if (lambda_consistency < 0) throw ConfigError("lambda must be >= 0");
  if (mix_uniform < 0 || mix_label < 0 || mix_pixel < 0) throw ConfigError("mix weights must be >= 0");
  if (sigma_rot < 0 || sigma_trans < 0 || sigma_depth < 0) throw ConfigError("sigmas must be >= 0");
  if (eval_fraction <= 0 || eval_fraction >= 1) throw ConfigError("eval_fraction must be in (0,1)");
  (void)variant();
  (void)warp();
}

void ExperimentConfig::validate() const {
  scene.validate();
  train.validate();
  if (fractions.empty()) throw ConfigError("need at least one supervision fraction");
  for (double f : fractions)
    if (f <= 0 || f > 1) throw ConfigError("fractions must lie in (0, 1]");
  if (seeds.empty()) throw ConfigError("need at least one seed");
}

void to_json(nlohmann::json& j, const SceneConfig& c) {
  j = nlohmann::json{{"room_w", c.room_w},
                     {"room_d", c.room_d},
                     {"room_h", c.room_h},
                     {"extent_jitter", c.extent_jitter},
                     {"min_objects", c.min_objects},
                     {"max_objects", c.max_objects},
                     {"classes", c.classes},
                     {"image_size", c.image_size},
                     {"frames_per_scene", c.frames_per_scene},
                     {"scenes", c.scenes},
                     {"focal_factor", c.focal_factor},
                     {"texture_noise", c.texture_noise},
                     {"texture_freq", c.texture_freq},
                     {"rarity_decay", c.rarity_decay},
                     {"palette_seed", c.palette_seed},
                     {"max_step_rot", c.max_step_rot},
                     {"max_step_trans", c.max_step_trans},
                     {"walk_trans_sigma", c.walk_trans_sigma},
                     {"walk_rot_sigma", c.walk_rot_sigma},
                     {"walk_smooth", c.walk_smooth}};
}

void from_json(const nlohmann::json& j, SceneConfig& c) {
  get_if_present(j, "room_w", c.room_w);
  get_if_present(j, "room_d", c.room_d);
  get_if_present(j, "room_h", c.room_h);
  get_if_present(j, "extent_jitter", c.extent_jitter);
  get_if_present(j, "min_objects", c.min_objects);
  get_if_present(j, "max_objects", c.max_objects);
  get_if_present(j, "classes", c.classes);
  get_if_present(j, "image_size", c.image_size);
  get_if_present(j, "frames_per_scene", c.frames_per_scene);
  get_if_present(j, "scenes", c.scenes);
  get_if_present(j, "focal_factor", c.focal_factor);
  get_if_present(j, "texture_noise", c.texture_noise);
  get_if_present(j, "texture_freq", c.texture_freq);
  get_if_present(j, "rarity_decay", c.rarity_decay);
  get_if_present(j, "palette_seed", c.palette_seed);
  get_if_present(j, "max_step_rot", c.max_step_rot);
  get_if_present(j, "max_step_trans", c.max_step_trans);
  get_if_present(j, "walk_trans_sigma", c.walk_trans_sigma);
  get_if_present(j, "walk_rot_sigma", c.walk_rot_sigma);
  get_if_present(j, "walk_smooth", c.walk_smooth);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"phase1_steps", c.phase1_steps},
                     {"phase2_steps", c.phase2_steps},
                     {"labeled_per_step", c.labeled_per_step},
                     {"pairs_per_step", c.pairs_per_step},
                     {"lr", c.lr},
                     {"lr_final_factor", c.lr_final_factor},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},
                     {"lambda_consistency", c.lambda_consistency},
                     {"warp_mode", c.warp_mode},
                     {"loss_variant", c.loss_variant},
                     {"mix_uniform", c.mix_uniform},
                     {"mix_label", c.mix_label},
                     {"mix_pixel", c.mix_pixel},
                     {"sigma_rot", c.sigma_rot},
                     {"sigma_trans", c.sigma_trans},
                     {"sigma_depth", c.sigma_depth},
                     {"eval_fraction", c.eval_fraction}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  get_if_present(j, "phase1_steps", c.phase1_steps);
  get_if_present(j, "phase2_steps", c.phase2_steps);
  get_if_present(j, "labeled_per_step", c.labeled_per_step);
  get_if_present(j, "pairs_per_step", c.pairs_per_step);
  get_if_present(j, "lr", c.lr);
  get_if_present(j, "lr_final_factor", c.lr_final_factor);
  get_if_present(j, "adam_beta1", c.adam_beta1);
  get_if_present(j, "adam_beta2", c.adam_beta2);
  get_if_present(j, "adam_eps", c.adam_eps);
  get_if_present(j, "lambda_consistency", c.lambda_consistency);
  get_if_present(j, "warp_mode", c.warp_mode);
  get_if_present(j, "loss_variant", c.loss_variant);
  get_if_present(j, "mix_uniform", c.mix_uniform);
  get_if_present(j, "mix_label", c.mix_label);
  get_if_present(j, "mix_pixel", c.mix_pixel);
  get_if_present(j, "sigma_rot", c.sigma_rot);
  get_if_present(j, "sigma_trans", c.sigma_trans);
  get_if_present(j, "sigma_depth", c.sigma_depth);
  get_if_present(j, "eval_fraction", c.eval_fraction);
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"scene", c.scene},
                     {"train", c.train},
                     {"fractions", c.fractions},
                     {"seeds", c.seeds},
                     {"data_seed", c.data_seed}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (auto it = j.find("scene"); it != j.end()) it->get_to(c.scene);
  if (auto it = j.find("train"); it != j.end()) it->get_to(c.train);
  get_if_present(j, "fractions", c.fractions);
  get_if_present(j, "seeds", c.seeds);
  get_if_present(j, "data_seed", c.data_seed);
}

ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in '" + path + "': " + e.what());
  }
  try {
    j.get_to(cfg);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config field error in '" + path + "': " + e.what());
  }
  return cfg;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key.path=value, got '" + assignment + "'");
  std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  for (char& ch : key)
    if (ch == '.') ch = '/';
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = value;  // bare strings stay strings
  }
  try {
    j[nlohmann::json::json_pointer("/" + key)] = parsed;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot apply override '" + assignment + "': " + e.what());
  }
}

uint64_t config_hash(const nlohmann::json& j) {
  const std::string s = j.dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace stc

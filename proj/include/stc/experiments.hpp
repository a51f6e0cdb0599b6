#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stc/config.hpp"
#include "stc/trainer.hpp"

namespace stc {

// One training run's outcome. wall_seconds is reported through the timing
// sidecar, never through report.json, so reruns stay byte-identical.
struct RunReport {
  std::string variant;
  double fraction = 0.0;
  uint64_t seed = 0;
  int phase = 1;
  double miou = 0.0;
  std::vector<double> per_class_iou;         // -1 for classes absent from the eval set
  std::vector<double> class_frequency;       // pixel share in the labeled training frames
  std::vector<double> loss_curve;
  double wall_seconds = 0.0;
};

struct FractionSummary {
  double fraction = 0.0;
  double baseline_mean = 0.0;
  double consist_mean = 0.0;
};

struct SweepCellReport {
  double fraction = 0.0;
  uint64_t seed = 0;
  RunReport baseline;
  RunReport consist;
};

struct SweepResult {
  std::vector<SweepCellReport> cells;    // fraction-major, seed-minor
  std::vector<FractionSummary> summary;  // mean over seeds per fraction
  // Largest baseline-fraction / matching consistency-fraction ratio; 1.0 when
  // no baseline point is matched by a cheaper consistency point.
  double label_efficiency_factor = 1.0;
};

struct AblateRow {
  std::string variant;  // "baseline" plus the six consistency variants
  std::vector<double> per_seed;
  double mean = 0.0;
};

struct AblateResult {
  double fraction = 0.0;
  std::vector<AblateRow> rows;  // exactly 7
};

struct FreqSeedResult {
  uint64_t seed = 0;
  std::vector<double> frequency;        // labeled-pixel share per class
  std::vector<double> rel_improvement;  // (iou_c - iou_b) / max(iou_b, 1e-3)
  std::vector<bool> included;           // class present in the eval ground truth
  double spearman = 0.0;
};

struct FreqResult {
  double fraction = 0.0;
  std::vector<FreqSeedResult> seeds;
  int negative_spearman_count = 0;
};

struct RobustnessResult {
  double fraction = 0.0;
  double sigma_rot = 0.0, sigma_trans = 0.0, sigma_depth = 0.0;
  double clean_delta = 0.0;      // mean consist - baseline MIOU, unperturbed
  double perturbed_delta = 0.0;  // same with perturbed depth/motion oracles
};

// Shares baselines and phase-2 runs across the sweep, the ablation, the
// frequency analysis, and the robustness check; every run is cached by its
// full identity so repeated requests are free and deterministic.
class ExperimentRunner {
 public:
  ExperimentRunner(const Dataset& data, ExperimentConfig cfg, int workers = 1);

  SweepResult sweep();
  AblateResult ablate();                              // at the smallest fraction
  FreqResult frequency(std::vector<uint64_t> seeds);  // at the smallest fraction
  RobustnessResult robustness(double sigma_rot, double sigma_trans, double sigma_depth);

  RunReport baseline_report(double fraction, uint64_t seed);
  RunReport consistency_report(double fraction, uint64_t seed, const std::string& variant,
                               double sigma_rot = 0, double sigma_trans = 0,
                               double sigma_depth = 0);

  const std::vector<std::pair<std::string, double>>& timings() const { return timings_; }
  const ExperimentConfig& config() const { return cfg_; }

 private:
  struct BaseKey {
    int64_t fraction_bits;
    uint64_t seed;
    auto operator<=>(const BaseKey&) const = default;
  };
  struct ConsKey {
    int64_t fraction_bits;
    uint64_t seed;
    std::string variant;
    int64_t rot_bits, trans_bits, depth_bits;
    auto operator<=>(const ConsKey&) const = default;
  };

  LabelSplit split_for(double fraction, uint64_t seed) const;
  RunReport make_report(const TrainResult& run, const LabelSplit& split, const char* variant,
                        double fraction, uint64_t seed, int phase, double wall);
  // Runs the phase-1/phase-2 cells for the given fractions x seeds in worker
  // threads (when workers > 1), filling both caches deterministically.
  void prefetch(const std::vector<double>& fractions, const std::vector<uint64_t>& seeds,
                const std::string& variant, double sr = 0, double st = 0, double sd = 0);

  const Dataset& data_;
  ExperimentConfig cfg_;
  int workers_;
  int train_frames_;
  // Baselines are step-matched: phase1_cache_ holds the shared supervised
  // phase-1 checkpoint; base_cache_ continues it for phase2_steps more
  // supervised steps so both arms see the same total step budget.
  std::map<BaseKey, TrainResult> phase1_cache_;
  std::map<BaseKey, TrainResult> base_cache_;
  std::map<ConsKey, TrainResult> cons_cache_;
  std::map<BaseKey, double> base_wall_;
  std::map<ConsKey, double> cons_wall_;
  std::vector<std::pair<std::string, double>> timings_;
};

// Deterministic artifact rendering. CSVs quantize to 6 decimals; JSON keeps
// full double precision via the shortest round-trip representation.
std::string render_table1_csv(const SweepResult& s);
std::string render_table2_csv(const AblateResult& a);
std::string render_fig2_csv(const FreqResult& f);
std::string render_fig2_svg(const FreqResult& f);
std::string render_loss_curve_csv(const RunReport& r);
std::string render_timings(const std::vector<std::pair<std::string, double>>& timings);

void to_json(nlohmann::json& j, const RunReport& r);
void to_json(nlohmann::json& j, const SweepResult& s);
void to_json(nlohmann::json& j, const AblateResult& a);
void to_json(nlohmann::json& j, const FreqResult& f);
void to_json(nlohmann::json& j, const RobustnessResult& r);

// Assembles report.json from whichever analyses ran; keys are sorted by the
// serializer so identical content dumps to identical bytes.
nlohmann::json report_json(const ExperimentConfig& cfg, const std::optional<SweepResult>& sweep,
                           const std::optional<AblateResult>& ablate,
                           const std::optional<FreqResult>& freq,
                           const std::optional<RobustnessResult>& robust);

int env_thread_cap();  // STCONSIST_THREADS, default unlimited (INT_MAX)

}  // namespace stc

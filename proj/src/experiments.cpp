#include "stc/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <climits>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <thread>

#include "stc/errors.hpp"
#include "stc/metrics.hpp"

namespace stc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int64_t bits(double v) { return std::bit_cast<int64_t>(v); }

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string cell_name(const char* kind, double fraction, uint64_t seed,
                      const std::string& variant) {
  return std::string(kind) + " f=" + fmt6(fraction) + " seed=" + std::to_string(seed) +
         (variant.empty() ? "" : " variant=" + variant);
}

// Runs jobs[0..n) on up to `workers` threads; each job writes only its own
// slot, so results are position-stable regardless of scheduling.
template <typename Job>
void run_jobs(std::vector<Job>& jobs, int workers) {
  if (jobs.empty()) return;
  workers = std::clamp(workers, 1, static_cast<int>(jobs.size()));
  if (workers == 1) {
    for (Job& j : jobs) j();
    return;
  }
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) jobs[i]();
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
}

}  // namespace

int env_thread_cap() {
  const char* env = std::getenv("STCONSIST_THREADS");
  if (!env || !*env) return INT_MAX;
  const int v = std::atoi(env);
  return v >= 1 ? v : 1;
}

ExperimentRunner::ExperimentRunner(const Dataset& data, ExperimentConfig cfg, int workers)
    : data_(data), cfg_(std::move(cfg)), workers_(std::min(std::max(workers, 1), env_thread_cap())) {
  cfg_.validate();
  train_frames_ =
      data_.eval_scene_start(cfg_.train.eval_fraction) * data_.cfg.frames_per_scene;
  if (train_frames_ <= 0) throw ContractError("experiment: no training scenes available");
}

LabelSplit ExperimentRunner::split_for(double fraction, uint64_t seed) const {
  return split_labels(train_frames_, fraction, seed);
}

void ExperimentRunner::prefetch(const std::vector<double>& fractions,
                                const std::vector<uint64_t>& seeds, const std::string& variant,
                                double sr, double st, double sd) {
  struct BaseJob {
    BaseKey key;
    double fraction;
    uint64_t seed;
    TrainResult phase1;
    TrainResult extended;
    double wall = 0;
  };
  std::vector<BaseJob> base_jobs;
  for (double f : fractions)
    for (uint64_t s : seeds) {
      const BaseKey key{bits(f), s};
      if (!base_cache_.contains(key)) base_jobs.push_back({key, f, s, {}, {}, 0});
    }
  std::vector<std::function<void()>> jobs;
  for (BaseJob& j : base_jobs)
    jobs.push_back([this, &j] {
      const auto t0 = Clock::now();
      const LabelSplit split = split_for(j.fraction, j.seed);
      TrainConfig bcfg = cfg_.train;
      bcfg.loss_variant = "baseline";
      j.phase1 = train_baseline(data_, split, bcfg, j.seed);
      // Step-matched control: continue supervised-only for phase2_steps so
      // the baseline sees the same total budget as the consistency arm.
      j.extended = train_with_consistency(data_, split, j.phase1.checkpoint, bcfg, j.seed);
      j.wall = seconds_since(t0);
    });
  run_jobs(jobs, workers_);
  for (BaseJob& j : base_jobs) {
    timings_.emplace_back(cell_name("baseline", j.fraction, j.seed, ""), j.wall);
    base_wall_[j.key] = j.wall;
    phase1_cache_.emplace(j.key, std::move(j.phase1));
    base_cache_.emplace(j.key, std::move(j.extended));
  }

  if (variant.empty() || variant == "baseline") return;
  TrainConfig tcfg = cfg_.train;
  tcfg.loss_variant = variant;
  tcfg.sigma_rot = sr;
  tcfg.sigma_trans = st;
  tcfg.sigma_depth = sd;

  struct ConsJob {
    ConsKey key;
    double fraction;
    uint64_t seed;
    TrainResult result;
    double wall = 0;
  };
  std::vector<ConsJob> cons_jobs;
  for (double f : fractions)
    for (uint64_t s : seeds) {
      const ConsKey key{bits(f), s, variant, bits(sr), bits(st), bits(sd)};
      if (!cons_cache_.contains(key)) cons_jobs.push_back({key, f, s, {}, 0});
    }
  jobs.clear();
  for (ConsJob& j : cons_jobs)
    jobs.push_back([this, &j, &tcfg] {
      const auto t0 = Clock::now();
      const TrainResult& p1 = phase1_cache_.at(BaseKey{j.key.fraction_bits, j.key.seed});
      j.result = train_with_consistency(data_, split_for(j.fraction, j.seed), p1.checkpoint,
                                        tcfg, j.seed);
      j.wall = seconds_since(t0);
    });
  run_jobs(jobs, workers_);
  for (ConsJob& j : cons_jobs) {
    timings_.emplace_back(cell_name("consistency", j.fraction, j.seed, variant), j.wall);
    cons_wall_[j.key] = j.wall;
    cons_cache_.emplace(j.key, std::move(j.result));
  }
}

RunReport ExperimentRunner::make_report(const TrainResult& run, const LabelSplit& split,
                                        const char* variant, double fraction, uint64_t seed,
                                        int phase, double wall) {
  RunReport r;
  r.variant = variant;
  r.fraction = fraction;
  r.seed = seed;
  r.phase = phase;
  const IouReport iou = evaluate(data_, run.checkpoint.params, cfg_.train.eval_fraction);
  r.miou = iou.miou;
  r.per_class_iou = iou.iou;
  r.class_frequency = labeled_class_frequency(data_, split, cfg_.train.eval_fraction);
  r.loss_curve = run.loss_curve;
  r.wall_seconds = wall;
  return r;
}

RunReport ExperimentRunner::baseline_report(double fraction, uint64_t seed) {
  const BaseKey key{bits(fraction), seed};
  if (!base_cache_.contains(key)) prefetch({fraction}, {seed}, "");
  return make_report(base_cache_.at(key), split_for(fraction, seed), "baseline", fraction, seed, 1,
                     base_wall_[key]);
}

RunReport ExperimentRunner::consistency_report(double fraction, uint64_t seed,
                                               const std::string& variant, double sr, double st,
                                               double sd) {
  const ConsKey key{bits(fraction), seed, variant, bits(sr), bits(st), bits(sd)};
  if (!cons_cache_.contains(key)) prefetch({fraction}, {seed}, variant, sr, st, sd);
  const TrainResult& run = cons_cache_.at(key);
  return make_report(run, split_for(fraction, seed), variant.c_str(), fraction, seed, 2,
                     cons_wall_[key]);
}

SweepResult ExperimentRunner::sweep() {
  std::vector<double> fractions = cfg_.fractions;
  std::sort(fractions.begin(), fractions.end());
  const std::string variant = cfg_.train.loss_variant;
  prefetch(fractions, cfg_.seeds, variant);

  SweepResult out;
  for (double f : fractions) {
    FractionSummary sum;
    sum.fraction = f;
    for (uint64_t s : cfg_.seeds) {
      SweepCellReport cell;
      cell.fraction = f;
      cell.seed = s;
      cell.baseline = baseline_report(f, s);
      cell.consist = consistency_report(f, s, variant);
      sum.baseline_mean += cell.baseline.miou;
      sum.consist_mean += cell.consist.miou;
      out.cells.push_back(std::move(cell));
    }
    sum.baseline_mean /= static_cast<double>(cfg_.seeds.size());
    sum.consist_mean /= static_cast<double>(cfg_.seeds.size());
    out.summary.push_back(sum);
  }

  // Label efficiency: for each baseline point, the cheapest consistency
  // fraction that matches it; report the best ratio seen.
  for (const FractionSummary& b : out.summary)
    for (const FractionSummary& c : out.summary)
      if (c.consist_mean >= b.baseline_mean && c.fraction <= b.fraction)
        out.label_efficiency_factor =
            std::max(out.label_efficiency_factor, b.fraction / c.fraction);
  return out;
}

AblateResult ExperimentRunner::ablate() {
  AblateResult out;
  out.fraction = *std::min_element(cfg_.fractions.begin(), cfg_.fractions.end());
  const std::vector<std::string> variants = {"uniform", "label_prior", "pixel_prior",
                                             "combined", "ce",          "combined_ce"};
  prefetch({out.fraction}, cfg_.seeds, "");
  for (const std::string& v : variants) prefetch({out.fraction}, cfg_.seeds, v);

  AblateRow base_row;
  base_row.variant = "baseline";
  for (uint64_t s : cfg_.seeds) base_row.per_seed.push_back(baseline_report(out.fraction, s).miou);
  out.rows.push_back(base_row);
  for (const std::string& v : variants) {
    AblateRow row;
    row.variant = v;
    for (uint64_t s : cfg_.seeds)
      row.per_seed.push_back(consistency_report(out.fraction, s, v).miou);
    out.rows.push_back(row);
  }
  for (AblateRow& row : out.rows) {
    row.mean = 0;
    for (double v : row.per_seed) row.mean += v;
    row.mean /= static_cast<double>(row.per_seed.size());
  }
  return out;
}

FreqResult ExperimentRunner::frequency(std::vector<uint64_t> seeds) {
  FreqResult out;
  out.fraction = *std::min_element(cfg_.fractions.begin(), cfg_.fractions.end());
  const std::string variant = cfg_.train.loss_variant;
  prefetch({out.fraction}, seeds, variant);
  for (uint64_t s : seeds) {
    const RunReport base = baseline_report(out.fraction, s);
    const RunReport cons = consistency_report(out.fraction, s, variant);
    FreqSeedResult r;
    r.seed = s;
    r.frequency = base.class_frequency;
    const size_t classes = base.per_class_iou.size();
    r.rel_improvement.assign(classes, 0.0);
    r.included.assign(classes, false);
    std::vector<double> fx, fy;
    for (size_t c = 0; c < classes; ++c) {
      const double ib = base.per_class_iou[c];
      const double ic = cons.per_class_iou[c];
      if (ib < 0 && ic < 0) continue;  // absent from the eval set entirely
      const double iou_b = std::max(ib, 0.0);
      const double iou_c = std::max(ic, 0.0);
      r.included[c] = true;
      r.rel_improvement[c] = (iou_c - iou_b) / std::max(iou_b, 1e-3);
      fx.push_back(r.frequency[c]);
      fy.push_back(r.rel_improvement[c]);
    }
    r.spearman = spearman(fx, fy);
    if (r.spearman < 0) ++out.negative_spearman_count;
    out.seeds.push_back(std::move(r));
  }
  return out;
}

RobustnessResult ExperimentRunner::robustness(double sigma_rot, double sigma_trans,
                                              double sigma_depth) {
  RobustnessResult out;
  out.fraction = *std::min_element(cfg_.fractions.begin(), cfg_.fractions.end());
  out.sigma_rot = sigma_rot;
  out.sigma_trans = sigma_trans;
  out.sigma_depth = sigma_depth;
  const std::string variant = cfg_.train.loss_variant;
  prefetch({out.fraction}, cfg_.seeds, variant);
  prefetch({out.fraction}, cfg_.seeds, variant, sigma_rot, sigma_trans, sigma_depth);
  double clean = 0, noisy = 0, base = 0;
  for (uint64_t s : cfg_.seeds) {
    base += baseline_report(out.fraction, s).miou;
    clean += consistency_report(out.fraction, s, variant).miou;
    noisy += consistency_report(out.fraction, s, variant, sigma_rot, sigma_trans, sigma_depth).miou;
  }
  const double n = static_cast<double>(cfg_.seeds.size());
  out.clean_delta = (clean - base) / n;
  out.perturbed_delta = (noisy - base) / n;
  return out;
}

std::string render_table1_csv(const SweepResult& s) {
  std::string out = "fraction,seed,baseline_miou,consist_miou\n";
  for (const SweepCellReport& c : s.cells)
    out += fmt6(c.fraction) + "," + std::to_string(c.seed) + "," + fmt6(c.baseline.miou) + "," +
           fmt6(c.consist.miou) + "\n";
  for (const FractionSummary& f : s.summary)
    out += fmt6(f.fraction) + ",mean," + fmt6(f.baseline_mean) + "," + fmt6(f.consist_mean) + "\n";
  return out;
}

std::string render_table2_csv(const AblateResult& a) {
  std::string out = "variant";
  if (!a.rows.empty())
    for (size_t i = 0; i < a.rows.front().per_seed.size(); ++i)
      out += ",miou_seed" + std::to_string(i + 1);
  out += ",miou_mean\n";
  for (const AblateRow& row : a.rows) {
    out += row.variant;
    for (double v : row.per_seed) out += "," + fmt6(v);
    out += "," + fmt6(row.mean) + "\n";
  }
  return out;
}

std::string render_fig2_csv(const FreqResult& f) {
  std::string out = "seed,class,frequency,rel_improvement,included\n";
  for (const FreqSeedResult& s : f.seeds)
    for (size_t c = 0; c < s.frequency.size(); ++c)
      out += std::to_string(s.seed) + "," + std::to_string(c) + "," + fmt6(s.frequency[c]) + "," +
             fmt6(s.rel_improvement[c]) + "," + (s.included[c] ? "1" : "0") + "\n";
  return out;
}

std::string render_loss_curve_csv(const RunReport& r) {
  std::string out = "step,loss\n";
  for (size_t i = 0; i < r.loss_curve.size(); ++i)
    out += std::to_string(i) + "," + fmt6(r.loss_curve[i]) + "\n";
  return out;
}

std::string render_timings(const std::vector<std::pair<std::string, double>>& timings) {
  std::string out;
  double total = 0;
  for (const auto& [name, secs] : timings) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", secs);
    out += name + ": " + buf + " s\n";
    total += secs;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", total);
  out += std::string("total: ") + buf + " s\n";
  return out;
}

std::string render_fig2_svg(const FreqResult& f) {
  // Frequency on a log x axis, relative improvement linear on y.
  const double width = 640, height = 480;
  const double ml = 70, mr = 20, mt = 30, mb = 50;
  double fmin = 1e9, fmax = 0, ymin = 0, ymax = 0;
  for (const FreqSeedResult& s : f.seeds)
    for (size_t c = 0; c < s.frequency.size(); ++c) {
      if (!s.included[c] || s.frequency[c] <= 0) continue;
      fmin = std::min(fmin, s.frequency[c]);
      fmax = std::max(fmax, s.frequency[c]);
      ymin = std::min(ymin, s.rel_improvement[c]);
      ymax = std::max(ymax, s.rel_improvement[c]);
    }
  if (fmin > fmax) {
    fmin = 1e-3;
    fmax = 1;
  }
  if (ymax - ymin < 1e-9) ymax = ymin + 1;
  const double lx0 = std::log10(fmin), lx1 = std::log10(fmax);
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double freq) {
    const double t = (std::log10(freq) - lx0) / std::max(lx1 - lx0, 1e-9);
    return ml + t * (width - ml - mr);
  };
  auto py = [&](double v) {
    const double t = (v - ymin) / (ymax - ymin);
    return height - mb - t * (height - mt - mb);
  };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                          "#8c564b", "#e377c2", "#7f7f7f"};
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) +
                    "\" height=\"" + num(height) + "\" viewBox=\"0 0 " + num(width) + " " +
                    num(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes
  svg += "<line x1=\"" + num(ml) + "\" y1=\"" + num(height - mb) + "\" x2=\"" + num(width - mr) +
         "\" y2=\"" + num(height - mb) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(ml) + "\" y1=\"" + num(mt) + "\" x2=\"" + num(ml) + "\" y2=\"" +
         num(height - mb) + "\" stroke=\"black\"/>\n";
  // zero line
  if (ymin < 0 && ymax > 0)
    svg += "<line x1=\"" + num(ml) + "\" y1=\"" + num(py(0)) + "\" x2=\"" + num(width - mr) +
           "\" y2=\"" + num(py(0)) + "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 3\"/>\n";
  // x ticks at powers of ten
  for (int e = static_cast<int>(std::floor(lx0)); e <= static_cast<int>(std::ceil(lx1)); ++e) {
    const double freq = std::pow(10.0, e);
    if (freq < fmin * 0.999 || freq > fmax * 1.001) continue;
    const double x = px(freq);
    svg += "<line x1=\"" + num(x) + "\" y1=\"" + num(height - mb) + "\" x2=\"" + num(x) +
           "\" y2=\"" + num(height - mb + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(x) + "\" y=\"" + num(height - mb + 20) +
           "\" font-size=\"12\" text-anchor=\"middle\">1e" + std::to_string(e) + "</text>\n";
  }
  // y ticks
  for (int i = 0; i <= 4; ++i) {
    const double v = ymin + (ymax - ymin) * i / 4.0;
    const double y = py(v);
    svg += "<line x1=\"" + num(ml - 5) + "\" y1=\"" + num(y) + "\" x2=\"" + num(ml) + "\" y2=\"" +
           num(y) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(ml - 10) + "\" y=\"" + num(y + 4) +
           "\" font-size=\"12\" text-anchor=\"end\">" + num(v) + "</text>\n";
  }
  svg += "<text x=\"" + num((ml + width - mr) / 2) + "\" y=\"" + num(height - 10) +
         "\" font-size=\"13\" text-anchor=\"middle\">class frequency in labeled data</text>\n";
  svg += "<text x=\"16\" y=\"" + num((mt + height - mb) / 2) +
         "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num((mt + height - mb) / 2) + ")\">relative MIOU improvement</text>\n";
  for (size_t si = 0; si < f.seeds.size(); ++si) {
    const FreqSeedResult& s = f.seeds[si];
    const char* color = colors[si % 8];
    for (size_t c = 0; c < s.frequency.size(); ++c) {
      if (!s.included[c] || s.frequency[c] <= 0) continue;
      svg += "<circle cx=\"" + num(px(s.frequency[c])) + "\" cy=\"" +
             num(py(s.rel_improvement[c])) + "\" r=\"4\" fill=\"" + color +
             "\" fill-opacity=\"0.7\"/>\n";
    }
  }
  svg += "</svg>\n";
  return svg;
}

void to_json(nlohmann::json& j, const RunReport& r) {
  j = nlohmann::json{{"variant", r.variant},
                     {"fraction", r.fraction},
                     {"seed", r.seed},
                     {"phase", r.phase},
                     {"miou", r.miou},
                     {"per_class_iou", r.per_class_iou},
                     {"class_frequency", r.class_frequency},
                     {"loss_curve", r.loss_curve}};
}

void to_json(nlohmann::json& j, const SweepResult& s) {
  nlohmann::json cells = nlohmann::json::array();
  for (const SweepCellReport& c : s.cells)
    cells.push_back(nlohmann::json{{"fraction", c.fraction},
                                   {"seed", c.seed},
                                   {"baseline", c.baseline},
                                   {"consist", c.consist}});
  nlohmann::json summary = nlohmann::json::array();
  for (const FractionSummary& f : s.summary)
    summary.push_back(nlohmann::json{{"fraction", f.fraction},
                                     {"baseline_mean", f.baseline_mean},
                                     {"consist_mean", f.consist_mean}});
  j = nlohmann::json{{"cells", cells},
                     {"summary", summary},
                     {"label_efficiency_factor", s.label_efficiency_factor}};
}

void to_json(nlohmann::json& j, const AblateResult& a) {
  nlohmann::json rows = nlohmann::json::array();
  for (const AblateRow& r : a.rows)
    rows.push_back(
        nlohmann::json{{"variant", r.variant}, {"per_seed", r.per_seed}, {"mean", r.mean}});
  j = nlohmann::json{{"fraction", a.fraction}, {"rows", rows}};
}

void to_json(nlohmann::json& j, const FreqResult& f) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const FreqSeedResult& s : f.seeds) {
    std::vector<int> inc(s.included.begin(), s.included.end());
    seeds.push_back(nlohmann::json{{"seed", s.seed},
                                   {"frequency", s.frequency},
                                   {"rel_improvement", s.rel_improvement},
                                   {"included", inc},
                                   {"spearman", s.spearman}});
  }
  j = nlohmann::json{{"fraction", f.fraction},
                     {"seeds", seeds},
                     {"negative_spearman_count", f.negative_spearman_count}};
}

void to_json(nlohmann::json& j, const RobustnessResult& r) {
  j = nlohmann::json{{"fraction", r.fraction},
                     {"sigma_rot", r.sigma_rot},
                     {"sigma_trans", r.sigma_trans},
                     {"sigma_depth", r.sigma_depth},
                     {"clean_delta", r.clean_delta},
                     {"perturbed_delta", r.perturbed_delta}};
}

nlohmann::json report_json(const ExperimentConfig& cfg, const std::optional<SweepResult>& sweep,
                           const std::optional<AblateResult>& ablate,
                           const std::optional<FreqResult>& freq,
                           const std::optional<RobustnessResult>& robust) {
  nlohmann::json j;
  j["config"] = cfg;
  if (sweep) j["sweep"] = *sweep;
  if (ablate) j["ablate"] = *ablate;
  if (freq) j["frequency_analysis"] = *freq;
  if (robust) j["robustness"] = *robust;
  return j;
}

}  // namespace stc

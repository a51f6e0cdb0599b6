#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stc/checkpoint.hpp"
#include "stc/dataset.hpp"
#include "stc/errors.hpp"
#include "stc/experiments.hpp"
#include "stc/metrics.hpp"
#include "stc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct LoadedConfig {
  stc::ExperimentConfig cfg;
  json echo;          // fully materialized (defaults + file + overrides)
  uint64_t hash = 0;  // FNV-1a of the canonical echo dump
};

LoadedConfig assemble_config(const std::string& path, const std::vector<std::string>& sets) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw stc::IoError("cannot open config file '" + path + "'");
    try {
      in >> j;
    } catch (const json::parse_error& e) {
      throw stc::ConfigError("config parse error in '" + path + "': " + e.what());
    }
  }
  for (const std::string& s : sets) stc::apply_override(j, s);
  LoadedConfig out;
  try {
    stc::from_json(j, out.cfg);
  } catch (const json::exception& e) {
    throw stc::ConfigError(std::string("config field error: ") + e.what());
  }
  out.cfg.validate();
  stc::to_json(out.echo, out.cfg);
  out.hash = stc::config_hash(out.echo);
  return out;
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw stc::IoError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw stc::IoError("write failed for '" + path.string() + "'");
}

void write_json_file(const fs::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

json iou_to_json(const stc::IouReport& r) {
  return json{{"miou", r.miou}, {"per_class_iou", r.iou}};
}

int train_frame_count(const stc::Dataset& ds, double eval_fraction) {
  int n = 0;
  const int end = ds.eval_scene_start(eval_fraction);
  for (int si = 0; si < end; ++si) n += static_cast<int>(ds.seqs[static_cast<size_t>(si)].frames.size());
  return n;
}

int cmd_gen_data(const LoadedConfig& lc, const std::string& out_dir) {
  stc::Dataset ds = stc::generate_dataset(lc.cfg.scene, lc.cfg.data_seed);
  stc::write_dataset(out_dir, ds);
  const std::vector<double> census = stc::class_census(ds.seqs, lc.cfg.scene.classes);
  std::printf("wrote %zu scenes x %d frames to %s\n", ds.seqs.size(),
              lc.cfg.scene.frames_per_scene, out_dir.c_str());
  std::printf("class census:");
  for (double f : census) std::printf(" %.4f", f);
  std::printf("\n");
  double lo = 1.0, hi = 0.0;
  for (double f : census) {
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  std::printf("rarest %.4f, commonest %.4f, span %.1f:1\n", lo, hi, hi / std::max(lo, 1e-12));
  return 0;
}

int cmd_train(const LoadedConfig& lc, const std::string& data_dir, const std::string& out_dir,
              double fraction, uint64_t seed, bool baseline_only, const std::string& resume) {
  const stc::Dataset ds = stc::load_dataset(data_dir);
  const stc::LabelSplit split =
      stc::split_labels(train_frame_count(ds, lc.cfg.train.eval_fraction), fraction, seed);
  std::printf("fraction %.4f -> %d labeled frames, seed %llu\n", fraction, split.count(),
              static_cast<unsigned long long>(seed));

  std::vector<std::pair<std::string, double>> timings;
  std::vector<stc::RunReport> reports;
  const auto clock0 = std::chrono::steady_clock::now();

  stc::Checkpoint baseline;
  std::optional<stc::TrainResult> phase1;
  if (!resume.empty()) {
    baseline = stc::load_checkpoint(resume);
    if (baseline.config_hash != lc.hash)
      throw stc::ConfigError("refusing resume: checkpoint config hash " +
                             std::to_string(baseline.config_hash) + " != current config hash " +
                             std::to_string(lc.hash));
    if (baseline.phase != 1)
      throw stc::ConfigError("resume expects a phase-1 checkpoint, got phase " +
                             std::to_string(baseline.phase));
    std::printf("resumed phase-1 checkpoint at step %lld\n",
                static_cast<long long>(baseline.step));
  } else {
    stc::TrainResult r = stc::train_baseline(ds, split, lc.cfg.train, seed);
    r.checkpoint.config_hash = lc.hash;
    baseline = r.checkpoint;
    phase1 = std::move(r);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
    timings.emplace_back("phase1", wall);
    stc::save_checkpoint(fs::path(out_dir) / "checkpoint_phase1", baseline);
  }

  const stc::IouReport base_eval = stc::evaluate(ds, baseline.params, lc.cfg.train.eval_fraction);
  std::printf("baseline MIOU (held-out): %.4f\n", base_eval.miou);
  {
    stc::RunReport r;
    r.variant = "baseline";
    r.fraction = fraction;
    r.seed = seed;
    r.phase = 1;
    r.miou = base_eval.miou;
    r.per_class_iou = base_eval.iou;
    r.class_frequency = stc::labeled_class_frequency(ds, split, lc.cfg.train.eval_fraction);
    if (phase1) r.loss_curve = phase1->loss_curve;
    reports.push_back(r);
    if (phase1) write_text(fs::path(out_dir) / "loss_curve_phase1.csv", render_loss_curve_csv(r));
  }

  if (!baseline_only) {
    const auto t1 = std::chrono::steady_clock::now();
    stc::TrainResult r2 = stc::train_with_consistency(ds, split, baseline, lc.cfg.train, seed);
    timings.emplace_back("phase2",
                         std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count());
    stc::save_checkpoint(fs::path(out_dir) / "checkpoint_phase2", r2.checkpoint);
    const stc::IouReport eval2 = stc::evaluate(ds, r2.checkpoint.params, lc.cfg.train.eval_fraction);
    std::printf("with-consistency MIOU (held-out): %.4f (%+.2f points)\n", eval2.miou,
                (eval2.miou - base_eval.miou) * 100.0);
    stc::RunReport r;
    r.variant = lc.cfg.train.loss_variant;
    r.fraction = fraction;
    r.seed = seed;
    r.phase = 2;
    r.miou = eval2.miou;
    r.per_class_iou = eval2.iou;
    r.class_frequency = reports.front().class_frequency;
    r.loss_curve = r2.loss_curve;
    reports.push_back(r);
    write_text(fs::path(out_dir) / "loss_curve_phase2.csv", render_loss_curve_csv(r));
  }

  json report;
  report["config"] = lc.echo;
  report["config_hash"] = lc.hash;
  report["runs"] = reports;
  write_json_file(fs::path(out_dir) / "report.json", report);
  write_text(fs::path(out_dir) / "timing.txt", stc::render_timings(timings));
  return 0;
}

int cmd_eval(const LoadedConfig& lc, const std::string& ckpt_dir, const std::string& data_dir,
             const std::string& split, const std::string& out_dir) {
  const stc::Checkpoint ckpt = stc::load_checkpoint(ckpt_dir);
  const stc::Dataset ds = stc::load_dataset(data_dir);
  json report;
  report["checkpoint"] = ckpt_dir;
  report["step"] = ckpt.step;
  report["phase"] = ckpt.phase;
  if (split == "train" || split == "both") {
    const stc::IouReport r = stc::evaluate(ds, ckpt.params, lc.cfg.train.eval_fraction, false);
    std::printf("train-split MIOU: %.4f\n", r.miou);
    report["train"] = iou_to_json(r);
  }
  if (split == "eval" || split == "both") {
    const stc::IouReport r = stc::evaluate(ds, ckpt.params, lc.cfg.train.eval_fraction, true);
    std::printf("held-out MIOU: %.4f\n", r.miou);
    report["eval"] = iou_to_json(r);
  }
  write_json_file(fs::path(out_dir) / "report.json", report);
  return 0;
}

int cmd_sweep(const LoadedConfig& lc, const std::string& data_dir, const std::string& out_dir,
              bool plot, int workers) {
  const stc::Dataset ds = stc::load_dataset(data_dir);
  stc::ExperimentRunner runner(ds, lc.cfg, workers);
  const stc::SweepResult sweep = runner.sweep();
  const stc::FreqResult freq = runner.frequency(lc.cfg.seeds);

  write_text(fs::path(out_dir) / "table1.csv", render_table1_csv(sweep));
  write_text(fs::path(out_dir) / "fig2.csv", render_fig2_csv(freq));
  write_json_file(fs::path(out_dir) / "report.json",
                  stc::report_json(lc.cfg, sweep, std::nullopt, freq, std::nullopt));
  write_text(fs::path(out_dir) / "timing.txt", stc::render_timings(runner.timings()));
  if (plot) write_text(fs::path(out_dir) / "fig2.svg", render_fig2_svg(freq));

  for (const stc::FractionSummary& f : sweep.summary)
    std::printf("fraction %.4f: baseline %.4f, consist %.4f (%+.2f points)\n", f.fraction,
                f.baseline_mean, f.consist_mean, (f.consist_mean - f.baseline_mean) * 100.0);
  std::printf("label-efficiency factor: %.2f\n", sweep.label_efficiency_factor);
  std::printf("negative Spearman in %d of %zu seeds\n", freq.negative_spearman_count,
              freq.seeds.size());
  return 0;
}

int cmd_ablate(const LoadedConfig& lc, const std::string& data_dir, const std::string& out_dir,
               bool plot, int workers) {
  const stc::Dataset ds = stc::load_dataset(data_dir);
  stc::ExperimentRunner runner(ds, lc.cfg, workers);
  const stc::AblateResult ablate = runner.ablate();
  std::optional<stc::FreqResult> freq;
  if (plot) freq = runner.frequency(lc.cfg.seeds);

  write_text(fs::path(out_dir) / "table2.csv", render_table2_csv(ablate));
  write_json_file(fs::path(out_dir) / "report.json",
                  stc::report_json(lc.cfg, std::nullopt, ablate, freq, std::nullopt));
  write_text(fs::path(out_dir) / "timing.txt", stc::render_timings(runner.timings()));
  if (freq) {
    write_text(fs::path(out_dir) / "fig2.csv", render_fig2_csv(*freq));
    write_text(fs::path(out_dir) / "fig2.svg", render_fig2_svg(*freq));
  }

  for (const stc::AblateRow& row : ablate.rows)
    std::printf("%-12s mean MIOU %.4f\n", row.variant.c_str(), row.mean);
  return 0;
}

stc::FreqResult freq_from_json(const json& j) {
  stc::FreqResult f;
  f.fraction = j.value("fraction", 0.0);
  f.negative_spearman_count = j.value("negative_spearman_count", 0);
  for (const json& s : j.at("seeds")) {
    stc::FreqSeedResult r;
    r.seed = s.at("seed").get<uint64_t>();
    r.frequency = s.at("frequency").get<std::vector<double>>();
    r.rel_improvement = s.at("rel_improvement").get<std::vector<double>>();
    for (int v : s.at("included").get<std::vector<int>>()) r.included.push_back(v != 0);
    r.spearman = s.at("spearman").get<double>();
    f.seeds.push_back(std::move(r));
  }
  return f;
}

int cmd_report(const std::string& in_path, bool plot) {
  std::ifstream in(in_path);
  if (!in) throw stc::IoError("cannot open report '" + in_path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw stc::IoError("report parse error: " + std::string(e.what()));
  }
  if (j.contains("sweep")) {
    std::printf("== supervision sweep ==\n");
    for (const json& f : j["sweep"]["summary"])
      std::printf("fraction %.4f: baseline %.4f, consist %.4f\n", f["fraction"].get<double>(),
                  f["baseline_mean"].get<double>(), f["consist_mean"].get<double>());
    std::printf("label-efficiency factor: %.2f\n",
                j["sweep"]["label_efficiency_factor"].get<double>());
  }
  if (j.contains("ablate")) {
    std::printf("== loss ablation (fraction %.4f) ==\n", j["ablate"]["fraction"].get<double>());
    for (const json& row : j["ablate"]["rows"])
      std::printf("%-12s mean MIOU %.4f\n", row["variant"].get<std::string>().c_str(),
                  row["mean"].get<double>());
  }
  if (j.contains("frequency_analysis")) {
    const json& f = j["frequency_analysis"];
    std::printf("== rare-label analysis ==\n");
    for (const json& s : f["seeds"])
      std::printf("seed %llu: Spearman %.4f\n",
                  static_cast<unsigned long long>(s["seed"].get<uint64_t>()),
                  s["spearman"].get<double>());
    std::printf("negative Spearman in %d of %zu seeds\n",
                f["negative_spearman_count"].get<int>(), f["seeds"].size());
    if (plot) {
      const fs::path svg = fs::path(in_path).parent_path() / "fig2.svg";
      write_text(svg, render_fig2_svg(freq_from_json(f)));
      std::printf("wrote %s\n", svg.string().c_str());
    }
  }
  if (j.contains("robustness")) {
    const json& r = j["robustness"];
    std::printf("== oracle-noise robustness ==\n");
    std::printf("clean delta %.4f, perturbed delta %.4f\n", r["clean_delta"].get<double>(),
                r["perturbed_delta"].get<double>());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatio-temporal consistency segmentation experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  app.add_option("-c,--config", config_path, "JSON config file (defaults when omitted)");
  app.add_option("--set", sets, "override a config key, e.g. --set train.lr=1e-3");

  auto* gen = app.add_subcommand("gen-data", "render a synthetic dataset");
  std::string gen_out;
  uint64_t gen_seed = 0;
  bool gen_seed_set = false;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "dataset seed (overrides config)")
      ->each([&](const std::string&) { gen_seed_set = true; });

  auto* train = app.add_subcommand("train", "two-phase training on a dataset");
  std::string train_data, train_out, train_resume;
  double train_fraction = -1;
  uint64_t train_seed = 0;
  bool train_seed_set = false, baseline_only = false;
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--fraction", train_fraction, "labeled fraction (default: smallest in config)");
  train->add_option("--seed", train_seed, "training seed (default: first in config)")
      ->each([&](const std::string&) { train_seed_set = true; });
  train->add_flag("--baseline-only", baseline_only, "stop after the supervised phase");
  train->add_option("--resume", train_resume, "phase-1 checkpoint directory to continue from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_split = "both", eval_out = ".";
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--split", eval_split, "train | eval | both")
      ->check(CLI::IsMember({"train", "eval", "both"}));
  eval->add_option("--out", eval_out, "report output directory");

  auto* sweep = app.add_subcommand("sweep", "supervision-fraction sweep");
  std::string sweep_data, sweep_out;
  bool sweep_plot = false;
  int sweep_workers = 1;
  sweep->add_option("--data", sweep_data, "dataset directory")->required();
  sweep->add_option("--out", sweep_out, "output directory")->required();
  sweep->add_flag("--plot", sweep_plot, "emit fig2.svg");
  sweep->add_option("--workers", sweep_workers, "parallel cells (capped by STCONSIST_THREADS)");

  auto* ablate = app.add_subcommand("ablate", "loss-variant ablation");
  std::string ablate_data, ablate_out;
  bool ablate_plot = false;
  int ablate_workers = 1;
  ablate->add_option("--data", ablate_data, "dataset directory")->required();
  ablate->add_option("--out", ablate_out, "output directory")->required();
  ablate->add_flag("--plot", ablate_plot, "emit fig2.csv/fig2.svg as well");
  ablate->add_option("--workers", ablate_workers, "parallel cells (capped by STCONSIST_THREADS)");

  auto* report = app.add_subcommand("report", "summarize an existing report.json");
  std::string report_in = "report.json";
  bool report_plot = false;
  report->add_option("--in", report_in, "report.json path");
  report->add_flag("--plot", report_plot, "regenerate fig2.svg from the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    LoadedConfig lc = assemble_config(config_path, sets);
    if (gen->parsed()) {
      if (gen_seed_set) lc.cfg.data_seed = gen_seed;
      return cmd_gen_data(lc, gen_out);
    }
    if (train->parsed()) {
      const double f = train_fraction > 0
                           ? train_fraction
                           : *std::min_element(lc.cfg.fractions.begin(), lc.cfg.fractions.end());
      const uint64_t s = train_seed_set ? train_seed : lc.cfg.seeds.front();
      return cmd_train(lc, train_data, train_out, f, s, baseline_only, train_resume);
    }
    if (eval->parsed()) return cmd_eval(lc, eval_ckpt, eval_data, eval_split, eval_out);
    if (sweep->parsed()) return cmd_sweep(lc, sweep_data, sweep_out, sweep_plot, sweep_workers);
    if (ablate->parsed()) return cmd_ablate(lc, ablate_data, ablate_out, ablate_plot, ablate_workers);
    if (report->parsed()) return cmd_report(report_in, report_plot);
  } catch (const stc::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const stc::ContractError& e) {
    std::fprintf(stderr, "contract error: %s\n", e.what());
    return 2;
  } catch (const stc::ShapeError& e) {
    std::fprintf(stderr, "shape error: %s\n", e.what());
    return 2;
  } catch (const stc::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const stc::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  }
  return 0;
}

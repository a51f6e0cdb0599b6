#include "stc/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "stc/errors.hpp"
#include "stc/rng.hpp"
#include "stc/warp.hpp"

namespace stc {

namespace {

constexpr uint64_t kSplitTag = 0x73706c74ULL;   // "splt"
constexpr uint64_t kInitTag = 0x696e6974ULL;    // "init"
constexpr uint64_t kStepTag = 0x73746570ULL;    // "step"
constexpr uint64_t kPerturbTag = 0x70727462ULL; // "prtb"

Tensor ones_mask(int h, int w) { return Tensor::full({h, w}, 1.0, Dtype::F32); }

NodeId supervised_batch_loss(Tape& tape, const TrainPool& pool, const ParamNodes& nodes,
                             const ArchDescriptor& arch, Rng& rng, int batch) {
  NodeId acc = -1;
  for (int b = 0; b < batch; ++b) {
    const int pick = pool.labeled[static_cast<size_t>(rng.uniform_int(
        static_cast<int>(pool.labeled.size())))];
    const auto [si, fi] = pool.frames[static_cast<size_t>(pick)];
    const Frame& f = pool.data->seqs[static_cast<size_t>(si)].frames[static_cast<size_t>(fi)];
    const NodeId img = tape.leaf(f.rgb);
    const NodeId logits = segmenter_forward(tape, img, arch, nodes);
    const NodeId ce = supervised_ce(tape, logits, f.seg, ones_mask(f.seg.h, f.seg.w));
    acc = acc < 0 ? ce : tape.add(acc, ce);
  }
  if (acc < 0) return tape.leaf(Tensor::scalar(0.0, tape.dtype()));
  return tape.scale(acc, 1.0 / batch);
}

// One direction of the consistency constraint: warp src logits onto dst and
// compare under the configured variant. Geometry (depth, motion) is constant.
NodeId direction_loss(Tape& tape, const TrainConfig& cfg, NodeId src_logits, NodeId dst_logits,
                      const Frame& dst_frame, const DepthMap& src_depth, const Se3Motion& motion,
                      const Intrinsics& k) {
  const WarpPlan plan = make_warp_plan(src_depth, motion, k, cfg.warp());
  const NodeId warped = tape.pixel_map(src_logits, std::make_shared<PixelMap>(plan.map));
  const LossVariant v = cfg.variant();
  const Tensor& dst_value = tape.value(dst_logits);
  const int h = dst_value.dim(0), w = dst_value.dim(1), c = dst_value.dim(2);

  NodeId l1 = -1;
  switch (v) {
    case LossVariant::uniform:
      l1 = consistency_l1(tape, warped, dst_logits, weight_uniform(h, w, c, plan.validity));
      break;
    case LossVariant::label_prior:
      l1 = consistency_l1(tape, warped, dst_logits, weight_label_prior(dst_value, plan.validity));
      break;
    case LossVariant::pixel_prior:
      l1 = consistency_l1(tape, warped, dst_logits,
                          weight_pixel_prior(dst_frame.rgb, c, plan.validity));
      break;
    case LossVariant::combined:
    case LossVariant::combined_ce:
      l1 = combined_consistency(tape, warped, dst_logits, dst_frame.rgb, plan.validity, cfg.mix());
      break;
    default:
      break;
  }
  NodeId ce = -1;
  if (variant_uses_ce(v)) {
    const SegMask pseudo = argmax_channels(dst_value);
    ce = pseudo_label_ce(tape, warped, pseudo, plan.validity);
  }
  if (l1 >= 0 && ce >= 0) return tape.add(l1, ce);
  if (l1 >= 0) return l1;
  if (ce >= 0) return ce;
  return tape.leaf(Tensor::scalar(0.0, tape.dtype()));
}

NodeId pair_loss(Tape& tape, const TrainConfig& cfg, const TrainPool& pool,
                 const ParamNodes& nodes, const ArchDescriptor& arch, int scene, int t,
                 uint64_t perturb_seed) {
  const Frame& fa = pool.data->seqs[static_cast<size_t>(scene)].frames[static_cast<size_t>(t)];
  const Frame& fb = pool.data->seqs[static_cast<size_t>(scene)].frames[static_cast<size_t>(t + 1)];

  const NodeId img_a = tape.leaf(fa.rgb);
  const NodeId img_b = tape.leaf(fb.rgb);
  const NodeId la = segmenter_forward(tape, img_a, arch, nodes);
  const NodeId lb = segmenter_forward(tape, img_b, arch, nodes);

  Se3Motion m_ab = relative_motion(fa.pose, fb.pose);
  Se3Motion m_ba = relative_motion(fb.pose, fa.pose);
  DepthMap da = fa.depth, db = fb.depth;
  if (cfg.sigma_rot > 0 || cfg.sigma_trans > 0 || cfg.sigma_depth > 0) {
    std::tie(m_ab, da) = perturb(m_ab, da, cfg.sigma_rot, cfg.sigma_trans, cfg.sigma_depth,
                                 mix_seed(perturb_seed, 0));
    std::tie(m_ba, db) = perturb(m_ba, db, cfg.sigma_rot, cfg.sigma_trans, cfg.sigma_depth,
                                 mix_seed(perturb_seed, 1));
  }

  const NodeId fwd = direction_loss(tape, cfg, la, lb, fb, da, m_ab, fa.intrinsics);
  const NodeId bwd = direction_loss(tape, cfg, lb, la, fa, db, m_ba, fb.intrinsics);
  return tape.scale(tape.add(fwd, bwd), 0.5);
}

struct StepOutcome {
  double loss = 0.0;
};

StepOutcome run_step(std::vector<Tensor>& flat, AdamState& adam, const AdamConfig& acfg,
                     const TrainConfig& cfg, const TrainPool& pool, const ArchDescriptor& arch,
                     uint64_t seed, int64_t step, bool with_consistency) {
  Tape tape(Dtype::F32);
  SegmenterParams cur;
  cur.arch = arch;
  unflatten_params(flat, cur);
  const ParamNodes nodes = push_params(tape, cur, true);

  Rng rng(mix_seed(seed, kStepTag, static_cast<uint64_t>(step)));
  NodeId loss = -1;
  if (cfg.labeled_per_step > 0 && !pool.labeled.empty())
    loss = supervised_batch_loss(tape, pool, nodes, arch, rng, cfg.labeled_per_step);

  if (with_consistency && cfg.pairs_per_step > 0 && cfg.lambda_consistency > 0 &&
      !pool.pairs.empty() && cfg.variant() != LossVariant::baseline) {
    NodeId cons = -1;
    for (int p = 0; p < cfg.pairs_per_step; ++p) {
      const auto [scene, t] =
          pool.pairs[static_cast<size_t>(rng.uniform_int(static_cast<int>(pool.pairs.size())))];
      const uint64_t pseed = mix_seed(seed, kPerturbTag,
                                      static_cast<uint64_t>(scene) * 1000003ULL +
                                          static_cast<uint64_t>(t));
      const NodeId pl = pair_loss(tape, cfg, pool, nodes, arch, scene, t, pseed);
      cons = cons < 0 ? pl : tape.add(cons, pl);
    }
    cons = tape.scale(cons, cfg.lambda_consistency / cfg.pairs_per_step);
    loss = loss < 0 ? cons : tape.add(loss, cons);
  }
  if (loss < 0) loss = tape.leaf(Tensor::scalar(0.0, tape.dtype()));

  StepOutcome out;
  out.loss = tape.value(loss).at(0);
  if (!std::isfinite(out.loss))
    throw NumericError("training diverged: loss is not finite at step " + std::to_string(step));

  tape.backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(flat.size());
  const std::vector<NodeId> leaves = tape.trainable_leaves();
  if (leaves.size() != flat.size()) throw ContractError("trainable leaf count mismatch");
  for (NodeId id : leaves)
    grads.push_back(tape.has_grad(id) ? tape.grad(id)
                                      : Tensor::zeros(tape.value(id).dims(), tape.dtype()));
  adam_step(flat, grads, adam, acfg);
  return out;
}

TrainResult run_phase(const Dataset& data, const LabelSplit& split, const TrainConfig& cfg,
                      uint64_t seed, Checkpoint start, int steps, bool with_consistency) {
  cfg.validate();
  const TrainPool pool = TrainPool::build(data, split, cfg.eval_fraction);
  const ArchDescriptor arch = start.params.arch;

  std::vector<Tensor> flat = flatten_params(start.params);
  AdamState adam = start.adam.m.empty() ? AdamState::init_like(flat) : std::move(start.adam);
  AdamConfig acfg{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};

  TrainResult res;
  res.loss_curve.reserve(static_cast<size_t>(steps));
  for (int s = 0; s < steps; ++s) {
    AdamConfig step_cfg = acfg;
    if (steps > 1) {
      const double frac = static_cast<double>(s) / (steps - 1);
      step_cfg.lr = cfg.lr * (1.0 - (1.0 - cfg.lr_final_factor) * frac);
    }
    const StepOutcome o =
        run_step(flat, adam, step_cfg, cfg, pool, arch, seed, start.step + s, with_consistency);
    res.loss_curve.push_back(o.loss);
  }

  res.checkpoint.params.arch = arch;
  unflatten_params(flat, res.checkpoint.params);
  res.checkpoint.adam = std::move(adam);
  res.checkpoint.step = start.step + steps;
  res.checkpoint.phase = with_consistency ? 2 : 1;
  res.checkpoint.config_hash = start.config_hash;
  return res;
}

}  // namespace

int LabelSplit::count() const {
  int n = 0;
  for (uint8_t f : labeled) n += f;
  return n;
}

LabelSplit split_labels(int total_frames, double fraction, uint64_t seed) {
  if (total_frames <= 0) throw ContractError("split_labels: empty dataset");
  if (fraction <= 0 || fraction > 1) throw ConfigError("fraction must be in (0, 1]");
  LabelSplit s;
  s.fraction = fraction;
  s.seed = seed;
  s.labeled.assign(static_cast<size_t>(total_frames), 0);
  const int k = std::max(1, static_cast<int>(std::lround(fraction * total_frames)));
  std::vector<int> idx(static_cast<size_t>(total_frames));
  for (int i = 0; i < total_frames; ++i) idx[static_cast<size_t>(i)] = i;
  Rng rng(mix_seed(seed, kSplitTag));
  for (int i = total_frames - 1; i > 0; --i)
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(rng.uniform_int(i + 1))]);
  for (int i = 0; i < k; ++i) s.labeled[static_cast<size_t>(idx[static_cast<size_t>(i)])] = 1;
  return s;
}

TrainPool TrainPool::build(const Dataset& data, const LabelSplit& split, double eval_fraction) {
  TrainPool pool;
  pool.data = &data;
  pool.train_scene_end = data.eval_scene_start(eval_fraction);
  for (int si = 0; si < pool.train_scene_end; ++si)
    for (size_t fi = 0; fi < data.seqs[static_cast<size_t>(si)].frames.size(); ++fi)
      pool.frames.emplace_back(si, static_cast<int>(fi));
  if (split.labeled.size() != pool.frames.size())
    throw ShapeError("label split covers " + std::to_string(split.labeled.size()) +
                     " frames, training pool has " + std::to_string(pool.frames.size()));

  for (size_t i = 0; i < pool.frames.size(); ++i)
    if (split.labeled[i]) pool.labeled.push_back(static_cast<int>(i));

  auto collect_pairs = [&](bool unlabeled_only) {
    std::vector<std::pair<int, int>> out;
    for (size_t i = 0; i + 1 < pool.frames.size(); ++i) {
      const auto [si, fi] = pool.frames[i];
      const auto [sj, fj] = pool.frames[i + 1];
      if (si != sj || fj != fi + 1) continue;
      if (unlabeled_only && (split.labeled[i] || split.labeled[i + 1])) continue;
      out.emplace_back(si, fi);
    }
    return out;
  };
  pool.pairs = collect_pairs(true);
  if (pool.pairs.empty()) pool.pairs = collect_pairs(false);
  return pool;
}

TrainResult train_baseline(const Dataset& data, const LabelSplit& split, const TrainConfig& cfg,
                           uint64_t seed) {
  Checkpoint start;
  start.params = init_params(ArchDescriptor::reference(data.cfg.classes), mix_seed(seed, kInitTag));
  return run_phase(data, split, cfg, seed, std::move(start), cfg.phase1_steps, false);
}

TrainResult train_with_consistency(const Dataset& data, const LabelSplit& split,
                                   const Checkpoint& baseline, const TrainConfig& cfg,
                                   uint64_t seed) {
  return run_phase(data, split, cfg, seed, baseline, cfg.phase2_steps, true);
}

IouReport evaluate(const Dataset& data, const SegmenterParams& params, double eval_fraction,
                   bool eval_split) {
  const int start = data.eval_scene_start(eval_fraction);
  const int lo = eval_split ? start : 0;
  const int hi = eval_split ? static_cast<int>(data.seqs.size()) : start;
  std::vector<SegMask> preds, gts;
  for (int si = lo; si < hi; ++si)
    for (const Frame& f : data.seqs[static_cast<size_t>(si)].frames) {
      preds.push_back(predict(segmenter_forward(f.rgb, params)));
      gts.push_back(f.seg);
    }
  if (preds.empty()) throw ContractError("evaluate: no frames in the requested split");
  return miou(preds, gts, data.cfg.classes);
}

std::vector<double> labeled_class_frequency(const Dataset& data, const LabelSplit& split,
                                            double eval_fraction) {
  const TrainPool pool = TrainPool::build(data, split, eval_fraction);
  std::vector<double> counts(static_cast<size_t>(data.cfg.classes), 0.0);
  double total = 0.0;
  for (int idx : pool.labeled) {
    const auto [si, fi] = pool.frames[static_cast<size_t>(idx)];
    for (int32_t id : data.seqs[static_cast<size_t>(si)].frames[static_cast<size_t>(fi)].seg.ids) {
      counts[static_cast<size_t>(id)] += 1.0;
      total += 1.0;
    }
  }
  if (total > 0)
    for (double& c : counts) c /= total;
  return counts;
}

}  // namespace stc

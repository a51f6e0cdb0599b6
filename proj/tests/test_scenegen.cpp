#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "stc/dataset.hpp"
#include "stc/scenegen.hpp"
#include "stc/warp.hpp"

using namespace stc;
namespace fs = std::filesystem;

namespace {

SceneConfig small_cfg(int scenes = 3, int frames = 6) {
  SceneConfig cfg;
  cfg.scenes = scenes;
  cfg.frames_per_scene = frames;
  return cfg;
}

bool same_frame(const Frame& a, const Frame& b) {
  if (a.seg.ids != b.seg.ids) return false;
  auto ra = a.rgb.data<float>(), rb = b.rgb.data<float>();
  for (size_t i = 0; i < ra.size(); ++i)
    if (ra[i] != rb[i]) return false;
  for (int64_t i = 0; i < a.depth.values.size(); ++i)
    if (a.depth.values.at(i) != b.depth.values.at(i)) return false;
  return (a.pose.rotation - b.pose.rotation).cwiseAbs().maxCoeff() == 0.0 &&
         (a.pose.translation - b.pose.translation).cwiseAbs().maxCoeff() == 0.0;
}

Tensor one_hot_logits(const SegMask& seg, int classes) {
  Tensor t = Tensor::zeros({seg.h, seg.w, classes}, Dtype::F64);
  for (int y = 0; y < seg.h; ++y)
    for (int x = 0; x < seg.w; ++x) t.set(t.offset(y, x, seg.at(y, x)), 1.0);
  return t;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("scene generation is deterministic and honors object counts") {
  SceneConfig cfg;
  SceneDescriptor a = generate_scene(cfg, 5), b = generate_scene(cfg, 5);
  REQUIRE(a.boxes.size() == b.boxes.size());
  for (size_t i = 0; i < a.boxes.size(); ++i) {
    CHECK((a.boxes[i].lo - b.boxes[i].lo).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.boxes[i].hi - b.boxes[i].hi).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.boxes[i].cls == b.boxes[i].cls);
  }
  CHECK(a.boxes.size() >= static_cast<size_t>(cfg.min_objects));
  CHECK(a.boxes.size() <= static_cast<size_t>(cfg.max_objects));

  SceneDescriptor c = generate_scene(cfg, 6);
  CHECK((a.boxes.size() != c.boxes.size() ||
         (a.boxes[0].lo - c.boxes[0].lo).cwiseAbs().maxCoeff() > 0));
}

TEST_CASE("object count zero gives a room-only scene with at most 3 classes") {
  SceneConfig cfg;
  cfg.min_objects = cfg.max_objects = 0;
  SceneDescriptor s = generate_scene(cfg, 3);
  CHECK(s.boxes.empty());
  Sequence seq = generate_sequence(cfg, 3);
  for (const Frame& f : seq.frames)
    for (int32_t id : f.seg.ids) CHECK(id < 3);
}

TEST_CASE("principal-point ray hits the facing wall at its exact distance") {
  SceneConfig cfg;
  cfg.min_objects = cfg.max_objects = 0;
  cfg.image_size = 9;  // odd size puts the principal point on a sampled pixel
  SceneDescriptor s = generate_scene(cfg, 11);
  Se3Motion pose;  // identity: camera axes = world axes, looking along +z
  pose.translation = Eigen::Vector3d(s.rw / 2, s.rh / 2, s.rd - 2.0);
  Frame f = raycast_frame(s, pose, cfg.intrinsics(), cfg.image_size);
  const int c = 4;  // cx = cy = (9-1)/2
  CHECK(f.depth.values.at(f.depth.values.offset(c, c)) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("every ray hits the closed room with positive finite depth") {
  SceneConfig cfg = small_cfg(2, 4);
  Dataset ds = generate_dataset(cfg, 17);
  for (const Sequence& seq : ds.seqs)
    for (const Frame& f : seq.frames) {
      CHECK_NOTHROW(check_depth(f.depth));
      auto rgb = f.rgb.data<float>();
      for (size_t i = 0; i < rgb.size(); ++i) {
        CHECK(rgb[i] >= 0.0f);
        CHECK(rgb[i] <= 1.0f);
      }
      for (int32_t id : f.seg.ids) {
        CHECK(id >= 0);
        CHECK(id < cfg.classes);
      }
    }
}

TEST_CASE("re-rendering a frame is bit-identical") {
  SceneConfig cfg;
  SceneDescriptor s = generate_scene(cfg, 23);
  auto traj = generate_trajectory(cfg, s, 23);
  Frame a = raycast_frame(s, traj[0], cfg.intrinsics(), cfg.image_size, 0, cfg.texture_noise,
                          cfg.texture_freq);
  Frame b = raycast_frame(s, traj[0], cfg.intrinsics(), cfg.image_size, 0, cfg.texture_noise,
                          cfg.texture_freq);
  CHECK(same_frame(a, b));
}

TEST_CASE("sequences are deterministic with bounded inter-frame motion") {
  SceneConfig cfg = small_cfg(1, 16);
  Sequence a = generate_sequence(cfg, 31), b = generate_sequence(cfg, 31);
  REQUIRE(a.frames.size() == 16);
  for (size_t i = 0; i < a.frames.size(); ++i) CHECK(same_frame(a.frames[i], b.frames[i]));

  for (size_t i = 0; i + 1 < a.frames.size(); ++i) {
    Se3Motion rel = relative_motion(a.frames[i].pose, a.frames[i + 1].pose);
    const double angle = std::acos(std::clamp((rel.rotation.trace() - 1.0) / 2.0, -1.0, 1.0));
    CHECK(angle <= cfg.max_step_rot + 1e-9);
    CHECK(rel.translation.norm() <= cfg.max_step_trans + 1e-9);
  }

  SceneConfig one = small_cfg(1, 1);
  Sequence single = generate_sequence(one, 31);
  CHECK(single.frames.size() == 1);
}

TEST_CASE("default rarity profile spans the required class-frequency skew") {
  SceneConfig cfg = small_cfg(8, 24);
  Dataset ds = generate_dataset(cfg, 42);
  std::vector<double> census = class_census(ds.seqs, cfg.classes);
  REQUIRE(static_cast<int>(census.size()) == cfg.classes);
  double sum = 0, mx = 0, mn_present = 1.0;
  for (double f : census) {
    sum += f;
    mx = std::max(mx, f);
    if (f > 0) mn_present = std::min(mn_present, f);
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(mx > 0.30);              // commonest class over 30%
  CHECK(mn_present < 0.05);      // rarest class under 5%
  CHECK(mx / mn_present >= 20);  // at least 20:1 span

  // census is a pure function of (cfg, seed)
  Dataset ds2 = generate_dataset(cfg, 42);
  std::vector<double> census2 = class_census(ds2.seqs, cfg.classes);
  for (size_t i = 0; i < census.size(); ++i) CHECK(census[i] == census2[i]);
}

TEST_CASE("ground-truth warp agrees with the next frame's segmentation") {
  SceneConfig cfg = small_cfg(4, 8);
  Dataset ds = generate_dataset(cfg, 7);
  int64_t agree = 0, valid = 0;
  double worst = 1.0;
  for (const Sequence& seq : ds.seqs)
    for (size_t i = 0; i + 1 < seq.frames.size(); ++i) {
      const Frame& t0 = seq.frames[i];
      const Frame& t1 = seq.frames[i + 1];
      Tensor logits = one_hot_logits(t0.seg, cfg.classes);
      Se3Motion rel = relative_motion(t0.pose, t1.pose);
      auto [warped, vmask] = warp_logits(logits, t0.depth, rel, t0.intrinsics,
                                         WarpMode::forward_splat);
      SegMask pred = argmax_channels(warped);
      int64_t pair_agree = 0, pair_valid = 0;
      for (int y = 0; y < pred.h; ++y)
        for (int x = 0; x < pred.w; ++x) {
          if (vmask.at(vmask.offset(y, x)) == 0.0) continue;
          ++pair_valid;
          if (pred.at(y, x) == t1.seg.at(y, x)) ++pair_agree;
        }
      REQUIRE(pair_valid > 0);
      worst = std::min(worst, static_cast<double>(pair_agree) / pair_valid);
      agree += pair_agree;
      valid += pair_valid;
    }
  CHECK(static_cast<double>(agree) / valid >= 0.95);
  CHECK(worst >= 0.75);  // single pairs dip at disocclusions, never collapse
}

TEST_CASE("depth maps are geometrically consistent across adjacent frames") {
  SceneConfig cfg = small_cfg(3, 6);
  Dataset ds = generate_dataset(cfg, 13);
  int64_t ok = 0, checked = 0;
  for (const Sequence& seq : ds.seqs)
    for (size_t i = 0; i + 1 < seq.frames.size(); ++i) {
      const Frame& t0 = seq.frames[i];
      const Frame& t1 = seq.frames[i + 1];
      Se3Motion fwd = relative_motion(t0.pose, t1.pose);
      Se3Motion bwd = relative_motion(t1.pose, t0.pose);
      const int hw = cfg.image_size;
      auto boundary = [&](const SegMask& seg, int y, int x) {
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= hw || nx >= hw) return true;
            if (seg.at(ny, nx) != seg.at(y, x)) return true;
          }
        return false;
      };
      for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x) {
          if (boundary(t0.seg, y, x)) continue;
          Eigen::Vector3d p = fwd.apply(
              unproject(x, y, t0.depth.values.at(t0.depth.values.offset(y, x)), t0.intrinsics));
          Projection pr = project(p, t1.intrinsics);
          if (!pr.in_front()) continue;
          const int qx = static_cast<int>(std::lround(pr.u));
          const int qy = static_cast<int>(std::lround(pr.v));
          if (qx < 0 || qy < 0 || qx >= hw || qy >= hw) continue;
          if (boundary(t1.seg, qy, qx)) continue;
          ++checked;
          // round trip through frame t+1's own depth lands within half a pixel
          Eigen::Vector3d q = bwd.apply(unproject(
              qx, qy, t1.depth.values.at(t1.depth.values.offset(qy, qx)), t1.intrinsics));
          Projection back = project(q, t0.intrinsics);
          const double du = back.u - x, dv = back.v - y;
          // the landed pixel center is up to 0.5 px from the projection; its
          // surface point reprojects within the same bound plus depth slope
          if (std::sqrt(du * du + dv * dv) <= 1.0) ++ok;
        }
    }
  REQUIRE(checked > 10000);
  CHECK(static_cast<double>(ok) / checked >= 0.99);
}

TEST_CASE("scene config validation rejects bad settings") {
  SceneConfig c1;
  c1.classes = 2;  // the room alone uses wall/floor/ceiling
  CHECK_THROWS_AS(c1.validate(), ConfigError);
  SceneConfig c2;
  c2.room_w = -1;
  CHECK_THROWS_AS(c2.validate(), ConfigError);
  SceneConfig c3;
  c3.min_objects = 5;
  c3.max_objects = 2;
  CHECK_THROWS_AS(c3.validate(), ConfigError);
  SceneConfig c4;
  c4.texture_noise = 1.5;
  CHECK_THROWS_AS(c4.validate(), ConfigError);
  CHECK_NOTHROW(SceneConfig{}.validate());
}

TEST_CASE("dataset write/load round trip preserves frames byte for byte") {
  SceneConfig cfg = small_cfg(2, 3);
  Dataset ds = generate_dataset(cfg, 99);
  fs::path dir = fs::temp_directory_path() / "stc_test_dataset";
  fs::remove_all(dir);
  write_dataset(dir, ds);
  Dataset back = load_dataset(dir);
  CHECK(back.seed == ds.seed);
  CHECK(back.cfg.classes == ds.cfg.classes);
  REQUIRE(back.seqs.size() == ds.seqs.size());
  for (size_t s = 0; s < ds.seqs.size(); ++s) {
    REQUIRE(back.seqs[s].frames.size() == ds.seqs[s].frames.size());
    for (size_t i = 0; i < ds.seqs[s].frames.size(); ++i)
      CHECK(same_frame(back.seqs[s].frames[i], ds.seqs[s].frames[i]));
  }

  // a second write is byte-identical
  fs::path dir2 = fs::temp_directory_path() / "stc_test_dataset2";
  fs::remove_all(dir2);
  write_dataset(dir2, ds);
  for (auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    fs::path rel = fs::relative(entry.path(), dir);
    CHECK(slurp(entry.path()) == slurp(dir2 / rel));
  }
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

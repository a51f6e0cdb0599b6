#include "stc/scenegen.hpp"

#include <algorithm>
#include <cmath>

#include "stc/errors.hpp"

namespace stc {

namespace {

double to_unit(uint64_t v) { return static_cast<double>(v >> 11) * 0x1.0p-53; }

double lattice(uint64_t seed, int64_t ix, int64_t iy, int64_t iz) {
  const uint64_t key = static_cast<uint64_t>(ix) * 0x9e3779b97f4a7c15ULL ^
                       static_cast<uint64_t>(iy) * 0xc2b2ae3d27d4eb4fULL ^
                       static_cast<uint64_t>(iz) * 0x165667b19e3779f9ULL;
  return to_unit(mix_seed(seed, key));
}

double fade(double t) { return t * t * (3.0 - 2.0 * t); }

double vnoise(uint64_t seed, const Eigen::Vector3d& p) {
  const int64_t ix = static_cast<int64_t>(std::floor(p.x()));
  const int64_t iy = static_cast<int64_t>(std::floor(p.y()));
  const int64_t iz = static_cast<int64_t>(std::floor(p.z()));
  const double fx = fade(p.x() - ix), fy = fade(p.y() - iy), fz = fade(p.z() - iz);
  double c[2][2][2];
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int d = 0; d < 2; ++d) c[a][b][d] = lattice(seed, ix + a, iy + b, iz + d);
  auto lerp = [](double x, double y, double t) { return x + (y - x) * t; };
  const double x00 = lerp(c[0][0][0], c[1][0][0], fx);
  const double x10 = lerp(c[0][1][0], c[1][1][0], fx);
  const double x01 = lerp(c[0][0][1], c[1][0][1], fx);
  const double x11 = lerp(c[0][1][1], c[1][1][1], fx);
  return lerp(lerp(x00, x10, fy), lerp(x01, x11, fy), fz);
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

bool overlaps_xz(const SceneBox& a, const SceneBox& b, double gap) {
  return a.lo.x() - gap < b.hi.x() && b.lo.x() - gap < a.hi.x() && a.lo.z() - gap < b.hi.z() &&
         b.lo.z() - gap < a.hi.z();
}

Se3Motion make_pose(const Eigen::Vector3d& pos, double yaw, double pitch) {
  const Eigen::Vector3d f(std::cos(pitch) * std::sin(yaw), std::sin(pitch),
                          std::cos(pitch) * std::cos(yaw));
  const Eigen::Vector3d up(0, 1, 0);
  const Eigen::Vector3d r = f.cross(up).normalized();
  const Eigen::Vector3d d = f.cross(r);  // camera +y maps to world-down
  Se3Motion pose;
  pose.rotation.col(0) = r;
  pose.rotation.col(1) = d;
  pose.rotation.col(2) = f;
  pose.translation = pos;
  return pose;
}

constexpr int kWall = 0, kFloor = 1, kCeiling = 2;

}  // namespace

void SceneConfig::validate() const {
  // The room itself uses wall=0, floor=1, ceiling=2.
  if (classes < 3) throw ConfigError("classes must be >= 3");
  if (room_w <= 0 || room_d <= 0 || room_h <= 0) throw ConfigError("room extents must be positive");
  if (image_size < 8) throw ConfigError("image_size must be >= 8");
  if (min_objects < 0 || max_objects < min_objects) throw ConfigError("bad object count range");
  if (frames_per_scene < 1 || scenes < 1) throw ConfigError("need at least one frame and scene");
  if (focal_factor <= 0) throw ConfigError("focal_factor must be positive");
  if (max_step_rot <= 0 || max_step_trans <= 0) throw ConfigError("motion ceilings must be positive");
  if (extent_jitter < 0 || extent_jitter >= 0.5) throw ConfigError("extent_jitter out of range");
  if (texture_noise < 0 || texture_noise > 1) throw ConfigError("texture_noise out of range");
}

Intrinsics SceneConfig::intrinsics() const {
  Intrinsics k;
  k.fx = k.fy = focal_factor * image_size;
  k.cx = k.cy = (image_size - 1) / 2.0;
  return k;
}

SceneDescriptor generate_scene(const SceneConfig& cfg, uint64_t seed) {
  cfg.validate();
  SceneDescriptor s;
  s.seed = seed;

  Rng rng(mix_seed(seed, 0x5363656eULL));
  s.rw = cfg.room_w * (1.0 + cfg.extent_jitter * (2.0 * rng.uniform() - 1.0));
  s.rd = cfg.room_d * (1.0 + cfg.extent_jitter * (2.0 * rng.uniform() - 1.0));
  s.rh = cfg.room_h;

  // One palette per dataset: class appearance transfers to held-out scenes.
  Rng prng(mix_seed(cfg.palette_seed, 0x50616cULL));
  const double hue0 = prng.uniform();
  for (int c = 0; c < cfg.classes; ++c) {
    const double hue = hue0 + c * 0.618033988749895;
    const double sat = prng.uniform(0.26, 0.44);
    const double val = prng.uniform(0.42, 0.60);
    s.palette.push_back(hsv_to_rgb(hue, sat, val));
  }

  const int nobj_cls = std::max(0, cfg.object_classes());
  const int count = nobj_cls == 0 ? 0 : cfg.min_objects + rng.uniform_int(cfg.max_objects - cfg.min_objects + 1);
  const double margin = 0.3;
  for (int j = 0; j < count; ++j) {
    // First objects cover each class once; extras skew toward the large
    // (common) classes, keeping the rarity profile's frequency span.
    int ci;
    if (j < nobj_cls) {
      ci = j;
    } else {
      const double u = rng.uniform();
      ci = static_cast<int>(u * u * nobj_cls);
      ci = std::min(ci, nobj_cls - 1);
    }
    const double base = 1.05 * std::pow(cfg.rarity_decay, ci) + 0.17;
    bool placed = false;
    for (int attempt = 0; attempt < 80 && !placed; ++attempt) {
      // Later attempts shrink the footprint so crowded layouts stay solvable.
      const double relax = 1.0 / (1.0 + 0.02 * attempt);
      const double bw = base * relax * rng.uniform(0.75, 1.25);
      const double bd = base * relax * rng.uniform(0.75, 1.25);
      // Rare classes become tall thin pillars: frequency tracks footprint
      // while the class still crosses the camera's eye line often enough to
      // be learnable.
      const double bh = std::min(1.1, (0.5 + 0.16 * ci) * rng.uniform(0.9, 1.15));
      const double spanx = s.rw - 2 * margin - bw, spanz = s.rd - 2 * margin - bd;
      if (spanx <= 0 || spanz <= 0) continue;
      SceneBox box;
      const double x0 = margin + rng.uniform() * spanx;
      const double z0 = margin + rng.uniform() * spanz;
      box.lo = {x0, 0.0, z0};
      box.hi = {x0 + bw, bh, z0 + bd};
      box.cls = 3 + ci;
      bool clash = false;
      for (const SceneBox& other : s.boxes)
        if (overlaps_xz(box, other, 0.05)) clash = true;
      if (!clash) {
        s.boxes.push_back(box);
        placed = true;
      }
    }
    if (!placed) throw NumericError("scene generation: object placement unsatisfiable");
  }
  return s;
}

std::vector<Se3Motion> generate_trajectory(const SceneConfig& cfg, const SceneDescriptor& scene,
                                           uint64_t seed) {
  Rng rng(mix_seed(seed, 0x54726a65ULL));
  const double mx0 = 0.35, mx1 = scene.rw - 0.35;
  const double mz0 = 0.35, mz1 = scene.rd - 0.35;
  const double my0 = 1.22, my1 = std::min(1.58, scene.rh - 0.4);

  Eigen::Vector3d pos(scene.rw / 2 + (rng.uniform() - 0.5) * 0.5,
                      1.4 + (rng.uniform() - 0.5) * 0.12,
                      scene.rd / 2 + (rng.uniform() - 0.5) * 0.5);
  double yaw = rng.uniform() * 2.0 * M_PI;
  double pitch = rng.uniform(-0.38, -0.10);
  Eigen::Vector3d vel = Eigen::Vector3d::Zero();
  double yaw_v = 0.0, pitch_v = 0.0;

  std::vector<Se3Motion> out;
  out.reserve(static_cast<size_t>(cfg.frames_per_scene));
  for (int f = 0; f < cfg.frames_per_scene; ++f) {
    out.push_back(make_pose(pos, yaw, pitch));

    const double a = cfg.walk_smooth, b = 1.0 - cfg.walk_smooth;
    vel.x() = a * vel.x() + b * rng.normal() * cfg.walk_trans_sigma;
    vel.y() = a * vel.y() + b * rng.normal() * cfg.walk_trans_sigma * 0.35;
    vel.z() = a * vel.z() + b * rng.normal() * cfg.walk_trans_sigma;
    Eigen::Vector3d step = vel;
    const double cap = 0.9 * cfg.max_step_trans;
    if (step.norm() > cap) step *= cap / step.norm();
    pos += step;
    auto wall = [&](double& x, double lo, double hi, double& v) {
      if (x < lo) { x = lo; v = std::abs(v); }
      if (x > hi) { x = hi; v = -std::abs(v); }
    };
    wall(pos.x(), mx0, mx1, vel.x());
    wall(pos.y(), my0, my1, vel.y());
    wall(pos.z(), mz0, mz1, vel.z());

    yaw_v = a * yaw_v + b * rng.normal() * cfg.walk_rot_sigma;
    pitch_v = a * pitch_v + b * rng.normal() * cfg.walk_rot_sigma * 0.55;
    const double ryaw = std::clamp(yaw_v, -0.55 * cfg.max_step_rot, 0.55 * cfg.max_step_rot);
    const double rpitch = std::clamp(pitch_v, -0.28 * cfg.max_step_rot, 0.28 * cfg.max_step_rot);
    yaw += ryaw;
    const double np = std::clamp(pitch + rpitch, -0.5, 0.02);
    if (np != pitch + rpitch) pitch_v = 0.0;
    pitch = np;
  }
  return out;
}

Frame raycast_frame(const SceneDescriptor& scene, const Se3Motion& pose, const Intrinsics& k,
                    int size, int index, double texture_noise, double texture_freq) {
  check_rotation(pose.rotation);
  const Eigen::Vector3d o = pose.translation;
  const Eigen::Vector3d room_hi(scene.rw, scene.rh, scene.rd);
  for (int a = 0; a < 3; ++a)
    if (o[a] <= 0.0 || o[a] >= room_hi[a]) throw NumericError("raycast: camera outside the room");

  Frame fr;
  fr.rgb = Tensor::zeros({size, size, 3}, Dtype::F32);
  fr.depth.values = Tensor::zeros({size, size}, Dtype::F32);
  fr.seg.h = fr.seg.w = size;
  fr.seg.ids.resize(static_cast<size_t>(size) * size);
  fr.pose = pose;
  fr.intrinsics = k;
  fr.index = index;

  const Eigen::Vector3d light = Eigen::Vector3d(0.4, 0.75, 0.5).normalized();
  auto rgb = fr.rgb.data<float>();
  auto depth = fr.depth.values.data<float>();

  for (int v = 0; v < size; ++v) {
    for (int u = 0; u < size; ++u) {
      const Eigen::Vector3d dir_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      const Eigen::Vector3d d = pose.rotation * dir_cam;

      // Room shell: the exit face of the closed box always exists.
      double best = std::numeric_limits<double>::infinity();
      int cls = -1;
      Eigen::Vector3d normal = Eigen::Vector3d::Zero();
      for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12) continue;
        const double plane = d[a] > 0 ? room_hi[a] : 0.0;
        const double t = (plane - o[a]) / d[a];
        if (t > 0 && t < best) {
          best = t;
          normal = Eigen::Vector3d::Zero();
          normal[a] = d[a] > 0 ? -1.0 : 1.0;
          cls = a == 1 ? (d[a] > 0 ? kCeiling : kFloor) : kWall;
        }
      }
      if (cls < 0) throw NumericError("raycast: ray escaped the closed room");

      for (const SceneBox& box : scene.boxes) {
        double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
        int ax = -1;
        double sign = 0.0;
        bool miss = false;
        for (int a = 0; a < 3 && !miss; ++a) {
          if (std::abs(d[a]) < 1e-12) {
            if (o[a] < box.lo[a] || o[a] > box.hi[a]) miss = true;
            continue;
          }
          const double inv = 1.0 / d[a];
          double ta = (box.lo[a] - o[a]) * inv;
          double tb = (box.hi[a] - o[a]) * inv;
          double s = inv > 0 ? -1.0 : 1.0;
          if (ta > tb) std::swap(ta, tb);
          if (ta > t0) {
            t0 = ta;
            ax = a;
            sign = s;
          }
          t1 = std::min(t1, tb);
          if (t0 > t1) miss = true;
        }
        if (!miss && ax >= 0 && t0 > 1e-9 && t0 < best) {
          best = t0;
          cls = box.cls;
          normal = Eigen::Vector3d::Zero();
          normal[ax] = sign;
        }
      }

      const Eigen::Vector3d hit = o + best * d;
      const double shade = 0.55 + 0.45 * std::max(0.0, normal.dot(light));
      const double n1 = vnoise(scene.seed, hit * texture_freq);
      const double n2 = vnoise(mix_seed(scene.seed, 0x6f637432ULL), hit * texture_freq * 2.07);
      const double tex = 1.0 + texture_noise * 2.0 * (0.65 * n1 + 0.35 * n2 - 0.5);
      const auto& base = scene.palette[static_cast<size_t>(cls)];

      const int64_t pix = static_cast<int64_t>(v) * size + u;
      for (int c = 0; c < 3; ++c)
        rgb[pix * 3 + c] = static_cast<float>(std::clamp(base[static_cast<size_t>(c)] * shade * tex, 0.0, 1.0));
      depth[pix] = static_cast<float>(best);  // dir_cam.z == 1, so t is camera-z depth
      fr.seg.ids[static_cast<size_t>(pix)] = cls;
    }
  }
  return fr;
}

Sequence generate_sequence(const SceneConfig& cfg, uint64_t seed) {
  Sequence seq;
  seq.seed = seed;
  seq.scene = generate_scene(cfg, seed);
  const Intrinsics k = cfg.intrinsics();
  const auto poses = generate_trajectory(cfg, seq.scene, mix_seed(seed, 0x74726b31ULL));
  seq.frames.reserve(poses.size());
  for (size_t i = 0; i < poses.size(); ++i)
    seq.frames.push_back(raycast_frame(seq.scene, poses[i], k, cfg.image_size,
                                       static_cast<int>(i), cfg.texture_noise,
                                       cfg.texture_freq));
  return seq;
}

std::vector<double> class_census(const std::vector<Sequence>& seqs, int classes) {
  std::vector<double> counts(static_cast<size_t>(classes), 0.0);
  double total = 0.0;
  for (const Sequence& s : seqs)
    for (const Frame& f : s.frames)
      for (int32_t id : f.seg.ids) {
        if (id < 0 || id >= classes) throw ContractError("census: class id out of range");
        counts[static_cast<size_t>(id)] += 1.0;
        total += 1.0;
      }
  if (total > 0)
    for (double& c : counts) c /= total;
  return counts;
}

}  // namespace stc

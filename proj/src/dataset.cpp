#include "stc/dataset.hpp"

#include <cmath>
#include <fstream>

#include "stc/errors.hpp"
#include "stc/tensor_io.hpp"

namespace stc {

namespace {

namespace fs = std::filesystem;

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

std::string scene_dir_name(int i) { return "scene_" + zero_pad(i, 3); }

nlohmann::json pose_to_json(const Se3Motion& m) {
  std::vector<double> r(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[static_cast<size_t>(i) * 3 + j] = m.rotation(i, j);
  return nlohmann::json{{"r", r},
                        {"t", std::vector<double>{m.translation.x(), m.translation.y(),
                                                  m.translation.z()}}};
}

Se3Motion pose_from_json(const nlohmann::json& j) {
  const auto r = j.at("r").get<std::vector<double>>();
  const auto t = j.at("t").get<std::vector<double>>();
  if (r.size() != 9 || t.size() != 3) throw IoError("manifest: malformed pose");
  Se3Motion m;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) m.rotation(i, k) = r[static_cast<size_t>(i) * 3 + k];
  m.translation = Eigen::Vector3d(t[0], t[1], t[2]);
  return m;
}

Tensor seg_to_tensor(const SegMask& seg) {
  Tensor t = Tensor::zeros({seg.h, seg.w}, Dtype::F32);
  auto d = t.data<float>();
  for (size_t i = 0; i < seg.ids.size(); ++i) d[i] = static_cast<float>(seg.ids[i]);
  return t;
}

SegMask seg_from_tensor(const Tensor& t) {
  if (t.rank() != 2) throw IoError("seg tensor must be rank 2");
  SegMask seg;
  seg.h = t.dim(0);
  seg.w = t.dim(1);
  seg.ids.resize(static_cast<size_t>(seg.h) * seg.w);
  for (int64_t i = 0; i < t.size(); ++i)
    seg.ids[static_cast<size_t>(i)] = static_cast<int32_t>(std::lround(t.at(i)));
  return seg;
}

}  // namespace

int Dataset::frames_total() const {
  int n = 0;
  for (const Sequence& s : seqs) n += static_cast<int>(s.frames.size());
  return n;
}

int Dataset::eval_scene_start(double eval_fraction) const {
  const int n = static_cast<int>(seqs.size());
  if (n < 2) return n;  // degenerate dataset: nothing held out
  int n_eval = static_cast<int>(std::lround(eval_fraction * n));
  n_eval = std::clamp(n_eval, 1, n - 1);
  return n - n_eval;
}

Dataset generate_dataset(const SceneConfig& cfg, uint64_t seed) {
  cfg.validate();
  Dataset ds;
  ds.cfg = cfg;
  ds.seed = seed;
  ds.seqs.reserve(static_cast<size_t>(cfg.scenes));
  for (int i = 0; i < cfg.scenes; ++i)
    ds.seqs.push_back(generate_sequence(cfg, mix_seed(seed, static_cast<uint64_t>(i))));
  return ds;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory '" + dir.string() + "': " + ec.message());

  nlohmann::json scenes = nlohmann::json::array();
  for (size_t i = 0; i < ds.seqs.size(); ++i) {
    const Sequence& seq = ds.seqs[i];
    const std::string sdir = scene_dir_name(static_cast<int>(i));
    fs::create_directories(dir / sdir, ec);
    if (ec) throw IoError("cannot create scene directory: " + ec.message());

    nlohmann::json boxes = nlohmann::json::array();
    for (const SceneBox& b : seq.scene.boxes)
      boxes.push_back({{"cls", b.cls},
                       {"lo", std::vector<double>{b.lo.x(), b.lo.y(), b.lo.z()}},
                       {"hi", std::vector<double>{b.hi.x(), b.hi.y(), b.hi.z()}}});
    nlohmann::json poses = nlohmann::json::array();
    for (const Frame& f : seq.frames) poses.push_back(pose_to_json(f.pose));

    const Intrinsics k = seq.frames.empty() ? ds.cfg.intrinsics() : seq.frames.front().intrinsics;
    scenes.push_back({{"dir", sdir},
                      {"seed", seq.seed},
                      {"frames", seq.frames.size()},
                      {"room", std::vector<double>{seq.scene.rw, seq.scene.rh, seq.scene.rd}},
                      {"palette", seq.scene.palette},
                      {"boxes", boxes},
                      {"intrinsics", {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}}},
                      {"poses", poses}});

    for (size_t fi = 0; fi < seq.frames.size(); ++fi) {
      const Frame& f = seq.frames[fi];
      const std::string stem = zero_pad(static_cast<int>(fi), 4) + ".stct";
      write_stct(dir / sdir / ("rgb_" + stem), f.rgb);
      write_stct(dir / sdir / ("depth_" + stem), f.depth.values);
      write_stct(dir / sdir / ("seg_" + stem), seg_to_tensor(f.seg));
    }
  }

  nlohmann::json manifest{{"format", "stconsist-dataset"},
                          {"version", 1},
                          {"seed", ds.seed},
                          {"config", ds.cfg},
                          {"scenes", scenes}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write manifest in '" + dir.string() + "'");
  out << manifest.dump(2) << "\n";
  if (!out) throw IoError("manifest write failed");
}

Dataset load_dataset(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) throw IoError("no manifest.json in '" + dir.string() + "'");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("manifest parse error: ") + e.what());
  }
  if (manifest.value("format", "") != "stconsist-dataset")
    throw IoError("not a dataset manifest: '" + (dir / "manifest.json").string() + "'");

  Dataset ds;
  try {
    manifest.at("config").get_to(ds.cfg);
    ds.seed = manifest.at("seed").get<uint64_t>();
    for (const nlohmann::json& js : manifest.at("scenes")) {
      Sequence seq;
      seq.seed = js.at("seed").get<uint64_t>();
      const auto room = js.at("room").get<std::vector<double>>();
      if (room.size() != 3) throw IoError("manifest: malformed room extents");
      seq.scene.rw = room[0];
      seq.scene.rh = room[1];
      seq.scene.rd = room[2];
      seq.scene.seed = seq.seed;
      js.at("palette").get_to(seq.scene.palette);
      for (const nlohmann::json& jb : js.at("boxes")) {
        SceneBox b;
        const auto lo = jb.at("lo").get<std::vector<double>>();
        const auto hi = jb.at("hi").get<std::vector<double>>();
        if (lo.size() != 3 || hi.size() != 3) throw IoError("manifest: malformed box");
        b.lo = Eigen::Vector3d(lo[0], lo[1], lo[2]);
        b.hi = Eigen::Vector3d(hi[0], hi[1], hi[2]);
        b.cls = jb.at("cls").get<int>();
        seq.scene.boxes.push_back(b);
      }
      Intrinsics k;
      k.fx = js.at("intrinsics").at("fx").get<double>();
      k.fy = js.at("intrinsics").at("fy").get<double>();
      k.cx = js.at("intrinsics").at("cx").get<double>();
      k.cy = js.at("intrinsics").at("cy").get<double>();

      const int nframes = js.at("frames").get<int>();
      const auto& poses = js.at("poses");
      if (static_cast<int>(poses.size()) != nframes) throw IoError("manifest: pose count mismatch");
      const fs::path sdir = dir / js.at("dir").get<std::string>();
      for (int fi = 0; fi < nframes; ++fi) {
        Frame f;
        const std::string stem = zero_pad(fi, 4) + ".stct";
        f.rgb = read_stct(sdir / ("rgb_" + stem));
        f.depth.values = read_stct(sdir / ("depth_" + stem));
        f.seg = seg_from_tensor(read_stct(sdir / ("seg_" + stem)));
        if (f.rgb.rank() != 3 || f.rgb.dim(2) != 3 || f.rgb.dim(0) != f.depth.values.dim(0) ||
            f.rgb.dim(1) != f.depth.values.dim(1))
          throw IoError("frame tensor shapes disagree in " + sdir.string());
        f.pose = pose_from_json(poses[static_cast<size_t>(fi)]);
        check_rotation(f.pose.rotation);
        f.intrinsics = k;
        f.index = fi;
        seq.frames.push_back(std::move(f));
      }
      ds.seqs.push_back(std::move(seq));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("manifest field error: ") + e.what());
  }
  return ds;
}

}  // namespace stc

#include "stc/warp.hpp"

#include <cmath>
#include <vector>

#include "stc/errors.hpp"

namespace stc {

namespace {

constexpr double kSplatEps = 1e-4;

// Round-trip float error can leave an integer landing at u +/- 1e-13, which
// would smear one-pixel-exact warps across two cells; snap within 1e-9.
double snap(double x) {
  const double r = std::round(x);
  return std::abs(x - r) < 1e-9 ? r : x;
}

struct Corner {
  int x, y;
  double w;
};

// Bilinear footprint of a continuous landing point. Only meaningful when
// (u,v) lies in [0, w-1] x [0, h-1]; then every nonzero-weight corner is
// in-bounds and the weights sum to exactly 1.
int footprint(double u, double v, int h, int w, Corner out[4]) {
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const double fx = u - x0, fy = v - y0;
  int n = 0;
  const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy);
  const double w01 = (1 - fx) * fy, w11 = fx * fy;
  auto push = [&](int x, int y, double wt) {
    if (wt > 0.0 && x >= 0 && x < w && y >= 0 && y < h) out[n++] = {x, y, wt};
  };
  push(x0, y0, w00);
  push(x0 + 1, y0, w10);
  push(x0, y0 + 1, w01);
  push(x0 + 1, y0 + 1, w11);
  return n;
}

}  // namespace

WarpPlan make_warp_plan(const DepthMap& depth, const Se3Motion& motion, const Intrinsics& k,
                        WarpMode mode) {
  check_depth(depth);
  check_rotation(motion.rotation);
  const int h = depth.h(), w = depth.w();

  WarpPlan plan;
  plan.map.src_h = plan.map.dst_h = h;
  plan.map.src_w = plan.map.dst_w = w;
  plan.validity = Tensor::zeros({h, w}, Dtype::F32);
  auto valid = plan.validity.data<float>();

  if (mode == WarpMode::forward_splat) {
    std::vector<double> acc_w(static_cast<size_t>(h) * w, 0.0);
    Corner c[4];
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const double d = depth.values.at(depth.values.offset(v, u));
        const Projection p = project(motion.apply(unproject(u, v, d, k)), k);
        if (!p.in_front()) continue;
        const double pu = snap(p.u), pv = snap(p.v);
        if (pu < 0.0 || pu > w - 1 || pv < 0.0 || pv > h - 1) continue;
        ++plan.valid_src_count;
        const int n = footprint(pu, pv, h, w, c);
        const int32_t s = static_cast<int32_t>(v) * w + u;
        for (int i = 0; i < n; ++i) {
          const int32_t dst = c[i].y * w + c[i].x;
          plan.map.add(dst, s, c[i].w);
          acc_w[static_cast<size_t>(dst)] += c[i].w;
          plan.pre_norm_mass += c[i].w;
        }
      }
    }
    // Normalize accumulated logits by accumulated weight; drop entries that
    // land on under-covered pixels so invalid outputs stay exactly zero.
    size_t out = 0;
    for (size_t i = 0; i < plan.map.nnz(); ++i) {
      const double aw = acc_w[static_cast<size_t>(plan.map.dst[i])];
      if (aw <= kSplatEps) continue;
      plan.map.dst[out] = plan.map.dst[i];
      plan.map.src[out] = plan.map.src[i];
      plan.map.w[out] = plan.map.w[i] / aw;
      ++out;
    }
    plan.map.dst.resize(out);
    plan.map.src.resize(out);
    plan.map.w.resize(out);
    for (int i = 0; i < h * w; ++i) valid[static_cast<size_t>(i)] = acc_w[static_cast<size_t>(i)] > kSplatEps ? 1.0f : 0.0f;
  } else {
    Corner c[4];
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        const double d = depth.values.at(depth.values.offset(v, u));
        const Projection p = project(motion.apply(unproject(u, v, d, k)), k);
        if (!p.in_front()) continue;
        const double pu = snap(p.u), pv = snap(p.v);
        if (pu < 0.0 || pu > w - 1 || pv < 0.0 || pv > h - 1) continue;
        const int32_t dst = static_cast<int32_t>(v) * w + u;
        const int n = footprint(pu, pv, h, w, c);
        for (int i = 0; i < n; ++i) plan.map.add(dst, c[i].y * w + c[i].x, c[i].w);
        valid[static_cast<size_t>(dst)] = 1.0f;
      }
    }
  }
  return plan;
}

std::pair<Tensor, Tensor> warp_logits(const Tensor& src, const DepthMap& depth,
                                      const Se3Motion& motion, const Intrinsics& k,
                                      WarpMode mode) {
  if (src.rank() != 3) throw ShapeError("warp_logits expects H x W x C, got " + src.shape_str());
  if (src.dim(0) != depth.h() || src.dim(1) != depth.w())
    throw ShapeError("logits " + src.shape_str() + " do not match depth " +
                     depth.values.shape_str());
  const WarpPlan plan = make_warp_plan(depth, motion, k, mode);
  Tensor warped = apply_pixel_map(plan.map, src);
  return {std::move(warped), plan.validity.astype(src.dtype())};
}

}  // namespace stc

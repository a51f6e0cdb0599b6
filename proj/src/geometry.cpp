#include "stc/geometry.hpp"

#include <cmath>

#include "stc/errors.hpp"

namespace stc {

void check_rotation(const Eigen::Matrix3d& r) {
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-6)
    throw ContractError("rotation not orthonormal (max |R'R - I| = " + std::to_string(ortho) + ")");
  if (std::abs(r.determinant() - 1.0) > 1e-6)
    throw ContractError("rotation determinant != 1");
}

void check_depth(const DepthMap& d) {
  if (d.values.rank() != 2) throw ShapeError("depth map must be rank 2, got " + d.values.shape_str());
  bool ok = true;
  dispatch(d.values.dtype(), [&](auto tag) {
    using T = decltype(tag);
    for (T v : d.values.data<T>())
      if (!(v > T(0)) || !std::isfinite(static_cast<double>(v))) ok = false;
  });
  if (!ok) throw ContractError("depth map contains nonpositive or nonfinite values");
}

Eigen::Vector3d unproject(double u, double v, double depth, const Intrinsics& k) {
  if (!(depth > 0.0)) throw ContractError("unproject requires depth > 0");
  return {(u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth};
}

Projection project(const Eigen::Vector3d& p, const Intrinsics& k) {
  Projection out;
  out.z = p.z();
  if (p.z() != 0.0) {
    out.u = k.fx * p.x() / p.z() + k.cx;
    out.v = k.fy * p.y() / p.z() + k.cy;
  }
  return out;
}

Se3Motion se3_compose(const Se3Motion& a, const Se3Motion& b) {
  check_rotation(a.rotation);
  check_rotation(b.rotation);
  Se3Motion out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

Se3Motion se3_inverse(const Se3Motion& m) {
  check_rotation(m.rotation);
  Se3Motion out;
  out.rotation = m.rotation.transpose();
  out.translation = -(out.rotation * m.translation);
  return out;
}

Se3Motion relative_motion(const Se3Motion& pose_t, const Se3Motion& pose_t1) {
  return se3_compose(se3_inverse(pose_t1), pose_t);
}

std::pair<Se3Motion, DepthMap> perturb(const Se3Motion& motion, const DepthMap& depth,
                                       double sigma_rot, double sigma_trans,
                                       double sigma_depth, uint64_t seed) {
  if (sigma_rot < 0 || sigma_trans < 0 || sigma_depth < 0)
    throw ContractError("perturb sigmas must be >= 0");
  Rng rng(seed);
  Se3Motion out = motion;

  const auto ax = rng.unit_vector();
  const Eigen::Vector3d axis(ax[0], ax[1], ax[2]);
  const double angle = rng.normal() * sigma_rot;
  out.rotation = Eigen::AngleAxisd(angle, axis).toRotationMatrix() * motion.rotation;
  for (int i = 0; i < 3; ++i) out.translation[i] += rng.normal() * sigma_trans;

  DepthMap dout{depth.values};
  const double scale = std::max(1.0 + rng.normal() * sigma_depth, 1e-3);
  dispatch(dout.values.dtype(), [&](auto tag) {
    using T = decltype(tag);
    for (T& v : dout.values.data<T>()) v = static_cast<T>(v * scale);
  });
  return {out, dout};
}

}  // namespace stc

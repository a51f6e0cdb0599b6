#pragma once

#include <Eigen/Dense>

#include "stc/rng.hpp"
#include "stc/tensor.hpp"

namespace stc {

struct Intrinsics {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
};

// Rigid motion, p_dst = R * p_src + t.
struct Se3Motion {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  static Se3Motion identity() { return {}; }
  static Se3Motion translate(double x, double y, double z) {
    Se3Motion m;
    m.translation = Eigen::Vector3d(x, y, z);
    return m;
  }
  static Se3Motion rotate(const Eigen::Vector3d& axis, double angle) {
    Se3Motion m;
    m.rotation = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
    return m;
  }
};

struct DepthMap {
  Tensor values;  // H x W, meters, > 0

  int h() const { return values.rank() > 0 ? values.dim(0) : 0; }
  int w() const { return values.rank() > 1 ? values.dim(1) : 0; }
};

struct ValidityMask {
  Tensor values;  // H x W in {0,1}
};

// Throws ContractError when R is not orthonormal with det 1 (tol 1e-6).
void check_rotation(const Eigen::Matrix3d& r);
// Throws ContractError when any depth value is nonpositive or nonfinite.
void check_depth(const DepthMap& d);

Eigen::Vector3d unproject(double u, double v, double depth, const Intrinsics& k);

struct Projection {
  double u = 0.0, v = 0.0, z = 0.0;
  bool in_front() const { return z > 0.0; }
};
Projection project(const Eigen::Vector3d& p, const Intrinsics& k);

// compose(a, b) applies b first: p -> a(b(p)).
Se3Motion se3_compose(const Se3Motion& a, const Se3Motion& b);
Se3Motion se3_inverse(const Se3Motion& m);
// Poses are camera-to-world; returns M_{t,t+1} = inverse(pose_t1) o pose_t.
Se3Motion relative_motion(const Se3Motion& pose_t, const Se3Motion& pose_t1);

// Emulates estimation error of learned motion/depth: rotation composed with a
// random axis-angle (angle ~ N(0, sigma_rot)), translation jittered per axis,
// depth rescaled by a single positive factor 1 + N(0, sigma_depth).
std::pair<Se3Motion, DepthMap> perturb(const Se3Motion& motion, const DepthMap& depth,
                                       double sigma_rot, double sigma_trans,
                                       double sigma_depth, uint64_t seed);

}  // namespace stc

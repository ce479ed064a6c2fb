#include "mopd/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace mopd {

double diag_length(const Vec3& extent) {
  if (extent.minCoeff() <= 0.0)
    throw Error(Err::invalid_geometry, "object extent components must be positive");
  return extent.norm();
}

BBox mask_to_bbox(const MaskImage& mask) {
  int x0 = mask.w, y0 = mask.h, x1 = -1, y1 = -1;
  for (int y = 0; y < mask.h; ++y) {
    const uint8_t* row = &mask.data[size_t(y) * mask.w];
    for (int x = 0; x < mask.w; ++x) {
      if (!row[x]) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) throw Error(Err::empty_mask, "mask_to_bbox: empty mask");
  return {x0, y0, x1, y1};
}

double iou(const MaskImage& a, const MaskImage& b) {
  if (!a.same_shape(b) || a.c != 1)
    throw Error(Err::invalid_input, "iou: mask shapes differ");
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    bool fa = a.data[i] != 0, fb = b.data[i] != 0;
    inter += fa && fb;
    uni += fa || fb;
  }
  if (uni == 0) throw Error(Err::undefined_iou, "iou: both masks empty");
  return double(inter) / double(uni);
}

double iou(const BBox& a, const BBox& b) {
  long long ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min) + 1;
  long long iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min) + 1;
  long long inter = (ix > 0 && iy > 0) ? ix * iy : 0;
  long long uni = a.area() + b.area() - inter;
  if (uni <= 0) throw Error(Err::undefined_iou, "iou: degenerate boxes");
  return double(inter) / double(uni);
}

MotionParams transform_motion(const MotionParams& params, const Pose& pose) {
  if (std::abs(params.axis.norm() - 1.0) > 1e-6)
    throw Error(Err::invalid_input, "transform_motion: axis is not unit length");
  if (std::abs(pose.rotation.norm() - 1.0) > 1e-6)
    throw Error(Err::invalid_input, "transform_motion: quaternion is not unit length");
  MotionParams out = params;
  out.axis = (pose.rotation * params.axis).normalized();
  if (params.has_origin) out.origin = pose.apply(params.origin);
  return out;
}

Eigen::Matrix3d pose_rotation_matrix(const Pose& pose) {
  return pose.rotation.toRotationMatrix();
}

Pose pose_from_matrix(const Eigen::Matrix3d& rot, const Vec3& t) {
  Pose p;
  p.rotation = Quat(rot).normalized();
  p.translation = t;
  return p;
}

double point_to_axis_distance(const Vec3& point, const Vec3& origin, const Vec3& axis) {
  return (point - origin).cross(axis).norm();
}

double angle_between(const Vec3& a, const Vec3& b) {
  double na = a.norm(), nb = b.norm();
  if (na < 1e-12 || nb < 1e-12)
    throw Error(Err::invalid_input, "angle_between: zero-length vector");
  double c = a.dot(b) / (na * nb);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace mopd

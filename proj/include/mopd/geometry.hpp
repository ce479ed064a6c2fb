#pragma once

#include "mopd/core.hpp"

namespace mopd {

// Euclidean norm of the parent object's 3D bounding-box extent.
double diag_length(const Vec3& extent);
inline double diag_length(const OpenablePart& part) { return diag_length(part.object_extent); }

// Tight axis-aligned box of the foreground pixels. Throws on empty masks.
BBox mask_to_bbox(const MaskImage& mask);

// Intersection over union. Throws when the union is empty (masks) or the
// kinds are shape-incompatible.
double iou(const MaskImage& a, const MaskImage& b);
double iou(const BBox& a, const BBox& b);

// Maps object-frame motion parameters to the camera frame: the axis is
// rotated, the origin (when present) rotated then translated. Inputs must be
// unit within 1e-6.
MotionParams transform_motion(const MotionParams& params, const Pose& pose);

// Pose <-> rotation matrix helpers.
Eigen::Matrix3d pose_rotation_matrix(const Pose& pose);
Pose pose_from_matrix(const Eigen::Matrix3d& rot, const Vec3& t);

// Distance from a point to the line {origin + t*axis}. `axis` must be unit.
double point_to_axis_distance(const Vec3& point, const Vec3& origin, const Vec3& axis);

// Angle between two nonzero vectors, in [0, pi].
double angle_between(const Vec3& a, const Vec3& b);

}  // namespace mopd

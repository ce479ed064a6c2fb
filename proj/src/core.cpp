#include "mopd/core.hpp"

#include "mopd/geometry.hpp"

namespace mopd {

MotionType motion_type_from_string(const std::string& s) {
  if (s == "prismatic") return MotionType::prismatic;
  if (s == "revolute") return MotionType::revolute;
  throw Error(Err::invalid_input, "unknown motion type: " + s);
}

PartLabel part_label_from_string(const std::string& s) {
  if (s == "drawer") return PartLabel::drawer;
  if (s == "door") return PartLabel::door;
  if (s == "lid") return PartLabel::lid;
  throw Error(Err::invalid_input, "unknown part label: " + s);
}

MotionParams MotionParams::prismatic_axis(const Vec3& axis) {
  double n = axis.norm();
  if (n < 1e-12) throw Error(Err::invalid_input, "motion axis has zero length");
  MotionParams m;
  m.axis = axis / n;
  m.origin = Vec3::Zero();
  m.has_origin = false;
  return m;
}

MotionParams MotionParams::revolute(const Vec3& axis, const Vec3& origin) {
  MotionParams m = prismatic_axis(axis);
  m.origin = origin;
  m.has_origin = true;
  return m;
}

void OpenablePart::validate() const {
  bool fg = false;
  for (uint8_t v : mask.data) {
    if (v) { fg = true; break; }
  }
  if (!fg) throw Error(Err::empty_mask, "part mask has no foreground pixel");
  if (mask_to_bbox(mask) != bbox)
    throw Error(Err::invalid_input, "bbox is not the tight box of the mask");
  if (std::abs(motion.axis.norm() - 1.0) > 1e-6)
    throw Error(Err::invalid_input, "motion axis is not unit length");
  if (motion.has_origin != (motion_type == MotionType::revolute))
    throw Error(Err::invalid_input, "origin presence must match motion type");
  if (std::abs(pose.rotation.norm() - 1.0) > 1e-6)
    throw Error(Err::invalid_input, "pose quaternion is not unit length");
  if (object_extent.minCoeff() <= 0.0)
    throw Error(Err::invalid_geometry, "object extent must be positive");
}

PartLabel PartPrediction::predicted_label() const {
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (class_probs[i] > class_probs[best]) best = i;
  return PartLabel(best);
}

MotionType PartPrediction::predicted_motion() const {
  return motion_probs[1] > motion_probs[0] ? MotionType::revolute : MotionType::prismatic;
}

}  // namespace mopd

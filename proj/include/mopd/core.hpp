#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mopd {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Quat = Eigen::Quaterniond;

enum class Err {
  invalid_input,
  invalid_geometry,
  empty_mask,
  undefined_iou,
  generation_failed,
  training_failed,
  infeasible,
  invalid_dataset,
  io,
  config,
};

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

enum class MotionType : uint8_t { prismatic = 0, revolute = 1 };
enum class PartLabel : uint8_t { drawer = 0, door = 1, lid = 2 };

inline const char* to_string(MotionType m) {
  return m == MotionType::prismatic ? "prismatic" : "revolute";
}
inline const char* to_string(PartLabel l) {
  switch (l) {
    case PartLabel::drawer: return "drawer";
    case PartLabel::door: return "door";
    default: return "lid";
  }
}
MotionType motion_type_from_string(const std::string& s);
PartLabel part_label_from_string(const std::string& s);

// Row-major interleaved raster. `c` channels per pixel.
template <class T>
struct Image {
  int h = 0, w = 0, c = 1;
  std::vector<T> data;

  Image() = default;
  Image(int h_, int w_, int c_ = 1, T fill = T{}) : h(h_), w(w_), c(c_), data(size_t(h_) * w_ * c_, fill) {}

  T& at(int y, int x, int ch = 0) { return data[(size_t(y) * w + x) * c + ch]; }
  const T& at(int y, int x, int ch = 0) const { return data[(size_t(y) * w + x) * c + ch]; }
  size_t pixels() const { return size_t(h) * w; }
  bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }
  bool operator==(const Image& o) const { return h == o.h && w == o.w && c == o.c && data == o.data; }
};

using MaskImage = Image<uint8_t>;    // 0 = background, 1 = foreground
using RgbImage = Image<uint8_t>;     // c = 3
using FloatImage = Image<float>;
using IdImage = Image<uint16_t>;     // instance ids, 0 = background

// Inclusive pixel box: width = x_max - x_min + 1.
struct BBox {
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  bool operator==(const BBox&) const = default;
  long long area() const { return (long long)(x_max - x_min + 1) * (y_max - y_min + 1); }
};

// Rigid transform, object frame -> camera frame. Camera convention:
// +x right, +y down, +z into the scene.
struct Pose {
  Quat rotation = Quat::Identity();  // unit quaternion
  Vec3 translation = Vec3::Zero();   // meters

  static Pose identity() { return {}; }
  Pose inverse() const {
    Pose p;
    p.rotation = rotation.conjugate();
    p.translation = -(p.rotation * translation);
    return p;
  }
  Vec3 apply(const Vec3& v) const { return rotation * v + translation; }
  Vec3 rotate(const Vec3& v) const { return rotation * v; }
};

// Motion axis (unit direction) plus origin point for revolute parts.
// Prismatic parts carry a zero sentinel origin with has_origin = false.
struct MotionParams {
  Vec3 axis = Vec3::UnitZ();
  Vec3 origin = Vec3::Zero();
  bool has_origin = false;

  static MotionParams prismatic_axis(const Vec3& axis);
  static MotionParams revolute(const Vec3& axis, const Vec3& origin);
};

struct OpenablePart {
  MaskImage mask;
  BBox bbox;
  PartLabel label = PartLabel::drawer;
  MotionType motion_type = MotionType::prismatic;
  MotionParams motion;
  Pose pose;                         // parent object pose, object -> camera
  Vec3 object_extent = Vec3::Ones(); // parent object 3D extent, meters

  void validate() const;
};

struct PartPrediction {
  Vec4 class_probs = Vec4::Zero();        // drawer, door, lid, no-object
  Eigen::Vector2d motion_probs = Eigen::Vector2d::Zero();  // prismatic, revolute
  FloatImage mask_logits;                  // full-resolution logits
  Vec3 axis = Vec3::UnitZ();               // camera frame, unit
  Vec3 origin = Vec3::Zero();              // camera frame
  Pose pose;
  double confidence = 0.0;                 // max over the three part classes

  PartLabel predicted_label() const;
  MotionType predicted_motion() const;
};

struct PredictionSet {
  std::string image_id;
  std::vector<PartPrediction> items;
};

struct CameraIntrinsics {
  double fx = 128, fy = 128, cx = 63.5, cy = 63.5;
  // Projects a camera-frame point (z > 0) to pixel coordinates.
  Eigen::Vector2d project(const Vec3& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }
};

}  // namespace mopd

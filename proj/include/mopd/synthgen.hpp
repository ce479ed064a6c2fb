#pragma once

#include <array>
#include <string>
#include <vector>

#include "mopd/core.hpp"

namespace mopd::synth {

// Cabinet grammar: extent ranges (meters), panel layout weights, placement.
struct GrammarParams {
  double width_min = 0.6, width_max = 1.3;
  double height_min = 0.7, height_max = 1.6;
  double depth_min = 0.35, depth_max = 0.65;
  double z_min = 2.1, z_max = 3.4;
  double yaw_max = 0.4;    // radians
  double pitch_max = 0.08;
  int max_rows = 3;
  int min_part_pixels = 64;  // parts with fewer visible pixels are dropped
  int max_retries = 8;
};

struct SceneSpec {
  uint64_t seed = 0;
  int n_objects = 2;  // 1..4
  int height = 128, width = 128;
  CameraIntrinsics camera;
  Pose camera_pose;  // identity: annotations are already camera-frame
  GrammarParams grammar;
  std::string image_id;

  void validate() const;
};

struct PartDebug {
  std::array<Vec3, 4> corners_cam;  // panel corners, camera frame
  Vec3 face_normal_cam;             // outward panel normal, camera frame
  int object_index = 0;
};

struct Scene {
  std::string image_id;
  RgbImage rgb;                      // H x W x 3
  std::vector<OpenablePart> parts;   // camera-frame axis/origin
  FloatImage normals;                // H x W x 3, unit on rendered pixels, else 0
  IdImage grouping;                  // instance ids, 0 = background
  std::vector<Vec3> object_extents;  // per grouping id 1..k
  CameraIntrinsics camera;
  Pose camera_pose;
  std::vector<PartDebug> part_debug;  // generation-only, not serialized
};

// Deterministic in spec.seed. Throws Err::generation_failed when no openable
// part stays visible after bounded retries.
Scene generate_scene(const SceneSpec& spec);

FloatImage render_normals(const SceneSpec& spec);
IdImage render_grouping(const SceneSpec& spec);

struct ManifestEntry {
  std::string id;
  std::string split;
};
using Manifest = std::vector<ManifestEntry>;

// One image / normals / grouping / annotation file per scene plus an atomic
// per-split manifest. Returns the manifest written.
Manifest write_dataset(const std::vector<SceneSpec>& specs, const std::string& dir,
                       const std::string& split);

Scene read_scene(const std::string& dir, const std::string& id);
Manifest read_manifest(const std::string& dir, const std::string& split);

// Field-by-field equality; normals compared within the 16-bit quantization
// step, everything else exact.
bool scene_equal(const Scene& a, const Scene& b, float normal_tol = 3.2e-5f);

uint64_t mix_seed(uint64_t seed, uint64_t salt);

}  // namespace mopd::synth

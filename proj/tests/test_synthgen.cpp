#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mopd/geometry.hpp"
#include "mopd/synthgen.hpp"

using namespace mopd;
using namespace mopd::synth;

namespace {

SceneSpec make_spec(uint64_t seed, int n_objects = 2) {
  SceneSpec spec;
  spec.seed = seed;
  spec.n_objects = n_objects;
  spec.image_id = "t_" + std::to_string(seed);
  return spec;
}

}  // namespace

TEST_CASE("generate_scene is deterministic in the seed") {
  SceneSpec spec = make_spec(42);
  Scene a = generate_scene(spec);
  Scene b = generate_scene(spec);
  CHECK(a.rgb == b.rgb);
  CHECK(a.grouping == b.grouping);
  CHECK(a.normals.data == b.normals.data);
  REQUIRE(a.parts.size() == b.parts.size());
  for (size_t i = 0; i < a.parts.size(); ++i) {
    CHECK(a.parts[i].mask == b.parts[i].mask);
    CHECK(a.parts[i].motion.axis == b.parts[i].motion.axis);
  }
  CHECK(scene_equal(a, b));
}

TEST_CASE("scenes contain visible parts with consistent annotations") {
  for (uint64_t seed : {1ull, 7ull, 19ull, 55ull, 131ull}) {
    Scene scene = generate_scene(make_spec(seed, int(seed % 4) + 1));
    REQUIRE(!scene.parts.empty());
    for (const auto& part : scene.parts) {
      int fg = 0;
      for (auto v : part.mask.data) fg += v != 0;
      CHECK(fg >= 64);
      CHECK(mask_to_bbox(part.mask) == part.bbox);
      CHECK(std::abs(part.motion.axis.norm() - 1.0) < 1e-9);
      CHECK(part.motion.has_origin == (part.motion_type == MotionType::revolute));
      CHECK_NOTHROW(part.validate());
    }
  }
}

TEST_CASE("drawer axis equals the outward face normal") {
  for (uint64_t seed : {3ull, 21ull, 77ull, 204ull}) {
    Scene scene = generate_scene(make_spec(seed, 3));
    for (size_t i = 0; i < scene.parts.size(); ++i) {
      if (scene.parts[i].label != PartLabel::drawer) continue;
      double dot = scene.parts[i].motion.axis.dot(scene.part_debug[i].face_normal_cam);
      CHECK(dot == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("revolute origins lie on a panel edge line") {
  int checked = 0;
  for (uint64_t seed : {5ull, 23ull, 91ull, 140ull, 310ull}) {
    Scene scene = generate_scene(make_spec(seed, 2));
    for (size_t i = 0; i < scene.parts.size(); ++i) {
      const auto& part = scene.parts[i];
      if (part.motion_type != MotionType::revolute) continue;
      const auto& corners = scene.part_debug[i].corners_cam;
      // some panel edge must coincide with the hinge line
      bool edge_on_axis = false;
      for (int e = 0; e < 4; ++e) {
        const Vec3& p0 = corners[size_t(e)];
        const Vec3& p1 = corners[size_t((e + 1) % 4)];
        double r0 = (p0 - part.motion.origin).cross(part.motion.axis).norm();
        double r1 = (p1 - part.motion.origin).cross(part.motion.axis).norm();
        // sampled interior points of the edge as well
        Vec3 mid = 0.5 * (p0 + p1);
        double rm = (mid - part.motion.origin).cross(part.motion.axis).norm();
        if (r0 < 1e-6 && r1 < 1e-6 && rm < 1e-6) edge_on_axis = true;
      }
      CHECK(edge_on_axis);
      ++checked;
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("normals are unit on rendered pixels and zero on background") {
  Scene scene = generate_scene(make_spec(9, 2));
  for (int y = 0; y < scene.normals.h; ++y)
    for (int x = 0; x < scene.normals.w; ++x) {
      Vec3 n(scene.normals.at(y, x, 0), scene.normals.at(y, x, 1), scene.normals.at(y, x, 2));
      if (scene.grouping.at(y, x) != 0)
        CHECK(std::abs(n.norm() - 1.0) < 1e-5);
      else
        CHECK(n.norm() == 0.0);
    }
}

TEST_CASE("part masks are subsets of their object pixels") {
  Scene scene = generate_scene(make_spec(71, 3));
  for (size_t i = 0; i < scene.parts.size(); ++i) {
    const auto& mask = scene.parts[i].mask;
    long long agree = 0, total = 0;
    // the part's pixels must carry a single nonzero grouping id
    uint16_t id = 0;
    for (int y = 0; y < mask.h; ++y)
      for (int x = 0; x < mask.w; ++x) {
        if (!mask.at(y, x)) continue;
        ++total;
        uint16_t g = scene.grouping.at(y, x);
        if (id == 0) id = g;
        agree += (g == id && g != 0);
      }
    CHECK(id != 0);
    CHECK(double(agree) >= 0.99 * double(total));
  }
}

TEST_CASE("grouping ids are contiguous from zero") {
  Scene scene = generate_scene(make_spec(101, 4));
  uint16_t max_id = 0;
  for (auto v : scene.grouping.data) max_id = std::max(max_id, v);
  CHECK(max_id == scene.object_extents.size());
  std::vector<bool> seen(size_t(max_id) + 1, false);
  for (auto v : scene.grouping.data) seen[v] = true;
  for (size_t i = 0; i <= max_id; ++i) CHECK(seen[i]);
}

TEST_CASE("dataset write/read round-trip and determinism") {
  namespace fs = std::filesystem;
  const std::string dir = "/tmp/mopd_synth_ds";
  fs::remove_all(dir);

  std::vector<SceneSpec> specs;
  for (uint64_t i = 0; i < 3; ++i) {
    SceneSpec s = make_spec(1000 + i, int(i % 3) + 1);
    s.image_id = "train_" + std::to_string(i);
    specs.push_back(s);
  }
  Manifest m = write_dataset(specs, dir, "train");
  CHECK(m.size() == 3);
  CHECK(fs::exists(dir + "/train_0.ppm"));
  CHECK(fs::exists(dir + "/train_1.json"));
  CHECK(fs::exists(dir + "/manifest_train.json"));

  // identical bytes on re-run
  auto file_bytes = [](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  };
  std::string ann_before = file_bytes(dir + "/train_2.json");
  std::string img_before = file_bytes(dir + "/train_2.ppm");
  write_dataset(specs, dir, "train");
  CHECK(file_bytes(dir + "/train_2.json") == ann_before);
  CHECK(file_bytes(dir + "/train_2.ppm") == img_before);

  // field-by-field scene equality after the round-trip
  for (uint64_t i = 0; i < 3; ++i) {
    Scene orig = generate_scene(specs[i]);
    Scene back = read_scene(dir, specs[i].image_id);
    CHECK(scene_equal(orig, back));
    // annotation doubles survive exactly
    for (size_t pi = 0; pi < orig.parts.size(); ++pi) {
      CHECK(orig.parts[pi].motion.axis == back.parts[pi].motion.axis);
      if (orig.parts[pi].motion.has_origin)
        CHECK(orig.parts[pi].motion.origin == back.parts[pi].motion.origin);
      CHECK(orig.parts[pi].pose.translation == back.parts[pi].pose.translation);
    }
  }
  Manifest mr = read_manifest(dir, "train");
  REQUIRE(mr.size() == 3);
  CHECK(mr[0].id == "train_0");
  CHECK(mr[0].split == "train");
}

TEST_CASE("spec validation errors") {
  SceneSpec bad = make_spec(1);
  bad.height = 16;
  CHECK_THROWS_AS(generate_scene(bad), Error);
  bad = make_spec(1);
  bad.n_objects = 9;
  CHECK_THROWS_AS(generate_scene(bad), Error);
}

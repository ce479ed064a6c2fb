#include "mopd/synthgen.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "mopd/geometry.hpp"
#include "mopd/pnm.hpp"
#include "mopd/rle.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mopd::synth {

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void SceneSpec::validate() const {
  if (height < 32 || width < 32)
    throw Error(Err::invalid_input, "scene image must be at least 32x32");
  if (n_objects < 1 || n_objects > 4)
    throw Error(Err::invalid_input, "n_objects must be in 1..4");
  if (grammar.width_min <= 0 || grammar.height_min <= 0 || grammar.depth_min <= 0)
    throw Error(Err::invalid_geometry, "extent ranges must be positive");
}

namespace {

struct Tri {
  Vec3 a, b, c;      // camera frame
  Vec3 normal;       // unit, outward
  Vec3 albedo;       // linear [0,1]
  int object_id = 0; // 1-based
  int part_idx = -1; // index into PartProto list, -1 = cabinet body
};

struct PartProto {
  PartLabel label;
  MotionType motion_type;
  MotionParams motion_cam;  // camera frame
  Pose pose;                // object -> camera
  Vec3 object_extent;
  std::array<Vec3, 4> corners_cam;
  Vec3 face_normal_cam;
  int object_index = 0;  // 0-based placement index
};

void push_quad(std::vector<Tri>& tris, const Pose& pose, const Vec3& p0, const Vec3& p1,
               const Vec3& p2, const Vec3& p3, const Vec3& normal_obj, const Vec3& albedo,
               int object_id, int part_idx) {
  Vec3 a = pose.apply(p0), b = pose.apply(p1), c = pose.apply(p2), d = pose.apply(p3);
  Vec3 n = (pose.rotation * normal_obj).normalized();
  tris.push_back({a, b, c, n, albedo, object_id, part_idx});
  tris.push_back({a, c, d, n, albedo, object_id, part_idx});
}

// Axis-aligned box in the object frame, all six faces.
void push_box(std::vector<Tri>& tris, const Pose& pose, const Vec3& lo, const Vec3& hi,
              const Vec3& albedo, int object_id, int part_idx) {
  const double x0 = lo.x(), y0 = lo.y(), z0 = lo.z();
  const double x1 = hi.x(), y1 = hi.y(), z1 = hi.z();
  // -z (front, toward camera)
  push_quad(tris, pose, {x0, y0, z0}, {x1, y0, z0}, {x1, y1, z0}, {x0, y1, z0}, {0, 0, -1},
            albedo, object_id, part_idx);
  // +z (back)
  push_quad(tris, pose, {x1, y0, z1}, {x0, y0, z1}, {x0, y1, z1}, {x1, y1, z1}, {0, 0, 1},
            albedo, object_id, part_idx);
  // -x / +x
  push_quad(tris, pose, {x0, y0, z1}, {x0, y0, z0}, {x0, y1, z0}, {x0, y1, z1}, {-1, 0, 0},
            albedo, object_id, part_idx);
  push_quad(tris, pose, {x1, y0, z0}, {x1, y0, z1}, {x1, y1, z1}, {x1, y1, z0}, {1, 0, 0},
            albedo, object_id, part_idx);
  // -y (top; +y points down) / +y (bottom)
  push_quad(tris, pose, {x0, y0, z1}, {x1, y0, z1}, {x1, y0, z0}, {x0, y0, z0}, {0, -1, 0},
            albedo, object_id, part_idx);
  push_quad(tris, pose, {x0, y1, z0}, {x1, y1, z0}, {x1, y1, z1}, {x0, y1, z1}, {0, 1, 0},
            albedo, object_id, part_idx);
}

struct PanelRect {
  double x0, y0, x1, y1;  // object frame, on the front plane
};

enum class RowKind { drawers, double_door, single_door, lid };

struct BuildResult {
  std::vector<Tri> tris;
  std::vector<PartProto> parts;
  std::vector<Vec3> extents;  // per object placement index
};

BuildResult build_objects(std::mt19937_64& rng, const SceneSpec& spec) {
  const GrammarParams& g = spec.grammar;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  BuildResult out;
  const int n = spec.n_objects;

  // Widths first so the shelf of objects can be centered as a group.
  std::vector<Vec3> extents(n);
  double total_w = 0;
  for (int i = 0; i < n; ++i) {
    extents[i] =
        Vec3(uni(g.width_min, g.width_max), uni(g.height_min, g.height_max),
             uni(g.depth_min, g.depth_max));
    total_w += extents[i].x();
  }
  const double gap = 0.18;
  double cursor = -(total_w + gap * (n - 1)) / 2.0;

  for (int oi = 0; oi < n; ++oi) {
    const Vec3 ext = extents[oi];
    const double w = ext.x(), h = ext.y(), d = ext.z();
    Pose pose;
    double yaw = uni(-g.yaw_max, g.yaw_max);
    double pitch = uni(-g.pitch_max, g.pitch_max);
    pose.rotation = Quat(Eigen::AngleAxisd(pitch, Vec3::UnitX()) *
                         Eigen::AngleAxisd(yaw, Vec3::UnitY()))
                        .normalized();
    pose.translation =
        Vec3(cursor + w / 2.0 + uni(-0.03, 0.03), uni(-0.18, 0.22), uni(g.z_min, g.z_max));
    cursor += w + gap;

    Vec3 base(uni(0.30, 0.72), uni(0.24, 0.62), uni(0.18, 0.52));
    const int object_id = oi + 1;
    push_box(out.tris, pose, Vec3(-w / 2, -h / 2, -d / 2), Vec3(w / 2, h / 2, d / 2),
             base, object_id, -1);

    // Split the front face into rows of panels.
    const double margin = 0.035 * std::min(w, h);
    const double gap_p = 0.018;
    const double fx0 = -w / 2 + margin, fx1 = w / 2 - margin;
    const double fy0 = -h / 2 + margin, fy1 = h / 2 - margin;
    int rows = 1 + int(u01(rng) * std::min(g.max_rows, int(h / 0.35) + 1));
    rows = std::clamp(rows, 1, g.max_rows);
    std::vector<double> cuts{fy0};
    for (int r = 1; r < rows; ++r)
      cuts.push_back(fy0 + (fy1 - fy0) * (double(r) + uni(-0.18, 0.18)) / rows);
    cuts.push_back(fy1);
    std::sort(cuts.begin(), cuts.end());

    const double zf = -d / 2 - 0.012;      // panels sit proud of the carcass
    const double zh = zf - 0.014;          // handles sit proud of the panel

    for (int r = 0; r < rows; ++r) {
      double ry0 = cuts[r] + (r > 0 ? gap_p / 2 : 0.0);
      double ry1 = cuts[r + 1] - (r + 1 < rows ? gap_p / 2 : 0.0);
      if (ry1 - ry0 < 0.08) continue;
      double pick = u01(rng);
      RowKind kind = pick < 0.40   ? RowKind::drawers
                     : pick < 0.65 ? RowKind::double_door
                     : pick < 0.85 ? RowKind::single_door
                                   : RowKind::lid;
      // Narrow rows read as drawers; tall rows read as doors.
      if (ry1 - ry0 < 0.16 && kind != RowKind::drawers) kind = RowKind::drawers;
      if (ry1 - ry0 > 0.6 && kind == RowKind::drawers) kind = RowKind::single_door;

      std::vector<std::pair<PanelRect, PartLabel>> panels;
      std::vector<int> hinges;  // -1 prismatic, 0 left, 1 right, 2 top
      if (kind == RowKind::drawers) {
        panels.push_back({{fx0, ry0, fx1, ry1}, PartLabel::drawer});
        hinges.push_back(-1);
      } else if (kind == RowKind::double_door) {
        double xm = (fx0 + fx1) / 2;
        panels.push_back({{fx0, ry0, xm - gap_p / 2, ry1}, PartLabel::door});
        hinges.push_back(0);
        panels.push_back({{xm + gap_p / 2, ry0, fx1, ry1}, PartLabel::door});
        hinges.push_back(1);
      } else if (kind == RowKind::single_door) {
        panels.push_back({{fx0, ry0, fx1, ry1}, PartLabel::door});
        hinges.push_back(u01(rng) < 0.5 ? 0 : 1);
      } else {
        panels.push_back({{fx0, ry0, fx1, ry1}, PartLabel::lid});
        hinges.push_back(2);
      }

      for (size_t pi = 0; pi < panels.size(); ++pi) {
        const PanelRect rect = panels[pi].first;
        const PartLabel label = panels[pi].second;
        const int hinge = hinges[pi];
        Vec3 albedo = base * uni(0.82, 1.18);
        albedo = albedo.cwiseMin(1.0).cwiseMax(0.05);

        int part_idx = int(out.parts.size());
        push_quad(out.tris, pose, {rect.x0, rect.y0, zf}, {rect.x1, rect.y0, zf},
                  {rect.x1, rect.y1, zf}, {rect.x0, rect.y1, zf}, {0, 0, -1}, albedo,
                  object_id, part_idx);

        // Handle geometry doubles as a visual cue for the part kind.
        Vec3 handle_col(0.12, 0.12, 0.14);
        double cx_ = (rect.x0 + rect.x1) / 2, cy_ = (rect.y0 + rect.y1) / 2;
        double pw = rect.x1 - rect.x0, ph = rect.y1 - rect.y0;
        if (label == PartLabel::drawer) {
          double hw = 0.3 * pw, hh = std::min(0.028, 0.2 * ph);
          push_box(out.tris, pose, Vec3(cx_ - hw, cy_ - hh, zh), Vec3(cx_ + hw, cy_ + hh, zf),
                   handle_col, object_id, part_idx);
        } else if (label == PartLabel::door) {
          double kx = hinge == 0 ? rect.x1 - 0.12 * pw : rect.x0 + 0.12 * pw;
          double ks = std::min(0.035, 0.2 * std::min(pw, ph));
          push_box(out.tris, pose, Vec3(kx - ks, cy_ - ks, zh), Vec3(kx + ks, cy_ + ks, zf),
                   handle_col, object_id, part_idx);
        } else {
          double hw = 0.22 * pw, hh = std::min(0.022, 0.15 * ph);
          double hy = rect.y1 - 0.18 * ph;
          push_box(out.tris, pose, Vec3(cx_ - hw, hy - hh, zh), Vec3(cx_ + hw, hy + hh, zf),
                   handle_col, object_id, part_idx);
        }

        // Motion parameters in the object frame, then into the camera frame.
        MotionParams motion_obj;
        MotionType mtype;
        if (hinge == -1) {
          mtype = MotionType::prismatic;
          motion_obj = MotionParams::prismatic_axis(Vec3(0, 0, -1));
        } else if (hinge == 0) {  // left hinge, opens toward the camera
          mtype = MotionType::revolute;
          motion_obj = MotionParams::revolute(Vec3(0, 1, 0), Vec3(rect.x0, cy_, zf));
        } else if (hinge == 1) {  // right hinge
          mtype = MotionType::revolute;
          motion_obj = MotionParams::revolute(Vec3(0, -1, 0), Vec3(rect.x1, cy_, zf));
        } else {  // top hinge (lid)
          mtype = MotionType::revolute;
          motion_obj = MotionParams::revolute(Vec3(-1, 0, 0), Vec3(cx_, rect.y0, zf));
        }

        PartProto proto;
        proto.label = label;
        proto.motion_type = mtype;
        proto.motion_cam = transform_motion(motion_obj, pose);
        proto.pose = pose;
        proto.object_extent = ext;
        proto.corners_cam = {pose.apply({rect.x0, rect.y0, zf}), pose.apply({rect.x1, rect.y0, zf}),
                             pose.apply({rect.x1, rect.y1, zf}),
                             pose.apply({rect.x0, rect.y1, zf})};
        proto.face_normal_cam = (pose.rotation * Vec3(0, 0, -1)).normalized();
        proto.object_index = oi;
        out.parts.push_back(proto);
      }
    }
  }
  out.extents = extents;
  return out;
}

struct RasterBuffers {
  std::vector<float> depth;
  std::vector<int> tri_index;  // -1 background
};

RasterBuffers rasterize(const std::vector<Tri>& tris, const SceneSpec& spec) {
  const int H = spec.height, W = spec.width;
  RasterBuffers buf;
  buf.depth.assign(size_t(H) * W, std::numeric_limits<float>::infinity());
  buf.tri_index.assign(size_t(H) * W, -1);
  const CameraIntrinsics& cam = spec.camera;

  for (size_t ti = 0; ti < tris.size(); ++ti) {
    const Tri& tr = tris[ti];
    if (tr.a.z() <= 0.05 || tr.b.z() <= 0.05 || tr.c.z() <= 0.05) continue;
    // Backface cull against the ray through the triangle centroid.
    Vec3 centroid = (tr.a + tr.b + tr.c) / 3.0;
    if (tr.normal.dot(centroid) >= 0.0) continue;

    Eigen::Vector2d pa = cam.project(tr.a), pb = cam.project(tr.b), pc = cam.project(tr.c);
    int x0 = std::max(0, int(std::floor(std::min({pa.x(), pb.x(), pc.x()}))));
    int x1 = std::min(W - 1, int(std::ceil(std::max({pa.x(), pb.x(), pc.x()}))));
    int y0 = std::max(0, int(std::floor(std::min({pa.y(), pb.y(), pc.y()}))));
    int y1 = std::min(H - 1, int(std::ceil(std::max({pa.y(), pb.y(), pc.y()}))));
    if (x0 > x1 || y0 > y1) continue;

    auto edge = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q, double px, double py) {
      return (q.x() - p.x()) * (py - p.y()) - (q.y() - p.y()) * (px - p.x());
    };
    double area = edge(pa, pb, pc.x(), pc.y());
    if (std::abs(area) < 1e-12) continue;
    const double plane_d = tr.normal.dot(tr.a);

    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        double px = x, py = y;  // pixel centers at integer coordinates
        double e0 = edge(pa, pb, px, py), e1 = edge(pb, pc, px, py), e2 = edge(pc, pa, px, py);
        bool inside = area > 0 ? (e0 >= 0 && e1 >= 0 && e2 >= 0) : (e0 <= 0 && e1 <= 0 && e2 <= 0);
        if (!inside) continue;
        Vec3 dir((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0);
        double denom = tr.normal.dot(dir);
        if (std::abs(denom) < 1e-12) continue;
        double z = plane_d / denom;  // depth along +z of the intersection
        if (z <= 0) continue;
        size_t pix = size_t(y) * W + x;
        if (float(z) < buf.depth[pix]) {
          buf.depth[pix] = float(z);
          buf.tri_index[pix] = int(ti);
        }
      }
    }
  }
  return buf;
}

Scene assemble_scene(const SceneSpec& spec, const BuildResult& built,
                     const RasterBuffers& buf) {
  const int H = spec.height, W = spec.width;
  Scene scene;
  scene.image_id = spec.image_id;
  scene.camera = spec.camera;
  scene.camera_pose = spec.camera_pose;
  scene.rgb = RgbImage(H, W, 3);
  scene.normals = FloatImage(H, W, 3);
  scene.grouping = IdImage(H, W, 1);

  const Vec3 light = Vec3(0.33, 0.48, 0.81).normalized();
  const Vec3 bg(0.045, 0.05, 0.06);
  std::vector<int> part_pixels(built.parts.size(), 0);
  std::vector<int> object_visible(built.extents.size(), 0);

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      size_t pix = size_t(y) * W + x;
      int ti = buf.tri_index[pix];
      Vec3 color = bg;
      if (ti >= 0) {
        const Tri& tr = built.tris[size_t(ti)];
        double lambert = std::max(0.0, tr.normal.dot(-light));
        color = tr.albedo * (0.35 + 0.65 * lambert);
        scene.normals.at(y, x, 0) = float(tr.normal.x());
        scene.normals.at(y, x, 1) = float(tr.normal.y());
        scene.normals.at(y, x, 2) = float(tr.normal.z());
        object_visible[size_t(tr.object_id - 1)]++;
        if (tr.part_idx >= 0) part_pixels[size_t(tr.part_idx)]++;
      }
      for (int c = 0; c < 3; ++c)
        scene.rgb.at(y, x, c) = uint8_t(std::clamp(color[c], 0.0, 1.0) * 255.0 + 0.5);
    }
  }

  // Compact grouping ids over visible objects.
  std::vector<uint16_t> remap(built.extents.size(), 0);
  uint16_t next_id = 1;
  for (size_t oi = 0; oi < built.extents.size(); ++oi) {
    if (object_visible[oi] > 0) {
      remap[oi] = next_id++;
      scene.object_extents.push_back(built.extents[oi]);
    }
  }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      int ti = buf.tri_index[size_t(y) * W + x];
      if (ti >= 0) scene.grouping.at(y, x) = remap[size_t(built.tris[size_t(ti)].object_id - 1)];
    }

  for (size_t pi = 0; pi < built.parts.size(); ++pi) {
    if (part_pixels[pi] < spec.grammar.min_part_pixels) continue;
    const PartProto& proto = built.parts[pi];
    OpenablePart part;
    part.mask = MaskImage(H, W, 1);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        int ti = buf.tri_index[size_t(y) * W + x];
        if (ti >= 0 && built.tris[size_t(ti)].part_idx == int(pi)) part.mask.at(y, x) = 1;
      }
    part.bbox = mask_to_bbox(part.mask);
    part.label = proto.label;
    part.motion_type = proto.motion_type;
    part.motion = proto.motion_cam;
    part.pose = proto.pose;
    part.object_extent = proto.object_extent;
    part.validate();
    scene.parts.push_back(std::move(part));
    scene.part_debug.push_back({proto.corners_cam, proto.face_normal_cam, proto.object_index});
  }
  return scene;
}

}  // namespace

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  for (int attempt = 0; attempt < spec.grammar.max_retries; ++attempt) {
    std::mt19937_64 rng(mix_seed(spec.seed, uint64_t(attempt)));
    BuildResult built = build_objects(rng, spec);
    RasterBuffers buf = rasterize(built.tris, spec);
    Scene scene = assemble_scene(spec, built, buf);
    if (!scene.parts.empty()) return scene;
  }
  throw Error(Err::generation_failed,
              "no visible openable part after retries (seed " + std::to_string(spec.seed) + ")");
}

FloatImage render_normals(const SceneSpec& spec) { return generate_scene(spec).normals; }
IdImage render_grouping(const SceneSpec& spec) { return generate_scene(spec).grouping; }

namespace {

json pose_to_json(const Pose& p) {
  return json{{"quat", {p.rotation.w(), p.rotation.x(), p.rotation.y(), p.rotation.z()}},
              {"t", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

Pose pose_from_json(const json& j) {
  Pose p;
  auto q = j.at("quat");
  p.rotation = Quat(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                    q.at(3).get<double>());
  auto t = j.at("t");
  p.translation = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
  return p;
}

json vec3_to_json(const Vec3& v) { return json{v.x(), v.y(), v.z()}; }
Vec3 vec3_from_json(const json& j) {
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

void atomic_write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path + ".tmp", std::ios::binary);
  if (!f) throw Error(Err::io, "cannot write " + path);
  f << text;
  f.close();
  if (!f) throw Error(Err::io, "short write " + path);
  std::remove(path.c_str());
  if (std::rename((path + ".tmp").c_str(), path.c_str()) != 0)
    throw Error(Err::io, "cannot rename into " + path);
}

}  // namespace

Manifest write_dataset(const std::vector<SceneSpec>& specs, const std::string& dir,
                       const std::string& split) {
  fs::create_directories(dir);
  Manifest manifest;
  for (const SceneSpec& spec : specs) {
    Scene scene = generate_scene(spec);
    const std::string id = scene.image_id;
    write_ppm(dir + "/" + id + ".ppm", scene.rgb);

    Image<uint16_t> nq(scene.normals.h, scene.normals.w, 3);
    for (size_t i = 0; i < scene.normals.data.size(); ++i)
      nq.data[i] = quantize_snorm16(scene.normals.data[i]);
    write_ppm16(dir + "/" + id + ".normals.pnm", nq);
    write_pgm16(dir + "/" + id + ".grouping.pgm", scene.grouping);

    json parts = json::array();
    for (const OpenablePart& p : scene.parts) {
      json jp;
      jp["label"] = to_string(p.label);
      jp["motion_type"] = to_string(p.motion_type);
      jp["axis"] = vec3_to_json(p.motion.axis);
      jp["origin"] = p.motion.has_origin ? vec3_to_json(p.motion.origin) : json(nullptr);
      jp["bbox"] = {p.bbox.x_min, p.bbox.y_min, p.bbox.x_max, p.bbox.y_max};
      jp["mask_rle"] = rle_encode(p.mask);
      jp["object_extent"] = vec3_to_json(p.object_extent);
      jp["pose"] = pose_to_json(p.pose);
      parts.push_back(std::move(jp));
    }
    json ann;
    ann["image_id"] = id;
    ann["size"] = {scene.rgb.h, scene.rgb.w};
    ann["camera"] = {{"fx", scene.camera.fx},
                     {"fy", scene.camera.fy},
                     {"cx", scene.camera.cx},
                     {"cy", scene.camera.cy},
                     {"pose", pose_to_json(scene.camera_pose)}};
    ann["object_extents"] = json::array();
    for (const Vec3& e : scene.object_extents) ann["object_extents"].push_back(vec3_to_json(e));
    ann["parts"] = std::move(parts);
    atomic_write_text(dir + "/" + id + ".json", ann.dump(2));
    manifest.push_back({id, split});
  }
  json m = json::array();
  for (auto& e : manifest) m.push_back({{"id", e.id}, {"split", e.split}});
  atomic_write_text(dir + "/manifest_" + split + ".json", m.dump(2));
  return manifest;
}

Scene read_scene(const std::string& dir, const std::string& id) {
  Scene scene;
  scene.image_id = id;
  scene.rgb = read_ppm(dir + "/" + id + ".ppm");
  Image<uint16_t> nq = read_ppm16(dir + "/" + id + ".normals.pnm");
  scene.normals = FloatImage(nq.h, nq.w, 3);
  for (size_t i = 0; i < nq.data.size(); ++i)
    scene.normals.data[i] = dequantize_snorm16(nq.data[i]);
  scene.grouping = read_pgm16(dir + "/" + id + ".grouping.pgm");

  std::ifstream f(dir + "/" + id + ".json");
  if (!f) throw Error(Err::io, "missing annotation: " + dir + "/" + id + ".json");
  json ann = json::parse(f);
  if (ann.at("image_id").get<std::string>() != id)
    throw Error(Err::invalid_dataset, "annotation id mismatch for " + id);
  scene.camera.fx = ann.at("camera").at("fx").get<double>();
  scene.camera.fy = ann.at("camera").at("fy").get<double>();
  scene.camera.cx = ann.at("camera").at("cx").get<double>();
  scene.camera.cy = ann.at("camera").at("cy").get<double>();
  scene.camera_pose = pose_from_json(ann.at("camera").at("pose"));
  for (const json& je : ann.at("object_extents")) scene.object_extents.push_back(vec3_from_json(je));
  const int H = scene.rgb.h, W = scene.rgb.w;
  for (const json& jp : ann.at("parts")) {
    OpenablePart p;
    p.label = part_label_from_string(jp.at("label").get<std::string>());
    p.motion_type = motion_type_from_string(jp.at("motion_type").get<std::string>());
    Vec3 axis = vec3_from_json(jp.at("axis"));
    if (jp.at("origin").is_null())
      p.motion = MotionParams::prismatic_axis(axis);
    else
      p.motion = MotionParams::revolute(axis, vec3_from_json(jp.at("origin")));
    p.motion.axis = axis;  // keep serialized bytes exactly
    auto bb = jp.at("bbox");
    p.bbox = {bb.at(0).get<int>(), bb.at(1).get<int>(), bb.at(2).get<int>(), bb.at(3).get<int>()};
    p.mask = rle_decode(jp.at("mask_rle").get<std::vector<int>>(), H, W);
    p.object_extent = vec3_from_json(jp.at("object_extent"));
    p.pose = pose_from_json(jp.at("pose"));
    scene.parts.push_back(std::move(p));
  }
  return scene;
}

Manifest read_manifest(const std::string& dir, const std::string& split) {
  std::ifstream f(dir + "/manifest_" + split + ".json");
  if (!f) throw Error(Err::io, "missing manifest for split " + split + " in " + dir);
  json m = json::parse(f);
  Manifest out;
  for (const json& je : m)
    out.push_back({je.at("id").get<std::string>(), je.at("split").get<std::string>()});
  return out;
}

bool scene_equal(const Scene& a, const Scene& b, float normal_tol) {
  if (a.image_id != b.image_id || !(a.rgb == b.rgb) || !(a.grouping == b.grouping)) return false;
  if (a.normals.h != b.normals.h || a.normals.w != b.normals.w) return false;
  for (size_t i = 0; i < a.normals.data.size(); ++i)
    if (std::abs(a.normals.data[i] - b.normals.data[i]) > normal_tol) return false;
  if (a.object_extents.size() != b.object_extents.size() || a.parts.size() != b.parts.size())
    return false;
  for (size_t i = 0; i < a.object_extents.size(); ++i)
    if (a.object_extents[i] != b.object_extents[i]) return false;
  for (size_t i = 0; i < a.parts.size(); ++i) {
    const OpenablePart &pa = a.parts[i], &pb = b.parts[i];
    if (!(pa.mask == pb.mask) || !(pa.bbox == pb.bbox) || pa.label != pb.label ||
        pa.motion_type != pb.motion_type || pa.motion.has_origin != pb.motion.has_origin)
      return false;
    if (pa.motion.axis != pb.motion.axis) return false;
    if (pa.motion.has_origin && pa.motion.origin != pb.motion.origin) return false;
    if (pa.pose.rotation.coeffs() != pb.pose.rotation.coeffs() ||
        pa.pose.translation != pb.pose.translation || pa.object_extent != pb.object_extent)
      return false;
  }
  return true;
}

}  // namespace mopd::synth

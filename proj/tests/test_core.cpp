#include <doctest.h>

#include <random>

#include "mopd/geometry.hpp"
#include "mopd/pnm.hpp"
#include "mopd/rle.hpp"

using namespace mopd;

TEST_CASE("diag_length basic values") {
  CHECK(diag_length(Vec3(1, 1, 1)) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-9));
  CHECK(diag_length(Vec3(3, 4, 1e-9)) == doctest::Approx(5.0).epsilon(1e-6));
  // independent hand evaluation of sqrt(0.36 + 0.81 + 0.2025)
  double expect = std::sqrt(0.36 + 0.81 + 0.2025);
  CHECK(diag_length(Vec3(0.6, 0.9, 0.45)) == doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(diag_length(Vec3(1, -1, 1)), Error);
  CHECK_THROWS_AS(diag_length(Vec3(0, 1, 1)), Error);
}

TEST_CASE("diag_length permutation invariance") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(0.1, 3.0);
  for (int i = 0; i < 50; ++i) {
    Vec3 e(d(rng), d(rng), d(rng));
    CHECK(diag_length(Vec3(e.y(), e.z(), e.x())) == doctest::Approx(diag_length(e)).epsilon(1e-12));
  }
}

TEST_CASE("mask_to_bbox known cases") {
  MaskImage m(8, 8);
  m.at(5, 3) = 1;  // y=5, x=3
  BBox b = mask_to_bbox(m);
  CHECK(b == BBox{3, 5, 3, 5});

  MaskImage full(4, 4, 1, 1);
  CHECK(mask_to_bbox(full) == BBox{0, 0, 3, 3});

  MaskImage empty(4, 4);
  CHECK_THROWS_AS(mask_to_bbox(empty), Error);
}

TEST_CASE("mask_to_bbox equals brute-force scan on random masks") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    MaskImage m(16, 16);
    std::bernoulli_distribution coin(0.2);
    int fg = 0;
    for (auto& v : m.data) {
      v = coin(rng) ? 1 : 0;
      fg += v;
    }
    if (fg == 0) {
      m.at(7, 9) = 1;
      fg = 1;
    }
    int x0 = 16, x1 = -1, y0 = 16, y1 = -1;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        if (m.at(y, x)) {
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
          y0 = std::min(y0, y);
          y1 = std::max(y1, y);
        }
    BBox b = mask_to_bbox(m);
    CHECK(b == BBox{x0, y0, x1, y1});
    // containment and tightness
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        if (m.at(y, x)) {
          CHECK(x >= b.x_min);
          CHECK(x <= b.x_max);
          CHECK(y >= b.y_min);
          CHECK(y <= b.y_max);
        }
  }
}

TEST_CASE("iou masks") {
  MaskImage a(6, 6), b(6, 6);
  for (int i = 0; i < 3; ++i) a.at(1, i) = 1;
  CHECK(iou(a, a) == doctest::Approx(1.0));
  for (int i = 3; i < 6; ++i) b.at(4, i) = 1;
  CHECK(iou(a, b) == doctest::Approx(0.0));
  MaskImage e1(6, 6), e2(6, 6);
  CHECK_THROWS_AS(iou(e1, e2), Error);
  MaskImage wrong(5, 6);
  CHECK_THROWS_AS(iou(a, wrong), Error);
}

TEST_CASE("iou boxes area arithmetic") {
  BBox a{0, 0, 9, 9}, b{5, 0, 14, 9};
  // overlap 50, union 150
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(iou(a, a) == doctest::Approx(1.0));
}

TEST_CASE("iou symmetry and identity on random masks") {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 20; ++trial) {
    MaskImage a(12, 12), b(12, 12);
    for (auto& v : a.data) v = coin(rng);
    for (auto& v : b.data) v = coin(rng);
    a.at(0, 0) = 1;  // keep unions nonempty
    CHECK(iou(a, b) == doctest::Approx(iou(b, a)).epsilon(1e-15));
    CHECK(iou(a, a) == doctest::Approx(1.0));
  }
}

TEST_CASE("transform_motion identity and canonical rotation") {
  MotionParams p = MotionParams::revolute(Vec3(1, 0, 0), Vec3(0.2, 0.3, 0.4));
  MotionParams out = transform_motion(p, Pose::identity());
  CHECK((out.axis - p.axis).norm() < 1e-12);
  CHECK((out.origin - p.origin).norm() < 1e-12);

  Pose rot90;
  rot90.rotation = Quat(Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()));
  MotionParams r = transform_motion(MotionParams::prismatic_axis(Vec3(1, 0, 0)), rot90);
  CHECK((r.axis - Vec3(0, 1, 0)).norm() < 1e-9);
  CHECK_FALSE(r.has_origin);
}

TEST_CASE("transform_motion round-trips through the inverse pose") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    Vec3 axis(g(rng), g(rng), g(rng));
    while (axis.norm() < 1e-3) axis = Vec3(g(rng), g(rng), g(rng));
    MotionParams p = MotionParams::revolute(axis, Vec3(g(rng), g(rng), g(rng)));
    Pose pose;
    pose.rotation = Quat(g(rng), g(rng), g(rng), g(rng)).normalized();
    pose.translation = Vec3(g(rng), g(rng), g(rng));
    MotionParams fwd = transform_motion(p, pose);
    CHECK(std::abs(fwd.axis.norm() - 1.0) < 1e-6);
    MotionParams back = transform_motion(fwd, pose.inverse());
    CHECK((back.axis - p.axis).norm() < 1e-6);
    CHECK((back.origin - p.origin).norm() < 1e-6);
  }
}

TEST_CASE("transform_motion rejects non-unit inputs") {
  MotionParams bad;
  bad.axis = Vec3(1, 1, 0);  // not unit
  CHECK_THROWS_AS(transform_motion(bad, Pose::identity()), Error);
  Pose badpose;
  badpose.rotation = Quat(2, 0, 0, 0);  // not normalized
  CHECK_THROWS_AS(transform_motion(MotionParams::prismatic_axis(Vec3::UnitX()), badpose), Error);
}

TEST_CASE("rle round-trip") {
  std::mt19937_64 rng(23);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 25; ++trial) {
    MaskImage m(9, 13);
    for (auto& v : m.data) v = coin(rng);
    auto runs = rle_encode(m);
    MaskImage back = rle_decode(runs, 9, 13);
    CHECK(back == m);
    long long total = 0;
    for (int r : runs) total += r;
    CHECK(total == 9 * 13);
  }
}

TEST_CASE("pnm round-trips") {
  std::mt19937_64 rng(31);
  RgbImage img(5, 7, 3);
  for (auto& v : img.data) v = uint8_t(rng());
  write_ppm("/tmp/mopd_test.ppm", img);
  CHECK(read_ppm("/tmp/mopd_test.ppm") == img);

  Image<uint16_t> wide(4, 6, 3);
  for (auto& v : wide.data) v = uint16_t(rng());
  write_ppm16("/tmp/mopd_test16.ppm", wide);
  CHECK(read_ppm16("/tmp/mopd_test16.ppm") == wide);

  Image<uint16_t> ids(4, 6, 1);
  for (auto& v : ids.data) v = uint16_t(rng() % 9);
  write_pgm16("/tmp/mopd_test16.pgm", ids);
  CHECK(read_pgm16("/tmp/mopd_test16.pgm") == ids);
}

TEST_CASE("snorm16 quantization bounds") {
  for (float v : {-1.0f, -0.5f, 0.0f, 0.25f, 1.0f}) {
    float back = dequantize_snorm16(quantize_snorm16(v));
    CHECK(std::abs(back - v) <= 1.0f / 65535.0f);
  }
}

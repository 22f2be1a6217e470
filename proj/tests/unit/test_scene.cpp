#include "dip/scene.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace dip;

namespace {

SdfGrid small_grid() {
  SdfGrid g;
  g.nx = 4;
  g.ny = 3;
  g.nz = 5;
  g.origin = Vec3(-1.0, 0.5, 0.0);
  g.spacing = 0.25;
  g.values.resize(g.cell_count());
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) g.values[g.index(i, j, k)] = static_cast<float>(g.node(i, j, k).x());
  return g;
}

}  // namespace

TEST(Scene, UniformGrid) {
  SdfGrid g = small_grid();
  std::fill(g.values.begin(), g.values.end(), 0.75f);
  for (const Vec3 p : {Vec3(-0.3, 0.7, 0.4), Vec3(5, 5, 5), Vec3(-9, 0, -1)}) {
    const SdfSample s = sdf_query(g, p);
    EXPECT_DOUBLE_EQ(s.value, 0.75);
    EXPECT_EQ(s.gradient, Vec3::Zero());
  }
}

TEST(Scene, LinearFieldIsExact) {
  const SdfGrid g = small_grid();
  for (const Vec3 p : {Vec3(-0.3, 0.7, 0.4), Vec3(-0.9, 0.6, 0.9), Vec3(-0.6, 0.9, 0.05)}) {
    const SdfSample s = sdf_query(g, p);
    EXPECT_NEAR(s.value, p.x(), 1e-7);
    EXPECT_LT((s.gradient - Vec3(1, 0, 0)).norm(), 1e-6);
  }
}

TEST(Scene, LatticeNodeIsExact) {
  const SdfGrid g = small_grid();
  EXPECT_EQ(sdf_query(g, g.node(2, 1, 3)).value, static_cast<double>(g.at(2, 1, 3)));
}

TEST(Scene, ContinuousAcrossCellFaces) {
  SdfGrid g = small_grid();
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = static_cast<float>((i * 37 % 11) * 0.1);
  const double x = g.origin.x() + g.spacing;  // shared face between cells 0 and 1
  for (double y : {0.6, 0.8}) {
    const double a = sdf_query(g, Vec3(x - 1e-12, y, 0.3)).value;
    const double b = sdf_query(g, Vec3(x + 1e-12, y, 0.3)).value;
    EXPECT_LT(std::abs(a - b), 1e-9);
  }
}

TEST(Scene, GradientMatchesFiniteDifferences) {
  SdfGrid g = small_grid();
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = static_cast<float>((i * 37 % 11) * 0.1);
  const Vec3 p(-0.4, 0.8, 0.6);
  const SdfSample s = sdf_query(g, p);
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = 1e-6;
    EXPECT_NEAR((sdf_query(g, p + e).value - sdf_query(g, p - e).value) / 2e-6, s.gradient[a], 1e-6);
  }
}

TEST(Scene, EmptyObstacleList) {
  ObstacleSpec spec;
  spec.spacing = 0.5;
  const SceneField s = bake_boxes(spec);
  for (float v : s.sdf.values) EXPECT_GE(v, 100.0f);
  for (auto w : s.walkable) EXPECT_EQ(w, 1);
}

TEST(Scene, UnitBoxAndSphere) {
  ObstacleSpec spec;
  spec.bounds_min = Vec3(-2, -2, -2);
  spec.bounds_max = Vec3(2, 2, 2);
  spec.spacing = 0.1;
  spec.floor_height = -2.0;
  spec.boxes.push_back({Vec3::Zero(), Vec3(1, 1, 1)});
  const SceneField s = bake_boxes(spec);
  EXPECT_NEAR(sdf_query(s, Vec3::Zero()).value, -0.5, 1e-7);
  EXPECT_FALSE(s.is_walkable(Vec3(0, 0, 0)));
  EXPECT_TRUE(s.is_walkable(Vec3(1.5, 1.5, 0)));

  ObstacleSpec sp;
  sp.bounds_min = Vec3(-2, -2, -2);
  sp.bounds_max = Vec3(2, 2, 2);
  sp.spacing = 0.1;
  sp.spheres.push_back({Vec3::Zero(), 1.0});
  EXPECT_NEAR(sdf_query(bake_boxes(sp), Vec3(1.3, 0, 0)).value, 0.3, 1e-6);
}

TEST(Scene, SerializeRoundTrip) {
  const SceneField s = test::linear_z_scene(0.5, 0.5);
  const std::string bytes = serialize_scene(s);
  const SceneField back = parse_scene(bytes);
  EXPECT_EQ(back.sdf.values, s.sdf.values);
  EXPECT_EQ(back.walkable, s.walkable);
  EXPECT_EQ(back.sdf.origin, s.sdf.origin);
  EXPECT_EQ(back.sdf.spacing, s.sdf.spacing);
  EXPECT_EQ(back.floor_height, s.floor_height);
  EXPECT_EQ(serialize_scene(back), bytes);

  const auto path = std::filesystem::temp_directory_path() / "dip_scene_roundtrip.dips";
  save_scene(s, path.string());
  EXPECT_EQ(serialize_scene(load_scene(path.string())), bytes);
  std::filesystem::remove(path);
}

TEST(Scene, CorruptedMagic) {
  std::string bytes = serialize_scene(test::linear_z_scene(0.5, 0.5));
  bytes[0] = 'X';
  EXPECT_THROW(parse_scene(bytes), SceneFormatError);
}

TEST(Scene, TruncatedPayload) {
  const std::string bytes = serialize_scene(test::linear_z_scene(0.5, 0.5));
  try {
    parse_scene(bytes.substr(0, bytes.size() - 7));
    FAIL() << "expected a parse error";
  } catch (const SceneFormatError& e) {
    EXPECT_NE(std::string(e.what()).find("expected"), std::string::npos) << e.what();
  }
}

#include "dip/metrics.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace dip;

namespace {

// Every joint at `height`, feet sliding along x at `speed` units per second.
std::vector<Points> feet_trace(int frames, double height, double speed, double fps) {
  std::vector<Points> out;
  for (int s = 0; s < frames; ++s) out.emplace_back(kJointCount, Vec3(speed * s / fps, 0.0, height));
  return out;
}

}  // namespace

TEST(Metrics, ContactScoreThresholds) {
  EXPECT_NEAR(contact_score(feet_trace(10, 0.05, 0.075, 40), 0.0, 40), 1.0, 1e-12);
  EXPECT_NEAR(contact_score(feet_trace(10, 1.05, 0.075, 40), 0.0, 40), std::exp(-1.0), 1e-12);
  EXPECT_NEAR(contact_score(feet_trace(10, 0.0, 0.0, 40), 0.0, 40), 1.0, 1e-12);
}

TEST(Metrics, PenetrationStats) {
  const Skeleton skel = Skeleton::standard();
  const MarkerSet ms = MarkerSet::standard();
  MotionClip m;
  m.frames.assign(6, Pose{});
  const SceneField far = test::linear_z_scene(-5.0);
  const auto none = penetration_stats(m, skel, ms, far);
  EXPECT_EQ(none.mean, 0.0);
  EXPECT_EQ(none.max, 0.0);

  MarkerSet one;
  one.markers.push_back({joint::kPelvis, Vec3::Zero(), BodyPart::kOther});
  one.markers.push_back({joint::kHead, Vec3::Zero(), BodyPart::kOther});
  const SceneField cut = test::linear_z_scene(forward_kinematics(Pose{}, skel)[0].z() + 0.1, 0.05);
  const auto p = penetration_stats(m, skel, one, cut);
  EXPECT_NEAR(p.mean, 0.1, 1e-6);
  EXPECT_NEAR(p.max, 0.1, 1e-6);

  std::mt19937_64 rng(1);
  MotionClip r;
  for (int s = 0; s < 8; ++s) r.frames.push_back(test::random_pose(rng, 0.6));
  const SceneField scene = test::linear_z_scene(0.6);
  const auto got = penetration_stats(r, skel, ms, scene);
  double sum = 0.0, worst = 0.0;
  for (const auto& pose : r.frames) {
    double f = 0.0;
    for (const Vec3& mk : compute_markers(pose, skel, ms)) {
      const double v = sdf_query(scene, mk).value;
      if (v < 0.0) f += -v;
    }
    sum += f;
    worst = std::max(worst, f);
  }
  EXPECT_EQ(got.mean, sum / r.size());
  EXPECT_EQ(got.max, worst);
}

TEST(Metrics, WalkableScore) {
  const Skeleton skel = Skeleton::standard();
  const MarkerSet ms = MarkerSet::standard();
  MotionClip m;
  m.frames.assign(3, Pose{});
  SceneField s = test::linear_z_scene(-1.0);
  EXPECT_EQ(walkable_score(m, skel, ms, s), 1.0);
  std::fill(s.walkable.begin(), s.walkable.end(), 0);
  EXPECT_EQ(walkable_score(m, skel, ms, s), 0.0);
  // Block every column with x > 0: the rest pose straddles x = 0 symmetrically.
  SceneField half = test::linear_z_scene(-1.0, 0.1);
  for (int j = 0; j < half.sdf.ny; ++j)
    for (int i = 0; i < half.sdf.nx; ++i)
      if (half.sdf.node(i, j, 0).x() > 0.0) half.walkable[static_cast<std::size_t>(i + half.sdf.nx * j)] = 0;
  MarkerSet pair;
  pair.markers.push_back({joint::kLeftWrist, Vec3::Zero(), BodyPart::kHand});
  pair.markers.push_back({joint::kRightWrist, Vec3::Zero(), BodyPart::kHand});
  EXPECT_EQ(walkable_score(m, skel, pair, half), 0.5);
}

TEST(Metrics, FinishTime) {
  const Vec3 goal(3, 0, 0);
  std::vector<Points> j;
  for (int s = 0; s < 160; ++s) j.emplace_back(kJointCount, s < 99 ? Vec3(0, 0, 0.9) : Vec3(3, 0.05, 0.9));
  const FinishMetrics f = finish_metrics(j, goal, 40);
  EXPECT_DOUBLE_EQ(f.finish_time, 2.5);
  EXPECT_NEAR(f.goal_distance, 0.05, 1e-12);

  std::vector<Points> at(160, Points(kJointCount, goal));
  EXPECT_DOUBLE_EQ(finish_metrics(at, goal, 40).finish_time, 1.0 / 40);
  std::vector<Points> never(160, Points(kJointCount, Vec3::Zero()));
  EXPECT_DOUBLE_EQ(finish_metrics(never, goal, 40).finish_time, 4.0);
}

TEST(Metrics, MarkerAccelerationOfStaticMotionIsZero) {
  MotionClip m;
  m.frames.assign(5, Pose{});
  EXPECT_EQ(max_marker_acceleration(m, Skeleton::standard(), MarkerSet::standard()), 0.0);
}

TEST(Metrics, ReportText) {
  MetricsReport r;
  r.finish_time = 2.5;
  const std::string t = r.to_text();
  EXPECT_NE(t.find("finish_time = 2.5"), std::string::npos);
  EXPECT_NE(t.find("walkable_score"), std::string::npos);
}

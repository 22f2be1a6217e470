#include "dip/kinematics.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace dip;

namespace {

Points rest_joints(const Skeleton& s) {
  Points out(static_cast<std::size_t>(s.joint_count()));
  for (int j = 0; j < s.joint_count(); ++j) {
    const int p = s.parents[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(j)] = (p < 0 ? Vec3::Zero() : out[static_cast<std::size_t>(p)]) + s.offsets[static_cast<std::size_t>(j)];
  }
  return out;
}

MotionClip random_clip(std::mt19937_64& rng, int frames) {
  MotionClip c;
  for (int s = 0; s < frames; ++s) c.frames.push_back(test::random_pose(rng));
  return c;
}

}  // namespace

TEST(Kinematics, RestPose) {
  const Skeleton s = Skeleton::standard();
  const Points j = forward_kinematics(Pose{}, s);
  const Points r = rest_joints(s);
  for (std::size_t i = 0; i < j.size(); ++i) EXPECT_LT((j[i] - r[i]).norm(), 1e-15);
}

TEST(Kinematics, TranslationEquivariance) {
  const Skeleton s = Skeleton::standard();
  const MarkerSet ms = MarkerSet::standard();
  std::mt19937_64 rng(3);
  Pose p = test::random_pose(rng);
  Pose q = p;
  q.set_translation(p.translation() + Vec3(1, 2, 3));
  const Points a = forward_kinematics(p, s), b = forward_kinematics(q, s);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT((b[i] - a[i] - Vec3(1, 2, 3)).norm(), 1e-12);
  const Points ma = compute_markers(p, s, ms), mb = compute_markers(q, s, ms);
  for (std::size_t i = 0; i < ma.size(); ++i) EXPECT_LT((mb[i] - ma[i] - Vec3(1, 2, 3)).norm(), 1e-12);
}

TEST(Kinematics, GlobalYawRotatesAboutPelvis) {
  const Skeleton s = Skeleton::standard();
  Pose p;
  p.set_rotation(0, Vec3(0, 0, std::numbers::pi / 2));
  const Points j = forward_kinematics(p, s);
  const Points r = rest_joints(s);
  const Mat3 R = rot_z(std::numbers::pi / 2);
  for (std::size_t i = 0; i < j.size(); ++i) EXPECT_LT((j[i] - (r[0] + R * (r[i] - r[0]))).norm(), 1e-12);
}

TEST(Kinematics, MarkersWithZeroOffsetsSitOnJoints) {
  const Skeleton s = Skeleton::standard();
  MarkerSet ms;
  for (int j = 0; j < s.joint_count(); ++j) ms.markers.push_back({j, Vec3::Zero(), BodyPart::kOther});
  std::mt19937_64 rng(4);
  const Pose p = test::random_pose(rng);
  const Points j = forward_kinematics(p, s), m = compute_markers(p, s, ms);
  for (std::size_t i = 0; i < j.size(); ++i) EXPECT_LT((j[i] - m[i]).norm(), 1e-15);
}

TEST(Kinematics, HeelMarkerUnderIdentityPose) {
  const Skeleton s = Skeleton::standard();
  MarkerSet ms;
  ms.markers.push_back({joint::kLeftAnkle, Vec3(0, -0.05, -0.08), BodyPart::kFoot});
  const Vec3 ankle = s.offsets[0] + s.offsets[1] + s.offsets[4] + s.offsets[7];
  EXPECT_LT((compute_markers(Pose{}, s, ms)[0] - (ankle + Vec3(0, -0.05, -0.08))).norm(), 1e-15);
}

TEST(Kinematics, JacobianMatchesFiniteDifferences) {
  const Skeleton s = Skeleton::standard();
  std::mt19937_64 rng(5);
  const Pose p = test::random_pose(rng);
  const FrameKinematics fk = frame_kinematics(p, s);
  for (int j : {0, 7, 15, 21}) {
    const auto J = joint_jacobian(p, s, fk, j);
    for (int d = 0; d < kPoseDim; ++d) {
      Pose a = p, b = p;
      a.v[d] += 1e-6;
      b.v[d] -= 1e-6;
      const Vec3 fd = (forward_kinematics(a, s)[static_cast<std::size_t>(j)] - forward_kinematics(b, s)[static_cast<std::size_t>(j)]) / 2e-6;
      EXPECT_LT((fd - J.col(d)).norm(), 1e-7) << "joint " << j << " dim " << d;
    }
  }
}

TEST(Kinematics, CanonicalMotionIsUnchanged) {
  const Skeleton s = Skeleton::standard();
  MotionClip c;
  Pose p;
  p.set_translation(-s.pelvis_offset());
  c.frames = {p, p};
  const auto [out, T] = canonicalize(c, s);
  EXPECT_LT((T.R - Mat3::Identity()).norm(), 1e-12);
  EXPECT_LT(T.t.norm(), 1e-12);
  EXPECT_LT((out.flatten() - c.flatten()).norm(), 1e-12);
}

TEST(Kinematics, CanonicalizationInvariants) {
  const Skeleton s = Skeleton::standard();
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const MotionClip c = random_clip(rng, 4);
    const auto [out, T] = canonicalize(c, s);
    const Points j = forward_kinematics(out.frames[0], s);
    EXPECT_LT(j[joint::kPelvis].norm(), 1e-9);
    const Vec3 x = j[joint::kRightHip] - j[joint::kLeftHip];
    EXPECT_LT(std::abs(x.y()), 1e-9);
    EXPECT_GT(x.x(), 0.0);

    RigidTransform pre{rot_z(u(rng)), Vec3(u(rng), u(rng), 0.0)};
    const auto [out2, T2] = canonicalize(apply_transform(pre, c, s), s);
    EXPECT_LT((out2.flatten() - out.flatten()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Kinematics, ApplyTransformRoundTrip) {
  const Skeleton s = Skeleton::standard();
  std::mt19937_64 rng(7);
  const MotionClip c = random_clip(rng, 5);
  EXPECT_LT((apply_transform(RigidTransform{}, c, s).flatten() - c.flatten()).norm(), 1e-12);
  const RigidTransform shift{Mat3::Identity(), Vec3(1, -2, 0.5)};
  const MotionClip moved = apply_transform(shift, c, s);
  for (int f = 0; f < c.size(); ++f) {
    EXPECT_LT((moved.frames[f].v.head<66>() - c.frames[f].v.head<66>()).norm(), 1e-12);
    EXPECT_LT((moved.frames[f].translation() - c.frames[f].translation() - shift.t).norm(), 1e-12);
  }
  const RigidTransform T{aa_to_mat(Vec3(0.3, -0.4, 1.2)), Vec3(0.5, 2.0, -1.0)};
  const MotionClip back = apply_transform(T.inverse(), apply_transform(T, c, s), s);
  for (int f = 0; f < c.size(); ++f) {
    const Points a = forward_kinematics(back.frames[f], s), b = forward_kinematics(c.frames[f], s);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT((a[i] - b[i]).norm(), 1e-9);
  }
}

TEST(Kinematics, DegenerateHipsRejected) {
  const Skeleton s = Skeleton::standard();
  Pose p;
  p.set_rotation(0, Vec3(0, std::numbers::pi / 2, 0));  // hips stacked vertically
  MotionClip c;
  c.frames = {p};
  EXPECT_THROW(canonicalize(c, s), KinematicsError);
}

TEST(Kinematics, BlendOverlap) {
  std::mt19937_64 rng(8);
  std::vector<Pose> a, b;
  for (int i = 0; i < 10; ++i) {
    a.push_back(test::random_pose(rng));
    b.push_back(test::random_pose(rng));
  }
  const auto same = blend_overlap(a, a);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (int r = 0; r < kRotationCount; ++r) {
      EXPECT_LT((aa_to_mat(same[i].rotation(r)) - aa_to_mat(a[i].rotation(r))).norm(), 1e-9);
    }
  }
  const auto out = blend_overlap(a, b);
  const Vec3 expect = (10.0 / 11.0) * a[0].translation() + (1.0 / 11.0) * b[0].translation();
  EXPECT_LT((out[0].translation() - expect).norm(), 1e-12);
  EXPECT_TRUE(blend_overlap({}, {}).empty());

  const auto mid = blend_overlap({a[0]}, {b[0]});
  for (int r = 0; r < kRotationCount; ++r) {
    const Mat3 ma = aa_to_mat(a[0].rotation(r)), mb = aa_to_mat(b[0].rotation(r)), mm = aa_to_mat(mid[0].rotation(r));
    EXPECT_NEAR(rotation_angle_between(ma, mm), rotation_angle_between(mm, mb), 1e-9);
  }
}

TEST(Kinematics, ConcatLengths) {
  MotionClip prev;
  prev.frames.resize(200);
  std::vector<Pose> blended(10), tail(150);
  EXPECT_EQ(concat_long_term(prev, blended, tail).size(), 350);
  EXPECT_EQ(concat_long_term(prev, {}, tail).size(), 350);
  MotionClip next;
  next.frames.resize(160);
  EXPECT_EQ(assemble_long_term(prev, next, 10).size(), 350);
  MotionClip shortp;
  shortp.frames.resize(4);
  EXPECT_EQ(assemble_long_term(shortp, next, 10).size(), 160);
}

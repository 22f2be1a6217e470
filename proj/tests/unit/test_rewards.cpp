#include "dip/rewards.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace dip;

namespace {

struct Fixture {
  Skeleton skel = Skeleton::standard();
  MarkerSet markers = MarkerSet::standard();
  RewardContext ctx() const {
    RewardContext c;
    c.skel = &skel;
    c.markers = &markers;
    return c;
  }
  // Rest pose lifted so the lowest foot marker sits at `height`.
  Pose lifted(double height) const {
    double low = std::numeric_limits<double>::infinity();
    const Points m = compute_markers(Pose{}, skel, markers);
    for (int i : markers.indices_of({BodyPart::kFoot})) low = std::min(low, m[static_cast<std::size_t>(i)].z());
    Pose p;
    p.set_translation(Vec3(0, 0, height - low));
    return p;
  }
};

RewardConfig only(RewardTerm t, Action a = Action::kLocomotion) {
  RewardConfig c;
  c.action = a;
  c.lambda = RewardWeights{};
  c.lambda[t] = 1.0;
  return c;
}

}  // namespace

TEST(Rewards, HistoryExamples) {
  Fixture f;
  const Eigen::VectorXd x = test::static_motion(Pose{}, 4);
  RewardContext ctx = f.ctx();
  const Points j = forward_kinematics(Pose{}, f.skel);
  ctx.history = {j, j};
  EXPECT_EQ(r_his(x, ctx, RewardConfig{}).value, 0.0);
  ctx.history[1][5] += Vec3(0.2, 0, 0);
  EXPECT_NEAR(r_his(x, ctx, RewardConfig{}).value, -0.2, 1e-12);
}

TEST(Rewards, AccelerationExamples) {
  Fixture f;
  const int S = 5;
  RewardConfig cfg;
  const Eigen::VectorXd x = test::static_motion(Pose{}, S);
  const double n = (S - 2) * f.markers.size();
  EXPECT_NEAR(r_acc(x, f.ctx(), cfg).value, -cfg.eps_acc * n, 1e-9);

  // One marker with |second difference| = eps_acc / nu^2 contributes 0.
  MarkerSet one;
  one.markers.push_back({joint::kPelvis, Vec3::Zero(), BodyPart::kOther});
  RewardContext ctx = f.ctx();
  ctx.markers = &one;
  MotionClip clip;
  for (int s = 0; s < 3; ++s) {
    Pose p;
    p.set_translation(Vec3(0.5 * cfg.eps_acc / (cfg.fps * cfg.fps) * s * s, 0, 0));
    clip.frames.push_back(p);
  }
  EXPECT_NEAR(r_acc(clip.flatten(), ctx, cfg).value, 0.0, 1e-9);
  cfg.acc_clamped = true;
  EXPECT_NEAR(r_acc(x, f.ctx(), cfg).value, 0.0, 1e-12);
}

TEST(Rewards, GoalExamples) {
  Fixture f;
  const Eigen::VectorXd x = test::static_motion(Pose{}, 4);
  RewardContext ctx = f.ctx();
  const Vec3 pelvis = forward_kinematics(Pose{}, f.skel)[0];
  ctx.goal.joints = {{joint::kPelvis, pelvis}};
  ctx.goal_frame = 2;
  EXPECT_EQ(r_goal(x, ctx, RewardConfig{}).value, 0.0);
  ctx.goal.joints[0].position += Vec3(1.5, 0, 0);
  EXPECT_NEAR(r_goal(x, ctx, RewardConfig{}).value, -1.5, 1e-12);
  ctx.goal_hold = true;
  EXPECT_NEAR(r_goal(x, ctx, RewardConfig{}).value, -3.0, 1e-12);
  ctx.goal_frame = -1;
  EXPECT_EQ(r_goal(x, ctx, RewardConfig{}).value, 0.0);
}

TEST(Rewards, ContactFloorExamples) {
  Fixture f;
  RewardConfig cfg = only(RewardTerm::kContact);
  EXPECT_NEAR(r_cont(test::static_motion(f.lifted(0.0), 3), f.ctx(), cfg).value, 0.0, 1e-12);
  EXPECT_NEAR(r_cont(test::static_motion(f.lifted(0.05), 3), f.ctx(), cfg).value, -0.04 * 3, 1e-12);
}

TEST(Rewards, ContactSdfExample) {
  Fixture f;
  RewardConfig cfg = only(RewardTerm::kContact, Action::kSit);
  const Pose p = f.lifted(0.0);
  double low = std::numeric_limits<double>::infinity();
  for (const Vec3& m : compute_markers(p, f.skel, f.markers)) low = std::min(low, m.z());
  const SceneField scene = test::linear_z_scene(low - 0.5, 0.05);
  const SceneView view(scene);
  RewardContext ctx = f.ctx();
  ctx.scene = &view;
  EXPECT_NEAR(r_cont(test::static_motion(p, 2), ctx, cfg).value, -0.49 * 2, 1e-6);
  const SceneField touching = test::linear_z_scene(low, 0.05);
  const SceneView v2(touching);
  ctx.scene = &v2;
  EXPECT_NEAR(r_cont(test::static_motion(p, 2), ctx, cfg).value, 0.0, 1e-6);
}

TEST(Rewards, PenetrationExamples) {
  Fixture f;
  MarkerSet ms;
  ms.markers.push_back({joint::kPelvis, Vec3::Zero(), BodyPart::kOther});
  ms.markers.push_back({joint::kHead, Vec3::Zero(), BodyPart::kOther});
  RewardContext ctx = f.ctx();
  ctx.markers = &ms;
  RewardConfig cfg = only(RewardTerm::kPenetration);
  const Eigen::VectorXd x = test::static_motion(Pose{}, 1);
  const SceneField outside = test::linear_z_scene(-0.5);
  const SceneView v1(outside);
  ctx.scene = &v1;
  EXPECT_EQ(r_pene(x, ctx, cfg).value, 0.0);
  const double pelvis_z = forward_kinematics(Pose{}, f.skel)[0].z();
  const SceneField cut = test::linear_z_scene(pelvis_z + 0.1, 0.05);
  const SceneView v2(cut);
  ctx.scene = &v2;
  const RewardValue r = r_pene(x, ctx, cfg);
  EXPECT_NEAR(r.value, -0.07, 1e-6);
  // Ascent direction pushes the root up, along +grad SDF.
  EXPECT_GT(r.gradient[kTranslationOffset + 2], 0.5);
  EXPECT_NEAR(r.gradient[kTranslationOffset], 0.0, 1e-9);
}

TEST(Rewards, PenetrationGradientFollowsBoxSdf) {
  Fixture f;
  ObstacleSpec spec;
  spec.bounds_min = Vec3(-2, -2, 0);
  spec.bounds_max = Vec3(2, 2, 2);
  spec.boxes.push_back({Vec3(0.15, 0.0, 0.5), Vec3(1, 1, 1)});
  const SceneField scene = bake_boxes(spec);
  const SceneView view(scene);
  MarkerSet ms;
  ms.markers.push_back({joint::kPelvis, Vec3::Zero(), BodyPart::kOther});
  RewardContext ctx = f.ctx();
  ctx.markers = &ms;
  ctx.scene = &view;
  Pose p;
  p.set_translation(Vec3(-0.25, 0.0, -0.93 + 0.6));  // pelvis 0.1 inside the -x face
  const RewardValue r = r_pene(test::static_motion(p, 1), ctx, only(RewardTerm::kPenetration));
  EXPECT_LT(r.value, 0.0);
  const Vec3 g = r.gradient.segment<3>(kTranslationOffset);
  const Vec3 n = sdf_query(scene, forward_kinematics(p, f.skel)[0]).gradient;
  EXPECT_GT(g.normalized().dot(n.normalized()), 0.999);
  EXPECT_LT(n.x(), 0.0);
}

TEST(Rewards, SkatingExamples) {
  Fixture f;
  RewardConfig cfg = only(RewardTerm::kSkating);
  EXPECT_EQ(r_skt(test::static_motion(Pose{}, 3), f.ctx(), cfg).value, 0.0);
  MotionClip c;
  for (int s = 0; s < 2; ++s) {
    Pose p;
    p.set_translation(Vec3(0.05 * s, 0, 0));
    c.frames.push_back(p);
  }
  EXPECT_NEAR(r_skt(c.flatten(), f.ctx(), cfg).value, -1.5, 1e-9);
}

TEST(Rewards, TotalCombinesTerms) {
  Fixture f;
  std::mt19937_64 rng(3);
  MotionClip c;
  for (int s = 0; s < 3; ++s) c.frames.push_back(test::random_pose(rng, 0.2));
  const Eigen::VectorXd x = c.flatten();
  RewardContext ctx = f.ctx();
  ctx.history = {forward_kinematics(Pose{}, f.skel)};
  ctx.goal.joints = {{joint::kPelvis, Vec3(1, 2, 0.9)}};
  ctx.goal_frame = 2;
  const SceneField scene = test::linear_z_scene(0.3);
  const SceneView view(scene);
  ctx.scene = &view;

  RewardConfig zero;
  zero.lambda = RewardWeights{};
  const RewardBreakdown z = r_total(x, ctx, zero);
  EXPECT_EQ(z.total, 0.0);
  EXPECT_EQ(z.gradient.norm(), 0.0);

  RewardConfig cfg = RewardConfig::defaults(Action::kSit);
  cfg.lambda = {0.3, 0.002, 1.1, 0.7, 2.0, 0.05};
  const RewardBreakdown r = r_total(x, ctx, cfg);
  double hand = 0.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.size());
  for (RewardTerm t : kAllRewardTerms) {
    const RewardValue v = evaluate_term(t, x, ctx, cfg);
    hand += cfg.lambda[t] * v.value;
    grad += cfg.lambda[t] * v.gradient;
    EXPECT_DOUBLE_EQ(r.value(t), v.value);
  }
  EXPECT_NEAR(r.total, hand, 1e-9 * std::abs(hand));
  EXPECT_LT((r.gradient - grad).norm(), 1e-9 * grad.norm());

  RewardConfig twice = cfg;
  for (RewardTerm t : kAllRewardTerms) twice.lambda[t] *= 2.0;
  EXPECT_LT((r_total(x, ctx, twice).gradient - 2.0 * r.gradient).norm(), 1e-9 * r.gradient.norm());
}

TEST(Rewards, GradientsMatchFiniteDifferences) {
  Fixture f;
  std::mt19937_64 rng(4);
  MotionClip c;
  for (int s = 0; s < 4; ++s) c.frames.push_back(test::random_pose(rng, 0.3));
  const Eigen::VectorXd x = c.flatten();
  RewardContext ctx = f.ctx();
  ctx.goal.joints = {{joint::kPelvis, Vec3(1, 2, 0.9)}, {joint::kLeftWrist, Vec3(-1, 0.5, 1.2)}};
  ctx.goal_frame = 3;
  const RewardConfig cfg = only(RewardTerm::kGoal);
  const RewardValue r = r_goal(x, ctx, cfg);
  const Eigen::VectorXd fd = fd_gradient_oracle([&](const Eigen::VectorXd& v) { return r_goal(v, ctx, cfg).value; }, x);
  EXPECT_LT((r.gradient - fd).norm(), 1e-6 * fd.norm());
}

TEST(Rewards, ConfigValidation) {
  RewardConfig c;
  c.eps_acc = -1.0;
  EXPECT_THROW(c.validate(), RewardError);
  Fixture f;
  RewardContext ctx = f.ctx();
  EXPECT_THROW(r_pene(test::static_motion(Pose{}, 2), ctx, only(RewardTerm::kPenetration)), RewardError);
}

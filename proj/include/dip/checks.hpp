#pragma once

// Self-checks shared by the command line and the test suites: schedule
// statistics, reward gradients against finite differences, blending and
// canonicalization invariants.

#include "dip/diffusion.hpp"
#include "dip/kinematics.hpp"
#include "dip/rewards.hpp"
#include "dip/scene.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace dip {

struct CheckResult {
  bool passed = true;
  std::string detail;
};

// ---------------------------------------------------------------------------
// Schedule: iterated single-step noising against the closed form.

struct ScheduleCheckOptions {
  int samples = 10000;
  std::vector<int> steps = {1, 10, 100, 1000};
  std::uint64_t seed = 7;
  double mean_sigmas = 4.0;
  double variance_tolerance = 0.05;
};

inline CheckResult check_schedule(const NoiseSchedule& s, const ScheduleCheckOptions& opt = {}) {
  const Eigen::Vector4d x0(1.0, -0.5, 2.0, 0.0);
  const int last = *std::max_element(opt.steps.begin(), opt.steps.end());
  if (last > s.T) return {false, "requested step beyond the schedule"};
  Rng rng(opt.seed);
  std::normal_distribution<double> normal;
  const auto n = static_cast<std::size_t>(opt.samples);
  std::vector<Eigen::Vector4d> x(n, x0);
  CheckResult out;
  std::ostringstream msg;
  for (int t = 1; t <= last; ++t) {
    const double a = std::sqrt(s.alpha[static_cast<std::size_t>(t)]);
    const double b = std::sqrt(s.beta[static_cast<std::size_t>(t)]);
    for (auto& v : x) {
      for (int i = 0; i < 4; ++i) v[i] = a * v[i] + b * normal(rng);
    }
    if (std::find(opt.steps.begin(), opt.steps.end(), t) == opt.steps.end()) continue;
    const double abar = s.alpha_bar[static_cast<std::size_t>(t)];
    const double var = 1.0 - abar;
    Eigen::Vector4d mean = Eigen::Vector4d::Zero();
    for (const auto& v : x) mean += v;
    mean /= static_cast<double>(n);
    Eigen::Vector4d m2 = Eigen::Vector4d::Zero();
    for (const auto& v : x) m2 += (v - mean).cwiseAbs2();
    m2 /= static_cast<double>(n - 1);
    double worst_mean = 0.0;
    double worst_var = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double z = std::abs(mean[i] - std::sqrt(abar) * x0[i]) / std::sqrt(var / static_cast<double>(n));
      worst_mean = std::max(worst_mean, z);
      worst_var = std::max(worst_var, std::abs(m2[i] / var - 1.0));
    }
    const bool ok = worst_mean <= opt.mean_sigmas && worst_var <= opt.variance_tolerance;
    out.passed = out.passed && ok;
    msg << "t=" << t << " mean_z=" << worst_mean << " var_rel=" << worst_var << (ok ? "" : " FAIL") << "; ";
  }
  out.detail = msg.str();
  return out;
}

// ---------------------------------------------------------------------------
// Reward gradients.

struct GradientCheckOptions {
  int motions = 100;
  int frames = 6;
  double step = 1e-5;
  double tolerance = 1e-3;
  double margin = 2e-3;  // minimum distance from every kink of the reward
  std::uint64_t seed = 11;
};

/// A small scene with one box obstacle, spacing 0.1, around the origin.
inline SceneField gradient_check_scene() {
  ObstacleSpec spec;
  spec.bounds_min = Vec3(-2.0, -2.0, 0.0);
  spec.bounds_max = Vec3(2.0, 2.0, 2.0);
  spec.spacing = 0.1;
  spec.boxes.push_back({Vec3(0.0, 0.25, 0.5), Vec3(0.8, 0.6, 1.0)});
  return bake_boxes(spec);
}

namespace check_detail {

// Smallest distance from any kink that the reward's active pieces depend on.
// A motion is accepted only when this exceeds the configured margin, so that
// the finite-difference stencil never straddles a kink.
inline double kink_margin(RewardTerm term, const Eigen::VectorXd& x, const RewardContext& ctx, const RewardConfig& cfg) {
  const int S = static_cast<int>(x.size() / kPoseDim);
  std::vector<FrameKinematics> fk;
  for (int s = 0; s < S; ++s) {
    fk.push_back(frame_kinematics(Pose(PoseVector(x.segment<kPoseDim>(static_cast<Eigen::Index>(s) * kPoseDim))),
                                  *ctx.skel, ctx.markers));
  }
  double m = std::numeric_limits<double>::infinity();
  auto cell_margin = [&](const Vec3& p) {
    const SdfGrid& g = ctx.scene->scene().sdf;
    const Vec3 q = ctx.scene->local_to_world().apply(p);
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      const double u = (q[a] - g.origin[a]) / g.spacing;
      best = std::min(best, std::abs(u - std::round(u)) * g.spacing);
    }
    return best;
  };
  auto min_gap = [](std::vector<double> v) {
    if (v.size() < 2) return std::numeric_limits<double>::infinity();
    std::sort(v.begin(), v.end());
    return v[1] - v[0];
  };
  const auto& ms = *ctx.markers;
  switch (term) {
    case RewardTerm::kHistory:
      for (std::size_t i = 0; i < ctx.history.size(); ++i) {
        for (std::size_t j = 0; j < ctx.history[i].size(); ++j) {
          m = std::min(m, (fk[i].joints[j] - ctx.history[i][j]).cwiseAbs().minCoeff());
        }
      }
      break;
    case RewardTerm::kGoal:
      for (const auto& gj : ctx.goal.joints) {
        m = std::min(m, (fk[static_cast<std::size_t>(ctx.goal_frame)].joints[static_cast<std::size_t>(gj.joint)] -
                         gj.position).cwiseAbs().minCoeff());
      }
      break;
    case RewardTerm::kAcceleration:
      for (int s = 1; s + 1 < S; ++s) {
        for (std::size_t k = 0; k < ms.markers.size(); ++k) {
          const auto su = static_cast<std::size_t>(s);
          const double n = (fk[su + 1].markers[k] + fk[su - 1].markers[k] - 2.0 * fk[su].markers[k]).norm();
          m = std::min(m, n);
          if (cfg.acc_clamped) m = std::min(m, std::abs(n * cfg.fps * cfg.fps - cfg.eps_acc) / (cfg.fps * cfg.fps));
        }
      }
      break;
    case RewardTerm::kContact:
      for (int s = 0; s < S; ++s) {
        std::vector<double> v;
        const auto su = static_cast<std::size_t>(s);
        if (cfg.contact_variant() == ContactVariant::kFloor) {
          for (std::size_t k = 0; k < ms.markers.size(); ++k) {
            if (ms.markers[k].part == BodyPart::kFoot) v.push_back(fk[su].markers[k].z());
          }
          const double lo = *std::min_element(v.begin(), v.end()) - ctx.scene->floor_height();
          m = std::min({m, min_gap(v), std::abs(std::abs(lo) - cfg.eps_cont), std::abs(lo)});
        } else {
          std::size_t best = 0;
          for (std::size_t k = 0; k < ms.markers.size(); ++k) {
            v.push_back(ctx.scene->sdf(fk[su].markers[k]).value);
            if (v[k] < v[best]) best = k;
          }
          m = std::min({m, min_gap(v), std::abs(std::abs(v[best]) - cfg.eps_cont), std::abs(v[best]),
                        cell_margin(fk[su].markers[best])});
        }
      }
      break;
    case RewardTerm::kPenetration:
      for (int s = 0; s < S; ++s) {
        for (std::size_t k = 0; k < ms.markers.size(); ++k) {
          const Vec3& p = fk[static_cast<std::size_t>(s)].markers[k];
          const double v = ctx.scene->sdf(p).value;
          m = std::min(m, std::abs(-v - cfg.eps_pene));
          if (-v - cfg.eps_pene > 0.0) m = std::min(m, cell_margin(p));
        }
      }
      break;
    case RewardTerm::kSkating: {
      const auto parts = cfg.contact_parts();
      for (int s = 0; s + 1 < S; ++s) {
        std::vector<double> v;
        for (std::size_t k = 0; k < ms.markers.size(); ++k) {
          if (std::find(parts.begin(), parts.end(), ms.markers[k].part) == parts.end()) continue;
          const auto su = static_cast<std::size_t>(s);
          v.push_back((fk[su + 1].markers[k] - fk[su].markers[k]).norm());
        }
        const double lo = *std::min_element(v.begin(), v.end());
        m = std::min({m, min_gap(v), std::abs(lo * cfg.fps - cfg.eps_vel) / cfg.fps, lo});
      }
      break;
    }
  }
  return m;
}

inline Eigen::VectorXd random_motion(int frames, Rng& rng, const Vec3& centre, double spread) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Eigen::VectorXd x(static_cast<Eigen::Index>(frames) * kPoseDim);
  for (int s = 0; s < frames; ++s) {
    for (int d = 0; d < kTranslationOffset; ++d) x[s * kPoseDim + d] = 0.3 * normal(rng);
    for (int a = 0; a < 3; ++a) x[s * kPoseDim + kTranslationOffset + a] = centre[a] + spread * uni(rng);
  }
  return x;
}

}  // namespace check_detail

struct GradientCheckReport {
  RewardTerm term = RewardTerm::kHistory;
  std::string variant;
  int motions = 0;
  int rejected = 0;
  double worst_relative_error = 0.0;
  bool passed = true;
};

/// Checks one reward term on random motions whose active set is stable.
inline GradientCheckReport check_reward_gradient(RewardTerm term, RewardConfig cfg, const GradientCheckOptions& opt = {}) {
  static const Skeleton skel = Skeleton::standard();
  static const MarkerSet markers = MarkerSet::standard();
  static const SceneField scene = gradient_check_scene();
  Rng rng(opt.seed + 97u * static_cast<std::uint64_t>(term) + (cfg.acc_clamped ? 5u : 0u) +
          (cfg.action == Action::kLocomotion ? 0u : 13u));
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  // A yawed, shifted local frame exercises the scene view as well.
  const SceneView view(scene, RigidTransform{rot_z(0.4), Vec3(0.1, -0.05, 0.0)});
  RewardContext ctx;
  ctx.skel = &skel;
  ctx.markers = &markers;
  ctx.scene = &view;

  GradientCheckReport rep;
  rep.term = term;
  rep.variant = std::string(to_string(cfg.action)) + (cfg.acc_clamped ? "/clamped" : "");
  int attempts = 0;
  while (rep.motions < opt.motions) {
    if (++attempts > 200 * opt.motions) {
      rep.passed = false;
      break;
    }
    // Motions overlap the box so scene terms are active; the pelvis height
    // is varied so that the floor contact term is active too.
    const Vec3 centre(0.0, 0.0, term == RewardTerm::kContact ? -0.6 : -0.5);
    Eigen::VectorXd x = check_detail::random_motion(opt.frames, rng, centre, 0.3);
    ctx.history.clear();
    for (int s = 0; s < 2; ++s) {
      Points p = forward_kinematics(Pose(PoseVector(x.segment<kPoseDim>(s * kPoseDim))), skel);
      // Offsets bounded away from zero keep every L1 component off its kink.
      for (auto& v : p) {
        for (int a = 0; a < 3; ++a) {
          const double u = uni(rng);
          v[a] += (u < 0.0 ? -1.0 : 1.0) * (0.01 + 0.04 * std::abs(u));
        }
      }
      ctx.history.push_back(p);
    }
    ctx.goal.joints = {{joint::kPelvis, Vec3(uni(rng), uni(rng), 0.9)}, {joint::kLeftWrist, Vec3(uni(rng), 0.5, 1.0)}};
    ctx.goal_frame = opt.frames - 2;

    if (check_detail::kink_margin(term, x, ctx, cfg) < opt.margin) {
      ++rep.rejected;
      continue;
    }
    const RewardValue r = evaluate_term(term, x, ctx, cfg);
    if (r.gradient.norm() == 0.0) {
      ++rep.rejected;
      continue;
    }
    const Eigen::VectorXd fd = fd_gradient_oracle(
        [&](const Eigen::VectorXd& y) { return evaluate_term(term, y, ctx, cfg).value; }, x, opt.step);
    const double rel = (r.gradient - fd).norm() / std::max(fd.norm(), 1e-12);
    rep.worst_relative_error = std::max(rep.worst_relative_error, rel);
    if (rel > opt.tolerance) rep.passed = false;
    ++rep.motions;
  }
  return rep;
}

/// Every reward term, including both contact variants and both
/// acceleration forms.
inline std::vector<GradientCheckReport> check_all_reward_gradients(const GradientCheckOptions& opt = {}) {
  std::vector<GradientCheckReport> out;
  for (RewardTerm t : kAllRewardTerms) {
    RewardConfig cfg = RewardConfig::defaults(Action::kSit);
    out.push_back(check_reward_gradient(t, cfg, opt));
    if (t == RewardTerm::kContact || t == RewardTerm::kSkating) {
      out.push_back(check_reward_gradient(t, RewardConfig::defaults(Action::kLocomotion), opt));
    }
    if (t == RewardTerm::kAcceleration) {
      cfg.acc_clamped = true;
      cfg.eps_acc = 5.0;
      out.push_back(check_reward_gradient(t, cfg, opt));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Blending.

/// Largest single-frame joint displacement between consecutive frames in
/// [begin, end).
inline double max_joint_step(const std::vector<Points>& joints, std::size_t begin, std::size_t end) {
  double m = 0.0;
  for (std::size_t s = begin + 1; s < end; ++s) {
    for (std::size_t j = 0; j < joints[s].size(); ++j) m = std::max(m, (joints[s][j] - joints[s - 1][j]).norm());
  }
  return m;
}

struct BlendCheckReport {
  double endpoint_error = 0.0;
  double orthonormality = 0.0;
  double boundary_jump = 0.0;
  double intra_jump = 0.0;
  bool passed = true;
};

/// Boundary continuity of an assembled motion: `first_len` frames came from
/// the first segment and the last `overlap` of them were blended.
inline void measure_boundary(const MotionClip& assembled, int first_len, int overlap, const Skeleton& skel,
                             BlendCheckReport& rep) {
  std::vector<Points> j;
  for (const auto& p : assembled.frames) j.push_back(forward_kinematics(p, skel));
  const auto keep = static_cast<std::size_t>(first_len - overlap);
  const auto blend_end = static_cast<std::size_t>(first_len);
  rep.intra_jump = std::max(max_joint_step(j, 0, keep), max_joint_step(j, blend_end, j.size()));
  rep.boundary_jump = max_joint_step(j, keep > 0 ? keep - 1 : 0, std::min(blend_end + 1, j.size()));
}

/// Endpoint exactness and orthonormality on random poses, then continuity on
/// a pair of smooth synthetic segments.
inline BlendCheckReport check_blend(std::uint64_t seed = 3, int trials = 100) {
  const Skeleton skel = Skeleton::standard();
  Rng rng(seed);
  std::normal_distribution<double> normal;
  auto random_pose = [&] {
    Pose p;
    for (int d = 0; d < kPoseDim; ++d) p.v[d] = 0.8 * normal(rng);
    return p;
  };
  BlendCheckReport rep;
  for (int i = 0; i < trials; ++i) {
    const Pose a = random_pose();
    const Pose b = random_pose();
    rep.endpoint_error = std::max({rep.endpoint_error, (blend_pose(a, b, 0.0).v - a.v).cwiseAbs().maxCoeff(),
                                   (blend_pose(a, b, 1.0).v - b.v).cwiseAbs().maxCoeff()});
    std::vector<Pose> ha, hb;
    for (int s = 0; s < kMaxHistory; ++s) {
      ha.push_back(random_pose());
      hb.push_back(random_pose());
    }
    for (const auto& p : blend_overlap(ha, hb)) {
      for (int r = 0; r < kRotationCount; ++r) {
        rep.orthonormality = std::max(rep.orthonormality, orthonormality_error(aa_to_mat(p.rotation(r))));
      }
    }
  }

  // Two smooth walks whose overlap windows disagree slightly.
  auto segment = [&](double phase, const Vec3& start, int frames) {
    MotionClip c;
    for (int s = 0; s < frames; ++s) {
      Pose p;
      const double u = static_cast<double>(s) / kDefaultFps;
      p.set_rotation(joint::kLeftHip, Vec3(0.35 * std::sin(2.0 * std::numbers::pi * u + phase), 0.0, 0.0));
      p.set_rotation(joint::kRightHip, Vec3(-0.35 * std::sin(2.0 * std::numbers::pi * u + phase), 0.0, 0.0));
      p.set_rotation(0, Vec3(0.0, 0.0, 0.02 * s));
      p.set_translation(start + Vec3(0.0, 0.03 * s, 0.0));
      c.frames.push_back(p);
    }
    return c;
  };
  const MotionClip first = segment(0.0, Vec3::Zero(), 60);
  const Pose tail_start = first.frames[50];
  MotionClip second = segment(0.3, tail_start.translation() + Vec3(0.02, 0.0, 0.0), 60);
  for (auto& p : second.frames) p.set_rotation(0, p.rotation(0) + tail_start.rotation(0));
  const MotionClip assembled = assemble_long_term(first, second, kMaxHistory);
  measure_boundary(assembled, first.size(), kMaxHistory, skel, rep);
  rep.passed = rep.endpoint_error <= 1e-12 && rep.orthonormality <= 1e-6 && rep.boundary_jump <= 2.0 * rep.intra_jump;
  return rep;
}

// ---------------------------------------------------------------------------
// Canonicalization.

struct CanonicalCheckReport {
  double pelvis_error = 0.0;
  double orientation_error = 0.0;
  double invariance_error = 0.0;
  bool passed = true;
};

inline CanonicalCheckReport check_canonicalization(std::uint64_t seed = 5, int trials = 100, int frames = 8) {
  const Skeleton skel = Skeleton::standard();
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  CanonicalCheckReport rep;
  for (int i = 0; i < trials; ++i) {
    MotionClip m;
    for (int s = 0; s < frames; ++s) {
      Pose p;
      for (int d = 0; d < kTranslationOffset; ++d) p.v[d] = 0.3 * normal(rng);
      p.set_rotation(0, Vec3(0.2 * normal(rng), 0.2 * normal(rng), 3.0 * uni(rng)));
      p.set_translation(Vec3(3.0 * uni(rng), 3.0 * uni(rng), 0.2 * uni(rng)));
      m.frames.push_back(p);
    }
    const auto [local, T] = canonicalize(m, skel);
    const Points j = forward_kinematics(local.frames.front(), skel);
    rep.pelvis_error = std::max(rep.pelvis_error, j[joint::kPelvis].norm());
    const Vec3 hips = j[joint::kRightHip] - j[joint::kLeftHip];
    rep.orientation_error = std::max(rep.orientation_error, std::abs(hips.y()));
    if (hips.x() <= 0.0) rep.orientation_error = std::max(rep.orientation_error, 1.0);

    const RigidTransform pre{rot_z(3.0 * uni(rng)), Vec3(5.0 * uni(rng), 5.0 * uni(rng), 0.0)};
    const auto [local2, T2] = canonicalize(apply_transform(pre, m, skel), skel);
    for (int s = 0; s < frames; ++s) {
      const Points a = forward_kinematics(local.frames[static_cast<std::size_t>(s)], skel);
      const Points b = forward_kinematics(local2.frames[static_cast<std::size_t>(s)], skel);
      for (std::size_t k = 0; k < a.size(); ++k) rep.invariance_error = std::max(rep.invariance_error, (a[k] - b[k]).norm());
    }
  }
  rep.passed = rep.pelvis_error <= 1e-9 && rep.orientation_error <= 1e-9 && rep.invariance_error <= 1e-9;
  return rep;
}

}  // namespace dip

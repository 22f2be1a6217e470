#pragma once

// Evaluation metrics over assembled world-space motions.

#include "dip/kinematics.hpp"
#include "dip/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace dip {

struct MetricsOptions {
  std::vector<int> foot_joints = {joint::kLeftAnkle, joint::kRightAnkle, joint::kLeftFoot, joint::kRightFoot};
  double contact_height = 0.05;
  double contact_speed = 0.075;
  double arrival_radius = 0.1;
};

struct MetricsReport {
  double finish_time = 0.0;
  double avg_goal_distance = 0.0;
  double contact_score = 0.0;
  double pene_mean = 0.0;
  double pene_max = 0.0;
  double walkable_score = 0.0;

  static constexpr std::array<const char*, 6> kKeys = {"finish_time", "avg_goal_distance", "contact_score",
                                                       "pene_mean",   "pene_max",          "walkable_score"};

  std::array<double, 6> values() const {
    return {finish_time, avg_goal_distance, contact_score, pene_mean, pene_max, walkable_score};
  }

  std::string to_text() const {
    std::ostringstream out;
    const auto v = values();
    for (std::size_t i = 0; i < v.size(); ++i) out << kKeys[i] << " = " << scene_detail::format_real(v[i]) << '\n';
    return out.str();
  }
};

/// Per-frame joint positions of a whole clip.
inline std::vector<Points> clip_joints(const MotionClip& motion, const Skeleton& skel) {
  std::vector<Points> out;
  out.reserve(motion.frames.size());
  for (const auto& p : motion.frames) out.push_back(forward_kinematics(p, skel));
  return out;
}

/// Frame score exp(-(|min foot z - floor| - h0)+) * exp(-(min foot speed - v0)+),
/// averaged over frames. Speeds use forward differences (backward on the last
/// frame) and are in units per second.
inline double contact_score(const std::vector<Points>& joints, double floor_height, double fps,
                            const MetricsOptions& opt = {}) {
  const int S = static_cast<int>(joints.size());
  if (S == 0) return 0.0;
  double sum = 0.0;
  for (int s = 0; s < S; ++s) {
    double min_z = std::numeric_limits<double>::infinity();
    double min_v = std::numeric_limits<double>::infinity();
    const int a = s + 1 < S ? s : s - 1;
    for (int j : opt.foot_joints) {
      const auto ju = static_cast<std::size_t>(j);
      min_z = std::min(min_z, joints[static_cast<std::size_t>(s)][ju].z());
      const double v =
          a >= 0 ? (joints[static_cast<std::size_t>(a + 1)][ju] - joints[static_cast<std::size_t>(a)][ju]).norm() * fps : 0.0;
      min_v = std::min(min_v, v);
    }
    const double h = std::abs(min_z - floor_height);
    sum += std::exp(-std::max(h - opt.contact_height, 0.0)) * std::exp(-std::max(min_v - opt.contact_speed, 0.0));
  }
  return sum / S;
}

inline double contact_score(const MotionClip& motion, const Skeleton& skel, const SceneField& scene,
                            const MetricsOptions& opt = {}) {
  return contact_score(clip_joints(motion, skel), scene.floor_height, motion.fps, opt);
}

struct PenetrationStats {
  double mean = 0.0;
  double max = 0.0;
};

/// Per-frame sum over markers of |min(sdf, 0)|; mean and max over frames.
inline PenetrationStats penetration_stats(const MotionClip& motion, const Skeleton& skel, const MarkerSet& markers,
                                          const SceneField& scene) {
  PenetrationStats out;
  if (motion.empty()) return out;
  for (const auto& p : motion.frames) {
    double frame = 0.0;
    for (const Vec3& m : compute_markers(p, skel, markers)) frame += std::abs(std::min(sdf_query(scene, m).value, 0.0));
    out.mean += frame;
    out.max = std::max(out.max, frame);
  }
  out.mean /= static_cast<double>(motion.size());
  return out;
}

/// Fraction of marker samples over walkable columns.
inline double walkable_score(const MotionClip& motion, const Skeleton& skel, const MarkerSet& markers,
                             const SceneField& scene) {
  std::size_t total = 0;
  std::size_t good = 0;
  for (const auto& p : motion.frames) {
    for (const Vec3& m : compute_markers(p, skel, markers)) {
      ++total;
      good += scene.is_walkable(m) ? 1 : 0;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(good) / static_cast<double>(total);
}

struct FinishMetrics {
  double finish_time = 0.0;
  double goal_distance = 0.0;
};

/// Arrival is the first frame (1-based) from which the horizontal pelvis
/// distance stays within the radius; never arriving counts as S frames.
inline FinishMetrics finish_metrics(const std::vector<Points>& joints, const Vec3& goal, double fps,
                                    const MetricsOptions& opt = {}) {
  FinishMetrics out;
  const int S = static_cast<int>(joints.size());
  if (S == 0) return out;
  auto dist = [&](int s) {
    const Vec3& p = joints[static_cast<std::size_t>(s)][joint::kPelvis];
    return std::hypot(p.x() - goal.x(), p.y() - goal.y());
  };
  int arrive = S;
  for (int s = S - 1; s >= 0; --s) {
    if (dist(s) > opt.arrival_radius) break;
    arrive = s + 1;
  }
  if (dist(S - 1) > opt.arrival_radius) arrive = S;
  out.finish_time = arrive / fps;
  out.goal_distance = dist(S - 1);
  return out;
}

/// Largest marker acceleration |m[s+1] + m[s-1] - 2 m[s]| * fps^2.
inline double max_marker_acceleration(const MotionClip& motion, const Skeleton& skel, const MarkerSet& markers) {
  std::vector<Points> m;
  m.reserve(motion.frames.size());
  for (const auto& p : motion.frames) m.push_back(compute_markers(p, skel, markers));
  double best = 0.0;
  for (std::size_t s = 1; s + 1 < m.size(); ++s) {
    for (std::size_t k = 0; k < m[s].size(); ++k) best = std::max(best, (m[s + 1][k] + m[s - 1][k] - 2.0 * m[s][k]).norm());
  }
  return best * motion.fps * motion.fps;
}

inline MetricsReport evaluate_metrics(const MotionClip& motion, const Skeleton& skel, const MarkerSet& markers,
                                      const SceneField& scene, const Vec3& goal_pelvis, const MetricsOptions& opt = {}) {
  const auto joints = clip_joints(motion, skel);
  MetricsReport r;
  const FinishMetrics f = finish_metrics(joints, goal_pelvis, motion.fps, opt);
  r.finish_time = f.finish_time;
  r.avg_goal_distance = f.goal_distance;
  r.contact_score = contact_score(joints, scene.floor_height, motion.fps, opt);
  const PenetrationStats p = penetration_stats(motion, skel, markers, scene);
  r.pene_mean = p.mean;
  r.pene_max = p.max;
  r.walkable_score = walkable_score(motion, skel, markers, scene);
  return r;
}

}  // namespace dip

#pragma once

// Simplified 22-joint skeleton, forward kinematics with reverse-mode
// derivatives, surface markers, motion containers, local-frame
// canonicalization and power-space blending of overlapping motions.

#include "dip/rotmath.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dip {

inline constexpr int kPoseDim = 69;
inline constexpr int kJointCount = 22;
inline constexpr int kRotationCount = 22;  // global orientation + 21 joints
inline constexpr int kTranslationOffset = 66;
inline constexpr int kDefaultFrames = 160;
inline constexpr double kDefaultFps = 40.0;
inline constexpr int kMaxHistory = 10;

// Joint indices of the default skeleton.
namespace joint {
inline constexpr int kPelvis = 0;
inline constexpr int kLeftHip = 1;
inline constexpr int kRightHip = 2;
inline constexpr int kSpine1 = 3;
inline constexpr int kLeftKnee = 4;
inline constexpr int kRightKnee = 5;
inline constexpr int kSpine2 = 6;
inline constexpr int kLeftAnkle = 7;
inline constexpr int kRightAnkle = 8;
inline constexpr int kSpine3 = 9;
inline constexpr int kLeftFoot = 10;
inline constexpr int kRightFoot = 11;
inline constexpr int kNeck = 12;
inline constexpr int kLeftCollar = 13;
inline constexpr int kRightCollar = 14;
inline constexpr int kHead = 15;
inline constexpr int kLeftShoulder = 16;
inline constexpr int kRightShoulder = 17;
inline constexpr int kLeftElbow = 18;
inline constexpr int kRightElbow = 19;
inline constexpr int kLeftWrist = 20;
inline constexpr int kRightWrist = 21;
}  // namespace joint

class KinematicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using PoseVector = Eigen::Matrix<double, kPoseDim, 1>;
using Points = std::vector<Vec3>;

/// One frame: global orientation (3), 21 joint axis-angles (63), translation (3).
struct Pose {
  PoseVector v = PoseVector::Zero();

  Pose() = default;
  explicit Pose(const PoseVector& values) : v(values) {}

  /// Rotation r: 0 is the global orientation, r >= 1 the local rotation of joint r.
  AxisAngle rotation(int r) const { return v.segment<3>(3 * r); }
  void set_rotation(int r, const AxisAngle& a) { v.segment<3>(3 * r) = a; }
  Vec3 translation() const { return v.segment<3>(kTranslationOffset); }
  void set_translation(const Vec3& t) { v.segment<3>(kTranslationOffset) = t; }
  bool finite() const { return v.allFinite(); }

  friend bool operator==(const Pose& a, const Pose& b) { return a.v == b.v; }
};

struct MotionClip {
  std::vector<Pose> frames;
  double fps = kDefaultFps;

  int size() const { return static_cast<int>(frames.size()); }
  bool empty() const { return frames.empty(); }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(frames.size()) * kPoseDim);
    for (std::size_t s = 0; s < frames.size(); ++s) {
      out.segment<kPoseDim>(static_cast<Eigen::Index>(s) * kPoseDim) = frames[s].v;
    }
    return out;
  }

  static MotionClip from_flat(const Eigen::VectorXd& x, double fps = kDefaultFps) {
    if (x.size() % kPoseDim != 0) {
      throw KinematicsError("motion vector length " + std::to_string(x.size()) +
                            " is not a multiple of 69");
    }
    MotionClip clip;
    clip.fps = fps;
    const Eigen::Index n = x.size() / kPoseDim;
    clip.frames.resize(static_cast<std::size_t>(n));
    for (Eigen::Index s = 0; s < n; ++s) {
      clip.frames[static_cast<std::size_t>(s)].v = x.segment<kPoseDim>(s * kPoseDim);
    }
    return clip;
  }
};

struct Skeleton {
  std::vector<int> parents;
  std::vector<Vec3> offsets;  // rest offset from parent; joint 0: pelvis offset from translation

  int joint_count() const { return static_cast<int>(parents.size()); }
  Vec3 pelvis_offset() const { return offsets.at(0); }

  /// Parents must precede children, so index order is a topological order.
  void validate() const {
    if (parents.size() != offsets.size() || parents.empty()) {
      throw KinematicsError("skeleton: parents/offsets size mismatch");
    }
    if (parents.size() != static_cast<std::size_t>(kJointCount)) {
      throw KinematicsError("skeleton: expected 22 joints, got " +
                            std::to_string(parents.size()));
    }
    if (parents[0] != -1) throw KinematicsError("skeleton: joint 0 must be the root");
    for (std::size_t j = 1; j < parents.size(); ++j) {
      if (parents[j] < 0 || parents[j] >= static_cast<int>(j)) {
        throw KinematicsError("skeleton: joint " + std::to_string(j) +
                              " has invalid parent " + std::to_string(parents[j]));
      }
    }
    for (const auto& o : offsets) {
      if (!o.allFinite()) throw KinematicsError("skeleton: non-finite offset");
    }
  }

  /// Standing height about 1.7, z up, facing +y, right side on +x.
  static Skeleton standard() {
    Skeleton s;
    s.parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
    s.offsets = {
        {0.0, 0.0, 0.93},      // pelvis
        {-0.09, 0.0, -0.07},   // left hip
        {0.09, 0.0, -0.07},    // right hip
        {0.0, -0.01, 0.11},    // spine1
        {-0.01, 0.0, -0.39},   // left knee
        {0.01, 0.0, -0.39},    // right knee
        {0.0, 0.0, 0.13},      // spine2
        {0.0, -0.02, -0.39},   // left ankle
        {0.0, -0.02, -0.39},   // right ankle
        {0.0, 0.01, 0.05},     // spine3
        {0.0, 0.12, -0.06},    // left foot
        {0.0, 0.12, -0.06},    // right foot
        {0.0, -0.01, 0.21},    // neck
        {-0.08, 0.0, 0.12},    // left collar
        {0.08, 0.0, 0.12},     // right collar
        {0.0, 0.03, 0.09},     // head
        {-0.11, 0.0, 0.03},    // left shoulder
        {0.11, 0.0, 0.03},     // right shoulder
        {-0.26, 0.0, 0.0},     // left elbow
        {0.26, 0.0, 0.0},      // right elbow
        {-0.25, 0.0, 0.0},     // left wrist
        {0.25, 0.0, 0.0},      // right wrist
    };
    return s;
  }
};

enum class BodyPart { kFoot, kGluteus, kBack, kHand, kOther };

inline std::string_view to_string(BodyPart p) {
  switch (p) {
    case BodyPart::kFoot: return "foot";
    case BodyPart::kGluteus: return "gluteus";
    case BodyPart::kBack: return "back";
    case BodyPart::kHand: return "hand";
    case BodyPart::kOther: return "other";
  }
  return "other";
}

inline BodyPart body_part_from_string(std::string_view s) {
  if (s == "foot") return BodyPart::kFoot;
  if (s == "gluteus") return BodyPart::kGluteus;
  if (s == "back") return BodyPart::kBack;
  if (s == "hand") return BodyPart::kHand;
  if (s == "other") return BodyPart::kOther;
  throw KinematicsError("unknown body part '" + std::string(s) + "'");
}

struct Marker {
  int joint = 0;
  Vec3 offset = Vec3::Zero();  // in the joint's frame
  BodyPart part = BodyPart::kOther;
};

struct MarkerSet {
  std::vector<Marker> markers;

  int size() const { return static_cast<int>(markers.size()); }

  std::vector<int> indices_of(std::initializer_list<BodyPart> parts) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i) {
      if (std::find(parts.begin(), parts.end(), markers[static_cast<std::size_t>(i)].part) !=
          parts.end()) {
        out.push_back(i);
      }
    }
    return out;
  }

  /// Feet: toe, heel, inner, outer per side. Markers sit on the floor plane in
  /// the rest pose of Skeleton::standard().
  static MarkerSet standard() {
    using namespace joint;
    MarkerSet m;
    auto add = [&m](int j, Vec3 o, BodyPart p) { m.markers.push_back({j, o, p}); };
    for (int side = 0; side < 2; ++side) {
      const double inward = side == 0 ? 1.0 : -1.0;  // left foot sits at -x
      const int ankle = side == 0 ? kLeftAnkle : kRightAnkle;
      const int foot = side == 0 ? kLeftFoot : kRightFoot;
      add(foot, {0.0, 0.05, -0.02}, BodyPart::kFoot);
      add(ankle, {0.0, -0.05, -0.08}, BodyPart::kFoot);
      add(foot, {0.045 * inward, -0.03, -0.02}, BodyPart::kFoot);
      add(foot, {-0.045 * inward, -0.03, -0.02}, BodyPart::kFoot);
    }
    add(kLeftHip, {0.0, -0.09, -0.04}, BodyPart::kGluteus);
    add(kRightHip, {0.0, -0.09, -0.04}, BodyPart::kGluteus);
    add(kSpine1, {0.0, -0.11, 0.04}, BodyPart::kBack);
    add(kSpine3, {0.0, -0.10, 0.0}, BodyPart::kBack);
    add(kLeftWrist, {-0.08, 0.0, 0.0}, BodyPart::kHand);
    add(kLeftWrist, {-0.04, 0.0, -0.02}, BodyPart::kHand);
    add(kRightWrist, {0.08, 0.0, 0.0}, BodyPart::kHand);
    add(kRightWrist, {0.04, 0.0, -0.02}, BodyPart::kHand);
    add(kSpine3, {0.0, 0.10, 0.0}, BodyPart::kOther);
    add(kHead, {0.0, 0.0, 0.16}, BodyPart::kOther);
    add(kLeftShoulder, {0.0, 0.0, 0.05}, BodyPart::kOther);
    add(kRightShoulder, {0.0, 0.0, 0.05}, BodyPart::kOther);
    return m;
  }
};

/// Skeleton and marker tables from a text asset. Lines:
///   <index> <parent> <x> <y> <z>              joint
///   marker <joint> <x> <y> <z> <part>         marker
/// '#' starts a comment. Missing markers fall back to MarkerSet::standard().
inline std::pair<Skeleton, MarkerSet> load_body_asset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw KinematicsError("cannot open body asset '" + path + "'");
  std::vector<std::pair<int, std::pair<int, Vec3>>> joints;
  MarkerSet markers;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    auto fail = [&] {
      throw KinematicsError(path + ":" + std::to_string(line_no) + ": malformed line");
    };
    if (first == "marker") {
      Marker mk;
      std::string part;
      if (!(ls >> mk.joint >> mk.offset.x() >> mk.offset.y() >> mk.offset.z() >> part)) fail();
      mk.part = body_part_from_string(part);
      markers.markers.push_back(mk);
    } else {
      int idx = 0;
      int parent = 0;
      Vec3 o;
      try {
        idx = std::stoi(first);
      } catch (const std::exception&) {
        fail();
      }
      if (!(ls >> parent >> o.x() >> o.y() >> o.z())) fail();
      joints.push_back({idx, {parent, o}});
    }
  }
  std::sort(joints.begin(), joints.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  Skeleton skel;
  for (std::size_t i = 0; i < joints.size(); ++i) {
    if (joints[i].first != static_cast<int>(i)) {
      throw KinematicsError(path + ": joint indices must be 0..K-1 without gaps");
    }
    skel.parents.push_back(joints[i].second.first);
    skel.offsets.push_back(joints[i].second.second);
  }
  skel.validate();
  if (markers.markers.empty()) markers = MarkerSet::standard();
  for (const auto& mk : markers.markers) {
    if (mk.joint < 0 || mk.joint >= skel.joint_count()) {
      throw KinematicsError(path + ": marker references unknown joint");
    }
  }
  return {skel, markers};
}

/// Per-frame forward kinematics state kept for derivative propagation.
struct FrameKinematics {
  Points joints;
  std::vector<Mat3> world;  // world rotation of each joint frame
  std::vector<Mat3> local;  // local rotation matrix of each joint
  Points markers;
};

inline FrameKinematics frame_kinematics(const Pose& p, const Skeleton& skel,
                                        const MarkerSet* ms = nullptr) {
  const int k = skel.joint_count();
  FrameKinematics fk;
  fk.joints.resize(static_cast<std::size_t>(k));
  fk.world.resize(static_cast<std::size_t>(k));
  fk.local.resize(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    fk.local[ju] = aa_to_mat(p.rotation(j));
    const int parent = skel.parents[ju];
    if (parent < 0) {
      fk.world[ju] = fk.local[ju];
      fk.joints[ju] = p.translation() + skel.offsets[ju];
    } else {
      const auto pu = static_cast<std::size_t>(parent);
      fk.world[ju] = fk.world[pu] * fk.local[ju];
      fk.joints[ju] = fk.joints[pu] + fk.world[pu] * skel.offsets[ju];
    }
  }
  if (ms != nullptr) {
    fk.markers.reserve(ms->markers.size());
    for (const auto& mk : ms->markers) {
      const auto ju = static_cast<std::size_t>(mk.joint);
      fk.markers.push_back(fk.joints[ju] + fk.world[ju] * mk.offset);
    }
  }
  return fk;
}

inline Points forward_kinematics(const Pose& p, const Skeleton& skel) {
  return frame_kinematics(p, skel).joints;
}

inline Points compute_markers(const Pose& p, const Skeleton& skel, const MarkerSet& ms) {
  return frame_kinematics(p, skel, &ms).markers;
}

/// Reverse pass: pose gradient given loss gradients on joints and markers.
/// Either gradient list may be empty.
inline PoseVector fk_backward(const Pose& p, const Skeleton& skel, const FrameKinematics& fk,
                              const MarkerSet* ms, const Points& d_joints,
                              const Points& d_markers) {
  const int k = skel.joint_count();
  Points g_pos(static_cast<std::size_t>(k), Vec3::Zero());
  std::vector<Mat3> g_world(static_cast<std::size_t>(k), Mat3::Zero());
  if (!d_joints.empty()) {
    for (int j = 0; j < k; ++j) g_pos[static_cast<std::size_t>(j)] = d_joints[static_cast<std::size_t>(j)];
  }
  if (ms != nullptr && !d_markers.empty()) {
    for (std::size_t m = 0; m < ms->markers.size(); ++m) {
      const auto& mk = ms->markers[m];
      const auto ju = static_cast<std::size_t>(mk.joint);
      g_pos[ju] += d_markers[m];
      g_world[ju] += d_markers[m] * mk.offset.transpose();
    }
  }
  PoseVector grad = PoseVector::Zero();
  for (int j = k - 1; j >= 1; --j) {
    const auto ju = static_cast<std::size_t>(j);
    const auto pu = static_cast<std::size_t>(skel.parents[ju]);
    g_pos[pu] += g_pos[ju];
    g_world[pu] += g_pos[ju] * skel.offsets[ju].transpose();
    g_world[pu] += g_world[ju] * fk.local[ju].transpose();
    const Mat3 g_local = fk.world[pu].transpose() * g_world[ju];
    grad.segment<3>(3 * j) = aa_gradient_from_matrix_gradient(p.rotation(j), g_local);
  }
  grad.segment<3>(0) = aa_gradient_from_matrix_gradient(p.rotation(0), g_world[0]);
  grad.segment<3>(kTranslationOffset) = g_pos[0];
  return grad;
}

/// Jacobian (3 x 69) of one joint position with respect to the pose.
inline Eigen::Matrix<double, 3, kPoseDim> joint_jacobian(const Pose& p, const Skeleton& skel,
                                                         const FrameKinematics& fk, int j) {
  Eigen::Matrix<double, 3, kPoseDim> jac;
  Points d(static_cast<std::size_t>(skel.joint_count()), Vec3::Zero());
  for (int a = 0; a < 3; ++a) {
    d[static_cast<std::size_t>(j)] = Vec3::Unit(a);
    jac.row(a) = fk_backward(p, skel, fk, nullptr, d, {}).transpose();
  }
  return jac;
}

/// Rigid map p -> R p + t.
struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return R * p + t; }
  RigidTransform inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
  RigidTransform operator*(const RigidTransform& o) const { return {R * o.R, R * o.t + t}; }
  static RigidTransform identity() { return {}; }
};

/// Rigidly moves every frame; the pelvis offset is needed because the pose
/// translation is not the pelvis position itself.
inline Pose apply_transform(const RigidTransform& T, const Pose& p, const Skeleton& skel) {
  const Vec3 o = skel.pelvis_offset();
  Pose out = p;
  out.set_translation(T.R * (p.translation() + o) + T.t - o);
  const Mat3 g = T.R * aa_to_mat(p.rotation(0));
  out.set_rotation(0, mat_to_aa(g));
  return out;
}

inline MotionClip apply_transform(const RigidTransform& T, const MotionClip& motion,
                                  const Skeleton& skel) {
  MotionClip out;
  out.fps = motion.fps;
  out.frames.reserve(motion.frames.size());
  for (const auto& p : motion.frames) out.frames.push_back(apply_transform(T, p, skel));
  return out;
}

/// Horizontal frame of a pose: translation puts the pelvis at the origin and a
/// rotation about z aligns the hip-to-hip direction with +x, so the body
/// faces +y.
inline RigidTransform canonical_transform(const Pose& first, const Skeleton& skel) {
  const Points j = forward_kinematics(first, skel);
  const Vec3 d = j[joint::kRightHip] - j[joint::kLeftHip];
  const Vec3 n(d.x(), d.y(), 0.0);
  if (n.norm() < 1e-6) {
    throw KinematicsError("canonicalize: hip joints are vertically aligned in the first frame");
  }
  const Vec3 x_l = n.normalized();
  const Vec3 z_l = Vec3::UnitZ();
  const Vec3 y_l = z_l.cross(x_l);
  RigidTransform T;
  T.R.row(0) = x_l.transpose();
  T.R.row(1) = y_l.transpose();
  T.R.row(2) = z_l.transpose();
  T.t = -(T.R * j[joint::kPelvis]);
  return T;
}

/// Returns the motion in local coordinates and the world-to-local transform.
inline std::pair<MotionClip, RigidTransform> canonicalize(const MotionClip& motion,
                                                          const Skeleton& skel) {
  if (motion.empty()) throw KinematicsError("canonicalize: empty motion");
  const RigidTransform T = canonical_transform(motion.frames.front(), skel);
  return {apply_transform(T, motion, skel), T};
}

/// Per-pose power-space blend; translation is interpolated linearly.
/// gamma = 0 and gamma = 1 return the inputs unchanged.
inline Pose blend_pose(const Pose& old_pose, const Pose& new_pose, double gamma) {
  if (gamma == 0.0) return old_pose;
  if (gamma == 1.0) return new_pose;
  Pose out;
  for (int r = 0; r < kRotationCount; ++r) {
    const RotMat m = blend_rot(aa_to_mat(old_pose.rotation(r)), aa_to_mat(new_pose.rotation(r)), gamma);
    out.set_rotation(r, mat_to_aa(m));
  }
  out.set_translation((1.0 - gamma) * old_pose.translation() + gamma * new_pose.translation());
  return out;
}

/// Blends H overlapping frames with gamma_s = s / (H + 1), s = 1..H.
inline std::vector<Pose> blend_overlap(const std::vector<Pose>& hist_tail,
                                       const std::vector<Pose>& new_head) {
  if (hist_tail.size() != new_head.size()) {
    throw KinematicsError("blend_overlap: window sizes differ");
  }
  const std::size_t h = hist_tail.size();
  std::vector<Pose> out;
  out.reserve(h);
  for (std::size_t s = 1; s <= h; ++s) {
    const double gamma = static_cast<double>(s) / static_cast<double>(h + 1);
    out.push_back(blend_pose(hist_tail[s - 1], new_head[s - 1], gamma));
  }
  return out;
}

/// prev[0 .. S~-H) ++ blended ++ new_tail.
inline MotionClip concat_long_term(const MotionClip& prev, const std::vector<Pose>& blended,
                                   const std::vector<Pose>& new_tail) {
  if (blended.size() > prev.frames.size()) {
    throw KinematicsError("concat_long_term: overlap longer than previous motion");
  }
  MotionClip out;
  out.fps = prev.fps;
  const std::size_t keep = prev.frames.size() - blended.size();
  out.frames.reserve(keep + blended.size() + new_tail.size());
  out.frames.insert(out.frames.end(), prev.frames.begin(),
                    prev.frames.begin() + static_cast<std::ptrdiff_t>(keep));
  out.frames.insert(out.frames.end(), blended.begin(), blended.end());
  out.frames.insert(out.frames.end(), new_tail.begin(), new_tail.end());
  return out;
}

/// Appends a newly synthesized clip whose first H frames overlap the end of
/// `prev`. H is reduced to min(|prev|, |next|) when necessary.
inline MotionClip assemble_long_term(const MotionClip& prev, const MotionClip& next, int overlap) {
  const int h = std::max(0, std::min({overlap, prev.size(), next.size()}));
  std::vector<Pose> tail(prev.frames.end() - h, prev.frames.end());
  std::vector<Pose> head(next.frames.begin(), next.frames.begin() + h);
  std::vector<Pose> rest(next.frames.begin() + h, next.frames.end());
  return concat_long_term(prev, blend_overlap(tail, head), rest);
}

}  // namespace dip

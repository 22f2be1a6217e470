#pragma once

// Interaction rewards on a flattened motion, their analytic gradients and a
// finite-difference oracle. All quantities live in the motion's local frame;
// the scene is queried through a SceneView.

#include "dip/action.hpp"
#include "dip/kinematics.hpp"
#include "dip/scene.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dip {

class RewardError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class RewardTerm { kHistory, kAcceleration, kGoal, kContact, kPenetration, kSkating };
inline constexpr int kRewardTermCount = 6;
inline constexpr std::array<RewardTerm, kRewardTermCount> kAllRewardTerms = {
    RewardTerm::kHistory,     RewardTerm::kAcceleration, RewardTerm::kGoal,
    RewardTerm::kContact,     RewardTerm::kPenetration,  RewardTerm::kSkating};

inline std::string_view to_string(RewardTerm t) {
  switch (t) {
    case RewardTerm::kHistory: return "his";
    case RewardTerm::kAcceleration: return "acc";
    case RewardTerm::kGoal: return "goal";
    case RewardTerm::kContact: return "cont";
    case RewardTerm::kPenetration: return "pene";
    case RewardTerm::kSkating: return "skt";
  }
  return "?";
}

enum class ContactVariant { kFloor, kSdf };

struct RewardWeights {
  double his = 0.0;
  double acc = 0.0;
  double goal = 0.0;
  double cont = 0.0;
  double pene = 0.0;
  double skt = 0.0;

  double operator[](RewardTerm t) const {
    switch (t) {
      case RewardTerm::kHistory: return his;
      case RewardTerm::kAcceleration: return acc;
      case RewardTerm::kGoal: return goal;
      case RewardTerm::kContact: return cont;
      case RewardTerm::kPenetration: return pene;
      case RewardTerm::kSkating: return skt;
    }
    return 0.0;
  }
  double& operator[](RewardTerm t) {
    switch (t) {
      case RewardTerm::kHistory: return his;
      case RewardTerm::kAcceleration: return acc;
      case RewardTerm::kGoal: return goal;
      case RewardTerm::kContact: return cont;
      case RewardTerm::kPenetration: return pene;
      case RewardTerm::kSkating: return skt;
    }
    return his;
  }
};

struct RewardConfig {
  Action action = Action::kLocomotion;
  RewardWeights lambda;
  double eps_vel = 0.5;
  double eps_pene = 0.03;
  double eps_cont = 0.01;
  double eps_acc = 50.0;
  double fps = kDefaultFps;
  /// false: sum of (|a| nu^2 - eps_acc) as written; true: -ReLU(|a| nu^2 - eps_acc).
  bool acc_clamped = false;

  void validate() const {
    for (RewardTerm t : kAllRewardTerms) {
      if (!(lambda[t] >= 0.0) || !std::isfinite(lambda[t])) throw RewardError("reward weights must be finite and >= 0");
    }
    for (double e : {eps_vel, eps_pene, eps_cont, eps_acc}) {
      if (!(e >= 0.0) || !std::isfinite(e)) throw RewardError("reward thresholds must be finite and >= 0");
    }
    if (!(fps > 0.0)) throw RewardError("fps must be > 0");
  }

  ContactVariant contact_variant() const {
    return action == Action::kLocomotion ? ContactVariant::kFloor : ContactVariant::kSdf;
  }

  std::vector<BodyPart> contact_parts() const {
    if (action == Action::kLocomotion) return {BodyPart::kFoot};
    return {BodyPart::kFoot, BodyPart::kGluteus, BodyPart::kBack};
  }

  static RewardConfig defaults(Action action) {
    RewardConfig c;
    c.action = action;
    c.lambda.his = 1.0;
    c.lambda.goal = 1.0;
    c.lambda.cont = 0.1;
    switch (action) {
      case Action::kLocomotion:
        c.lambda.skt = 1e-3;
        break;
      case Action::kSit:
        c.lambda.skt = 3e-4;
        c.lambda.pene = 0.1;
        c.lambda.acc = 1e-3;
        break;
      case Action::kLie:
        c.lambda.pene = 3e-2;
        c.lambda.acc = 1e-3;
        break;
    }
    return c;
  }
};

/// Everything the rewards need besides the motion itself.
struct RewardContext {
  const Skeleton* skel = nullptr;
  const MarkerSet* markers = nullptr;
  const SceneView* scene = nullptr;  // required by contact (sdf) and penetration
  std::vector<Points> history;       // joint positions of the first H frames
  GoalSpec goal;
  int goal_frame = -1;  // 0-based; < 0 disables the goal term
  bool goal_hold = false;  // also score every frame after goal_frame
};

struct RewardValue {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

struct RewardBreakdown {
  std::array<double, kRewardTermCount> values{};
  std::array<double, kRewardTermCount> gradient_norms{};
  double total = 0.0;
  Eigen::VectorXd gradient;

  double value(RewardTerm t) const { return values[static_cast<std::size_t>(t)]; }
  double gradient_norm(RewardTerm t) const { return gradient_norms[static_cast<std::size_t>(t)]; }
};

namespace reward_detail {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Per-frame kinematics and gradient accumulators.
struct MotionState {
  int frames = 0;
  std::vector<Pose> poses;
  std::vector<FrameKinematics> fk;
  std::vector<Points> d_joints;
  std::vector<Points> d_markers;
  bool any_joint = false;
  bool any_marker = false;

  MotionState(const Eigen::VectorXd& x, const RewardContext& ctx) {
    if (ctx.skel == nullptr || ctx.markers == nullptr) throw RewardError("reward context needs skeleton and markers");
    if (x.size() % kPoseDim != 0 || x.size() == 0) throw RewardError("motion length must be a positive multiple of 69");
    frames = static_cast<int>(x.size() / kPoseDim);
    poses.reserve(static_cast<std::size_t>(frames));
    fk.reserve(static_cast<std::size_t>(frames));
    for (int s = 0; s < frames; ++s) {
      poses.emplace_back(PoseVector(x.segment<kPoseDim>(static_cast<Eigen::Index>(s) * kPoseDim)));
      fk.push_back(frame_kinematics(poses.back(), *ctx.skel, ctx.markers));
    }
    reset(ctx);
  }

  void reset(const RewardContext& ctx) {
    d_joints.assign(static_cast<std::size_t>(frames), Points(static_cast<std::size_t>(ctx.skel->joint_count()), Vec3::Zero()));
    d_markers.assign(static_cast<std::size_t>(frames), Points(static_cast<std::size_t>(ctx.markers->size()), Vec3::Zero()));
    any_joint = false;
    any_marker = false;
  }

  const Vec3& joint(int s, int j) const { return fk[static_cast<std::size_t>(s)].joints[static_cast<std::size_t>(j)]; }
  const Vec3& marker(int s, int m) const { return fk[static_cast<std::size_t>(s)].markers[static_cast<std::size_t>(m)]; }
  void add_joint(int s, int j, const Vec3& g, double w) {
    d_joints[static_cast<std::size_t>(s)][static_cast<std::size_t>(j)] += w * g;
    any_joint = true;
  }
  void add_marker(int s, int m, const Vec3& g, double w) {
    d_markers[static_cast<std::size_t>(s)][static_cast<std::size_t>(m)] += w * g;
    any_marker = true;
  }

  Eigen::VectorXd backward(const RewardContext& ctx) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(frames) * kPoseDim);
    if (!any_joint && !any_marker) return g;
    const Points none;
    for (int s = 0; s < frames; ++s) {
      const auto su = static_cast<std::size_t>(s);
      g.segment<kPoseDim>(static_cast<Eigen::Index>(s) * kPoseDim) =
          fk_backward(poses[su], *ctx.skel, fk[su], ctx.markers, any_joint ? d_joints[su] : none,
                      any_marker ? d_markers[su] : none);
    }
    return g;
  }
};

inline std::vector<int> marker_indices(const MarkerSet& ms, const std::vector<BodyPart>& parts) {
  std::vector<int> out;
  for (int i = 0; i < ms.size(); ++i) {
    for (BodyPart p : parts) {
      if (ms.markers[static_cast<std::size_t>(i)].part == p) {
        out.push_back(i);
        break;
      }
    }
  }
  return out;
}

inline const SceneView& need_scene(const RewardContext& ctx, const char* term) {
  if (ctx.scene == nullptr) throw RewardError(std::string(term) + " reward needs a scene");
  return *ctx.scene;
}

// Each term adds w * d(term)/d(positions) into the state and returns the value.

inline double history(MotionState& st, const RewardContext& ctx, double w) {
  const int h = static_cast<int>(ctx.history.size());
  if (h > st.frames) throw RewardError("history longer than motion");
  double v = 0.0;
  for (int i = 0; i < h; ++i) {
    const Points& target = ctx.history[static_cast<std::size_t>(i)];
    if (static_cast<int>(target.size()) != ctx.skel->joint_count()) throw RewardError("history frame joint count mismatch");
    for (int j = 0; j < ctx.skel->joint_count(); ++j) {
      const Vec3 d = st.joint(i, j) - target[static_cast<std::size_t>(j)];
      v -= d.cwiseAbs().sum();
      if (w != 0.0) st.add_joint(i, j, -d.unaryExpr([](double e) { return sign(e); }), w);
    }
  }
  return v;
}

inline double acceleration(MotionState& st, const RewardConfig& cfg, double w) {
  if (st.frames < 3) throw RewardError("acceleration reward needs at least 3 frames");
  const double nu2 = cfg.fps * cfg.fps;
  const int nm = static_cast<int>(st.fk.front().markers.size());
  double v = 0.0;
  for (int s = 1; s + 1 < st.frames; ++s) {
    for (int m = 0; m < nm; ++m) {
      const Vec3 a = st.marker(s + 1, m) + st.marker(s - 1, m) - 2.0 * st.marker(s, m);
      const double n = a.norm();
      const double term = n * nu2 - cfg.eps_acc;
      double slope = 0.0;  // d(value)/d(|a|)
      if (cfg.acc_clamped) {
        if (term > 0.0) {
          v -= term;
          slope = -nu2;
        }
      } else {
        v += term;
        slope = nu2;
      }
      if (w != 0.0 && slope != 0.0 && n > 0.0) {
        const Vec3 g = slope * a / n;
        st.add_marker(s + 1, m, g, w);
        st.add_marker(s - 1, m, g, w);
        st.add_marker(s, m, -2.0 * g, w);
      }
    }
  }
  return v;
}

inline double goal(MotionState& st, const RewardContext& ctx, double w) {
  if (ctx.goal_frame < 0) return 0.0;
  if (ctx.goal_frame >= st.frames) throw RewardError("goal frame beyond motion length");
  const int last = ctx.goal_hold ? st.frames - 1 : ctx.goal_frame;
  double v = 0.0;
  for (int s = ctx.goal_frame; s <= last; ++s) {
    for (const auto& gj : ctx.goal.joints) {
      const Vec3 d = st.joint(s, gj.joint) - gj.position;
      v -= d.cwiseAbs().sum();
      if (w != 0.0) st.add_joint(s, gj.joint, -d.unaryExpr([](double e) { return sign(e); }), w);
    }
  }
  return v;
}

inline double contact_floor(MotionState& st, const RewardContext& ctx, const RewardConfig& cfg, double w) {
  const auto feet = marker_indices(*ctx.markers, {BodyPart::kFoot});
  if (feet.empty()) throw RewardError("marker set has no foot markers");
  const double h = ctx.scene != nullptr ? ctx.scene->floor_height() : 0.0;
  double v = 0.0;
  for (int s = 0; s < st.frames; ++s) {
    int best = feet.front();
    for (int m : feet) {
      if (st.marker(s, m).z() < st.marker(s, best).z()) best = m;
    }
    const double dz = st.marker(s, best).z() - h;
    const double term = std::abs(dz) - cfg.eps_cont;
    if (term > 0.0) {
      v -= term;
      if (w != 0.0) st.add_marker(s, best, Vec3(0.0, 0.0, -sign(dz)), w);
    }
  }
  return v;
}

inline double contact_sdf(MotionState& st, const RewardContext& ctx, const RewardConfig& cfg, double w) {
  const SceneView& scene = need_scene(ctx, "contact");
  const int nm = ctx.markers->size();
  double v = 0.0;
  for (int s = 0; s < st.frames; ++s) {
    int best = 0;
    SdfSample best_sample = scene.sdf(st.marker(s, 0));
    for (int m = 1; m < nm; ++m) {
      const SdfSample q = scene.sdf(st.marker(s, m));
      if (q.value < best_sample.value) {
        best = m;
        best_sample = q;
      }
    }
    const double term = std::abs(best_sample.value) - cfg.eps_cont;
    if (term > 0.0) {
      v -= term;
      if (w != 0.0) st.add_marker(s, best, -sign(best_sample.value) * best_sample.gradient, w);
    }
  }
  return v;
}

inline double penetration(MotionState& st, const RewardContext& ctx, const RewardConfig& cfg, double w) {
  const SceneView& scene = need_scene(ctx, "penetration");
  const int nm = ctx.markers->size();
  double v = 0.0;
  for (int s = 0; s < st.frames; ++s) {
    for (int m = 0; m < nm; ++m) {
      const SdfSample q = scene.sdf(st.marker(s, m));
      const double term = -q.value - cfg.eps_pene;
      if (term > 0.0) {
        v -= term;
        if (w != 0.0) st.add_marker(s, m, q.gradient, w);
      }
    }
  }
  return v;
}

inline double skating(MotionState& st, const RewardContext& ctx, const RewardConfig& cfg, double w) {
  const auto parts = marker_indices(*ctx.markers, cfg.contact_parts());
  if (parts.empty()) throw RewardError("marker set has no contact markers");
  double v = 0.0;
  for (int s = 0; s + 1 < st.frames; ++s) {
    int best = parts.front();
    double best_speed = std::numeric_limits<double>::infinity();
    for (int m : parts) {
      const double sp = (st.marker(s + 1, m) - st.marker(s, m)).norm();
      if (sp < best_speed) {
        best_speed = sp;
        best = m;
      }
    }
    const double term = best_speed * cfg.fps - cfg.eps_vel;
    if (term > 0.0) {
      v -= term;
      if (w != 0.0 && best_speed > 0.0) {
        const Vec3 u = (st.marker(s + 1, best) - st.marker(s, best)) / best_speed;
        st.add_marker(s + 1, best, -cfg.fps * u, w);
        st.add_marker(s, best, cfg.fps * u, w);
      }
    }
  }
  return v;
}

inline double evaluate(RewardTerm t, MotionState& st, const RewardContext& ctx, const RewardConfig& cfg, double w) {
  switch (t) {
    case RewardTerm::kHistory: return history(st, ctx, w);
    case RewardTerm::kAcceleration: return acceleration(st, cfg, w);
    case RewardTerm::kGoal: return goal(st, ctx, w);
    case RewardTerm::kContact:
      return cfg.contact_variant() == ContactVariant::kFloor ? contact_floor(st, ctx, cfg, w)
                                                             : contact_sdf(st, ctx, cfg, w);
    case RewardTerm::kPenetration: return penetration(st, ctx, cfg, w);
    case RewardTerm::kSkating: return skating(st, ctx, cfg, w);
  }
  return 0.0;
}

}  // namespace reward_detail

/// One unweighted reward term and its gradient.
inline RewardValue evaluate_term(RewardTerm t, const Eigen::VectorXd& motion, const RewardContext& ctx,
                                 const RewardConfig& cfg) {
  reward_detail::MotionState st(motion, ctx);
  RewardValue out;
  out.value = reward_detail::evaluate(t, st, ctx, cfg, 1.0);
  out.gradient = st.backward(ctx);
  return out;
}

inline RewardValue r_his(const Eigen::VectorXd& m, const RewardContext& ctx, const RewardConfig& cfg) {
  return evaluate_term(RewardTerm::kHistory, m, ctx, cfg);
}
inline RewardValue r_acc(const Eigen::VectorXd& m, const RewardContext& ctx, const RewardConfig& cfg) {
  return evaluate_term(RewardTerm::kAcceleration, m, ctx, cfg);
}
inline RewardValue r_goal(const Eigen::VectorXd& m, const RewardContext& ctx, const RewardConfig& cfg) {
  return evaluate_term(RewardTerm::kGoal, m, ctx, cfg);
}
inline RewardValue r_cont(const Eigen::VectorXd& m, const RewardContext& ctx, const RewardConfig& cfg) {
  return evaluate_term(RewardTerm::kContact, m, ctx, cfg);
}
inline RewardValue r_pene(const Eigen::VectorXd& m, const RewardContext& ctx, const RewardConfig& cfg) {
  return evaluate_term(RewardTerm::kPenetration, m, ctx, cfg);
}
inline RewardValue r_skt(const Eigen::VectorXd& m, const RewardContext& ctx, const RewardConfig& cfg) {
  return evaluate_term(RewardTerm::kSkating, m, ctx, cfg);
}

/// Weighted total. Terms with zero weight are skipped (value and gradient 0).
/// Gradient norms are of the weighted per-term gradients and require one
/// extra backward pass per active term when `per_term_norms` is set.
inline RewardBreakdown r_total(const Eigen::VectorXd& motion, const RewardContext& ctx, const RewardConfig& cfg,
                               bool with_gradient = true, bool per_term_norms = false) {
  cfg.validate();
  reward_detail::MotionState st(motion, ctx);
  RewardBreakdown out;
  for (RewardTerm t : kAllRewardTerms) {
    const double w = cfg.lambda[t];
    if (w == 0.0) continue;
    const auto i = static_cast<std::size_t>(t);
    if (with_gradient && per_term_norms) {
      reward_detail::MotionState single = st;
      single.reset(ctx);
      reward_detail::evaluate(t, single, ctx, cfg, w);
      out.gradient_norms[i] = single.backward(ctx).norm();
    }
    out.values[i] = reward_detail::evaluate(t, st, ctx, cfg, with_gradient ? w : 0.0);
    out.total += w * out.values[i];
  }
  out.gradient = with_gradient ? st.backward(ctx) : Eigen::VectorXd::Zero(motion.size());
  return out;
}

/// Central differences of a scalar function.
inline Eigen::VectorXd fd_gradient_oracle(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, double step = 1e-5) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

}  // namespace dip

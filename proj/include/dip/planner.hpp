#pragma once

// Long-horizon synthesis: a script of (action, goal) sub-tasks is solved one
// clip at a time, each conditioned on the tail of the motion so far and
// blended into it.

#include "dip/dip.hpp"
#include "dip/metrics.hpp"
#include "dip/prior.hpp"
#include "dip/rewards.hpp"
#include "dip/scene.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dip {

/// Malformed scenario or obstacle files.
class ScenarioError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A sub-task that failed; carries what was assembled before it.
class SubTaskError : public std::runtime_error {
 public:
  SubTaskError(int index, const std::string& what, MotionClip partial)
      : std::runtime_error("sub-task " + std::to_string(index) + ": " + what), index_(index),
        partial_(std::move(partial)) {}
  int index() const { return index_; }
  const MotionClip& partial() const { return partial_; }

 private:
  int index_;
  MotionClip partial_;
};

struct SubTask {
  Action action = Action::kLocomotion;
  GoalSpec goal;
};

/// Optional replacements for the per-action reward defaults.
struct RewardOverrides {
  std::array<std::optional<double>, kRewardTermCount> lambda{};
  std::optional<double> eps_vel, eps_pene, eps_cont, eps_acc;
  std::optional<bool> acc_clamped;

  RewardConfig apply(RewardConfig c) const {
    for (RewardTerm t : kAllRewardTerms) {
      if (const auto& v = lambda[static_cast<std::size_t>(t)]) c.lambda[t] = *v;
    }
    if (eps_vel) c.eps_vel = *eps_vel;
    if (eps_pene) c.eps_pene = *eps_pene;
    if (eps_cont) c.eps_cont = *eps_cont;
    if (eps_acc) c.eps_acc = *eps_acc;
    if (acc_clamped) c.acc_clamped = *acc_clamped;
    return c;
  }
};

struct PlannerOptions {
  int frames = kDefaultFrames;
  double fps = kDefaultFps;
  int steps = kDefaultSteps;
  bool goal_hints = true;
  bool history_hints = true;
  bool inpainting = true;
  bool history_reward = true;
  bool goal_hold = true;
  GuidanceConfig guidance;
  DenoiserOptions denoiser;
  RewardOverrides rewards;
};

struct ScenarioScript {
  std::string scene_path;  // DIPS1 file, obstacle spec (.json) or empty for an empty room
  std::uint64_t seed = 0;
  Pose initial_pose;
  std::vector<SubTask> tasks;
  PlannerOptions options;

  void validate() const {
    if (tasks.empty()) throw ScenarioError("scenario needs at least one sub-task");
    for (const auto& t : tasks) t.goal.validate();
    if (!initial_pose.finite()) throw ScenarioError("initial pose must be finite");
    if (options.frames < 4) throw ScenarioError("frames must be >= 4");
    if (options.steps < 1) throw ScenarioError("steps must be >= 1");
    if (!(options.fps > 0.0)) throw ScenarioError("fps must be > 0");
    options.guidance.validate();
  }
};

/// Nominal speed (units / s) used to place the goal frame.
inline double nominal_speed(Action a) { return a == Action::kLocomotion ? 1.2 : 0.8; }

/// 1-based goal frame: H + round(distance / per-frame speed), clamped to [H + 1, S].
inline int select_goal_frame(double distance, Action action, int history, int frames, double fps = kDefaultFps) {
  const double per_frame = nominal_speed(action) / fps;
  const double raw = history + std::round(distance / per_frame);
  return static_cast<int>(std::clamp(raw, static_cast<double>(history + 1), static_cast<double>(frames)));
}

/// Pelvis hints on history frames 1..H and goal hints on frame g (1-based).
inline KeyframeHints build_hints(const std::vector<Points>& history_joints, const GoalSpec* goal, int goal_frame,
                                 int frames, int joints = kJointCount) {
  KeyframeHints h(frames, joints);
  if (static_cast<int>(history_joints.size()) > frames) throw ScenarioError("history longer than the clip");
  for (std::size_t s = 0; s < history_joints.size(); ++s) {
    h.set(static_cast<int>(s), joint::kPelvis, history_joints[s][joint::kPelvis]);
  }
  if (goal != nullptr) {
    if (goal_frame < 1 || goal_frame > frames) throw ScenarioError("goal frame out of range");
    for (const auto& gj : goal->joints) h.set(goal_frame - 1, gj.joint, gj.position);
  }
  return h;
}

/// Shared, read-only synthesis machinery.
struct Engine {
  Skeleton skel;
  MarkerSet markers;
  NoiseSchedule schedule;
  ProjectionDenoiser denoiser;

  static Engine build(const PlannerOptions& opt, Skeleton skel = Skeleton::standard(),
                      MarkerSet markers = MarkerSet::standard()) {
    BasisOptions bo;
    bo.frames = opt.frames;
    bo.fps = opt.fps;
    NoiseSchedule sched = default_schedule(opt.steps);
    auto bases = build_all_bases(skel, bo);
    ProjectionDenoiser den(sched, std::move(bases), skel, opt.denoiser);
    return Engine{std::move(skel), std::move(markers), std::move(sched), std::move(den)};
  }
};

struct TaskReport {
  Action action = Action::kLocomotion;
  int history = 0;
  int goal_frame = 0;  // 1-based, within the sub-task clip
  double goal_distance = 0.0;  // horizontal, first goal joint at the goal frame
  std::uint64_t seed = 0;
};

struct ScenarioResult {
  MotionClip motion;
  std::vector<SynthesisResult> syntheses;
  std::vector<TaskReport> tasks;
  MetricsReport metrics;
};

inline std::uint64_t task_seed(std::uint64_t seed, std::size_t index) { return seed + 7919u * index; }

/// Pelvis target used for finish metrics: the pelvis goal when given,
/// otherwise the first goal joint.
inline Vec3 goal_anchor(const GoalSpec& g) {
  for (const auto& j : g.joints) {
    if (j.joint == joint::kPelvis) return j.position;
  }
  return g.joints.front().position;
}

inline ScenarioResult run_scenario(const ScenarioScript& script, const Engine& engine, const SceneField& scene) {
  script.validate();
  const PlannerOptions& opt = script.options;
  const int S = opt.frames;
  if (engine.schedule.T != opt.steps) throw ScenarioError("engine schedule does not match scenario steps");

  ScenarioResult out;
  MotionClip world;
  world.fps = opt.fps;
  for (std::size_t k = 0; k < script.tasks.size(); ++k) {
    const SubTask& task = script.tasks[k];
    try {
      // History window in world coordinates.
      std::vector<Pose> hist;
      if (world.empty()) {
        hist.push_back(script.initial_pose);
      } else {
        const int h = std::min(world.size(), kMaxHistory);
        hist.assign(world.frames.end() - h, world.frames.end());
      }
      const int H = static_cast<int>(hist.size());
      if (H >= S) throw ScenarioError("history does not leave room in the clip");

      const RigidTransform to_local = canonical_transform(hist.front(), engine.skel);
      const RigidTransform to_world = to_local.inverse();
      std::vector<Pose> hist_local;
      std::vector<Points> hist_joints;
      for (const auto& p : hist) {
        hist_local.push_back(apply_transform(to_local, p, engine.skel));
        hist_joints.push_back(forward_kinematics(hist_local.back(), engine.skel));
      }
      GoalSpec goal_local = task.goal;
      for (auto& gj : goal_local.joints) gj.position = to_local.apply(gj.position);

      const GoalJoint& lead = goal_local.joints.front();
      const Vec3 from = hist_joints.back()[static_cast<std::size_t>(lead.joint)];
      const double distance = std::hypot(lead.position.x() - from.x(), lead.position.y() - from.y());
      const int g = select_goal_frame(distance, task.action, H, S, opt.fps);

      Condition cond;
      cond.action = task.action;
      cond.hints = build_hints(opt.history_hints ? hist_joints : std::vector<Points>{},
                               opt.goal_hints ? &goal_local : nullptr, g, S, engine.skel.joint_count());
      const InpaintSpec inpaint = opt.inpainting ? InpaintSpec::hold_leading_frames(hist_local, S) : InpaintSpec{};

      const SceneView view(scene, to_world);
      RewardContext ctx;
      ctx.skel = &engine.skel;
      ctx.markers = &engine.markers;
      ctx.scene = &view;
      if (opt.history_reward) ctx.history = hist_joints;
      ctx.goal = goal_local;
      ctx.goal_frame = g - 1;
      ctx.goal_hold = opt.goal_hold;
      RewardConfig rcfg = opt.rewards.apply(RewardConfig::defaults(task.action));
      rcfg.fps = opt.fps;

      const std::uint64_t seed = task_seed(script.seed, k);
      SynthesisResult res =
          synthesize(engine.denoiser, engine.schedule, cond, inpaint, ctx, rcfg, opt.guidance, seed, S, opt.fps);
      if (!res.x0.allFinite()) throw std::runtime_error("synthesis produced non-finite values");

      const MotionClip clip_world = apply_transform(to_world, res.motion, engine.skel);
      world = world.empty() ? clip_world : assemble_long_term(world, clip_world, H);

      TaskReport rep;
      rep.action = task.action;
      rep.history = H;
      rep.goal_frame = g;
      rep.seed = seed;
      const Points jg = forward_kinematics(res.motion.frames[static_cast<std::size_t>(g - 1)], engine.skel);
      const Vec3 d = jg[static_cast<std::size_t>(lead.joint)] - lead.position;
      rep.goal_distance = std::hypot(d.x(), d.y());
      out.tasks.push_back(rep);
      out.syntheses.push_back(std::move(res));
    } catch (const SubTaskError&) {
      throw;
    } catch (const std::exception& e) {
      throw SubTaskError(static_cast<int>(k), e.what(), world);
    }
  }
  out.motion = std::move(world);
  out.metrics = evaluate_metrics(out.motion, engine.skel, engine.markers, scene, goal_anchor(script.tasks.back().goal));
  return out;
}

// ---------------------------------------------------------------------------
// Files.

namespace planner_detail {

using nlohmann::json;

inline Vec3 read_vec3(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ScenarioError(what + " must be an array of 3 numbers");
  Vec3 v;
  for (int a = 0; a < 3; ++a) {
    if (!j[static_cast<std::size_t>(a)].is_number()) throw ScenarioError(what + " must hold numbers");
    v[a] = j[static_cast<std::size_t>(a)].get<double>();
  }
  return v;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("field '") + key + "': " + e.what());
  }
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(what + ": " + e.what());
  }
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline int joint_index(const json& j) {
  if (j.is_number_integer()) return j.get<int>();
  throw ScenarioError("goal joint must be an integer joint index");
}

}  // namespace planner_detail

/// Obstacle spec: {"bounds_min": [..], "bounds_max": [..], "spacing": s,
/// "floor": h, "boxes": [{"center": [..], "size": [..]}],
/// "spheres": [{"center": [..], "radius": r}]}.
inline ObstacleSpec parse_obstacle_spec(const std::string& text) {
  using namespace planner_detail;
  const json j = parse_json(text, "obstacle spec");
  if (!j.is_object()) throw ScenarioError("obstacle spec must be an object");
  ObstacleSpec spec;
  if (j.contains("bounds_min")) spec.bounds_min = read_vec3(j["bounds_min"], "bounds_min");
  if (j.contains("bounds_max")) spec.bounds_max = read_vec3(j["bounds_max"], "bounds_max");
  spec.spacing = get_or(j, "spacing", spec.spacing);
  spec.floor_height = get_or(j, "floor", spec.floor_height);
  if (!(spec.spacing > 0.0)) throw ScenarioError("spacing must be > 0");
  if ((spec.bounds_max - spec.bounds_min).minCoeff() <= 0.0) throw ScenarioError("bounds_max must exceed bounds_min");
  for (const auto& b : j.value("boxes", json::array())) {
    BoxObstacle box;
    box.center = read_vec3(b.at("center"), "box center");
    box.size = read_vec3(b.at("size"), "box size");
    if (box.size.minCoeff() <= 0.0) throw ScenarioError("box size must be > 0");
    spec.boxes.push_back(box);
  }
  for (const auto& s : j.value("spheres", json::array())) {
    SphereObstacle sp;
    sp.center = read_vec3(s.at("center"), "sphere center");
    sp.radius = s.at("radius").get<double>();
    if (!(sp.radius > 0.0)) throw ScenarioError("sphere radius must be > 0");
    spec.spheres.push_back(sp);
  }
  return spec;
}

inline ObstacleSpec load_obstacle_spec(const std::string& path) {
  return parse_obstacle_spec(planner_detail::read_text(path));
}

/// A baked DIPS1 file, or an obstacle spec (".json") baked on load. An empty
/// path gives an empty 10 x 10 room.
inline SceneField load_scene_any(const std::string& path) {
  if (path.empty()) return bake_boxes(ObstacleSpec{});
  if (std::filesystem::path(path).extension() == ".json") return bake_boxes(load_obstacle_spec(path));
  return load_scene(path);
}

/// Standing pose with the pelvis above (x, y), facing `yaw` radians
/// counter-clockwise from +y.
inline Pose standing_pose(double x, double y, double yaw, const Skeleton& skel = Skeleton::standard()) {
  Pose p;
  p.set_rotation(0, Vec3(0.0, 0.0, yaw));
  p.set_translation(Vec3(x, y, skel.pelvis_offset().z()) - skel.pelvis_offset());
  return p;
}

/// Relative paths inside the script resolve against `base_dir`.
inline ScenarioScript parse_scenario(const std::string& text, const std::string& base_dir = ".") {
  using namespace planner_detail;
  const json j = parse_json(text, "scenario");
  if (!j.is_object()) throw ScenarioError("scenario must be an object");
  ScenarioScript s;
  if (j.contains("scene") && !j["scene"].is_null()) {
    const std::filesystem::path p = j["scene"].get<std::string>();
    s.scene_path = p.is_absolute() ? p.string() : (std::filesystem::path(base_dir) / p).lexically_normal().string();
  }
  const auto seed = get_or<std::int64_t>(j, "seed", 0);
  if (seed < 0) throw ScenarioError("seed must be >= 0");
  s.seed = static_cast<std::uint64_t>(seed);

  if (j.contains("initial_pose")) {
    const auto& v = j["initial_pose"];
    if (!v.is_array() || v.size() != kPoseDim) throw ScenarioError("initial_pose must hold 69 numbers");
    for (int d = 0; d < kPoseDim; ++d) s.initial_pose.v[d] = v[static_cast<std::size_t>(d)].get<double>();
  } else {
    const json start = j.value("start", json::object());
    double x = 0.0;
    double y = 0.0;
    if (start.contains("position")) {
      const auto& p = start["position"];
      if (!p.is_array() || p.size() != 2) throw ScenarioError("start.position must hold 2 numbers");
      x = p[0].get<double>();
      y = p[1].get<double>();
    }
    s.initial_pose = standing_pose(x, y, get_or(start, "yaw", 0.0));
  }

  if (!j.contains("tasks") || !j["tasks"].is_array()) throw ScenarioError("scenario needs a 'tasks' array");
  for (const auto& t : j["tasks"]) {
    SubTask task;
    try {
      task.action = action_from_string(t.at("action").get<std::string>());
    } catch (const std::exception& e) {
      throw ScenarioError(std::string("task action: ") + e.what());
    }
    task.goal.action = task.action;
    if (!t.contains("goal_joints") || !t["goal_joints"].is_array()) throw ScenarioError("task needs 'goal_joints'");
    for (const auto& g : t["goal_joints"]) {
      GoalJoint gj;
      gj.joint = joint_index(g.at("joint"));
      gj.position = read_vec3(g.at("xyz"), "goal xyz");
      task.goal.joints.push_back(gj);
    }
    s.tasks.push_back(std::move(task));
  }

  PlannerOptions& o = s.options;
  const json ov = j.value("overrides", json::object());
  o.frames = get_or(ov, "frames", o.frames);
  o.fps = get_or(ov, "fps", o.fps);
  o.steps = get_or(ov, "steps", o.steps);
  o.goal_hints = get_or(ov, "goal_hints", o.goal_hints);
  o.history_hints = get_or(ov, "history_hints", o.history_hints);
  o.inpainting = get_or(ov, "inpainting", o.inpainting);
  o.history_reward = get_or(ov, "history_reward", o.history_reward);
  o.goal_hold = get_or(ov, "goal_hold", o.goal_hold);
  if (ov.contains("mode")) {
    try {
      o.guidance.mode = guidance_mode_from_string(ov["mode"].get<std::string>());
    } catch (const std::exception& e) {
      throw ScenarioError(e.what());
    }
  }
  o.guidance.inner_iterations = get_or(ov, "inner_iterations", o.guidance.inner_iterations);
  o.guidance.gradient_clip = get_or(ov, "gradient_clip", o.guidance.gradient_clip);
  o.guidance.t_inpaint = get_or(ov, "t_inpaint", o.guidance.t_inpaint);
  o.denoiser.hint_weight = get_or(ov, "hint_weight", o.denoiser.hint_weight);
  o.denoiser.prior_weight = get_or(ov, "prior_weight", o.denoiser.prior_weight);
  if (ov.contains("lambda")) {
    for (RewardTerm t : kAllRewardTerms) {
      const std::string key(to_string(t));
      if (ov["lambda"].contains(key)) o.rewards.lambda[static_cast<std::size_t>(t)] = ov["lambda"][key].get<double>();
    }
  }
  if (ov.contains("eps_vel")) o.rewards.eps_vel = ov["eps_vel"].get<double>();
  if (ov.contains("eps_pene")) o.rewards.eps_pene = ov["eps_pene"].get<double>();
  if (ov.contains("eps_cont")) o.rewards.eps_cont = ov["eps_cont"].get<double>();
  if (ov.contains("eps_acc")) o.rewards.eps_acc = ov["eps_acc"].get<double>();
  if (ov.contains("acc_clamped")) o.rewards.acc_clamped = ov["acc_clamped"].get<bool>();

  if (!(o.denoiser.hint_weight >= 0.0) || !(o.denoiser.prior_weight >= 0.0)) {
    throw ScenarioError("denoiser weights must be >= 0");
  }
  s.validate();
  return s;
}

inline ScenarioScript load_scenario(const std::string& path) {
  const std::string base = std::filesystem::path(path).parent_path().string();
  return parse_scenario(planner_detail::read_text(path), base.empty() ? "." : base);
}

}  // namespace dip

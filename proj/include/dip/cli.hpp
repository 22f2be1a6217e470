#pragma once

// The `dip` command line: bake scenes, run scenarios, compare guidance
// variants and run the self-checks. Kept in a header so tests can drive the
// commands in-process.

#include "dip/checks.hpp"
#include "dip/metrics.hpp"
#include "dip/planner.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace dip::cli {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kTraceFormat = "dip-trace-1";

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

namespace fs = std::filesystem;
using nlohmann::json;

namespace cli_detail {

inline std::string real(double v) { return scene_detail::format_real(v); }

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

inline std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace cli_detail

/// trace.csv: one row per frame, the pose followed by joint positions.
inline std::string trace_csv(const MotionClip& motion, const Skeleton& skel) {
  using cli_detail::real;
  std::string out = "frame";
  for (int d = 0; d < kPoseDim; ++d) out += ",p" + std::to_string(d);
  for (int j = 0; j < skel.joint_count(); ++j) {
    for (const char* a : {"x", "y", "z"}) out += ",j" + std::to_string(j) + "_" + a;
  }
  out += '\n';
  for (int s = 0; s < motion.size(); ++s) {
    const Pose& p = motion.frames[static_cast<std::size_t>(s)];
    out += std::to_string(s);
    for (int d = 0; d < kPoseDim; ++d) out += "," + real(p.v[d]);
    for (const Vec3& j : forward_kinematics(p, skel)) {
      for (int a = 0; a < 3; ++a) out += "," + real(j[a]);
    }
    out += '\n';
  }
  return out;
}

inline std::string rewards_trace_csv(const ScenarioResult& r) {
  using cli_detail::real;
  std::string out = "task,t";
  for (RewardTerm t : kAllRewardTerms) out += "," + std::string(to_string(t));
  out += ",total,nat,grad_norm,fallback\n";
  for (std::size_t k = 0; k < r.syntheses.size(); ++k) {
    for (const StepTrace& st : r.syntheses[k].trace) {
      out += std::to_string(k) + "," + std::to_string(st.t);
      for (double v : st.values) out += "," + real(v);
      out += "," + real(st.total) + "," + real(st.nat) + "," + real(st.grad_norm) + "," + (st.fallback ? "1" : "0") + "\n";
    }
  }
  return out;
}

inline std::string metrics_text(const ScenarioResult& r) {
  std::string out = r.metrics.to_text();
  for (std::size_t k = 0; k < r.tasks.size(); ++k) {
    const TaskReport& t = r.tasks[k];
    const std::string p = "task" + std::to_string(k) + "_";
    out += p + "action = " + std::string(to_string(t.action)) + "\n";
    out += p + "goal_frame = " + std::to_string(t.goal_frame) + "\n";
    out += p + "goal_distance = " + cli_detail::real(t.goal_distance) + "\n";
    out += p + "fallbacks = " + std::to_string(r.syntheses[k].fallbacks) + "\n";
  }
  return out;
}

struct RunRequest {
  std::string scenario;  // path; ignored when `manifest` is set
  std::string manifest;  // re-run from a previous manifest
  std::string out;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
};

struct RunOutcome {
  ScenarioResult result;
  ScenarioScript script;
  fs::path out_dir;
};

/// Executes a scenario and writes trace.csv, metrics.txt, rewards_trace.csv
/// and manifest.json into the output directory, then appends a row to
/// results.csv there.
inline RunOutcome cmd_run(const RunRequest& req) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string scenario_text;
  std::string scenario_dir;
  std::string scenario_label = req.scenario;
  std::optional<std::string> mode = req.mode;
  std::optional<std::uint64_t> seed = req.seed;
  if (!req.manifest.empty()) {
    const json m = planner_detail::parse_json(planner_detail::read_text(req.manifest), "manifest");
    scenario_text = m.at("scenario_text").get<std::string>();
    scenario_dir = m.at("scenario_dir").get<std::string>();
    scenario_label = m.value("scenario", std::string());
    if (!mode) mode = m.at("mode").get<std::string>();
    if (!seed) seed = m.at("seed").get<std::uint64_t>();
  } else {
    if (req.scenario.empty()) throw ScenarioError("run needs --scenario or --manifest");
    scenario_text = planner_detail::read_text(req.scenario);
    scenario_dir = fs::absolute(fs::path(req.scenario)).parent_path().string();
  }
  ScenarioScript script = parse_scenario(scenario_text, scenario_dir);
  if (mode) {
    try {
      script.options.guidance.mode = guidance_mode_from_string(*mode);
    } catch (const std::invalid_argument& e) {
      throw ScenarioError(e.what());
    }
  }
  if (seed) script.seed = *seed;

  const fs::path out_dir(req.out);
  fs::create_directories(out_dir);
  const SceneField scene = load_scene_any(script.scene_path);
  const Engine engine = Engine::build(script.options);
  RunOutcome outcome{run_scenario(script, engine, scene), script, out_dir};
  const ScenarioResult& r = outcome.result;

  cli_detail::write_file(out_dir / "trace.csv", trace_csv(r.motion, engine.skel));
  cli_detail::write_file(out_dir / "rewards_trace.csv", rewards_trace_csv(r));
  cli_detail::write_file(out_dir / "metrics.txt", metrics_text(r));

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json manifest = {
      {"tool", "dip"},
      {"tool_version", kToolVersion},
      {"trace_format", kTraceFormat},
      {"scenario", scenario_label},
      {"scenario_dir", scenario_dir},
      {"scenario_text", scenario_text},
      {"scene", script.scene_path},
      {"seed", script.seed},
      {"mode", std::string(to_string(script.options.guidance.mode))},
      {"output_dir", fs::absolute(out_dir).string()},
      {"started_utc", cli_detail::utc_now()},
      {"wall_clock_seconds", wall},
      {"frames", r.motion.size()},
  };
  cli_detail::write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");

  const fs::path results = out_dir / "results.csv";
  const bool fresh = !fs::exists(results);
  std::ofstream row(results, std::ios::app);
  if (fresh) {
    row << "scenario,seed,mode";
    for (const char* k : MetricsReport::kKeys) row << ',' << k;
    row << '\n';
  }
  row << scenario_label << ',' << script.seed << ',' << to_string(script.options.guidance.mode);
  for (double v : r.metrics.values()) row << ',' << cli_detail::real(v);
  row << '\n';
  return outcome;
}

// ---------------------------------------------------------------------------
// Ablation.

enum class Variant { kInversion, kDirect, kUnguided, kInversionNoInpaint };
inline constexpr std::array<Variant, 4> kAllVariants = {Variant::kInversion, Variant::kDirect, Variant::kUnguided,
                                                        Variant::kInversionNoInpaint};

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kInversion: return "inversion";
    case Variant::kDirect: return "direct";
    case Variant::kUnguided: return "unguided";
    case Variant::kInversionNoInpaint: return "inversion_no_inpaint";
  }
  return "?";
}

inline ScenarioScript apply_variant(ScenarioScript s, Variant v) {
  switch (v) {
    case Variant::kInversion: s.options.guidance.mode = GuidanceMode::kInversion; break;
    case Variant::kDirect: s.options.guidance.mode = GuidanceMode::kDirect; break;
    case Variant::kUnguided: s.options.guidance.mode = GuidanceMode::kUnguided; break;
    case Variant::kInversionNoInpaint:
      s.options.guidance.mode = GuidanceMode::kInversion;
      s.options.inpainting = false;
      break;
  }
  return s;
}

struct VariantRun {
  Variant variant = Variant::kInversion;
  std::uint64_t seed = 0;
  MetricsReport metrics;
  double goal_distance = 0.0;
  double max_marker_acc = 0.0;
  double span_residual = 0.0;  // of the last sub-task's clip, in its local frame
};

inline VariantRun run_variant(const ScenarioScript& base, const Engine& engine, const SceneField& scene, Variant v,
                              std::uint64_t seed) {
  ScenarioScript s = apply_variant(base, v);
  s.seed = seed;
  s.options.guidance.record_trace = false;
  const ScenarioResult r = run_scenario(s, engine, scene);
  VariantRun out;
  out.variant = v;
  out.seed = seed;
  out.metrics = r.metrics;
  out.goal_distance = r.metrics.avg_goal_distance;
  out.max_marker_acc = max_marker_acceleration(r.motion, engine.skel, engine.markers);
  out.span_residual = span_residual(engine.denoiser.basis(s.tasks.back().action), r.syntheses.back().x0);
  return out;
}

struct AblationReport {
  std::vector<VariantRun> runs;
  std::string table;
};

/// Runs every variant on seeds base.seed .. base.seed + seeds - 1. Runs are
/// independent and shared state is read-only, so they are spread over `jobs`
/// worker threads; results keep a fixed order regardless of scheduling.
inline AblationReport cmd_ablate(const std::string& scenario, const std::string& out, int seeds, int jobs = 1) {
  if (seeds < 1) throw ScenarioError("--seeds must be >= 1");
  if (jobs < 1) throw ScenarioError("--jobs must be >= 1");
  const ScenarioScript base = load_scenario(scenario);
  const SceneField scene = load_scene_any(base.scene_path);
  const Engine engine = Engine::build(base.options);
  AblationReport rep;
  const std::size_t total = kAllVariants.size() * static_cast<std::size_t>(seeds);
  rep.runs.resize(total);
  std::vector<std::exception_ptr> errors(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < total; k = next++) {
      const Variant v = kAllVariants[k / static_cast<std::size_t>(seeds)];
      const auto seed = base.seed + static_cast<std::uint64_t>(k % static_cast<std::size_t>(seeds));
      try {
        rep.runs[k] = run_variant(base, engine, scene, v, seed);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(jobs), total);
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  using cli_detail::real;
  std::string csv = "variant,seed,goal_distance,pene_mean,pene_max,contact_score,max_marker_acc,span_residual\n";
  for (const auto& r : rep.runs) {
    csv += std::string(to_string(r.variant)) + "," + std::to_string(r.seed) + "," + real(r.goal_distance) + "," +
           real(r.metrics.pene_mean) + "," + real(r.metrics.pene_max) + "," + real(r.metrics.contact_score) + "," +
           real(r.max_marker_acc) + "," + real(r.span_residual) + "\n";
  }
  std::ostringstream table;
  table << "variant                 goal_dist   pene_mean   pene_max    contact     max_acc     span_res\n";
  for (Variant v : kAllVariants) {
    std::array<double, 6> sum{};
    int n = 0;
    for (const auto& r : rep.runs) {
      if (r.variant != v) continue;
      ++n;
      const std::array<double, 6> x = {r.goal_distance, r.metrics.pene_mean, r.metrics.pene_max,
                                       r.metrics.contact_score, r.max_marker_acc, r.span_residual};
      for (std::size_t i = 0; i < x.size(); ++i) sum[i] += x[i];
    }
    char line[256];
    std::snprintf(line, sizeof(line), "%-22s %10.4f  %10.4f  %10.4f  %10.4f  %10.2f  %10.3g\n",
                  std::string(to_string(v)).c_str(), sum[0] / n, sum[1] / n, sum[2] / n, sum[3] / n, sum[4] / n,
                  sum[5] / n);
    table << line;
  }
  rep.table = table.str();
  const fs::path dir(out);
  fs::create_directories(dir);
  cli_detail::write_file(dir / "ablation.csv", csv);
  cli_detail::write_file(dir / "ablation.txt", rep.table);
  return rep;
}

// ---------------------------------------------------------------------------
// Checks.

/// Returns true when every requested suite passed.
inline bool cmd_check(bool grad, bool schedule, bool blend, std::ostream& out) {
  bool ok = true;
  if (schedule) {
    const CheckResult r = check_schedule(default_schedule());
    out << (r.passed ? "PASS" : "FAIL") << " schedule: " << r.detail << '\n';
    ok = ok && r.passed;
  }
  if (grad) {
    for (const auto& r : check_all_reward_gradients()) {
      out << (r.passed ? "PASS" : "FAIL") << " gradient " << to_string(r.term) << " (" << r.variant
          << "): motions=" << r.motions << " worst_rel_err=" << r.worst_relative_error << '\n';
      ok = ok && r.passed;
    }
  }
  if (blend) {
    const BlendCheckReport r = check_blend();
    out << (r.passed ? "PASS" : "FAIL") << " blend: endpoint_err=" << r.endpoint_error
        << " orthonormality=" << r.orthonormality << " boundary_jump=" << r.boundary_jump
        << " intra_jump=" << r.intra_jump << '\n';
    ok = ok && r.passed;
  }
  return ok;
}

inline int cmd_bake(const std::string& spec_path, const std::string& out_path, std::ostream& out) {
  const ObstacleSpec spec = load_obstacle_spec(spec_path);
  const SceneField scene = bake_boxes(spec);
  save_scene(scene, out_path);
  out << "baked " << scene.sdf.nx << "x" << scene.sdf.ny << "x" << scene.sdf.nz << " grid to " << out_path << '\n';
  return kExitOk;
}

/// Exit code for an exception escaping a command.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const std::invalid_argument*>(&e) != nullptr) return kExitValidation;
  if (dynamic_cast<const SceneFormatError*>(&e) != nullptr) return kExitValidation;
  if (dynamic_cast<const SceneError*>(&e) != nullptr) return kExitValidation;
  return kExitRuntime;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Reward-guided diffusion motion synthesis", "dip"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string spec_path, scene_out;
  auto* bake = app.add_subcommand("bake", "Bake an obstacle spec into a scene file");
  bake->add_option("--spec", spec_path, "obstacle spec (JSON)")->required();
  bake->add_option("--out", scene_out, "output scene file")->required();

  RunRequest req;
  std::string mode_str;
  std::uint64_t seed_val = 0;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario");
  auto* scen_opt = run_cmd->add_option("--scenario", req.scenario, "scenario file");
  auto* man_opt = run_cmd->add_option("--manifest", req.manifest, "re-run a previous manifest.json");
  scen_opt->excludes(man_opt);
  run_cmd->add_option("--out", req.out, "output directory")->required();
  auto* mode_opt = run_cmd->add_option("--mode", mode_str, "inversion | direct | unguided")
                       ->check(CLI::IsMember({"inversion", "direct", "unguided"}));
  auto* seed_opt = run_cmd->add_option("--seed", seed_val, "random seed");

  std::string ab_scenario, ab_out;
  int ab_seeds = 10;
  int ab_jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  auto* ablate = app.add_subcommand("ablate", "Compare guidance modes and inpainting");
  ablate->add_option("--scenario", ab_scenario, "scenario file")->required();
  ablate->add_option("--out", ab_out, "output directory")->required();
  ablate->add_option("--seeds", ab_seeds, "number of seeds")->check(CLI::PositiveNumber);
  ablate->add_option("--jobs", ab_jobs, "worker threads")->check(CLI::PositiveNumber);

  bool g = false, s = false, b = false;
  auto* check = app.add_subcommand("check", "Run the self-check suites");
  check->add_flag("--grad", g, "reward gradients vs finite differences");
  check->add_flag("--schedule", s, "noise schedule statistics");
  check->add_flag("--blend", b, "blending properties");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*bake) return cmd_bake(spec_path, scene_out, out);
    if (*run_cmd) {
      if (*mode_opt) req.mode = mode_str;
      if (*seed_opt) req.seed = seed_val;
      if (req.scenario.empty() && req.manifest.empty()) throw ScenarioError("run needs --scenario or --manifest");
      const RunOutcome o = cmd_run(req);
      out << o.result.metrics.to_text();
      return kExitOk;
    }
    if (*ablate) {
      out << cmd_ablate(ab_scenario, ab_out, ab_seeds, ab_jobs).table;
      return kExitOk;
    }
    if (*check) {
      if (!g && !s && !b) g = s = b = true;
      return cmd_check(g, s, b, out) ? kExitOk : kExitRuntime;
    }
  } catch (const SubTaskError& e) {
    err << "error: " << e.what() << " (partial motion: " << e.partial().size() << " frames)\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitValidation;
}

}  // namespace dip::cli

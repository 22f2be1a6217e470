// Acceptance suite: one PASS/FAIL line per criterion.

#include "dip/checks.hpp"
#include "dip/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#ifndef DIP_DATA_DIR
#define DIP_DATA_DIR "data"
#endif

using namespace dip;
namespace fs = std::filesystem;

namespace {

constexpr int kSeeds = 10;

std::string scenario(const char* name) { return std::string(DIP_DATA_DIR) + "/scenarios/" + name; }

struct Line {
  int id;
  bool pass;
  std::string detail;
  double seconds;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Runs `variant` on seeds base.seed .. base.seed + kSeeds - 1.
std::vector<cli::VariantRun> sweep(const ScenarioScript& base, const Engine& engine, const SceneField& scene,
                                   cli::Variant variant) {
  std::vector<cli::VariantRun> out;
  for (int i = 0; i < kSeeds; ++i) {
    out.push_back(cli::run_variant(base, engine, scene, variant, base.seed + static_cast<std::uint64_t>(i)));
  }
  return out;
}

std::vector<double> field(const std::vector<cli::VariantRun>& runs, double cli::VariantRun::*m) {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.*m);
  return v;
}

std::vector<double> pene(const std::vector<cli::VariantRun>& runs) {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.metrics.pene_mean);
  return v;
}

Line criterion1() {
  const CheckResult r = check_schedule(default_schedule());
  return {1, r.passed, "schedule " + r.detail, 0};
}

Line criterion2() {
  bool ok = true;
  double worst = 0.0;
  int fewest = 1 << 30;
  for (const auto& r : check_all_reward_gradients()) {
    ok = ok && r.passed;
    worst = std::max(worst, r.worst_relative_error);
    fewest = std::min(fewest, r.motions);
  }
  return {2, ok, "worst relative error " + fmt("%.3g", worst) + " (tol 1e-3), min motions per reward " + std::to_string(fewest), 0};
}

Line criterion3() {
  const ScenarioScript base = load_scenario(scenario("walk_empty.json"));
  const SceneField scene = load_scene_any(base.scene_path);
  const Engine engine = Engine::build(base.options);
  const auto guided = field(sweep(base, engine, scene, cli::Variant::kInversion), &cli::VariantRun::goal_distance);
  const auto unguided = field(sweep(base, engine, scene, cli::Variant::kUnguided), &cli::VariantRun::goal_distance);
  const auto hits = std::count_if(guided.begin(), guided.end(), [](double d) { return d <= 0.1; });
  const double med = median(unguided);
  return {3, hits >= 9 && med >= 1.0,
          "guided within 0.1 on " + std::to_string(hits) + "/10 seeds (max " +
              fmt("%.4f", *std::max_element(guided.begin(), guided.end())) + "), unguided median " + fmt("%.3f", med),
          0};
}

struct BoxRuns {
  std::vector<cli::VariantRun> inversion, direct, unguided;
};

const BoxRuns& box_runs() {
  static const BoxRuns runs = [] {
    const ScenarioScript base = load_scenario(scenario("walk_box.json"));
    const SceneField scene = load_scene_any(base.scene_path);
    const Engine engine = Engine::build(base.options);
    return BoxRuns{sweep(base, engine, scene, cli::Variant::kInversion),
                   sweep(base, engine, scene, cli::Variant::kDirect),
                   sweep(base, engine, scene, cli::Variant::kUnguided)};
  }();
  return runs;
}

Line criterion4() {
  const BoxRuns& r = box_runs();
  const double g = mean(pene(r.inversion)), u = mean(pene(r.unguided));
  const auto d = field(r.inversion, &cli::VariantRun::goal_distance);
  const double worst = *std::max_element(d.begin(), d.end());
  const double reduction = u > 0.0 ? 1.0 - g / u : 0.0;
  return {4, reduction >= 0.5 && worst <= 0.3,
          "penetration mean guided " + fmt("%.4f", g) + " vs unguided " + fmt("%.4f", u) + " (reduction " +
              fmt("%.1f", 100 * reduction) + "%), guided goal distance max " + fmt("%.4f", worst),
          0};
}

Line criterion5() {
  const ScenarioScript base = load_scenario(scenario("sit_chair.json"));
  const SceneField scene = load_scene_any(base.scene_path);
  const Engine engine = Engine::build(base.options);
  const double on = mean(field(sweep(base, engine, scene, cli::Variant::kInversion), &cli::VariantRun::goal_distance));
  const double off =
      mean(field(sweep(base, engine, scene, cli::Variant::kInversionNoInpaint), &cli::VariantRun::goal_distance));
  return {5, on <= off, "mean goal distance with inpainting " + fmt("%.6f", on) + ", without " + fmt("%.6f", off), 0};
}

Line criterion6() {
  const BoxRuns& r = box_runs();
  int wins = 0;
  for (int i = 0; i < kSeeds; ++i) wins += r.inversion[i].max_marker_acc <= r.direct[i].max_marker_acc ? 1 : 0;
  const auto inv = field(r.inversion, &cli::VariantRun::span_residual);
  const auto dir = field(r.direct, &cli::VariantRun::span_residual);
  const double inv_max = *std::max_element(inv.begin(), inv.end());
  const double dir_min = *std::min_element(dir.begin(), dir.end());
  const bool acc_ok = wins >= 7;
  const bool span_ok = inv_max <= 1e-6 && dir_min > 1e-3;
  return {6, acc_ok && span_ok,
          "inversion max marker acc <= direct on " + std::to_string(wins) + "/10 seeds (" + (acc_ok ? "ok" : "fail") +
              "); span residual inversion max " + fmt("%.3g", inv_max) + ", direct min " + fmt("%.3g", dir_min) +
              " (" + (span_ok ? "ok" : "fail") + ")",
          0};
}

Line criterion7() {
  const BlendCheckReport r = check_blend();
  return {7, r.passed,
          "endpoint error " + fmt("%.3g", r.endpoint_error) + ", orthonormality " + fmt("%.3g", r.orthonormality) +
              ", boundary jump " + fmt("%.4f", r.boundary_jump) + " vs intra max " + fmt("%.4f", r.intra_jump),
          0};
}

Line criterion8() {
  const CanonicalCheckReport r = check_canonicalization();
  return {8, r.passed,
          "pelvis " + fmt("%.3g", r.pelvis_error) + ", orientation " + fmt("%.3g", r.orientation_error) +
              ", invariance " + fmt("%.3g", r.invariance_error),
          0};
}

Line criterion9() {
  auto trace = [](double height, double speed) {
    std::vector<Points> out;
    for (int s = 0; s < 12; ++s) out.emplace_back(kJointCount, Vec3(speed * s / 40.0, 0.0, height));
    return out;
  };
  const double one = contact_score(trace(0.05, 0.075), 0.0, 40.0);
  const double inv_e = contact_score(trace(1.05, 0.075), 0.0, 40.0);

  const Skeleton skel = Skeleton::standard();
  const MarkerSet ms = MarkerSet::standard();
  ObstacleSpec spec;
  spec.bounds_min = Vec3(-2, -2, 0);
  spec.bounds_max = Vec3(2, 2, 2);
  spec.boxes.push_back({Vec3(0.1, 0.0, 0.4), Vec3(0.6, 0.6, 0.8)});
  const SceneField scene = bake_boxes(spec);
  Rng rng(17);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  MotionClip m;
  for (int s = 0; s < 40; ++s) {
    Pose p;
    for (int d = 0; d < kPoseDim; ++d) p.v[d] = 0.3 * u(rng);
    p.set_translation(Vec3(u(rng), u(rng), 0.2 * u(rng)));
    m.frames.push_back(p);
  }
  const PenetrationStats got = penetration_stats(m, skel, ms, scene);
  double sum = 0.0, worst = 0.0;
  for (const auto& p : m.frames) {
    double f = 0.0;
    for (const Vec3& mk : compute_markers(p, skel, ms)) {
      const double v = sdf_query(scene, mk).value;
      if (v < 0.0) f -= v;
    }
    sum += f;
    worst = std::max(worst, f);
  }
  const bool exact = got.mean == sum / m.size() && got.max == worst && worst > 0.0;
  const bool ok = std::abs(one - 1.0) < 1e-12 && std::abs(inv_e - std::exp(-1.0)) < 1e-12 && exact;
  return {9, ok,
          "contact " + fmt("%.12f", one) + " and " + fmt("%.12f", inv_e) + ", penetration oracle " +
              (exact ? "exact" : "mismatch") + " (mean " + fmt("%.5f", got.mean) + ")",
          0};
}

Line criterion10() {
  const fs::path dir = fs::temp_directory_path() / "dip_acceptance_determinism";
  fs::remove_all(dir);
  cli::RunRequest a;
  a.scenario = scenario("walk_box.json");
  a.out = (dir / "first").string();
  cli::cmd_run(a);
  cli::RunRequest b;
  b.manifest = (dir / "first" / "manifest.json").string();
  b.out = (dir / "second").string();
  cli::cmd_run(b);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string x = slurp(dir / "first" / "trace.csv"), y = slurp(dir / "second" / "trace.csv");
  fs::remove_all(dir);
  return {10, !x.empty() && x == y, "trace.csv " + std::to_string(x.size()) + " bytes, " + (x == y ? "identical" : "different"), 0};
}

}  // namespace

int main() {
  const std::vector<std::function<Line()>> criteria = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9, criterion10};
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Line l;
    try {
      l = c();
    } catch (const std::exception& e) {
      l = {static_cast<int>(&c - criteria.data()) + 1, false, std::string("error: ") + e.what(), 0};
    }
    l.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += l.pass ? 0 : 1;
    std::printf("criterion %d: %s  %s  [%.1f s]\n", l.id, l.pass ? "PASS" : "FAIL", l.detail.c_str(), l.seconds);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

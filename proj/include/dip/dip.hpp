#pragma once

// Reward-guided reverse diffusion: denoise, inpaint, nudge the posterior mean
// along the reward gradient and resample.

#include "dip/diffusion.hpp"
#include "dip/log.hpp"
#include "dip/rewards.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dip {

enum class GuidanceMode { kInversion, kDirect, kUnguided };

inline std::string_view to_string(GuidanceMode m) {
  switch (m) {
    case GuidanceMode::kInversion: return "inversion";
    case GuidanceMode::kDirect: return "direct";
    case GuidanceMode::kUnguided: return "unguided";
  }
  return "?";
}

inline GuidanceMode guidance_mode_from_string(std::string_view s) {
  if (s == "inversion") return GuidanceMode::kInversion;
  if (s == "direct") return GuidanceMode::kDirect;
  if (s == "unguided") return GuidanceMode::kUnguided;
  throw std::invalid_argument("unknown guidance mode '" + std::string(s) + "'");
}

struct GuidanceConfig {
  GuidanceMode mode = GuidanceMode::kInversion;
  int inner_iterations = 1;
  double gradient_clip = 100.0;
  int t_inpaint = kDefaultInpaintSteps;
  bool record_trace = true;

  void validate() const {
    if (inner_iterations < 1) throw std::invalid_argument("guidance inner iterations must be >= 1");
    if (!(gradient_clip > 0.0)) throw std::invalid_argument("guidance gradient clip must be > 0");
    if (t_inpaint < 0) throw std::invalid_argument("t_inpaint must be >= 0");
  }
};

struct StepTrace {
  int t = 0;
  std::array<double, kRewardTermCount> values{};
  double total = 0.0;
  double nat = 0.0;        // |mu_t - x_t|
  double grad_norm = 0.0;  // before clipping
  bool fallback = false;
};

struct SynthesisResult {
  Eigen::VectorXd x0;
  Eigen::VectorXd x_final;  // the last reverse sample x_0, kept for diagnostics
  MotionClip motion;
  std::vector<StepTrace> trace;
  std::uint64_t seed = 0;
  GuidanceMode mode = GuidanceMode::kInversion;
  int fallbacks = 0;
};

namespace dip_detail {

inline double clip_norm(Eigen::VectorXd& g, double clip) {
  const double n = g.norm();
  if (std::isfinite(n) && n > clip) g *= clip / n;
  return n;
}

}  // namespace dip_detail

struct GuidanceOutcome {
  Eigen::VectorXd mu;
  double grad_norm = 0.0;
  bool fallback = false;
};

/// mu~ = mu + beta~_t * clip(grad). Inversion differentiates the reward of
/// x0(mu, t - 1) through the denoiser; direct differentiates R(mu).
inline GuidanceOutcome guidance_step(const Eigen::VectorXd& mu, int t, const Condition& c, const Denoiser& denoiser,
                                     const NoiseSchedule& schedule, const RewardContext& ctx,
                                     const RewardConfig& rcfg, const GuidanceConfig& gcfg) {
  schedule.check_step(t);
  GuidanceOutcome out{mu, 0.0, false};
  if (gcfg.mode == GuidanceMode::kUnguided) return out;
  const double bt = schedule.beta_tilde[static_cast<std::size_t>(t)];
  for (int it = 0; it < gcfg.inner_iterations; ++it) {
    Eigen::VectorXd g;
    if (gcfg.mode == GuidanceMode::kInversion) {
      const Linearization lin = denoiser.linearize(out.mu, t - 1, c);
      const RewardBreakdown r = r_total(lin.x0, ctx, rcfg);
      g = lin.vjp(r.gradient);
    } else {
      g = r_total(out.mu, ctx, rcfg).gradient;
    }
    const double n = dip_detail::clip_norm(g, gcfg.gradient_clip);
    if (it == 0) out.grad_norm = n;
    if (!g.allFinite()) {
      log(LogLevel::kWarning, "guidance: non-finite gradient at t=" + std::to_string(t) + ", step left unguided");
      out.mu = mu;
      out.fallback = true;
      return out;
    }
    out.mu += bt * g;
  }
  return out;
}

/// Full reverse process from x_T ~ N(0, I). Returns the clean-motion estimate
/// of the final (t = 1) denoiser call.
inline SynthesisResult synthesize(const Denoiser& denoiser, const NoiseSchedule& schedule, const Condition& c,
                                  const InpaintSpec& inpaint, const RewardContext& ctx, const RewardConfig& rcfg,
                                  const GuidanceConfig& gcfg, std::uint64_t seed, int frames = kDefaultFrames,
                                  double fps = kDefaultFps) {
  gcfg.validate();
  rcfg.validate();
  Rng rng(seed);
  SynthesisResult res;
  res.seed = seed;
  res.mode = gcfg.mode;
  Eigen::VectorXd x = standard_normal(static_cast<Eigen::Index>(frames) * kPoseDim, rng);
  if (gcfg.record_trace) res.trace.reserve(static_cast<std::size_t>(schedule.T));
  for (int t = schedule.T; t >= 1; --t) {
    Eigen::VectorXd x0 = apply_inpaint(denoiser.predict_x0(x, t, c), inpaint, t, gcfg.t_inpaint);
    const Eigen::VectorXd mu = posterior_mean(x0, x, t, schedule);
    StepTrace st;
    st.t = t;
    if (gcfg.record_trace) {
      const RewardBreakdown r = r_total(x0, ctx, rcfg, false);
      st.values = r.values;
      st.total = r.total;
      st.nat = (mu - x).norm();
    }
    const GuidanceOutcome g = guidance_step(mu, t, c, denoiser, schedule, ctx, rcfg, gcfg);
    st.grad_norm = g.grad_norm;
    st.fallback = g.fallback;
    res.fallbacks += g.fallback ? 1 : 0;
    if (gcfg.record_trace) res.trace.push_back(st);
    x = posterior_sample(g.mu, t, schedule, rng);
    if (t == 1) res.x0 = std::move(x0);
  }
  res.x_final = std::move(x);
  res.motion = MotionClip::from_flat(res.x0, fps);
  return res;
}

}  // namespace dip

#pragma once

// DDPM schedule algebra, forward noising, posterior sampling, the
// clean-motion-predicting denoiser interface and inpainting.

#include "dip/action.hpp"
#include "dip/kinematics.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dip {

using Rng = std::mt19937_64;

class DiffusionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Index 0 holds the empty-product conventions: alpha_bar[0] = 1, so
/// beta_tilde[1] = 0 and the final reverse step is deterministic.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> alpha;       // [1..T]
  std::vector<double> alpha_bar;   // [0..T]
  std::vector<double> beta;        // [1..T]
  std::vector<double> beta_tilde;  // [1..T]

  void check_step(int t) const {
    if (t < 1 || t > T) {
      throw DiffusionError("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
    }
  }
};

namespace diffusion_detail {

inline NoiseSchedule from_betas(const std::vector<double>& betas) {
  NoiseSchedule s;
  s.T = static_cast<int>(betas.size());
  const auto n = betas.size() + 1;
  s.alpha.assign(n, 1.0);
  s.alpha_bar.assign(n, 1.0);
  s.beta.assign(n, 0.0);
  s.beta_tilde.assign(n, 0.0);
  for (int t = 1; t <= s.T; ++t) {
    const auto tu = static_cast<std::size_t>(t);
    s.beta[tu] = betas[tu - 1];
    s.alpha[tu] = 1.0 - s.beta[tu];
    s.alpha_bar[tu] = s.alpha_bar[tu - 1] * s.alpha[tu];
    s.beta_tilde[tu] = (1.0 - s.alpha_bar[tu - 1]) / (1.0 - s.alpha_bar[tu]) * s.beta[tu];
  }
  return s;
}

inline std::vector<double> linear_betas(int T, double beta_start, double beta_end) {
  std::vector<double> b(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const double f = T == 1 ? 0.0 : static_cast<double>(t) / (T - 1);
    b[static_cast<std::size_t>(t)] = beta_start + (beta_end - beta_start) * f;
  }
  return b;
}

}  // namespace diffusion_detail

inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;
inline constexpr int kDefaultSteps = 1000;
inline constexpr int kDefaultInpaintSteps = 50;

/// Linear beta schedule over T steps.
inline NoiseSchedule build_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw DiffusionError("schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw DiffusionError("schedule needs 0 < beta_start <= beta_end < 1");
  }
  return diffusion_detail::from_betas(diffusion_detail::linear_betas(T, beta_start, beta_end));
}

/// The conventional linear schedule. Shorter schedules scale both beta
/// endpoints by a common factor, found by bisection, so that alpha_bar[T]
/// equals the 1000-step value.
inline NoiseSchedule default_schedule(int T = kDefaultSteps) {
  if (T >= kDefaultSteps) return build_schedule(T, kDefaultBetaStart, kDefaultBetaEnd);
  if (T < 1) throw DiffusionError("schedule needs T >= 1");
  const double target = std::log(build_schedule(kDefaultSteps, kDefaultBetaStart, kDefaultBetaEnd).alpha_bar.back());
  const auto base = diffusion_detail::linear_betas(T, kDefaultBetaStart, kDefaultBetaEnd);
  auto log_abar = [&](double scale) {
    double acc = 0.0;
    for (double b : base) acc += std::log1p(-std::min(b * scale, 0.999));
    return acc;
  };
  double lo = 1.0;
  double hi = 0.999 / base.back();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (log_abar(mid) > target) lo = mid; else hi = mid;
  }
  std::vector<double> betas = base;
  for (double& b : betas) b = std::min(b * 0.5 * (lo + hi), 0.999);
  return diffusion_detail::from_betas(betas);
}

inline Eigen::VectorXd standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = normal(rng);
  return out;
}

/// Closed-form q(x_t | x_0).
inline Eigen::VectorXd forward_noise(const Eigen::VectorXd& x0, int t, const NoiseSchedule& s, Rng& rng) {
  s.check_step(t);
  const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * standard_normal(x0.size(), rng);
}

/// Single-step kernel q(x_t | x_{t-1}).
inline Eigen::VectorXd forward_step(const Eigen::VectorXd& x_prev, int t, const NoiseSchedule& s, Rng& rng) {
  s.check_step(t);
  const double a = s.alpha[static_cast<std::size_t>(t)];
  return std::sqrt(a) * x_prev + std::sqrt(1.0 - a) * standard_normal(x_prev.size(), rng);
}

struct PosteriorCoefficients {
  double on_x0 = 0.0;
  double on_xt = 0.0;
};

inline PosteriorCoefficients posterior_coefficients(int t, const NoiseSchedule& s) {
  s.check_step(t);
  const auto tu = static_cast<std::size_t>(t);
  const double ab = s.alpha_bar[tu];
  const double ab_prev = s.alpha_bar[tu - 1];
  return {std::sqrt(ab_prev) * s.beta[tu] / (1.0 - ab),
          std::sqrt(s.alpha[tu]) * (1.0 - ab_prev) / (1.0 - ab)};
}

/// Mean of q(x_{t-1} | x_t, x0_hat).
inline Eigen::VectorXd posterior_mean(const Eigen::VectorXd& x0_hat, const Eigen::VectorXd& x_t, int t,
                                      const NoiseSchedule& s) {
  if (x0_hat.size() != x_t.size()) throw DiffusionError("posterior_mean: size mismatch");
  const auto c = posterior_coefficients(t, s);
  return c.on_x0 * x0_hat + c.on_xt * x_t;
}

/// Draws x_{t-1} ~ N(mu, beta_tilde_t I). No randomness is consumed at t = 1.
inline Eigen::VectorXd posterior_sample(const Eigen::VectorXd& mu, int t, const NoiseSchedule& s, Rng& rng) {
  s.check_step(t);
  const double var = s.beta_tilde[static_cast<std::size_t>(t)];
  if (var <= 0.0) return mu;
  return mu + std::sqrt(var) * standard_normal(mu.size(), rng);
}

/// Sparse joint-position targets. Values are zero wherever `valid` is false.
class KeyframeHints {
 public:
  KeyframeHints() = default;
  KeyframeHints(int frames, int joints)
      : frames_(frames), joints_(joints),
        values_(static_cast<std::size_t>(frames) * static_cast<std::size_t>(joints) * 3, 0.0),
        valid_(static_cast<std::size_t>(frames) * static_cast<std::size_t>(joints), 0) {}

  int frames() const { return frames_; }
  int joints() const { return joints_; }

  void set(int frame, int joint, const Vec3& p) {
    check(frame, joint);
    if (!p.allFinite()) throw DiffusionError("keyframe hint must be finite");
    const std::size_t i = slot(frame, joint);
    valid_[i] = 1;
    for (int a = 0; a < 3; ++a) values_[3 * i + static_cast<std::size_t>(a)] = p[a];
  }
  void clear(int frame, int joint) {
    check(frame, joint);
    const std::size_t i = slot(frame, joint);
    valid_[i] = 0;
    for (int a = 0; a < 3; ++a) values_[3 * i + static_cast<std::size_t>(a)] = 0.0;
  }
  bool valid(int frame, int joint) const { return valid_[slot(frame, joint)] != 0; }
  Vec3 value(int frame, int joint) const {
    const std::size_t i = 3 * slot(frame, joint);
    return {values_[i], values_[i + 1], values_[i + 2]};
  }
  int count() const {
    int n = 0;
    for (auto v : valid_) n += v;
    return n;
  }
  bool empty() const { return count() == 0; }

  /// True when padding slots hold exact zeros.
  bool zero_padded() const {
    for (std::size_t i = 0; i < valid_.size(); ++i) {
      if (valid_[i] == 0 && (values_[3 * i] != 0.0 || values_[3 * i + 1] != 0.0 || values_[3 * i + 2] != 0.0)) {
        return false;
      }
    }
    return true;
  }

  const std::vector<double>& values() const { return values_; }
  const std::vector<std::uint8_t>& valid_mask() const { return valid_; }

 private:
  std::size_t slot(int frame, int joint) const {
    return static_cast<std::size_t>(frame) * static_cast<std::size_t>(joints_) + static_cast<std::size_t>(joint);
  }
  void check(int frame, int joint) const {
    if (frame < 0 || frame >= frames_ || joint < 0 || joint >= joints_) {
      throw DiffusionError("keyframe hint slot out of range");
    }
  }

  int frames_ = 0;
  int joints_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> valid_;
};

struct Condition {
  Action action = Action::kLocomotion;
  KeyframeHints hints;
};

/// Entries with mask = 1 are held at `values`.
struct InpaintSpec {
  std::vector<std::uint8_t> mask;
  Eigen::VectorXd values;

  bool empty() const { return mask.empty(); }

  /// Holds complete poses at the first frames of a motion of `frames` frames.
  static InpaintSpec hold_leading_frames(const std::vector<Pose>& poses, int frames) {
    if (static_cast<int>(poses.size()) > frames) throw DiffusionError("inpaint: more held poses than frames");
    InpaintSpec spec;
    const auto n = static_cast<std::size_t>(frames) * kPoseDim;
    spec.mask.assign(n, 0);
    spec.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t s = 0; s < poses.size(); ++s) {
      for (int d = 0; d < kPoseDim; ++d) {
        const std::size_t i = s * kPoseDim + static_cast<std::size_t>(d);
        spec.mask[i] = 1;
        spec.values[static_cast<Eigen::Index>(i)] = poses[s].v[d];
      }
    }
    return spec;
  }
};

/// Replaces held entries when t > t_inpaint; identity otherwise.
inline Eigen::VectorXd apply_inpaint(const Eigen::VectorXd& x0_hat, const InpaintSpec& spec, int t, int t_inpaint) {
  if (spec.empty() || t <= t_inpaint) return x0_hat;
  if (spec.mask.size() != static_cast<std::size_t>(x0_hat.size()) || spec.values.size() != x0_hat.size()) {
    throw DiffusionError("apply_inpaint: shape mismatch");
  }
  Eigen::VectorXd out = x0_hat;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (spec.mask[static_cast<std::size_t>(i)] != 0) out[i] = spec.values[i];
  }
  return out;
}

/// Prediction at one point plus its vector-Jacobian product.
struct Linearization {
  Eigen::VectorXd x0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> vjp;
};

/// Any model predicting the clean motion from a noised one.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  /// Lets implementations share work between the prediction and its vjp.
  virtual Linearization linearize(const Eigen::VectorXd& x_t, int t, const Condition& c) const {
    return {predict_x0(x_t, t, c),
            [this, x_t, t, c](const Eigen::VectorXd& cot) { return vjp(x_t, t, c, cot); }};
  }

  virtual Eigen::VectorXd predict_x0(const Eigen::VectorXd& x_t, int t, const Condition& c) const = 0;

  /// Gradient of <predict_x0(x_t), cotangent> with respect to x_t. The default
  /// uses central differences, one pair of evaluations per coordinate.
  virtual Eigen::VectorXd vjp(const Eigen::VectorXd& x_t, int t, const Condition& c,
                              const Eigen::VectorXd& cotangent) const {
    return fd_vjp(x_t, t, c, cotangent);
  }

  Eigen::VectorXd fd_vjp(const Eigen::VectorXd& x_t, int t, const Condition& c, const Eigen::VectorXd& cotangent,
                         double step = 1e-4) const {
    Eigen::VectorXd grad(x_t.size());
    Eigen::VectorXd probe = x_t;
    for (Eigen::Index i = 0; i < x_t.size(); ++i) {
      probe[i] = x_t[i] + step;
      const double up = predict_x0(probe, t, c).dot(cotangent);
      probe[i] = x_t[i] - step;
      const double down = predict_x0(probe, t, c).dot(cotangent);
      probe[i] = x_t[i];
      grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
  }
};

}  // namespace dip

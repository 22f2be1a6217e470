#pragma once

// Motion prior used in place of a trained network: a linear motion basis per
// action with a Gaussian prior on its coefficients, and a denoiser that
// returns the posterior-mean clean motion in the span of that basis.

#include "dip/action.hpp"
#include "dip/diffusion.hpp"
#include "dip/kinematics.hpp"
#include "dip/log.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dip {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

class PriorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Columns of `matrix` are motions (frames * 69 entries). The coefficients
/// carry a Gaussian prior N(prior_mean, prior_precision^-1).
struct MotionBasis {
  Action action = Action::kLocomotion;
  int frames = kDefaultFrames;
  SparseMatrix matrix;
  Eigen::VectorXd prior_mean;
  Eigen::MatrixXd prior_precision;

  int dim() const { return static_cast<int>(matrix.cols()); }
  Eigen::VectorXd decode(const Eigen::VectorXd& coeffs) const { return matrix * coeffs; }
  Eigen::VectorXd mean_motion() const { return matrix * prior_mean; }
};

/// Per-action prior scales. "step" entries are standard deviations of the
/// change between consecutive spline control points; "abs" entries bound the
/// control points themselves.
struct PriorScales {
  double translation_xy_step = 0.25;
  double translation_xy_abs = 5.0;
  double translation_z_step = 0.01;
  double translation_z_abs = 0.05;
  double yaw_step = 0.1;
  double yaw_abs = 0.5;
  double tilt_step = 0.02;
  double tilt_abs = 0.05;
  double joint_start = 0.1;
  double joint_delta = 0.1;
  double gait = 1.0;
};

struct BasisOptions {
  int frames = kDefaultFrames;
  double fps = kDefaultFps;
  int translation_controls = 12;
  int orientation_controls = 6;
  double settle_fraction = 0.75;  // joint ramps complete at this fraction of the clip
  double gait_period_seconds = 1.0;
  std::optional<PriorScales> scales;  // defaults per action when empty
};

inline PriorScales default_prior_scales(Action action) {
  PriorScales p;
  switch (action) {
    case Action::kLocomotion:
      break;
    case Action::kSit:
      p.translation_xy_step = 0.1;
      p.translation_z_step = 0.1;
      p.translation_z_abs = 1.0;
      p.joint_delta = 0.3;
      break;
    case Action::kLie:
      p.translation_xy_step = 0.15;
      p.translation_z_step = 0.1;
      p.translation_z_abs = 1.0;
      p.tilt_step = 0.3;
      p.tilt_abs = 2.0;
      p.joint_delta = 0.3;
      break;
  }
  return p;
}

namespace prior_detail {

/// Clamped uniform cubic B-spline basis evaluated at u in [0, 1].
inline std::vector<double> bspline_row(int n_ctrl, double u) {
  constexpr int p = 3;
  const int n_knots = n_ctrl + p + 1;
  std::vector<double> knots(static_cast<std::size_t>(n_knots));
  const int interior = n_ctrl - p - 1;
  for (int i = 0; i < n_knots; ++i) {
    double k = 0.0;
    if (i <= p) {
      k = 0.0;
    } else if (i >= n_ctrl) {
      k = 1.0;
    } else {
      k = static_cast<double>(i - p) / (interior + 1);
    }
    knots[static_cast<std::size_t>(i)] = k;
  }
  // Degree-0 start; u = 1 belongs to the last non-empty span.
  std::vector<double> basis(static_cast<std::size_t>(n_knots - 1), 0.0);
  for (int i = 0; i < n_knots - 1; ++i) {
    const double a = knots[static_cast<std::size_t>(i)];
    const double b = knots[static_cast<std::size_t>(i + 1)];
    if ((u >= a && u < b) || (u == 1.0 && b == 1.0 && a < b)) basis[static_cast<std::size_t>(i)] = 1.0;
  }
  for (int d = 1; d <= p; ++d) {
    for (int i = 0; i < n_knots - 1 - d; ++i) {
      const double k0 = knots[static_cast<std::size_t>(i)];
      const double k1 = knots[static_cast<std::size_t>(i + d)];
      const double k2 = knots[static_cast<std::size_t>(i + 1)];
      const double k3 = knots[static_cast<std::size_t>(i + d + 1)];
      double v = 0.0;
      if (k1 > k0) v += (u - k0) / (k1 - k0) * basis[static_cast<std::size_t>(i)];
      if (k3 > k2) v += (k3 - u) / (k3 - k2) * basis[static_cast<std::size_t>(i + 1)];
      basis[static_cast<std::size_t>(i)] = v;
    }
  }
  basis.resize(static_cast<std::size_t>(n_ctrl));
  return basis;
}

inline double smootherstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * x * (x * (6.0 * x - 15.0) + 10.0);
}

// Precision of a random walk over n control points plus an absolute bound.
inline Eigen::MatrixXd chain_precision(int n, double step_sd, double abs_sd) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(n, n) / (abs_sd * abs_sd);
  const double w = 1.0 / (step_sd * step_sd);
  for (int i = 0; i + 1 < n; ++i) {
    p(i, i) += w;
    p(i + 1, i + 1) += w;
    p(i, i + 1) -= w;
    p(i + 1, i) -= w;
  }
  return p;
}

struct BasisBuilder {
  int frames;
  int rows;
  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<std::pair<Eigen::MatrixXd, Eigen::VectorXd>> blocks;  // precision, mean
  int cols = 0;

  // Adds `profiles.size()` columns acting on one pose dimension.
  void add_dimension(int dim, const std::vector<std::vector<double>>& profiles, Eigen::MatrixXd precision,
                     Eigen::VectorXd mean) {
    for (const auto& prof : profiles) {
      for (int s = 0; s < frames; ++s) {
        const double v = prof[static_cast<std::size_t>(s)];
        if (v != 0.0) triplets.emplace_back(s * kPoseDim + dim, cols, v);
      }
      ++cols;
    }
    blocks.emplace_back(std::move(precision), std::move(mean));
  }

  // One column spanning several dimensions.
  void add_pattern(const std::vector<std::pair<int, std::vector<double>>>& entries, double sd) {
    for (const auto& [dim, prof] : entries) {
      for (int s = 0; s < frames; ++s) {
        const double v = prof[static_cast<std::size_t>(s)];
        if (v != 0.0) triplets.emplace_back(s * kPoseDim + dim, cols, v);
      }
    }
    ++cols;
    blocks.emplace_back(Eigen::MatrixXd::Constant(1, 1, 1.0 / (sd * sd)), Eigen::VectorXd::Zero(1));
  }
};

}  // namespace prior_detail

/// Per-action motion basis in the canonical frame (pelvis at the origin in
/// the first frame, body facing +y):
///   - translation: cubic B-splines in time per axis,
///   - global orientation: coarser cubic B-splines per axis,
///   - each joint angle: a start value and a settled end value joined by a
///     smooth ramp,
///   - locomotion only: two quadrature leg-swing patterns.
/// The prior mean is a standing pose at rest for locomotion and a ramp from
/// standing into a sitting or lying template for the other actions.
inline MotionBasis build_action_basis(Action action, const Skeleton& skel, const BasisOptions& opt = {}) {
  using prior_detail::chain_precision;
  const int S = opt.frames;
  if (S < 4) throw PriorError("basis needs at least 4 frames");
  const PriorScales sc = opt.scales.value_or(default_prior_scales(action));
  prior_detail::BasisBuilder b{S, S * kPoseDim, {}, {}, 0};

  auto spline_profiles = [&](int n) {
    std::vector<std::vector<double>> prof(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(S)));
    for (int s = 0; s < S; ++s) {
      const auto row = prior_detail::bspline_row(n, static_cast<double>(s) / (S - 1));
      for (int i = 0; i < n; ++i) prof[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)] = row[static_cast<std::size_t>(i)];
    }
    return prof;
  };

  const Vec3 rest_translation = -skel.pelvis_offset();
  const int nt = opt.translation_controls;
  const auto tprof = spline_profiles(nt);
  for (int a = 0; a < 3; ++a) {
    const bool vertical = a == 2;
    Eigen::MatrixXd prec = vertical ? chain_precision(nt, sc.translation_z_step, sc.translation_z_abs)
                                    : chain_precision(nt, sc.translation_xy_step, sc.translation_xy_abs);
    Eigen::VectorXd mean = Eigen::VectorXd::Constant(nt, rest_translation[a]);
    b.add_dimension(kTranslationOffset + a, tprof, std::move(prec), std::move(mean));
  }

  const int no = opt.orientation_controls;
  const auto oprof = spline_profiles(no);
  for (int a = 0; a < 3; ++a) {
    const bool yaw = a == 2;
    Eigen::MatrixXd prec = yaw ? chain_precision(no, sc.yaw_step, sc.yaw_abs) : chain_precision(no, sc.tilt_step, sc.tilt_abs);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(no);
    if (action == Action::kLie && a == 0) {
      for (int i = 0; i < no; ++i) {
        mean[i] = -0.5 * std::numbers::pi * prior_detail::smootherstep(static_cast<double>(i) / (no - 1) / opt.settle_fraction);
      }
    }
    b.add_dimension(a, oprof, std::move(prec), std::move(mean));
  }

  // Settled end pose of the joint ramps.
  PoseVector end_pose = PoseVector::Zero();
  if (action == Action::kSit || action == Action::kLie) {
    const double hip = action == Action::kSit ? 0.5 * std::numbers::pi : 0.25 * std::numbers::pi;
    const double knee = action == Action::kSit ? -0.5 * std::numbers::pi : -0.25 * std::numbers::pi;
    end_pose[3 * joint::kLeftHip] = hip;
    end_pose[3 * joint::kRightHip] = hip;
    end_pose[3 * joint::kLeftKnee] = knee;
    end_pose[3 * joint::kRightKnee] = knee;
  }
  std::vector<double> ramp(static_cast<std::size_t>(S));
  std::vector<double> hold(static_cast<std::size_t>(S));
  const double settle = opt.settle_fraction * (S - 1);
  for (int s = 0; s < S; ++s) {
    ramp[static_cast<std::size_t>(s)] = prior_detail::smootherstep(s / settle);
    hold[static_cast<std::size_t>(s)] = 1.0 - ramp[static_cast<std::size_t>(s)];
  }
  const double js = 1.0 / (sc.joint_start * sc.joint_start);
  const double jd = 1.0 / (sc.joint_delta * sc.joint_delta);
  Eigen::Matrix2d joint_prec;
  joint_prec << js + jd, -jd, -jd, jd;
  for (int dim = 3; dim < kTranslationOffset; ++dim) {
    Eigen::VectorXd mean(2);
    mean << 0.0, end_pose[dim];
    b.add_dimension(dim, {hold, ramp}, joint_prec, std::move(mean));
  }

  if (action == Action::kLocomotion) {
    const double period = opt.gait_period_seconds * opt.fps;
    for (int q = 0; q < 2; ++q) {
      std::vector<double> hip_l(static_cast<std::size_t>(S)), hip_r(static_cast<std::size_t>(S));
      std::vector<double> knee_l(static_cast<std::size_t>(S)), knee_r(static_cast<std::size_t>(S));
      for (int s = 0; s < S; ++s) {
        const double ph = 2.0 * std::numbers::pi * s / period + 0.5 * std::numbers::pi * q;
        const auto su = static_cast<std::size_t>(s);
        hip_l[su] = 0.35 * std::sin(ph);
        hip_r[su] = -0.35 * std::sin(ph);
        knee_l[su] = -0.2 * std::cos(ph);
        knee_r[su] = 0.2 * std::cos(ph);
      }
      b.add_pattern({{3 * joint::kLeftHip, hip_l},
                     {3 * joint::kRightHip, hip_r},
                     {3 * joint::kLeftKnee, knee_l},
                     {3 * joint::kRightKnee, knee_r}},
                    sc.gait);
    }
  }

  MotionBasis basis;
  basis.action = action;
  basis.frames = S;
  basis.matrix.resize(b.rows, b.cols);
  basis.matrix.setFromTriplets(b.triplets.begin(), b.triplets.end());
  basis.matrix.makeCompressed();
  basis.prior_mean.resize(b.cols);
  basis.prior_precision = Eigen::MatrixXd::Zero(b.cols, b.cols);
  int at = 0;
  for (const auto& [prec, mean] : b.blocks) {
    const auto n = prec.rows();
    basis.prior_precision.block(at, at, n, n) = prec;
    basis.prior_mean.segment(at, n) = mean;
    at += static_cast<int>(n);
  }
  return basis;
}

/// Distance from x to the column span of the basis.
inline double span_residual(const MotionBasis& basis, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd gram = Eigen::MatrixXd(basis.matrix.transpose() * basis.matrix);
  const Eigen::VectorXd coeffs = gram.ldlt().solve(basis.matrix.transpose() * x);
  return (x - basis.matrix * coeffs).norm();
}

// ---------------------------------------------------------------------------
// DIPB1 container: "DIPB1", u8 action, u32 frames, u32 columns, then
// frames * 69 * columns little-endian float32, column index fastest.

inline std::string serialize_basis(const MotionBasis& basis) {
  std::string out = "DIPB1";
  out.push_back(static_cast<char>(static_cast<std::uint8_t>(basis.action)));
  auto put_u32 = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  };
  put_u32(static_cast<std::uint32_t>(basis.frames));
  put_u32(static_cast<std::uint32_t>(basis.dim()));
  const Eigen::MatrixXd dense(basis.matrix);
  for (Eigen::Index r = 0; r < dense.rows(); ++r) {
    for (Eigen::Index c = 0; c < dense.cols(); ++c) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(dense(r, c)));
      put_u32(bits);
    }
  }
  return out;
}

/// Loaded bases carry a weak isotropic prior centred on zero.
inline MotionBasis parse_basis(const std::string& bytes) {
  constexpr std::size_t header = 5 + 1 + 4 + 4;
  if (bytes.size() < header || bytes.compare(0, 5, "DIPB1") != 0) throw PriorError("basis: bad magic");
  auto get_u32 = [&bytes](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + static_cast<std::size_t>(i)])) << (8 * i);
    return v;
  };
  const auto tag = static_cast<unsigned char>(bytes[5]);
  if (tag >= kActionCount) throw PriorError("basis: unknown action tag");
  MotionBasis basis;
  basis.action = static_cast<Action>(tag);
  basis.frames = static_cast<int>(get_u32(6));
  const auto d = static_cast<int>(get_u32(10));
  const std::size_t rows = static_cast<std::size_t>(basis.frames) * kPoseDim;
  const std::size_t expected = header + 4 * rows * static_cast<std::size_t>(d);
  if (bytes.size() != expected) {
    throw PriorError("basis: expected " + std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
  }
  std::vector<Eigen::Triplet<double>> trip;
  std::size_t at = header;
  for (std::size_t r = 0; r < rows; ++r) {
    for (int c = 0; c < d; ++c, at += 4) {
      const float v = std::bit_cast<float>(get_u32(at));
      if (v != 0.0f) trip.emplace_back(static_cast<int>(r), c, static_cast<double>(v));
    }
  }
  basis.matrix.resize(static_cast<Eigen::Index>(rows), d);
  basis.matrix.setFromTriplets(trip.begin(), trip.end());
  basis.prior_mean = Eigen::VectorXd::Zero(d);
  basis.prior_precision = Eigen::MatrixXd::Identity(d, d) * 1e-6;
  return basis;
}

inline void save_basis(const MotionBasis& basis, const std::string& path) {
  const auto bytes = serialize_basis(basis);
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw PriorError("cannot write basis '" + path + "'");
}

inline MotionBasis load_basis(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PriorError("cannot open basis '" + path + "'");
  return parse_basis(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

struct DenoiserOptions {
  double hint_weight = 10.0;
  /// Scale on the coefficient prior; 0 gives the plain orthogonal projector.
  double prior_weight = 1.0;
};

/// Weighted least squares in the basis coefficients:
///   |B c - x_t / sqrt(abar_t)|^2 + rho_t (c - m)' L (c - m) + w_h * hint residuals,
/// with rho_t = prior_weight * (1 - abar_t) / abar_t, i.e. the Gaussian
/// posterior mean of the clean motion. Pelvis hints are linear in the pose;
/// other joint hints are added with one Gauss-Newton step through forward
/// kinematics.
class ProjectionDenoiser : public Denoiser {
 public:
  ProjectionDenoiser(NoiseSchedule schedule, std::vector<MotionBasis> bases, Skeleton skel,
                     DenoiserOptions options = {})
      : schedule_(std::move(schedule)), skel_(std::move(skel)), options_(options) {
    for (auto& basis : bases) {
      const auto idx = static_cast<std::size_t>(basis.action);
      Entry e;
      e.rows = SparseRowMatrix(basis.matrix);
      e.gram = Eigen::MatrixXd(basis.matrix.transpose() * basis.matrix);
      e.prior_rhs = basis.prior_precision * basis.prior_mean;
      e.basis = std::move(basis);
      entries_[idx] = std::move(e);
    }
  }

  const NoiseSchedule& schedule() const { return schedule_; }
  const DenoiserOptions& options() const { return options_; }
  const Skeleton& skeleton() const { return skel_; }

  const MotionBasis& basis(Action a) const { return entry(a).basis; }

  Eigen::VectorXd predict_x0(const Eigen::VectorXd& x_t, int t, const Condition& c) const override {
    const Entry& e = entry(c.action);
    const Solved sol = solve(e, x_t, t, c);
    return e.basis.matrix * sol.coeffs;
  }

  Linearization linearize(const Eigen::VectorXd& x_t, int t, const Condition& c) const override {
    const Entry& e = entry(c.action);
    auto sol = std::make_shared<Solved>(solve(e, x_t, t, c));
    const double scale = 1.0 / std::sqrt(alpha_bar(t));
    Linearization out;
    out.x0 = e.basis.matrix * sol->coeffs;
    out.vjp = [&e, sol, scale](const Eigen::VectorXd& cot) -> Eigen::VectorXd {
      return (e.basis.matrix * sol->factor.solve(e.basis.matrix.transpose() * cot)) * scale;
    };
    return out;
  }

  Eigen::VectorXd vjp(const Eigen::VectorXd& x_t, int t, const Condition& c,
                      const Eigen::VectorXd& cotangent) const override {
    const Entry& e = entry(c.action);
    const Solved sol = solve(e, x_t, t, c);
    const Eigen::VectorXd inner = sol.factor.solve(e.basis.matrix.transpose() * cotangent);
    return (e.basis.matrix * inner) / std::sqrt(alpha_bar(t));
  }

 private:
  struct Entry {
    MotionBasis basis;
    SparseRowMatrix rows;
    Eigen::MatrixXd gram;
    Eigen::VectorXd prior_rhs;
    bool present = false;
  };

  struct Solved {
    Eigen::VectorXd coeffs;
    Eigen::LLT<Eigen::MatrixXd> factor;
  };

  const Entry& entry(Action a) const {
    const auto& e = entries_[static_cast<std::size_t>(a)];
    if (e.basis.matrix.cols() == 0) {
      throw PriorError("no motion basis for action '" + std::string(to_string(a)) + "'");
    }
    return e;
  }

  double alpha_bar(int t) const {
    if (t < 0 || t > schedule_.T) throw DiffusionError("denoiser step out of range");
    return schedule_.alpha_bar[static_cast<std::size_t>(t)];
  }

  // Dense copy of the basis rows for one frame (69 x D).
  Eigen::MatrixXd frame_rows(const Entry& e, int frame) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(kPoseDim, e.basis.dim());
    for (int d = 0; d < kPoseDim; ++d) {
      for (SparseRowMatrix::InnerIterator it(e.rows, frame * kPoseDim + d); it; ++it) out(d, it.col()) = it.value();
    }
    return out;
  }

  Eigen::LLT<Eigen::MatrixXd> factorize(Eigen::MatrixXd m) const {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
      warn("projection denoiser: rank-deficient normal equations, adding ridge 1e-8");
      m.diagonal().array() += 1e-8;
      llt.compute(m);
    }
    return llt;
  }

  Solved solve(const Entry& e, const Eigen::VectorXd& x_t, int t, const Condition& c) const {
    const int S = e.basis.frames;
    if (x_t.size() != static_cast<Eigen::Index>(S) * kPoseDim) throw PriorError("denoiser: motion length mismatch");
    const double ab = alpha_bar(t);
    const double rho = options_.prior_weight * (1.0 - ab) / ab;
    const double w = options_.hint_weight;

    Eigen::MatrixXd m = e.gram;
    Eigen::VectorXd rhs = e.basis.matrix.transpose() * (x_t / std::sqrt(ab));
    if (rho > 0.0) {
      m += rho * e.basis.prior_precision;
      rhs += rho * e.prior_rhs;
    }

    const KeyframeHints& hints = c.hints;
    const bool has_hints = hints.frames() > 0 && !hints.empty();
    if (has_hints && hints.frames() != S) throw PriorError("denoiser: hint frame count mismatch");
    bool nonroot = false;
    if (has_hints) {
      const Vec3 o = skel_.pelvis_offset();
      for (int s = 0; s < S; ++s) {
        for (int j = 0; j < hints.joints(); ++j) {
          if (!hints.valid(s, j)) continue;
          if (j != joint::kPelvis) {
            nonroot = true;
            continue;
          }
          const Vec3 target = hints.value(s, j) - o;
          for (int a = 0; a < 3; ++a) {
            const Eigen::Index r = s * kPoseDim + kTranslationOffset + a;
            Eigen::SparseVector<double> row = e.rows.row(r).transpose();
            for (Eigen::SparseVector<double>::InnerIterator i1(row); i1; ++i1) {
              rhs[i1.index()] += w * i1.value() * target[a];
              for (Eigen::SparseVector<double>::InnerIterator i2(row); i2; ++i2) {
                m(i1.index(), i2.index()) += w * i1.value() * i2.value();
              }
            }
          }
        }
      }
    }

    Solved sol{Eigen::VectorXd(), factorize(m)};
    sol.coeffs = sol.factor.solve(rhs);
    if (!nonroot) return sol;

    // One Gauss-Newton step for the remaining joint hints, linearized at the
    // pelvis-only solution.
    const Eigen::VectorXd x_bar = e.basis.matrix * sol.coeffs;
    for (int s = 0; s < S; ++s) {
      bool any = false;
      for (int j = 1; j < hints.joints(); ++j) any = any || hints.valid(s, j);
      if (!any) continue;
      const Pose pose(x_bar.segment<kPoseDim>(static_cast<Eigen::Index>(s) * kPoseDim));
      const FrameKinematics fk = frame_kinematics(pose, skel_);
      const Eigen::MatrixXd rows = frame_rows(e, s);
      for (int j = 1; j < hints.joints(); ++j) {
        if (!hints.valid(s, j)) continue;
        const Eigen::MatrixXd a = joint_jacobian(pose, skel_, fk, j) * rows;  // 3 x D
        const Vec3 target = hints.value(s, j) - fk.joints[static_cast<std::size_t>(j)] + a * sol.coeffs;
        m.noalias() += w * a.transpose() * a;
        rhs.noalias() += w * a.transpose() * target;
      }
    }
    sol.factor = factorize(m);
    sol.coeffs = sol.factor.solve(rhs);
    return sol;
  }

  NoiseSchedule schedule_;
  Skeleton skel_;
  DenoiserOptions options_;
  std::array<Entry, kActionCount> entries_{};
};

/// Bases for all three actions with shared options.
inline std::vector<MotionBasis> build_all_bases(const Skeleton& skel, const BasisOptions& opt = {}) {
  return {build_action_basis(Action::kLocomotion, skel, opt), build_action_basis(Action::kSit, skel, opt),
          build_action_basis(Action::kLie, skel, opt)};
}

}  // namespace dip

#pragma once

// Rotation helpers: axis-angle <-> matrix conversion, fractional matrix powers
// and the power-space blend used for motion transitions.

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dip {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Axis-angle vector: direction is the axis, norm the angle in radians.
using AxisAngle = Vec3;
/// 3x3 rotation matrix.
using RotMat = Mat3;

class RotationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace rot_detail {

inline constexpr double kSmallAngle = 1e-8;
inline constexpr double kNearPi = 1e-6;

inline Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

inline Vec3 vee(const Mat3& m) {
  return {m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)};
}

// Flip so that the largest-magnitude component is positive.
inline Vec3 canonical_axis_sign(Vec3 axis) {
  Eigen::Index idx = 0;
  axis.cwiseAbs().maxCoeff(&idx);
  return axis[idx] < 0.0 ? Vec3(-axis) : axis;
}

// Sum of the two Rodrigues coefficients' Taylor branches:
//   a = sin(x)/x, b = (1 - cos(x))/x^2.
inline void rodrigues_coeffs(double angle, double& a, double& b) {
  if (angle < 1e-4) {
    const double a2 = angle * angle;
    a = 1.0 - a2 / 6.0 + a2 * a2 / 120.0;
    b = 0.5 - a2 / 24.0 + a2 * a2 / 720.0;
  } else {
    a = std::sin(angle) / angle;
    b = (1.0 - std::cos(angle)) / (angle * angle);
  }
}

}  // namespace rot_detail

inline Mat3 skew(const Vec3& v) { return rot_detail::hat(v); }

/// Rodrigues' formula. Angles below 1e-8 use the second-order expansion.
inline RotMat aa_to_mat(const AxisAngle& a) {
  const double angle = a.norm();
  const Mat3 k = rot_detail::hat(a);
  if (angle < rot_detail::kSmallAngle) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double s = std::sin(angle) / angle;
  const double c = (1.0 - std::cos(angle)) / (angle * angle);
  return Mat3::Identity() + s * k + c * k * k;
}

/// Deviation of a matrix from SO(3): Frobenius norm of M^T M - I.
inline double orthonormality_error(const Mat3& m) {
  return (m.transpose() * m - Mat3::Identity()).norm();
}

inline bool is_rotation(const Mat3& m, double tol = 1e-6) {
  return orthonormality_error(m) <= tol && std::abs(m.determinant() - 1.0) <= tol;
}

/// Canonical form of an axis-angle vector: angle wrapped into [0, pi], with
/// the axis sign fixed by the largest component when the angle is exactly pi.
inline AxisAngle canonical_aa(const AxisAngle& a) {
  constexpr double pi = std::numbers::pi;
  double angle = a.norm();
  if (angle < rot_detail::kSmallAngle) return a;
  Vec3 axis = a / angle;
  angle = std::fmod(angle, 2.0 * pi);
  if (angle > pi) {
    angle = 2.0 * pi - angle;
    axis = -axis;
  }
  if (std::abs(angle - pi) <= 1e-12) axis = rot_detail::canonical_axis_sign(axis);
  return axis * angle;
}

/// Inverse of aa_to_mat. Rejects input further than 1e-4 from SO(3).
inline AxisAngle mat_to_aa(const RotMat& m) {
  if (!m.allFinite() || orthonormality_error(m) > 1e-4 ||
      std::abs(m.determinant() - 1.0) > 1e-4) {
    throw RotationError("mat_to_aa: matrix is not a rotation (orthonormality error " +
                        std::to_string(orthonormality_error(m)) + ")");
  }
  const double cos_angle = std::clamp((m.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3 w = rot_detail::vee(m);  // 2 sin(angle) * axis
  const double sin_angle = 0.5 * w.norm();
  const double angle = std::atan2(sin_angle, cos_angle);

  if (angle < rot_detail::kSmallAngle) {
    return 0.5 * w;
  }
  if (std::numbers::pi - angle < rot_detail::kNearPi) {
    // Axis from the symmetric part: (M + M^T)/2 = cos I + (1 - cos) a a^T.
    const Mat3 sym = 0.5 * (m + m.transpose());
    const Mat3 aat = (sym - cos_angle * Mat3::Identity()) / (1.0 - cos_angle);
    Eigen::Index col = 0;
    aat.diagonal().maxCoeff(&col);
    Vec3 axis = aat.col(col).normalized();
    if (w.norm() > 1e-10) {
      if (axis.dot(w) < 0.0) axis = -axis;
    } else {
      axis = rot_detail::canonical_axis_sign(axis);
    }
    return axis * angle;
  }
  return w * (angle / (2.0 * sin_angle));
}

/// Fractional power M^gamma for gamma in [0, 1]: same axis, angle scaled.
inline RotMat mat_power(const RotMat& m, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw RotationError("mat_power: gamma must lie in [0, 1]");
  }
  if (gamma == 0.0) return Mat3::Identity();
  if (gamma == 1.0) return m;
  return aa_to_mat(gamma * mat_to_aa(m));
}

/// Geodesic blend (M_new M_old^-1)^gamma M_old. Endpoints are returned verbatim.
inline RotMat blend_rot(const RotMat& m_old, const RotMat& m_new, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw RotationError("blend_rot: gamma must lie in [0, 1]");
  }
  if (gamma == 0.0) return m_old;
  if (gamma == 1.0) return m_new;
  const RotMat relative = m_new * m_old.transpose();
  return mat_power(relative, gamma) * m_old;
}

/// Geodesic angle between two rotations.
inline double rotation_angle_between(const RotMat& a, const RotMat& b) {
  const RotMat rel = b * a.transpose();
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double s = 0.5 * rot_detail::vee(rel).norm();
  return std::atan2(s, c);
}

/// Partial derivatives dR/da_i of Rodrigues' map at a, one matrix per axis.
inline std::array<Mat3, 3> aa_to_mat_derivatives(const AxisAngle& a) {
  const double angle = a.norm();
  double ca = 0.0;
  double cb = 0.0;
  rot_detail::rodrigues_coeffs(angle, ca, cb);
  // da/dangle / angle and db/dangle / angle.
  double da = 0.0;
  double db = 0.0;
  if (angle < 1e-4) {
    const double a2 = angle * angle;
    da = -1.0 / 3.0 + a2 / 30.0;
    db = -1.0 / 12.0 + a2 / 180.0;
  } else {
    const double s = std::sin(angle);
    const double c = std::cos(angle);
    const double a2 = angle * angle;
    da = (angle * c - s) / (a2 * angle);
    db = (angle * s - 2.0 * (1.0 - c)) / (a2 * a2);
  }
  const Mat3 k = rot_detail::hat(a);
  const Mat3 k2 = k * k;
  std::array<Mat3, 3> out;
  for (int i = 0; i < 3; ++i) {
    const Mat3 e = rot_detail::hat(Vec3::Unit(i));
    out[i] = ca * e + cb * (e * k + k * e) + (da * a[i]) * k + (db * a[i]) * k2;
  }
  return out;
}

/// Gradient of a scalar loss with respect to the axis-angle parameters, given
/// the loss gradient with respect to the rotation matrix entries.
inline Vec3 aa_gradient_from_matrix_gradient(const AxisAngle& a, const Mat3& dl_dr) {
  const auto d = aa_to_mat_derivatives(a);
  return {dl_dr.cwiseProduct(d[0]).sum(), dl_dr.cwiseProduct(d[1]).sum(),
          dl_dr.cwiseProduct(d[2]).sum()};
}

inline RotMat rot_z(double angle) { return aa_to_mat(Vec3(0.0, 0.0, angle)); }

}  // namespace dip

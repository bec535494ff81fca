#ifndef SUNVO_SE3_HPP
#define SUNVO_SE3_HPP

#include <Eigen/Core>
#include <optional>

#include "sunvo/errors.hpp"

namespace sunvo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Tangent-space (twist) ordering is rotation-first throughout the library:
// xi = [phi; rho] with phi in rad and rho in m. Perturbations are
// left-multiplicative: T_perturbed = exp(xi) * T.

/// Skew-symmetric matrix such that skew(a) * b = a x b.
Mat3 skew(const Vec3& v);

/// SO(3) exponential map (Rodrigues). Switches to a second-order Taylor
/// expansion of the sinc-type coefficients below angle 1e-6 rad.
Mat3 so3_exp(const Vec3& phi);

/// SO(3) logarithm on the principal branch.
/// Throws AngleNearPi when the rotation angle is >= pi - 1e-6.
Vec3 so3_log(const Mat3& rotation);

/// Left Jacobian of SO(3) and its inverse.
Mat3 so3_left_jacobian(const Vec3& phi);
Mat3 so3_left_jacobian_inverse(const Vec3& phi);

/// Rigid transform with an optional 6x6 covariance in its local tangent
/// space (left-perturbation convention, rotation-first ordering).
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static Pose identity() { return Pose(); }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  const std::optional<Mat6>& covariance() const { return covariance_; }
  void set_covariance(const Mat6& cov) { covariance_ = cov; }
  void clear_covariance() { covariance_.reset(); }

  /// 3x4 matrix [R | t].
  Eigen::Matrix<double, 3, 4> matrix3x4() const;

  /// Re-projects the rotation onto SO(3) (modified Gram-Schmidt). Call after
  /// long composition chains to keep R orthonormal.
  void reorthonormalize();

 private:
  Mat3 rotation_;
  Vec3 translation_;
  std::optional<Mat6> covariance_;
};

/// SE(3) exponential map: exp([phi; rho]) with R = exp(phi^),
/// t = J_l(phi) * rho. Total function.
Pose se3_exp(const Vec6& xi);

/// SE(3) logarithm on the principal branch (angle < pi - 1e-6, else
/// AngleNearPi).
Vec6 se3_log(const Pose& pose);

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& pose);
Vec3 transform_point(const Pose& pose, const Vec3& p);

/// 6x6 adjoint of T: Ad(T) = [[R, 0], [t^ R, R]] in rotation-first ordering.
Mat6 adjoint(const Pose& pose);

/// Transports a tangent-space covariance by the adjoint:
/// Ad(T) * Sigma * Ad(T)^T.
Mat6 transform_covariance(const Pose& pose, const Mat6& sigma);

/// Inverse of the SE(3) left Jacobian, used to linearize pose-difference
/// residuals log(check_T^-1 * exp(xi) * hat_T).
Mat6 se3_left_jacobian_inverse(const Vec6& xi);

/// Validity checks used by tests and input validation.
bool is_rotation_matrix(const Mat3& r, double tol = 1e-9);

}  // namespace sunvo

#endif  // SUNVO_SE3_HPP

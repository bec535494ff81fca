#include "sunvo/se3.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace sunvo {

namespace {

constexpr double kSmallAngle = 1e-6;
constexpr double kPiBranchMargin = 1e-6;

// Coefficients of the Rodrigues-type series, with second-order Taylor
// fallbacks below kSmallAngle.
struct SinCosCoeffs {
  double a;  // sin(t)/t
  double b;  // (1-cos(t))/t^2
  double c;  // (t-sin(t))/t^3
};

SinCosCoeffs sincos_coeffs(double theta) {
  SinCosCoeffs k;
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    k.a = 1.0 - t2 / 6.0;
    k.b = 0.5 - t2 / 24.0;
    k.c = 1.0 / 6.0 - t2 / 120.0;
  } else {
    const double t2 = theta * theta;
    k.a = std::sin(theta) / theta;
    k.b = (1.0 - std::cos(theta)) / t2;
    k.c = (theta - std::sin(theta)) / (t2 * theta);
  }
  return k;
}

Vec3 vee(const Mat3& m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 m;
  // clang-format off
  m <<     0, -v.z(),  v.y(),
       v.z(),      0, -v.x(),
      -v.y(),  v.x(),      0;
  // clang-format on
  return m;
}

Mat3 so3_exp(const Vec3& phi) {
  const double theta = phi.norm();
  const SinCosCoeffs k = sincos_coeffs(theta);
  const Mat3 p = skew(phi);
  return Mat3::Identity() + k.a * p + k.b * p * p;
}

Vec3 so3_log(const Mat3& rotation) {
  const double trace = rotation.trace();
  const double cos_theta = std::clamp(0.5 * (trace - 1.0), -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  if (theta >= std::numbers::pi - kPiBranchMargin) {
    throw AngleNearPi("so3_log: rotation angle within 1e-6 of pi");
  }
  const Vec3 half_vee = 0.5 * vee(rotation - rotation.transpose());
  if (theta < kSmallAngle) {
    // half_vee = sin(theta) * axis; theta/sin(theta) ~ 1 + theta^2/6.
    return (1.0 + theta * theta / 6.0) * half_vee;
  }
  return (theta / std::sin(theta)) * half_vee;
}

Mat3 so3_left_jacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const SinCosCoeffs k = sincos_coeffs(theta);
  const Mat3 p = skew(phi);
  return Mat3::Identity() + k.b * p + k.c * p * p;
}

Mat3 so3_left_jacobian_inverse(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 p = skew(phi);
  double coeff;
  if (theta < kSmallAngle) {
    coeff = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    coeff = 1.0 / (theta * theta) -
            (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  return Mat3::Identity() - 0.5 * p + coeff * p * p;
}

Eigen::Matrix<double, 3, 4> Pose::matrix3x4() const {
  Eigen::Matrix<double, 3, 4> m;
  m.leftCols<3>() = rotation_;
  m.col(3) = translation_;
  return m;
}

void Pose::reorthonormalize() {
  Vec3 c0 = rotation_.col(0).normalized();
  Vec3 c1 = (rotation_.col(1) - c0.dot(rotation_.col(1)) * c0).normalized();
  rotation_.col(0) = c0;
  rotation_.col(1) = c1;
  rotation_.col(2) = c0.cross(c1);
}

Pose se3_exp(const Vec6& xi) {
  const Vec3 phi = xi.head<3>();
  const Vec3 rho = xi.tail<3>();
  return Pose(so3_exp(phi), so3_left_jacobian(phi) * rho);
}

Vec6 se3_log(const Pose& pose) {
  const Vec3 phi = so3_log(pose.rotation());
  Vec6 xi;
  xi.head<3>() = phi;
  xi.tail<3>() = so3_left_jacobian_inverse(phi) * pose.translation();
  return xi;
}

Pose compose(const Pose& a, const Pose& b) {
  return Pose(a.rotation() * b.rotation(),
              a.rotation() * b.translation() + a.translation());
}

Pose inverse(const Pose& pose) {
  const Mat3 rt = pose.rotation().transpose();
  return Pose(rt, -rt * pose.translation());
}

Vec3 transform_point(const Pose& pose, const Vec3& p) {
  return pose.rotation() * p + pose.translation();
}

Mat6 adjoint(const Pose& pose) {
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = pose.rotation();
  ad.bottomRightCorner<3, 3>() = pose.rotation();
  ad.bottomLeftCorner<3, 3>() = skew(pose.translation()) * pose.rotation();
  return ad;
}

Mat6 transform_covariance(const Pose& pose, const Mat6& sigma) {
  const Mat6 ad = adjoint(pose);
  Mat6 out = ad * sigma * ad.transpose();
  // Symmetrize against round-off.
  return 0.5 * (out + out.transpose());
}

Mat6 se3_left_jacobian_inverse(const Vec6& xi) {
  const Vec3 phi = xi.head<3>();
  const Vec3 rho = xi.tail<3>();
  const double theta = phi.norm();
  const Mat3 pp = skew(phi);
  const Mat3 pr = skew(rho);

  // Coupling block Q of the SE(3) left Jacobian (Barfoot's formulation),
  // with series fallbacks below kSmallAngle.
  double c1, c2, c3;
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    c1 = 1.0 / 6.0 - t2 / 120.0;
    c2 = -1.0 / 24.0 + t2 / 720.0;
    c3 = -1.0 / 120.0 + t2 / 5040.0;
  } else {
    const double t2 = theta * theta;
    const double t3 = t2 * theta;
    const double t4 = t3 * theta;
    const double t5 = t4 * theta;
    const double st = std::sin(theta);
    const double ct = std::cos(theta);
    c1 = (theta - st) / t3;
    c2 = (1.0 - 0.5 * t2 - ct) / t4;
    c3 = (theta - st - t3 / 6.0) / t5;
  }

  const Mat3 q = 0.5 * pr + c1 * (pp * pr + pr * pp + pp * pr * pp) -
                 c2 * (pp * pp * pr + pr * pp * pp - 3.0 * pp * pr * pp) -
                 0.5 * (c2 - 3.0 * c3) * (pp * pr * pp * pp + pp * pp * pr * pp);

  const Mat3 jinv = so3_left_jacobian_inverse(phi);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = jinv;
  out.bottomRightCorner<3, 3>() = jinv;
  out.bottomLeftCorner<3, 3>() = -jinv * q * jinv;
  return out;
}

bool is_rotation_matrix(const Mat3& r, double tol) {
  const Mat3 should_be_identity = r.transpose() * r - Mat3::Identity();
  if (should_be_identity.cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

}  // namespace sunvo

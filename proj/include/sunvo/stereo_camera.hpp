#ifndef SUNVO_STEREO_CAMERA_HPP
#define SUNVO_STEREO_CAMERA_HPP

#include <cstdint>
#include <optional>

#include "sunvo/se3.hpp"

namespace sunvo {

// Camera frame convention: x right, y down, z forward (optical axis).

/// Rectified stereo rig: pinhole pair with focal lengths (px), principal
/// point (px), and baseline (m).
struct StereoIntrinsics {
  double f_u = 0.0;
  double f_v = 0.0;
  double c_u = 0.0;
  double c_v = 0.0;
  double b = 0.0;

  /// Minimum depth in front of the camera for a valid projection (m).
  double z_min = 0.1;
  /// Minimum disparity for a valid triangulation (px).
  double d_min = 0.5;
};

/// One (u, v, d) stereo measurement: left-image pixel coordinates and
/// disparity, with its 3x3 noise covariance.
struct StereoObservation {
  std::int64_t frame_id = 0;
  std::int64_t track_id = 0;
  double u = 0.0;
  double v = 0.0;
  double d = 0.0;
  Mat3 noise = Mat3::Identity();

  Vec3 uvd() const { return Vec3(u, v, d); }
};

/// A 3D point in the base frame F_0.
struct Landmark {
  std::int64_t id = 0;
  Vec3 position = Vec3::Zero();
};

/// Projects a camera-frame point to (u, v, d).
/// Throws PointBehindCamera when p_cam.z() <= z_min.
Vec3 project(const StereoIntrinsics& intrinsics, const Vec3& p_cam);

/// Non-throwing projection for hot paths; nullopt when the point is culled.
std::optional<Vec3> try_project(const StereoIntrinsics& intrinsics,
                                const Vec3& p_cam);

/// Closed-form inverse of project. Throws DisparityTooSmall when
/// uvd.z() <= d_min.
Vec3 triangulate(const StereoIntrinsics& intrinsics, const Vec3& uvd);

/// 3x3 Jacobian of project with respect to the camera-frame point.
Mat3 project_point_jacobian(const StereoIntrinsics& intrinsics,
                            const Vec3& p_cam);

struct ProjectionJacobians {
  Eigen::Matrix<double, 3, 6> d_pose;  // wrt left perturbation of T_k0
  Mat3 d_landmark;                     // wrt the base-frame point
};

/// Jacobians of y = g(T_k0 * p_0) with respect to a left-multiplicative
/// twist perturbation of T_k0 and to the landmark position p_0.
/// Throws PointBehindCamera when the transformed point is culled.
ProjectionJacobians projection_jacobians(const StereoIntrinsics& intrinsics,
                                         const Pose& T_k0,
                                         const Landmark& landmark);

}  // namespace sunvo

#endif  // SUNVO_STEREO_CAMERA_HPP

#include "sunvo/stereo_camera.hpp"

#include <string>

namespace sunvo {

Vec3 project(const StereoIntrinsics& intrinsics, const Vec3& p_cam) {
  if (p_cam.z() <= intrinsics.z_min) {
    throw PointBehindCamera("project: point depth " +
                            std::to_string(p_cam.z()) + " m <= z_min " +
                            std::to_string(intrinsics.z_min) + " m");
  }
  const double inv_z = 1.0 / p_cam.z();
  return Vec3(intrinsics.f_u * p_cam.x() * inv_z + intrinsics.c_u,
              intrinsics.f_v * p_cam.y() * inv_z + intrinsics.c_v,
              intrinsics.f_u * intrinsics.b * inv_z);
}

std::optional<Vec3> try_project(const StereoIntrinsics& intrinsics,
                                const Vec3& p_cam) {
  if (p_cam.z() <= intrinsics.z_min) return std::nullopt;
  const double inv_z = 1.0 / p_cam.z();
  return Vec3(intrinsics.f_u * p_cam.x() * inv_z + intrinsics.c_u,
              intrinsics.f_v * p_cam.y() * inv_z + intrinsics.c_v,
              intrinsics.f_u * intrinsics.b * inv_z);
}

Vec3 triangulate(const StereoIntrinsics& intrinsics, const Vec3& uvd) {
  const double d = uvd.z();
  if (d <= intrinsics.d_min) {
    throw DisparityTooSmall("triangulate: disparity " + std::to_string(d) +
                            " px <= d_min " +
                            std::to_string(intrinsics.d_min) + " px");
  }
  const double z = intrinsics.f_u * intrinsics.b / d;
  return Vec3((uvd.x() - intrinsics.c_u) * z / intrinsics.f_u,
              (uvd.y() - intrinsics.c_v) * z / intrinsics.f_v, z);
}

Mat3 project_point_jacobian(const StereoIntrinsics& intrinsics,
                            const Vec3& p_cam) {
  const double inv_z = 1.0 / p_cam.z();
  const double inv_z2 = inv_z * inv_z;
  Mat3 j = Mat3::Zero();
  j(0, 0) = intrinsics.f_u * inv_z;
  j(0, 2) = -intrinsics.f_u * p_cam.x() * inv_z2;
  j(1, 1) = intrinsics.f_v * inv_z;
  j(1, 2) = -intrinsics.f_v * p_cam.y() * inv_z2;
  j(2, 2) = -intrinsics.f_u * intrinsics.b * inv_z2;
  return j;
}

ProjectionJacobians projection_jacobians(const StereoIntrinsics& intrinsics,
                                         const Pose& T_k0,
                                         const Landmark& landmark) {
  const Vec3 p_cam = transform_point(T_k0, landmark.position);
  if (p_cam.z() <= intrinsics.z_min) {
    throw PointBehindCamera(
        "projection_jacobians: transformed point behind camera");
  }
  const Mat3 j_point = project_point_jacobian(intrinsics, p_cam);

  // Left perturbation T <- exp([phi; rho]) T moves the camera-frame point by
  // d p_cam = -p_cam^ phi + rho.
  ProjectionJacobians out;
  out.d_pose.leftCols<3>() = -j_point * skew(p_cam);
  out.d_pose.rightCols<3>() = j_point;
  out.d_landmark = j_point * T_k0.rotation();
  return out;
}

}  // namespace sunvo

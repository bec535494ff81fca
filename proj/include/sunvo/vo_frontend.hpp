#ifndef SUNVO_VO_FRONTEND_HPP
#define SUNVO_VO_FRONTEND_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "sunvo/dataset.hpp"
#include "sunvo/random.hpp"
#include "sunvo/se3.hpp"
#include "sunvo/stereo_camera.hpp"

namespace sunvo {

/// Camera path for a synthetic drive. Arc: constant-rate left turn in the
/// EN plane, starting at the ENU origin heading north. Waypoints: piecewise
/// linear ENU path resampled at uniform arc length.
enum class TrajectoryKind { kArc, kWaypoints };

struct SyntheticSceneConfig {
  TrajectoryKind trajectory = TrajectoryKind::kArc;
  int frame_count = 100;
  double frame_dt_s = 0.1;

  // Arc parameters.
  double arc_radius_m = 50.0;
  double arc_sweep_rad = 1.0;

  // Waypoint path (ENU, meters); at least two distinct points.
  std::vector<Vec3> waypoints;

  // Landmarks are drawn uniformly in this ENU box.
  int landmark_count = 300;
  Vec3 landmark_min = Vec3(-80.0, -20.0, -3.0);
  Vec3 landmark_max = Vec3(50.0, 100.0, 6.0);

  StereoIntrinsics intrinsics;
  int image_width = 1242;
  int image_height = 375;

  // Injected per-observation (u, v, d) noise is N(0, diag(s^2, s^2, 2 s^2)).
  double pixel_noise_sigma = 0.0;
  // Each observation is independently replaced by a uniform in-bounds draw
  // with this probability. Must be < 0.5.
  double outlier_fraction = 0.0;
  // Outlier disparities are uniform in [d_outlier_min, d_outlier_max] px.
  double d_outlier_min = 1.0;
  double d_outlier_max = 64.0;

  // Rotation (rad) about the camera y axis composed into every relative
  // motion of the observation-generating trajectory. Nonzero values make
  // the observations consistent with a yaw-drifted path while gt_poses
  // stay on the true one, forcing heading drift in any estimator that
  // trusts the observations alone.
  double yaw_rate_bias_rad = 0.0;

  std::uint64_t seed = 0;
};

/// Returns KITTI-flavored rectified intrinsics used as the default rig.
StereoIntrinsics default_intrinsics();

/// Builds a synthetic drive: ground-truth poses T_{k,0} with the first
/// camera at the ENU origin heading north, landmarks, stereo tracks with
/// noise and outliers, and per-frame timestamps anchored at anchor.
/// Tracks observed in fewer than two frames are pruned. Deterministic:
/// the same config yields a byte-identical dataset.
/// Throws ConfigInvalid on a bad config.
SequenceDataset generate_scene(const SyntheticSceneConfig& cfg,
                               const GeodeticAnchor& anchor);

/// Least-squares rigid transform T with dst_i = T * src_i, for exactly
/// three correspondences (SVD Procrustes, det +1 enforced).
/// Throws DegenerateConfiguration when either triple spans a triangle of
/// area <= 1e-8 m^2.
Pose rigid_align_3pt(const std::array<Vec3, 3>& src,
                     const std::array<Vec3, 3>& dst);

/// Same fit over n >= 3 correspondences. Throws DegenerateConfiguration
/// when the point sets do not determine a unique rotation.
Pose rigid_align(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

struct RansacConfig {
  int iterations = 400;
  double threshold_px = 2.0;  // max (u, v, d) residual norm for an inlier
  int min_inliers = 6;
  // Tracks below this disparity in either frame are excluded from the
  // alignment. Depth noise grows as z^2, so near-zero-disparity points
  // carry meter-scale position errors that dominate an unweighted rigid
  // fit and can wreck the refit rotation through their long lever arms.
  double min_disparity_px = 4.0;
  std::uint64_t seed = 0;
};

struct FrameAlignment {
  Pose relative;                          // T_{b,a}: maps frame-a points to b
  std::vector<std::int64_t> inlier_tracks;  // sorted track ids
};

/// Estimates the relative pose between two frames from their shared tracks
/// by RANSAC over three-point rigid alignments of triangulated points,
/// then refits on the full consensus set. Hypothesis RNG is keyed by
/// iteration index, so results do not depend on evaluation order.
/// Throws InsufficientTracks (< 3 usable shared tracks) and NoConsensus
/// (no hypothesis reaches min_inliers).
FrameAlignment ransac_frame_alignment(const TrackTable& tracks,
                                      const StereoIntrinsics& intrinsics,
                                      std::int64_t frame_a,
                                      std::int64_t frame_b,
                                      const RansacConfig& cfg);

/// Chains relative poses onto a prior: out[0] = prior,
/// out[i+1] = relatives[i] * out[i]. With T_{k,0} state and T_{k,k-1}
/// relatives this produces the window's initial pose guesses.
std::vector<Pose> compound_window_guess(const Pose& prior_pose,
                                        const std::vector<Pose>& relatives);

}  // namespace sunvo

#endif  // SUNVO_VO_FRONTEND_HPP

#include "sunvo/vo_frontend.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "sunvo/errors.hpp"

namespace sunvo {

namespace {

constexpr double kMinTriangleArea = 1e-8;  // m^2

// World (ENU) to camera rotation for a camera looking along the unit
// horizontal-ish direction `forward`, with image y pointing down.
Mat3 world_to_camera_rotation(const Vec3& forward) {
  const Vec3 up(0.0, 0.0, 1.0);
  Vec3 z = forward.normalized();
  Vec3 x = z.cross(up);
  const double n = x.norm();
  if (n < 1e-9) {
    throw ConfigInvalid("trajectory heading is vertical; camera up axis is "
                        "undefined");
  }
  x /= n;
  const Vec3 y = z.cross(x);
  Mat3 cam_to_world;
  cam_to_world.col(0) = x;
  cam_to_world.col(1) = y;
  cam_to_world.col(2) = z;
  return cam_to_world.transpose();
}

Pose world_to_camera_pose(const Vec3& position, const Vec3& forward) {
  const Mat3 r = world_to_camera_rotation(forward);
  return Pose(r, -r * position);
}

std::vector<Pose> arc_trajectory(const SyntheticSceneConfig& cfg) {
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(cfg.frame_count));
  const double r = cfg.arc_radius_m;
  for (int k = 0; k < cfg.frame_count; ++k) {
    const double psi = cfg.frame_count > 1
                           ? cfg.arc_sweep_rad * k / (cfg.frame_count - 1)
                           : 0.0;
    const Vec3 position(r * (std::cos(psi) - 1.0), r * std::sin(psi), 0.0);
    const Vec3 forward(-std::sin(psi), std::cos(psi), 0.0);
    poses.push_back(world_to_camera_pose(position, forward));
  }
  return poses;
}

std::vector<Pose> waypoint_trajectory(const SyntheticSceneConfig& cfg) {
  const std::vector<Vec3>& wp = cfg.waypoints;
  if (wp.size() < 2) {
    throw ConfigInvalid("waypoint trajectory needs at least two points");
  }
  std::vector<double> cumulative{0.0};
  for (std::size_t i = 1; i < wp.size(); ++i) {
    const double len = (wp[i] - wp[i - 1]).norm();
    if (len < 1e-9) {
      throw ConfigInvalid("consecutive waypoints coincide at index " +
                          std::to_string(i));
    }
    cumulative.push_back(cumulative.back() + len);
  }
  const double total = cumulative.back();

  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(cfg.frame_count));
  for (int k = 0; k < cfg.frame_count; ++k) {
    const double s = cfg.frame_count > 1
                         ? total * k / (cfg.frame_count - 1)
                         : 0.0;
    std::size_t seg = 1;
    while (seg + 1 < cumulative.size() && cumulative[seg] < s) ++seg;
    const double t =
        (s - cumulative[seg - 1]) / (cumulative[seg] - cumulative[seg - 1]);
    const Vec3 position = wp[seg - 1] + t * (wp[seg] - wp[seg - 1]);
    const Vec3 forward = wp[seg] - wp[seg - 1];
    poses.push_back(world_to_camera_pose(position, forward));
  }
  return poses;
}

void validate(const SyntheticSceneConfig& cfg) {
  if (cfg.frame_count < 2) {
    throw ConfigInvalid("frame_count must be >= 2");
  }
  if (cfg.landmark_count < 10) {
    throw ConfigInvalid("landmark_count must be >= 10");
  }
  if (cfg.outlier_fraction < 0.0 || cfg.outlier_fraction >= 0.5) {
    throw ConfigInvalid("outlier_fraction must lie in [0, 0.5)");
  }
  if (cfg.pixel_noise_sigma < 0.0) {
    throw ConfigInvalid("pixel_noise_sigma must be >= 0");
  }
  if (cfg.frame_dt_s <= 0.0) {
    throw ConfigInvalid("frame_dt_s must be > 0");
  }
  if (cfg.intrinsics.f_u <= 0.0 || cfg.intrinsics.f_v <= 0.0 ||
      cfg.intrinsics.b <= 0.0) {
    throw ConfigInvalid("intrinsics need positive focal lengths and baseline");
  }
  if (cfg.image_width <= 0 || cfg.image_height <= 0) {
    throw ConfigInvalid("image bounds must be positive");
  }
  if (cfg.d_outlier_min <= cfg.intrinsics.d_min ||
      cfg.d_outlier_max <= cfg.d_outlier_min) {
    throw ConfigInvalid("outlier disparity range must sit above d_min");
  }
  for (int i = 0; i < 3; ++i) {
    if (!(cfg.landmark_min[i] < cfg.landmark_max[i])) {
      throw ConfigInvalid("landmark box must have positive extent");
    }
  }
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

// Track's per-frame triangulated point, or nullopt when the observation
// cannot be triangulated (outlier-corrupted disparity).
std::optional<Vec3> safe_triangulate(const StereoIntrinsics& intrinsics,
                                     const StereoObservation& obs) {
  if (obs.d <= intrinsics.d_min) return std::nullopt;
  return triangulate(intrinsics, obs.uvd());
}

}  // namespace

StereoIntrinsics default_intrinsics() {
  StereoIntrinsics k;
  k.f_u = 718.856;
  k.f_v = 718.856;
  k.c_u = 607.1928;
  k.c_v = 185.2157;
  k.b = 0.537;
  return k;
}

SequenceDataset generate_scene(const SyntheticSceneConfig& cfg,
                               const GeodeticAnchor& anchor) {
  validate(cfg);

  SequenceDataset ds;
  ds.anchor = anchor;
  ds.intrinsics = cfg.intrinsics;
  if (cfg.pixel_noise_sigma > 0.0) {
    const double s2 = cfg.pixel_noise_sigma * cfg.pixel_noise_sigma;
    ds.observation_noise_diag = Vec3(s2, s2, 2.0 * s2);
  }

  ds.gt_poses = cfg.trajectory == TrajectoryKind::kArc
                    ? arc_trajectory(cfg)
                    : waypoint_trajectory(cfg);
  for (int k = 0; k < cfg.frame_count; ++k) {
    ds.timestamps.push_back(
        anchor.timestamp.plus_seconds(cfg.frame_dt_s * k));
  }

  // Observation-generating poses: the true path composed with a constant
  // yaw-rate error, so tracks describe a slowly turning impostor of it.
  std::vector<Pose> obs_poses = ds.gt_poses;
  if (cfg.yaw_rate_bias_rad != 0.0) {
    Vec6 bias = Vec6::Zero();
    bias[1] = cfg.yaw_rate_bias_rad;  // camera y is the yaw axis
    const Pose yaw_bias = se3_exp(bias);
    for (int k = 1; k < cfg.frame_count; ++k) {
      const Pose true_rel =
          compose(ds.gt_poses[static_cast<std::size_t>(k)],
                  inverse(ds.gt_poses[static_cast<std::size_t>(k - 1)]));
      obs_poses[static_cast<std::size_t>(k)] =
          compose(compose(yaw_bias, true_rel),
                  obs_poses[static_cast<std::size_t>(k - 1)]);
    }
  }

  RandomStream root(cfg.seed);
  RandomStream landmark_rng = root.substream(0);
  for (int j = 0; j < cfg.landmark_count; ++j) {
    Vec3 p;
    for (int i = 0; i < 3; ++i) {
      p[i] = cfg.landmark_min[i] +
             (cfg.landmark_max[i] - cfg.landmark_min[i]) *
                 landmark_rng.uniform();
    }
    ds.tracks.landmarks[j] = p;
  }

  for (int k = 0; k < cfg.frame_count; ++k) {
    RandomStream frame_rng = root.substream(static_cast<std::uint64_t>(k) + 1);
    const Pose& T_k0 = obs_poses[static_cast<std::size_t>(k)];
    for (const auto& [track_id, p_world] : ds.tracks.landmarks) {
      const std::optional<Vec3> uvd =
          try_project(cfg.intrinsics, transform_point(T_k0, p_world));
      if (!uvd.has_value()) continue;
      if ((*uvd)[0] < 0.0 || (*uvd)[0] >= cfg.image_width ||
          (*uvd)[1] < 0.0 || (*uvd)[1] >= cfg.image_height ||
          (*uvd)[2] <= cfg.intrinsics.d_min) {
        continue;
      }
      StereoObservation obs;
      obs.frame_id = k;
      obs.track_id = track_id;
      obs.u = (*uvd)[0];
      obs.v = (*uvd)[1];
      obs.d = (*uvd)[2];
      obs.noise = ds.observation_noise_diag.asDiagonal();
      if (cfg.pixel_noise_sigma > 0.0) {
        obs.u += cfg.pixel_noise_sigma * frame_rng.normal();
        obs.v += cfg.pixel_noise_sigma * frame_rng.normal();
        obs.d += cfg.pixel_noise_sigma * std::sqrt(2.0) * frame_rng.normal();
      }
      if (cfg.outlier_fraction > 0.0 &&
          frame_rng.bernoulli(cfg.outlier_fraction)) {
        obs.u = cfg.image_width * frame_rng.uniform();
        obs.v = cfg.image_height * frame_rng.uniform();
        obs.d = cfg.d_outlier_min +
                (cfg.d_outlier_max - cfg.d_outlier_min) * frame_rng.uniform();
      }
      ds.tracks.add(obs);
    }
  }

  ds.tracks.prune_single_frame_tracks();
  return ds;
}

Pose rigid_align(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() != dst.size()) {
    throw DimensionMismatch("rigid_align needs equally many points");
  }
  if (src.size() < 3) {
    throw DegenerateConfiguration("rigid_align needs >= 3 points");
  }
  Vec3 centroid_src = Vec3::Zero();
  Vec3 centroid_dst = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    centroid_src += src[i];
    centroid_dst += dst[i];
  }
  centroid_src /= static_cast<double>(src.size());
  centroid_dst /= static_cast<double>(dst.size());

  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    h += (src[i] - centroid_src) * (dst[i] - centroid_dst).transpose();
  }
  const Eigen::JacobiSVD<Mat3> svd(h,
                                   Eigen::ComputeFullU | Eigen::ComputeFullV);
  // Rank 1 leaves a rotation about the dominant axis unconstrained. The
  // gate is relative to the dominant singular value so it is invariant to
  // the coordinate scale.
  if (svd.singularValues()[1] <
      1e-12 * std::max(svd.singularValues()[0], 1e-300)) {
    throw DegenerateConfiguration(
        "point sets do not determine a unique rotation");
  }
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0
                ? -1.0
                : 1.0;
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  return Pose(r, centroid_dst - r * centroid_src);
}

Pose rigid_align_3pt(const std::array<Vec3, 3>& src,
                     const std::array<Vec3, 3>& dst) {
  if (triangle_area(src[0], src[1], src[2]) <= kMinTriangleArea ||
      triangle_area(dst[0], dst[1], dst[2]) <= kMinTriangleArea) {
    throw DegenerateConfiguration("three-point alignment needs non-collinear "
                                  "triples");
  }
  return rigid_align({src[0], src[1], src[2]}, {dst[0], dst[1], dst[2]});
}

namespace {

// Maximum-likelihood rigid alignment of the selected point pairs: Gauss-
// Newton on the stacked (u, v, d) residuals of frame a's points projected
// into frame b. Triangulated points carry depth noise that grows as z^2,
// so a 3D-3D fit is dominated by the farthest pairs; the residual in
// measurement space is what the observations actually constrain. Steps
// that fail to reduce the cost are halved, so the result never scores
// worse than the starting pose.
Pose refine_alignment(const StereoIntrinsics& intrinsics,
                      const std::vector<Vec3>& pts_a,
                      const std::vector<Vec3>& obs_b,
                      const std::vector<std::size_t>& selected,
                      Pose pose) {
  const auto cost_under = [&](const Pose& t) {
    double cost = 0.0;
    for (const std::size_t i : selected) {
      const std::optional<Vec3> uvd =
          try_project(intrinsics, transform_point(t, pts_a[i]));
      if (!uvd.has_value()) return std::numeric_limits<double>::infinity();
      cost += (*uvd - obs_b[i]).squaredNorm();
    }
    return cost;
  };

  double cost = cost_under(pose);
  for (int iter = 0; iter < 20; ++iter) {
    Mat6 h = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (const std::size_t i : selected) {
      Landmark lm;
      lm.id = 0;
      lm.position = pts_a[i];
      Eigen::Matrix<double, 3, 6> j;
      Vec3 r;
      try {
        j = projection_jacobians(intrinsics, pose, lm).d_pose;
        r = project(intrinsics, transform_point(pose, pts_a[i])) - obs_b[i];
      } catch (const Error&) {
        continue;
      }
      h += j.transpose() * j;
      g += j.transpose() * r;
    }
    Vec6 step = h.ldlt().solve(-g);
    if (!step.allFinite()) break;
    bool accepted = false;
    for (int halving = 0; halving < 12; ++halving) {
      const Pose candidate = compose(se3_exp(step), pose);
      const double candidate_cost = cost_under(candidate);
      if (candidate_cost < cost) {
        pose = candidate;
        cost = candidate_cost;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || step.norm() < 1e-14) break;
  }
  return pose;
}

}  // namespace

FrameAlignment ransac_frame_alignment(const TrackTable& tracks,
                                      const StereoIntrinsics& intrinsics,
                                      std::int64_t frame_a,
                                      std::int64_t frame_b,
                                      const RansacConfig& cfg) {
  if (cfg.iterations < 1) throw ConfigInvalid("iterations must be >= 1");
  if (cfg.threshold_px <= 0.0) throw ConfigInvalid("threshold must be > 0");
  if (cfg.min_inliers < 3) throw ConfigInvalid("min_inliers must be >= 3");
  if (!(cfg.min_disparity_px >= 0.0)) {
    throw ConfigInvalid("min_disparity_px must be >= 0");
  }

  // Usable correspondences: shared tracks triangulatable in both frames.
  std::vector<std::int64_t> ids;
  std::vector<Vec3> pts_a;
  std::vector<Vec3> obs_b;
  {
    std::map<std::int64_t, const StereoObservation*> in_b;
    for (const StereoObservation& obs : tracks.frame(frame_b)) {
      in_b[obs.track_id] = &obs;
    }
    for (const StereoObservation& obs : tracks.frame(frame_a)) {
      const auto it = in_b.find(obs.track_id);
      if (it == in_b.end()) continue;
      if (obs.d < cfg.min_disparity_px) continue;
      if (it->second->d < cfg.min_disparity_px) continue;
      const std::optional<Vec3> pa = safe_triangulate(intrinsics, obs);
      if (!pa.has_value()) continue;
      if (it->second->d <= intrinsics.d_min) continue;
      ids.push_back(obs.track_id);
      pts_a.push_back(*pa);
      obs_b.push_back(it->second->uvd());
    }
  }
  const std::size_t n = ids.size();
  if (n < 3) {
    throw InsufficientTracks("frames " + std::to_string(frame_a) + " and " +
                             std::to_string(frame_b) + " share " +
                             std::to_string(n) + " usable tracks, need 3");
  }

  // Reprojection error of correspondence i under candidate T_{b,a}, or a
  // huge sentinel when the mapped point falls behind the camera.
  const auto residual_norm = [&](const Pose& T_ba, std::size_t i) {
    const std::optional<Vec3> uvd =
        try_project(intrinsics, transform_point(T_ba, pts_a[i]));
    if (!uvd.has_value()) return std::numeric_limits<double>::infinity();
    return (*uvd - obs_b[i]).norm();
  };

  RandomStream root(cfg.seed);
  int best_count = -1;
  double best_mean_error = std::numeric_limits<double>::infinity();
  Pose best_model;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    RandomStream rng = root.substream(static_cast<std::uint64_t>(iter));
    std::size_t i0 = rng.uniform_index(n);
    std::size_t i1 = rng.uniform_index(n);
    std::size_t i2 = rng.uniform_index(n);
    if (i0 == i1 || i0 == i2 || i1 == i2) continue;
    Pose model;
    try {
      std::array<Vec3, 3> src{pts_a[i0], pts_a[i1], pts_a[i2]};
      std::array<Vec3, 3> dst{triangulate(intrinsics, obs_b[i0]),
                              triangulate(intrinsics, obs_b[i1]),
                              triangulate(intrinsics, obs_b[i2])};
      model = rigid_align_3pt(src, dst);
    } catch (const DegenerateConfiguration&) {
      continue;
    }
    // Polish the minimal-sample model on its own triple. The closed-form
    // seed aligns triangulated points whose depth errors are meter scale,
    // while the sample's actual (u, v, d) observations pin the motion far
    // more tightly.
    model = refine_alignment(intrinsics, pts_a, obs_b, {i0, i1, i2}, model);
    int count = 0;
    double error_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = residual_norm(model, i);
      if (e <= cfg.threshold_px) {
        ++count;
        error_sum += e;
      }
    }
    if (count == 0) continue;
    const double mean_error = error_sum / count;
    if (count > best_count ||
        (count == best_count && mean_error < best_mean_error)) {
      best_count = count;
      best_mean_error = mean_error;
      best_model = model;
    }
  }
  if (best_count < cfg.min_inliers) {
    throw NoConsensus("best hypothesis explains " +
                      std::to_string(std::max(best_count, 0)) +
                      " tracks, need " + std::to_string(cfg.min_inliers));
  }

  // Refit on the full consensus set, re-gating and refitting until the
  // inlier set is a fixpoint, so every reported inlier satisfies the
  // threshold under the returned pose and the returned pose is the
  // alignment fit of exactly that set. The minimal-sample model only has
  // to land close enough for its consensus to overlap the true inliers;
  // the refit then pulls the pose onto all of them.
  const auto gate = [&](const Pose& model) {
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < n; ++i) {
      if (residual_norm(model, i) <= cfg.threshold_px) kept.push_back(i);
    }
    return kept;
  };
  std::vector<std::size_t> inlier_idx = gate(best_model);
  Pose refined = best_model;
  for (int round = 0; round < 10; ++round) {
    refined = refine_alignment(intrinsics, pts_a, obs_b, inlier_idx, refined);
    std::vector<std::size_t> next = gate(refined);
    if (static_cast<int>(next.size()) < cfg.min_inliers) {
      throw NoConsensus("refit kept " + std::to_string(next.size()) +
                        " inliers, need " + std::to_string(cfg.min_inliers));
    }
    const bool stable = next == inlier_idx;
    inlier_idx = std::move(next);
    if (stable) break;
  }

  FrameAlignment out;
  out.relative = refined;
  for (const std::size_t i : inlier_idx) {
    out.inlier_tracks.push_back(ids[i]);
  }
  std::sort(out.inlier_tracks.begin(), out.inlier_tracks.end());
  return out;
}

std::vector<Pose> compound_window_guess(const Pose& prior_pose,
                                        const std::vector<Pose>& relatives) {
  std::vector<Pose> out;
  out.reserve(relatives.size() + 1);
  out.push_back(prior_pose);
  for (const Pose& rel : relatives) {
    out.push_back(compose(rel, out.back()));
  }
  return out;
}

}  // namespace sunvo

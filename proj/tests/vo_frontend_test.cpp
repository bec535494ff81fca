#include "sunvo/vo_frontend.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "sunvo/errors.hpp"

using namespace sunvo;

namespace {

GeodeticAnchor test_anchor() {
  GeodeticAnchor anchor;
  anchor.latitude_deg = 49.011;
  anchor.longitude_deg = 8.417;
  anchor.timestamp = UtcTime::parse("2011-09-26T11:00:49.010Z");
  return anchor;
}

SyntheticSceneConfig base_config() {
  SyntheticSceneConfig cfg;
  cfg.intrinsics = default_intrinsics();
  cfg.frame_count = 40;
  cfg.landmark_count = 300;
  cfg.seed = 1;
  return cfg;
}

double pose_twist_distance(const Pose& a, const Pose& b) {
  return se3_log(compose(a, inverse(b))).norm();
}

Pose random_pose(RandomStream& rng, double scale) {
  Vec6 xi;
  for (int i = 0; i < 6; ++i) xi[i] = scale * rng.normal();
  return se3_exp(xi);
}

}  // namespace

TEST_CASE("noiseless scene reprojects every observation exactly") {
  const SyntheticSceneConfig cfg = base_config();
  const SequenceDataset ds = generate_scene(cfg, test_anchor());
  REQUIRE(ds.gt_poses.size() == 40);
  REQUIRE(ds.timestamps.size() == 40);

  // First camera sits at the ENU origin.
  CHECK(ds.gt_poses[0].translation().norm() < 1e-12);

  std::size_t checked = 0;
  for (const auto& [frame_id, observations] : ds.tracks.frames()) {
    const Pose& T = ds.gt_poses[static_cast<std::size_t>(frame_id)];
    for (const StereoObservation& obs : observations) {
      const Vec3 p = ds.tracks.landmarks.at(obs.track_id);
      const Vec3 uvd = project(cfg.intrinsics, transform_point(T, p));
      CHECK((uvd - obs.uvd()).norm() < 1e-12);
      ++checked;
    }
  }
  CHECK(checked > 2000);  // the default box keeps many landmarks in view
}

TEST_CASE("scene generation is deterministic per seed") {
  const SyntheticSceneConfig cfg = [] {
    SyntheticSceneConfig c = base_config();
    c.pixel_noise_sigma = 1.0;
    c.outlier_fraction = 0.2;
    return c;
  }();
  const SequenceDataset a = generate_scene(cfg, test_anchor());
  const SequenceDataset b = generate_scene(cfg, test_anchor());
  REQUIRE(a.tracks.observation_count() == b.tracks.observation_count());
  for (const auto& [frame_id, list] : a.tracks.frames()) {
    const auto& other = b.tracks.frame(frame_id);
    REQUIRE(list.size() == other.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
      CHECK(list[i].track_id == other[i].track_id);
      CHECK(list[i].u == other[i].u);
      CHECK(list[i].v == other[i].v);
      CHECK(list[i].d == other[i].d);
    }
  }

  SyntheticSceneConfig reseeded = cfg;
  reseeded.seed = 2;
  const SequenceDataset c = generate_scene(reseeded, test_anchor());
  bool any_difference =
      c.tracks.observation_count() != a.tracks.observation_count();
  if (!any_difference) {
    for (const auto& [frame_id, list] : a.tracks.frames()) {
      const auto& other = c.tracks.frame(frame_id);
      if (list.size() != other.size()) {
        any_difference = true;
        break;
      }
      for (std::size_t i = 0; i < list.size(); ++i) {
        if (list[i].u != other[i].u) {
          any_difference = true;
          break;
        }
      }
      if (any_difference) break;
    }
  }
  CHECK(any_difference);
}

TEST_CASE("outlier injection matches its Bernoulli rate") {
  SyntheticSceneConfig cfg = base_config();
  cfg.frame_count = 60;
  cfg.landmark_count = 500;
  cfg.outlier_fraction = 0.2;
  cfg.seed = 3;
  const SequenceDataset noisy = generate_scene(cfg, test_anchor());

  // The paired clean scene isolates which observations were replaced.
  cfg.outlier_fraction = 0.0;
  const SequenceDataset clean = generate_scene(cfg, test_anchor());

  std::size_t total = 0;
  std::size_t outliers = 0;
  for (const auto& [frame_id, list] : clean.tracks.frames()) {
    const auto& other = noisy.tracks.frame(frame_id);
    REQUIRE(list.size() == other.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
      ++total;
      if (list[i].u != other[i].u || list[i].v != other[i].v ||
          list[i].d != other[i].d) {
        ++outliers;
        CHECK(other[i].u >= 0.0);
        CHECK(other[i].u < cfg.image_width);
        CHECK(other[i].v >= 0.0);
        CHECK(other[i].v < cfg.image_height);
        CHECK(other[i].d >= cfg.d_outlier_min);
        CHECK(other[i].d <= cfg.d_outlier_max);
      }
    }
  }
  REQUIRE(total > 5000);
  const double fraction = static_cast<double>(outliers) / total;
  CHECK(fraction > 0.18);
  CHECK(fraction < 0.22);
}

TEST_CASE("yaw-rate bias leaves ground truth alone but bends observations") {
  SyntheticSceneConfig cfg = base_config();
  cfg.yaw_rate_bias_rad = 0.002;
  const SequenceDataset biased = generate_scene(cfg, test_anchor());
  SyntheticSceneConfig plain_cfg = base_config();
  const SequenceDataset plain = generate_scene(plain_cfg, test_anchor());

  for (std::size_t k = 0; k < plain.gt_poses.size(); ++k) {
    CHECK((biased.gt_poses[k].matrix3x4() - plain.gt_poses[k].matrix3x4())
              .norm() == 0.0);
  }
  // Frame 0 observations agree (bias applies to relative motion only);
  // later frames diverge.
  const auto& f0_a = plain.tracks.frame(0);
  const auto& f0_b = biased.tracks.frame(0);
  REQUIRE(f0_a.size() == f0_b.size());
  for (std::size_t i = 0; i < f0_a.size(); ++i) {
    CHECK(f0_a[i].u == f0_b[i].u);
  }
  const auto& late_a = plain.tracks.frame(30);
  const auto& late_b = biased.tracks.frame(30);
  bool diverged = late_a.size() != late_b.size();
  for (std::size_t i = 0; !diverged && i < late_a.size(); ++i) {
    diverged = late_a[i].track_id != late_b[i].track_id ||
               std::abs(late_a[i].u - late_b[i].u) > 1.0;
  }
  CHECK(diverged);
}

TEST_CASE("waypoint trajectories visit the corners in order") {
  SyntheticSceneConfig cfg = base_config();
  cfg.trajectory = TrajectoryKind::kWaypoints;
  cfg.waypoints = {Vec3(0, 0, 0), Vec3(0, 40, 0), Vec3(30, 40, 0)};
  cfg.frame_count = 50;
  const SequenceDataset ds = generate_scene(cfg, test_anchor());

  // Camera position = -R^T t must start at the first waypoint and end at
  // the last.
  const auto position = [](const Pose& T) -> Vec3 {
    return -T.rotation().transpose() * T.translation();
  };
  CHECK(position(ds.gt_poses.front()).norm() < 1e-12);
  CHECK((position(ds.gt_poses.back()) - Vec3(30, 40, 0)).norm() < 1e-9);

  // Degenerate configs are rejected.
  SyntheticSceneConfig bad = cfg;
  bad.waypoints = {Vec3(0, 0, 0)};
  CHECK_THROWS_AS(generate_scene(bad, test_anchor()), ConfigInvalid);
  bad.waypoints = {Vec3(0, 0, 0), Vec3(0, 0, 0)};
  CHECK_THROWS_AS(generate_scene(bad, test_anchor()), ConfigInvalid);
  bad.waypoints = {Vec3(0, 0, 0), Vec3(0, 0, 10)};  // straight up
  CHECK_THROWS_AS(generate_scene(bad, test_anchor()), ConfigInvalid);
}

TEST_CASE("config validation rejects out-of-range values") {
  const GeodeticAnchor anchor = test_anchor();
  SyntheticSceneConfig cfg = base_config();
  cfg.outlier_fraction = 0.5;
  CHECK_THROWS_AS(generate_scene(cfg, anchor), ConfigInvalid);
  cfg = base_config();
  cfg.landmark_count = 9;
  CHECK_THROWS_AS(generate_scene(cfg, anchor), ConfigInvalid);
  cfg = base_config();
  cfg.frame_count = 1;
  CHECK_THROWS_AS(generate_scene(cfg, anchor), ConfigInvalid);
  cfg = base_config();
  cfg.pixel_noise_sigma = -1.0;
  CHECK_THROWS_AS(generate_scene(cfg, anchor), ConfigInvalid);
  cfg = base_config();
  cfg.intrinsics.b = 0.0;
  CHECK_THROWS_AS(generate_scene(cfg, anchor), ConfigInvalid);
  cfg = base_config();
  cfg.landmark_min = Vec3(0, 0, 0);
  cfg.landmark_max = Vec3(0, 10, 10);
  CHECK_THROWS_AS(generate_scene(cfg, anchor), ConfigInvalid);
}

TEST_CASE("three-point alignment recovers an exact transform") {
  RandomStream rng(80);
  for (int trial = 0; trial < 200; ++trial) {
    const Pose T = random_pose(rng, 1.0);
    std::array<Vec3, 3> src;
    for (auto& p : src) {
      p = Vec3(rng.normal(), rng.normal(), rng.normal()) * 5.0;
    }
    if (0.5 * (src[1] - src[0]).cross(src[2] - src[0]).norm() < 1e-3) {
      continue;  // skip nearly-degenerate draws; they get their own test
    }
    std::array<Vec3, 3> dst;
    for (int i = 0; i < 3; ++i) dst[i] = transform_point(T, src[i]);
    const Pose est = rigid_align_3pt(src, dst);
    CHECK(pose_twist_distance(est, T) < 1e-9);
    CHECK(est.rotation().determinant() == doctest::Approx(1.0));
  }
}

TEST_CASE("collinear triples are rejected") {
  const std::array<Vec3, 3> line = {Vec3(0, 0, 0), Vec3(1, 1, 1),
                                    Vec3(2, 2, 2)};
  const std::array<Vec3, 3> ok = {Vec3(0, 0, 0), Vec3(1, 0, 0),
                                  Vec3(0, 1, 0)};
  CHECK_THROWS_AS(rigid_align_3pt(line, ok), DegenerateConfiguration);
  CHECK_THROWS_AS(rigid_align_3pt(ok, line), DegenerateConfiguration);

  // Area exactly at the threshold is still degenerate.
  const std::array<Vec3, 3> sliver = {Vec3(0, 0, 0), Vec3(1, 0, 0),
                                      Vec3(0.5, 2e-8, 0)};
  CHECK_THROWS_AS(rigid_align_3pt(sliver, ok), DegenerateConfiguration);
}

TEST_CASE("reflection trap still yields a proper rotation") {
  // Mirrored correspondences: an unguarded Procrustes solution would pick
  // the reflection (det -1) as the best orthogonal fit.
  const std::array<Vec3, 3> src = {Vec3(1, 0, 0), Vec3(0, 1, 0),
                                   Vec3(0, 0, 1)};
  const std::array<Vec3, 3> dst = {Vec3(-1, 0, 0), Vec3(0, 1, 0),
                                   Vec3(0, 0, 1)};
  const Pose est = rigid_align_3pt(src, dst);
  CHECK(est.rotation().determinant() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(is_rotation_matrix(est.rotation(), 1e-9));
}

TEST_CASE("ransac recovers exact relative poses on clean data") {
  const SyntheticSceneConfig cfg = base_config();
  const SequenceDataset ds = generate_scene(cfg, test_anchor());
  RansacConfig rc;
  rc.seed = 11;
  for (std::int64_t k = 1; k < 6; ++k) {
    const FrameAlignment fit =
        ransac_frame_alignment(ds.tracks, cfg.intrinsics, k - 1, k, rc);
    const Pose expected =
        compose(ds.gt_poses[static_cast<std::size_t>(k)],
                inverse(ds.gt_poses[static_cast<std::size_t>(k - 1)]));
    CHECK(pose_twist_distance(fit.relative, expected) < 1e-9);
    // Every track the alignment may use (shared, disparity at or above
    // the gate in both frames) is an inlier on clean data.
    std::map<std::int64_t, double> d_a;
    for (const StereoObservation& o : ds.tracks.frame(k - 1)) {
      d_a[o.track_id] = o.d;
    }
    std::size_t eligible = 0;
    for (const StereoObservation& o : ds.tracks.frame(k)) {
      const auto it = d_a.find(o.track_id);
      if (it != d_a.end() && it->second >= rc.min_disparity_px &&
          o.d >= rc.min_disparity_px) {
        ++eligible;
      }
    }
    REQUIRE(eligible > 50);
    CHECK(fit.inlier_tracks.size() == eligible);
  }
}

TEST_CASE("ransac is deterministic and rejects starved inputs") {
  const SyntheticSceneConfig cfg = [] {
    SyntheticSceneConfig c = base_config();
    c.pixel_noise_sigma = 1.0;
    c.outlier_fraction = 0.3;
    return c;
  }();
  const SequenceDataset ds = generate_scene(cfg, test_anchor());
  RansacConfig rc;
  rc.seed = 12;
  // Triangulation noise spreads the (u, v, d) residuals well past the
  // clean-data default gate, so noisy scenes use a wider one.
  rc.threshold_px = 6.0;
  const FrameAlignment a =
      ransac_frame_alignment(ds.tracks, cfg.intrinsics, 0, 1, rc);
  const FrameAlignment b =
      ransac_frame_alignment(ds.tracks, cfg.intrinsics, 0, 1, rc);
  CHECK((a.relative.matrix3x4() - b.relative.matrix3x4()).norm() == 0.0);
  CHECK(a.inlier_tracks == b.inlier_tracks);

  TrackTable starved;
  StereoObservation obs;
  obs.d = 5.0;
  obs.u = 100;
  obs.v = 100;
  for (std::int64_t t : {0, 1}) {
    obs.track_id = t;
    obs.frame_id = 0;
    starved.add(obs);
    obs.frame_id = 1;
    starved.add(obs);
  }
  CHECK_THROWS_AS(
      ransac_frame_alignment(starved, cfg.intrinsics, 0, 1, rc),
      InsufficientTracks);

  CHECK_THROWS_AS(ransac_frame_alignment(ds.tracks, cfg.intrinsics, 0, 1,
                                         [] {
                                           RansacConfig c;
                                           c.iterations = 0;
                                           return c;
                                         }()),
                  ConfigInvalid);
}

TEST_CASE("ransac consensus fails when everything is an outlier") {
  // Three shared tracks whose frame-b observations are mutually
  // inconsistent with any rigid motion of the frame-a cloud.
  const StereoIntrinsics k = default_intrinsics();
  TrackTable t;
  RandomStream rng(81);
  for (std::int64_t id = 0; id < 8; ++id) {
    StereoObservation obs;
    obs.track_id = id;
    obs.frame_id = 0;
    obs.u = 200 + 100 * rng.uniform();
    obs.v = 100 + 100 * rng.uniform();
    obs.d = 5 + 10 * rng.uniform();
    t.add(obs);
    obs.frame_id = 1;
    obs.u = 200 + 1000 * rng.uniform();
    obs.v = 370 * rng.uniform();
    obs.d = 5 + 60 * rng.uniform();
    t.add(obs);
  }
  RansacConfig rc;
  rc.min_inliers = 6;
  rc.seed = 13;
  CHECK_THROWS_AS(ransac_frame_alignment(t, k, 0, 1, rc), NoConsensus);
}

TEST_CASE("ransac inliers always satisfy the threshold after refit") {
  SyntheticSceneConfig cfg = base_config();
  cfg.pixel_noise_sigma = 1.0;
  cfg.outlier_fraction = 0.25;
  cfg.seed = 14;
  const SequenceDataset ds = generate_scene(cfg, test_anchor());
  RansacConfig rc;
  rc.seed = 15;
  rc.threshold_px = 6.0;
  for (std::int64_t k = 1; k < 8; ++k) {
    const FrameAlignment fit =
        ransac_frame_alignment(ds.tracks, cfg.intrinsics, k - 1, k, rc);
    std::map<std::int64_t, Vec3> obs_b;
    std::map<std::int64_t, Vec3> pts_a;
    for (const StereoObservation& o : ds.tracks.frame(k)) {
      obs_b[o.track_id] = o.uvd();
    }
    for (const StereoObservation& o : ds.tracks.frame(k - 1)) {
      if (o.d > cfg.intrinsics.d_min) {
        pts_a[o.track_id] = triangulate(cfg.intrinsics, o.uvd());
      }
    }
    for (const std::int64_t id : fit.inlier_tracks) {
      const Vec3 mapped = transform_point(fit.relative, pts_a.at(id));
      const Vec3 uvd = project(cfg.intrinsics, mapped);
      CHECK((uvd - obs_b.at(id)).norm() <= rc.threshold_px + 1e-12);
    }
  }
}

TEST_CASE("ransac recovers most true inliers under noise and outliers") {
  // 30% outliers, 1 px noise, one frame pair per seed; recall is averaged
  // over the seeds.
  std::size_t true_inliers_total = 0;
  std::size_t recovered_total = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SyntheticSceneConfig cfg = base_config();
    cfg.frame_count = 2;
    // Two frames span the whole sweep, so shrink it to keep the step at
    // roadway scale (about half a meter) instead of the full arc.
    cfg.arc_sweep_rad = 0.01;
    cfg.landmark_count = 200;
    cfg.pixel_noise_sigma = 1.0;
    cfg.outlier_fraction = 0.3;
    cfg.seed = 1000 + seed;
    const SequenceDataset noisy = generate_scene(cfg, test_anchor());
    SyntheticSceneConfig clean_cfg = cfg;
    clean_cfg.outlier_fraction = 0.0;
    clean_cfg.pixel_noise_sigma = 0.0;
    const SequenceDataset clean = generate_scene(clean_cfg, test_anchor());

    // True inliers: shared tracks that were not replaced in either frame.
    // Noise-only perturbation keeps (u, v, d) within a few pixels of the
    // clean value; replacement moves it arbitrarily, so compare against
    // the paired noise-free scene with a generous gate.
    std::set<std::int64_t> corrupted;
    std::set<std::int64_t> below_gate;
    RansacConfig rc;
    rc.seed = seed;
    rc.threshold_px = 6.0;  // ~99th percentile of the genuine-track residual
    for (std::int64_t f : {0, 1}) {
      const auto& noisy_list = noisy.tracks.frame(f);
      const auto& clean_list = clean.tracks.frame(f);
      REQUIRE(noisy_list.size() == clean_list.size());
      for (std::size_t i = 0; i < noisy_list.size(); ++i) {
        const double shift =
            (noisy_list[i].uvd() - clean_list[i].uvd()).norm();
        if (shift > 8.0) corrupted.insert(noisy_list[i].track_id);
        if (noisy_list[i].d < rc.min_disparity_px) {
          below_gate.insert(noisy_list[i].track_id);
        }
      }
    }
    // True inliers are the tracks the alignment could have recovered:
    // uncorrupted in both frames and above the disparity gate, so they
    // actually enter the correspondence set.
    std::set<std::int64_t> true_inliers;
    for (std::int64_t id : noisy.tracks.shared_tracks(0, 1)) {
      if (corrupted.count(id) == 0 && below_gate.count(id) == 0) {
        true_inliers.insert(id);
      }
    }
    const FrameAlignment fit =
        ransac_frame_alignment(noisy.tracks, cfg.intrinsics, 0, 1, rc);
    for (std::int64_t id : fit.inlier_tracks) {
      if (true_inliers.count(id)) ++recovered_total;
    }
    true_inliers_total += true_inliers.size();
  }
  REQUIRE(true_inliers_total > 500);
  const double recall =
      static_cast<double>(recovered_total) / true_inliers_total;
  CHECK(recall >= 0.95);
}

TEST_CASE("window guesses compound relatives onto the prior") {
  RandomStream rng(82);
  const Pose prior = random_pose(rng, 0.5);
  CHECK(compound_window_guess(prior, {}).size() == 1);
  CHECK((compound_window_guess(prior, {})[0].matrix3x4() -
         prior.matrix3x4())
            .norm() == 0.0);

  const std::vector<Pose> identities(3);
  const auto repeated = compound_window_guess(prior, identities);
  REQUIRE(repeated.size() == 4);
  for (const Pose& p : repeated) {
    CHECK((p.matrix3x4() - prior.matrix3x4()).norm() == 0.0);
  }

  std::vector<Pose> relatives;
  for (int i = 0; i < 5; ++i) relatives.push_back(random_pose(rng, 0.3));
  const auto chain = compound_window_guess(prior, relatives);
  Pose expected = prior;
  for (std::size_t i = 0; i < relatives.size(); ++i) {
    expected = compose(relatives[i], expected);
    CHECK((chain[i + 1].matrix3x4() - expected.matrix3x4()).norm() == 0.0);
  }
}

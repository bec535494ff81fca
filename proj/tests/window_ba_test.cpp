#include "sunvo/window_ba.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "support/fd_jacobian.hpp"
#include "sunvo/errors.hpp"
#include "sunvo/solar_ephemeris.hpp"

using namespace sunvo;

namespace {

GeodeticAnchor test_anchor() {
  GeodeticAnchor anchor;
  anchor.latitude_deg = 49.011;
  anchor.longitude_deg = 8.417;
  anchor.timestamp = UtcTime::parse("2011-09-26T11:00:49.010Z");
  return anchor;
}

SequenceDataset arc_scene(int frames, std::uint64_t seed,
                          double pixel_noise = 0.0) {
  SyntheticSceneConfig cfg;
  cfg.intrinsics = default_intrinsics();
  cfg.frame_count = frames;
  cfg.landmark_count = 300;
  cfg.pixel_noise_sigma = pixel_noise;
  cfg.seed = seed;
  return generate_scene(cfg, test_anchor());
}

std::vector<Pose> gt_guesses(const SequenceDataset& ds, std::int64_t first,
                             int count) {
  std::vector<Pose> out;
  for (int i = 0; i < count; ++i) {
    const Pose& p = ds.gt_poses[static_cast<std::size_t>(first + i)];
    out.emplace_back(p.rotation(), p.translation());
  }
  return out;
}

WindowProblem gt_problem(const SequenceDataset& ds, std::int64_t first,
                         int count) {
  return make_window_problem(ds, first, count, gt_guesses(ds, first, count),
                             ds.gt_poses[static_cast<std::size_t>(first)],
                             Mat6::Identity() * 1e-6);
}

double pose_twist_distance(const Pose& a, const Pose& b) {
  return se3_log(compose(a, inverse(b))).norm();
}

// Two frames observing one landmark from the same spot. The frame-0
// observation is offset from the exact projection by `residual`, frame 1
// observes exactly.
WindowProblem two_obs_problem(const Vec3& residual) {
  WindowProblem p;
  p.intrinsics = default_intrinsics();
  p.frame_ids = {0, 1};
  p.poses = {Pose(), Pose()};
  p.prior_pose = Pose();
  p.prior_covariance = Mat6::Identity();
  const Vec3 landmark(0.3, -0.2, 10.0);
  p.landmarks[7] = landmark;
  const Vec3 exact = project(p.intrinsics, landmark);
  StereoObservation a;
  a.frame_id = 0;
  a.track_id = 7;
  a.u = exact.x() - residual.x();
  a.v = exact.y() - residual.y();
  a.d = exact.z() - residual.z();
  StereoObservation b = a;
  b.frame_id = 1;
  b.u = exact.x();
  b.v = exact.y();
  b.d = exact.z();
  p.observations = {a, b};
  return p;
}

// Pose-only problem for prior and sun term tests.
WindowProblem pose_only_problem(const Pose& estimate) {
  WindowProblem p;
  p.intrinsics = default_intrinsics();
  p.frame_ids = {0};
  p.poses = {estimate};
  p.prior_pose = Pose();
  p.prior_covariance = Mat6::Identity();
  return p;
}

SunMeasurement sun_at(double zenith, double azimuth,
                      const Mat2& cov = Mat2::Identity()) {
  SunMeasurement m;
  m.frame_id = 0;
  AzimuthZenith a;
  a.zenith = zenith;
  a.azimuth = azimuth;
  m.direction = azzen_to_vec(a);
  m.covariance = cov;
  return m;
}

}  // namespace

TEST_CASE("ground-truth window evaluates to zero cost") {
  const SequenceDataset ds = arc_scene(10, 3);
  const WindowProblem p = gt_problem(ds, 0, 3);
  REQUIRE(p.landmarks.size() > 50);
  REQUIRE(p.observations.size() >= 2 * p.landmarks.size());

  const ReprojectionEval reproj = reprojection_cost(p);
  CHECK(reproj.cost < 1e-12);
  CHECK(reproj.warnings.empty());
  CHECK(reproj.blocks.size() == p.observations.size());

  const PriorEval prior = prior_cost(p);
  CHECK(prior.cost < 1e-20);
}

TEST_CASE("window assembly attaches dataset noise and triangulated points") {
  const SequenceDataset ds = arc_scene(10, 4);
  const WindowProblem p = gt_problem(ds, 2, 3);
  const Mat3 expected_noise = ds.observation_noise_diag.asDiagonal();
  for (const StereoObservation& obs : p.observations) {
    CHECK(obs.frame_id >= 2);
    CHECK(obs.frame_id <= 4);
    CHECK((obs.noise - expected_noise).norm() == 0.0);
  }
  // Noiseless observations under ground-truth guesses triangulate back to
  // the generating landmarks.
  for (const auto& [id, position] : p.landmarks) {
    CHECK((position - ds.tracks.landmarks.at(id)).norm() < 1e-6);
  }
}

TEST_CASE("reprojection cost weights residuals by observation noise") {
  const Vec3 r(1.0, 2.0, -1.0);
  WindowProblem p = two_obs_problem(r);
  const ReprojectionEval eval = reprojection_cost(p);
  REQUIRE(eval.blocks.size() == 2);
  CHECK((eval.blocks[0].residual - r).norm() < 1e-12);
  CHECK(eval.blocks[1].residual.norm() < 1e-12);
  CHECK(eval.cost == doctest::Approx(r.squaredNorm()).epsilon(1e-12));

  p.observations[0].noise = 2.0 * Mat3::Identity();
  const ReprojectionEval halved = reprojection_cost(p);
  CHECK(halved.cost ==
        doctest::Approx(0.5 * r.squaredNorm()).epsilon(1e-12));
}

TEST_CASE("observation behind the camera is skipped with a warning") {
  WindowProblem p;
  p.intrinsics = default_intrinsics();
  p.frame_ids = {0, 1};
  // Twist translation -10 puts the second camera 10 m ahead of the first,
  // 5 m past the landmark.
  p.poses = {Pose(), se3_exp((Vec6() << 0, 0, 0, 0, 0, -10).finished())};
  p.prior_pose = Pose();
  p.landmarks[3] = Vec3(0.0, 0.0, 5.0);
  StereoObservation a;
  a.frame_id = 0;
  a.track_id = 3;
  const Vec3 exact = project(p.intrinsics, Vec3(0.0, 0.0, 5.0));
  a.u = exact.x();
  a.v = exact.y();
  a.d = exact.z();
  StereoObservation b = a;
  b.frame_id = 1;  // camera moved 10 m forward, the point is 5 m behind
  p.observations = {a, b};

  const ReprojectionEval eval = reprojection_cost(p);
  CHECK(eval.blocks.size() == 1);
  REQUIRE(eval.warnings.size() == 1);
  CHECK(eval.warnings[0].find("behind camera") != std::string::npos);
}

TEST_CASE("prior cost is the squared offset twist under a right offset") {
  Vec6 xi;
  xi << 0.02, -0.03, 0.01, 0.5, -0.2, 0.3;
  RandomStream rng(11);
  Vec6 base_twist;
  for (int i = 0; i < 6; ++i) base_twist[i] = rng.normal();
  const Pose prior = se3_exp(base_twist);

  WindowProblem p = pose_only_problem(compose(prior, se3_exp(xi)));
  p.prior_pose = prior;

  const PriorEval eval = prior_cost(p);
  CHECK((eval.residual - xi).norm() < 1e-12);
  CHECK(eval.cost == doctest::Approx(xi.squaredNorm()).epsilon(1e-12));

  p.prior_covariance = 4.0 * Mat6::Identity();
  const PriorEval quartered = prior_cost(p);
  CHECK(quartered.cost ==
        doctest::Approx(0.25 * xi.squaredNorm()).epsilon(1e-12));
}

TEST_CASE("sun cost follows the Huber knee on the whitened norm") {
  const double kZen = M_PI / 2.0;
  WindowProblem p = pose_only_problem(Pose());
  const SunDirection s0(0.0, 0.0, 1.0);  // expected: zenith pi/2, azimuth 0

  SUBCASE("agreement costs nothing") {
    p.sun = {sun_at(kZen, 0.0)};
    const SunEval eval = sun_cost(p, {s0});
    REQUIRE(eval.blocks.size() == 1);
    CHECK(eval.cost < 1e-20);
    CHECK(eval.blocks[0].huber_weight == 1.0);
  }

  SUBCASE("quadratic branch below the knee") {
    p.sun = {sun_at(kZen + 0.3, 0.0)};
    const SunEval eval = sun_cost(p, {s0});
    REQUIRE(eval.blocks.size() == 1);
    CHECK(eval.blocks[0].mahalanobis == doctest::Approx(0.3));
    CHECK(eval.cost == doctest::Approx(0.09).epsilon(1e-9));
    CHECK(eval.blocks[0].huber_weight == 1.0);
  }

  SUBCASE("linear branch above the knee") {
    p.sun = {sun_at(kZen + 0.8, 0.0)};
    const SunEval eval = sun_cost(p, {s0});
    REQUIRE(eval.blocks.size() == 1);
    CHECK(eval.cost == doctest::Approx(2.0 * 0.5 * 0.8 - 0.25).epsilon(1e-9));
    CHECK(eval.blocks[0].huber_weight == doctest::Approx(0.5 / 0.8));
  }

  SUBCASE("continuous at the knee") {
    p.sun = {sun_at(kZen + 0.5 - 1e-9, 0.0)};
    const double below = sun_cost(p, {s0}).cost;
    p.sun = {sun_at(kZen + 0.5 + 1e-9, 0.0)};
    const double above = sun_cost(p, {s0}).cost;
    CHECK(std::abs(above - below) < 1e-8);
  }

  SUBCASE("huge delta reduces to weighted least squares") {
    p.huber_delta = 1e12;
    p.sun = {sun_at(kZen + 0.8, 0.0, 0.25 * Mat2::Identity())};
    const SunEval eval = sun_cost(p, {s0});
    CHECK(eval.cost == doctest::Approx(0.64 / 0.25).epsilon(1e-12));
  }

  SUBCASE("covariance scales the whitened norm") {
    p.sun = {sun_at(kZen + 0.3, 0.0, 0.25 * Mat2::Identity())};
    const SunEval eval = sun_cost(p, {s0});
    // u = 0.3 / 0.5 = 0.6, above the 0.5 knee.
    CHECK(eval.blocks[0].mahalanobis == doctest::Approx(0.6));
    CHECK(eval.cost == doctest::Approx(2.0 * 0.5 * 0.6 - 0.25).epsilon(1e-9));
  }
}

TEST_CASE("sun azimuth residual wraps across the cut") {
  WindowProblem p = pose_only_problem(Pose());
  // Expected azimuth sits just shy of +pi; the measurement just past -pi.
  AzimuthZenith expected;
  expected.zenith = M_PI / 2.0;
  expected.azimuth = M_PI - 0.05;
  const SunDirection s0 = azzen_to_vec(expected);
  p.sun = {sun_at(M_PI / 2.0, -M_PI + 0.05)};
  const SunEval eval = sun_cost(p, {s0});
  REQUIRE(eval.blocks.size() == 1);
  CHECK(eval.blocks[0].residual.y() == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(eval.cost == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("sun measurement at the azimuth pole is skipped") {
  WindowProblem p = pose_only_problem(Pose());
  SunMeasurement m;
  m.frame_id = 0;
  m.direction = SunDirection(0.0, -1.0, 0.0);  // straight up in camera terms
  p.sun = {m};
  const SunEval eval = sun_cost(p, {SunDirection(0.0, 0.0, 1.0)});
  CHECK(eval.blocks.empty());
  CHECK(eval.cost == 0.0);
  REQUIRE(eval.warnings.size() == 1);
  CHECK(eval.warnings[0].find("pole") != std::string::npos);
}

TEST_CASE("reprojection Jacobians match central differences") {
  const SequenceDataset ds = arc_scene(6, 9);
  WindowProblem base = gt_problem(ds, 0, 2);
  // Move off the zero-residual point so the Jacobian test is not trivial.
  base.poses[1] = compose(
      se3_exp((Vec6() << 0.01, -0.02, 0.015, 0.05, -0.04, 0.08).finished()),
      base.poses[1]);

  const ReprojectionEval eval = reprojection_cost(base);
  REQUIRE(!eval.blocks.empty());
  const ReprojectionBlock& block = eval.blocks[eval.blocks.size() / 2];

  const auto residual_at = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    WindowProblem p = base;
    p.poses[static_cast<std::size_t>(block.pose_index)] =
        compose(se3_exp(x.head<6>()),
                p.poses[static_cast<std::size_t>(block.pose_index)]);
    p.landmarks[block.track_id] += x.tail<3>();
    const ReprojectionEval e = reprojection_cost(p);
    for (const ReprojectionBlock& b : e.blocks) {
      if (b.frame_id == block.frame_id && b.track_id == block.track_id) {
        return b.residual;
      }
    }
    REQUIRE(false);
    return Eigen::VectorXd();
  };
  const Eigen::MatrixXd fd = sunvo_test::central_difference(
      residual_at, Eigen::VectorXd::Zero(9), 1e-6);
  Eigen::MatrixXd analytic(3, 9);
  analytic << block.d_pose, block.d_landmark;
  CHECK(sunvo_test::relative_error(analytic, fd) < 1e-5);
}

TEST_CASE("prior Jacobian matches central differences") {
  RandomStream rng(21);
  Vec6 prior_twist, offset;
  for (int i = 0; i < 6; ++i) {
    prior_twist[i] = 0.5 * rng.normal();
    offset[i] = 0.1 * rng.normal();
  }
  WindowProblem base = pose_only_problem(Pose());
  base.prior_pose = se3_exp(prior_twist);
  base.poses[0] = compose(base.prior_pose, se3_exp(offset));

  const PriorEval eval = prior_cost(base);
  const auto residual_at = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    WindowProblem p = base;
    p.poses[0] = compose(se3_exp(Vec6(x)), p.poses[0]);
    return prior_cost(p).residual;
  };
  const Eigen::MatrixXd fd = sunvo_test::central_difference(
      residual_at, Eigen::VectorXd::Zero(6), 1e-6);
  CHECK(sunvo_test::relative_error(eval.d_pose, fd) < 1e-5);
}

TEST_CASE("sun Jacobian matches central differences") {
  WindowProblem base = pose_only_problem(
      se3_exp((Vec6() << 0.1, 0.2, -0.15, 0.0, 0.0, 0.0).finished()));
  const SunDirection s0 = SunDirection(0.3, -0.4, 0.85).normalized();
  base.sun = {sun_at(1.2, 0.4)};

  const SunEval eval = sun_cost(base, {s0});
  REQUIRE(eval.blocks.size() == 1);
  const auto residual_at = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    WindowProblem p = base;
    p.poses[0] = compose(se3_exp(Vec6(x)), p.poses[0]);
    const SunEval e = sun_cost(p, {s0});
    REQUIRE(e.blocks.size() == 1);
    return e.blocks[0].residual;
  };
  const Eigen::MatrixXd fd = sunvo_test::central_difference(
      residual_at, Eigen::VectorXd::Zero(6), 1e-6);
  CHECK(sunvo_test::relative_error(eval.blocks[0].d_pose, fd) < 1e-5);
}

TEST_CASE("perfect window converges immediately at zero cost") {
  const SequenceDataset ds = arc_scene(10, 5);
  const WindowProblem p = gt_problem(ds, 0, 3);
  const WindowSolution sol = solve_window(p);
  CHECK(sol.converged);
  CHECK(sol.iterations <= 2);
  CHECK(sol.breakdown.total() < 1e-12);
  REQUIRE(sol.poses.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(pose_twist_distance(sol.poses[i], ds.gt_poses[i]) < 1e-9);
    REQUIRE(sol.poses[i].covariance().has_value());
    const Mat6 cov = *sol.poses[i].covariance();
    CHECK((cov - cov.transpose()).norm() < 1e-12);
    const Eigen::SelfAdjointEigenSolver<Mat6> eig(cov);
    CHECK(eig.eigenvalues().minCoeff() > -1e-12);
  }
}

TEST_CASE("perturbed guesses recover ground truth on noiseless data") {
  const SequenceDataset ds = arc_scene(10, 6);
  RandomStream rng(17);
  std::vector<Pose> guesses = gt_guesses(ds, 0, 3);
  for (std::size_t i = 1; i < guesses.size(); ++i) {
    Vec6 xi;
    for (int k = 0; k < 6; ++k) xi[k] = 0.05 * rng.normal();
    guesses[i] = compose(se3_exp(xi), guesses[i]);
  }
  const WindowProblem p = make_window_problem(
      ds, 0, 3, guesses, ds.gt_poses[0], Mat6::Identity() * 1e-6);
  const WindowSolution sol = solve_window(p);
  CHECK(sol.converged);
  CHECK(sol.breakdown.total() < 1e-10);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(pose_twist_distance(sol.poses[i], ds.gt_poses[i]) < 1e-6);
  }
  // Accepted steps never increase the cost.
  double last = sol.initial_cost;
  for (const double c : sol.cost_trace) {
    CHECK(c < last);
    last = c;
  }
}

TEST_CASE("solver cost trace is monotone on noisy data") {
  const SequenceDataset ds = arc_scene(10, 7, 0.5);
  RandomStream rng(23);
  std::vector<Pose> guesses = gt_guesses(ds, 0, 4);
  for (std::size_t i = 1; i < guesses.size(); ++i) {
    Vec6 xi;
    for (int k = 0; k < 6; ++k) xi[k] = 0.03 * rng.normal();
    guesses[i] = compose(se3_exp(xi), guesses[i]);
  }
  const WindowProblem p = make_window_problem(
      ds, 0, 4, guesses, ds.gt_poses[0], Mat6::Identity() * 1e-6);
  const WindowSolution sol = solve_window(p);
  CHECK(sol.converged);
  REQUIRE(!sol.cost_trace.empty());
  CHECK(sol.cost_trace.front() < sol.initial_cost);
  double last = sol.initial_cost;
  for (const double c : sol.cost_trace) {
    CHECK(c < last);
    last = c;
  }
}

TEST_CASE("sun term pulls yaw toward the measured azimuth") {
  // One free pose, no landmarks. The prior holds everything except yaw,
  // where it is weak; a horizontal sun measurement offset by 0.1 rad in
  // azimuth then drags yaw by an amount set by the information ratio.
  const SunDirection s0(0.0, 0.0, 1.0);
  std::vector<double> yaw;
  for (const double sigma_sq : {1e-4, 1e-2, 1.0}) {
    WindowProblem p = pose_only_problem(Pose());
    p.prior_pose = Pose();
    Mat6 prior_cov = Mat6::Identity() * 1e-8;
    prior_cov(1, 1) = 1e-2;  // weak yaw prior
    p.prior_covariance = prior_cov;
    p.huber_delta = 10.0;  // stay on the quadratic branch throughout
    p.sun = {sun_at(M_PI / 2.0, 0.1, sigma_sq * Mat2::Identity())};
    p.sun_world = {s0};
    const WindowSolution sol = solve_window(p);
    REQUIRE(sol.converged);
    yaw.push_back(so3_log(sol.poses[0].rotation())[1]);
  }
  for (const double y : yaw) {
    CHECK(y > 0.0);
    CHECK(y < 0.1);
  }
  CHECK(yaw[0] > yaw[1]);
  CHECK(yaw[1] > yaw[2]);
  // Information-ratio prediction for the tightest measurement:
  // 0.1 * (1/sigma^2) / (1/sigma^2 + 1/0.01) with sigma^2 = 1e-4.
  CHECK(yaw[0] == doctest::Approx(0.1 * (1e4 / (1e4 + 1e2))).epsilon(1e-3));
}

TEST_CASE("sun measurement shrinks the rotational covariance") {
  const SequenceDataset ds = arc_scene(6, 8);
  WindowProblem p = gt_problem(ds, 0, 2);
  // Thin the problem to a dozen tracks so the sun term is not lost in the
  // reprojection information.
  std::map<std::int64_t, Vec3> kept;
  for (const auto& [id, pos] : p.landmarks) {
    kept[id] = pos;
    if (kept.size() == 12) {
      break;
    }
  }
  p.landmarks = kept;
  std::vector<StereoObservation> obs;
  for (const StereoObservation& o : p.observations) {
    if (kept.count(o.track_id)) {
      obs.push_back(o);
    }
  }
  p.observations = obs;
  const WindowSolution plain = solve_window(p);

  // Mid-sky ENU direction; the base frame is the anchored ENU world.
  const SunDirection s0 = SunDirection(0.3, 0.5, 0.8).normalized();
  SunMeasurement m;
  m.frame_id = 1;
  m.direction = expected_sun_in_camera(ds.gt_poses[1], s0);
  m.covariance = 1e-6 * Mat2::Identity();
  p.sun = {m};
  p.sun_world = {s0};
  const WindowSolution fused = solve_window(p);

  const double rot_plain =
      plain.poses[1].covariance()->topLeftCorner<3, 3>().trace();
  const double rot_fused =
      fused.poses[1].covariance()->topLeftCorner<3, 3>().trace();
  CHECK(rot_fused < 0.999 * rot_plain);
}

TEST_CASE("prior propagation returns the marginal of the asked frame") {
  const SequenceDataset ds = arc_scene(6, 10);
  const WindowSolution sol = solve_window(gt_problem(ds, 0, 2));
  const auto [pose, cov] = propagate_prior(sol, 1);
  CHECK((pose.matrix3x4() - sol.poses[1].matrix3x4()).norm() == 0.0);
  // Marginal transported from the left tangent into the pose's right
  // tangent, where the next window's prior residual lives.
  const Mat6 expected = transform_covariance(
      inverse(sol.poses[1]), *sol.poses[1].covariance());
  CHECK((cov - expected).norm() < 1e-18);
  CHECK((cov - cov.transpose()).norm() == 0.0);
  const Eigen::SelfAdjointEigenSolver<Mat6> eig(cov);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
  CHECK_THROWS_AS(propagate_prior(sol, 99), FrameNotInWindow);
}

TEST_CASE("unconstrained pose makes the window rank deficient") {
  WindowProblem p;
  p.intrinsics = default_intrinsics();
  p.frame_ids = {0, 1};
  p.poses = {Pose(), Pose()};
  p.prior_pose = Pose();
  p.prior_covariance = Mat6::Identity();
  // No observations at all: frame 1 has no information.
  CHECK_THROWS_AS(solve_window(p), RankDeficient);
}

TEST_CASE("malformed problems are rejected") {
  const SequenceDataset ds = arc_scene(6, 12);
  const WindowProblem good = gt_problem(ds, 0, 2);

  SUBCASE("pose count mismatch") {
    WindowProblem p = good;
    p.poses.pop_back();
    CHECK_THROWS_AS(solve_window(p), ConfigInvalid);
  }
  SUBCASE("frame ids not ascending") {
    WindowProblem p = good;
    std::swap(p.frame_ids[0], p.frame_ids[1]);
    CHECK_THROWS_AS(solve_window(p), ConfigInvalid);
  }
  SUBCASE("landmark observed once") {
    WindowProblem p = good;
    const std::int64_t victim = p.observations.front().track_id;
    const auto it = std::find_if(
        p.observations.begin() + 1, p.observations.end(),
        [&](const StereoObservation& o) { return o.track_id == victim; });
    p.observations.erase(it);
    CHECK_THROWS_AS(solve_window(p), ConfigInvalid);
  }
  SUBCASE("observation of an unknown landmark") {
    WindowProblem p = good;
    StereoObservation stray = p.observations.front();
    stray.track_id = 999999;
    p.observations.push_back(stray);
    CHECK_THROWS_AS(solve_window(p), ConfigInvalid);
  }
  SUBCASE("prior covariance not positive definite") {
    WindowProblem p = good;
    p.prior_covariance = Mat6::Zero();
    CHECK_THROWS_AS(solve_window(p), ConfigInvalid);
  }
  SUBCASE("sun_world size mismatch") {
    WindowProblem p = good;
    SunMeasurement m;
    m.frame_id = 0;
    p.sun = {m};
    CHECK_THROWS_AS(solve_window(p), ConfigInvalid);
  }
  SUBCASE("sun measurement outside the window") {
    WindowProblem p = good;
    SunMeasurement m;
    m.frame_id = 5;
    p.sun = {m};
    p.sun_world = {SunDirection(0, 0, 1)};
    CHECK_THROWS_AS(solve_window(p), ConfigInvalid);
  }
  SUBCASE("non-positive huber delta") {
    WindowProblem p = good;
    p.huber_delta = 0.0;
    CHECK_THROWS_AS(solve_window(p), ConfigInvalid);
  }
}

namespace {

// Three poses on a gently curving forward path and two landmark clouds:
// cloud A seen from frames 0 and 1 only, cloud B from frames 1 and 2
// only. Observation noise sigma is in pixels with identity noise model.
struct ThreeFrameScene {
  std::vector<Pose> gt;
  WindowProblem batch;  // frames {0, 1, 2}, prior on pose 0
};

ThreeFrameScene make_three_frame_scene(double sigma, std::uint64_t seed) {
  const StereoIntrinsics k = default_intrinsics();
  ThreeFrameScene scene;
  scene.gt.push_back(Pose());
  scene.gt.push_back(se3_exp(
      (Vec6() << 0.0, 0.02, 0.0, 0.0, 0.0, -0.5).finished()));
  scene.gt.push_back(compose(
      se3_exp((Vec6() << 0.0, 0.025, 0.0, 0.0, 0.0, -0.55).finished()),
      scene.gt[1]));

  RandomStream rng(seed);
  WindowProblem& p = scene.batch;
  p.intrinsics = k;
  p.frame_ids = {0, 1, 2};
  p.poses = {scene.gt[0], scene.gt[1], scene.gt[2]};
  p.prior_pose = scene.gt[0];
  p.prior_covariance = Mat6::Identity() * 1e-6;

  const auto add_cloud = [&](std::int64_t first_id, double z_center,
                             std::int64_t frame_a, std::int64_t frame_b) {
    for (int i = 0; i < 12; ++i) {
      const std::int64_t id = first_id + i;
      const Vec3 p0(-4.0 + 0.7 * i, -1.0 + 0.15 * i,
                    z_center + 0.9 * (i % 5));
      p.landmarks[id] = p0;
      for (const std::int64_t f : {frame_a, frame_b}) {
        const Vec3 exact = project(
            k, transform_point(scene.gt[static_cast<std::size_t>(f)], p0));
        StereoObservation obs;
        obs.frame_id = f;
        obs.track_id = id;
        obs.u = exact.x() + sigma * rng.normal();
        obs.v = exact.y() + sigma * rng.normal();
        obs.d = exact.z() + sigma * rng.normal();
        p.observations.push_back(obs);
      }
    }
  };
  add_cloud(100, 12.0, 0, 1);
  add_cloud(200, 14.0, 1, 2);
  return scene;
}

// Extracts the sub-problem for two consecutive frames of the scene.
WindowProblem two_frame_slice(const ThreeFrameScene& scene,
                              std::int64_t first, const Pose& prior_pose,
                              const Mat6& prior_cov) {
  WindowProblem p;
  p.intrinsics = scene.batch.intrinsics;
  p.frame_ids = {first, first + 1};
  p.poses = {scene.gt[static_cast<std::size_t>(first)],
             scene.gt[static_cast<std::size_t>(first + 1)]};
  p.prior_pose = prior_pose;
  p.prior_covariance = prior_cov;
  std::map<std::int64_t, int> count;
  for (const StereoObservation& obs : scene.batch.observations) {
    if (obs.frame_id == first || obs.frame_id == first + 1) {
      ++count[obs.track_id];
    }
  }
  for (const StereoObservation& obs : scene.batch.observations) {
    if ((obs.frame_id == first || obs.frame_id == first + 1) &&
        count[obs.track_id] >= 2) {
      p.observations.push_back(obs);
      p.landmarks[obs.track_id] = scene.batch.landmarks.at(obs.track_id);
    }
  }
  return p;
}

}  // namespace

TEST_CASE("chained two-frame windows match the three-frame batch solve") {
  // Landmark clouds do not span past the shared frame, so the chained
  // marginals carry all the information the batch solve has about the
  // final pose; the two should agree to linearization error.
  const ThreeFrameScene scene = make_three_frame_scene(0.005, 31);
  const WindowSolution batch = solve_window(scene.batch);
  REQUIRE(batch.converged);

  const WindowProblem w0 =
      two_frame_slice(scene, 0, scene.gt[0], Mat6::Identity() * 1e-6);
  const WindowSolution s0 = solve_window(w0);
  REQUIRE(s0.converged);
  const auto [prior1, cov1] = propagate_prior(s0, 1);
  const WindowProblem w1 = two_frame_slice(scene, 1, prior1, cov1);
  const WindowSolution s1 = solve_window(w1);
  REQUIRE(s1.converged);

  CHECK(pose_twist_distance(batch.poses[2], s1.poses[1]) < 1e-6);
  const Mat6 cov_batch = *batch.poses[2].covariance();
  const Mat6 cov_chain = *s1.poses[1].covariance();
  CHECK((cov_batch - cov_chain).norm() / cov_batch.norm() < 1e-5);
}

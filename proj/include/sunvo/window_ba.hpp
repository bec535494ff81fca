#ifndef SUNVO_WINDOW_BA_HPP
#define SUNVO_WINDOW_BA_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sunvo/dataset.hpp"
#include "sunvo/se3.hpp"
#include "sunvo/stereo_camera.hpp"
#include "sunvo/sun_sensing.hpp"
#include "sunvo/vo_frontend.hpp"

namespace sunvo {

struct SolverSettings {
  int max_iterations = 50;
  double gradient_tol = 1e-8;
  double step_tol = 1e-10;
  double initial_damping = 1e-4;
};

/// One sliding window of the bundle adjustment: consecutive frames with
/// pose estimates T_{k,0}, landmark estimates in the base frame, the
/// stereo observations tying them together, a Gaussian prior on the first
/// pose, and optional sun-direction measurements. Each observation is
/// weighted by its own noise matrix. sun_world holds the base-frame sun
/// direction for each entry of sun, in the same order.
struct WindowProblem {
  std::vector<std::int64_t> frame_ids;  // ascending, consecutive
  std::vector<Pose> poses;              // aligned with frame_ids
  std::map<std::int64_t, Vec3> landmarks;
  std::vector<StereoObservation> observations;
  StereoIntrinsics intrinsics;
  Pose prior_pose;  // on the first window pose
  // Covariance of the prior discrepancy log(prior^-1 * estimate), i.e. in
  // the right-offset tangent of prior_pose. propagate_prior returns it in
  // this convention.
  Mat6 prior_covariance = Mat6::Identity();
  std::vector<SunMeasurement> sun;
  std::vector<SunDirection> sun_world;
  double huber_delta = 0.5;  // rad, on the whitened sun residual norm
  SolverSettings settings;
};

struct CostBreakdown {
  double reprojection = 0.0;
  double prior = 0.0;
  double sun = 0.0;
  double total() const { return reprojection + prior + sun; }
};

/// One stereo observation's residual e = g(T_{k,0} p_0) - y and the
/// Jacobians of e with respect to a left twist perturbation of the pose
/// and to the landmark. information is the observation's noise inverse;
/// the block's cost contribution is e^T information e.
struct ReprojectionBlock {
  std::int64_t frame_id = 0;
  std::int64_t track_id = 0;
  int pose_index = 0;
  Vec3 residual = Vec3::Zero();
  Eigen::Matrix<double, 3, 6> d_pose = Eigen::Matrix<double, 3, 6>::Zero();
  Mat3 d_landmark = Mat3::Zero();
  Mat3 information = Mat3::Identity();
};

struct ReprojectionEval {
  double cost = 0.0;
  std::vector<ReprojectionBlock> blocks;
  std::vector<std::string> warnings;  // culled observations
};

/// Sum over observations of e^T R_y^-1 e at the problem's estimates.
/// Observations whose landmark falls behind the camera are skipped with a
/// warning rather than failing the evaluation.
ReprojectionEval reprojection_cost(const WindowProblem& problem);

/// Prior discrepancy e = log(prior^-1 * estimate) on the first window
/// pose, its Jacobian with respect to a left perturbation of that pose,
/// and the prior information matrix. Cost is e^T R^-1 e.
struct PriorEval {
  double cost = 0.0;
  Vec6 residual = Vec6::Zero();
  Mat6 d_pose = Mat6::Zero();
  Mat6 information = Mat6::Identity();
};

PriorEval prior_cost(const WindowProblem& problem);

/// One sun measurement's residual in (zenith, azimuth): f applied to the
/// measured camera-frame direction minus f of the expected direction
/// R_{k,0} s_0, azimuth wrapped to (-pi, pi]. mahalanobis is the whitened
/// residual norm u; huber_weight is 1 on the quadratic branch and
/// delta / u on the linear branch, so weight-scaled normal equations
/// reproduce the robust gradient exactly.
struct SunBlock {
  std::int64_t frame_id = 0;
  int pose_index = 0;
  Vec2 residual = Vec2::Zero();
  Eigen::Matrix<double, 2, 6> d_pose = Eigen::Matrix<double, 2, 6>::Zero();
  Mat2 information = Mat2::Identity();
  double mahalanobis = 0.0;
  double huber_weight = 1.0;
};

struct SunEval {
  double cost = 0.0;
  std::vector<SunBlock> blocks;
  std::vector<std::string> warnings;  // pole skips
};

/// Huber-robustified sun cost: u^2 for u <= delta, 2 delta u - delta^2
/// beyond, where u is the Mahalanobis norm of the (zenith, azimuth)
/// residual. Measurements whose zenith is within 1e-6 rad of the pole are
/// skipped with a warning because azimuth is undefined there.
/// s0_per_measurement holds the base-frame sun direction per measurement
/// (callers typically pass problem.sun_world).
SunEval sun_cost(const WindowProblem& problem,
                 const std::vector<SunDirection>& s0_per_measurement);

struct WindowSolution {
  std::vector<std::int64_t> frame_ids;
  std::vector<Pose> poses;  // covariance() set on every pose
  std::map<std::int64_t, Vec3> landmarks;
  CostBreakdown breakdown;
  double initial_cost = 0.0;
  std::vector<double> cost_trace;  // cost after each accepted step
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> warnings;
};

/// Levenberg-Marquardt minimization of reprojection + prior (+ sun) over
/// the window poses and landmarks. The first pose is free, constrained
/// only by the prior term. Landmarks are marginalized by Schur complement
/// both inside the damped solves and for the final pose covariances,
/// which come from the inverse of the undamped Gauss-Newton information
/// matrix. Accepted steps never increase the cost. Throws SolverDiverged
/// when no damping level yields a decrease, RankDeficient when the
/// marginalized information matrix is not invertible, ConfigInvalid on a
/// malformed problem (misaligned fields, non-PD prior covariance, or a
/// landmark observed fewer than two times in the window).
WindowSolution solve_window(const WindowProblem& problem);

/// The refined pose of the given frame and its marginal 6x6 covariance,
/// to be used as the next window's prior. The covariance is transported
/// into the pose's right-offset tangent to match the prior residual
/// convention. Throws FrameNotInWindow.
std::pair<Pose, Mat6> propagate_prior(const WindowSolution& solution,
                                      std::int64_t next_window_first_frame);

/// Assembles one window's problem from a dataset: frames
/// [first_frame_index, first_frame_index + frame_count) with the given
/// pose guesses, landmarks taken from tracks observed at least twice
/// within the window and initialized by triangulating the earliest
/// usable observation under its frame's guess. Observation noise comes
/// from the dataset's noise diagonal. Sun terms are not attached here.
WindowProblem make_window_problem(const SequenceDataset& dataset,
                                  std::int64_t first_frame,
                                  int frame_count,
                                  const std::vector<Pose>& pose_guesses,
                                  const Pose& prior_pose,
                                  const Mat6& prior_covariance);

enum class SunSource { kNone, kSimulated, kFile };

struct PipelineConfig {
  int window_size = 2;
  RansacConfig ransac;
  double huber_delta = 0.5;
  SolverSettings solver;
  // Near-hard anchor on the first ground-truth pose.
  Mat6 first_prior_covariance = Mat6::Identity() * 1e-6;
  // Simulated-sun parameters, used when sun_source == kSimulated.
  double sun_target_error_deg = 0.0;
  int sun_every_n = 10;
  std::uint64_t sun_seed = 0;
  ModelPrecisionParams sun_precision;
};

struct WindowReport {
  std::int64_t first_frame = 0;
  std::int64_t last_frame = 0;
  CostBreakdown breakdown;
  int sun_terms = 0;  // sun measurements attached to this window
  int iterations = 0;
  bool converged = false;
  double initial_cost = 0.0;
  std::vector<double> cost_trace;  // cost after each accepted step
  std::vector<std::string> warnings;
};

struct PipelineResult {
  std::vector<TrajectoryRow> trajectory;  // covariance set on every pose
  std::vector<WindowReport> windows;
  std::vector<std::string> warnings;  // pipeline-level (fallbacks)

  bool any_warnings() const;
};

/// Full-sequence estimate from chained windows: the first window is
/// anchored at the first ground-truth pose, each later window takes its
/// prior from the previous solution's last pose marginal. Frame-to-frame
/// initial guesses come from RANSAC alignment; pairs with no consensus
/// fall back to the previous relative motion (constant motion) with a
/// warning. Sun measurements are simulated from the ground-truth poses or
/// read from the dataset, and each measurement is attached to the single
/// window where its frame first appears. Deterministic given the seeds.
PipelineResult run_pipeline(const SequenceDataset& dataset, bool use_sun,
                            SunSource sun_source,
                            const PipelineConfig& config = PipelineConfig{});

}  // namespace sunvo

#endif  // SUNVO_WINDOW_BA_HPP

#include "sunvo/window_ba.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <utility>

#include "sunvo/errors.hpp"
#include "sunvo/solar_ephemeris.hpp"

namespace sunvo {

namespace {

constexpr double kPoleZenith = 1e-6;
constexpr double kMaxDamping = 1e10;
constexpr double kMinDamping = 1e-15;

struct ProblemIndex {
  std::map<std::int64_t, int> pose_of_frame;
  std::vector<std::int64_t> landmark_ids;  // ascending
  std::map<std::int64_t, int> index_of_landmark;
};

ProblemIndex build_index(const WindowProblem& problem) {
  ProblemIndex index;
  for (std::size_t i = 0; i < problem.frame_ids.size(); ++i) {
    index.pose_of_frame[problem.frame_ids[i]] = static_cast<int>(i);
  }
  for (const auto& [id, position] : problem.landmarks) {
    index.index_of_landmark[id] = static_cast<int>(index.landmark_ids.size());
    index.landmark_ids.push_back(id);
  }
  return index;
}

void validate_problem(const WindowProblem& problem) {
  if (problem.frame_ids.empty()) {
    throw ConfigInvalid("window has no frames");
  }
  if (problem.frame_ids.size() != problem.poses.size()) {
    throw ConfigInvalid("window has " +
                        std::to_string(problem.frame_ids.size()) +
                        " frame ids but " +
                        std::to_string(problem.poses.size()) + " poses");
  }
  for (std::size_t i = 1; i < problem.frame_ids.size(); ++i) {
    if (problem.frame_ids[i] <= problem.frame_ids[i - 1]) {
      throw ConfigInvalid("window frame ids must be strictly ascending");
    }
  }
  if (!(problem.huber_delta > 0.0)) {
    throw ConfigInvalid("huber delta must be > 0");
  }
  if (problem.settings.max_iterations < 1 ||
      !(problem.settings.gradient_tol > 0.0) ||
      !(problem.settings.step_tol > 0.0) ||
      !(problem.settings.initial_damping > 0.0)) {
    throw ConfigInvalid("solver settings must be positive");
  }
  const Eigen::LDLT<Mat6> prior_ldlt(problem.prior_covariance);
  if (prior_ldlt.info() != Eigen::Success ||
      (prior_ldlt.vectorD().array() <= 0.0).any()) {
    throw ConfigInvalid("prior covariance must be positive definite");
  }
  std::map<std::int64_t, int> seen;
  for (const StereoObservation& obs : problem.observations) {
    if (!std::count(problem.frame_ids.begin(), problem.frame_ids.end(),
                    obs.frame_id)) {
      throw ConfigInvalid("observation references frame " +
                          std::to_string(obs.frame_id) +
                          " outside the window");
    }
    if (problem.landmarks.find(obs.track_id) == problem.landmarks.end()) {
      throw ConfigInvalid("observation references unknown landmark " +
                          std::to_string(obs.track_id));
    }
    ++seen[obs.track_id];
  }
  for (const auto& [id, position] : problem.landmarks) {
    const auto it = seen.find(id);
    if (it == seen.end() || it->second < 2) {
      throw ConfigInvalid("landmark " + std::to_string(id) +
                          " is observed fewer than 2 times in the window");
    }
  }
  for (const SunMeasurement& m : problem.sun) {
    if (!std::count(problem.frame_ids.begin(), problem.frame_ids.end(),
                    m.frame_id)) {
      throw ConfigInvalid("sun measurement references frame " +
                          std::to_string(m.frame_id) +
                          " outside the window");
    }
  }
}

Mat3 observation_information(const StereoObservation& obs) {
  const double det = obs.noise.determinant();
  if (!(det > 0.0) || !obs.noise.allFinite()) {
    throw ConfigInvalid("observation noise for track " +
                        std::to_string(obs.track_id) +
                        " is not positive definite");
  }
  return obs.noise.inverse();
}

ReprojectionEval eval_reprojection(const WindowProblem& problem,
                                   const ProblemIndex& index,
                                   const std::vector<Pose>& poses,
                                   const std::vector<Vec3>& landmark_values) {
  ReprojectionEval eval;
  eval.blocks.reserve(problem.observations.size());
  for (const StereoObservation& obs : problem.observations) {
    const int pose_i = index.pose_of_frame.at(obs.frame_id);
    const int lm_i = index.index_of_landmark.at(obs.track_id);
    const Pose& pose = poses[static_cast<std::size_t>(pose_i)];
    const Vec3& p0 = landmark_values[static_cast<std::size_t>(lm_i)];
    const std::optional<Vec3> predicted =
        try_project(problem.intrinsics, transform_point(pose, p0));
    if (!predicted.has_value()) {
      std::ostringstream msg;
      msg << "frame " << obs.frame_id << " track " << obs.track_id
          << ": landmark behind camera, observation skipped";
      eval.warnings.push_back(msg.str());
      continue;
    }
    ReprojectionBlock block;
    block.frame_id = obs.frame_id;
    block.track_id = obs.track_id;
    block.pose_index = pose_i;
    block.residual = *predicted - obs.uvd();
    Landmark lm;
    lm.id = obs.track_id;
    lm.position = p0;
    const ProjectionJacobians jac =
        projection_jacobians(problem.intrinsics, pose, lm);
    block.d_pose = jac.d_pose;
    block.d_landmark = jac.d_landmark;
    block.information = observation_information(obs);
    eval.cost += block.residual.dot(block.information * block.residual);
    eval.blocks.push_back(std::move(block));
  }
  return eval;
}

PriorEval eval_prior(const WindowProblem& problem,
                     const std::vector<Pose>& poses) {
  PriorEval eval;
  eval.residual = se3_log(compose(inverse(problem.prior_pose), poses[0]));
  eval.d_pose = se3_left_jacobian_inverse(eval.residual) *
                adjoint(inverse(problem.prior_pose));
  eval.information = problem.prior_covariance.inverse();
  eval.cost = eval.residual.dot(eval.information * eval.residual);
  return eval;
}

// Rows (zenith, azimuth) of d f / d s at a unit direction, with
// f(s) = (acos(-s_y), atan2(s_x, s_z)). Caller must keep the direction
// away from the poles where both rows blow up.
Eigen::Matrix<double, 2, 3> azzen_jacobian(const Vec3& s) {
  Eigen::Matrix<double, 2, 3> j = Eigen::Matrix<double, 2, 3>::Zero();
  const double sin_zen = std::sqrt(std::max(1.0 - s.y() * s.y(), 0.0));
  j(0, 1) = 1.0 / sin_zen;
  const double horiz_sq = s.x() * s.x() + s.z() * s.z();
  j(1, 0) = s.z() / horiz_sq;
  j(1, 2) = -s.x() / horiz_sq;
  return j;
}

SunEval eval_sun(const WindowProblem& problem, const ProblemIndex& index,
                 const std::vector<SunDirection>& s0_per_measurement,
                 const std::vector<Pose>& poses) {
  if (problem.sun.size() != s0_per_measurement.size()) {
    throw ConfigInvalid("sun_cost needs one base-frame direction per "
                        "measurement");
  }
  SunEval eval;
  const double delta = problem.huber_delta;
  for (std::size_t m = 0; m < problem.sun.size(); ++m) {
    const SunMeasurement& meas = problem.sun[m];
    const int pose_i = index.pose_of_frame.at(meas.frame_id);
    const Pose& pose = poses[static_cast<std::size_t>(pose_i)];
    const SunDirection expected =
        expected_sun_in_camera(pose, s0_per_measurement[m].normalized());
    const AzimuthZenith measured_az = vec_to_azzen(meas.direction);
    const AzimuthZenith expected_az = vec_to_azzen(expected);
    // Azimuth is undefined along the camera y axis, at either end.
    const bool measured_polar = measured_az.zenith < kPoleZenith ||
                                measured_az.zenith > M_PI - kPoleZenith;
    const bool expected_polar = expected_az.zenith < kPoleZenith ||
                                expected_az.zenith > M_PI - kPoleZenith;
    if (measured_polar || expected_polar) {
      std::ostringstream msg;
      msg << "sun measurement at frame " << meas.frame_id
          << ": direction at the azimuth pole, measurement skipped";
      eval.warnings.push_back(msg.str());
      continue;
    }
    const double det = meas.covariance.determinant();
    if (!(det > 0.0) || !meas.covariance.allFinite()) {
      throw ConfigInvalid("sun measurement covariance at frame " +
                          std::to_string(meas.frame_id) +
                          " is not positive definite");
    }
    SunBlock block;
    block.frame_id = meas.frame_id;
    block.pose_index = pose_i;
    block.residual =
        Vec2(measured_az.zenith - expected_az.zenith,
             wrap_angle(measured_az.azimuth - expected_az.azimuth));
    block.information = meas.covariance.inverse();
    // d(expected)/d(phi) = -skew(expected) under a left perturbation; the
    // residual subtracts f(expected), so the two signs cancel.
    block.d_pose.leftCols<3>() = azzen_jacobian(expected) * skew(expected);
    const double u = std::sqrt(
        block.residual.dot(block.information * block.residual));
    block.mahalanobis = u;
    if (u <= delta) {
      block.huber_weight = 1.0;
      eval.cost += u * u;
    } else {
      block.huber_weight = delta / u;
      eval.cost += 2.0 * delta * u - delta * delta;
    }
    eval.blocks.push_back(std::move(block));
  }
  return eval;
}

struct Evaluation {
  ReprojectionEval reproj;
  PriorEval prior;
  SunEval sun;

  CostBreakdown breakdown() const {
    CostBreakdown b;
    b.reprojection = reproj.cost;
    b.prior = prior.cost;
    b.sun = sun.cost;
    return b;
  }
  double total() const { return reproj.cost + prior.cost + sun.cost; }
};

Evaluation evaluate(const WindowProblem& problem, const ProblemIndex& index,
                    const std::vector<Pose>& poses,
                    const std::vector<Vec3>& landmark_values) {
  Evaluation out;
  out.reproj = eval_reprojection(problem, index, poses, landmark_values);
  out.prior = eval_prior(problem, poses);
  out.sun = eval_sun(problem, index, problem.sun_world, poses);
  return out;
}

// Gauss-Newton normal equations in block form: dense pose-pose and
// pose-landmark coupling plus a block-diagonal landmark-landmark part.
// Landmarks without a single usable observation at this linearization are
// left out of the system entirely (their values are frozen).
struct NormalEquations {
  Eigen::MatrixXd h_pp;
  Eigen::MatrixXd h_pl;
  std::vector<Mat3> h_ll;
  Eigen::VectorXd g_p;
  Eigen::VectorXd g_l;
  std::vector<bool> landmark_active;
};

NormalEquations assemble(const Evaluation& eval, const ProblemIndex& index,
                         int pose_count) {
  NormalEquations eq;
  const int landmark_count = static_cast<int>(index.landmark_ids.size());
  const int pose_dim = 6 * pose_count;
  const int lm_dim = 3 * landmark_count;
  eq.h_pp = Eigen::MatrixXd::Zero(pose_dim, pose_dim);
  eq.h_pl = Eigen::MatrixXd::Zero(pose_dim, lm_dim);
  eq.h_ll.assign(static_cast<std::size_t>(landmark_count), Mat3::Zero());
  eq.g_p = Eigen::VectorXd::Zero(pose_dim);
  eq.g_l = Eigen::VectorXd::Zero(lm_dim);
  eq.landmark_active.assign(static_cast<std::size_t>(landmark_count), false);

  for (const ReprojectionBlock& block : eval.reproj.blocks) {
    const int pi = 6 * block.pose_index;
    const int li = index.index_of_landmark.at(block.track_id);
    const Eigen::Matrix<double, 3, 6> wjp = block.information * block.d_pose;
    const Mat3 wjl = block.information * block.d_landmark;
    eq.h_pp.block<6, 6>(pi, pi) += block.d_pose.transpose() * wjp;
    eq.h_pl.block<6, 3>(pi, 3 * li) += block.d_pose.transpose() * wjl;
    eq.h_ll[static_cast<std::size_t>(li)] +=
        block.d_landmark.transpose() * wjl;
    eq.g_p.segment<6>(pi) += block.d_pose.transpose() *
                             (block.information * block.residual);
    eq.g_l.segment<3>(3 * li) += block.d_landmark.transpose() *
                                 (block.information * block.residual);
    eq.landmark_active[static_cast<std::size_t>(li)] = true;
  }
  eq.h_pp.topLeftCorner<6, 6>() +=
      eval.prior.d_pose.transpose() * eval.prior.information *
      eval.prior.d_pose;
  eq.g_p.head<6>() += eval.prior.d_pose.transpose() *
                      (eval.prior.information * eval.prior.residual);
  for (const SunBlock& block : eval.sun.blocks) {
    const int pi = 6 * block.pose_index;
    const double w = block.huber_weight;
    eq.h_pp.block<6, 6>(pi, pi) +=
        w * block.d_pose.transpose() * block.information * block.d_pose;
    eq.g_p.segment<6>(pi) += w * block.d_pose.transpose() *
                             (block.information * block.residual);
  }
  return eq;
}

}  // namespace

ReprojectionEval reprojection_cost(const WindowProblem& problem) {
  validate_problem(problem);
  const ProblemIndex index = build_index(problem);
  std::vector<Vec3> values;
  values.reserve(index.landmark_ids.size());
  for (const std::int64_t id : index.landmark_ids) {
    values.push_back(problem.landmarks.at(id));
  }
  return eval_reprojection(problem, index, problem.poses, values);
}

PriorEval prior_cost(const WindowProblem& problem) {
  validate_problem(problem);
  return eval_prior(problem, problem.poses);
}

SunEval sun_cost(const WindowProblem& problem,
                 const std::vector<SunDirection>& s0_per_measurement) {
  validate_problem(problem);
  const ProblemIndex index = build_index(problem);
  return eval_sun(problem, index, s0_per_measurement, problem.poses);
}

namespace {

// Eliminates the landmark blocks, leaving the reduced pose system
// s * delta_p = -rhs. With damping > 0 the scaled diagonal is added to
// both the pose and landmark parts first. Returns false when a landmark
// block cannot be factored, which damping cannot fix because it only
// scales the existing diagonal.
bool reduce_landmarks(const NormalEquations& eq, double damping,
                      std::vector<Mat3>* landmark_ldlt_out,
                      Eigen::MatrixXd* s, Eigen::VectorXd* rhs) {
  *s = eq.h_pp;
  if (damping > 0.0) {
    s->diagonal() += damping * eq.h_pp.diagonal();
  }
  *rhs = eq.g_p;
  landmark_ldlt_out->assign(eq.h_ll.size(), Mat3::Zero());
  for (std::size_t j = 0; j < eq.h_ll.size(); ++j) {
    if (!eq.landmark_active[j]) {
      continue;
    }
    Mat3 damped = eq.h_ll[j];
    if (damping > 0.0) {
      damped.diagonal() += damping * eq.h_ll[j].diagonal();
    }
    const Eigen::LDLT<Mat3> ldlt(damped);
    if (ldlt.info() != Eigen::Success ||
        (ldlt.vectorD().array() <= 0.0).any()) {
      return false;
    }
    const Mat3 inv = ldlt.solve(Mat3::Identity());
    if (!inv.allFinite()) {
      return false;
    }
    (*landmark_ldlt_out)[j] = inv;
    const int lj = 3 * static_cast<int>(j);
    const auto h_pl_j = eq.h_pl.middleCols<3>(lj);
    *s -= h_pl_j * inv * h_pl_j.transpose();
    *rhs -= h_pl_j * (inv * eq.g_l.segment<3>(lj));
  }
  return true;
}

}  // namespace

WindowSolution solve_window(const WindowProblem& problem) {
  validate_problem(problem);
  if (problem.sun.size() != problem.sun_world.size()) {
    throw ConfigInvalid("sun_world must hold one base-frame direction per "
                        "sun measurement");
  }
  const ProblemIndex index = build_index(problem);
  const int pose_count = static_cast<int>(problem.poses.size());
  const int landmark_count = static_cast<int>(index.landmark_ids.size());

  std::vector<Pose> poses = problem.poses;
  std::vector<Vec3> values;
  values.reserve(index.landmark_ids.size());
  for (const std::int64_t id : index.landmark_ids) {
    values.push_back(problem.landmarks.at(id));
  }

  Evaluation eval = evaluate(problem, index, poses, values);
  double cost = eval.total();
  if (!std::isfinite(cost)) {
    throw SolverDiverged("initial window cost is not finite");
  }

  WindowSolution solution;
  solution.frame_ids = problem.frame_ids;
  solution.initial_cost = cost;

  double damping = problem.settings.initial_damping;
  bool converged = false;
  int assemblies = 0;

  for (int iter = 0; iter < problem.settings.max_iterations && !converged;
       ++iter) {
    const NormalEquations eq = assemble(eval, index, pose_count);
    ++assemblies;
    const double gradient_norm =
        2.0 * std::sqrt(eq.g_p.squaredNorm() + eq.g_l.squaredNorm());
    if (gradient_norm < problem.settings.gradient_tol) {
      converged = true;
      break;
    }

    bool stepped = false;
    while (!stepped) {
      std::vector<Mat3> lm_inv;
      Eigen::MatrixXd s;
      Eigen::VectorXd rhs;
      Eigen::VectorXd step_p;
      Eigen::VectorXd step_l =
          Eigen::VectorXd::Zero(3 * landmark_count);
      bool solved = reduce_landmarks(eq, damping, &lm_inv, &s, &rhs);
      if (solved) {
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
        solved = ldlt.info() == Eigen::Success;
        if (solved) {
          step_p = ldlt.solve(-rhs);
          solved = step_p.allFinite();
        }
      }
      if (solved) {
        for (std::size_t j = 0; j < eq.h_ll.size(); ++j) {
          if (!eq.landmark_active[j]) {
            continue;
          }
          const int lj = 3 * static_cast<int>(j);
          const auto h_pl_j = eq.h_pl.middleCols<3>(lj);
          step_l.segment<3>(lj) =
              -lm_inv[j] *
              (eq.g_l.segment<3>(lj) + h_pl_j.transpose() * step_p);
        }
        solved = step_l.allFinite();
      }
      if (solved) {
        const double step_norm = std::sqrt(step_p.squaredNorm() +
                                           step_l.squaredNorm());
        // An accepted-state step below tolerance means the quadratic
        // model has no room left; report convergence at the current
        // state instead of failing the descent test on roundoff.
        if (step_norm < problem.settings.step_tol) {
          converged = true;
          break;
        }
        std::vector<Pose> cand_poses = poses;
        for (int i = 0; i < pose_count; ++i) {
          cand_poses[static_cast<std::size_t>(i)] =
              compose(se3_exp(step_p.segment<6>(6 * i)),
                      cand_poses[static_cast<std::size_t>(i)]);
          cand_poses[static_cast<std::size_t>(i)].reorthonormalize();
        }
        std::vector<Vec3> cand_values = values;
        for (int j = 0; j < landmark_count; ++j) {
          cand_values[static_cast<std::size_t>(j)] +=
              step_l.segment<3>(3 * j);
        }
        Evaluation cand = evaluate(problem, index, cand_poses, cand_values);
        const double cand_cost = cand.total();
        if (std::isfinite(cand_cost) && cand_cost < cost) {
          poses = std::move(cand_poses);
          values = std::move(cand_values);
          eval = std::move(cand);
          cost = cand_cost;
          solution.cost_trace.push_back(cost);
          damping = std::max(damping * 0.2, kMinDamping);
          stepped = true;
          break;
        }
      }
      damping *= 10.0;
      if (damping > kMaxDamping) {
        throw SolverDiverged(
            "no damping value yields a cost reduction (cost " +
            std::to_string(cost) + ")");
      }
    }
  }

  // Marginal pose covariance comes from the undamped normal equations at
  // the final state.
  const NormalEquations eq = assemble(eval, index, pose_count);
  std::vector<Mat3> lm_inv;
  Eigen::MatrixXd s;
  Eigen::VectorXd rhs;
  if (!reduce_landmarks(eq, 0.0, &lm_inv, &s, &rhs)) {
    throw RankDeficient(
        "landmark information block singular at the solution");
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
  bool cov_ok = ldlt.info() == Eigen::Success;
  Eigen::MatrixXd cov;
  if (cov_ok) {
    cov = ldlt.solve(Eigen::MatrixXd::Identity(6 * pose_count,
                                               6 * pose_count));
    cov_ok = cov.allFinite();
  }
  if (cov_ok) {
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    const double residual =
        (s * cov -
         Eigen::MatrixXd::Identity(6 * pose_count, 6 * pose_count))
            .cwiseAbs()
            .maxCoeff();
    cov_ok = residual < 1e-6 * scale;
  }
  if (!cov_ok) {
    throw RankDeficient(
        "pose information matrix is singular; window underconstrained");
  }
  cov = 0.5 * (cov + cov.transpose()).eval();
  for (int i = 0; i < pose_count; ++i) {
    const Mat6 block = cov.block<6, 6>(6 * i, 6 * i);
    poses[static_cast<std::size_t>(i)].set_covariance(
        0.5 * (block + block.transpose()));
  }

  solution.poses = std::move(poses);
  for (std::size_t j = 0; j < index.landmark_ids.size(); ++j) {
    solution.landmarks[index.landmark_ids[j]] = values[j];
  }
  solution.breakdown = eval.breakdown();
  solution.converged = converged;
  solution.iterations = assemblies;
  solution.warnings = eval.reproj.warnings;
  solution.warnings.insert(solution.warnings.end(),
                           eval.sun.warnings.begin(),
                           eval.sun.warnings.end());
  return solution;
}

std::pair<Pose, Mat6> propagate_prior(const WindowSolution& solution,
                                      std::int64_t frame_id) {
  for (std::size_t i = 0; i < solution.frame_ids.size(); ++i) {
    if (solution.frame_ids[i] != frame_id) {
      continue;
    }
    const Pose& pose = solution.poses[i];
    if (!pose.covariance().has_value()) {
      throw RankDeficient("solution pose at frame " +
                          std::to_string(frame_id) +
                          " carries no covariance");
    }
    // The stored marginal is a left-perturbation covariance; the prior
    // residual log(prior^-1 * estimate) measures a right offset of the
    // prior pose, so transport by the inverse adjoint.
    const Mat6 cov =
        transform_covariance(inverse(pose), *pose.covariance());
    Pose prior(pose.rotation(), pose.translation());
    return {prior, cov};
  }
  throw FrameNotInWindow("frame " + std::to_string(frame_id) +
                         " is not part of the solved window");
}

WindowProblem make_window_problem(const SequenceDataset& dataset,
                                  std::int64_t first_frame,
                                  int frame_count,
                                  const std::vector<Pose>& pose_guesses,
                                  const Pose& prior_pose,
                                  const Mat6& prior_covariance) {
  if (frame_count < 1) {
    throw ConfigInvalid("window needs at least one frame");
  }
  if (first_frame < 0 ||
      first_frame + frame_count >
          static_cast<std::int64_t>(dataset.frame_count())) {
    throw ConfigInvalid("window [" + std::to_string(first_frame) + ", " +
                        std::to_string(first_frame + frame_count - 1) +
                        "] falls outside the sequence");
  }
  if (pose_guesses.size() != static_cast<std::size_t>(frame_count)) {
    throw ConfigInvalid("need one pose guess per window frame");
  }

  WindowProblem problem;
  problem.intrinsics = dataset.intrinsics;
  problem.prior_pose = prior_pose;
  problem.prior_covariance = prior_covariance;
  for (int i = 0; i < frame_count; ++i) {
    problem.frame_ids.push_back(first_frame + i);
  }
  problem.poses = pose_guesses;

  const Mat3 noise = dataset.observation_noise_diag.asDiagonal();
  std::map<std::int64_t, std::vector<StereoObservation>> per_track;
  for (const std::int64_t frame : problem.frame_ids) {
    for (const StereoObservation& obs : dataset.tracks.frame(frame)) {
      per_track[obs.track_id].push_back(obs);
    }
  }
  for (auto& [track_id, observations] : per_track) {
    if (observations.size() < 2) {
      continue;
    }
    // Initialize from the earliest observation with enough disparity,
    // back-projected through that frame's pose guess.
    const StereoObservation* seed = nullptr;
    for (const StereoObservation& obs : observations) {
      if (obs.d > dataset.intrinsics.d_min) {
        seed = &obs;
        break;
      }
    }
    if (seed == nullptr) {
      continue;
    }
    const Vec3 p_cam = triangulate(dataset.intrinsics, seed->uvd());
    const Pose& guess =
        pose_guesses[static_cast<std::size_t>(seed->frame_id - first_frame)];
    problem.landmarks[track_id] = transform_point(inverse(guess), p_cam);
    for (StereoObservation obs : observations) {
      obs.noise = noise;
      problem.observations.push_back(obs);
    }
  }
  return problem;
}

bool PipelineResult::any_warnings() const {
  if (!warnings.empty()) {
    return true;
  }
  for (const WindowReport& report : windows) {
    if (!report.warnings.empty()) {
      return true;
    }
  }
  return false;
}

PipelineResult run_pipeline(const SequenceDataset& dataset, bool use_sun,
                            SunSource sun_source,
                            const PipelineConfig& config) {
  if (config.window_size < 2) {
    throw ConfigInvalid("window size must be at least 2");
  }
  const std::int64_t n = static_cast<std::int64_t>(dataset.frame_count());
  if (n < 2) {
    throw ConfigInvalid("sequence needs at least two frames");
  }
  if (use_sun && sun_source == SunSource::kNone) {
    throw ConfigInvalid("sun fusion requested without a measurement source");
  }

  std::vector<SunMeasurement> sun;
  if (use_sun) {
    if (sun_source == SunSource::kSimulated) {
      sun = simulate_sun_measurements(
          dataset.gt_poses, dataset.timestamps, dataset.anchor,
          config.sun_target_error_deg, config.sun_every_n, config.sun_seed,
          config.sun_precision);
    } else {
      sun = dataset.sun;
      if (sun.empty()) {
        throw ConfigInvalid("dataset carries no sun measurements");
      }
    }
  }
  std::vector<SunDirection> sun_world(sun.size());
  for (std::size_t m = 0; m < sun.size(); ++m) {
    const std::int64_t frame = sun[m].frame_id;
    if (frame < 0 || frame >= n) {
      throw ConfigInvalid("sun measurement at frame " +
                          std::to_string(frame) +
                          " falls outside the sequence");
    }
    GeodeticAnchor at_frame = dataset.anchor;
    at_frame.timestamp = dataset.timestamps[static_cast<std::size_t>(frame)];
    sun_world[m] = sun_direction_enu(at_frame);
  }

  PipelineResult result;

  // Frame-to-frame estimates are shared between overlapping windows, so
  // compute each one once. A failed pair falls back to the previous
  // relative motion (identity for the first pair).
  std::vector<Pose> relatives(static_cast<std::size_t>(n - 1));
  for (std::int64_t k = 0; k + 1 < n; ++k) {
    try {
      relatives[static_cast<std::size_t>(k)] =
          ransac_frame_alignment(dataset.tracks, dataset.intrinsics, k,
                                 k + 1, config.ransac)
              .relative;
    } catch (const InsufficientTracks& e) {
      relatives[static_cast<std::size_t>(k)] =
          k > 0 ? relatives[static_cast<std::size_t>(k - 1)] : Pose();
      result.warnings.push_back(
          "frames " + std::to_string(k) + "->" + std::to_string(k + 1) +
          ": " + e.what() + "; constant-motion fallback applied");
    } catch (const NoConsensus& e) {
      relatives[static_cast<std::size_t>(k)] =
          k > 0 ? relatives[static_cast<std::size_t>(k - 1)] : Pose();
      result.warnings.push_back(
          "frames " + std::to_string(k) + "->" + std::to_string(k + 1) +
          ": " + e.what() + "; constant-motion fallback applied");
    }
  }

  Pose prior_pose(dataset.gt_poses[0].rotation(),
                  dataset.gt_poses[0].translation());
  Mat6 prior_covariance = config.first_prior_covariance;

  std::int64_t start = 0;
  while (true) {
    const std::int64_t last =
        std::min(start + config.window_size - 1, n - 1);
    const int count = static_cast<int>(last - start + 1);

    const std::vector<Pose> window_relatives(
        relatives.begin() + start, relatives.begin() + last);
    const std::vector<Pose> guesses =
        compound_window_guess(prior_pose, window_relatives);

    WindowProblem problem = make_window_problem(
        dataset, start, count, guesses, prior_pose, prior_covariance);
    problem.huber_delta = config.huber_delta;
    problem.settings = config.solver;
    if (use_sun) {
      // Each measurement enters exactly one window: the first window it
      // appears in. Later windows reuse its information only through the
      // propagated prior, never as a second direct constraint.
      const std::int64_t new_from = start == 0 ? 0 : start + 1;
      for (std::size_t m = 0; m < sun.size(); ++m) {
        if (sun[m].frame_id >= new_from && sun[m].frame_id <= last) {
          problem.sun.push_back(sun[m]);
          problem.sun_world.push_back(sun_world[m]);
        }
      }
    }

    const WindowSolution solution = solve_window(problem);

    WindowReport report;
    report.first_frame = start;
    report.last_frame = last;
    report.breakdown = solution.breakdown;
    report.sun_terms = static_cast<int>(problem.sun.size());
    report.iterations = solution.iterations;
    report.converged = solution.converged;
    report.initial_cost = solution.initial_cost;
    report.cost_trace = solution.cost_trace;
    report.warnings = solution.warnings;
    result.windows.push_back(std::move(report));

    // Frame `start` was already emitted by the previous window (or is the
    // anchored first frame of the sequence), so emit the rest.
    const std::size_t emit_from = start == 0 ? 0 : 1;
    for (std::size_t i = emit_from; i < solution.frame_ids.size(); ++i) {
      TrajectoryRow row;
      row.frame_id = solution.frame_ids[i];
      row.pose = solution.poses[i];
      result.trajectory.push_back(std::move(row));
    }

    if (last == n - 1) {
      break;
    }
    const auto [next_pose, next_cov] = propagate_prior(solution, last);
    prior_pose = next_pose;
    prior_covariance = next_cov;
    start += config.window_size - 1;
  }
  return result;
}

}  // namespace sunvo

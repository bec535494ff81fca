#include "sunvo/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/LU>

#include "json.hpp"
#include "sunvo/dataset.hpp"
#include "sunvo/errors.hpp"

namespace sunvo {

namespace {

constexpr double kRadToDeg = 180.0 / M_PI;

void check_aligned(std::size_t est, std::size_t gt, const char* what) {
  if (est != gt) {
    throw LengthMismatch(std::string(what) + ": " + std::to_string(est) +
                         " vs " + std::to_string(gt));
  }
  if (est == 0) {
    throw EmptySequence(std::string(what) + ": nothing to evaluate");
  }
}

// Camera center in the base frame for a world-to-camera pose.
Vec3 camera_center(const Pose& pose) {
  return -(pose.rotation().transpose() * pose.translation());
}

std::vector<double> running_rms(const std::vector<double>& sq_norms) {
  std::vector<double> out;
  out.reserve(sq_norms.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < sq_norms.size(); ++t) {
    sum += sq_norms[t];
    out.push_back(std::sqrt(sum / static_cast<double>(t + 1)));
  }
  return out;
}

ColumnStats column_stats(std::vector<double> values) {
  ColumnStats stats;
  const std::size_t n = values.size();
  if (n == 0) {
    return stats;
  }
  double sum = 0.0;
  for (const double v : values) sum += v;
  stats.mean = sum / static_cast<double>(n);
  std::sort(values.begin(), values.end());
  stats.median = n % 2 == 1
                     ? values[n / 2]
                     : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  if (n >= 2) {
    double acc = 0.0;
    for (const double v : values) {
      acc += (v - stats.mean) * (v - stats.mean);
    }
    stats.stdev = std::sqrt(acc / static_cast<double>(n - 1));
  }
  return stats;
}

nlohmann::ordered_json stats_json(const ColumnStats& stats) {
  return {{"mean", stats.mean},
          {"median", stats.median},
          {"stdev", stats.stdev}};
}

void csv_rows(std::ostringstream& out, const char* metric,
              const std::vector<std::int64_t>& ids,
              const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << metric << ',' << ids[i] << ',' << format_double(values[i])
        << '\n';
  }
}

}  // namespace

TrajectoryErrorReport trajectory_errors(const std::vector<Pose>& est,
                                        const std::vector<Pose>& gt) {
  check_aligned(est.size(), gt.size(), "trajectories");
  TrajectoryErrorReport report;
  const std::size_t n = est.size();
  report.translational.reserve(n);
  report.rotational.reserve(n);
  std::vector<double> sq_trans(n), sq_trans_en(n), sq_rot(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec3 dt = camera_center(est[k]) - camera_center(gt[k]);
    const Vec3 dr =
        so3_log(gt[k].rotation().transpose() * est[k].rotation());
    report.translational.push_back(dt);
    report.rotational.push_back(dr);
    sq_trans[k] = dt.squaredNorm();
    sq_trans_en[k] = dt.head<2>().squaredNorm();
    sq_rot[k] = dr.squaredNorm();
  }
  report.crmse_trans = running_rms(sq_trans);
  report.crmse_rot = running_rms(sq_rot);
  report.trans_armse = report.crmse_trans.back();
  report.rot_armse = report.crmse_rot.back();
  report.trans_armse_en = running_rms(sq_trans_en).back();
  return report;
}

CrmseSeries crmse_series(const std::vector<Pose>& est,
                         const std::vector<Pose>& gt) {
  const TrajectoryErrorReport report = trajectory_errors(est, gt);
  CrmseSeries series;
  series.translational = report.crmse_trans;
  series.rotational = report.crmse_rot;
  return series;
}

SunErrorReport sun_errors(const std::vector<SunMeasurement>& measured,
                          const std::vector<SunDirection>& gt_dirs) {
  check_aligned(measured.size(), gt_dirs.size(), "sun measurements");
  SunErrorReport report;
  const std::size_t n = measured.size();
  double anees_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const SunDirection m = measured[i].direction.normalized();
    const SunDirection g = gt_dirs[i].normalized();
    const AzimuthZenith am = vec_to_azzen(m);
    const AzimuthZenith ag = vec_to_azzen(g);
    const double zen_err = am.zenith - ag.zenith;
    const double az_err = wrap_angle(am.azimuth - ag.azimuth);
    const double dot = std::clamp(m.dot(g), -1.0, 1.0);
    report.frame_ids.push_back(measured[i].frame_id);
    report.zenith_error_deg.push_back(zen_err * kRadToDeg);
    report.azimuth_error_deg.push_back(az_err * kRadToDeg);
    report.vector_angle_deg.push_back(std::acos(dot) * kRadToDeg);
    // Outlier gate from the consistency protocol: only directions within
    // cosine distance 0.3 of truth enter the ANEES.
    if (1.0 - dot < 0.3) {
      const Vec2 e(zen_err, az_err);
      anees_sum += e.dot(measured[i].covariance.inverse() * e) / 2.0;
      ++report.anees_count;
    }
  }
  report.zenith_stats = column_stats(report.zenith_error_deg);
  report.azimuth_stats = column_stats(report.azimuth_error_deg);
  report.vector_stats = column_stats(report.vector_angle_deg);
  if (report.anees_count > 0) {
    report.anees = anees_sum / static_cast<double>(report.anees_count);
  }
  return report;
}

RunComparison compare_runs(const TrajectoryErrorReport& a,
                           const TrajectoryErrorReport& b) {
  const auto improvement = [](double base, double other) {
    return base == 0.0 ? 0.0 : 100.0 * (base - other) / base;
  };
  RunComparison cmp;
  cmp.trans_improvement_pct = improvement(a.trans_armse, b.trans_armse);
  cmp.trans_en_improvement_pct =
      improvement(a.trans_armse_en, b.trans_armse_en);
  cmp.rot_improvement_pct = improvement(a.rot_armse, b.rot_armse);
  return cmp;
}

std::string trajectory_report_json(const TrajectoryErrorReport& report) {
  nlohmann::ordered_json j;
  j["trans_armse_m"] = report.trans_armse;
  j["trans_armse_en_m"] = report.trans_armse_en;
  j["rot_armse_rad"] = report.rot_armse;
  j["frames"] = report.translational.size();
  auto& trans = j["translational_error_m"] = nlohmann::json::array();
  for (const Vec3& e : report.translational) {
    trans.push_back({e.x(), e.y(), e.z()});
  }
  auto& rot = j["rotational_error_rad"] = nlohmann::json::array();
  for (const Vec3& e : report.rotational) {
    rot.push_back({e.x(), e.y(), e.z()});
  }
  j["crmse_trans_m"] = report.crmse_trans;
  j["crmse_rot_rad"] = report.crmse_rot;
  return j.dump(2);
}

std::string sun_report_json(const SunErrorReport& report) {
  nlohmann::ordered_json j;
  j["measurements"] = report.frame_ids.size();
  j["zenith_error_deg"] = stats_json(report.zenith_stats);
  j["azimuth_error_deg"] = stats_json(report.azimuth_stats);
  j["vector_angle_deg"] = stats_json(report.vector_stats);
  j["anees"] = report.anees;
  j["anees_count"] = report.anees_count;
  j["frame_ids"] = report.frame_ids;
  j["per_measurement"] = {
      {"zenith_error_deg", report.zenith_error_deg},
      {"azimuth_error_deg", report.azimuth_error_deg},
      {"vector_angle_deg", report.vector_angle_deg},
  };
  return j.dump(2);
}

std::string comparison_json(const RunComparison& comparison) {
  nlohmann::ordered_json j;
  j["trans_improvement_pct"] = comparison.trans_improvement_pct;
  j["trans_en_improvement_pct"] = comparison.trans_en_improvement_pct;
  j["rot_improvement_pct"] = comparison.rot_improvement_pct;
  return j.dump(2);
}

std::string trajectory_report_csv(const TrajectoryErrorReport& report) {
  std::ostringstream out;
  out << "metric,frame_id,value\n";
  const std::size_t n = report.translational.size();
  std::vector<std::int64_t> ids(n);
  for (std::size_t k = 0; k < n; ++k) {
    ids[k] = static_cast<std::int64_t>(k);
  }
  std::vector<double> trans_norm(n), rot_norm(n);
  for (std::size_t k = 0; k < n; ++k) {
    trans_norm[k] = report.translational[k].norm();
    rot_norm[k] = report.rotational[k].norm();
  }
  csv_rows(out, "trans_error_m", ids, trans_norm);
  csv_rows(out, "rot_error_rad", ids, rot_norm);
  csv_rows(out, "crmse_trans_m", ids, report.crmse_trans);
  csv_rows(out, "crmse_rot_rad", ids, report.crmse_rot);
  return out.str();
}

std::string sun_report_csv(const SunErrorReport& report) {
  std::ostringstream out;
  out << "metric,frame_id,value\n";
  csv_rows(out, "zenith_error_deg", report.frame_ids,
           report.zenith_error_deg);
  csv_rows(out, "azimuth_error_deg", report.frame_ids,
           report.azimuth_error_deg);
  csv_rows(out, "vector_angle_deg", report.frame_ids,
           report.vector_angle_deg);
  return out.str();
}

}  // namespace sunvo

#ifndef SUNVO_EVALUATION_HPP
#define SUNVO_EVALUATION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "sunvo/se3.hpp"
#include "sunvo/solar_ephemeris.hpp"
#include "sunvo/sun_sensing.hpp"

namespace sunvo {

/// Per-frame discrepancies between an estimated and a ground-truth
/// trajectory of T_{k,0} poses, plus their summaries. Positions are
/// camera centers in the base ENU frame, so translational error
/// components read (East, North, Up); the EN-plane variant drops Up.
/// ARMSE is the root of the mean squared per-frame error norm. The
/// CRMSE entry at index t is that same RMS restricted to frames 0..t,
/// so its final entry equals the ARMSE.
struct TrajectoryErrorReport {
  std::vector<Vec3> translational;  // est center minus gt center (m)
  std::vector<Vec3> rotational;     // so3_log(R_gt^T R_est) (rad)
  double trans_armse = 0.0;         // m
  double trans_armse_en = 0.0;      // m, Up component dropped
  double rot_armse = 0.0;           // rad
  std::vector<double> crmse_trans;  // m, running through frame t
  std::vector<double> crmse_rot;    // rad, running through frame t
};

/// Throws LengthMismatch when the sequences differ in length and
/// EmptySequence when they are empty. A relative rotation at the SO(3)
/// cut (180 degrees) propagates AngleNearPi.
TrajectoryErrorReport trajectory_errors(const std::vector<Pose>& est,
                                        const std::vector<Pose>& gt);

struct CrmseSeries {
  std::vector<double> translational;  // m
  std::vector<double> rotational;     // rad
};

/// Running RMS of per-frame error norms: entry t covers frames 0..t.
CrmseSeries crmse_series(const std::vector<Pose>& est,
                         const std::vector<Pose>& gt);

struct ColumnStats {
  double mean = 0.0;
  double median = 0.0;
  double stdev = 0.0;  // sample standard deviation, 0 for fewer than 2
};

/// Per-measurement sun direction errors in degrees (zenith and azimuth
/// signed, azimuth wrapped to (-180, 180]; vector angle in [0, 180]) and
/// the normalized estimation error squared over the subset of
/// measurements with cosine distance to truth below 0.3:
/// ANEES = mean of e^T R_s^-1 e / 2 with e the (zenith, azimuth)
/// residual in radians, so consistent covariances give values near 1.
struct SunErrorReport {
  std::vector<std::int64_t> frame_ids;
  std::vector<double> zenith_error_deg;
  std::vector<double> azimuth_error_deg;
  std::vector<double> vector_angle_deg;
  ColumnStats zenith_stats;
  ColumnStats azimuth_stats;
  ColumnStats vector_stats;
  double anees = 0.0;
  std::size_t anees_count = 0;  // measurements inside the cosine gate
};

/// Throws LengthMismatch when the lists differ in length and
/// EmptySequence when they are empty.
SunErrorReport sun_errors(const std::vector<SunMeasurement>& measured,
                          const std::vector<SunDirection>& gt_dirs);

/// Percent improvement of run b over run a, 100 * (a - b) / a per
/// metric; 0 when the baseline metric is exactly 0.
struct RunComparison {
  double trans_improvement_pct = 0.0;
  double trans_en_improvement_pct = 0.0;
  double rot_improvement_pct = 0.0;
};

RunComparison compare_runs(const TrajectoryErrorReport& a,
                           const TrajectoryErrorReport& b);

/// JSON documents with summary scalars and per-frame arrays; key order
/// and number formatting are deterministic, so equal reports serialize
/// byte-identically.
std::string trajectory_report_json(const TrajectoryErrorReport& report);
std::string sun_report_json(const SunErrorReport& report);
std::string comparison_json(const RunComparison& comparison);

/// Long-format tables, header "metric,frame_id,value", one row per frame
/// (or per measurement, keyed by its frame id) and metric. Values carry
/// 17 significant digits.
std::string trajectory_report_csv(const TrajectoryErrorReport& report);
std::string sun_report_csv(const SunErrorReport& report);

}  // namespace sunvo

#endif  // SUNVO_EVALUATION_HPP

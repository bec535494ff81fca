#ifndef SUNVO_DATASET_HPP
#define SUNVO_DATASET_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sunvo/se3.hpp"
#include "sunvo/solar_ephemeris.hpp"
#include "sunvo/stereo_camera.hpp"
#include "sunvo/sun_sensing.hpp"

namespace sunvo {

/// Observations grouped by frame plus the landmark positions that generated
/// them (known for synthetic scenes, empty for ingested real tracks).
/// Per-frame track ids are unique; add() enforces this.
class TrackTable {
 public:
  void add(const StereoObservation& obs);

  /// Observations for one frame; empty list when the frame has none.
  const std::vector<StereoObservation>& frame(std::int64_t frame_id) const;

  /// Track ids observed in both frames.
  std::vector<std::int64_t> shared_tracks(std::int64_t frame_a,
                                          std::int64_t frame_b) const;

  /// Drops every track seen in fewer than two frames. Solvers only accept
  /// tracks that tie at least two poses together.
  void prune_single_frame_tracks();

  const std::map<std::int64_t, std::vector<StereoObservation>>& frames()
      const {
    return frames_;
  }
  std::size_t observation_count() const;

  /// Ground-truth landmark registry, keyed by track id.
  std::map<std::int64_t, Vec3> landmarks;

 private:
  std::map<std::int64_t, std::vector<StereoObservation>> frames_;
};

/// Everything describing one drive: where and when it happened, the rig,
/// the ground-truth motion, the feature tracks, and any sun measurements.
struct SequenceDataset {
  GeodeticAnchor anchor;
  StereoIntrinsics intrinsics;
  Vec3 observation_noise_diag = Vec3(1.0, 1.0, 2.0);  // px^2, (u, v, d)
  std::vector<UtcTime> timestamps;   // one per frame, frame_id = index
  std::vector<Pose> gt_poses;        // T_{k,0}, world (F_0) to camera k
  TrackTable tracks;
  std::vector<SunMeasurement> sun;   // optional, sorted by frame_id

  std::size_t frame_count() const { return timestamps.size(); }
};

/// One output row of the pipeline: an estimated pose (T_{k,0}) whose
/// covariance, when present, is the 6x6 tangent-space marginal.
struct TrajectoryRow {
  std::int64_t frame_id = 0;
  Pose pose;
};

/// Formats a double with 17 significant digits so that reading the text
/// back reproduces the exact bits.
std::string format_double(double value);

// CSV readers and writers. All files are UTF-8 with LF line endings and a
// fixed header row. Readers throw IoError naming the file (and, for bad
// rows, the 1-based line number); writers throw IoError when the target
// cannot be created.

void write_gt_poses_csv(const std::string& path,
                        const std::vector<Pose>& poses);
std::vector<Pose> read_gt_poses_csv(const std::string& path);

void write_tracks_csv(const std::string& path, const TrackTable& tracks);
/// Observations get noise = diag(noise_diag); the file stores no covariance.
TrackTable read_tracks_csv(const std::string& path, const Vec3& noise_diag);

void write_sun_csv(const std::string& path,
                   const std::vector<SunMeasurement>& measurements);
std::vector<SunMeasurement> read_sun_csv(const std::string& path);

void write_trajectory_csv(const std::string& path,
                          const std::vector<TrajectoryRow>& rows);
std::vector<TrajectoryRow> read_trajectory_csv(const std::string& path);

/// Writes manifest.json, gt_poses.csv, tracks.csv, and (when sun
/// measurements exist) sun.csv into dir, creating it if needed.
void write_dataset(const std::string& dir, const SequenceDataset& dataset);

/// Reads the layout written by write_dataset. sun.csv is optional.
SequenceDataset read_dataset(const std::string& dir);

}  // namespace sunvo

#endif  // SUNVO_DATASET_HPP

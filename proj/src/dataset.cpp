#include "sunvo/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sunvo/errors.hpp"

namespace sunvo {

namespace {

// Upper-triangular walk order of a symmetric 6x6: (0,0)..(0,5),(1,1)..(5,5).
constexpr int kCovUpperCount = 21;

[[noreturn]] void fail_row(const std::string& path, std::size_t line,
                           const std::string& what) {
  throw IoError(path + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_double_field(const std::string& token, const std::string& path,
                          std::size_t line) {
  const char* begin = token.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    fail_row(path, line, "bad numeric field '" + token + "'");
  }
  return v;
}

std::int64_t parse_id_field(const std::string& token, const std::string& path,
                            std::size_t line) {
  const char* begin = token.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0') {
    fail_row(path, line, "bad integer field '" + token + "'");
  }
  return static_cast<std::int64_t>(v);
}

// Yields one logical line at a time, tolerating a trailing CR from files
// that passed through Windows tooling.
class LineReader {
 public:
  explicit LineReader(const std::string& path) : path_(path), in_(path) {
    if (!in_.is_open()) throw IoError("cannot open " + path);
  }

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++lineno_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  std::size_t lineno() const { return lineno_; }
  const std::string& path() const { return path_; }

  void expect_header(const std::string& header) {
    std::string line;
    if (!next(line) || line != header) {
      fail_row(path_, 1, "expected header '" + header + "'");
    }
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t lineno_ = 0;
};

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings
  if (!out.is_open()) throw IoError("cannot create " + path);
  return out;
}

void append_pose_fields(std::string& row, const Pose& pose) {
  const Eigen::Matrix<double, 3, 4> m = pose.matrix3x4();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      row += ',';
      row += format_double(m(r, c));
    }
  }
}

Pose pose_from_fields(const std::vector<std::string>& fields,
                      std::size_t offset, const std::string& path,
                      std::size_t line) {
  Mat3 rot;
  Vec3 trans;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      const double v = parse_double_field(
          fields[offset + static_cast<std::size_t>(4 * r + c)], path, line);
      if (c < 3) {
        rot(r, c) = v;
      } else {
        trans[r] = v;
      }
    }
  }
  if (!is_rotation_matrix(rot, 1e-6)) {
    fail_row(path, line, "pose rotation block is not a rotation matrix");
  }
  return Pose(rot, trans);
}

constexpr const char* kGtHeader =
    "frame_id,p00,p01,p02,p03,p10,p11,p12,p13,p20,p21,p22,p23";
constexpr const char* kTracksHeader = "frame_id,track_id,u,v,d";
constexpr const char* kSunHeader = "frame_id,sx,sy,sz,c00,c01,c10,c11";

std::string trajectory_header() {
  std::string h =
      "frame_id,p00,p01,p02,p03,p10,p11,p12,p13,p20,p21,p22,p23";
  for (int r = 0; r < 6; ++r) {
    for (int c = r; c < 6; ++c) {
      h += ",c" + std::to_string(r) + std::to_string(c);
    }
  }
  return h;
}

}  // namespace

void TrackTable::add(const StereoObservation& obs) {
  std::vector<StereoObservation>& list = frames_[obs.frame_id];
  for (const StereoObservation& existing : list) {
    if (existing.track_id == obs.track_id) {
      throw ConfigInvalid("duplicate track " + std::to_string(obs.track_id) +
                          " in frame " + std::to_string(obs.frame_id));
    }
  }
  list.push_back(obs);
}

const std::vector<StereoObservation>& TrackTable::frame(
    std::int64_t frame_id) const {
  static const std::vector<StereoObservation> kEmpty;
  const auto it = frames_.find(frame_id);
  return it == frames_.end() ? kEmpty : it->second;
}

std::vector<std::int64_t> TrackTable::shared_tracks(
    std::int64_t frame_a, std::int64_t frame_b) const {
  std::vector<std::int64_t> ids_a;
  for (const StereoObservation& obs : frame(frame_a)) {
    ids_a.push_back(obs.track_id);
  }
  std::sort(ids_a.begin(), ids_a.end());
  std::vector<std::int64_t> shared;
  for (const StereoObservation& obs : frame(frame_b)) {
    if (std::binary_search(ids_a.begin(), ids_a.end(), obs.track_id)) {
      shared.push_back(obs.track_id);
    }
  }
  std::sort(shared.begin(), shared.end());
  return shared;
}

void TrackTable::prune_single_frame_tracks() {
  std::map<std::int64_t, int> seen;
  for (const auto& [frame_id, list] : frames_) {
    for (const StereoObservation& obs : list) ++seen[obs.track_id];
  }
  for (auto& [frame_id, list] : frames_) {
    list.erase(std::remove_if(list.begin(), list.end(),
                              [&seen](const StereoObservation& obs) {
                                return seen[obs.track_id] < 2;
                              }),
               list.end());
  }
}

std::size_t TrackTable::observation_count() const {
  std::size_t n = 0;
  for (const auto& [frame_id, list] : frames_) n += list.size();
  return n;
}

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_gt_poses_csv(const std::string& path,
                        const std::vector<Pose>& poses) {
  std::ofstream out = open_for_write(path);
  out << kGtHeader << '\n';
  for (std::size_t k = 0; k < poses.size(); ++k) {
    std::string row = std::to_string(k);
    append_pose_fields(row, poses[k]);
    out << row << '\n';
  }
}

std::vector<Pose> read_gt_poses_csv(const std::string& path) {
  LineReader reader(path);
  reader.expect_header(kGtHeader);
  std::vector<Pose> poses;
  std::string line;
  while (reader.next(line)) {
    const auto fields = split_csv(line);
    if (fields.size() != 13) {
      fail_row(path, reader.lineno(), "expected 13 fields");
    }
    const std::int64_t frame_id =
        parse_id_field(fields[0], path, reader.lineno());
    if (frame_id != static_cast<std::int64_t>(poses.size())) {
      fail_row(path, reader.lineno(),
               "frame ids must be contiguous from 0, got " +
                   std::to_string(frame_id));
    }
    poses.push_back(pose_from_fields(fields, 1, path, reader.lineno()));
  }
  return poses;
}

void write_tracks_csv(const std::string& path, const TrackTable& tracks) {
  std::ofstream out = open_for_write(path);
  out << kTracksHeader << '\n';
  for (const auto& [frame_id, list] : tracks.frames()) {
    std::vector<StereoObservation> sorted = list;
    std::sort(sorted.begin(), sorted.end(),
              [](const StereoObservation& a, const StereoObservation& b) {
                return a.track_id < b.track_id;
              });
    for (const StereoObservation& obs : sorted) {
      out << frame_id << ',' << obs.track_id << ',' << format_double(obs.u)
          << ',' << format_double(obs.v) << ',' << format_double(obs.d)
          << '\n';
    }
  }
}

TrackTable read_tracks_csv(const std::string& path, const Vec3& noise_diag) {
  LineReader reader(path);
  reader.expect_header(kTracksHeader);
  TrackTable table;
  const Mat3 noise = noise_diag.asDiagonal();
  std::string line;
  while (reader.next(line)) {
    const auto fields = split_csv(line);
    if (fields.size() != 5) {
      fail_row(path, reader.lineno(), "expected 5 fields");
    }
    StereoObservation obs;
    obs.frame_id = parse_id_field(fields[0], path, reader.lineno());
    obs.track_id = parse_id_field(fields[1], path, reader.lineno());
    obs.u = parse_double_field(fields[2], path, reader.lineno());
    obs.v = parse_double_field(fields[3], path, reader.lineno());
    obs.d = parse_double_field(fields[4], path, reader.lineno());
    obs.noise = noise;
    try {
      table.add(obs);
    } catch (const ConfigInvalid& e) {
      fail_row(path, reader.lineno(), e.what());
    }
  }
  return table;
}

void write_sun_csv(const std::string& path,
                   const std::vector<SunMeasurement>& measurements) {
  std::ofstream out = open_for_write(path);
  out << kSunHeader << '\n';
  for (const SunMeasurement& m : measurements) {
    out << m.frame_id << ',' << format_double(m.direction.x()) << ','
        << format_double(m.direction.y()) << ','
        << format_double(m.direction.z()) << ','
        << format_double(m.covariance(0, 0)) << ','
        << format_double(m.covariance(0, 1)) << ','
        << format_double(m.covariance(1, 0)) << ','
        << format_double(m.covariance(1, 1)) << '\n';
  }
}

std::vector<SunMeasurement> read_sun_csv(const std::string& path) {
  LineReader reader(path);
  reader.expect_header(kSunHeader);
  std::vector<SunMeasurement> out;
  std::string line;
  while (reader.next(line)) {
    const auto fields = split_csv(line);
    if (fields.size() != 8) {
      fail_row(path, reader.lineno(), "expected 8 fields");
    }
    SunMeasurement m;
    m.frame_id = parse_id_field(fields[0], path, reader.lineno());
    for (int i = 0; i < 3; ++i) {
      m.direction[i] =
          parse_double_field(fields[static_cast<std::size_t>(1 + i)], path,
                             reader.lineno());
    }
    m.covariance(0, 0) = parse_double_field(fields[4], path, reader.lineno());
    m.covariance(0, 1) = parse_double_field(fields[5], path, reader.lineno());
    m.covariance(1, 0) = parse_double_field(fields[6], path, reader.lineno());
    m.covariance(1, 1) = parse_double_field(fields[7], path, reader.lineno());
    if (std::abs(m.direction.norm() - 1.0) > 1e-6) {
      fail_row(path, reader.lineno(), "sun direction is not unit length");
    }
    out.push_back(m);
  }
  return out;
}

void write_trajectory_csv(const std::string& path,
                          const std::vector<TrajectoryRow>& rows) {
  std::ofstream out = open_for_write(path);
  out << trajectory_header() << '\n';
  for (const TrajectoryRow& r : rows) {
    if (!r.pose.covariance().has_value()) {
      throw ConfigInvalid("trajectory row " + std::to_string(r.frame_id) +
                          " lacks a covariance");
    }
    std::string row = std::to_string(r.frame_id);
    append_pose_fields(row, r.pose);
    const Mat6& cov = *r.pose.covariance();
    for (int i = 0; i < 6; ++i) {
      for (int j = i; j < 6; ++j) {
        row += ',';
        row += format_double(cov(i, j));
      }
    }
    out << row << '\n';
  }
}

std::vector<TrajectoryRow> read_trajectory_csv(const std::string& path) {
  LineReader reader(path);
  reader.expect_header(trajectory_header());
  std::vector<TrajectoryRow> out;
  std::string line;
  while (reader.next(line)) {
    const auto fields = split_csv(line);
    if (fields.size() != 1 + 12 + kCovUpperCount) {
      fail_row(path, reader.lineno(), "expected 34 fields");
    }
    TrajectoryRow row;
    row.frame_id = parse_id_field(fields[0], path, reader.lineno());
    row.pose = pose_from_fields(fields, 1, path, reader.lineno());
    Mat6 cov;
    std::size_t at = 13;
    for (int i = 0; i < 6; ++i) {
      for (int j = i; j < 6; ++j, ++at) {
        const double v = parse_double_field(fields[at], path, reader.lineno());
        cov(i, j) = v;
        cov(j, i) = v;
      }
    }
    row.pose.set_covariance(cov);
    out.push_back(row);
  }
  return out;
}

void write_dataset(const std::string& dir, const SequenceDataset& dataset) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());

  nlohmann::json manifest;
  manifest["anchor"]["latitude_deg"] = dataset.anchor.latitude_deg;
  manifest["anchor"]["longitude_deg"] = dataset.anchor.longitude_deg;
  manifest["anchor"]["timestamp"] = dataset.anchor.timestamp.to_iso_string();
  manifest["intrinsics"]["f_u"] = dataset.intrinsics.f_u;
  manifest["intrinsics"]["f_v"] = dataset.intrinsics.f_v;
  manifest["intrinsics"]["c_u"] = dataset.intrinsics.c_u;
  manifest["intrinsics"]["c_v"] = dataset.intrinsics.c_v;
  manifest["intrinsics"]["b"] = dataset.intrinsics.b;
  manifest["intrinsics"]["z_min"] = dataset.intrinsics.z_min;
  manifest["intrinsics"]["d_min"] = dataset.intrinsics.d_min;
  manifest["observation_noise_diag"] = {dataset.observation_noise_diag.x(),
                                        dataset.observation_noise_diag.y(),
                                        dataset.observation_noise_diag.z()};
  manifest["timestamps"] = nlohmann::json::array();
  for (const UtcTime& t : dataset.timestamps) {
    manifest["timestamps"].push_back(t.to_iso_string());
  }

  const auto root = std::filesystem::path(dir);
  {
    std::ofstream out = open_for_write((root / "manifest.json").string());
    out << manifest.dump(2) << '\n';
  }
  write_gt_poses_csv((root / "gt_poses.csv").string(), dataset.gt_poses);
  write_tracks_csv((root / "tracks.csv").string(), dataset.tracks);
  if (!dataset.sun.empty()) {
    write_sun_csv((root / "sun.csv").string(), dataset.sun);
  }
}

SequenceDataset read_dataset(const std::string& dir) {
  const auto root = std::filesystem::path(dir);
  const std::string manifest_path = (root / "manifest.json").string();
  std::ifstream in(manifest_path);
  if (!in.is_open()) throw IoError("cannot open " + manifest_path);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path + ": " + e.what());
  }

  SequenceDataset ds;
  try {
    ds.anchor.latitude_deg = manifest.at("anchor").at("latitude_deg");
    ds.anchor.longitude_deg = manifest.at("anchor").at("longitude_deg");
    ds.anchor.timestamp = UtcTime::parse(
        manifest.at("anchor").at("timestamp").get<std::string>());
    const auto& intr = manifest.at("intrinsics");
    ds.intrinsics.f_u = intr.at("f_u");
    ds.intrinsics.f_v = intr.at("f_v");
    ds.intrinsics.c_u = intr.at("c_u");
    ds.intrinsics.c_v = intr.at("c_v");
    ds.intrinsics.b = intr.at("b");
    ds.intrinsics.z_min = intr.at("z_min");
    ds.intrinsics.d_min = intr.at("d_min");
    const auto& diag = manifest.at("observation_noise_diag");
    if (!diag.is_array() || diag.size() != 3) {
      throw IoError(manifest_path + ": observation_noise_diag must have 3 "
                    "entries");
    }
    for (int i = 0; i < 3; ++i) ds.observation_noise_diag[i] = diag.at(i);
    for (const auto& t : manifest.at("timestamps")) {
      ds.timestamps.push_back(UtcTime::parse(t.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path + ": " + e.what());
  }

  ds.gt_poses = read_gt_poses_csv((root / "gt_poses.csv").string());
  if (ds.gt_poses.size() != ds.timestamps.size()) {
    throw IoError(dir + ": gt_poses.csv row count does not match the "
                  "manifest timestamp count");
  }
  ds.tracks = read_tracks_csv((root / "tracks.csv").string(),
                              ds.observation_noise_diag);
  const std::string sun_path = (root / "sun.csv").string();
  if (std::filesystem::exists(sun_path)) {
    ds.sun = read_sun_csv(sun_path);
  }
  return ds;
}

}  // namespace sunvo

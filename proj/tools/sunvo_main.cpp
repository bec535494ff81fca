// Command-line front end: builds synthetic drives, simulates sun
// measurements, trains the toy dropout regressor, queries the ephemeris,
// runs the sliding-window pipeline, and evaluates trajectories.
//
// Exit codes: 0 success, 1 usage or config error, 2 completed with
// warnings, 3 runtime failure. Every command is deterministic given its
// flags, config file, and inputs; reruns produce byte-identical outputs.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sunvo/dataset.hpp"
#include "sunvo/errors.hpp"
#include "sunvo/evaluation.hpp"
#include "sunvo/se3.hpp"
#include "sunvo/solar_ephemeris.hpp"
#include "sunvo/sun_sensing.hpp"
#include "sunvo/vo_frontend.hpp"
#include "sunvo/window_ba.hpp"

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Default parent for outputs whose path was not given explicitly.
std::string output_root() {
  const char* root = std::getenv("SUNVO_OUTPUT_ROOT");
  return root != nullptr && *root != '\0' ? std::string(root)
                                          : std::string(".");
}

std::string default_out(const char* leaf) {
  return output_root() + "/" + leaf;
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) {
    return;
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw sunvo::IoError("cannot create directory " + dir + ": " +
                         ec.message());
  }
}

void ensure_parent_dir(const std::string& path) {
  ensure_dir(std::filesystem::path(path).parent_path().string());
}

void write_text_file(const std::string& path, const std::string& text) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw sunvo::IoError("cannot open " + path + " for writing");
  }
  out << text;
  if (!out) {
    throw sunvo::IoError("write failed: " + path);
  }
}

// Config files are JSON. Keys mirror the long flag names without the
// leading dashes; a top-level object named after the subcommand scopes
// keys to that command. Flags given on the command line win.
json load_config_object(const std::string& path, const std::string& command) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw sunvo::ConfigInvalid("config file not readable: " + path);
  }
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw sunvo::ConfigInvalid("config file " + path + ": " + e.what());
  }
  if (!root.is_object()) {
    throw sunvo::ConfigInvalid("config file " + path +
                               ": top level must be an object");
  }
  if (root.contains(command) && root.at(command).is_object()) {
    return root.at(command);
  }
  return root;
}

template <typename T>
void from_config(const json& cfg, const char* key, T& field) {
  if (!cfg.contains(key)) {
    return;
  }
  try {
    field = cfg.at(key).get<T>();
  } catch (const json::exception& e) {
    throw sunvo::ConfigInvalid(std::string("config key '") + key +
                               "': " + e.what());
  }
}

sunvo::Vec3 vec3_from_json(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 3) {
    throw sunvo::ConfigInvalid(std::string("config key '") + key +
                               "' must be an array of 3 numbers");
  }
  return sunvo::Vec3(j[0].get<double>(), j[1].get<double>(),
                     j[2].get<double>());
}

// Shared location/time flags. The defaults sit on a mid-latitude daytime
// anchor so a bare `simulate` produces a sun above the horizon.
struct AnchorArgs {
  double lat = 49.011;
  double lon = 8.417;
  std::string time = "2011-09-26T11:00:00Z";

  sunvo::GeodeticAnchor build() const {
    sunvo::GeodeticAnchor anchor;
    anchor.latitude_deg = lat;
    anchor.longitude_deg = lon;
    anchor.timestamp = sunvo::UtcTime::parse(time);
    return anchor;
  }

  void apply_config(const json& cfg) {
    from_config(cfg, "lat", lat);
    from_config(cfg, "lon", lon);
    from_config(cfg, "time", time);
  }

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--lat", lat, "Anchor latitude, degrees north");
    cmd->add_option("--lon", lon, "Anchor longitude, degrees east");
    cmd->add_option("--time", time, "Anchor UTC time, ISO-8601");
  }
};

ordered_json cost_json(const sunvo::CostBreakdown& c) {
  ordered_json j;
  j["reprojection"] = c.reprojection;
  j["prior"] = c.prior;
  j["sun"] = c.sun;
  j["total"] = c.total();
  return j;
}

// --- simulate ---

struct SimulateArgs {
  std::string out = default_out("dataset");
  std::string trajectory = "arc";
  int frames = 100;
  double frame_dt = 0.1;
  double arc_radius = 50.0;
  double arc_sweep = 1.0;
  std::vector<sunvo::Vec3> waypoints;  // config file only
  int landmarks = 300;
  sunvo::Vec3 landmark_min = sunvo::Vec3(-80.0, -20.0, -3.0);
  sunvo::Vec3 landmark_max = sunvo::Vec3(50.0, 100.0, 6.0);
  int image_width = 1242;
  int image_height = 375;
  double pixel_noise = 0.0;
  double outlier_fraction = 0.0;
  double d_outlier_min = 1.0;
  double d_outlier_max = 64.0;
  double yaw_rate_bias = 0.0;
  std::uint64_t seed = 0;
  AnchorArgs anchor;
};

int cmd_simulate(const SimulateArgs& args) {
  sunvo::SyntheticSceneConfig cfg;
  if (args.trajectory == "arc") {
    cfg.trajectory = sunvo::TrajectoryKind::kArc;
  } else if (args.trajectory == "waypoints") {
    cfg.trajectory = sunvo::TrajectoryKind::kWaypoints;
  } else {
    throw sunvo::ConfigInvalid("trajectory must be 'arc' or 'waypoints', got " +
                               args.trajectory);
  }
  cfg.frame_count = args.frames;
  cfg.frame_dt_s = args.frame_dt;
  cfg.arc_radius_m = args.arc_radius;
  cfg.arc_sweep_rad = args.arc_sweep;
  cfg.waypoints = args.waypoints;
  cfg.landmark_count = args.landmarks;
  cfg.landmark_min = args.landmark_min;
  cfg.landmark_max = args.landmark_max;
  cfg.intrinsics = sunvo::default_intrinsics();
  cfg.image_width = args.image_width;
  cfg.image_height = args.image_height;
  cfg.pixel_noise_sigma = args.pixel_noise;
  cfg.outlier_fraction = args.outlier_fraction;
  cfg.d_outlier_min = args.d_outlier_min;
  cfg.d_outlier_max = args.d_outlier_max;
  cfg.yaw_rate_bias_rad = args.yaw_rate_bias;
  cfg.seed = args.seed;

  const sunvo::SequenceDataset dataset =
      sunvo::generate_scene(cfg, args.anchor.build());
  sunvo::write_dataset(args.out, dataset);
  std::cout << args.out << "\n";
  return 0;
}

// --- sun-sim ---

struct SunSimArgs {
  std::string dataset;
  std::string out;  // defaults to <dataset>/sun.csv
  double target_deg = 0.0;
  int every_n = 10;
  std::uint64_t seed = 0;
  double tau_inv = 0.015;
};

int cmd_sun_sim(const SunSimArgs& args) {
  if (args.dataset.empty()) {
    throw sunvo::ConfigInvalid("--dataset is required");
  }
  const sunvo::SequenceDataset dataset = sunvo::read_dataset(args.dataset);
  sunvo::ModelPrecisionParams precision;
  precision.tau_inv = args.tau_inv;
  const std::vector<sunvo::SunMeasurement> sun =
      sunvo::simulate_sun_measurements(dataset.gt_poses, dataset.timestamps,
                                       dataset.anchor, args.target_deg,
                                       args.every_n, args.seed, precision);
  const std::string out =
      args.out.empty() ? args.dataset + "/sun.csv" : args.out;
  ensure_parent_dir(out);
  sunvo::write_sun_csv(out, sun);
  std::cout << out << "\n";
  return 0;
}

// --- ephemeris ---

int cmd_ephemeris(const AnchorArgs& args) {
  const sunvo::SunDirection enu =
      sunvo::sun_direction_enu(args.build());
  const sunvo::AzimuthZenith angles = sunvo::enu_to_azzen(enu);
  ordered_json j;
  j["azimuth_deg"] = angles.azimuth * 180.0 / M_PI;
  j["zenith_deg"] = angles.zenith * 180.0 / M_PI;
  j["enu"] = {enu.x(), enu.y(), enu.z()};
  std::cout << j.dump(2) << "\n";
  return 0;
}

// --- vo ---

struct VoArgs {
  std::string dataset;
  std::string out = default_out("vo");
  std::vector<std::string> sun;  // mode [file path]
  int window_size = 2;
  double huber_delta = 0.5;
  int max_iterations = 50;
  double gradient_tol = 1e-8;
  double step_tol = 1e-10;
  double initial_damping = 1e-4;
  int ransac_iterations = 400;
  double ransac_threshold = 2.0;
  int ransac_min_inliers = 6;
  double ransac_min_disparity = 4.0;
  std::uint64_t ransac_seed = 0;
  double prior_variance = 1e-6;
  double sun_target_deg = 0.0;
  int sun_every_n = 10;
  std::uint64_t sun_seed = 0;
  double tau_inv = 0.015;
};

int cmd_vo(const VoArgs& args) {
  if (args.dataset.empty()) {
    throw sunvo::ConfigInvalid("--dataset is required");
  }
  sunvo::SequenceDataset dataset = sunvo::read_dataset(args.dataset);

  std::string mode = args.sun.empty() ? "none" : args.sun[0];
  sunvo::SunSource source = sunvo::SunSource::kNone;
  if (mode == "none") {
    source = sunvo::SunSource::kNone;
  } else if (mode == "simulated") {
    source = sunvo::SunSource::kSimulated;
  } else if (mode == "file") {
    source = sunvo::SunSource::kFile;
    if (args.sun.size() > 1) {
      dataset.sun = sunvo::read_sun_csv(args.sun[1]);
    }
  } else {
    throw sunvo::ConfigInvalid(
        "--sun mode must be 'none', 'simulated', or 'file', got " + mode);
  }

  sunvo::PipelineConfig config;
  config.window_size = args.window_size;
  config.huber_delta = args.huber_delta;
  config.solver.max_iterations = args.max_iterations;
  config.solver.gradient_tol = args.gradient_tol;
  config.solver.step_tol = args.step_tol;
  config.solver.initial_damping = args.initial_damping;
  config.ransac.iterations = args.ransac_iterations;
  config.ransac.threshold_px = args.ransac_threshold;
  config.ransac.min_inliers = args.ransac_min_inliers;
  config.ransac.min_disparity_px = args.ransac_min_disparity;
  config.ransac.seed = args.ransac_seed;
  config.first_prior_covariance =
      sunvo::Mat6::Identity() * args.prior_variance;
  config.sun_target_error_deg = args.sun_target_deg;
  config.sun_every_n = args.sun_every_n;
  config.sun_seed = args.sun_seed;
  config.sun_precision.tau_inv = args.tau_inv;

  const sunvo::PipelineResult result = sunvo::run_pipeline(
      dataset, source != sunvo::SunSource::kNone, source, config);

  ensure_dir(args.out);
  sunvo::write_trajectory_csv(args.out + "/trajectory.csv",
                              result.trajectory);

  bool all_converged = true;
  int sun_terms_total = 0;
  sunvo::CostBreakdown total_cost;
  ordered_json windows = ordered_json::array();
  for (const sunvo::WindowReport& w : result.windows) {
    all_converged = all_converged && w.converged;
    sun_terms_total += w.sun_terms;
    total_cost.reprojection += w.breakdown.reprojection;
    total_cost.prior += w.breakdown.prior;
    total_cost.sun += w.breakdown.sun;
    ordered_json entry;
    entry["first_frame"] = w.first_frame;
    entry["last_frame"] = w.last_frame;
    entry["iterations"] = w.iterations;
    entry["converged"] = w.converged;
    entry["sun_terms"] = w.sun_terms;
    entry["cost"] = cost_json(w.breakdown);
    entry["warnings"] = w.warnings;
    windows.push_back(std::move(entry));
  }

  ordered_json report;
  report["frames"] = dataset.frame_count();
  report["window_size"] = args.window_size;
  report["sun_source"] = mode;
  report["sun_terms_total"] = sun_terms_total;
  report["all_converged"] = all_converged;
  report["cost"] = cost_json(total_cost);
  report["warnings"] = result.warnings;
  report["windows"] = std::move(windows);
  write_text_file(args.out + "/report.json", report.dump(2) + "\n");

  for (const std::string& w : result.warnings) {
    std::cerr << "warning: " << w << "\n";
  }
  for (const sunvo::WindowReport& w : result.windows) {
    for (const std::string& msg : w.warnings) {
      std::cerr << "warning: " << msg << "\n";
    }
  }
  std::cout << args.out << "\n";
  return result.any_warnings() || !all_converged ? 2 : 0;
}

// --- eval ---

struct EvalArgs {
  std::string est;
  std::string gt;  // dataset directory or gt_poses.csv file
  std::string out = default_out("eval");
  std::string sun_csv;
  std::string compare;
};

// Pairs each estimate row with the ground-truth pose of its frame id.
void align_to_gt(const std::vector<sunvo::TrajectoryRow>& rows,
                 const std::vector<sunvo::Pose>& gt,
                 std::vector<sunvo::Pose>* est_out,
                 std::vector<sunvo::Pose>* gt_out) {
  est_out->clear();
  gt_out->clear();
  for (const sunvo::TrajectoryRow& row : rows) {
    if (row.frame_id < 0 ||
        row.frame_id >= static_cast<std::int64_t>(gt.size())) {
      throw sunvo::LengthMismatch("estimate frame " +
                                  std::to_string(row.frame_id) +
                                  " has no ground-truth pose");
    }
    est_out->push_back(row.pose);
    gt_out->push_back(gt[static_cast<std::size_t>(row.frame_id)]);
  }
}

int cmd_eval(const EvalArgs& args) {
  if (args.est.empty() || args.gt.empty()) {
    throw sunvo::ConfigInvalid("--est and --gt are required");
  }
  const bool gt_is_dataset = std::filesystem::is_directory(args.gt);
  sunvo::SequenceDataset dataset;
  std::vector<sunvo::Pose> gt_poses;
  if (gt_is_dataset) {
    dataset = sunvo::read_dataset(args.gt);
    gt_poses = dataset.gt_poses;
  } else {
    gt_poses = sunvo::read_gt_poses_csv(args.gt);
  }

  const std::vector<sunvo::TrajectoryRow> est_rows =
      sunvo::read_trajectory_csv(args.est);
  std::vector<sunvo::Pose> est, gt;
  align_to_gt(est_rows, gt_poses, &est, &gt);
  const sunvo::TrajectoryErrorReport report =
      sunvo::trajectory_errors(est, gt);
  write_text_file(args.out + "/trajectory_report.json",
                  sunvo::trajectory_report_json(report) + "\n");
  write_text_file(args.out + "/trajectory_report.csv",
                  sunvo::trajectory_report_csv(report));

  if (!args.compare.empty()) {
    const std::vector<sunvo::TrajectoryRow> other_rows =
        sunvo::read_trajectory_csv(args.compare);
    std::vector<sunvo::Pose> other_est, other_gt;
    align_to_gt(other_rows, gt_poses, &other_est, &other_gt);
    const sunvo::TrajectoryErrorReport other =
        sunvo::trajectory_errors(other_est, other_gt);
    write_text_file(args.out + "/comparison.json",
                    sunvo::comparison_json(sunvo::compare_runs(report, other)) +
                        "\n");
  }

  if (!args.sun_csv.empty()) {
    if (!gt_is_dataset) {
      throw sunvo::ConfigInvalid(
          "--sun requires --gt to be a dataset directory (the anchor and "
          "timestamps set the true sun direction)");
    }
    const std::vector<sunvo::SunMeasurement> measured =
        sunvo::read_sun_csv(args.sun_csv);
    std::vector<sunvo::SunDirection> truth;
    for (const sunvo::SunMeasurement& m : measured) {
      if (m.frame_id < 0 ||
          m.frame_id >= static_cast<std::int64_t>(dataset.frame_count())) {
        throw sunvo::LengthMismatch("sun measurement frame " +
                                    std::to_string(m.frame_id) +
                                    " is outside the dataset");
      }
      sunvo::GeodeticAnchor at = dataset.anchor;
      at.timestamp = dataset.timestamps[static_cast<std::size_t>(m.frame_id)];
      truth.push_back(sunvo::expected_sun_in_camera(
          dataset.gt_poses[static_cast<std::size_t>(m.frame_id)],
          sunvo::sun_direction_enu(at)));
    }
    const sunvo::SunErrorReport sun_report =
        sunvo::sun_errors(measured, truth);
    write_text_file(args.out + "/sun_report.json",
                    sunvo::sun_report_json(sun_report) + "\n");
    write_text_file(args.out + "/sun_report.csv",
                    sunvo::sun_report_csv(sun_report));
  }

  std::cout << args.out << "\n";
  return 0;
}

// --- sun-train ---

// The dropout rate and covariance floor below keep the held-out ANEES of
// the MC covariances near 1 on the synthetic feature task; heavier
// dropout inflates the sample scatter well past the actual error of the
// MC mean and pushes the ANEES toward overcoverage.
struct SunTrainArgs {
  std::string out = default_out("sun_train");
  int train_count = 2000;
  int test_count = 500;
  double feature_noise = 0.25;
  int hidden = 16;
  int epochs = 60;
  double learning_rate = 0.05;
  double weight_decay = 1e-4;
  int batch = 32;
  double dropout = 0.2;
  int mc_samples = 25;
  std::uint64_t seed = 0;
  double tau_inv = 0.002;
};

ordered_json stats_entry(const sunvo::ColumnStats& s) {
  ordered_json j;
  j["mean"] = s.mean;
  j["median"] = s.median;
  j["stdev"] = s.stdev;
  return j;
}

int cmd_sun_train(const SunTrainArgs& args) {
  const sunvo::SunFeatureDataset train = sunvo::make_sun_feature_dataset(
      args.train_count, args.seed, args.feature_noise);
  const sunvo::SunFeatureDataset held = sunvo::make_sun_feature_dataset(
      args.test_count, args.seed + 1, args.feature_noise);

  const sunvo::DropoutNetwork initial = sunvo::make_toy_network(
      static_cast<int>(train.features.front().size()), args.hidden,
      args.seed + 2, args.dropout);
  const sunvo::TrainingResult trained = sunvo::train_toy_network(
      train.features, train.labels, initial, args.epochs, args.learning_rate,
      args.weight_decay, args.seed + 3, args.batch);

  sunvo::ModelPrecisionParams precision;
  precision.p = args.dropout;
  precision.tau_inv = args.tau_inv;

  // Each held-out example is scored by the MC predictive mean and the
  // dropout-scatter covariance, then fed through the shared sun-error
  // report so the CLI and the library agree on every definition.
  std::vector<sunvo::SunMeasurement> predicted;
  std::vector<sunvo::SunDirection> truth;
  ordered_json per_example = ordered_json::array();
  for (std::size_t i = 0; i < held.features.size(); ++i) {
    sunvo::MCConfig mc;
    mc.N = args.mc_samples;
    mc.seed = args.seed + 1000003ULL * (i + 7);
    const std::vector<sunvo::Vec3> samples =
        sunvo::mc_sample(trained.net, held.features[i], mc);
    sunvo::SunMeasurement m;
    m.frame_id = static_cast<std::int64_t>(i);
    m.direction = sunvo::mc_mean(samples);
    m.covariance = sunvo::mc_covariance_azzen(samples, precision);
    predicted.push_back(m);
    truth.push_back(held.labels[i]);
  }
  const sunvo::SunErrorReport report = sunvo::sun_errors(predicted, truth);

  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const sunvo::Mat2& c = predicted[i].covariance;
    ordered_json entry;
    entry["index"] = i;
    entry["angle_deg"] = report.vector_angle_deg[i];
    entry["zenith_error_deg"] = report.zenith_error_deg[i];
    entry["azimuth_error_deg"] = report.azimuth_error_deg[i];
    entry["direction"] = {predicted[i].direction.x(),
                          predicted[i].direction.y(),
                          predicted[i].direction.z()};
    entry["covariance"] = {c(0, 0), c(0, 1), c(1, 0), c(1, 1)};
    per_example.push_back(std::move(entry));
  }

  // Dropout-scatter covariances are expected to be loose rather than
  // exact; far outside this band the report flags them as uncalibrated
  // (dropout 0 collapses the scatter to the tau floor, for example).
  const bool anees_ok = report.anees >= 0.5 && report.anees <= 2.0;

  ordered_json j;
  j["config"] = {
      {"train-count", args.train_count}, {"test-count", args.test_count},
      {"feature-noise", args.feature_noise}, {"hidden", args.hidden},
      {"epochs", args.epochs},           {"learning-rate", args.learning_rate},
      {"weight-decay", args.weight_decay}, {"batch", args.batch},
      {"dropout", args.dropout},         {"mc-samples", args.mc_samples},
      {"seed", args.seed},               {"tau-inv", args.tau_inv},
  };
  j["epoch_losses"] = trained.epoch_losses;
  j["final_epoch_loss"] =
      trained.epoch_losses.empty() ? 0.0 : trained.epoch_losses.back();
  ordered_json held_out;
  held_out["count"] = held.features.size();
  held_out["angle_deg"] = stats_entry(report.vector_stats);
  held_out["zenith_error_deg"] = stats_entry(report.zenith_stats);
  held_out["azimuth_error_deg"] = stats_entry(report.azimuth_stats);
  held_out["anees"] = report.anees;
  held_out["anees_count"] = report.anees_count;
  held_out["anees_within_expected"] = anees_ok;
  j["held_out"] = std::move(held_out);
  j["per_example"] = std::move(per_example);

  write_text_file(args.out + "/weights.json",
                  sunvo::network_to_json(trained.net) + "\n");
  write_text_file(args.out + "/report.json", j.dump(2) + "\n");

  std::cout << args.out << "\n";
  if (!anees_ok) {
    std::cerr << "warning: held-out anees " << report.anees
              << " outside [0.5, 2.0]; covariances look uncalibrated\n";
    return 2;
  }
  return 0;
}

// Finds --config and the subcommand name without full parsing, so config
// values can seed the defaults before CLI11 applies the real flags.
struct Prescan {
  std::string config_path;
  std::string command;
};

Prescan prescan_args(int argc, char** argv) {
  Prescan out;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      out.config_path = argv[i + 1];
      ++i;
    } else if (arg.rfind("--config=", 0) == 0) {
      out.config_path = arg.substr(9);
    } else if (out.command.empty() && !arg.empty() && arg[0] != '-') {
      out.command = arg;
    }
  }
  return out;
}

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const sunvo::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const sunvo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sun-aided stereo visual odometry toolkit"};
  app.require_subcommand(1);

  const Prescan pre = prescan_args(argc, argv);
  json cfg = json::object();
  if (!pre.config_path.empty()) {
    const int rc = run_guarded([&] {
      cfg = load_config_object(pre.config_path, pre.command);
      return 0;
    });
    if (rc != 0) {
      return rc;
    }
  }

  std::string config_path_echo;  // consumed by the prescan; kept for --help

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand(
      "simulate", "Generate a synthetic stereo drive dataset");
  AnchorArgs eph;
  CLI::App* c_eph = app.add_subcommand(
      "ephemeris", "Print the sun's ENU direction for a time and place");
  SunSimArgs ssim;
  CLI::App* c_ssim = app.add_subcommand(
      "sun-sim", "Simulate sun measurements for an existing dataset");
  SunTrainArgs train;
  CLI::App* c_train = app.add_subcommand(
      "sun-train", "Train the toy dropout sun regressor and score it");
  VoArgs vo;
  CLI::App* c_vo = app.add_subcommand(
      "vo", "Run the sliding-window odometry pipeline on a dataset");
  EvalArgs ev;
  CLI::App* c_eval = app.add_subcommand(
      "eval", "Score an estimated trajectory against ground truth");

  for (CLI::App* cmd : {c_sim, c_eph, c_ssim, c_train, c_vo, c_eval}) {
    cmd->add_option("--config", config_path_echo,
                    "JSON config file; explicit flags override its keys");
  }

  // simulate
  {
    c_sim->add_option("--out", sim.out, "Output dataset directory");
    c_sim->add_option("--trajectory", sim.trajectory, "arc or waypoints");
    c_sim->add_option("--frames", sim.frames, "Frame count");
    c_sim->add_option("--frame-dt", sim.frame_dt, "Seconds between frames");
    c_sim->add_option("--arc-radius", sim.arc_radius, "Arc radius, m");
    c_sim->add_option("--arc-sweep", sim.arc_sweep, "Arc sweep, rad");
    c_sim->add_option("--landmarks", sim.landmarks, "Landmark count");
    c_sim->add_option("--pixel-noise", sim.pixel_noise,
                      "Observation noise sigma, px");
    c_sim->add_option("--outlier-fraction", sim.outlier_fraction,
                      "Per-observation outlier probability");
    c_sim->add_option("--yaw-rate-bias", sim.yaw_rate_bias,
                      "Injected per-frame yaw bias, rad");
    c_sim->add_option("--seed", sim.seed, "RNG seed");
    sim.anchor.add_flags(c_sim);
  }

  // ephemeris
  eph.add_flags(c_eph);

  // sun-sim
  {
    c_ssim->add_option("--dataset", ssim.dataset, "Dataset directory");
    c_ssim->add_option("--out", ssim.out,
                       "Output CSV (default <dataset>/sun.csv)");
    c_ssim->add_option("--target-deg", ssim.target_deg,
                       "Target mean angular error, deg");
    c_ssim->add_option("--every-n", ssim.every_n,
                       "Measure every n-th frame");
    c_ssim->add_option("--seed", ssim.seed, "RNG seed");
    c_ssim->add_option("--tau-inv", ssim.tau_inv,
                       "Covariance floor tau^-1, rad^2");
  }

  // sun-train
  {
    c_train->add_option("--out", train.out, "Output directory");
    c_train->add_option("--train-count", train.train_count,
                        "Training examples");
    c_train->add_option("--test-count", train.test_count,
                        "Held-out examples");
    c_train->add_option("--feature-noise", train.feature_noise,
                        "Feature noise sigma");
    c_train->add_option("--hidden", train.hidden, "Hidden layer width");
    c_train->add_option("--epochs", train.epochs, "Training epochs");
    c_train->add_option("--learning-rate", train.learning_rate,
                        "SGD learning rate");
    c_train->add_option("--weight-decay", train.weight_decay,
                        "L2 penalty coefficient");
    c_train->add_option("--batch", train.batch, "Mini-batch size");
    c_train->add_option("--dropout", train.dropout,
                        "Hidden-layer dropout probability");
    c_train->add_option("--mc-samples", train.mc_samples,
                        "Stochastic forward passes per prediction");
    c_train->add_option("--seed", train.seed, "RNG seed");
    c_train->add_option("--tau-inv", train.tau_inv,
                        "Covariance floor tau^-1, rad^2");
  }

  // vo
  {
    c_vo->add_option("--dataset", vo.dataset, "Dataset directory");
    c_vo->add_option("--out", vo.out, "Output directory");
    c_vo->add_option("--sun", vo.sun,
                     "Sun source: none | simulated | file [path]")
        ->expected(1, 2);
    c_vo->add_option("--window-size", vo.window_size, "Frames per window");
    c_vo->add_option("--huber-delta", vo.huber_delta,
                     "Huber knee on the whitened sun residual");
    c_vo->add_option("--max-iterations", vo.max_iterations,
                     "Solver iteration cap per window");
    c_vo->add_option("--ransac-iterations", vo.ransac_iterations,
                     "RANSAC hypothesis count");
    c_vo->add_option("--ransac-threshold", vo.ransac_threshold,
                     "RANSAC inlier threshold, px");
    c_vo->add_option("--ransac-seed", vo.ransac_seed, "RANSAC RNG seed");
    c_vo->add_option("--prior-variance", vo.prior_variance,
                     "Isotropic variance of the first-pose anchor");
    c_vo->add_option("--sun-target-deg", vo.sun_target_deg,
                     "Simulated sun: target mean error, deg");
    c_vo->add_option("--sun-every-n", vo.sun_every_n,
                     "Simulated sun: measure every n-th frame");
    c_vo->add_option("--sun-seed", vo.sun_seed, "Simulated sun: RNG seed");
    c_vo->add_option("--tau-inv", vo.tau_inv,
                     "Covariance floor tau^-1, rad^2");
  }

  // eval
  {
    c_eval->add_option("--est", ev.est, "Estimated trajectory CSV");
    c_eval->add_option("--gt", ev.gt,
                       "Ground truth: dataset directory or gt_poses.csv");
    c_eval->add_option("--out", ev.out, "Output directory");
    c_eval->add_option("--sun", ev.sun_csv,
                       "Sun measurement CSV to score (needs dataset --gt)");
    c_eval->add_option("--compare", ev.compare,
                       "Second trajectory CSV; improvements are relative "
                       "to --est");
  }

  // Config keys seed the invoked command's defaults; flags parsed below
  // overwrite whatever the config set.
  const int seed_rc = run_guarded([&] {
    if (pre.command == "simulate") {
      from_config(cfg, "out", sim.out);
      from_config(cfg, "trajectory", sim.trajectory);
      from_config(cfg, "frames", sim.frames);
      from_config(cfg, "frame-dt", sim.frame_dt);
      from_config(cfg, "arc-radius", sim.arc_radius);
      from_config(cfg, "arc-sweep", sim.arc_sweep);
      from_config(cfg, "landmarks", sim.landmarks);
      from_config(cfg, "image-width", sim.image_width);
      from_config(cfg, "image-height", sim.image_height);
      from_config(cfg, "pixel-noise", sim.pixel_noise);
      from_config(cfg, "outlier-fraction", sim.outlier_fraction);
      from_config(cfg, "d-outlier-min", sim.d_outlier_min);
      from_config(cfg, "d-outlier-max", sim.d_outlier_max);
      from_config(cfg, "yaw-rate-bias", sim.yaw_rate_bias);
      from_config(cfg, "seed", sim.seed);
      sim.anchor.apply_config(cfg);
      if (cfg.contains("landmark-min")) {
        sim.landmark_min = vec3_from_json(cfg["landmark-min"], "landmark-min");
      }
      if (cfg.contains("landmark-max")) {
        sim.landmark_max = vec3_from_json(cfg["landmark-max"], "landmark-max");
      }
      if (cfg.contains("waypoints")) {
        for (const json& w : cfg["waypoints"]) {
          sim.waypoints.push_back(vec3_from_json(w, "waypoints"));
        }
      }
    } else if (pre.command == "ephemeris") {
      eph.apply_config(cfg);
    } else if (pre.command == "sun-sim") {
      from_config(cfg, "dataset", ssim.dataset);
      from_config(cfg, "out", ssim.out);
      from_config(cfg, "target-deg", ssim.target_deg);
      from_config(cfg, "every-n", ssim.every_n);
      from_config(cfg, "seed", ssim.seed);
      from_config(cfg, "tau-inv", ssim.tau_inv);
    } else if (pre.command == "sun-train") {
      from_config(cfg, "out", train.out);
      from_config(cfg, "train-count", train.train_count);
      from_config(cfg, "test-count", train.test_count);
      from_config(cfg, "feature-noise", train.feature_noise);
      from_config(cfg, "hidden", train.hidden);
      from_config(cfg, "epochs", train.epochs);
      from_config(cfg, "learning-rate", train.learning_rate);
      from_config(cfg, "weight-decay", train.weight_decay);
      from_config(cfg, "batch", train.batch);
      from_config(cfg, "dropout", train.dropout);
      from_config(cfg, "mc-samples", train.mc_samples);
      from_config(cfg, "seed", train.seed);
      from_config(cfg, "tau-inv", train.tau_inv);
    } else if (pre.command == "vo") {
      from_config(cfg, "dataset", vo.dataset);
      from_config(cfg, "out", vo.out);
      if (cfg.contains("sun")) {
        if (cfg["sun"].is_string()) {
          vo.sun = {cfg["sun"].get<std::string>()};
        } else {
          from_config(cfg, "sun", vo.sun);
        }
      }
      from_config(cfg, "window-size", vo.window_size);
      from_config(cfg, "huber-delta", vo.huber_delta);
      from_config(cfg, "max-iterations", vo.max_iterations);
      from_config(cfg, "gradient-tol", vo.gradient_tol);
      from_config(cfg, "step-tol", vo.step_tol);
      from_config(cfg, "initial-damping", vo.initial_damping);
      from_config(cfg, "ransac-iterations", vo.ransac_iterations);
      from_config(cfg, "ransac-threshold", vo.ransac_threshold);
      from_config(cfg, "ransac-min-inliers", vo.ransac_min_inliers);
      from_config(cfg, "ransac-min-disparity", vo.ransac_min_disparity);
      from_config(cfg, "ransac-seed", vo.ransac_seed);
      from_config(cfg, "prior-variance", vo.prior_variance);
      from_config(cfg, "sun-target-deg", vo.sun_target_deg);
      from_config(cfg, "sun-every-n", vo.sun_every_n);
      from_config(cfg, "sun-seed", vo.sun_seed);
      from_config(cfg, "tau-inv", vo.tau_inv);
    } else if (pre.command == "eval") {
      from_config(cfg, "est", ev.est);
      from_config(cfg, "gt", ev.gt);
      from_config(cfg, "out", ev.out);
      from_config(cfg, "sun", ev.sun_csv);
      from_config(cfg, "compare", ev.compare);
    }
    return 0;
  });
  if (seed_rc != 0) {
    return seed_rc;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (app.got_subcommand(c_sim)) {
    return run_guarded([&] { return cmd_simulate(sim); });
  }
  if (app.got_subcommand(c_eph)) {
    return run_guarded([&] { return cmd_ephemeris(eph); });
  }
  if (app.got_subcommand(c_ssim)) {
    return run_guarded([&] { return cmd_sun_sim(ssim); });
  }
  if (app.got_subcommand(c_train)) {
    return run_guarded([&] { return cmd_sun_train(train); });
  }
  if (app.got_subcommand(c_vo)) {
    return run_guarded([&] { return cmd_vo(vo); });
  }
  if (app.got_subcommand(c_eval)) {
    return run_guarded([&] { return cmd_eval(ev); });
  }
  std::cerr << "no subcommand given\n";
  return 1;
}

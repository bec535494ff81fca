#include "sunvo/sun_sensing.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "sunvo/errors.hpp"

namespace sunvo {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kUnitTol = 1e-6;

void require_unit(const Vec3& v, const char* what) {
  if (std::abs(v.norm() - 1.0) > kUnitTol) {
    throw NonUnitInput(std::string(what) + " must be unit length, norm is " +
                       std::to_string(v.norm()));
  }
}

// Orthonormal basis of the plane orthogonal to unit s.
void tangent_basis(const Vec3& s, Vec3* e1, Vec3* e2) {
  int smallest = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(s[i]) < std::abs(s[smallest])) smallest = i;
  }
  Vec3 a = Vec3::Zero();
  a[smallest] = 1.0;
  *e1 = a.cross(s).normalized();
  *e2 = s.cross(*e1);
}

// E[atan(sigma * r)] for r ~ Rayleigh(1), by Simpson quadrature. The
// integrand decays like exp(-r^2/2); [0, 10] holds all its mass.
double expected_angular_error(double sigma) {
  constexpr int kPanels = 4000;
  constexpr double kUpper = 10.0;
  const double h = kUpper / kPanels;
  auto f = [sigma](double r) {
    return std::atan(sigma * r) * r * std::exp(-0.5 * r * r);
  };
  double sum = f(0.0) + f(kUpper);
  for (int i = 1; i < kPanels; ++i) {
    sum += (i % 2 == 1 ? 4.0 : 2.0) * f(i * h);
  }
  return sum * h / 3.0;
}

}  // namespace

double ModelPrecisionParams::tau_inverse() const {
  if (tau_inv.has_value()) {
    if (*tau_inv < 0.0) throw ConfigInvalid("tau_inv must be >= 0");
    return *tau_inv;
  }
  if (p <= 0.0 || p >= 1.0 || l <= 0.0 || M <= 0.0 || lambda <= 0.0) {
    throw ConfigInvalid("model precision inputs must be positive, p in (0,1)");
  }
  return 2.0 * M * lambda / (p * l * l);
}

double model_precision(const ModelPrecisionParams& params) {
  const double inv = params.tau_inverse();
  if (inv == 0.0) throw ConfigInvalid("tau undefined for tau_inv = 0");
  return 1.0 / inv;
}

double cosine_loss(const Vec3& s_hat, const Vec3& s_gt) {
  require_unit(s_hat, "s_hat");
  require_unit(s_gt, "s_gt");
  return 1.0 - s_hat.dot(s_gt);
}

double euclidean_half_sq_loss(const Vec3& s_hat_normalized, const Vec3& s_gt) {
  require_unit(s_hat_normalized, "s_hat");
  require_unit(s_gt, "s_gt");
  return 0.5 * (s_hat_normalized - s_gt).squaredNorm();
}

Vec3 mc_mean(const std::vector<Vec3>& samples) {
  if (samples.size() < 2) {
    throw EmptySequence("mc_mean needs at least 2 samples");
  }
  Vec3 sum = Vec3::Zero();
  for (const Vec3& s : samples) sum += s;
  const Vec3 mean = sum / static_cast<double>(samples.size());
  if (mean.norm() <= 1e-6) {
    throw DegenerateMean("sample mean norm " + std::to_string(mean.norm()));
  }
  return mean.normalized();
}

Mat2 mc_covariance_azzen(const std::vector<Vec3>& samples,
                         const ModelPrecisionParams& precision) {
  if (samples.size() < 2) {
    throw EmptySequence("mc_covariance_azzen needs at least 2 samples");
  }
  const double n = static_cast<double>(samples.size());

  // Angles relative to the first sample: subtracting before accumulating
  // keeps identical samples at exactly zero scatter, and wrapping the
  // azimuth difference doubles as the unwrap across the branch cut.
  std::vector<Vec2> rel(samples.size());
  AzimuthZenith first;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double norm = samples[i].norm();
    if (norm <= 1e-6) {
      throw DegenerateMean("sample " + std::to_string(i) + " has norm ~ 0");
    }
    const AzimuthZenith a = vec_to_azzen(samples[i] / norm);
    if (i == 0) first = a;
    rel[i] = Vec2(a.zenith - first.zenith, wrap_angle(a.azimuth - first.azimuth));
  }

  Vec2 mean = Vec2::Zero();
  for (const Vec2& r : rel) mean += r;
  mean /= n;

  Mat2 scatter = Mat2::Zero();
  for (const Vec2& r : rel) {
    const Vec2 c = r - mean;
    scatter += c * c.transpose();
  }
  scatter /= n;

  return precision.tau_inverse() * Mat2::Identity() + scatter;
}

double calibrate_tangent_sigma(double target_mean_error_rad) {
  if (target_mean_error_rad < 0.0) {
    throw ConfigInvalid("target mean error must be >= 0");
  }
  if (target_mean_error_rad == 0.0) return 0.0;
  if (target_mean_error_rad >= 1.4) {
    throw ConfigInvalid("target mean error too close to the 90 deg limit");
  }

  // Small-angle closed form E[sigma * r] = sigma * sqrt(pi/2), then refine:
  // atan compresses large deflections, so the true sigma is a bit larger.
  double lo = target_mean_error_rad * std::sqrt(2.0 / kPi);
  double hi = lo;
  while (expected_angular_error(hi) < target_mean_error_rad) {
    hi *= 1.5;
    if (hi > 100.0) throw ConfigInvalid("sigma calibration failed to bracket");
  }
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (expected_angular_error(mid) < target_mean_error_rad) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

std::vector<SunMeasurement> simulate_sun_measurements(
    const std::vector<Pose>& gt_poses, const std::vector<UtcTime>& timestamps,
    const GeodeticAnchor& anchor, double target_mean_error_deg, int every_n,
    std::uint64_t seed, const ModelPrecisionParams& precision) {
  if (gt_poses.empty()) throw EmptySequence("no ground-truth poses");
  if (timestamps.size() != gt_poses.size()) {
    throw LengthMismatch("poses and timestamps differ in length");
  }
  if (every_n < 1) throw ConfigInvalid("every_n must be >= 1");
  if (target_mean_error_deg < 0.0) {
    throw ConfigInvalid("target mean error must be >= 0");
  }

  const double tau_inv = precision.tau_inverse();
  const double sigma =
      calibrate_tangent_sigma(target_mean_error_deg * kPi / 180.0);
  const RandomStream root(seed);

  std::vector<SunMeasurement> out;
  for (std::size_t k = 0; k < gt_poses.size();
       k += static_cast<std::size_t>(every_n)) {
    GeodeticAnchor at_frame = anchor;
    at_frame.timestamp = timestamps[k];
    const SunDirection s_world = sun_direction_enu(at_frame);
    const SunDirection s_true = expected_sun_in_camera(gt_poses[k], s_world);

    SunMeasurement m;
    m.frame_id = static_cast<std::int64_t>(k);
    if (sigma == 0.0) {
      m.direction = s_true;
      m.covariance = tau_inv * Mat2::Identity();
    } else {
      RandomStream rng = root.substream(k);
      Vec3 e1, e2;
      tangent_basis(s_true, &e1, &e2);
      const Vec3 noisy =
          s_true + sigma * (rng.normal() * e1 + rng.normal() * e2);
      m.direction = noisy.normalized();

      const double sin_zen = std::sin(vec_to_azzen(s_true).zenith);
      const double sin2 = std::max(sin_zen * sin_zen, 1e-12);
      m.covariance = Mat2::Zero();
      m.covariance(0, 0) = std::max(sigma * sigma, tau_inv);
      m.covariance(1, 1) = std::max(sigma * sigma / sin2, tau_inv);
    }
    out.push_back(std::move(m));
  }
  return out;
}

DropoutNetwork::DropoutNetwork(std::vector<DropoutLayer> layers)
    : layers_(std::move(layers)) {
  if (layers_.empty()) throw EmptySequence("network needs >= 1 layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DropoutLayer& l = layers_[i];
    if (l.weights.rows() != l.bias.size()) {
      throw DimensionMismatch("layer " + std::to_string(i) +
                              " bias does not match weight rows");
    }
    if (i > 0 && l.weights.cols() != layers_[i - 1].weights.rows()) {
      throw DimensionMismatch("layer " + std::to_string(i) +
                              " input does not chain");
    }
    if (l.dropout_p < 0.0 || l.dropout_p >= 1.0) {
      throw ConfigInvalid("dropout probability must be in [0, 1)");
    }
  }
  if (layers_.back().weights.rows() != 3) {
    throw DimensionMismatch("output dimension must be 3");
  }
}

int DropoutNetwork::input_dim() const {
  return static_cast<int>(layers_.front().weights.cols());
}

int DropoutNetwork::output_dim() const {
  return static_cast<int>(layers_.back().weights.rows());
}

Eigen::VectorXd DropoutNetwork::forward(const Eigen::VectorXd& x,
                                        RandomStream* rng) const {
  if (x.size() != input_dim()) {
    throw DimensionMismatch("input size " + std::to_string(x.size()) +
                            ", network expects " + std::to_string(input_dim()));
  }
  Eigen::VectorXd h = x;
  for (const DropoutLayer& layer : layers_) {
    if (rng != nullptr && layer.dropout_p > 0.0) {
      for (Eigen::Index j = 0; j < h.size(); ++j) {
        if (rng->bernoulli(layer.dropout_p)) h[j] = 0.0;
      }
    }
    Eigen::VectorXd z = layer.weights * h + layer.bias;
    h = layer.activation == Activation::kTanh
            ? Eigen::VectorXd(z.array().tanh())
            : z;
  }
  return h;
}

Vec3 DropoutNetwork::predict(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd raw = forward(x, nullptr);
  const double norm = raw.norm();
  if (norm < 1e-12) throw DegenerateMean("network output norm ~ 0");
  return Vec3(raw) / norm;
}

DropoutNetwork make_toy_network(int input_dim, int hidden_dim,
                                std::uint64_t seed, double hidden_dropout_p) {
  RandomStream rng(seed);
  auto init = [&rng](int rows, int cols) {
    Eigen::MatrixXd w(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) w(r, c) = scale * rng.normal();
    return w;
  };
  std::vector<DropoutLayer> layers(2);
  layers[0].weights = init(hidden_dim, input_dim);
  layers[0].bias = Eigen::VectorXd::Zero(hidden_dim);
  layers[0].activation = Activation::kTanh;
  layers[0].dropout_p = 0.0;  // never drop raw features
  layers[1].weights = init(3, hidden_dim);
  layers[1].bias = Eigen::VectorXd::Zero(3);
  layers[1].activation = Activation::kLinear;
  layers[1].dropout_p = hidden_dropout_p;
  return DropoutNetwork(std::move(layers));
}

double loss_and_gradients(const DropoutNetwork& net, const Eigen::VectorXd& x,
                          const Vec3& label, double lambda,
                          RandomStream* mask_rng, NetworkGradients* grads) {
  const auto& layers = net.layers();
  const std::size_t depth = layers.size();

  // Forward with recorded masks, masked inputs and activations.
  std::vector<Eigen::VectorXd> masked_inputs(depth);
  std::vector<Eigen::VectorXd> masks(depth);
  std::vector<Eigen::VectorXd> activations(depth);
  Eigen::VectorXd h = x;
  if (h.size() != net.input_dim()) {
    throw DimensionMismatch("input size does not match network");
  }
  for (std::size_t i = 0; i < depth; ++i) {
    masks[i] = Eigen::VectorXd::Ones(h.size());
    if (mask_rng != nullptr && layers[i].dropout_p > 0.0) {
      for (Eigen::Index j = 0; j < h.size(); ++j) {
        if (mask_rng->bernoulli(layers[i].dropout_p)) {
          masks[i][j] = 0.0;
          h[j] = 0.0;
        }
      }
    }
    masked_inputs[i] = h;
    Eigen::VectorXd z = layers[i].weights * h + layers[i].bias;
    h = layers[i].activation == Activation::kTanh
            ? Eigen::VectorXd(z.array().tanh())
            : z;
    activations[i] = h;
  }

  // Normalized-output data term. r is floored so a (measure-zero) collapse
  // of the raw output cannot produce non-finite gradients.
  const Eigen::VectorXd raw = activations.back();
  const double r = std::max(raw.norm(), 1e-6);
  const Vec3 s_hat = Vec3(raw) / r;
  double loss = 0.5 * (s_hat - label).squaredNorm();
  for (const DropoutLayer& l : layers) loss += lambda * l.weights.squaredNorm();

  if (grads != nullptr) {
    grads->d_weights.assign(depth, Eigen::MatrixXd());
    grads->d_bias.assign(depth, Eigen::VectorXd());

    // d loss / d raw through the normalization: ((s_hat . s) s_hat - s) / r.
    Eigen::VectorXd g = (s_hat.dot(label) * s_hat - label) / r;
    for (std::size_t i = depth; i-- > 0;) {
      if (layers[i].activation == Activation::kTanh) {
        g = g.cwiseProduct(Eigen::VectorXd(
            (1.0 - activations[i].array().square()).matrix()));
      }
      grads->d_weights[i] =
          g * masked_inputs[i].transpose() + 2.0 * lambda * layers[i].weights;
      grads->d_bias[i] = g;
      if (i > 0) {
        // Gradient only flows through kept units.
        g = (layers[i].weights.transpose() * g).cwiseProduct(masks[i]);
      }
    }
  }
  return loss;
}

TrainingResult train_toy_network(const std::vector<Eigen::VectorXd>& features,
                                 const std::vector<Vec3>& labels,
                                 const DropoutNetwork& net, int epochs,
                                 double learning_rate, double lambda,
                                 std::uint64_t seed, int batch_size) {
  if (features.size() != labels.size()) {
    throw DimensionMismatch("feature and label counts differ");
  }
  if (features.empty()) throw EmptySequence("empty training set");
  if (batch_size < 1) throw ConfigInvalid("batch size must be >= 1");

  TrainingResult result{net, {}};
  if (epochs <= 0) return result;

  RandomStream rng(seed);
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), 0);

  const std::size_t depth = net.layers().size();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    // Fisher-Yates with the library stream, deterministic per seed.
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[rng.uniform_index(i + 1)]);
    }

    double epoch_loss = 0.0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t end =
          std::min(cursor + static_cast<std::size_t>(batch_size), order.size());
      NetworkGradients sum;
      sum.d_weights.assign(depth, Eigen::MatrixXd());
      sum.d_bias.assign(depth, Eigen::VectorXd());
      for (std::size_t l = 0; l < depth; ++l) {
        sum.d_weights[l] = Eigen::MatrixXd::Zero(
            result.net.layers()[l].weights.rows(),
            result.net.layers()[l].weights.cols());
        sum.d_bias[l] =
            Eigen::VectorXd::Zero(result.net.layers()[l].bias.size());
      }

      NetworkGradients g;
      for (std::size_t i = cursor; i < end; ++i) {
        epoch_loss += loss_and_gradients(result.net, features[order[i]],
                                         labels[order[i]], lambda, &rng, &g);
        for (std::size_t l = 0; l < depth; ++l) {
          sum.d_weights[l] += g.d_weights[l];
          sum.d_bias[l] += g.d_bias[l];
        }
      }

      const double scale = learning_rate / static_cast<double>(end - cursor);
      for (std::size_t l = 0; l < depth; ++l) {
        result.net.mutable_layers()[l].weights -= scale * sum.d_weights[l];
        result.net.mutable_layers()[l].bias -= scale * sum.d_bias[l];
      }
      cursor = end;
    }
    result.epoch_losses.push_back(epoch_loss /
                                  static_cast<double>(features.size()));
  }
  return result;
}

std::vector<Vec3> mc_sample(const DropoutNetwork& net,
                            const Eigen::VectorXd& x, const MCConfig& cfg) {
  if (cfg.N < 2) throw ConfigInvalid("MC sample count must be >= 2");
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(cfg.N));
  for (int i = 0; i < cfg.N; ++i) {
    RandomStream rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    const Eigen::VectorXd raw = net.forward(x, &rng);
    const double norm = raw.norm();
    if (norm < 1e-12) throw DegenerateMean("MC sample output norm ~ 0");
    out.push_back(Vec3(raw) / norm);
  }
  return out;
}

std::string network_to_json(const DropoutNetwork& net) {
  nlohmann::json doc;
  doc["layers"] = nlohmann::json::array();
  for (const DropoutLayer& l : net.layers()) {
    nlohmann::json jl;
    jl["out"] = l.weights.rows();
    jl["in"] = l.weights.cols();
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weights.size()));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
        w.push_back(l.weights(r, c));
    jl["weights"] = w;
    jl["bias"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
    jl["activation"] = l.activation == Activation::kTanh ? "tanh" : "linear";
    jl["dropout_p"] = l.dropout_p;
    doc["layers"].push_back(jl);
  }
  return doc.dump(2);
}

DropoutNetwork network_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("network JSON parse failure: ") + e.what());
  }
  if (!doc.contains("layers") || !doc["layers"].is_array() ||
      doc["layers"].empty()) {
    throw ConfigInvalid("network JSON lacks a non-empty layers array");
  }
  std::vector<DropoutLayer> layers;
  for (const auto& jl : doc["layers"]) {
    DropoutLayer l;
    int rows = 0;
    int cols = 0;
    std::vector<double> w;
    std::vector<double> b;
    try {
      rows = jl.at("out").get<int>();
      cols = jl.at("in").get<int>();
      w = jl.at("weights").get<std::vector<double>>();
      b = jl.at("bias").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigInvalid(std::string("network JSON layer field: ") +
                          e.what());
    }
    if (static_cast<int>(w.size()) != rows * cols ||
        static_cast<int>(b.size()) != rows) {
      throw ConfigInvalid("network JSON layer sizes are inconsistent");
    }
    l.weights.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        l.weights(r, c) = w[static_cast<std::size_t>(r * cols + c)];
    l.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
    std::string act;
    try {
      act = jl.at("activation").get<std::string>();
      l.dropout_p = jl.at("dropout_p").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigInvalid(std::string("network JSON layer field: ") +
                          e.what());
    }
    if (act == "tanh") {
      l.activation = Activation::kTanh;
    } else if (act == "linear") {
      l.activation = Activation::kLinear;
    } else {
      throw ConfigInvalid("unknown activation '" + act + "'");
    }
    layers.push_back(std::move(l));
  }
  return DropoutNetwork(std::move(layers));
}

SunFeatureDataset make_sun_feature_dataset(int count, std::uint64_t seed,
                                           double feature_noise) {
  if (count < 1) throw ConfigInvalid("dataset count must be >= 1");

  // Fixed encoding shared by every dataset instance so trained weights stay
  // meaningful across splits generated with different seeds.
  Eigen::Matrix<double, 8, 3> encoding;
  RandomStream enc_rng(0x5847C0DEULL);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 3; ++c) encoding(r, c) = 2.0 * enc_rng.normal();

  SunFeatureDataset ds;
  ds.features.reserve(static_cast<std::size_t>(count));
  ds.labels.reserve(static_cast<std::size_t>(count));
  RandomStream rng(seed);
  for (int i = 0; i < count; ++i) {
    AzimuthZenith a;
    a.zenith = (10.0 + 70.0 * rng.uniform()) * kPi / 180.0;
    a.azimuth = rng.uniform(-kPi, kPi);
    const Vec3 s = azzen_to_vec(a);
    Eigen::VectorXd x = encoding * s;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      x[j] += feature_noise * rng.normal();
    }
    ds.features.push_back(std::move(x));
    ds.labels.push_back(s);
  }
  return ds;
}

}  // namespace sunvo

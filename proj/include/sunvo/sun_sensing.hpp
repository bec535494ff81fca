#ifndef SUNVO_SUN_SENSING_HPP
#define SUNVO_SUN_SENSING_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sunvo/random.hpp"
#include "sunvo/se3.hpp"
#include "sunvo/solar_ephemeris.hpp"

namespace sunvo {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// One sun-direction observation in a camera frame, with its 2x2 covariance
/// over (zenith, azimuth) in rad^2. The covariance diagonal is floored at
/// tau_inverse by every producer in this module.
struct SunMeasurement {
  std::int64_t frame_id = 0;
  SunDirection direction = SunDirection(0, -1, 0);
  Mat2 covariance = Mat2::Identity();
};

/// Inputs of the model-precision formula tau = p * l^2 / (2 * M * lambda),
/// with an optional direct override of tau^-1. The override is set by
/// default: the formula's inputs are only meaningful for a trained network.
struct ModelPrecisionParams {
  double p = 0.5;          // dropout probability, in (0, 1)
  double l = 1.0;          // characteristic length scale
  double M = 20000.0;      // training-set size
  double lambda = 5e-4;    // weight decay
  std::optional<double> tau_inv = 0.015;

  /// tau^-1: the override when set, otherwise 2*M*lambda / (p * l^2).
  /// Throws ConfigInvalid on non-positive formula inputs.
  double tau_inverse() const;
};

/// tau itself. Prefer tau_inverse(); this form divides by the override.
double model_precision(const ModelPrecisionParams& params);

/// 1 - s_hat . s_gt for unit vectors, in [0, 2].
/// Throws NonUnitInput when either norm is off unit by more than 1e-6.
double cosine_loss(const Vec3& s_hat, const Vec3& s_gt);

/// 0.5 * |s_hat - s_gt|^2; equals cosine_loss on unit inputs.
double euclidean_half_sq_loss(const Vec3& s_hat_normalized, const Vec3& s_gt);

/// Arithmetic mean renormalized to unit length. Throws EmptySequence for
/// fewer than 2 samples and DegenerateMean when the mean norm is <= 1e-6.
Vec3 mc_mean(const std::vector<Vec3>& samples);

/// tau^-1 * I2 plus the population covariance of the samples' (zenith,
/// azimuth) angles. Each sample is normalized before conversion; azimuths
/// are unwrapped to within pi of the first sample so the scatter is free of
/// branch-cut jumps. Identical samples give exactly tau^-1 * I2.
Mat2 mc_covariance_azzen(const std::vector<Vec3>& samples,
                         const ModelPrecisionParams& precision);

/// Per-axis tangent-plane sigma (rad) whose expected angular error after
/// renormalization equals the target. Closed-form small-angle seed
/// (target * sqrt(2/pi)) refined by quadrature so large targets stay exact.
double calibrate_tangent_sigma(double target_mean_error_rad);

/// Ground-truth camera-frame sun directions at every every_n-th frame,
/// perturbed by isotropic tangent-plane Gaussian noise calibrated to the
/// target mean angular error. Covariance is the generating covariance
/// diag(sigma^2, sigma^2 / sin^2 zenith) floored at tau^-1; target 0 yields
/// the exact directions with covariance tau^-1 * I2.
std::vector<SunMeasurement> simulate_sun_measurements(
    const std::vector<Pose>& gt_poses, const std::vector<UtcTime>& timestamps,
    const GeodeticAnchor& anchor, double target_mean_error_deg, int every_n,
    std::uint64_t seed,
    const ModelPrecisionParams& precision = ModelPrecisionParams{});

// --- Toy dropout regressor ---

enum class Activation { kTanh, kLinear };

/// One dense layer. dropout_p is the probability of zeroing each coordinate
/// of this layer's INPUT during a stochastic pass; no inverted rescaling is
/// applied, so training-time and MC-test forward passes are the same
/// function of the masks.
struct DropoutLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
  Activation activation = Activation::kTanh;
  double dropout_p = 0.0;
};

struct MCConfig {
  int N = 25;
  std::uint64_t seed = 0;
};

/// Small feed-forward unit-direction regressor with per-layer Bernoulli
/// dropout, the MC-sampleable stand-in for a full BCNN.
class DropoutNetwork {
 public:
  explicit DropoutNetwork(std::vector<DropoutLayer> layers);

  const std::vector<DropoutLayer>& layers() const { return layers_; }
  std::vector<DropoutLayer>& mutable_layers() { return layers_; }
  int input_dim() const;
  int output_dim() const;

  /// Raw (unnormalized) output. When rng is non-null, each layer's input is
  /// masked by fresh Bernoulli(1 - dropout_p) keep decisions drawn from it;
  /// when null, every unit is kept.
  Eigen::VectorXd forward(const Eigen::VectorXd& x, RandomStream* rng) const;

  /// Deterministic normalized prediction (all units kept).
  Vec3 predict(const Eigen::VectorXd& x) const;

 private:
  std::vector<DropoutLayer> layers_;
};

/// Tanh-hidden, linear-output network with dropout 0 on the raw input and
/// hidden_dropout_p on every hidden activation; weights initialized from the
/// seed at scale 1/sqrt(fan_in).
DropoutNetwork make_toy_network(int input_dim, int hidden_dim,
                                std::uint64_t seed,
                                double hidden_dropout_p = 0.5);

struct NetworkGradients {
  std::vector<Eigen::MatrixXd> d_weights;
  std::vector<Eigen::VectorXd> d_bias;
};

/// Per-example loss 0.5 * |normalize(f(x)) - label|^2 + lambda * sum of
/// squared weight entries, with gradients through the normalization. Masks
/// come from mask_rng (null = keep all); gradients land in *grads when given.
double loss_and_gradients(const DropoutNetwork& net, const Eigen::VectorXd& x,
                          const Vec3& label, double lambda,
                          RandomStream* mask_rng, NetworkGradients* grads);

struct TrainingResult {
  DropoutNetwork net;
  std::vector<double> epoch_losses;  // mean per-example loss per epoch
};

/// Mini-batch SGD on the loss above. Deterministic per seed; zero epochs
/// returns the network unchanged. Throws DimensionMismatch on inconsistent
/// feature/label sizes.
TrainingResult train_toy_network(const std::vector<Eigen::VectorXd>& features,
                                 const std::vector<Vec3>& labels,
                                 const DropoutNetwork& net, int epochs,
                                 double learning_rate, double lambda,
                                 std::uint64_t seed, int batch_size = 32);

/// N stochastic forward passes with mask streams keyed by (seed, sample
/// index), outputs normalized. Order-independent and reproducible.
std::vector<Vec3> mc_sample(const DropoutNetwork& net,
                            const Eigen::VectorXd& x, const MCConfig& cfg);

/// JSON round-trip of layer dims, row-major weights, biases, activations,
/// and dropout probabilities.
std::string network_to_json(const DropoutNetwork& net);
DropoutNetwork network_from_json(const std::string& text);

struct SunFeatureDataset {
  std::vector<Eigen::VectorXd> features;
  std::vector<Vec3> labels;  // unit camera-frame sun directions
};

/// Synthetic stand-in for shadow-based sun observation: the label is a unit
/// direction with zenith in [10, 80] deg, the feature is a fixed
/// well-conditioned 8-dim linear encoding of it plus Gaussian noise, so a
/// least-squares linear map recovers the direction to a few degrees.
SunFeatureDataset make_sun_feature_dataset(int count, std::uint64_t seed,
                                           double feature_noise = 0.25);

}  // namespace sunvo

#endif  // SUNVO_SUN_SENSING_HPP

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace vcfl {

/// One-hidden-layer logistic network, output read as P(T=1 | man(I=i)).
///
/// Parameters live in one flat vector laid out as
///   [ W1 (hidden x input, row-major) | b1 (hidden) | w2 (hidden) | b2 ]
/// so gradients and optimizer state share the same indexing.
class Predictor {
public:
  Predictor() = default;
  Predictor(std::size_t input_dim, std::size_t hidden_units);

  /// W1 and w2 uniform in +-1/sqrt(fan_in), biases zero.
  static Predictor random(std::size_t input_dim, std::size_t hidden_units, std::uint64_t seed);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_units() const { return hidden_; }
  std::size_t num_params() const { return params_.size(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const { return hidden_ * input_dim_; }
  std::size_t w2_offset() const { return b1_offset() + hidden_; }
  std::size_t b2_offset() const { return w2_offset() + hidden_; }

  /// Throws DimensionMismatch on a wrong-sized input.
  double forward(std::span<const double> x) const;

  /// Forward pass keeping the hidden activations (size hidden_units()).
  double forward(std::span<const double> x, std::span<double> hidden) const;

  bool operator==(const Predictor&) const = default;

private:
  std::size_t input_dim_ = 0;
  std::size_t hidden_ = 0;
  std::vector<double> params_;
};

enum class Loss { SquaredError, CrossEntropy };

std::string_view to_string(Loss loss);
Loss parse_loss(std::string_view text);

/// Inputs stored row-major, one row per example, with probability targets.
struct TrainingSet {
  std::size_t dim = 0;
  std::vector<double> inputs;
  std::vector<double> targets;

  std::size_t size() const { return targets.size(); }
  std::span<const double> row(std::size_t k) const { return {inputs.data() + k * dim, dim}; }
  void add(std::span<const double> x, double target);
};

double loss_value(Loss loss, double output, double target);

/// Mean loss over the whole set.
double mean_loss(const Predictor& model, const TrainingSet& data, Loss loss);

struct Gradient {
  std::vector<double> values;  // same layout as Predictor::params()
  double loss = 0.0;           // mean loss at the evaluated parameters
};

/// Exact gradient of the mean loss over `batch` with respect to all parameters.
Gradient weight_gradient(const Predictor& model, const TrainingSet& batch, Loss loss);

/// How d(j, anchor) is charged. SquaredL2 is ||j - a||^2. L2 is ||j - a|| on
/// binary points, relaxed as sqrt(sum |j_k - a_k|) so that it agrees with the
/// plain L2 distance wherever j is binary.
enum class Distance { SquaredL2, L2 };
std::string to_string(Distance d);
Distance parse_distance(const std::string& s);

/// (1 - alpha) |C(j) - target| + alpha d(j, anchor) over relaxed images j.
struct ManipulationObjective {
  double target = 0.5;
  std::span<const double> anchor;
  double alpha = 0.1;
  Distance distance = Distance::SquaredL2;

  double value(const Predictor& model, std::span<const double> j) const;
};

/// Gradient of the manipulation objective in j. The |.| term uses the sign
/// subgradient with value 0 at the kink.
std::vector<double> input_gradient(const Predictor& model, std::span<const double> j,
                                   const ManipulationObjective& objective);

/// Same gradient written into `grad`; returns the objective value at j so the
/// forward pass is shared.
double input_gradient(const Predictor& model, std::span<const double> j,
                      const ManipulationObjective& objective, std::span<double> grad);

/// dC/dx at x.
std::vector<double> output_input_gradient(const Predictor& model, std::span<const double> x);

struct TrainConfig {
  double learning_rate = 0.5;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  Loss loss = Loss::SquaredError;
  double weight_decay = 0.0;  // L2 penalty on W1 and w2, added to the gradient as decay * w

  void validate() const;
};

struct TrainResult {
  std::vector<double> loss_curve;  // mean minibatch loss per epoch
  double initial_loss = 0.0;
  double final_loss = 0.0;
  /// Set when the final full-data loss is above the initial one.
  bool non_decreasing = false;
};

/// Mini-batch gradient descent with momentum. Examples are reshuffled every
/// epoch from `config.seed`; the run is bit-reproducible for a given
/// (seed, data order, config). Aborts with NonFinite on a NaN/inf loss.
TrainResult train(Predictor& model, const TrainingSet& data, const TrainConfig& config);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Predictor plus the provenance needed to reproduce it.
struct Checkpoint {
  Predictor model;
  TrainConfig train_config;
  std::uint64_t seed = 0;
  std::string config_hash;
};

/// Weights are stored as IEEE-754 hex-float strings so that write -> read ->
/// write is byte-identical.
nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

std::string hex_double(double v);
double parse_hex_double(const std::string& text);

}  // namespace vcfl

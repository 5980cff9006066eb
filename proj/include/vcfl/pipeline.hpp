#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vcfl/grating.hpp"
#include "vcfl/image.hpp"
#include "vcfl/oracle.hpp"
#include "vcfl/predictor.hpp"

namespace vcfl {

enum class Provenance { CoarsenedObservational, OracleQuery, Manipulated };

std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view text);

struct CausalRecord {
  BinaryImage image;
  double label = 0.0;  // causal probability in [0,1]
  Provenance provenance = Provenance::CoarsenedObservational;
  std::size_t round = 0;

  bool operator==(const CausalRecord&) const = default;
};

/// Append-only set of (image, causal label) pairs grown across rounds.
class CausalDataset {
public:
  void append(CausalRecord record);
  void append(std::span<const CausalRecord> records);

  const std::vector<CausalRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  const CausalRecord& operator[](std::size_t k) const { return records_[k]; }

  /// Distinct labels (grouped within `tolerance`), ascending.
  std::vector<double> causal_classes(double tolerance = 1e-9) const;

  TrainingSet training_set() const;

  bool operator==(const CausalDataset&) const = default;

private:
  std::vector<CausalRecord> records_;
};

std::string causal_dataset_to_jsonl(const CausalDataset& data, const std::string& config_hash = {});
CausalDataset causal_dataset_from_jsonl(const std::string& text, std::string* config_hash = nullptr);

struct Algorithm1Result {
  Predictor predictor;
  CausalDataset dataset;
  std::vector<double> class_values;       // P_1..P_M
  std::vector<std::size_t> representatives;  // dataset index per class
  std::vector<double> causal_estimates;   // C_1..C_M
  std::size_t oracle_queries = 0;
  TrainResult training;
};

/// Causal predictor training from coarsened observational data: one oracle
/// estimate per observational class (lowest-index representative; `reps`
/// draws in sample mode), propagated to every member of that class, then the
/// predictor is trained on the relabelled data.
Algorithm1Result causal_predictor_training(const std::vector<ObservationalRecord>& observations,
                                           std::span<const double> class_values, Oracle& oracle,
                                           const TrainConfig& train_config,
                                           std::size_t hidden_units = 100, std::size_t reps = 1,
                                           double tolerance = 1e-9);

/// Distinct obs_prob values of a dataset, ascending.
std::vector<double> observational_classes(const std::vector<ObservationalRecord>& observations,
                                          double tolerance = 1e-9);

// Gradient: j -= step * grad. Sign: j -= step * sign(grad), the usual
// L-infinity projected step.
enum class StepRule { Gradient, Sign };
std::string to_string(StepRule r);
StepRule parse_step_rule(const std::string& s);

// Pgd runs projected descent on the relaxed objective. Greedy works on the
// binary image directly: it keeps flipping the pixel that brings C closest to
// the target, up to max_flips, and returns the prefix with the lowest objective.
enum class Method { Pgd, Greedy };
std::string to_string(Method m);
Method parse_method(const std::string& s);

struct OptimizerConfig {
  std::size_t steps = 200;
  double step_size = 0.05;
  std::size_t restarts = 3;
  double init_noise = 0.01;  // restarts start from anchor + U(-noise, noise), clipped
  StepRule rule = StepRule::Gradient;
  Distance distance = Distance::L2;
  Method method = Method::Greedy;
  std::size_t max_flips = 60;

  void validate() const;
};

struct ManipulationRecord {
  BinaryImage source;
  double target = 0.0;
  BinaryImage output;
  double predictor_value = 0.0;  // C(output)
  std::optional<double> oracle_answer;
  double distance = 0.0;  // plain L2 between source and output
  double objective = 0.0;  // binarized objective of the chosen restart
  std::size_t restart = 0;
};

/// Approximate manipulator for (1-alpha)|C(j) - target| + alpha d(j, i).
/// Greedy searches binary images directly. Pgd descends on j in [0,1]^n from
/// each restart, binarizes every iterate at 0.5 and keeps the best binary
/// point; the restart with the lowest binarized objective wins (ties: lowest
/// restart index).
ManipulationRecord manipulate(const Predictor& predictor, const BinaryImage& source, double target,
                              double alpha, const OptimizerConfig& config, std::uint64_t seed);

/// (1/Q) sum |A(i_k) - c_k|. Throws EmptyBatch; InvalidArgument when an
/// oracle answer is missing.
double manipulation_error(std::span<const ManipulationRecord> batch);
/// (1/Q) sum d(i_k, output_k).
double manipulation_distance(std::span<const ManipulationRecord> batch);

struct IterationMetrics {
  std::size_t round = 0;
  double merr = 0.0;
  double mdist = 0.0;
  std::size_t queries = 0;

  bool operator==(const IterationMetrics&) const = default;
};

struct PipelineConfig {
  std::size_t n_iters = 10;
  std::size_t queries_per_round = 100;
  double alpha = 0.1;
  std::size_t hidden_units = 100;
  TrainConfig round_train;  // retraining at the start of rounds 2..n
  /// Continue from the previous round's weights instead of a fresh init.
  bool warm_start = true;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  std::optional<double> early_stop_merr;
  std::size_t threads = 1;

  void validate() const;
};

struct ManipulatorLearningResult {
  Predictor predictor;
  std::vector<IterationMetrics> metrics;
  CausalDataset dataset;
  std::vector<std::vector<ManipulationRecord>> rounds;
};

/// Iterative manipulator learning. Round 1 uses `initial_predictor` when given
/// (the causal predictor from coarsened data), otherwise trains one; each
/// later round retrains on the grown dataset. Every round manipulates Q
/// uniformly chosen records toward a different causal class, asks the oracle
/// about each output and appends the answers.
ManipulatorLearningResult manipulator_learning(CausalDataset dataset, Oracle& oracle,
                                               const PipelineConfig& config,
                                               std::optional<Predictor> initial_predictor = std::nullopt);

std::string metrics_to_csv(std::span<const IterationMetrics> metrics, const std::string& config_hash = {});

/// Writes before/after PBM pairs of up to `limit` records into `dir`.
std::vector<std::filesystem::path> write_gallery(const std::filesystem::path& dir, std::size_t round,
                                                 std::span<const ManipulationRecord> records,
                                                 std::size_t limit = 16);

/// Fraction of (image, image + v-bar) pairs whose predictor outputs differ by
/// at most `max_change`. Source images are grating samples with H1 = 0.
double vbar_insensitivity(const Predictor& predictor, const GratingConfig& config, std::size_t pairs,
                          std::uint64_t seed, double max_change = 0.1);

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);
void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);
void to_json(nlohmann::json& j, const IterationMetrics& m);

}  // namespace vcfl

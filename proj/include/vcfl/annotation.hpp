#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vcfl/image.hpp"
#include "vcfl/oracle.hpp"
#include "vcfl/pipeline.hpp"

namespace vcfl {

inline constexpr const char* kUnknownLabel = "?";

struct AnnotationConfig {
  std::size_t grid_rows = 5;
  std::size_t grid_cols = 5;
  std::size_t pages_per_session = 10;
  std::size_t quorum = 5;
  /// A session is only created when at least this many images are eligible.
  std::size_t min_session_images = 250;
  std::uint64_t seed = 0;

  std::size_t page_size() const { return grid_rows * grid_cols; }
  std::size_t session_size() const { return page_size() * pages_per_session; }
  void validate() const;
};

/// The binary question asked about every image: labels equal to
/// target_label map to positive_value, every other decided label to
/// negative_value.
struct ExperimentSpec {
  std::string name;
  std::vector<std::string> alphabet;
  std::string target_label;
  double positive_value = 1.0;
  double negative_value = 0.0;

  void validate() const;
  bool accepts(const std::string& label) const;
};

struct StoredImage {
  std::string id;
  BinaryImage image;
};

struct AnnotationSession {
  std::string id;
  std::string experiment_id;
  std::string token;
  std::vector<std::vector<std::string>> pages;  // image ids, row-major grid per page
  std::vector<bool> submitted;
  std::size_t cursor = 0;  // first page not yet submitted

  bool complete() const { return cursor >= pages.size(); }
  std::size_t image_count() const;
};

struct VoteRecord {
  std::string image_id;
  std::string token;
  std::string label;
  std::int64_t timestamp_ms = 0;
};

struct AggregateLabel {
  std::string image_id;
  std::map<std::string, std::size_t> histogram;
  std::size_t votes = 0;
  bool decided = false;
  std::string label;  // empty unless decided
  std::optional<std::string> committed_label;
  bool conflict = false;  // decided label now differs from the committed one
};

/// Strict plurality over a histogram once `quorum` votes are in. Ties and a
/// "?" plurality stay undecided.
std::optional<std::string> plurality(const std::map<std::string, std::size_t>& histogram, std::size_t quorum);

struct CommittedRecord {
  std::string image_id;
  std::string label;
  double value = 0.0;
  BinaryImage image;
};

struct CommitDelta {
  std::string experiment_id;
  std::vector<CommittedRecord> records;
  std::size_t pending = 0;  // images still undecided
};

struct SubmitAck {
  std::size_t recorded = 0;
  std::size_t unchanged = 0;  // identical votes already on file
  std::size_t cursor = 0;
  bool complete = false;
};

/// Experiments, images, sessions and votes. All writes serialize through one
/// exclusive lock; reads share it. With a state directory every write is
/// appended to events.jsonl and snapshot() folds the log into snapshot.json.
class AnnotationStore {
public:
  explicit AnnotationStore(AnnotationConfig config = {},
                           std::optional<std::filesystem::path> state_dir = std::nullopt);

  const AnnotationConfig& config() const { return config_; }

  std::string create_experiment(const ExperimentSpec& spec);
  ExperimentSpec experiment(const std::string& id) const;
  std::vector<std::string> experiment_ids() const;
  std::vector<std::string> add_images(const std::string& experiment_id, std::span<const BinaryImage> images);
  std::size_t image_count(const std::string& experiment_id) const;
  StoredImage image(const std::string& image_id) const;

  AnnotationSession create_session(const std::string& experiment_id, const std::string& token);
  AnnotationSession session(const std::string& session_id, const std::string& token) const;
  std::vector<StoredImage> page(const std::string& session_id, std::size_t k, const std::string& token) const;
  /// `labels` must cover the page exactly. Either every vote is recorded or
  /// none is.
  SubmitAck submit_labels(const std::string& session_id, std::size_t k, const std::string& token,
                          const std::map<std::string, std::string>& labels);

  std::vector<AggregateLabel> aggregate(const std::string& experiment_id) const;
  std::vector<VoteRecord> votes(const std::string& image_id) const;
  std::size_t vote_count(const std::string& experiment_id) const;

  /// Decided, not yet committed images. NoDecidedLabels when nothing in the
  /// experiment is decided at all; an empty delta when all decided images are
  /// already committed.
  CommitDelta commit(const std::string& experiment_id);

  void snapshot();

private:
  struct Image {
    std::string id;
    std::string experiment_id;
    BinaryImage pixels;
    std::map<std::string, VoteRecord> votes;  // by token
    std::optional<std::string> committed;
  };
  struct Experiment {
    ExperimentSpec spec;
    std::vector<std::string> images;
  };

  nlohmann::json state_json() const;
  void load_state(const nlohmann::json& j);
  void apply(const nlohmann::json& event);
  void log(const nlohmann::json& event);
  const Experiment& find_experiment(const std::string& id) const;
  const AnnotationSession& find_session(const std::string& id, const std::string& token) const;
  AggregateLabel aggregate_image(const Image& img) const;

  AnnotationConfig config_;
  std::optional<std::filesystem::path> dir_;
  std::ofstream events_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Experiment> experiments_;
  std::map<std::string, Image> images_;
  std::map<std::string, AnnotationSession> sessions_;
  std::uint64_t next_experiment_ = 1;
  std::uint64_t next_image_ = 1;
  std::uint64_t next_session_ = 1;
};

/// Transport-neutral view of the service, implemented in process by the store
/// and over HTTP by HttpAnnotationClient.
class AnnotationBackend {
public:
  virtual ~AnnotationBackend() = default;
  virtual std::vector<std::string> add_images(const std::string& experiment_id,
                                              std::span<const BinaryImage> images) = 0;
  /// nullopt when the annotator has nothing left to label.
  virtual std::optional<AnnotationSession> open_session(const std::string& experiment_id,
                                                        const std::string& token) = 0;
  virtual std::vector<StoredImage> page(const std::string& session_id, std::size_t k,
                                        const std::string& token) = 0;
  virtual SubmitAck submit(const std::string& session_id, std::size_t k, const std::string& token,
                           const std::map<std::string, std::string>& labels) = 0;
  virtual CommitDelta commit(const std::string& experiment_id) = 0;
};

class StoreBackend final : public AnnotationBackend {
public:
  explicit StoreBackend(AnnotationStore& store) : store_(store) {}
  std::vector<std::string> add_images(const std::string& experiment_id, std::span<const BinaryImage> images) override;
  std::optional<AnnotationSession> open_session(const std::string& experiment_id, const std::string& token) override;
  std::vector<StoredImage> page(const std::string& session_id, std::size_t k, const std::string& token) override;
  SubmitAck submit(const std::string& session_id, std::size_t k, const std::string& token,
                   const std::map<std::string, std::string>& labels) override;
  CommitDelta commit(const std::string& experiment_id) override;

private:
  AnnotationStore& store_;
};

/// A deterministic annotator: token plus labelling rule.
struct ScriptedVoter {
  std::string token;
  std::function<std::string(const BinaryImage&)> label;
};

/// Oracle backed by the annotation service. Each batch is uploaded, every
/// voter works through sessions until nothing is left for it, and the commit
/// delta supplies the answers. Throws NoDecidedLabels if an image of the
/// batch ends undecided.
class AnnotationOracle final : public Oracle {
public:
  AnnotationOracle(AnnotationBackend& backend, std::string experiment_id, std::vector<ScriptedVoter> voters);

  std::vector<double> query_batch(std::span<const BinaryImage> images) override;

protected:
  double answer(const BinaryImage& image) override;

private:
  std::vector<double> run_batch(std::span<const BinaryImage> images);

  AnnotationBackend& backend_;
  std::string experiment_id_;
  std::vector<ScriptedVoter> voters_;
};

/// Folds committed labels into a causal dataset with provenance oracle-query.
void merge_commit(CausalDataset& dataset, const CommitDelta& delta, std::size_t round);

void to_json(nlohmann::json& j, const AnnotationConfig& c);
void from_json(const nlohmann::json& j, AnnotationConfig& c);
void to_json(nlohmann::json& j, const ExperimentSpec& s);
void from_json(const nlohmann::json& j, ExperimentSpec& s);
void to_json(nlohmann::json& j, const AnnotationSession& s);
void from_json(const nlohmann::json& j, AnnotationSession& s);
void to_json(nlohmann::json& j, const AggregateLabel& a);
void from_json(const nlohmann::json& j, AggregateLabel& a);
void to_json(nlohmann::json& j, const CommitDelta& d);
void from_json(const nlohmann::json& j, CommitDelta& d);
void to_json(nlohmann::json& j, const SubmitAck& a);
void from_json(const nlohmann::json& j, SubmitAck& a);
/// {id, side, rows, cols, pixels_base64}
nlohmann::json image_to_json(const std::string& id, const BinaryImage& image);
StoredImage image_from_json(const nlohmann::json& j);

}  // namespace vcfl

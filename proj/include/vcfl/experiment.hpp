#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vcfl/grating.hpp"
#include "vcfl/oracle.hpp"
#include "vcfl/pipeline.hpp"
#include "vcfl/predictor.hpp"

namespace vcfl {

/// Everything a command needs to reproduce its outputs. Sub-config seeds that
/// are not given explicitly follow the top-level seed.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  GratingConfig grating;
  std::size_t observations = 2000;
  std::optional<std::string> dataset_path;  // read instead of generating
  TrainConfig train;                        // Algorithm 1
  PipelineConfig pipeline;                  // Algorithm 2
  OracleMode oracle_mode = OracleMode::Exact;
  std::size_t reps = 1;
  double tolerance = 1e-9;
  std::size_t vbar_pairs = 500;
  std::string output_dir = "out";

  ExperimentConfig();
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// FNV-1a 64 of the canonical (key-sorted, compact) JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& canonical);
std::string config_hash(const ExperimentConfig& c);

/// Reads the embedded config hash of an artifact: "config_hash" in a JSON
/// object, the header line of a JSONL dataset, or "# config_hash=" in a CSV.
std::optional<std::string> artifact_config_hash(const std::filesystem::path& path);
/// Throws HashMismatch when the artifact carries a different (or no) hash.
void verify_artifact(const std::filesystem::path& path, const std::string& expected);

/// Append-only runlog.jsonl inside a run directory. A log destroyed without
/// finish() records the run as incomplete.
class RunLog {
public:
  RunLog(const std::filesystem::path& dir, std::string config_hash, std::string command);
  ~RunLog();
  RunLog(const RunLog&) = delete;
  RunLog& operator=(const RunLog&) = delete;

  void round(const IterationMetrics& m);
  void artifact(const std::filesystem::path& path);
  void note(const std::string& key, const nlohmann::json& value);
  void finish(const std::string& status, std::size_t oracle_queries);
  void fail(const std::string& error);

  const std::filesystem::path& path() const { return path_; }

private:
  void write(nlohmann::json event);

  std::filesystem::path path_;
  std::ofstream out_;
  std::string hash_;
  std::chrono::steady_clock::time_point start_;
  bool finished_ = false;
};

struct GratingRun {
  std::vector<ObservationalRecord> observations;
  Algorithm1Result algorithm1;
  ManipulatorLearningResult learning;
  double vbar_insensitivity = 0.0;
  std::size_t oracle_queries = 0;
  double seconds = 0.0;
};

/// Observational data -> Algorithm 1 -> Algorithm 2 against `oracle`, exactly
/// as `grating run` does it.
GratingRun run_grating(const ExperimentConfig& config, Oracle& oracle);
/// Same, with the synthetic oracle in config.oracle_mode.
GratingRun run_grating(const ExperimentConfig& config);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace vcfl

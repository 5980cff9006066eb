#include "vcfl/experiment.hpp"

#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vcfl/error.hpp"
#include "vcfl/random.hpp"

namespace vcfl {

ExperimentConfig::ExperimentConfig() {
  // Algorithm 1 trains long enough to fit the coarsened labels; each round of
  // Algorithm 2 continues from the previous weights for fewer epochs.
  train.epochs = 100;
  pipeline.round_train.epochs = 20;
}

void ExperimentConfig::validate() const {
  grating.validate();
  train.validate();
  pipeline.validate();
  if (observations < 1) throw Error(ErrorCode::InvalidArgument, "observations must be >= 1");
  if (reps < 1) throw Error(ErrorCode::InvalidArgument, "reps must be >= 1");
  if (!(tolerance > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be > 0");
  if (output_dir.empty()) throw Error(ErrorCode::InvalidArgument, "output directory is empty");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"grating", c.grating},
                     {"observations", c.observations},
                     {"train", c.train},
                     {"pipeline", c.pipeline},
                     {"oracle_mode", std::string(to_string(c.oracle_mode))},
                     {"reps", c.reps},
                     {"tolerance", c.tolerance},
                     {"vbar_pairs", c.vbar_pairs},
                     {"output_dir", c.output_dir}};
  if (c.dataset_path) j["dataset_path"] = *c.dataset_path;
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c = ExperimentConfig{};
  c.seed = j.value("seed", c.seed);
  c.grating.seed = c.seed;
  c.train.seed = c.seed;
  c.pipeline.seed = c.seed;
  c.pipeline.round_train.seed = c.seed;

  // sub-objects are merged over the seeded defaults so partial configs work
  auto merge = [](nlohmann::json base, const nlohmann::json& over) {
    base.merge_patch(over);
    return base;
  };
  if (j.contains("grating")) c.grating = merge(nlohmann::json(c.grating), j["grating"]).get<GratingConfig>();
  if (j.contains("train")) c.train = merge(nlohmann::json(c.train), j["train"]).get<TrainConfig>();
  if (j.contains("pipeline")) {
    auto patch = j["pipeline"];
    auto base = nlohmann::json(c.pipeline);
    if (patch.contains("round_train"))
      patch["round_train"] = merge(base["round_train"], patch["round_train"]);
    if (patch.contains("optimizer")) patch["optimizer"] = merge(base["optimizer"], patch["optimizer"]);
    c.pipeline = merge(base, patch).get<PipelineConfig>();
  }
  c.observations = j.value("observations", c.observations);
  if (j.contains("dataset_path")) c.dataset_path = j["dataset_path"].get<std::string>();
  if (j.contains("oracle_mode")) c.oracle_mode = parse_oracle_mode(j["oracle_mode"].get<std::string>());
  c.reps = j.value("reps", c.reps);
  c.tolerance = j.value("tolerance", c.tolerance);
  c.vbar_pairs = j.value("vbar_pairs", c.vbar_pairs);
  c.output_dir = j.value("output_dir", c.output_dir);
}

std::string config_hash(const nlohmann::json& canonical) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ExperimentConfig& c) {
  auto j = nlohmann::json(c);
  j.erase("output_dir");  // where results go does not change what they are
  return config_hash(j);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::optional<std::string> artifact_config_hash(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  const auto ext = path.extension().string();
  if (ext == ".csv") {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const std::string key = "# config_hash=";
      if (line.rfind(key, 0) == 0) return line.substr(key.size());
      if (!line.empty() && line[0] != '#') break;
    }
    return std::nullopt;
  }
  try {
    if (ext == ".jsonl") {
      const auto first = text.substr(0, text.find('\n'));
      if (first.empty()) return std::nullopt;
      const auto j = nlohmann::json::parse(first);
      if (j.contains("header") && j["header"].contains("config_hash"))
        return j["header"]["config_hash"].get<std::string>();
      return std::nullopt;
    }
    const auto j = nlohmann::json::parse(text);
    if (j.is_object() && j.contains("config_hash")) return j["config_hash"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  return std::nullopt;
}

void verify_artifact(const std::filesystem::path& path, const std::string& expected) {
  const auto found = artifact_config_hash(path);
  if (!found) throw Error(ErrorCode::HashMismatch, path.string() + " carries no config hash");
  if (*found != expected) {
    throw Error(ErrorCode::HashMismatch,
                path.string() + " was produced by config " + *found + ", expected " + expected);
  }
}

RunLog::RunLog(const std::filesystem::path& dir, std::string config_hash, std::string command)
    : path_(dir / "runlog.jsonl"), hash_(std::move(config_hash)), start_(std::chrono::steady_clock::now()) {
  std::filesystem::create_directories(dir);
  out_.open(path_, std::ios::app);
  if (!out_) throw Error(ErrorCode::Io, "cannot open " + path_.string());
  write({{"event", "start"}, {"command", std::move(command)}});
}

RunLog::~RunLog() {
  if (finished_) return;
  try {
    write({{"event", "end"}, {"status", "incomplete"}});
  } catch (...) {
  }
}

void RunLog::write(nlohmann::json event) {
  event["config_hash"] = hash_;
  event["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  out_ << event.dump() << '\n';
  out_.flush();
  if (!out_) throw Error(ErrorCode::Io, "cannot append to " + path_.string());
}

void RunLog::round(const IterationMetrics& m) { write({{"event", "round"}, {"metrics", m}}); }

void RunLog::artifact(const std::filesystem::path& path) {
  write({{"event", "artifact"}, {"path", path.string()}});
}

void RunLog::note(const std::string& key, const nlohmann::json& value) {
  write({{"event", "note"}, {"key", key}, {"value", value}});
}

void RunLog::finish(const std::string& status, std::size_t oracle_queries) {
  write({{"event", "end"}, {"status", status}, {"oracle_queries", oracle_queries}});
  finished_ = true;
}

void RunLog::fail(const std::string& error) {
  write({{"event", "end"}, {"status", "incomplete"}, {"error", error}});
  finished_ = true;
}

GratingRun run_grating(const ExperimentConfig& config, Oracle& oracle) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  GratingRun run;
  if (config.dataset_path) {
    run.observations = dataset_from_jsonl(read_text_file(*config.dataset_path));
  } else {
    Rng rng(derive_seed(config.seed, 1));
    run.observations = generate_observational_dataset(config.grating, config.observations, rng);
  }
  const std::size_t before = oracle.queries();
  const auto classes = observational_classes(run.observations, config.tolerance);
  run.algorithm1 = causal_predictor_training(run.observations, classes, oracle, config.train,
                                             config.pipeline.hidden_units, config.reps, config.tolerance);
  run.learning = manipulator_learning(run.algorithm1.dataset, oracle, config.pipeline, run.algorithm1.predictor);
  run.oracle_queries = oracle.queries() - before;
  if (config.vbar_pairs > 0)
    run.vbar_insensitivity =
        vbar_insensitivity(run.learning.predictor, config.grating, config.vbar_pairs, derive_seed(config.seed, 2));
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

GratingRun run_grating(const ExperimentConfig& config) {
  GratingOracle oracle(config.grating, config.oracle_mode, derive_seed(config.seed, 3));
  return run_grating(config, oracle);
}

}  // namespace vcfl

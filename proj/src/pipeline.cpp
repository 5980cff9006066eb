#include "vcfl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "vcfl/error.hpp"
#include "vcfl/random.hpp"

namespace vcfl {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::CoarsenedObservational: return "coarsened-observational";
    case Provenance::OracleQuery: return "oracle-query";
    case Provenance::Manipulated: return "manipulated";
  }
  return "unknown";
}

Provenance parse_provenance(std::string_view text) {
  if (text == "coarsened-observational") return Provenance::CoarsenedObservational;
  if (text == "oracle-query") return Provenance::OracleQuery;
  if (text == "manipulated") return Provenance::Manipulated;
  throw Error(ErrorCode::Parse, "unknown provenance '" + std::string(text) + "'");
}

void CausalDataset::append(CausalRecord record) {
  if (!(record.label >= 0.0 && record.label <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "causal labels must lie in [0,1]");
  if (!records_.empty() && (record.image.rows() != records_.front().image.rows() ||
                            record.image.cols() != records_.front().image.cols()))
    throw Error(ErrorCode::DimensionMismatch, "all images in a causal dataset share one shape");
  records_.push_back(std::move(record));
}

void CausalDataset::append(std::span<const CausalRecord> records) {
  for (const auto& r : records) append(r);
}

namespace {

std::vector<double> distinct_values(std::vector<double> values, double tolerance) {
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  for (double v : values)
    if (out.empty() || v - out.back() > tolerance) out.push_back(v);
  return out;
}

std::size_t find_class(std::span<const double> classes, double v, double tolerance) {
  for (std::size_t m = 0; m < classes.size(); ++m)
    if (std::abs(classes[m] - v) <= tolerance) return m;
  return classes.size();
}

}  // namespace

std::vector<double> CausalDataset::causal_classes(double tolerance) const {
  std::vector<double> labels;
  labels.reserve(records_.size());
  for (const auto& r : records_) labels.push_back(r.label);
  return distinct_values(std::move(labels), tolerance);
}

TrainingSet CausalDataset::training_set() const {
  TrainingSet set;
  if (records_.empty()) return set;
  set.dim = records_.front().image.size();
  set.inputs.reserve(set.dim * records_.size());
  set.targets.reserve(records_.size());
  for (const auto& r : records_) {
    const auto px = r.image.pixels();
    set.inputs.insert(set.inputs.end(), px.begin(), px.end());
    set.targets.push_back(r.label);
  }
  return set;
}

std::string causal_dataset_to_jsonl(const CausalDataset& data, const std::string& config_hash) {
  std::ostringstream out;
  if (!config_hash.empty())
    out << nlohmann::json{{"header", {{"config_hash", config_hash}, {"format", "vcfl-causal/1"}}}}.dump()
        << '\n';
  for (const auto& r : data.records()) {
    out << nlohmann::json{{"pixels", r.image.to_base64()},
                          {"rows", r.image.rows()},
                          {"cols", r.image.cols()},
                          {"label", r.label},
                          {"provenance", to_string(r.provenance)},
                          {"round", r.round}}
               .dump()
        << '\n';
  }
  return out.str();
}

CausalDataset causal_dataset_from_jsonl(const std::string& text, std::string* config_hash) {
  CausalDataset data;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("header")) {
        if (config_hash) *config_hash = j["header"].value("config_hash", "");
        continue;
      }
      CausalRecord r;
      r.image = BinaryImage::from_base64(j.at("pixels").get<std::string>(), j.at("rows").get<std::size_t>(),
                                         j.at("cols").get<std::size_t>());
      r.label = j.at("label").get<double>();
      r.provenance = parse_provenance(j.at("provenance").get<std::string>());
      r.round = j.at("round").get<std::size_t>();
      data.append(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, "causal dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return data;
}

std::vector<double> observational_classes(const std::vector<ObservationalRecord>& observations,
                                          double tolerance) {
  std::vector<double> values;
  values.reserve(observations.size());
  for (const auto& r : observations) values.push_back(r.obs_prob);
  return distinct_values(std::move(values), tolerance);
}

Algorithm1Result causal_predictor_training(const std::vector<ObservationalRecord>& observations,
                                           std::span<const double> class_values, Oracle& oracle,
                                           const TrainConfig& train_config, std::size_t hidden_units,
                                           std::size_t reps, double tolerance) {
  if (observations.empty()) throw Error(ErrorCode::EmptyBatch, "no observational data");
  if (reps < 1) throw Error(ErrorCode::InvalidArgument, "reps must be >= 1");

  Algorithm1Result out;
  out.class_values.assign(class_values.begin(), class_values.end());
  const std::size_t M = class_values.size();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  std::vector<std::size_t> class_of(observations.size());
  out.representatives.assign(M, kNone);
  for (std::size_t k = 0; k < observations.size(); ++k) {
    const std::size_t m = find_class(class_values, observations[k].obs_prob, tolerance);
    if (m == M) {
      throw Error(ErrorCode::UnknownObservationalClass,
                  "record " + std::to_string(k) + " has obs_prob " +
                      std::to_string(observations[k].obs_prob) + " outside the class set");
    }
    class_of[k] = m;
    if (out.representatives[m] == kNone) out.representatives[m] = k;
  }

  const std::size_t before = oracle.queries();
  out.causal_estimates.assign(M, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t m = 0; m < M; ++m) {
    if (out.representatives[m] == kNone) continue;
    const auto& image = observations[out.representatives[m]].image;
    if (oracle.mode() == OracleMode::Exact) {
      out.causal_estimates[m] = oracle.query(image);
    } else {
      std::vector<BinaryImage> repeated(reps, image);
      const auto answers = oracle.query_batch(repeated);
      double sum = 0.0;
      for (double a : answers) sum += a;
      out.causal_estimates[m] = sum / static_cast<double>(reps);
    }
  }
  out.oracle_queries = oracle.queries() - before;

  for (std::size_t k = 0; k < observations.size(); ++k)
    out.dataset.append({observations[k].image, out.causal_estimates[class_of[k]],
                        Provenance::CoarsenedObservational, 0});

  const auto data = out.dataset.training_set();
  out.predictor = Predictor::random(data.dim, hidden_units, train_config.seed);
  out.training = train(out.predictor, data, train_config);
  return out;
}

std::string to_string(StepRule r) { return r == StepRule::Gradient ? "gradient" : "sign"; }

StepRule parse_step_rule(const std::string& s) {
  if (s == "gradient") return StepRule::Gradient;
  if (s == "sign") return StepRule::Sign;
  throw Error(ErrorCode::InvalidArgument, "unknown step rule '" + s + "'");
}

std::string to_string(Method m) { return m == Method::Pgd ? "pgd" : "greedy"; }

Method parse_method(const std::string& s) {
  if (s == "pgd") return Method::Pgd;
  if (s == "greedy") return Method::Greedy;
  throw Error(ErrorCode::InvalidArgument, "unknown optimizer method '" + s + "'");
}

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

ManipulationRecord greedy_manipulate(const Predictor& predictor, const BinaryImage& source, double target,
                                     double alpha, Distance distance, std::size_t max_flips) {
  const std::size_t n = predictor.input_dim();
  const std::size_t h = predictor.hidden_units();
  const auto p = predictor.params();
  const double* w1 = p.data() + predictor.w1_offset();
  const double* w2 = p.data() + predictor.w2_offset();
  const double b2 = p[predictor.b2_offset()];

  // columns of W1, contiguous per pixel
  std::vector<double> cols(n * h);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t k = 0; k < n; ++k) cols[k * h + u] = w1[u * n + k];

  auto x = source.to_real();
  std::vector<double> z(h);
  for (std::size_t u = 0; u < h; ++u) {
    double acc = p[predictor.b1_offset() + u];
    for (std::size_t k = 0; k < n; ++k)
      if (x[k] != 0.0) acc += w1[u * n + k];
    z[u] = acc;
  }
  auto output_with = [&](std::size_t k, double sign) {
    const double* c = cols.data() + k * h;
    double acc = b2;
    for (std::size_t u = 0; u < h; ++u) acc += w2[u] * logistic(z[u] + sign * c[u]);
    return logistic(acc);
  };
  auto objective = [&](double c, std::size_t flips) {
    const double m = static_cast<double>(flips);
    const double d = distance == Distance::SquaredL2 ? m : std::sqrt(m);
    return (1.0 - alpha) * std::abs(c - target) + alpha * d;
  };

  double c = predictor.forward(x);
  double best_value = objective(c, 0);
  std::size_t best_prefix = 0;
  std::vector<std::size_t> order;
  std::vector<char> used(n, 0);
  const std::size_t limit = std::min(max_flips, n);
  for (std::size_t step = 0; step < limit; ++step) {
    std::size_t pick = n;
    double pick_fit = std::abs(c - target);
    double pick_c = c;
    for (std::size_t k = 0; k < n; ++k) {
      if (used[k]) continue;
      const double ck = output_with(k, x[k] != 0.0 ? -1.0 : 1.0);
      const double fit = std::abs(ck - target);
      if (fit < pick_fit) {
        pick = k;
        pick_fit = fit;
        pick_c = ck;
      }
    }
    if (pick == n) break;  // no single flip moves C closer
    const double sign = x[pick] != 0.0 ? -1.0 : 1.0;
    for (std::size_t u = 0; u < h; ++u) z[u] += sign * cols[pick * h + u];
    x[pick] = 1.0 - x[pick];
    used[pick] = 1;
    order.push_back(pick);
    c = pick_c;
    const double value = objective(c, order.size());
    if (value < best_value) {
      best_value = value;
      best_prefix = order.size();
    }
  }

  ManipulationRecord rec;
  rec.source = source;
  rec.target = target;
  rec.output = source;
  for (std::size_t s = 0; s < best_prefix; ++s) {
    const std::size_t k = order[s];
    rec.output.set(k, rec.output[k] == 0);
  }
  const auto binary = rec.output.to_real();
  rec.predictor_value = predictor.forward(binary);
  rec.objective = objective(rec.predictor_value, best_prefix);
  rec.distance = l2_distance(source, rec.output);
  rec.restart = 0;
  return rec;
}

}  // namespace

void OptimizerConfig::validate() const {
  if (steps < 1 || restarts < 1) throw Error(ErrorCode::InvalidArgument, "steps and restarts must be >= 1");
  if (!(step_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "step size must be > 0");
  if (!(init_noise >= 0.0 && init_noise < 0.5))
    throw Error(ErrorCode::InvalidArgument, "restart noise must lie in [0, 0.5)");
}

ManipulationRecord manipulate(const Predictor& predictor, const BinaryImage& source, double target,
                              double alpha, const OptimizerConfig& config, std::uint64_t seed) {
  config.validate();
  if (!(target >= 0.0 && target <= 1.0)) throw Error(ErrorCode::InvalidArgument, "target outside [0,1]");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha outside [0,1]");
  if (source.size() != predictor.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "image does not match the predictor input");

  if (config.method == Method::Greedy)
    return greedy_manipulate(predictor, source, target, alpha, config.distance, config.max_flips);

  const auto anchor = source.to_real();
  const ManipulationObjective objective{target, anchor, alpha, config.distance};
  const std::size_t n = anchor.size();
  Rng rng(seed);

  // Every iterate is binarized and scored on the binary domain; the best
  // binary point over all restarts wins.
  std::optional<ManipulationRecord> best;
  std::vector<double> j(n), grad(n), binary(n);
  for (std::size_t r = 0; r < config.restarts; ++r) {
    for (std::size_t k = 0; k < n; ++k)
      j[k] = std::clamp(anchor[k] + uniform(rng, -config.init_noise, config.init_noise), 0.0, 1.0);

    double best_value = std::numeric_limits<double>::infinity();
    std::vector<double> best_binary;
    bool finite = true;
    for (std::size_t step = 0; step <= config.steps; ++step) {
      const double value = input_gradient(predictor, j, objective, grad);
      if (!std::isfinite(value)) {
        finite = false;
        break;
      }
      for (std::size_t k = 0; k < n; ++k) binary[k] = j[k] >= 0.5 ? 1.0 : 0.0;
      const double bvalue = objective.value(predictor, binary);
      if (bvalue < best_value) {
        best_value = bvalue;
        best_binary = binary;
      }
      if (step == config.steps) break;
      for (std::size_t k = 0; k < n; ++k) {
        const double g = grad[k];
        const double delta = config.rule == StepRule::Gradient ? g : (g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0));
        j[k] = std::clamp(j[k] - config.step_size * delta, 0.0, 1.0);
      }
    }
    if (!finite) continue;  // NonFiniteObjective aborts this restart only

    ManipulationRecord rec;
    rec.source = source;
    rec.target = target;
    rec.output = BinaryImage::from_real(best_binary, source.rows(), source.cols());
    rec.predictor_value = predictor.forward(best_binary);
    rec.objective = best_value;
    rec.distance = l2_distance(source, rec.output);
    rec.restart = r;
    if (!best || rec.objective < best->objective) best = std::move(rec);
  }
  if (!best) throw Error(ErrorCode::NonFinite, "every restart hit a non-finite objective");
  return *best;
}

double manipulation_error(std::span<const ManipulationRecord> batch) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "manipulation error of an empty batch");
  double total = 0.0;
  for (const auto& r : batch) {
    if (!r.oracle_answer) throw Error(ErrorCode::InvalidArgument, "record without an oracle answer");
    total += std::abs(*r.oracle_answer - r.target);
  }
  return total / static_cast<double>(batch.size());
}

double manipulation_distance(std::span<const ManipulationRecord> batch) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "manipulation distance of an empty batch");
  double total = 0.0;
  for (const auto& r : batch) total += r.distance;
  return total / static_cast<double>(batch.size());
}

void PipelineConfig::validate() const {
  if (n_iters < 1) throw Error(ErrorCode::InvalidArgument, "nIters must be >= 1");
  if (queries_per_round < 1) throw Error(ErrorCode::InvalidArgument, "Q must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha outside [0,1]");
  if (threads < 1) throw Error(ErrorCode::InvalidArgument, "threads must be >= 1");
  round_train.validate();
  optimizer.validate();
}

namespace {

template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::vector<std::jthread> workers;
  const std::size_t t = std::min(threads, count);
  for (std::size_t w = 0; w < t; ++w)
    workers.emplace_back([&, w] {
      for (std::size_t k = w; k < count; k += t) fn(k);
    });
}

}  // namespace

ManipulatorLearningResult manipulator_learning(CausalDataset dataset, Oracle& oracle,
                                               const PipelineConfig& config,
                                               std::optional<Predictor> initial_predictor) {
  config.validate();
  if (dataset.size() == 0) throw Error(ErrorCode::EmptyBatch, "empty causal dataset");
  const auto classes = dataset.causal_classes();
  if (classes.size() < 2)
    throw Error(ErrorCode::InsufficientClasses, "manipulation needs at least two causal classes");
  if (config.queries_per_round > dataset.size())
    throw Error(ErrorCode::InvalidArgument, "Q exceeds the dataset size");

  ManipulatorLearningResult out;
  const std::size_t dim = dataset[0].image.size();
  Predictor model = initial_predictor ? std::move(*initial_predictor)
                                      : Predictor::random(dim, config.hidden_units, config.seed);
  const bool use_initial_as_is = initial_predictor.has_value();

  for (std::size_t round = 1; round <= config.n_iters; ++round) {
    if (round > 1 || !use_initial_as_is) {
      if (!config.warm_start) model = Predictor::random(dim, config.hidden_units, derive_seed(config.seed, round));
      TrainConfig tc = config.round_train;
      tc.seed = derive_seed(config.round_train.seed, round);
      train(model, dataset.training_set(), tc);
    }

    // Sources without replacement, targets uniform over the other classes.
    Rng rng(derive_seed(config.seed, round, 0x5eed));
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::vector<std::size_t> sources(config.queries_per_round);
    for (std::size_t k = 0; k < sources.size(); ++k) {
      std::swap(order[k], order[k + uniform_index(rng, order.size() - k)]);
      sources[k] = order[k];
    }
    std::vector<double> targets(sources.size());
    for (std::size_t k = 0; k < sources.size(); ++k) {
      const std::size_t own = find_class(classes, dataset[sources[k]].label, 1e-9);
      std::size_t pick = uniform_index(rng, classes.size() - 1);
      if (pick >= own) ++pick;
      targets[k] = classes[pick];
    }

    std::vector<ManipulationRecord> batch(sources.size());
    parallel_for(sources.size(), config.threads, [&](std::size_t k) {
      batch[k] = manipulate(model, dataset[sources[k]].image, targets[k], config.alpha, config.optimizer,
                            derive_seed(config.seed, round, k + 1));
    });

    // Single committer: queries and appends happen in batch order.
    std::vector<BinaryImage> outputs;
    outputs.reserve(batch.size());
    for (const auto& r : batch) outputs.push_back(r.output);
    const auto answers = oracle.query_batch(outputs);
    for (std::size_t k = 0; k < batch.size(); ++k) {
      batch[k].oracle_answer = answers[k];
      dataset.append({batch[k].output, answers[k], Provenance::Manipulated, round});
    }

    IterationMetrics m{round, manipulation_error(batch), manipulation_distance(batch), oracle.queries()};
    out.metrics.push_back(m);
    out.rounds.push_back(std::move(batch));
    if (config.early_stop_merr && m.merr <= *config.early_stop_merr) break;
  }
  out.predictor = std::move(model);
  out.dataset = std::move(dataset);
  return out;
}

std::string metrics_to_csv(std::span<const IterationMetrics> metrics, const std::string& config_hash) {
  std::ostringstream out;
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "round,merr,mdist,queries\n";
  out.precision(17);
  for (const auto& m : metrics) out << m.round << ',' << m.merr << ',' << m.mdist << ',' << m.queries << '\n';
  return out.str();
}

std::vector<std::filesystem::path> write_gallery(const std::filesystem::path& dir, std::size_t round,
                                                 std::span<const ManipulationRecord> records,
                                                 std::size_t limit) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (std::size_t k = 0; k < std::min(limit, records.size()); ++k) {
    for (int after = 0; after < 2; ++after) {
      char name[64];
      std::snprintf(name, sizeof name, "round%02zu_%03zu_%s.pbm", round, k, after ? "after" : "before");
      const auto path = dir / name;
      std::ofstream f(path);
      if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
      f << to_pbm(after ? records[k].output : records[k].source);
      written.push_back(path);
    }
  }
  return written;
}

double vbar_insensitivity(const Predictor& predictor, const GratingConfig& config, std::size_t pairs,
                          std::uint64_t seed, double max_change) {
  if (pairs == 0) throw Error(ErrorCode::InvalidArgument, "need at least one pair");
  Rng rng(seed);
  std::size_t stable = 0;
  for (std::size_t k = 0; k < pairs; ++k) {
    auto sample = grating_sample(config, rng, 0);
    BinaryImage with_bar = sample.pixels;
    const std::size_t col = uniform_index(rng, config.side);
    for (std::size_t r = 0; r < config.side; ++r) with_bar.set(r, col, true);
    const double a = predictor.forward(sample.pixels.to_real());
    const double b = predictor.forward(with_bar.to_real());
    stable += std::abs(a - b) <= max_change;
  }
  return static_cast<double>(stable) / static_cast<double>(pairs);
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = nlohmann::json{{"steps", c.steps},
                     {"step_size", c.step_size},
                     {"restarts", c.restarts},
                     {"init_noise", c.init_noise},
                     {"rule", to_string(c.rule)},
                     {"distance", to_string(c.distance)},
                     {"method", to_string(c.method)},
                     {"max_flips", c.max_flips}};
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  c = OptimizerConfig{};
  c.steps = j.value("steps", c.steps);
  c.step_size = j.value("step_size", c.step_size);
  c.restarts = j.value("restarts", c.restarts);
  c.init_noise = j.value("init_noise", c.init_noise);
  if (j.contains("rule")) c.rule = parse_step_rule(j.at("rule").get<std::string>());
  if (j.contains("distance")) c.distance = parse_distance(j.at("distance").get<std::string>());
  if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
  c.max_flips = j.value("max_flips", c.max_flips);
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = nlohmann::json{{"n_iters", c.n_iters},
                     {"queries_per_round", c.queries_per_round},
                     {"alpha", c.alpha},
                     {"hidden_units", c.hidden_units},
                     {"round_train", c.round_train},
                     {"warm_start", c.warm_start},
                     {"optimizer", c.optimizer},
                     {"seed", c.seed},
                     {"threads", c.threads}};
  if (c.early_stop_merr) j["early_stop_merr"] = *c.early_stop_merr;
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  c = PipelineConfig{};
  c.n_iters = j.value("n_iters", c.n_iters);
  c.queries_per_round = j.value("queries_per_round", c.queries_per_round);
  c.alpha = j.value("alpha", c.alpha);
  c.hidden_units = j.value("hidden_units", c.hidden_units);
  if (j.contains("round_train")) c.round_train = j.at("round_train").get<TrainConfig>();
  c.warm_start = j.value("warm_start", c.warm_start);
  if (j.contains("optimizer")) c.optimizer = j.at("optimizer").get<OptimizerConfig>();
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  if (j.contains("early_stop_merr")) c.early_stop_merr = j.at("early_stop_merr").get<double>();
}

void to_json(nlohmann::json& j, const IterationMetrics& m) {
  j = nlohmann::json{{"round", m.round}, {"merr", m.merr}, {"mdist", m.mdist}, {"queries", m.queries}};
}

}  // namespace vcfl

#include "vcfl/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vcfl/error.hpp"
#include "vcfl/random.hpp"

namespace vcfl {

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_dim(std::size_t got, std::size_t want) {
  if (got != want)
    throw Error(ErrorCode::DimensionMismatch,
                "input has " + std::to_string(got) + " entries, model expects " + std::to_string(want));
}

// Indices of non-zero inputs. Skipping exact zeros does not change any sum.
void nonzero_indices(std::span<const double> x, std::vector<std::size_t>& out) {
  out.clear();
  for (std::size_t j = 0; j < x.size(); ++j)
    if (x[j] != 0.0) out.push_back(j);
}

double output_delta(Loss loss, double y, double t) {
  if (loss == Loss::SquaredError) return 2.0 * (y - t) * y * (1.0 - y);
  return y - t;
}

// Adds scale * d(loss)/d(params) for one example into `grad`; returns the loss.
double accumulate_example(const Predictor& model, std::span<const double> x, double target, Loss loss,
                          double scale, std::span<double> grad, std::vector<double>& hidden,
                          std::vector<std::size_t>& nz) {
  const std::size_t n = model.input_dim();
  const std::size_t H = model.hidden_units();
  const auto p = model.params();
  nonzero_indices(x, nz);

  double z2 = p[model.b2_offset()];
  for (std::size_t k = 0; k < H; ++k) {
    const double* w = p.data() + k * n;
    double z = p[model.b1_offset() + k];
    for (std::size_t j : nz) z += w[j] * x[j];
    hidden[k] = logistic(z);
    z2 += p[model.w2_offset() + k] * hidden[k];
  }
  const double y = logistic(z2);
  const double d_out = scale * output_delta(loss, y, target);

  grad[model.b2_offset()] += d_out;
  for (std::size_t k = 0; k < H; ++k) {
    const double h = hidden[k];
    grad[model.w2_offset() + k] += d_out * h;
    const double d_hidden = d_out * p[model.w2_offset() + k] * h * (1.0 - h);
    grad[model.b1_offset() + k] += d_hidden;
    double* g = grad.data() + k * n;
    for (std::size_t j : nz) g[j] += d_hidden * x[j];
  }
  return loss_value(loss, y, target);
}

}  // namespace

Predictor::Predictor(std::size_t input_dim, std::size_t hidden_units)
    : input_dim_(input_dim), hidden_(hidden_units), params_(hidden_units * input_dim + 2 * hidden_units + 1, 0.0) {
  if (input_dim == 0 || hidden_units == 0)
    throw Error(ErrorCode::InvalidArgument, "predictor dimensions must be positive");
}

Predictor Predictor::random(std::size_t input_dim, std::size_t hidden_units, std::uint64_t seed) {
  Predictor m(input_dim, hidden_units);
  Rng rng(seed);
  const double r1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden_units));
  for (std::size_t k = 0; k < m.b1_offset(); ++k) m.params_[k] = uniform(rng, -r1, r1);
  for (std::size_t k = 0; k < hidden_units; ++k) m.params_[m.w2_offset() + k] = uniform(rng, -r2, r2);
  return m;
}

double Predictor::forward(std::span<const double> x) const {
  std::vector<double> hidden(hidden_);
  return forward(x, hidden);
}

double Predictor::forward(std::span<const double> x, std::span<double> hidden) const {
  check_dim(x.size(), input_dim_);
  double z2 = params_[b2_offset()];
  for (std::size_t k = 0; k < hidden_; ++k) {
    const double* w = params_.data() + k * input_dim_;
    double z = params_[b1_offset() + k];
    for (std::size_t j = 0; j < input_dim_; ++j)
      if (x[j] != 0.0) z += w[j] * x[j];
    hidden[k] = logistic(z);
    z2 += params_[w2_offset() + k] * hidden[k];
  }
  return logistic(z2);
}

std::string_view to_string(Loss loss) {
  return loss == Loss::SquaredError ? "squared-error" : "cross-entropy";
}

Loss parse_loss(std::string_view text) {
  if (text == "squared-error") return Loss::SquaredError;
  if (text == "cross-entropy") return Loss::CrossEntropy;
  throw Error(ErrorCode::InvalidArgument, "unknown loss '" + std::string(text) + "'");
}

void TrainingSet::add(std::span<const double> x, double target) {
  if (dim == 0) dim = x.size();
  check_dim(x.size(), dim);
  inputs.insert(inputs.end(), x.begin(), x.end());
  targets.push_back(target);
}

double loss_value(Loss loss, double y, double t) {
  if (loss == Loss::SquaredError) return (y - t) * (y - t);
  // Outputs never reach exactly 0 or 1 in exact arithmetic; clamp the log.
  constexpr double eps = 1e-300;
  return -(t * std::log(std::max(y, eps)) + (1.0 - t) * std::log(std::max(1.0 - y, eps)));
}

double mean_loss(const Predictor& model, const TrainingSet& data, Loss loss) {
  if (data.size() == 0) throw Error(ErrorCode::EmptyBatch, "mean loss of an empty set");
  check_dim(data.dim, model.input_dim());
  std::vector<double> hidden(model.hidden_units());
  double total = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k)
    total += loss_value(loss, model.forward(data.row(k), hidden), data.targets[k]);
  return total / static_cast<double>(data.size());
}

Gradient weight_gradient(const Predictor& model, const TrainingSet& batch, Loss loss) {
  if (batch.size() == 0) throw Error(ErrorCode::EmptyBatch, "gradient of an empty batch");
  check_dim(batch.dim, model.input_dim());
  Gradient g;
  g.values.assign(model.num_params(), 0.0);
  std::vector<double> hidden(model.hidden_units());
  std::vector<std::size_t> nz;
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k)
    total += accumulate_example(model, batch.row(k), batch.targets[k], loss, scale, g.values, hidden, nz);
  g.loss = total * scale;
  return g;
}

double ManipulationObjective::value(const Predictor& model, std::span<const double> j) const {
  check_dim(anchor.size(), j.size());
  double dist = 0.0;
  if (distance == Distance::SquaredL2) {
    for (std::size_t k = 0; k < j.size(); ++k) dist += (j[k] - anchor[k]) * (j[k] - anchor[k]);
  } else {
    for (std::size_t k = 0; k < j.size(); ++k) dist += std::abs(j[k] - anchor[k]);
    dist = std::sqrt(dist);
  }
  return (1.0 - alpha) * std::abs(model.forward(j) - target) + alpha * dist;
}

std::string to_string(Distance d) { return d == Distance::SquaredL2 ? "squared-l2" : "l2"; }

Distance parse_distance(const std::string& s) {
  if (s == "squared-l2") return Distance::SquaredL2;
  if (s == "l2") return Distance::L2;
  throw Error(ErrorCode::InvalidArgument, "unknown distance '" + s + "'");
}

namespace {

// Returns C(x) and writes scale(C(x)) * dC/dx into grad.
template <class Scale>
double output_and_input_gradient(const Predictor& model, std::span<const double> x,
                                 std::span<double> grad, Scale&& scale_of) {
  const std::size_t n = model.input_dim();
  const std::size_t H = model.hidden_units();
  std::vector<double> hidden(H);
  const double y = model.forward(x, hidden);
  std::fill(grad.begin(), grad.end(), 0.0);
  const double scale = scale_of(y);
  if (scale == 0.0) return y;
  const auto p = model.params();
  const double dy = scale * y * (1.0 - y);
  for (std::size_t k = 0; k < H; ++k) {
    const double c = dy * p[model.w2_offset() + k] * hidden[k] * (1.0 - hidden[k]);
    const double* w = p.data() + k * n;
    for (std::size_t j = 0; j < n; ++j) grad[j] += c * w[j];
  }
  return y;
}

}  // namespace

std::vector<double> output_input_gradient(const Predictor& model, std::span<const double> x) {
  check_dim(x.size(), model.input_dim());
  std::vector<double> grad(x.size(), 0.0);
  output_and_input_gradient(model, x, grad, [](double) { return 1.0; });
  return grad;
}

double input_gradient(const Predictor& model, std::span<const double> j,
                      const ManipulationObjective& objective, std::span<double> grad) {
  check_dim(j.size(), model.input_dim());
  check_dim(objective.anchor.size(), model.input_dim());
  check_dim(grad.size(), model.input_dim());
  const double a = objective.alpha;
  const double y = output_and_input_gradient(model, j, grad, [&](double out) {
    const double residual = out - objective.target;
    return (1.0 - a) * (residual > 0.0 ? 1.0 : (residual < 0.0 ? -1.0 : 0.0));
  });
  double dist = 0.0;
  if (objective.distance == Distance::SquaredL2) {
    for (std::size_t k = 0; k < j.size(); ++k) {
      const double diff = j[k] - objective.anchor[k];
      grad[k] += 2.0 * a * diff;
      dist += diff * diff;
    }
    return (1.0 - a) * std::abs(y - objective.target) + a * dist;
  }
  for (std::size_t k = 0; k < j.size(); ++k) dist += std::abs(j[k] - objective.anchor[k]);
  const double root = std::sqrt(dist);
  if (root > 0.0) {
    const double scale = a / (2.0 * root);
    for (std::size_t k = 0; k < j.size(); ++k) {
      const double diff = j[k] - objective.anchor[k];
      grad[k] += diff > 0.0 ? scale : (diff < 0.0 ? -scale : 0.0);
    }
  }
  return (1.0 - a) * std::abs(y - objective.target) + a * root;
}

std::vector<double> input_gradient(const Predictor& model, std::span<const double> j,
                                   const ManipulationObjective& objective) {
  std::vector<double> grad(j.size(), 0.0);
  input_gradient(model, j, objective, grad);
  return grad;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be > 0");
  if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw Error(ErrorCode::InvalidArgument, "momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidArgument, "weight decay must be >= 0");
}

TrainResult train(Predictor& model, const TrainingSet& data, const TrainConfig& config) {
  config.validate();
  if (data.size() == 0) throw Error(ErrorCode::EmptyBatch, "training set is empty");
  check_dim(data.dim, model.input_dim());
  for (double t : data.targets)
    if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidArgument, "targets must lie in [0,1]");

  TrainResult result;
  result.initial_loss = mean_loss(model, data, config.loss);

  Rng rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> velocity(model.num_params(), 0.0);
  std::vector<double> grad(model.num_params(), 0.0);
  std::vector<double> hidden(model.hidden_units());
  std::vector<std::size_t> nz;
  auto params = model.params();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        batch_loss += accumulate_example(model, data.row(idx), data.targets[idx], config.loss, scale,
                                         grad, hidden, nz);
      }
      batch_loss *= scale;
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "loss became " << batch_loss << " at epoch " << epoch << ", batch " << batches
            << " (lr " << config.learning_rate << ")";
        throw Error(ErrorCode::NonFinite, msg.str());
      }
      if (config.weight_decay > 0.0) {
        for (std::size_t q = 0; q < model.b1_offset(); ++q) grad[q] += config.weight_decay * params[q];
        for (std::size_t q = model.w2_offset(); q < model.b2_offset(); ++q)
          grad[q] += config.weight_decay * params[q];
      }
      for (std::size_t q = 0; q < params.size(); ++q) {
        velocity[q] = config.momentum * velocity[q] - config.learning_rate * grad[q];
        params[q] += velocity[q];
      }
      epoch_loss += batch_loss;
      ++batches;
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(batches));
  }
  result.final_loss = mean_loss(model, data, config.loss);
  if (!std::isfinite(result.final_loss))
    throw Error(ErrorCode::NonFinite, "final loss is not finite");
  result.non_decreasing = result.final_loss > result.initial_loss;
  return result;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"momentum", c.momentum},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"seed", c.seed},
                     {"loss", to_string(c.loss)},
                     {"weight_decay", c.weight_decay}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  if (j.contains("loss")) c.loss = parse_loss(j.at("loss").get<std::string>());
  c.weight_decay = j.value("weight_decay", c.weight_decay);
}

std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hex_double(const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0')
    throw Error(ErrorCode::Parse, "bad hex float '" + text + "'");
  return v;
}

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  const auto& m = ckpt.model;
  const auto p = m.params();
  auto block = [&](std::size_t from, std::size_t count) {
    auto arr = nlohmann::json::array();
    for (std::size_t k = from; k < from + count; ++k) arr.push_back(hex_double(p[k]));
    return arr;
  };
  const std::size_t n = m.input_dim(), H = m.hidden_units();
  nlohmann::json j{
      {"format", "vcfl-checkpoint/1"},
      {"input_dim", n},
      {"hidden_units", H},
      {"shapes", {{"w1", {H, n}}, {"b1", {H}}, {"w2", {H}}, {"b2", {1}}}},
      {"weights",
       {{"w1", block(m.w1_offset(), H * n)},
        {"b1", block(m.b1_offset(), H)},
        {"w2", block(m.w2_offset(), H)},
        {"b2", block(m.b2_offset(), 1)}}},
      {"train_config", ckpt.train_config},
      {"seed", ckpt.seed},
      {"config_hash", ckpt.config_hash}};
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    Checkpoint ckpt;
    const std::size_t n = j.at("input_dim").get<std::size_t>();
    const std::size_t H = j.at("hidden_units").get<std::size_t>();
    ckpt.model = Predictor(n, H);
    auto p = ckpt.model.params();
    auto load = [&](const char* name, std::size_t from, std::size_t count) {
      const auto& arr = j.at("weights").at(name);
      if (arr.size() != count)
        throw Error(ErrorCode::DimensionMismatch, std::string("weight block ") + name + " has wrong size");
      for (std::size_t k = 0; k < count; ++k) p[from + k] = parse_hex_double(arr[k].get<std::string>());
    };
    load("w1", ckpt.model.w1_offset(), H * n);
    load("b1", ckpt.model.b1_offset(), H);
    load("w2", ckpt.model.w2_offset(), H);
    load("b2", ckpt.model.b2_offset(), 1);
    ckpt.train_config = j.at("train_config").get<TrainConfig>();
    ckpt.seed = j.value("seed", std::uint64_t{0});
    ckpt.config_hash = j.value("config_hash", "");
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("checkpoint: ") + e.what());
  }
}

}  // namespace vcfl

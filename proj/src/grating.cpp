#include "vcfl/grating.hpp"

#include <sstream>

#include <nlohmann/json.hpp>

#include "vcfl/error.hpp"

namespace vcfl {

std::string_view to_string(OracleMode mode) { return mode == OracleMode::Exact ? "exact" : "sample"; }

OracleMode parse_oracle_mode(std::string_view text) {
  if (text == "exact") return OracleMode::Exact;
  if (text == "sample") return OracleMode::Sample;
  throw Error(ErrorCode::InvalidArgument, "unknown oracle mode '" + std::string(text) + "'");
}

void GratingConfig::validate() const {
  if (side < 3) throw Error(ErrorCode::InvalidArgument, "grating side must be >= 3");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(noise_rate) || !prob(p_h1) || !prob(p_h2))
    throw Error(ErrorCode::InvalidArgument, "rates must lie in [0,1]");
  for (const auto& row : behavior)
    for (double p : row)
      if (!prob(p)) throw Error(ErrorCode::InvalidArgument, "behavior table entry outside [0,1]");
  for (int h1 = 0; h1 < 2; ++h1)
    if (!(behavior[1][h1] > behavior[0][h1]))
      throw Error(ErrorCode::InvalidArgument, "behavior must increase with the h-bar");
  for (int hbar = 0; hbar < 2; ++hbar)
    if (!(behavior[hbar][1] > behavior[hbar][0]))
      throw Error(ErrorCode::InvalidArgument, "behavior must increase with H1");
}

ImageSample grating_sample(const GratingConfig& config, Rng& rng, std::optional<int> force_h1,
                           std::optional<int> force_h2) {
  config.validate();
  ImageSample s;
  s.h1 = force_h1 ? *force_h1 : static_cast<int>(bernoulli(rng, config.p_h1));
  s.h2 = force_h2 ? *force_h2 : static_cast<int>(bernoulli(rng, config.p_h2));
  const std::size_t n = config.side;
  const std::size_t col = s.h1 ? uniform_index(rng, n) : n;
  const std::size_t row = s.h2 ? uniform_index(rng, n) : n;

  for (std::size_t attempt = 0;; ++attempt) {
    if (attempt >= config.max_noise_rejects)
      throw Error(ErrorCode::RejectionExhausted, "background noise keeps completing bars");
    BinaryImage img(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        const bool on_bar = r == row || c == col;
        img.set(r, c, on_bar || bernoulli(rng, config.noise_rate));
      }
    if (count_full_rows(img) == static_cast<std::size_t>(s.h2) &&
        count_full_cols(img) == static_cast<std::size_t>(s.h1)) {
      s.pixels = std::move(img);
      break;
    }
  }
  s.obs_prob = config.behavior[s.h2][s.h1];
  s.t_draw = static_cast<int>(bernoulli(rng, s.obs_prob));
  return s;
}

double grating_causal_value(const GratingConfig& config, bool hbar) {
  const auto& row = config.behavior[hbar ? 1 : 0];
  return row[0] * (1.0 - config.p_h1) + row[1] * config.p_h1;
}

GratingOracle::GratingOracle(const GratingConfig& config, OracleMode mode, std::uint64_t seed)
    : Oracle(mode), config_(config), rng_(seed) {
  config_.validate();
}

double GratingOracle::exact(const BinaryImage& image) const {
  return grating_causal_value(config_, detect_hbar(image));
}

double GratingOracle::answer(const BinaryImage& image) {
  const double p = exact(image);
  if (mode() == OracleMode::Exact) return p;
  std::lock_guard lock(rng_mutex_);
  return bernoulli(rng_, p) ? 1.0 : 0.0;
}

DiscreteWorld grating_world(const GratingConfig& config) {
  config.validate();
  DiscreteWorld w(4, 4);
  for (int h1 = 0; h1 < 2; ++h1) {
    for (int h2 = 0; h2 < 2; ++h2) {
      const std::size_t h = 2 * h1 + h2;
      w.gamma[h] = (h1 ? config.p_h1 : 1.0 - config.p_h1) * (h2 ? config.p_h2 : 1.0 - config.p_h2);
      const std::size_t drawn = 2 * h2 + h1;  // the bars H draws: hbar <- H2, vbar <- H1
      for (std::size_t i = 0; i < 4; ++i) {
        w.beta_at(i, h) = i == drawn ? 1.0 : 0.0;
        const std::size_t hbar = i / 2;
        w.alpha_at(h, i) = 1.0 - config.behavior[hbar][h1];
      }
    }
  }
  return w;
}

std::vector<ObservationalRecord> generate_observational_dataset(const GratingConfig& config,
                                                                std::size_t n, Rng& rng) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "dataset size must be >= 1");
  std::vector<ObservationalRecord> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    auto s = grating_sample(config, rng);
    out.push_back({std::move(s.pixels), s.obs_prob, s.h1, s.h2});
  }
  return out;
}

void to_json(nlohmann::json& j, const GratingConfig& c) {
  j = nlohmann::json{{"side", c.side},
                     {"noise_rate", c.noise_rate},
                     {"behavior", c.behavior},
                     {"p_h1", c.p_h1},
                     {"p_h2", c.p_h2},
                     {"seed", c.seed},
                     {"max_noise_rejects", c.max_noise_rejects}};
}

void from_json(const nlohmann::json& j, GratingConfig& c) {
  c = GratingConfig{};
  c.side = j.value("side", c.side);
  c.noise_rate = j.value("noise_rate", c.noise_rate);
  if (j.contains("behavior")) c.behavior = j.at("behavior").get<BehaviorTable>();
  c.p_h1 = j.value("p_h1", c.p_h1);
  c.p_h2 = j.value("p_h2", c.p_h2);
  c.seed = j.value("seed", c.seed);
  c.max_noise_rejects = j.value("max_noise_rejects", c.max_noise_rejects);
}

std::string dataset_to_jsonl(const std::vector<ObservationalRecord>& records,
                             const std::string& config_hash) {
  std::ostringstream out;
  if (!config_hash.empty())
    out << nlohmann::json{{"header", {{"config_hash", config_hash}, {"format", "vcfl-dataset/1"}}}}.dump()
        << '\n';
  for (const auto& r : records) {
    nlohmann::json line{{"pixels", r.image.to_base64()},
                        {"side", r.image.side()},
                        {"obs_prob", r.obs_prob}};
    if (r.h1) line["h1"] = *r.h1;
    if (r.h2) line["h2"] = *r.h2;
    out << line.dump() << '\n';
  }
  return out.str();
}

std::vector<ObservationalRecord> dataset_from_jsonl(const std::string& text, std::string* config_hash) {
  std::vector<ObservationalRecord> out;
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
      const std::size_t side = j.at("side").get<std::size_t>();
      ObservationalRecord r;
      r.image = BinaryImage::from_base64(j.at("pixels").get<std::string>(), side, side);
      r.obs_prob = j.at("obs_prob").get<double>();
      if (j.contains("h1")) r.h1 = j["h1"].get<int>();
      if (j.contains("h2")) r.h2 = j["h2"].get<int>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, "dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace vcfl

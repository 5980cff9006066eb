#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vcfl/image.hpp"
#include "vcfl/oracle.hpp"
#include "vcfl/random.hpp"
#include "vcfl/world.hpp"

namespace vcfl {

/// P(T=1 | h-bar present, H1), indexed [hbar][h1].
using BehaviorTable = std::array<std::array<double, 2>, 2>;

/// Default behaviour: increasing in the h-bar and in H1, four distinct values.
constexpr BehaviorTable kDefaultBehavior{{{0.1, 0.3}, {0.7, 0.9}}};

/// Grating world: H1 draws a vertical bar and raises P(T=1); H2 draws a
/// horizontal bar, which is the only pixel-level cause of T.
struct GratingConfig {
  std::size_t side = 15;
  double noise_rate = 0.03;
  BehaviorTable behavior = kDefaultBehavior;
  double p_h1 = 0.5;
  double p_h2 = 0.5;
  std::uint64_t seed = 0;
  std::size_t max_noise_rejects = 1000;

  void validate() const;
};

struct ImageSample {
  BinaryImage pixels;
  int h1 = 0;
  int h2 = 0;
  double obs_prob = 0.0;
  int t_draw = 0;
};

/// One grating image. `force_h1` / `force_h2` pin the hidden causes.
ImageSample grating_sample(const GratingConfig& config, Rng& rng,
                           std::optional<int> force_h1 = std::nullopt,
                           std::optional<int> force_h2 = std::nullopt);

/// sum_{h1} behavior[hbar][h1] P(H1 = h1)
double grating_causal_value(const GratingConfig& config, bool hbar);

class GratingOracle final : public Oracle {
public:
  GratingOracle(const GratingConfig& config, OracleMode mode, std::uint64_t seed = 0);

  /// Exact interventional value; does not count as a query.
  double exact(const BinaryImage& image) const;

protected:
  double answer(const BinaryImage& image) override;

private:
  GratingConfig config_;
  std::mutex rng_mutex_;
  Rng rng_;
};

/// The grating model as a finite world over the four bar configurations
/// (image index 2*hbar + vbar) with H = (H1, H2) flattened to 2*h1 + h2.
DiscreteWorld grating_world(const GratingConfig& config);

struct ObservationalRecord {
  BinaryImage image;
  double obs_prob = 0.0;
  std::optional<int> h1;
  std::optional<int> h2;

  bool operator==(const ObservationalRecord&) const = default;
};

std::vector<ObservationalRecord> generate_observational_dataset(const GratingConfig& config,
                                                                std::size_t n, Rng& rng);

void to_json(nlohmann::json& j, const GratingConfig& c);
void from_json(const nlohmann::json& j, GratingConfig& c);

/// One line per record: {"pixels": base64, "side", "obs_prob", "h1", "h2"}.
/// An optional first line {"header": {...}} carries provenance.
std::string dataset_to_jsonl(const std::vector<ObservationalRecord>& records,
                             const std::string& config_hash = {});
std::vector<ObservationalRecord> dataset_from_jsonl(const std::string& text,
                                                    std::string* config_hash = nullptr);

}  // namespace vcfl

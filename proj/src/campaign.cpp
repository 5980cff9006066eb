#include "vcfl/campaign.hpp"

#include <algorithm>
#include <chrono>

#include <nlohmann/json.hpp>

#include "vcfl/error.hpp"
#include "vcfl/random.hpp"

namespace vcfl {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::size_t draw_between(Rng& rng, std::size_t lo, std::size_t hi) {
  if (lo > hi) throw Error(ErrorCode::InvalidArgument, "empty size range");
  return lo + uniform_index(rng, hi - lo + 1);
}

// Distinct values in [0.02, 0.98] with pairwise gaps of at least min_gap.
std::vector<double> separated_values(std::size_t m, Rng& rng, double min_gap) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<double> v(m);
    for (auto& x : v) x = uniform(rng, 0.02, 0.98);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    bool ok = true;
    for (std::size_t q = 1; q < m; ++q) ok = ok && sorted[q] - sorted[q - 1] >= min_gap;
    if (ok) return v;
  }
  throw Error(ErrorCode::RejectionExhausted, "cannot space the class values");
}

}  // namespace

std::string_view to_string(SweepMode mode) { return mode == SweepMode::Constrained ? "constrained" : "auxiliary"; }

SweepMode parse_sweep_mode(std::string_view text) {
  if (text == "constrained") return SweepMode::Constrained;
  if (text == "auxiliary") return SweepMode::Auxiliary;
  throw Error(ErrorCode::InvalidArgument, "unknown sweep mode '" + std::string(text) + "'");
}

CctSweepReport run_cct_sweep(const CctSweepConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  CctSweepReport report;
  Rng rng(config.seed);
  for (std::size_t t = 0; t < config.trials; ++t) {
    const std::size_t k = draw_between(rng, config.k_min, config.k_max);
    const std::size_t n = draw_between(rng, config.n_min, config.n_max);
    DiscreteWorld w;
    try {
      if (config.mode == SweepMode::Constrained) {
        const auto spec = random_observational_spec(n, rng);
        w = sample_world_constrained(spec, k, rng);
      } else {
        w = sample_world(k, n, rng);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::RejectionExhausted) throw;
      ++report.rejected;
      continue;
    }
    ++report.trials;
    try {
      const auto obs = observational_partition(w, config.tolerance);
      const auto cau = causal_partition(w, config.tolerance);
      if (!is_coarsening(cau, obs).holds) {
        ++report.violations;
        if (report.examples.size() < 3) report.examples.push_back(w);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::AmbiguousClustering) throw;
      ++report.ambiguous;
    }
  }
  report.seconds = seconds_since(t0);
  return report;
}

std::vector<CausalClassSpec> random_nested_spec(std::size_t n, Rng& rng, double min_gap) {
  const auto obs = random_blocks(n, rng);
  const auto groups = random_blocks(obs.size(), rng);
  const auto values = separated_values(groups.size(), rng, min_gap);
  std::vector<CausalClassSpec> spec;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    CausalClassSpec c;
    c.value = values[g];
    for (auto o : groups[g]) c.observational_classes.push_back(obs[o]);
    spec.push_back(std::move(c));
  }
  return spec;
}

Theorem2Report run_theorem2(const Theorem2Config& config) {
  if (config.n_max > kMaxEnumeratedImages)
    throw Error(ErrorCode::InvalidArgument, "partition enumeration is limited to 8 images");
  const auto t0 = std::chrono::steady_clock::now();
  Theorem2Report report;
  Rng rng(config.seed);
  while (report.worlds < config.worlds) {
    const std::size_t k = draw_between(rng, config.k_min, config.k_max);
    const std::size_t n = draw_between(rng, config.n_min, config.n_max);
    DiscreteWorld w;
    try {
      w = sample_world_nested(random_nested_spec(n, rng), k, rng);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::RejectionExhausted) throw;
      continue;
    }
    ++report.worlds;
    const auto r = verify_complete_description(w, spurious_correlate(w, config.tolerance), config.tolerance);
    report.max_cell_error = std::max(report.max_cell_error, r.max_cell_error);
    report.max_partitions = std::max(report.max_partitions, r.partitions_enumerated);
    if (r.passed())
      ++report.passed;
    else
      report.failures.push_back(r);
  }
  report.seconds = seconds_since(t0);
  return report;
}

CounterexampleReport run_counterexample(ViolationKind kind, std::size_t k, std::size_t n, std::uint64_t seed,
                                        std::size_t perturbations, double delta, double tolerance) {
  Rng rng(seed);
  CounterexampleReport report;
  report.found = find_cct_violation(kind, k, n, rng, tolerance);
  const auto obs = observational_partition(report.found.world, tolerance);
  const auto cau = causal_partition(report.found.world, tolerance);
  report.causal_over_observational = is_coarsening(cau, obs);
  report.observational_over_causal = is_coarsening(obs, cau);
  report.violation_verified = shows_violation(report.found.world, kind, tolerance);
  for (std::size_t p = 0; p < perturbations; ++p) {
    ++report.perturbations;
    if (coarsening_restored(perturb_alpha(report.found.world, delta, rng), kind, tolerance)) ++report.restored;
  }
  return report;
}

void to_json(nlohmann::json& j, const CctSweepReport& r) {
  j = nlohmann::json{{"trials", r.trials},       {"violations", r.violations}, {"ambiguous", r.ambiguous},
                     {"rejected", r.rejected},   {"examples", r.examples},     {"seconds", r.seconds}};
}

void to_json(nlohmann::json& j, const Theorem2Report& r) {
  j = nlohmann::json{{"worlds", r.worlds},
                     {"passed", r.passed},
                     {"max_cell_error", r.max_cell_error},
                     {"max_partitions", r.max_partitions},
                     {"failures", r.failures},
                     {"seconds", r.seconds}};
}

void to_json(nlohmann::json& j, const CounterexampleReport& r) {
  j = nlohmann::json{{"kind", std::string(to_string(r.found.kind))},
                     {"world", r.found.world},
                     {"causal_coarsens_observational", r.causal_over_observational},
                     {"observational_coarsens_causal", r.observational_over_causal},
                     {"violation_verified", r.violation_verified},
                     {"perturbations", r.perturbations},
                     {"restored", r.restored}};
}

}  // namespace vcfl

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vcfl/cct.hpp"
#include "vcfl/macro.hpp"

namespace vcfl {

// Verification campaigns shared by the CLI, the acceptance binary and Python.

enum class SweepMode {
  Constrained,  // sample_world_constrained on random observational targets
  Auxiliary,    // free worlds: alpha and gamma drawn, beta generic
};
std::string_view to_string(SweepMode mode);
SweepMode parse_sweep_mode(std::string_view text);

struct CctSweepConfig {
  std::size_t trials = 10000;
  SweepMode mode = SweepMode::Constrained;
  std::uint64_t seed = 1;
  double tolerance = kDefaultTolerance;
  std::size_t k_min = 2, k_max = 4;
  std::size_t n_min = 3, n_max = 6;
};

struct CctSweepReport {
  std::size_t trials = 0;
  std::size_t violations = 0;
  std::size_t ambiguous = 0;  // partitions that could not be formed at the tolerance
  std::size_t rejected = 0;   // targets the sampler gave up on
  std::vector<DiscreteWorld> examples;  // first few violating worlds
  double seconds = 0.0;
};

CctSweepReport run_cct_sweep(const CctSweepConfig& config);

/// Random nested target over n images: observational classes grouped into
/// causal classes with values in [0.02, 0.98] at least `min_gap` apart.
std::vector<CausalClassSpec> random_nested_spec(std::size_t n, Rng& rng, double min_gap = 1e-3);

struct Theorem2Config {
  std::size_t worlds = 100;
  std::uint64_t seed = 1;
  std::size_t k_min = 2, k_max = 4;
  std::size_t n_min = 3, n_max = 6;
  double tolerance = kDefaultTolerance;
};

struct Theorem2Report {
  std::size_t worlds = 0;
  std::size_t passed = 0;
  double max_cell_error = 0.0;
  std::size_t max_partitions = 0;  // Bell(n_max) when n_max was drawn
  std::vector<CompleteDescriptionReport> failures;
  double seconds = 0.0;
};

Theorem2Report run_theorem2(const Theorem2Config& config);

struct CounterexampleReport {
  ViolationWorld found;
  CoarseningReport causal_over_observational;
  CoarseningReport observational_over_causal;
  bool violation_verified = false;
  std::size_t perturbations = 0;
  std::size_t restored = 0;
};

/// Finds a violating world, checks it with the partition engine, then applies
/// `perturbations` independent random alpha perturbations of size `delta`.
CounterexampleReport run_counterexample(ViolationKind kind, std::size_t k, std::size_t n, std::uint64_t seed,
                                        std::size_t perturbations = 100, double delta = 1e-3,
                                        double tolerance = kDefaultTolerance);

void to_json(nlohmann::json& j, const CctSweepReport& r);
void to_json(nlohmann::json& j, const Theorem2Report& r);
void to_json(nlohmann::json& j, const CounterexampleReport& r);

}  // namespace vcfl

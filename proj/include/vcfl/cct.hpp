#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "vcfl/partition.hpp"
#include "vcfl/world.hpp"

namespace vcfl {

/// One observational class of a target partition: its images and the value
/// P(T=1 | I=i) every member must take.
struct ObservationalClassSpec {
  std::vector<std::size_t> images;
  double value = 0.5;
};

/// Samples a world whose observational partition is exactly `spec`.
///
/// beta and gamma are drawn freely. For every image the alpha entries of all
/// hidden states but one (h0, the state carrying the largest share of
/// P(I=i)) are drawn uniformly, and alpha(h0, i) is solved from
///
///   alpha(h0,i) beta(i,h0) gamma(h0) = P(T=0|class) P(I=i) - sum_{h!=h0} alpha(h,i) beta(i,h) gamma(h)
///
/// Solutions outside [0,1] are rejected and the free entries redrawn.
/// Throws RejectionExhausted after `max_rejects` rejections in total.
DiscreteWorld sample_world_constrained(std::span<const ObservationalClassSpec> spec, std::size_t k,
                                       Rng& rng, std::size_t max_rejects = 100000);

/// A causal class of a nested target: the observational classes it is made of
/// and its interventional value P(T=1 | man(I=i)).
struct CausalClassSpec {
  std::vector<std::vector<std::size_t>> observational_classes;
  double value = 0.5;
};

/// Samples a world in which each listed observational class is a tie of
/// P(T|I) and each causal class a tie of P(T|man(I)), so the causal partition
/// coarsens the observational one by construction. Observational values are
/// not prescribed: the first image of each observational class is drawn with
/// only its causal constraint, the others solve a 2x2 system in two alpha
/// entries. Requires K >= 2.
DiscreteWorld sample_world_nested(std::span<const CausalClassSpec> spec, std::size_t k, Rng& rng,
                                  std::size_t max_rejects = 100000);

/// Random set partition of {0..n-1} into contiguous-labelled blocks
/// (restricted growth string drawn by a uniform label per element).
std::vector<std::vector<std::size_t>> random_blocks(std::size_t n, Rng& rng);

/// Random observational target over n images with values in [0.02, 0.98]
/// separated by at least `min_gap`.
std::vector<ObservationalClassSpec> random_observational_spec(std::size_t n, Rng& rng,
                                                              double min_gap = 1e-3);

enum class ViolationKind { ObsCoarsensCausal, Incomparable };

std::string_view to_string(ViolationKind kind);
ViolationKind parse_violation_kind(std::string_view text);

struct ViolationWorld {
  DiscreteWorld world;
  ViolationKind kind = ViolationKind::ObsCoarsensCausal;
  /// (h, i) of every alpha entry that was solved rather than sampled.
  std::vector<std::pair<std::size_t, std::size_t>> solved_entries;
};

/// Constructs a measure-zero world that breaks the causal-coarsens-observational
/// relation:
///  - ObsCoarsensCausal: images 0 and 1 share P(T|I) while their interventional
///    values differ.
///  - Incomparable: additionally images 1 and 2 share P(T|man(I)) while their
///    observational values differ, so neither partition refines the other.
/// Each tie is linear in a single alpha entry and solved in closed form.
/// The result is checked with the partition engine before it is returned.
ViolationWorld find_cct_violation(ViolationKind kind, std::size_t k, std::size_t n, Rng& rng,
                                  double tolerance = kDefaultTolerance,
                                  std::size_t max_attempts = 10000);

/// True when the world still shows the violation `kind` describes.
bool shows_violation(const DiscreteWorld& world, ViolationKind kind,
                     double tolerance = kDefaultTolerance);

/// True when the violation is gone and the causal partition coarsens the
/// observational one again.
bool coarsening_restored(const DiscreteWorld& world, ViolationKind kind,
                         double tolerance = kDefaultTolerance);

/// Moves alpha(h, i) by `delta`, flipping its sign if that would leave [0,1].
DiscreteWorld perturb_alpha(const DiscreteWorld& world, std::size_t h, std::size_t i, double delta);
/// Adds U(-delta, delta) to every alpha entry (sign flipped where needed to stay in [0,1]).
DiscreteWorld perturb_alpha(const DiscreteWorld& world, double delta, Rng& rng);

}  // namespace vcfl

#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vcfl/partition.hpp"
#include "vcfl/world.hpp"

namespace vcfl {

/// Macro-variables over the image space: the visual cause C (causal class id)
/// and the spurious correlate S (1-based index of the observational class
/// inside its causal class).
struct MacroAssignment {
  std::vector<std::size_t> c_of;
  std::vector<std::size_t> s_of;
};

/// Requires the causal partition to coarsen the observational one at `tolerance`;
/// throws NotACoarsening otherwise. Inside each causal class the observational
/// classes are numbered 1..M_k by ascending P(T|I).
MacroAssignment spurious_correlate(const DiscreteWorld& world, double tolerance = kDefaultTolerance);

/// Checks that (C,S) induces exactly `observational`, C exactly `causal`, and
/// that S is contiguous from 1 inside every causal class.
bool macro_invariants_hold(const MacroAssignment& a, const Partition& observational,
                           const Partition& causal);

struct CompleteDescriptionReport {
  /// max_i |P(T=1|I=i) - P(T=1|C=c_i,S=s_i)|
  double max_cell_error = 0.0;
  bool cells_match = false;
  std::size_t partitions_enumerated = 0;
  std::size_t partitions_sufficient = 0;
  double entropy_cs = 0.0;
  double min_sufficient_entropy = 0.0;
  /// Block id per image of the lowest-entropy sufficient partition.
  std::vector<std::size_t> minimizer;
  bool minimizer_is_observational = false;
  bool entropy_bound_holds = false;
  bool passed() const { return cells_match && entropy_bound_holds; }
};

constexpr double kCellTolerance = 1e-10;
constexpr std::size_t kMaxEnumeratedImages = 8;

/// Verifies that (C,S) is a complete description of P(T|I): the aggregated
/// cell posteriors reproduce P(T|I) and no other variable X with P(T|X)=P(T|I)
/// has lower Shannon entropy (natural log). X ranges over every set partition
/// of the image space, so N is limited to 8.
CompleteDescriptionReport verify_complete_description(const DiscreteWorld& world,
                                                      const MacroAssignment& assignment,
                                                      double tolerance = kDefaultTolerance);

/// Calls `visit(blocks)` with the block id of every image, for every set
/// partition of {0..n-1} (restricted growth strings, Bell(n) calls).
template <class Visit>
void for_each_set_partition(std::size_t n, Visit&& visit) {
  if (n == 0) return;
  std::vector<std::size_t> code(n, 0);
  std::vector<std::size_t> max_prefix(n, 0);  // max of code[0..k-1]
  while (true) {
    visit(static_cast<const std::vector<std::size_t>&>(code));
    std::size_t k = n - 1;
    while (k > 0 && code[k] == max_prefix[k] + 1) --k;
    if (k == 0) return;
    ++code[k];
    for (std::size_t j = k + 1; j < n; ++j) {
      max_prefix[j] = std::max(max_prefix[j - 1], code[j - 1]);
      code[j] = 0;
    }
  }
}

struct Appendix9Report {
  double interventional[2] = {0.0, 0.0};
  double observational[2] = {0.0, 0.0};
  bool interventional_differ = false;
  bool observational_differ = false;
  bool observational_differs_from_interventional = false;
  bool spurious_constant = false;
  /// P(T|C=c) against P(T|do(C=c)) for each causal class.
  bool cause_keeps_noncausal_information = false;
  bool passed() const {
    return interventional_differ && observational_differ &&
           observational_differs_from_interventional && spurious_constant &&
           cause_keeps_noncausal_information;
  }
};

/// Binary I -> T, I <- H -> T with P(H=1)=0.5, P(I=1|H=0)=0.2, P(I=1|H=1)=0.8
/// and P(T=1|I,H) = {(0,0):0.1, (0,1):0.5, (1,0):0.4, (1,1):0.9}.
DiscreteWorld appendix9_world();

/// Shows that the visual cause can keep predictive information that is not
/// causal even when the spurious correlate is constant.
Appendix9Report appendix9_example(const DiscreteWorld& world);

void to_json(nlohmann::json& j, const MacroAssignment& a);
void to_json(nlohmann::json& j, const CompleteDescriptionReport& r);
void to_json(nlohmann::json& j, const Appendix9Report& r);

}  // namespace vcfl

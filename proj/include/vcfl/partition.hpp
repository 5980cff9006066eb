#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vcfl/world.hpp"

namespace vcfl {

constexpr double kDefaultTolerance = 1e-9;

/// Images grouped into equivalence classes of (approximately) equal value.
/// Class ids are contiguous and numbered by ascending representative value.
struct Partition {
  std::vector<std::size_t> class_of;
  std::vector<double> class_value;
  double tolerance = kDefaultTolerance;

  std::size_t num_images() const { return class_of.size(); }
  std::size_t num_classes() const { return class_value.size(); }
  std::vector<std::size_t> members(std::size_t cls) const;
  std::vector<std::vector<std::size_t>> classes() const;
};

/// Sorted single-linkage grouping: adjacent sorted values within `tolerance`
/// are linked. A linked chain whose span exceeds `tolerance` is reported as
/// AmbiguousClustering instead of being merged.
Partition partition_by_value(std::span<const double> values, double tolerance = kDefaultTolerance);

/// Pi_o: classes of equal P(T | I=i).
Partition observational_partition(const DiscreteWorld& world, double tolerance = kDefaultTolerance);

/// Pi_c: classes of equal P(T | man(I=i)).
Partition causal_partition(const DiscreteWorld& world, double tolerance = kDefaultTolerance);

/// Same class structure (ids are canonical, so this is elementwise).
bool same_classes(const Partition& a, const Partition& b);

struct CoarseningViolation {
  std::size_t first = 0;
  std::size_t second = 0;
  double fine_value_first = 0.0;
  double fine_value_second = 0.0;
  double coarse_value_first = 0.0;
  double coarse_value_second = 0.0;
};

struct CoarseningReport {
  bool holds = true;
  std::vector<CoarseningViolation> violations;
};

/// `coarse` coarsens `fine` iff every class of `fine` lies inside one class of
/// `coarse`. Each violation pairs the first member of a fine class with a
/// member that lands in a different coarse class.
CoarseningReport is_coarsening(const Partition& coarse, const Partition& fine);

void to_json(nlohmann::json& j, const Partition& p);
void to_json(nlohmann::json& j, const CoarseningReport& r);

}  // namespace vcfl

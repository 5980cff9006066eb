#include "vcfl/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vcfl/error.hpp"

namespace vcfl {

std::vector<std::size_t> Partition::members(std::size_t cls) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < class_of.size(); ++i)
    if (class_of[i] == cls) out.push_back(i);
  return out;
}

std::vector<std::vector<std::size_t>> Partition::classes() const {
  std::vector<std::vector<std::size_t>> out(num_classes());
  for (std::size_t i = 0; i < class_of.size(); ++i) out[class_of[i]].push_back(i);
  return out;
}

Partition partition_by_value(std::span<const double> values, double tolerance) {
  if (!(tolerance >= 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be >= 0");
  for (double v : values)
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "non-finite value in partition input");

  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  Partition p;
  p.tolerance = tolerance;
  p.class_of.assign(values.size(), 0);

  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t end = start + 1;
    while (end < order.size() && values[order[end]] - values[order[end - 1]] <= tolerance) ++end;
    const double lo = values[order[start]];
    const double hi = values[order[end - 1]];
    if (hi - lo > tolerance) {
      std::ostringstream msg;
      msg << "linkage chain spans [" << lo << ", " << hi << "], wider than tolerance " << tolerance;
      throw Error(ErrorCode::AmbiguousClustering, msg.str());
    }
    double sum = 0.0;
    for (std::size_t k = start; k < end; ++k) {
      p.class_of[order[k]] = p.class_value.size();
      sum += values[order[k]];
    }
    p.class_value.push_back(sum / static_cast<double>(end - start));
    start = end;
  }
  return p;
}

Partition observational_partition(const DiscreteWorld& world, double tolerance) {
  const auto values = observational_posteriors(world);
  return partition_by_value(values, tolerance);
}

Partition causal_partition(const DiscreteWorld& world, double tolerance) {
  const auto values = interventional_posteriors(world);
  return partition_by_value(values, tolerance);
}

bool same_classes(const Partition& a, const Partition& b) { return a.class_of == b.class_of; }

CoarseningReport is_coarsening(const Partition& coarse, const Partition& fine) {
  if (coarse.num_images() != fine.num_images()) {
    throw Error(ErrorCode::SizeMismatch, "partitions cover " + std::to_string(coarse.num_images()) +
                                             " and " + std::to_string(fine.num_images()) + " images");
  }
  CoarseningReport report;
  for (const auto& cls : fine.classes()) {
    const std::size_t head = cls.front();
    for (std::size_t k = 1; k < cls.size(); ++k) {
      const std::size_t other = cls[k];
      if (coarse.class_of[head] != coarse.class_of[other]) {
        report.violations.push_back({head, other, fine.class_value[fine.class_of[head]],
                                     fine.class_value[fine.class_of[other]],
                                     coarse.class_value[coarse.class_of[head]],
                                     coarse.class_value[coarse.class_of[other]]});
      }
    }
  }
  report.holds = report.violations.empty();
  return report;
}

void to_json(nlohmann::json& j, const Partition& p) {
  j = nlohmann::json{{"class_of", p.class_of},
                     {"class_value", p.class_value},
                     {"tolerance", p.tolerance},
                     {"num_classes", p.num_classes()}};
}

void to_json(nlohmann::json& j, const CoarseningReport& r) {
  auto violations = nlohmann::json::array();
  for (const auto& v : r.violations) {
    violations.push_back({{"pair", {v.first, v.second}},
                          {"fine_values", {v.fine_value_first, v.fine_value_second}},
                          {"coarse_values", {v.coarse_value_first, v.coarse_value_second}}});
  }
  j = nlohmann::json{{"holds", r.holds}, {"violations", violations}};
}

}  // namespace vcfl

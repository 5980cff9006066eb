#include "vcfl/macro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>

#include <nlohmann/json.hpp>

#include "vcfl/error.hpp"

namespace vcfl {

MacroAssignment spurious_correlate(const DiscreteWorld& world, double tolerance) {
  const auto obs = observational_partition(world, tolerance);
  const auto cau = causal_partition(world, tolerance);
  const auto report = is_coarsening(cau, obs);
  if (!report.holds) {
    const auto& v = report.violations.front();
    throw Error(ErrorCode::NotACoarsening,
                "images " + std::to_string(v.first) + " and " + std::to_string(v.second) +
                    " share P(T|I) but not P(T|man(I))");
  }

  MacroAssignment out;
  out.c_of = cau.class_of;
  out.s_of.assign(world.num_images, 0);
  // Observational class ids already ascend with their value.
  std::vector<std::size_t> next(cau.num_classes(), 1);
  std::vector<std::size_t> s_of_obs(obs.num_classes(), 0);
  for (std::size_t o = 0; o < obs.num_classes(); ++o) {
    const std::size_t any = obs.members(o).front();
    s_of_obs[o] = next[cau.class_of[any]]++;
  }
  for (std::size_t i = 0; i < world.num_images; ++i) out.s_of[i] = s_of_obs[obs.class_of[i]];
  return out;
}

bool macro_invariants_hold(const MacroAssignment& a, const Partition& observational,
                           const Partition& causal) {
  const std::size_t n = a.c_of.size();
  if (a.s_of.size() != n || observational.num_images() != n || causal.num_images() != n)
    return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool same_cs = a.c_of[i] == a.c_of[j] && a.s_of[i] == a.s_of[j];
      if (same_cs != (observational.class_of[i] == observational.class_of[j])) return false;
      if ((a.c_of[i] == a.c_of[j]) != (causal.class_of[i] == causal.class_of[j])) return false;
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> s_values;
  for (std::size_t i = 0; i < n; ++i) s_values[a.c_of[i]].push_back(a.s_of[i]);
  for (auto& [c, values] : s_values) {
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t m = 0; m < values.size(); ++m)
      if (values[m] != m + 1) return false;
  }
  return true;
}

namespace {

struct CellStats {
  double mass = 0.0;
  double t1_mass = 0.0;
};

// Aggregates P(I) and P(T=1, I) over the blocks of a labelling.
std::vector<CellStats> aggregate(const std::vector<std::size_t>& block_of,
                                 const std::vector<double>& marginal,
                                 const std::vector<double>& posterior) {
  const std::size_t blocks = *std::max_element(block_of.begin(), block_of.end()) + 1;
  std::vector<CellStats> cells(blocks);
  for (std::size_t i = 0; i < block_of.size(); ++i) {
    cells[block_of[i]].mass += marginal[i];
    cells[block_of[i]].t1_mass += posterior[i] * marginal[i];
  }
  return cells;
}

double entropy(const std::vector<CellStats>& cells) {
  double h = 0.0;
  for (const auto& c : cells)
    if (c.mass > 0.0) h -= c.mass * std::log(c.mass);
  return h;
}

}  // namespace

CompleteDescriptionReport verify_complete_description(const DiscreteWorld& world,
                                                      const MacroAssignment& assignment,
                                                      double tolerance) {
  const std::size_t n = world.num_images;
  if (n > kMaxEnumeratedImages)
    throw Error(ErrorCode::InvalidArgument, "set-partition enumeration limited to N <= 8");
  if (assignment.c_of.size() != n || assignment.s_of.size() != n)
    throw Error(ErrorCode::SizeMismatch, "assignment does not cover the image space");

  // Propagates NotACoarsening for worlds outside the theorem's premise.
  const auto reference = spurious_correlate(world, tolerance);
  (void)reference;

  std::vector<double> marginal(n), posterior(n);
  for (std::size_t i = 0; i < n; ++i) {
    marginal[i] = image_marginal(world, i);
    posterior[i] = observational_posterior(world, i);
  }

  CompleteDescriptionReport report;

  // Part 1: P(T | C, S) aggregated over (c, s) cells.
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> cell_id;
  std::vector<std::size_t> cs_block(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto key = std::make_pair(assignment.c_of[i], assignment.s_of[i]);
    auto it = cell_id.emplace(key, cell_id.size()).first;
    cs_block[i] = it->second;
  }
  const auto cs_cells = aggregate(cs_block, marginal, posterior);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cell = cs_cells[cs_block[i]];
    const double p = cell.t1_mass / cell.mass;
    report.max_cell_error = std::max(report.max_cell_error, std::abs(p - posterior[i]));
  }
  report.cells_match = report.max_cell_error <= kCellTolerance;
  report.entropy_cs = entropy(cs_cells);

  // Part 2: every X with P(T|X) = P(T|I) has H(X) >= H(C,S).
  const auto obs = observational_partition(world, tolerance);
  report.min_sufficient_entropy = std::numeric_limits<double>::infinity();
  report.entropy_bound_holds = true;
  for_each_set_partition(n, [&](const std::vector<std::size_t>& blocks) {
    ++report.partitions_enumerated;
    const auto cells = aggregate(blocks, marginal, posterior);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = cells[blocks[i]].t1_mass / cells[blocks[i]].mass;
      if (std::abs(p - posterior[i]) > tolerance) return;
    }
    ++report.partitions_sufficient;
    const double h = entropy(cells);
    if (h < report.entropy_cs - 1e-12) report.entropy_bound_holds = false;
    if (h < report.min_sufficient_entropy) {
      report.min_sufficient_entropy = h;
      report.minimizer = blocks;
    }
  });

  // Same partition as Pi_o, up to block relabelling.
  report.minimizer_is_observational = !report.minimizer.empty();
  for (std::size_t i = 0; i < n && report.minimizer_is_observational; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if ((report.minimizer[i] == report.minimizer[j]) != (obs.class_of[i] == obs.class_of[j])) {
        report.minimizer_is_observational = false;
        break;
      }
  return report;
}

DiscreteWorld appendix9_world() {
  DiscreteWorld w(2, 2);
  w.gamma = {0.5, 0.5};
  // beta(i, h) = P(I=i | H=h)
  w.beta_at(0, 0) = 0.8;
  w.beta_at(1, 0) = 0.2;
  w.beta_at(0, 1) = 0.2;
  w.beta_at(1, 1) = 0.8;
  // alpha(h, i) = 1 - P(T=1 | I=i, H=h)
  w.alpha_at(0, 0) = 1.0 - 0.1;
  w.alpha_at(1, 0) = 1.0 - 0.5;
  w.alpha_at(0, 1) = 1.0 - 0.4;
  w.alpha_at(1, 1) = 1.0 - 0.9;
  return w;
}

Appendix9Report appendix9_example(const DiscreteWorld& world) {
  if (world.num_images != 2) throw Error(ErrorCode::InvalidArgument, "binary image space expected");
  Appendix9Report r;
  for (std::size_t i = 0; i < 2; ++i) {
    r.interventional[i] = interventional_posterior(world, i);
    r.observational[i] = observational_posterior(world, i);
  }
  const double tol = kDefaultTolerance;
  r.interventional_differ = std::abs(r.interventional[0] - r.interventional[1]) > tol;
  r.observational_differ = std::abs(r.observational[0] - r.observational[1]) > tol;
  r.observational_differs_from_interventional =
      std::abs(r.observational[0] - r.interventional[0]) > tol ||
      std::abs(r.observational[1] - r.interventional[1]) > tol;

  const auto macro = spurious_correlate(world, tol);
  r.spurious_constant = std::all_of(macro.s_of.begin(), macro.s_of.end(),
                                    [](std::size_t s) { return s == 1; });

  // C is bijective with the images here, so P(T|C=c) aggregates a single image
  // and P(T|do(C=c)) is its interventional value.
  const auto cau = causal_partition(world, tol);
  for (std::size_t c = 0; c < cau.num_classes(); ++c) {
    double mass = 0.0, t1 = 0.0;
    for (std::size_t i : cau.members(c)) {
      const double m = image_marginal(world, i);
      mass += m;
      t1 += m * r.observational[i];
    }
    if (std::abs(t1 / mass - cau.class_value[c]) > tol) r.cause_keeps_noncausal_information = true;
  }
  return r;
}

void to_json(nlohmann::json& j, const MacroAssignment& a) {
  j = nlohmann::json{{"c_of", a.c_of}, {"s_of", a.s_of}};
}

void to_json(nlohmann::json& j, const CompleteDescriptionReport& r) {
  j = nlohmann::json{{"max_cell_error", r.max_cell_error},
                     {"cells_match", r.cells_match},
                     {"partitions_enumerated", r.partitions_enumerated},
                     {"partitions_sufficient", r.partitions_sufficient},
                     {"entropy_cs", r.entropy_cs},
                     {"min_sufficient_entropy", r.min_sufficient_entropy},
                     {"minimizer", r.minimizer},
                     {"minimizer_is_observational", r.minimizer_is_observational},
                     {"entropy_bound_holds", r.entropy_bound_holds},
                     {"passed", r.passed()}};
}

void to_json(nlohmann::json& j, const Appendix9Report& r) {
  j = nlohmann::json{{"interventional", {r.interventional[0], r.interventional[1]}},
                     {"observational", {r.observational[0], r.observational[1]}},
                     {"interventional_differ", r.interventional_differ},
                     {"observational_differ", r.observational_differ},
                     {"observational_differs_from_interventional",
                      r.observational_differs_from_interventional},
                     {"spurious_constant", r.spurious_constant},
                     {"cause_keeps_noncausal_information", r.cause_keeps_noncausal_information},
                     {"passed", r.passed()}};
}

}  // namespace vcfl

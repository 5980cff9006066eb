#include "vcfl/cct.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vcfl/error.hpp"

namespace vcfl {

namespace {

std::size_t count_images(std::span<const ObservationalClassSpec> spec) {
  std::size_t n = 0;
  for (const auto& cls : spec) n += cls.images.size();
  return n;
}

void check_cover(const std::vector<std::size_t>& images, std::size_t n) {
  std::vector<bool> seen(n, false);
  for (std::size_t i : images) {
    if (i >= n || seen[i])
      throw Error(ErrorCode::InvalidArgument, "classes must cover images 0..N-1 exactly once");
    seen[i] = true;
  }
}

std::vector<double> hidden_weights(const DiscreteWorld& w, std::size_t i) {
  std::vector<double> out(w.num_h_states);
  for (std::size_t h = 0; h < w.num_h_states; ++h) out[h] = w.beta_at(i, h) * w.gamma[h];
  return out;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

void sample_beta_gamma(DiscreteWorld& w, Rng& rng) {
  for (std::size_t h = 0; h < w.num_h_states; ++h) {
    const auto column = uniform_simplex(rng, w.num_images);
    for (std::size_t i = 0; i < w.num_images; ++i) w.beta_at(i, h) = column[i];
  }
  w.gamma = uniform_simplex(rng, w.num_h_states);
}

// Solves alpha(h0, i) so that P(T=0 | I=i) = target_t0; every other alpha(., i)
// is left as is. Returns false when the solution is outside [0, 1].
bool solve_observational(DiscreteWorld& w, std::size_t i, std::size_t h0, double target_t0) {
  const auto weights = hidden_weights(w, i);
  double marginal = 0.0;
  double rest = 0.0;
  for (std::size_t h = 0; h < w.num_h_states; ++h) {
    marginal += weights[h];
    if (h != h0) rest += w.alpha_at(h, i) * weights[h];
  }
  if (!(weights[h0] > 0.0)) return false;
  const double solved = (target_t0 * marginal - rest) / weights[h0];
  if (!std::isfinite(solved) || !in_unit(solved)) return false;
  w.alpha_at(h0, i) = solved;
  return true;
}

// Solves alpha(h0, i) so that P(T=1 | man(I=i)) = target.
bool solve_interventional(DiscreteWorld& w, std::size_t i, std::size_t h0, double target) {
  double rest = 0.0;
  for (std::size_t h = 0; h < w.num_h_states; ++h)
    if (h != h0) rest += w.alpha_at(h, i) * w.gamma[h];
  if (!(w.gamma[h0] > 0.0)) return false;
  const double solved = ((1.0 - target) - rest) / w.gamma[h0];
  if (!std::isfinite(solved) || !in_unit(solved)) return false;
  w.alpha_at(h0, i) = solved;
  return true;
}

void redraw_alpha_except(DiscreteWorld& w, std::size_t i, std::size_t skip_a, std::size_t skip_b,
                         Rng& rng) {
  for (std::size_t h = 0; h < w.num_h_states; ++h)
    if (h != skip_a && h != skip_b) w.alpha_at(h, i) = uniform01(rng);
}

}  // namespace

DiscreteWorld sample_world_constrained(std::span<const ObservationalClassSpec> spec, std::size_t k,
                                       Rng& rng, std::size_t max_rejects) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "constrained sampling needs K >= 2");
  if (spec.empty()) throw Error(ErrorCode::InvalidArgument, "empty observational spec");
  const std::size_t n = count_images(spec);
  std::vector<std::size_t> all;
  std::vector<double> values;
  for (const auto& cls : spec) {
    if (cls.images.empty()) throw Error(ErrorCode::InvalidArgument, "empty observational class");
    if (!(cls.value > 0.0 && cls.value < 1.0))
      throw Error(ErrorCode::InvalidArgument, "class values must lie strictly inside (0,1)");
    all.insert(all.end(), cls.images.begin(), cls.images.end());
    values.push_back(cls.value);
  }
  check_cover(all, n);
  std::sort(values.begin(), values.end());
  for (std::size_t c = 1; c < values.size(); ++c) {
    if (values[c] - values[c - 1] <= kDefaultTolerance)
      throw Error(ErrorCode::InvalidArgument, "class values must be separated by more than 1e-9");
  }

  DiscreteWorld w(k, n);
  sample_beta_gamma(w, rng);
  std::size_t rejects = 0;
  for (const auto& cls : spec) {
    for (std::size_t i : cls.images) {
      const std::size_t h0 = argmax(hidden_weights(w, i));
      while (true) {
        redraw_alpha_except(w, i, h0, h0, rng);
        if (solve_observational(w, i, h0, 1.0 - cls.value)) break;
        if (++rejects > max_rejects)
          throw Error(ErrorCode::RejectionExhausted,
                      "no alpha in [0,1] after " + std::to_string(max_rejects) + " rejections");
      }
    }
  }

  // The returned world must reproduce the requested partition.
  const auto obs = observational_posteriors(w);
  for (const auto& cls : spec)
    for (std::size_t i : cls.images)
      if (std::abs(obs[i] - cls.value) > kDefaultTolerance)
        throw Error(ErrorCode::SolveFailed, "solved world misses its observational target");
  return w;
}

DiscreteWorld sample_world_nested(std::span<const CausalClassSpec> spec, std::size_t k, Rng& rng,
                                  std::size_t max_rejects) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "nested sampling needs K >= 2");
  std::vector<std::size_t> all;
  for (const auto& causal : spec) {
    if (!(causal.value > 0.0 && causal.value < 1.0))
      throw Error(ErrorCode::InvalidArgument, "causal values must lie strictly inside (0,1)");
    for (const auto& obs : causal.observational_classes) {
      if (obs.empty()) throw Error(ErrorCode::InvalidArgument, "empty observational class");
      all.insert(all.end(), obs.begin(), obs.end());
    }
  }
  if (all.empty()) throw Error(ErrorCode::InvalidArgument, "empty nested spec");
  const std::size_t n = all.size();
  check_cover(all, n);

  std::size_t rejects = 0;
  auto reject = [&] {
    if (++rejects > max_rejects)
      throw Error(ErrorCode::RejectionExhausted,
                  "no feasible nested world after " + std::to_string(max_rejects) + " rejections");
  };

  while (true) {
    DiscreteWorld w(k, n);
    sample_beta_gamma(w, rng);
    bool feasible = true;
    for (const auto& causal : spec) {
      for (const auto& obs : causal.observational_classes) {
        const std::size_t head = obs.front();
        const std::size_t hc = argmax(w.gamma);
        bool placed = false;
        for (std::size_t attempt = 0; attempt < 64 && !placed; ++attempt) {
          redraw_alpha_except(w, head, hc, hc, rng);
          placed = solve_interventional(w, head, hc, causal.value);
          if (!placed) reject();
        }
        if (!placed) {
          feasible = false;
          break;
        }
        const double target_t0 = 1.0 - observational_posterior(w, head);

        for (std::size_t m = 1; m < obs.size(); ++m) {
          const std::size_t i = obs[m];
          const auto wts = hidden_weights(w, i);
          // Pick the hidden pair with the best-conditioned 2x2 system.
          std::size_t h0 = 0, h1 = 1;
          double best = -1.0;
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = a + 1; b < k; ++b) {
              const double det = std::abs(wts[a] * w.gamma[b] - wts[b] * w.gamma[a]);
              if (det > best) best = det, h0 = a, h1 = b;
            }
          double marginal = 0.0;
          for (double v : wts) marginal += v;
          bool ok = false;
          for (std::size_t attempt = 0; attempt < 64 && !ok; ++attempt) {
            redraw_alpha_except(w, i, h0, h1, rng);
            double rhs_obs = target_t0 * marginal;
            double rhs_cau = 1.0 - causal.value;
            for (std::size_t h = 0; h < k; ++h) {
              if (h == h0 || h == h1) continue;
              rhs_obs -= w.alpha_at(h, i) * wts[h];
              rhs_cau -= w.alpha_at(h, i) * w.gamma[h];
            }
            const double det = wts[h0] * w.gamma[h1] - wts[h1] * w.gamma[h0];
            const double a0 = (rhs_obs * w.gamma[h1] - wts[h1] * rhs_cau) / det;
            const double a1 = (wts[h0] * rhs_cau - rhs_obs * w.gamma[h0]) / det;
            ok = std::isfinite(a0) && std::isfinite(a1) && in_unit(a0) && in_unit(a1);
            if (ok) {
              w.alpha_at(h0, i) = a0;
              w.alpha_at(h1, i) = a1;
            } else {
              reject();
              // With K = 2 nothing is left to redraw for this image.
              if (k == 2) break;
            }
          }
          if (!ok) {
            feasible = false;
            break;
          }
        }
        if (!feasible) break;
      }
      if (!feasible) break;
    }
    if (feasible) return w;
  }
}

std::vector<std::vector<std::size_t>> random_blocks(std::size_t n, Rng& rng) {
  if (n == 0) return {};
  const std::size_t num_labels = 1 + uniform_index(rng, n);
  std::vector<std::size_t> label(n);
  for (auto& l : label) l = uniform_index(rng, num_labels);
  // Relabel in order of first appearance so block ids are contiguous.
  std::vector<std::size_t> remap(num_labels, SIZE_MAX);
  std::vector<std::vector<std::size_t>> blocks;
  for (std::size_t i = 0; i < n; ++i) {
    if (remap[label[i]] == SIZE_MAX) {
      remap[label[i]] = blocks.size();
      blocks.emplace_back();
    }
    blocks[remap[label[i]]].push_back(i);
  }
  return blocks;
}

std::vector<ObservationalClassSpec> random_observational_spec(std::size_t n, Rng& rng,
                                                              double min_gap) {
  const auto blocks = random_blocks(n, rng);
  std::vector<ObservationalClassSpec> spec;
  std::vector<double> used;
  for (const auto& block : blocks) {
    double v;
    bool clash;
    do {
      v = uniform(rng, 0.02, 0.98);
      clash = std::any_of(used.begin(), used.end(),
                          [&](double u) { return std::abs(u - v) < min_gap; });
    } while (clash);
    used.push_back(v);
    spec.push_back({block, v});
  }
  return spec;
}

std::string_view to_string(ViolationKind kind) {
  return kind == ViolationKind::ObsCoarsensCausal ? "obs-coarsens-causal" : "incomparable";
}

ViolationKind parse_violation_kind(std::string_view text) {
  if (text == "obs-coarsens-causal") return ViolationKind::ObsCoarsensCausal;
  if (text == "incomparable") return ViolationKind::Incomparable;
  throw Error(ErrorCode::InvalidArgument, "unknown violation kind '" + std::string(text) + "'");
}

bool shows_violation(const DiscreteWorld& world, ViolationKind kind, double tolerance) {
  const auto obs = observational_partition(world, tolerance);
  const auto cau = causal_partition(world, tolerance);
  const bool causal_coarsens = is_coarsening(cau, obs).holds;
  const bool obs_coarsens = is_coarsening(obs, cau).holds;
  if (kind == ViolationKind::ObsCoarsensCausal) return !causal_coarsens && obs_coarsens;
  return !causal_coarsens && !obs_coarsens;
}

bool coarsening_restored(const DiscreteWorld& world, ViolationKind, double tolerance) {
  // causal coarsening observational rules out both violation kinds
  return is_coarsening(causal_partition(world, tolerance), observational_partition(world, tolerance)).holds;
}

DiscreteWorld perturb_alpha(const DiscreteWorld& world, std::size_t h, std::size_t i, double delta) {
  DiscreteWorld out = world;
  double& a = out.alpha_at(h, i);
  if (!in_unit(a + delta)) delta = -delta;
  a += delta;
  return out;
}

DiscreteWorld perturb_alpha(const DiscreteWorld& world, double delta, Rng& rng) {
  DiscreteWorld out = world;
  for (auto& a : out.alpha) {
    double d = uniform(rng, -delta, delta);
    if (!in_unit(a + d)) d = -d;
    a += d;
  }
  return out;
}

ViolationWorld find_cct_violation(ViolationKind kind, std::size_t k, std::size_t n, Rng& rng,
                                  double tolerance, std::size_t max_attempts) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "counterexamples need K >= 2");
  if (n < 2 || (kind == ViolationKind::Incomparable && n < 3))
    throw Error(ErrorCode::InvalidArgument, "too few images for this counterexample kind");

  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    DiscreteWorld w = sample_world(k, n, rng);
    ViolationWorld out;
    out.kind = kind;

    if (kind == ViolationKind::Incomparable) {
      // Tie the interventional values of images 1 and 2.
      const std::size_t hc = argmax(w.gamma);
      if (!solve_interventional(w, 2, hc, interventional_posterior(w, 1))) continue;
      out.solved_entries.emplace_back(hc, 2);
    }

    // Tie the observational value of image 0 to image 1.
    const std::size_t h0 = argmax(hidden_weights(w, 0));
    if (!solve_observational(w, 0, h0, 1.0 - observational_posterior(w, 1))) continue;
    out.solved_entries.emplace_back(h0, 0);

    try {
      if (!shows_violation(w, kind, tolerance)) continue;
    } catch (const Error& e) {
      // An accidental near-tie elsewhere; draw again.
      if (e.code() == ErrorCode::AmbiguousClustering) continue;
      throw;
    }
    out.world = std::move(w);
    return out;
  }
  throw Error(ErrorCode::SolveFailed, "no in-range tie solution after " +
                                          std::to_string(max_attempts) + " attempts");
}

}  // namespace vcfl

#pragma once

#include <cstddef>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vcfl/random.hpp"

namespace vcfl {

/// Finite joint P(T, H, I) with binary T, a flattened hidden domain of size K
/// and N images, in the factorization P(T|H,I) P(I|H) P(H).
///
///   alpha(h, i) = P(T=0 | H=h, I=i)   stored K x N row-major
///   beta(i, h)  = P(I=i | H=h)        stored N x K row-major, columns sum to 1
///   gamma(h)    = P(H=h)
///
/// Every hidden coordinate is treated as a confounder of I and T.
struct DiscreteWorld {
  std::size_t num_h_states = 0;
  std::size_t num_images = 0;
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> gamma;

  DiscreteWorld() = default;
  DiscreteWorld(std::size_t k, std::size_t n);

  double& alpha_at(std::size_t h, std::size_t i) { return alpha[h * num_images + i]; }
  double alpha_at(std::size_t h, std::size_t i) const { return alpha[h * num_images + i]; }
  double& beta_at(std::size_t i, std::size_t h) { return beta[i * num_h_states + h]; }
  double beta_at(std::size_t i, std::size_t h) const { return beta[i * num_h_states + h]; }

  /// Throws InvalidWorld when shapes, ranges or normalization are off.
  void validate() const;

  bool operator==(const DiscreteWorld&) const = default;
};

constexpr double kSimplexTolerance = 1e-12;

/// P(I = i) = sum_h beta(i,h) gamma(h).
double image_marginal(const DiscreteWorld& world, std::size_t image);

/// P(T=1 | I=i). Throws ZeroMarginal when P(I=i) = 0.
double observational_posterior(const DiscreteWorld& world, std::size_t image);

/// P(T=1 | man(I=i)) = sum_h (1 - alpha(h,i)) gamma(h). Independent of beta.
double interventional_posterior(const DiscreteWorld& world, std::size_t image);

std::vector<double> observational_posteriors(const DiscreteWorld& world);
std::vector<double> interventional_posteriors(const DiscreteWorld& world);

/// alpha ~ U[0,1] entrywise; every beta column and gamma uniform on the simplex.
DiscreteWorld sample_world(std::size_t k, std::size_t n, Rng& rng);

void to_json(nlohmann::json& j, const DiscreteWorld& world);
void from_json(const nlohmann::json& j, DiscreteWorld& world);

}  // namespace vcfl

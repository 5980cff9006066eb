#include "vcfl/world.hpp"

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "vcfl/error.hpp"

namespace vcfl {

DiscreteWorld::DiscreteWorld(std::size_t k, std::size_t n)
    : num_h_states(k), num_images(n), alpha(k * n, 0.0), beta(n * k, 0.0), gamma(k, 0.0) {}

void DiscreteWorld::validate() const {
  const std::size_t k = num_h_states;
  const std::size_t n = num_images;
  if (k == 0 || n == 0) throw Error(ErrorCode::InvalidWorld, "K and N must be positive");
  if (alpha.size() != k * n || beta.size() != n * k || gamma.size() != k) {
    throw Error(ErrorCode::InvalidWorld, "parameter arrays do not match K=" + std::to_string(k) +
                                             ", N=" + std::to_string(n));
  }
  auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  for (double v : alpha)
    if (!in_unit(v)) throw Error(ErrorCode::InvalidWorld, "alpha entry outside [0,1]");
  for (double v : beta)
    if (!in_unit(v)) throw Error(ErrorCode::InvalidWorld, "beta entry outside [0,1]");
  double gamma_sum = 0.0;
  for (double v : gamma) {
    if (!in_unit(v)) throw Error(ErrorCode::InvalidWorld, "gamma entry outside [0,1]");
    gamma_sum += v;
  }
  if (std::abs(gamma_sum - 1.0) > kSimplexTolerance)
    throw Error(ErrorCode::InvalidWorld, "gamma does not sum to 1");
  for (std::size_t h = 0; h < k; ++h) {
    double col = 0.0;
    for (std::size_t i = 0; i < n; ++i) col += beta_at(i, h);
    if (std::abs(col - 1.0) > kSimplexTolerance)
      throw Error(ErrorCode::InvalidWorld, "beta column " + std::to_string(h) + " does not sum to 1");
  }
}

namespace {

void check_image(const DiscreteWorld& world, std::size_t image) {
  if (image >= world.num_images)
    throw Error(ErrorCode::InvalidArgument, "image index " + std::to_string(image) + " out of range");
}

}  // namespace

double image_marginal(const DiscreteWorld& world, std::size_t image) {
  check_image(world, image);
  double m = 0.0;
  for (std::size_t h = 0; h < world.num_h_states; ++h) m += world.beta_at(image, h) * world.gamma[h];
  return m;
}

double observational_posterior(const DiscreteWorld& world, std::size_t image) {
  check_image(world, image);
  double joint_t0 = 0.0;
  double marginal = 0.0;
  for (std::size_t h = 0; h < world.num_h_states; ++h) {
    const double w = world.beta_at(image, h) * world.gamma[h];
    joint_t0 += world.alpha_at(h, image) * w;
    marginal += w;
  }
  if (!(marginal > 0.0))
    throw Error(ErrorCode::ZeroMarginal, "P(I=" + std::to_string(image) + ") is zero");
  return 1.0 - joint_t0 / marginal;
}

double interventional_posterior(const DiscreteWorld& world, std::size_t image) {
  check_image(world, image);
  double p = 0.0;
  for (std::size_t h = 0; h < world.num_h_states; ++h)
    p += (1.0 - world.alpha_at(h, image)) * world.gamma[h];
  return p;
}

std::vector<double> observational_posteriors(const DiscreteWorld& world) {
  std::vector<double> out(world.num_images);
  for (std::size_t i = 0; i < world.num_images; ++i) out[i] = observational_posterior(world, i);
  return out;
}

std::vector<double> interventional_posteriors(const DiscreteWorld& world) {
  std::vector<double> out(world.num_images);
  for (std::size_t i = 0; i < world.num_images; ++i) out[i] = interventional_posterior(world, i);
  return out;
}

DiscreteWorld sample_world(std::size_t k, std::size_t n, Rng& rng) {
  if (k == 0 || n == 0) throw Error(ErrorCode::InvalidArgument, "K and N must be >= 1");
  DiscreteWorld world(k, n);
  for (auto& a : world.alpha) a = uniform01(rng);
  for (std::size_t h = 0; h < k; ++h) {
    const auto column = uniform_simplex(rng, n);
    for (std::size_t i = 0; i < n; ++i) world.beta_at(i, h) = column[i];
  }
  world.gamma = uniform_simplex(rng, k);
  return world;
}

void to_json(nlohmann::json& j, const DiscreteWorld& world) {
  j = nlohmann::json{{"K", world.num_h_states},
                     {"N", world.num_images},
                     {"alpha", world.alpha},
                     {"beta", world.beta},
                     {"gamma", world.gamma}};
}

void from_json(const nlohmann::json& j, DiscreteWorld& world) {
  try {
    world.num_h_states = j.at("K").get<std::size_t>();
    world.num_images = j.at("N").get<std::size_t>();
    world.alpha = j.at("alpha").get<std::vector<double>>();
    world.beta = j.at("beta").get<std::vector<double>>();
    world.gamma = j.at("gamma").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("world document: ") + e.what());
  }
  world.validate();
}

}  // namespace vcfl

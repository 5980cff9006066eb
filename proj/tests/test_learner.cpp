#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "vcfl/error.hpp"
#include "vcfl/predictor.hpp"
#include "vcfl/random.hpp"

using namespace vcfl;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) d[k] = a[k] - b[k];
  const double scale = std::max({norm(a), norm(b), 1e-12});
  return norm(d) / scale;
}

// Logistic MLP written out independently of Predictor::forward.
double reference_forward(const Predictor& m, const std::vector<double>& x) {
  const auto p = m.params();
  const std::size_t d = m.input_dim(), h = m.hidden_units();
  double out = p[m.b2_offset()];
  for (std::size_t u = 0; u < h; ++u) {
    double z = p[m.b1_offset() + u];
    for (std::size_t k = 0; k < d; ++k) z += p[u * d + k] * x[k];
    out += p[m.w2_offset() + u] / (1.0 + std::exp(-z));
  }
  return 1.0 / (1.0 + std::exp(-out));
}

TrainingSet random_batch(std::size_t n, std::size_t dim, Rng& rng) {
  TrainingSet s;
  s.dim = dim;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> x(dim);
    for (auto& v : x) v = static_cast<double>(bernoulli(rng, 0.5));
    s.add(x, uniform(rng, 0.05, 0.95));
  }
  return s;
}

void randomize(Predictor& m, Rng& rng, double scale) {
  for (auto& p : m.params()) p = uniform(rng, -scale, scale);
}

}  // namespace

TEST_SUITE("predictor") {
  TEST_CASE("zero weights give one half") {
    Predictor m(9, 4);
    const std::vector<double> x(9, 1.0);
    CHECK(m.forward(x) == 0.5);
  }

  TEST_CASE("seeded init is reproducible") {
    const auto a = Predictor::random(225, 100, 42), b = Predictor::random(225, 100, 42);
    CHECK(a == b);
    const std::vector<double> x(225, 1.0);
    CHECK(a.forward(x) == b.forward(x));
    CHECK_FALSE(a == Predictor::random(225, 100, 43));
  }

  TEST_CASE("forward matches a direct implementation") {
    Rng rng(3);
    auto m = Predictor::random(12, 7, 1);
    randomize(m, rng, 1.0);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> x(12);
      for (auto& v : x) v = uniform01(rng);
      CHECK(m.forward(x) == doctest::Approx(reference_forward(m, x)).epsilon(1e-14));
    }
  }

  TEST_CASE("dimension mismatch") {
    const auto m = Predictor::random(4, 3, 1);
    const std::vector<double> x(5, 0.0);
    CHECK_THROWS_AS(m.forward(x), Error);
  }
}

TEST_SUITE("gradients") {
  TEST_CASE("weight gradient against central differences") {
    Rng rng(2026);
    const double step = 1e-5;
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
      const std::size_t dim = 2 + uniform_index(rng, 10), hidden = 1 + uniform_index(rng, 8);
      auto m = Predictor::random(dim, hidden, t);
      randomize(m, rng, 1.0);
      const auto batch = random_batch(8, dim, rng);
      const Loss loss = t % 2 ? Loss::CrossEntropy : Loss::SquaredError;
      const auto g = weight_gradient(m, batch, loss);
      std::vector<double> fd(m.num_params());
      for (std::size_t k = 0; k < m.num_params(); ++k) {
        auto plus = m, minus = m;
        plus.params()[k] += step;
        minus.params()[k] -= step;
        fd[k] = (mean_loss(plus, batch, loss) - mean_loss(minus, batch, loss)) / (2 * step);
      }
      worst = std::max(worst, rel_error(g.values, fd));
      CHECK(g.loss == doctest::Approx(mean_loss(m, batch, loss)).epsilon(1e-14));
    }
    CHECK(worst <= 1e-5);
  }

  TEST_CASE("zero gradient at a perfect fit") {
    Rng rng(8);
    auto m = Predictor::random(6, 5, 2);
    randomize(m, rng, 1.0);
    auto batch = random_batch(8, 6, rng);
    for (std::size_t k = 0; k < batch.size(); ++k) batch.targets[k] = m.forward(batch.row(k));
    CHECK(norm(weight_gradient(m, batch, Loss::SquaredError).values) <= 1e-8);
  }

  TEST_CASE("doubling residuals doubles the output-layer gradient") {
    Rng rng(9);
    auto m = Predictor::random(6, 5, 3);
    randomize(m, rng, 0.5);
    const auto batch = random_batch(8, 6, rng);
    auto doubled = batch;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const double c = m.forward(batch.row(k));
      doubled.targets[k] = c - 2 * (c - batch.targets[k]);
    }
    const auto g1 = weight_gradient(m, batch, Loss::SquaredError).values;
    const auto g2 = weight_gradient(m, doubled, Loss::SquaredError).values;
    for (std::size_t k = m.w2_offset(); k < m.num_params(); ++k) CHECK(g2[k] == doctest::Approx(2 * g1[k]).epsilon(1e-12));
  }

  TEST_CASE("input gradient against central differences away from kinks") {
    Rng rng(77);
    const double step = 1e-5;
    int checked = 0;
    double worst = 0;
    while (checked < 100) {
      const std::size_t dim = 4 + uniform_index(rng, 20);
      auto m = Predictor::random(dim, 1 + uniform_index(rng, 10), checked);
      randomize(m, rng, 1.0);
      std::vector<double> j(dim), anchor(dim);
      for (std::size_t k = 0; k < dim; ++k) {
        anchor[k] = static_cast<double>(bernoulli(rng, 0.5));
        // keep every |j_k - anchor_k| > 1e-3 so both distance forms are smooth
        j[k] = uniform(rng, 0.01, 0.99);
      }
      const double target = uniform01(rng);
      if (std::abs(m.forward(j) - target) <= 1e-3) continue;
      for (auto dist : {Distance::SquaredL2, Distance::L2}) {
        ManipulationObjective obj{target, anchor, 0.5, dist};
        const auto g = input_gradient(m, j, obj);
        std::vector<double> fd(dim);
        for (std::size_t k = 0; k < dim; ++k) {
          auto p = j, q = j;
          p[k] += step;
          q[k] -= step;
          fd[k] = (obj.value(m, p) - obj.value(m, q)) / (2 * step);
        }
        worst = std::max(worst, rel_error(g, fd));
      }
      ++checked;
    }
    CHECK(worst <= 1e-5);
  }

  TEST_CASE("alpha one leaves only the metric term") {
    Rng rng(5);
    auto m = Predictor::random(10, 4, 1);
    randomize(m, rng, 1.0);
    std::vector<double> j(10), anchor(10, 0.0);
    for (auto& v : j) v = uniform01(rng);
    ManipulationObjective obj{0.3, anchor, 1.0, Distance::SquaredL2};
    const auto g = input_gradient(m, j, obj);
    for (std::size_t k = 0; k < 10; ++k) CHECK(g[k] == doctest::Approx(2 * (j[k] - anchor[k])));
    for (double v : input_gradient(m, anchor, obj)) CHECK(v == 0.0);
  }

  TEST_CASE("zero subgradient at the kink") {
    auto m = Predictor::random(6, 3, 4);
    const std::vector<double> j(6, 0.25), anchor(6, 0.0);
    ManipulationObjective obj{m.forward(j), anchor, 0.0, Distance::SquaredL2};
    for (double v : input_gradient(m, j, obj)) CHECK(v == 0.0);
  }

  TEST_CASE("shared-forward overload returns the objective value") {
    auto m = Predictor::random(6, 3, 4);
    const std::vector<double> j(6, 0.4), anchor(6, 1.0);
    ManipulationObjective obj{0.9, anchor, 0.2, Distance::L2};
    std::vector<double> g(6);
    CHECK(input_gradient(m, j, obj, g) == doctest::Approx(obj.value(m, j)));
    CHECK(g == input_gradient(m, j, obj));
  }
}

TEST_SUITE("training") {
  TEST_CASE("XOR") {
    TrainingSet xor_set;
    xor_set.dim = 2;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) xor_set.add(std::vector<double>{double(a), double(b)}, double(a ^ b));
    auto m = Predictor::random(2, 20, 1);
    TrainConfig cfg;
    cfg.epochs = 2000;
    cfg.learning_rate = 0.5;
    cfg.seed = 1;
    const auto r = train(m, xor_set, cfg);
    CHECK(mean_loss(m, xor_set, Loss::SquaredError) <= 0.01);
    CHECK(r.loss_curve.size() == 2000);
    CHECK(r.final_loss <= r.initial_loss);
    CHECK_FALSE(r.non_decreasing);
  }

  TEST_CASE("training is bit-reproducible") {
    Rng rng(4);
    const auto data = random_batch(100, 16, rng);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 11;
    auto a = Predictor::random(16, 8, 1), b = a;
    train(a, data, cfg);
    train(b, data, cfg);
    CHECK(a == b);
  }

  TEST_CASE("non-finite loss aborts") {
    Rng rng(4);
    const auto data = random_batch(10, 4, rng);
    auto m = Predictor::random(4, 3, 1);
    m.params()[0] = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg;
    try {
      train(m, data, cfg);
      FAIL("expected NonFinite");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonFinite);
    }
  }

  TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.learning_rate = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    TrainingSet bad;
    bad.dim = 1;
    bad.add(std::vector<double>{0.0}, 1.5);
    auto m = Predictor::random(1, 2, 1);
    CHECK_THROWS_AS(train(m, bad, TrainConfig{}), Error);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("write, read, write is byte-identical") {
    Rng rng(6);
    auto m = Predictor::random(225, 100, 5);
    randomize(m, rng, 3.0);
    m.params()[7] = 1e-310;  // subnormal
    m.params()[8] = -0.0;
    TrainConfig cfg;
    cfg.loss = Loss::CrossEntropy;
    const Checkpoint ck{m, cfg, 99, "0123456789abcdef"};
    const auto text = checkpoint_to_json(ck).dump();
    const auto back = checkpoint_from_json(nlohmann::json::parse(text));
    CHECK(back.model == m);
    CHECK(std::signbit(back.model.params()[8]));
    CHECK(back.seed == 99);
    CHECK(back.config_hash == "0123456789abcdef");
    CHECK(checkpoint_to_json(back).dump() == text);
  }

  TEST_CASE("hex floats") {
    Rng rng(1);
    for (int t = 0; t < 1000; ++t) {
      const double v = uniform(rng, -1e6, 1e6) * std::pow(10.0, uniform(rng, -300, 0));
      CHECK(parse_hex_double(hex_double(v)) == v);
    }
    CHECK_THROWS_AS(parse_hex_double("zz"), Error);
  }

  TEST_CASE("wrong weight block size") {
    auto j = checkpoint_to_json({Predictor::random(4, 2, 1), {}, 0, ""});
    j["weights"]["w2"].erase(0);
    CHECK_THROWS_AS(checkpoint_from_json(j), Error);
  }
}

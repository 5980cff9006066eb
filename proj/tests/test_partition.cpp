#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "vcfl/cct.hpp"
#include "vcfl/error.hpp"
#include "vcfl/grating.hpp"
#include "vcfl/macro.hpp"
#include "vcfl/partition.hpp"
#include "vcfl/world.hpp"

using namespace vcfl;

namespace {

// K=2, N=2, image = h, alpha depends only on h.
DiscreteWorld w0() {
  DiscreteWorld w(2, 2);
  w.gamma = {0.5, 0.5};
  w.beta = {1.0, 0.0, 0.0, 1.0};
  w.alpha = {0.9, 0.9, 0.3, 0.3};
  return w;
}

DiscreteWorld constant_alpha(std::size_t k, std::size_t n, double a, std::uint64_t seed) {
  Rng rng(seed);
  auto w = sample_world(k, n, rng);
  for (auto& v : w.alpha) v = a;
  return w;
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no exception");
  return ErrorCode::Io;
}

}  // namespace

TEST_SUITE("world") {
  TEST_CASE("W0 posteriors against the joint table") {
    const auto w = w0();
    w.validate();
    CHECK(observational_posterior(w, 0) == doctest::Approx(oracle::conditional(w, 0)).epsilon(1e-15));
    CHECK(oracle::conditional(w, 0) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(oracle::conditional(w, 1) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(observational_posterior(w, 1) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(oracle::intervened(w, 0) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(interventional_posterior(w, 0) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(interventional_posterior(w, 1) == doctest::Approx(0.4).epsilon(1e-12));
  }

  TEST_CASE("constant alpha gives one half everywhere") {
    const auto w = constant_alpha(3, 5, 0.5, 11);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(observational_posterior(w, i) == doctest::Approx(0.5));
      CHECK(interventional_posterior(w, i) == doctest::Approx(0.5));
    }
  }

  TEST_CASE("K=1: intervention equals conditioning") {
    Rng rng(3);
    const auto w = sample_world(1, 6, rng);
    for (std::size_t i = 0; i < 6; ++i)
      CHECK(interventional_posterior(w, i) == doctest::Approx(observational_posterior(w, i)).epsilon(1e-12));
    CHECK(same_classes(observational_partition(w), causal_partition(w)));
  }

  TEST_CASE("random worlds agree with the joint-table oracle") {
    Rng rng(99);
    for (int t = 0; t < 200; ++t) {
      const auto w = sample_world(1 + t % 4, 1 + t % 6, rng);
      for (std::size_t i = 0; i < w.num_images; ++i) {
        CHECK(std::abs(observational_posterior(w, i) - oracle::conditional(w, i)) < 1e-12);
        CHECK(std::abs(interventional_posterior(w, i) - oracle::intervened(w, i)) < 1e-12);
      }
    }
  }

  TEST_CASE("zero marginal and invalid worlds") {
    auto w = w0();
    w.beta = {1.0, 1.0, 0.0, 0.0};  // image 1 never occurs
    CHECK(code_of([&] { observational_posterior(w, 1); }) == ErrorCode::ZeroMarginal);
    auto bad = w0();
    bad.gamma = {0.5, 0.6};
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidWorld);
    bad = w0();
    bad.alpha[0] = 1.5;
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidWorld);
  }

  TEST_CASE("json round trip") {
    Rng rng(5);
    const auto w = sample_world(3, 4, rng);
    nlohmann::json j = w;
    CHECK(j.get<DiscreteWorld>() == w);
  }
}

TEST_SUITE("partition") {
  TEST_CASE("W0 partitions") {
    const auto obs = observational_partition(w0());
    REQUIRE(obs.num_classes() == 2);
    CHECK(obs.class_value[0] == doctest::Approx(0.1));
    CHECK(obs.class_value[1] == doctest::Approx(0.7));
    CHECK(obs.class_of[0] != obs.class_of[1]);
    const auto cau = causal_partition(w0());
    REQUIRE(cau.num_classes() == 1);
    CHECK(cau.class_value[0] == doctest::Approx(0.4));
  }

  TEST_CASE("constant alpha has one class") {
    CHECK(observational_partition(constant_alpha(2, 4, 0.5, 1)).num_classes() == 1);
  }

  TEST_CASE("coarsening in both directions on W0") {
    const auto obs = observational_partition(w0());
    const auto cau = causal_partition(w0());
    CHECK(is_coarsening(cau, obs).holds);
    const auto swapped = is_coarsening(obs, cau);
    CHECK_FALSE(swapped.holds);
    REQUIRE(swapped.violations.size() == 1);
    CHECK(swapped.violations[0].first == 0);
    CHECK(swapped.violations[0].second == 1);
  }

  TEST_CASE("singletons are refined by everything") {
    const std::vector<double> distinct{0.1, 0.2, 0.3, 0.4};
    const auto fine = partition_by_value(distinct);
    for (const auto& coarse : {std::vector<double>{0, 0, 0, 0}, std::vector<double>{0, 1, 0, 1}, distinct})
      CHECK(is_coarsening(partition_by_value(coarse), fine).holds);
  }

  TEST_CASE("grouping matches union-find on random values") {
    Rng rng(17);
    for (int t = 0; t < 300; ++t) {
      std::vector<double> v;
      const std::size_t n = 1 + uniform_index(rng, 9);
      // few distinct levels, jittered well inside the tolerance
      for (std::size_t k = 0; k < n; ++k) v.push_back(0.1 * uniform_index(rng, 4) + uniform(rng, 0, 1e-11));
      const auto p = partition_by_value(v, 1e-9);
      CHECK(oracle::same_grouping(p.class_of, oracle::groups(v, 1e-9)));
      for (std::size_t c = 1; c < p.num_classes(); ++c) CHECK(p.class_value[c - 1] < p.class_value[c]);
    }
  }

  TEST_CASE("coarsening agrees with the pairwise definition") {
    Rng rng(23);
    for (int t = 0; t < 300; ++t) {
      std::vector<double> a, b;
      const std::size_t n = 1 + uniform_index(rng, 7);
      for (std::size_t k = 0; k < n; ++k) {
        a.push_back(uniform_index(rng, 3));
        b.push_back(uniform_index(rng, 3));
      }
      const auto pa = partition_by_value(a), pb = partition_by_value(b);
      CHECK(is_coarsening(pa, pb).holds == oracle::coarsens(oracle::groups(a, 1e-9), oracle::groups(b, 1e-9)));
    }
  }

  TEST_CASE("long chains are ambiguous") {
    const std::vector<double> chain{0.0, 0.8e-9, 1.6e-9};
    CHECK(code_of([&] { partition_by_value(chain, 1e-9); }) == ErrorCode::AmbiguousClustering);
  }

  TEST_CASE("size mismatch") {
    const std::vector<double> a{0.1, 0.2}, b{0.1};
    CHECK(code_of([&] { is_coarsening(partition_by_value(a), partition_by_value(b)); }) == ErrorCode::SizeMismatch);
  }

  TEST_CASE("grating enumeration: 4 observational and 2 causal classes") {
    const auto w = grating_world(GratingConfig{});
    const auto obs = observational_partition(w);
    const auto cau = causal_partition(w);
    CHECK(obs.num_classes() == 4);
    CHECK(cau.num_classes() == 2);
    // marginalize the behaviour table over H1 by hand
    CHECK(cau.class_value[0] == doctest::Approx(0.5 * 0.1 + 0.5 * 0.3));
    CHECK(cau.class_value[1] == doctest::Approx(0.5 * 0.7 + 0.5 * 0.9));
    CHECK(is_coarsening(cau, obs).holds);
  }
}

TEST_SUITE("sampler") {
  TEST_CASE("sample_world is deterministic and valid") {
    Rng a(7), b(7);
    const auto wa = sample_world(2, 3, a);
    CHECK(wa == sample_world(2, 3, b));
    wa.validate();
  }

  TEST_CASE("free worlds have distinct observational values") {
    Rng rng(2024);
    for (int t = 0; t < 1000; ++t) {
      const auto w = sample_world(4, 6, rng);
      const auto obs = observational_partition(w);
      CHECK(obs.num_classes() == 6);
      CHECK(is_coarsening(causal_partition(w), obs).holds);
    }
  }

  TEST_CASE("constrained sampler hits its target") {
    const std::vector<ObservationalClassSpec> spec{{{0, 1}, 0.3}, {{2}, 0.8}};
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
      const auto w = sample_world_constrained(spec, 2, rng);
      w.validate();
      CHECK(std::abs(oracle::conditional(w, 0) - 0.3) < 1e-9);
      CHECK(std::abs(oracle::conditional(w, 1) - 0.3) < 1e-9);
      CHECK(std::abs(oracle::conditional(w, 2) - 0.8) < 1e-9);
    }
  }

  TEST_CASE("constrained sampler on random targets") {
    Rng rng(8);
    for (int t = 0; t < 200; ++t) {
      const std::size_t n = 3 + t % 4;
      const auto spec = random_observational_spec(n, rng);
      const auto w = sample_world_constrained(spec, 2 + t % 3, rng);
      std::vector<double> target(n);
      for (const auto& c : spec)
        for (auto i : c.images) target[i] = c.value;
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(oracle::conditional(w, i) - target[i]) < 1e-9);
      CHECK(oracle::same_grouping(observational_partition(w).class_of, oracle::groups(target, 1e-9)));
    }
  }

  TEST_CASE("constrained sampler preconditions") {
    Rng rng(1);
    const std::vector<ObservationalClassSpec> zero{{{0}, 0.0}, {{1}, 0.5}};
    const std::vector<ObservationalClassSpec> one{{{0}, 1.0}, {{1}, 0.5}};
    const std::vector<ObservationalClassSpec> ok{{{0}, 0.2}, {{1}, 0.5}};
    CHECK(code_of([&] { sample_world_constrained(zero, 2, rng); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { sample_world_constrained(one, 2, rng); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { sample_world_constrained(ok, 1, rng); }) == ErrorCode::InvalidArgument);
  }

  TEST_CASE("nested sampler ties both partitions") {
    Rng rng(12);
    for (int t = 0; t < 200; ++t) {
      const std::vector<CausalClassSpec> spec{{{{0, 1}, {2}}, 0.4}, {{{3}}, 0.7}};
      const auto w = sample_world_nested(spec, 2 + t % 3, rng);
      w.validate();
      CHECK(std::abs(oracle::conditional(w, 0) - oracle::conditional(w, 1)) < 1e-9);
      for (std::size_t i : {0, 1, 2}) CHECK(std::abs(oracle::intervened(w, i) - 0.4) < 1e-9);
      CHECK(std::abs(oracle::intervened(w, 3) - 0.7) < 1e-9);
      CHECK(is_coarsening(causal_partition(w), observational_partition(w)).holds);
    }
  }
}

// Kept apart: with every beta and gamma free, two images of one observational
// class have independent interventional values, so these expectations do not
// hold for the constrained sampler (see the decisions ledger).
TEST_SUITE("cct-generic-examples") {
  TEST_CASE("worlds from the constrained sampler satisfy causal coarsening") {
    Rng rng(1);
    std::size_t violations = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
      const auto spec = random_observational_spec(3 + t % 4, rng);
      const auto w = sample_world_constrained(spec, 2 + t % 3, rng);
      if (!is_coarsening(causal_partition(w), observational_partition(w)).holds) ++violations;
    }
    CHECK_MESSAGE(violations == 0, violations << " of " << trials << " worlds violate causal coarsening");
  }
}

TEST_SUITE("counterexample") {
  TEST_CASE("obs-coarsens-causal") {
    Rng rng(4);
    const auto v = find_cct_violation(ViolationKind::ObsCoarsensCausal, 2, 3, rng);
    const auto& w = v.world;
    // independent check straight from the joint table
    std::vector<double> obs, cau;
    for (std::size_t i = 0; i < 3; ++i) {
      obs.push_back(oracle::conditional(w, i));
      cau.push_back(oracle::intervened(w, i));
    }
    CHECK_FALSE(oracle::coarsens(oracle::groups(cau, 1e-9), oracle::groups(obs, 1e-9)));
    CHECK_FALSE(is_coarsening(causal_partition(w), observational_partition(w)).holds);
    CHECK(shows_violation(w, v.kind));
    CHECK_FALSE(v.solved_entries.empty());
  }

  TEST_CASE("incomparable") {
    Rng rng(5);
    const auto v = find_cct_violation(ViolationKind::Incomparable, 2, 3, rng);
    std::vector<double> obs, cau;
    for (std::size_t i = 0; i < 3; ++i) {
      obs.push_back(oracle::conditional(v.world, i));
      cau.push_back(oracle::intervened(v.world, i));
    }
    const auto go = oracle::groups(obs, 1e-9), gc = oracle::groups(cau, 1e-9);
    CHECK_FALSE(oracle::coarsens(gc, go));
    CHECK_FALSE(oracle::coarsens(go, gc));
  }

  TEST_CASE("perturbing a solved entry of obs-coarsens-causal restores coarsening") {
    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
      const auto v = find_cct_violation(ViolationKind::ObsCoarsensCausal, 2 + t % 3, 3 + t % 3, rng);
      for (auto [h, i] : v.solved_entries) {
        const auto p = perturb_alpha(v.world, h, i, 1e-3);
        CHECK(coarsening_restored(p, v.kind));
      }
    }
  }

  TEST_CASE("random perturbations restore coarsening for both kinds") {
    for (auto kind : {ViolationKind::ObsCoarsensCausal, ViolationKind::Incomparable}) {
      Rng rng(7);
      const auto v = find_cct_violation(kind, 2, 3, rng);
      for (int t = 0; t < 100; ++t) CHECK(coarsening_restored(perturb_alpha(v.world, 1e-3, rng), kind));
    }
  }

  TEST_CASE("preconditions") {
    Rng rng(1);
    CHECK(code_of([&] { find_cct_violation(ViolationKind::Incomparable, 2, 2, rng); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { find_cct_violation(ViolationKind::ObsCoarsensCausal, 1, 3, rng); }) == ErrorCode::InvalidArgument);
    CHECK(parse_violation_kind("incomparable") == ViolationKind::Incomparable);
    CHECK(code_of([&] { parse_violation_kind("bogus"); }) == ErrorCode::InvalidArgument);
  }
}

TEST_SUITE("macro") {
  TEST_CASE("W0 spurious correlate") {
    const auto a = spurious_correlate(w0());
    CHECK(a.c_of == std::vector<std::size_t>{0, 0});
    CHECK(a.s_of == std::vector<std::size_t>{1, 2});
    CHECK(macro_invariants_hold(a, observational_partition(w0()), causal_partition(w0())));
  }

  TEST_CASE("equal partitions give a constant S") {
    Rng rng(3);
    const auto w = sample_world(1, 5, rng);
    for (auto s : spurious_correlate(w).s_of) CHECK(s == 1);
  }

  TEST_CASE("grating: C is the h-bar, S the v-bar") {
    const auto w = grating_world(GratingConfig{});
    const auto a = spurious_correlate(w);
    for (std::size_t hbar = 0; hbar < 2; ++hbar)
      for (std::size_t vbar = 0; vbar < 2; ++vbar) {
        CHECK(a.c_of[2 * hbar + vbar] == hbar);
        CHECK(a.s_of[2 * hbar + vbar] == vbar + 1);
      }
  }

  TEST_CASE("not a coarsening") {
    Rng rng(4);
    const auto v = find_cct_violation(ViolationKind::ObsCoarsensCausal, 2, 3, rng);
    CHECK(code_of([&] { spurious_correlate(v.world); }) == ErrorCode::NotACoarsening);
  }

  TEST_CASE("W0 complete description") {
    const auto r = verify_complete_description(w0(), spurious_correlate(w0()));
    CHECK(r.passed());
    CHECK(r.minimizer_is_observational);
    CHECK(r.partitions_enumerated == oracle::bell(2));
    CHECK(r.entropy_cs == doctest::Approx(std::log(2.0)));
    CHECK(r.min_sufficient_entropy == doctest::Approx(r.entropy_cs));
  }

  TEST_CASE("set partition enumeration counts Bell numbers") {
    for (std::size_t n = 1; n <= 8; ++n) {
      std::size_t count = 0;
      for_each_set_partition(n, [&](const std::vector<std::size_t>&) { ++count; });
      CHECK(count == oracle::bell(n));
    }
  }

  TEST_CASE("singleton observational partition minimizes to itself") {
    Rng rng(10);
    const auto w = sample_world(3, 5, rng);
    const auto r = verify_complete_description(w, spurious_correlate(w));
    CHECK(r.passed());
    CHECK(r.partitions_sufficient == 1);
    CHECK(r.minimizer_is_observational);
  }

  TEST_CASE("nested worlds pass both checks, with entropy recomputed by brute force") {
    Rng rng(31);
    const std::vector<CausalClassSpec> spec{{{{0, 1}, {2}}, 0.35}, {{{3, 4}}, 0.75}};
    for (int t = 0; t < 10; ++t) {
      const auto w = sample_world_nested(spec, 3, rng);
      const auto a = spurious_correlate(w);
      const auto r = verify_complete_description(w, a);
      CHECK(r.passed());
      CHECK(r.max_cell_error <= 1e-10);
      // H(C,S) from the image marginals directly
      std::map<std::pair<std::size_t, std::size_t>, double> cell;
      const auto p = oracle::joint(w);
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t h = 0; h < 3; ++h) cell[{a.c_of[i], a.s_of[i]}] += p[0][h][i] + p[1][h][i];
      double h_cs = 0.0;
      for (auto& [k, q] : cell) h_cs -= q * std::log(q);
      CHECK(r.entropy_cs == doctest::Approx(h_cs).epsilon(1e-12));
      CHECK(r.entropy_cs <= r.min_sufficient_entropy + 1e-12);
    }
  }

  TEST_CASE("enumeration limit") {
    Rng rng(1);
    const auto w = sample_world(2, 9, rng);
    CHECK(code_of([&] { verify_complete_description(w, spurious_correlate(w)); }) == ErrorCode::InvalidArgument);
  }
}

TEST_SUITE("appendix9") {
  TEST_CASE("fixed confounded example") {
    const auto w = appendix9_world();
    // P(T=1|I,H) table and P(I|H) straight from the model description
    const double pt[2][2] = {{0.1, 0.5}, {0.4, 0.9}};  // [i][h]
    const double pi1[2] = {0.2, 0.8};
    for (std::size_t i = 0; i < 2; ++i) {
      double num = 0, den = 0, doi = 0;
      for (std::size_t h = 0; h < 2; ++h) {
        const double pih = (i == 1 ? pi1[h] : 1 - pi1[h]) * 0.5;
        num += pt[i][h] * pih;
        den += pih;
        doi += pt[i][h] * 0.5;
      }
      CHECK(std::abs(oracle::conditional(w, i) - num / den) < 1e-12);
      CHECK(std::abs(oracle::intervened(w, i) - doi) < 1e-12);
    }
    const auto r = appendix9_example(w);
    CHECK(std::abs(r.interventional[0] - 0.30) < 1e-12);
    CHECK(std::abs(r.interventional[1] - 0.65) < 1e-12);
    CHECK(std::abs(r.observational[0] - 0.18) < 1e-12);
    CHECK(std::abs(r.observational[1] - 0.80) < 1e-12);
    CHECK(r.passed());
  }
}

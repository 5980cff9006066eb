#include <doctest.h>

#include <cmath>
#include <set>

#include "vcfl/error.hpp"
#include "vcfl/grating.hpp"
#include "vcfl/image.hpp"

using namespace vcfl;

namespace {

BinaryImage with_row(std::size_t side, std::size_t r) {
  BinaryImage img(side);
  for (std::size_t c = 0; c < side; ++c) img.set(r, c, true);
  return img;
}

BinaryImage with_col(std::size_t side, std::size_t c) {
  BinaryImage img(side);
  for (std::size_t r = 0; r < side; ++r) img.set(r, c, true);
  return img;
}

}  // namespace

TEST_SUITE("image") {
  TEST_CASE("bar detectors") {
    BinaryImage on(15), off(15);
    for (std::size_t k = 0; k < on.size(); ++k) on.set(k, true);
    CHECK(detect_hbar(on));
    CHECK(detect_vbar(on));
    CHECK_FALSE(detect_hbar(off));
    CHECK_FALSE(detect_vbar(off));
    for (std::size_t side = 2; side <= 6; ++side) {
      const auto row = with_row(side, side > 3 ? 3 : 1);
      CHECK(detect_hbar(row));
      CHECK_FALSE(detect_vbar(row));
      CHECK(count_full_rows(row) == 1);
    }
    auto almost = with_row(15, 3);
    almost.set(3, 14, false);
    CHECK_FALSE(detect_hbar(almost));
  }

  TEST_CASE("pack and base64 round trip") {
    Rng rng(5);
    for (std::size_t rows : {1, 3, 15, 28})
      for (std::size_t cols : {1, 7, 15, 28}) {
        BinaryImage img(rows, cols);
        for (std::size_t k = 0; k < img.size(); ++k) img.set(k, bernoulli(rng, 0.4));
        CHECK(BinaryImage::unpack(img.pack(), rows, cols) == img);
        CHECK(BinaryImage::from_base64(img.to_base64(), rows, cols) == img);
        CHECK(img.pack().size() == (rows * cols + 7) / 8);
      }
  }

  TEST_CASE("packing is most significant bit first") {
    BinaryImage img(1, 9);
    img.set(0, true);
    img.set(8, true);
    const auto bytes = img.pack();
    REQUIRE(bytes.size() == 2);
    CHECK(bytes[0] == 0x80);
    CHECK(bytes[1] == 0x80);
    CHECK(base64_encode(std::vector<std::uint8_t>{'M', 'a', 'n'}) == "TWFu");
    CHECK(base64_decode("TWE=") == std::vector<std::uint8_t>{'M', 'a'});
  }

  TEST_CASE("l2 distance is sqrt of Hamming") {
    BinaryImage a(15), b(15);
    for (std::size_t k : {0, 17, 100, 224}) b.set(k, true);
    CHECK(l2_distance(a, b) == doctest::Approx(2.0));
    CHECK(l2_distance(a, a) == 0.0);
  }

  TEST_CASE("pbm rendering") {
    BinaryImage img(2, 3);
    img.set(0, 1, true);
    CHECK(to_pbm(img) == "P1\n3 2\n0 1 0\n0 0 0\n");
  }
}

TEST_SUITE("grating") {
  TEST_CASE("forced H1=1, H2=0 draws one column and no row") {
    GratingConfig cfg;
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
      const auto s = grating_sample(cfg, rng, 1, 0);
      CHECK(count_full_cols(s.pixels) == 1);
      CHECK(count_full_rows(s.pixels) == 0);
      CHECK(s.pixels.side() == 15);
    }
  }

  TEST_CASE("h-bar frequency follows p_h2") {
    GratingConfig cfg;
    Rng rng(11);
    const int n = 10000;
    int hbar = 0;
    for (int t = 0; t < n; ++t) {
      const auto s = grating_sample(cfg, rng);
      hbar += detect_hbar(s.pixels);
      CHECK(detect_hbar(s.pixels) == (s.h2 == 1));
      CHECK(detect_vbar(s.pixels) == (s.h1 == 1));
    }
    CHECK(std::abs(hbar / double(n) - 0.5) <= 0.02);
  }

  TEST_CASE("observational probabilities are the table entries") {
    GratingConfig cfg;
    Rng rng(2);
    const auto data = generate_observational_dataset(cfg, 1000, rng);
    std::set<double> seen;
    for (const auto& r : data) {
      seen.insert(r.obs_prob);
      CHECK(r.obs_prob == cfg.behavior[*r.h2][*r.h1]);
    }
    CHECK(seen == std::set<double>{0.1, 0.3, 0.7, 0.9});
  }

  TEST_CASE("exact oracle values") {
    GratingConfig cfg;
    GratingOracle o(cfg, OracleMode::Exact);
    const double low = 0.5 * 0.1 + 0.5 * 0.3, high = 0.5 * 0.7 + 0.5 * 0.9;
    CHECK(o.query(BinaryImage(15)) == doctest::Approx(low).epsilon(1e-15));
    CHECK(o.query(with_row(15, 4)) == doctest::Approx(high).epsilon(1e-15));
    CHECK(o.query(with_col(15, 9)) == doctest::Approx(low).epsilon(1e-15));
    CHECK(o.queries() == 3);
    CHECK(o.exact(BinaryImage(15)) == o.exact(with_col(15, 2)));
    CHECK(grating_causal_value(cfg, true) == doctest::Approx(high));
  }

  TEST_CASE("sample-mode oracle is a Bernoulli draw") {
    GratingConfig cfg;
    GratingOracle o(cfg, OracleMode::Sample, 9);
    const int n = 20000;
    double sum = 0;
    for (int t = 0; t < n; ++t) {
      const double v = o.query(with_row(15, 0));
      CHECK((v == 0.0 || v == 1.0));
      sum += v;
    }
    // 5 standard errors
    CHECK(std::abs(sum / n - 0.8) < 5 * std::sqrt(0.8 * 0.2 / n));
  }

  TEST_CASE("datasets are seeded and round trip byte-exactly") {
    GratingConfig cfg;
    Rng a(4), b(4);
    const auto da = generate_observational_dataset(cfg, 200, a);
    CHECK(da == generate_observational_dataset(cfg, 200, b));
    const auto text = dataset_to_jsonl(da, "00ff00ff00ff00ff");
    std::string hash;
    const auto back = dataset_from_jsonl(text, &hash);
    CHECK(back == da);
    CHECK(hash == "00ff00ff00ff00ff");
    CHECK(dataset_to_jsonl(back, hash) == text);
  }

  TEST_CASE("preconditions") {
    GratingConfig cfg;
    Rng rng(1);
    CHECK_THROWS_AS(generate_observational_dataset(cfg, 0, rng), Error);
    auto bad = cfg;
    bad.behavior = {{{0.1, 0.3}, {0.05, 0.9}}};
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.side = 2;
    CHECK_THROWS_AS(bad.validate(), Error);
  }

  TEST_CASE("grating world posteriors") {
    const auto w = grating_world(GratingConfig{});
    w.validate();
    for (std::size_t hbar = 0; hbar < 2; ++hbar)
      for (std::size_t vbar = 0; vbar < 2; ++vbar) {
        const std::size_t i = 2 * hbar + vbar;
        CHECK(observational_posterior(w, i) == doctest::Approx(kDefaultBehavior[hbar][vbar]));
        CHECK(interventional_posterior(w, i) == doctest::Approx(hbar ? 0.8 : 0.2));
      }
  }
}

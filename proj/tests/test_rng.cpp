#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "rankeval/rng.hpp"

using namespace rankeval;

TEST_CASE("derive_seed gives distinct sub-streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t c = 0; c < 1000; ++c) seen.insert(derive_seed(42, c));
  CHECK(seen.size() == 1000);
  CHECK(derive_seed(42, 0) != derive_seed(43, 0));
}

TEST_CASE("same seed reproduces the same stream") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.uniform() == b.uniform());
    CHECK(a.normal() == b.normal());
  }
}

TEST_CASE("uniform stays in [0,1) and uniform_pos in (0,1]") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = rng.uniform_pos();
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("index is unbiased over small ranges") {
  Rng rng(99);
  const std::size_t n = 7;
  const int draws = 70000;
  std::vector<int> counts(n, 0);
  for (int i = 0; i < draws; ++i) counts[rng.index(n)]++;
  // 5 sigma band around draws/n for a binomial count
  const double expect = double(draws) / double(n);
  const double sigma = std::sqrt(expect * (1.0 - 1.0 / double(n)));
  for (std::size_t k = 0; k < n; ++k)
    CHECK(std::abs(counts[k] - expect) < 5.0 * sigma);
}

TEST_CASE("gamma moments match shape/scale") {
  Rng rng(5);
  const double alpha = 0.54;  // exercises the shape < 1 branch
  const int draws = 50000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double g = rng.gamma(alpha);
    sum += g;
    sq += g * g;
  }
  const double mean = sum / draws;
  const double var = sq / draws - mean * mean;
  CHECK(mean == Catch::Approx(alpha).margin(0.03));
  CHECK(var == Catch::Approx(alpha).margin(0.08));
}

TEST_CASE("dirichlet draws are simplex points with mean alpha/sum") {
  Rng rng(11);
  const std::vector<double> alpha = {0.54, 0.25, 0.175, 0.03, 0.005};
  std::vector<double> mean(alpha.size(), 0.0);
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    const auto theta = rng.dirichlet(alpha);
    double total = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      REQUIRE(theta[k] >= 0.0);
      total += theta[k];
      mean[k] += theta[k];
    }
    REQUIRE(total == Catch::Approx(1.0).epsilon(1e-12));
  }
  double alpha_sum = 0.0;
  for (double a : alpha) alpha_sum += a;
  for (std::size_t k = 0; k < alpha.size(); ++k)
    CHECK(mean[k] / draws == Catch::Approx(alpha[k] / alpha_sum).margin(0.01));
}

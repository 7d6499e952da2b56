#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <doctest.h>

#include "metaclust/error.hpp"
#include "metaclust/special.hpp"

using namespace metaclust;

TEST_CASE("digamma known values") {
  const double pi = std::numbers::pi;
  CHECK(std::abs(special::digamma(1.0) - -0.5772156649015329) < 1e-13);
  CHECK(std::abs(special::digamma(2.0) - 0.4227843350984671) < 1e-13);
  CHECK(std::abs(special::digamma(0.5) - -1.9635100260214235) < 1e-13);
  CHECK(std::abs(special::trigamma(2.0) - (pi * pi / 6 - 1)) < 1e-13);
}

TEST_CASE("digamma and trigamma agree with boost over a wide range") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> logx(-6.0, 6.0);
  double worst_psi = 0, worst_tri = 0;
  for (int i = 0; i < 5000; ++i) {
    const double x = std::pow(10.0, logx(rng));
    const double psi = boost::math::digamma(x), tri = boost::math::trigamma(x);
    worst_psi = std::max(worst_psi, std::abs(special::digamma(x) - psi) / std::max(1.0, std::abs(psi)));
    worst_tri = std::max(worst_tri, std::abs(special::trigamma(x) - tri) / std::abs(tri));
  }
  CHECK(worst_psi < 1e-12);
  CHECK(worst_tri < 1e-12);
}

TEST_CASE("recurrence holds") {
  for (double x : {0.01, 0.3, 1.7, 9.5, 42.0}) {
    CHECK(special::digamma(x + 1) == doctest::Approx(special::digamma(x) + 1 / x).epsilon(1e-13));
    CHECK(special::trigamma(x + 1) ==
          doctest::Approx(special::trigamma(x) - 1 / (x * x)).epsilon(1e-12));
  }
}

TEST_CASE("domain errors") {
  CHECK_THROWS_AS(special::digamma(0.0), DomainError);
  CHECK_THROWS_AS(special::digamma(-1.5), DomainError);
  CHECK_THROWS_AS(special::digamma(std::nan("")), DomainError);
  CHECK_THROWS_AS(special::trigamma(0.0), DomainError);
  CHECK_THROWS_AS(special::trigamma(INFINITY), DomainError);
}

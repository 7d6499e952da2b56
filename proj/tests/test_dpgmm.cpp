#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/special_functions/digamma.hpp>
#include <doctest.h>

#include "metaclust/dpgmm.hpp"
#include "metaclust/error.hpp"
#include "metaclust/metrics.hpp"

using namespace metaclust;
using ad::Var;

namespace {

struct Blobs {
  Tensor z;
  std::vector<int> y;
};

Blobs two_blobs(std::size_t per, double offset, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Blobs b{Tensor(2 * per, 2), {}};
  for (std::size_t i = 0; i < 2 * per; ++i) {
    const int c = i < per ? 0 : 1;
    b.z(i, 0) = d(rng) + (c ? offset : -offset);
    b.z(i, 1) = d(rng);
    b.y.push_back(c);
  }
  return b;
}

Tensor random_rows(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::gamma_distribution<double> gd(0.5, 1.0);
  Tensor r(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < k; ++c) s += r(i, c) = gd(rng) + 1e-12;
    for (std::size_t c = 0; c < k; ++c) r(i, c) /= s;
  }
  return r;
}

}  // namespace

TEST_CASE("init_state") {
  ad::Graph g;
  vb::VBConfig cfg;
  cfg.clusters = 3;
  cfg.assignment_floor = 0.0;
  const Tensor r0 = Tensor::matrix({{0.2, 0.3, 0.5}, {1, 0, 0}});
  auto s = vb::init_state(g.constant(r0), cfg);
  CHECK(s.a.value() == Tensor(1, 3, 1.0));
  CHECK(s.b.value() == Tensor(1, 3, 1.0));
  CHECK(s.r.value() == r0);
  CHECK_FALSE(s.has_globals());

  cfg.assignment_floor = 1e-3;
  auto f = vb::init_state(g.constant(r0), cfg);
  CHECK(f.r.value()(1, 1) == doctest::Approx(1e-3));
  CHECK_THROWS_AS(vb::init_state(g.constant(Tensor::matrix({{0.5, 0.6, 0}})), cfg), ContractError);
  CHECK_THROWS_AS(vb::init_state(g.constant(Tensor::matrix({{-0.1, 0.6, 0.5}})), cfg), ContractError);
}

TEST_CASE("global updates by direct substitution") {
  ad::Graph g;
  vb::VBConfig cfg;
  cfg.clusters = 2;
  cfg.assignment_floor = 0.0;
  Tensor z(2, 10);
  z(0, 0) = 1.0;
  z(1, 0) = -1.0;
  auto s = vb::init_state(g.constant(Tensor::matrix({{1, 0}, {1, 0}})), cfg);
  vb::update_globals(g.constant(z), s, cfg);
  CHECK(s.gamma1.value() == Tensor::matrix({{3, 1}}));
  CHECK(s.gamma2.value() == Tensor::matrix({{1, 1}}));
  CHECK(s.a.value() == Tensor::matrix({{11, 1}}));
  for (double v : s.theta.value().values()) CHECK(v == 0.0);
}

TEST_CASE("assignment rows") {
  ad::Graph g;
  vb::VBConfig cfg;
  cfg.assignment_floor = 0.0;
  std::mt19937_64 rng(5);
  Tensor z(6, 3);
  for (auto& v : z.values()) v = std::normal_distribution<double>()(rng);

  cfg.clusters = 1;
  auto one = vb::init_state(g.constant(Tensor(6, 1, 1.0)), cfg);
  vb::update_globals(g.constant(z), one, cfg);
  vb::update_assignments(g.constant(z), one, cfg);
  for (double v : one.r.value().values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));

  cfg.clusters = 4;
  auto s = vb::init_state(g.constant(random_rows(6, 4, rng)), cfg);
  vb::update_globals(g.constant(z), s, cfg);
  vb::update_assignments(g.constant(z), s, cfg);
  for (std::size_t n = 0; n < 6; ++n) {
    double sum = 0;
    for (std::size_t k = 0; k < 4; ++k) sum += s.r.value()(n, k);
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
  auto fresh = vb::init_state(g.constant(Tensor(6, 4, 0.25)), cfg);
  CHECK_THROWS_AS(vb::update_assignments(g.constant(z), fresh, cfg), ContractError);
}

TEST_CASE("far cluster is not chosen") {
  ad::Graph g;
  vb::VBConfig cfg;
  cfg.clusters = 2;
  cfg.assignment_floor = 0.0;
  vb::VBState s = vb::init_state(g.constant(Tensor(1, 2, 0.5)), cfg);
  s.gamma1 = g.constant(Tensor::matrix({{2, 2}}));
  s.gamma2 = g.constant(Tensor::matrix({{2, 2}}));
  s.theta = g.constant(Tensor::matrix({{0, 0}, {100, 0}}));
  const Var z = g.constant(Tensor::matrix({{0, 0}}));
  s.sqdist = ad::sqdist(z, s.theta);
  vb::update_assignments(z, s, cfg);
  CHECK(vb::hard_assignments(s.r.value()) == std::vector<int>{0});
}

TEST_CASE("elbo never decreases over sweeps") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 40; ++t) {
    ad::Graph g;
    vb::VBConfig cfg;
    cfg.assignment_floor = 0.0;
    cfg.steps = 8;
    const std::size_t n = 2 + rng() % 40, dim = 1 + rng() % 6;
    Tensor z(n, dim);
    for (auto& v : z.values()) v = 3.0 * std::normal_distribution<double>()(rng);
    auto res = vb::run_vb(g.constant(z), g.constant(random_rows(n, cfg.clusters, rng)), cfg, true);
    for (std::size_t i = 1; i < res.elbo_trace.size(); ++i)
      CHECK(res.elbo_trace[i] >= res.elbo_trace[i - 1] - 1e-8);
  }
}

TEST_CASE("elbo of a lone point at the origin matches a closed form") {
  ad::Graph g;
  vb::VBConfig cfg;
  cfg.clusters = 1;
  cfg.assignment_floor = 0.0;
  cfg.steps = 1;
  const double S = 3;
  auto res = vb::run_vb(g.constant(Tensor(1, 3)), g.constant(Tensor(1, 1, 1.0)), cfg, true);
  // q(eta) = Beta(2, 1), theta = 0, a = b = 1 + S/2, r = 1.
  const double a = 1 + S / 2, b = 1 + S / 2;
  using boost::math::digamma;
  const double lik = S / 2 * (digamma(a) - std::log(b)) - S / 2 * std::log(2 * std::numbers::pi) -
                     0.5 * (a / b) * S;
  const double elog_pi = digamma(2.0) - digamma(3.0);
  const double kl_eta = std::log(2.0) + elog_pi;  // E_q log(2 eta) against a flat prior
  const double kl_beta = (a - 1) * digamma(a) - std::lgamma(a) + std::log(b) + a * (1 - b) / b;
  CHECK(res.elbo_trace.at(0) == doctest::Approx(lik + elog_pi - kl_eta - kl_beta).epsilon(1e-12));
}

TEST_CASE("scaled data gives a different finite bound") {
  std::mt19937_64 rng(2);
  auto blobs = two_blobs(10, 3, 4);
  Tensor z2 = blobs.z;
  for (auto& v : z2.values()) v *= 2;
  const Tensor r0 = random_rows(20, 10, rng);
  vb::VBConfig cfg;
  ad::Graph g;
  auto e1 = vb::run_vb(g.constant(blobs.z), g.constant(r0), cfg, true).elbo_trace.back();
  auto e2 = vb::run_vb(g.constant(z2), g.constant(r0), cfg, true).elbo_trace.back();
  CHECK(std::isfinite(e1));
  CHECK(std::isfinite(e2));
  CHECK(e1 != e2);
}

TEST_CASE("run_vb with zero steps and with uniform start") {
  ad::Graph g;
  vb::VBConfig cfg;
  cfg.assignment_floor = 0.0;
  cfg.steps = 0;
  auto blobs = two_blobs(10, 4, 1);
  std::mt19937_64 rng(1);
  const Tensor r0 = random_rows(20, 10, rng);
  CHECK(vb::run_vb(g.constant(blobs.z), g.constant(r0), cfg).state.r.value() == r0);

  // With a uniform start every cluster sees the same weighted data in the
  // first global update, so after one sweep rows are still equal across
  // instances. Only the stick weights differ between clusters.
  cfg.steps = 1;
  auto one = vb::run_vb(g.constant(blobs.z), g.constant(Tensor(20, 10, 0.1)), cfg);
  const Tensor& r = one.state.r.value();
  for (std::size_t n = 1; n < 20; ++n)
    for (std::size_t k = 0; k < 10; ++k) CHECK(std::abs(r(n, k) - r(0, k)) < 1e-12);
  CHECK(r(0, 0) > r(0, 1));
}

TEST_CASE("vb separates two blobs from a perturbed start") {
  ad::Graph g;
  vb::VBConfig cfg;
  cfg.clusters = 2;
  auto blobs = two_blobs(15, 4, 3);
  std::mt19937_64 rng(8);
  Tensor r0(30, 2);
  for (std::size_t n = 0; n < 30; ++n) {
    const double p = 0.5 + 0.2 * std::tanh(blobs.z(n, 0)) + 0.01 * (std::uniform_real_distribution<double>()(rng) - 0.5);
    r0(n, 0) = p;
    r0(n, 1) = 1 - p;
  }
  auto res = vb::run_vb(g.constant(blobs.z), g.constant(r0), cfg, true);
  CHECK(metrics::ari(blobs.y, vb::hard_assignments(res.state.r.value())) == 1.0);
}

TEST_CASE("em") {
  ad::Graph g;
  auto blobs = two_blobs(15, 4, 6);
  std::mt19937_64 rng(3);
  const Tensor r0 = random_rows(30, 2, rng);
  CHECK(vb::run_em(g.constant(blobs.z), g.constant(r0), 0).r.value() == r0);
  Tensor init(30, 2);
  for (std::size_t n = 0; n < 30; ++n) init(n, blobs.z(n, 0) > 0 ? 1 : 0) = 0.7, init(n, blobs.z(n, 0) > 0 ? 0 : 1) = 0.3;
  auto res = vb::run_em(g.constant(blobs.z), g.constant(init), 20);
  CHECK(metrics::ari(blobs.y, vb::hard_assignments(res.r.value())) == 1.0);
  for (std::size_t i = 1; i < res.loglik_trace.size(); ++i)
    CHECK(res.loglik_trace[i] >= res.loglik_trace[i - 1] - 1e-8);
}

TEST_CASE("hard assignments and populated clusters") {
  CHECK(vb::hard_assignments(Tensor::matrix({{0.9, 0.1}, {0.2, 0.8}})) == std::vector<int>{0, 1});
  CHECK(vb::hard_assignments(Tensor::matrix({{0.5, 0.5}})) == std::vector<int>{0});
  CHECK(vb::hard_assignments(Tensor::matrix({{0, 0, 1}, {0, 1, 0}})) == std::vector<int>{2, 1});
  CHECK(vb::populated_clusters(Tensor::matrix({{1, 0, 0}, {1, 0, 0}, {0, 0.6, 0.4}, {0, 0.6, 0.4}})) == 2);
}

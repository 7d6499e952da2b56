#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "metaclust/autodiff.hpp"
#include "metaclust/error.hpp"
#include "metaclust/gradcheck.hpp"

using namespace metaclust;
using ad::Axis;
using ad::Var;

namespace {

Tensor randn(std::size_t r, std::size_t c, std::uint64_t seed, double shift = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Tensor t(r, c);
  for (auto& v : t.values()) v = d(rng) + shift;
  return t;
}

}  // namespace

TEST_CASE("documented small cases") {
  ad::Graph g;
  auto x = g.parameter(Tensor::scalar(3.0));
  auto sq = ad::square(x);
  CHECK(sq.value().item() == 9.0);
  CHECK(g.backward(sq, {x})[x].item() == 6.0);

  auto y = g.parameter(Tensor::scalar(-1.0));
  auto r = ad::relu(y);
  CHECK(r.value().item() == 0.0);
  CHECK(g.backward(r, {y})[y].item() == 0.0);

  auto z = g.constant(Tensor::row({0.0, 0.0}));
  CHECK(ad::logsumexp(z, Axis::Cols).value().item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  auto w = g.parameter(Tensor::row({1.0, 2.0}));
  auto grads = g.backward(ad::sum(w * w), {w});
  CHECK(grads[w] == Tensor::row({2.0, 4.0}));

  auto a = g.parameter(Tensor::scalar(2.0));
  CHECK(g.backward(ad::digamma(a), {a})[a].item() ==
        doctest::Approx(std::numbers::pi * std::numbers::pi / 6 - 1).epsilon(1e-13));
}

TEST_CASE("unused targets receive zero gradients of their own shape") {
  ad::Graph g;
  auto a = g.parameter(Tensor::row({1.0, 2.0, 3.0}));
  auto b = g.parameter(Tensor(2, 2, 5.0));
  auto grads = g.backward(ad::sum(ad::exp(a)), {a, b});
  CHECK(grads[b] == Tensor(2, 2, 0.0));
}

TEST_CASE("broadcasting gradients sum over the broadcast extent") {
  ad::Graph g;
  auto m = g.parameter(randn(4, 3, 1));
  auto row = g.parameter(randn(1, 3, 2));
  auto col = g.parameter(randn(4, 1, 3));
  auto loss = ad::sum((m + row) * col);
  auto grads = g.backward(loss, {row, col});
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 4; ++i) s += col.value()(i, 0);
    CHECK(grads[row](0, j) == doctest::Approx(s).epsilon(1e-14));
  }
}

TEST_CASE("shape and domain errors") {
  ad::Graph g;
  auto a = g.constant(Tensor(2, 3));
  auto b = g.constant(Tensor(3, 2));
  CHECK_THROWS_AS(a + b, ShapeError);
  CHECK_THROWS_AS(ad::matmul(a, a), ShapeError);
  CHECK_THROWS_AS(ad::log(g.constant(Tensor::row({1.0, 0.0}))), DomainError);
  CHECK_THROWS_AS(ad::digamma(g.constant(Tensor::row({-1.0}))), DomainError);
  auto nonscalar = g.parameter(Tensor(2, 2, 1.0));
  CHECK_THROWS(g.backward(nonscalar, {nonscalar}));
}

TEST_CASE("replay reproduces the recorded values bit for bit") {
  ad::Graph g;
  auto x = g.parameter(randn(6, 4, 7));
  auto w = g.parameter(randn(4, 3, 8));
  auto h = ad::relu(ad::matmul(x, w));
  auto d = ad::pairwise_l1(h);
  auto loss = ad::mean(ad::logsumexp(d, Axis::Cols)) + ad::sum(ad::sqdist(x, ad::transpose(w)));
  (void)loss;
  CHECK(g.replay_matches());
}

TEST_CASE("composite functions pass finite differences") {
  std::vector<Tensor> params{randn(5, 3, 11), randn(3, 4, 12), randn(1, 4, 13, 2.0)};
  auto loss = [](ad::Graph&, std::span<const Var> p) {
    auto h = ad::matmul(p[0], p[1]);
    auto pos = ad::exp(p[2]) + 0.5;
    auto s = ad::logsumexp(h / pos, Axis::Cols);
    return ad::sum(s * s) + ad::sum(ad::lgamma(pos) + ad::digamma(pos)) +
           ad::mean(ad::pairwise_l1(h)) + ad::sum(ad::concat_cols(h, h * ad::log(pos)));
  };
  auto rep = ad::finite_difference_check(loss, params, 1e-6);
  CHECK(rep.max_rel_error < 1e-6);
  CHECK(rep.coordinates == 15 + 12 + 4);
}

TEST_CASE("gradient check of a quadratic is exact to roundoff") {
  std::vector<Tensor> params{randn(3, 3, 21)};
  auto rep = ad::finite_difference_check(
      [](ad::Graph&, std::span<const Var> p) { return ad::sum(p[0] * p[0] * 3.0 + p[0]); }, params, 1e-4);
  CHECK(rep.max_rel_error < 1e-9);

  std::vector<Tensor> one{Tensor::scalar(1.0)};
  auto rep_abs = ad::finite_difference_check(
      [](ad::Graph&, std::span<const Var> p) { return ad::sum(ad::abs(p[0])); }, one, 1e-5);
  CHECK(rep_abs.max_rel_error < 1e-9);
}

TEST_CASE("finite differences restore probed parameters") {
  std::vector<Tensor> params{randn(2, 3, 31)};
  const Tensor before = params[0];
  ad::finite_difference_check(
      [](ad::Graph&, std::span<const Var> p) { return ad::sum(ad::exp(p[0])); }, params, 1e-3);
  CHECK(params[0] == before);
}

TEST_CASE("a faulted derivative rule is caught") {
  std::vector<Tensor> params{randn(2, 2, 41)};
  auto loss = [](ad::Graph&, std::span<const Var> p) { return ad::sum(ad::exp(p[0])); };
  ad::testing::set_derivative_fault(ad::Op::Exp, 1.5);
  auto bad = ad::finite_difference_check(loss, params, 1e-6);
  ad::testing::clear_derivative_faults();
  auto good = ad::finite_difference_check(loss, params, 1e-6);
  CHECK(bad.max_rel_error > 0.1);
  CHECK(good.max_rel_error < 1e-6);
}

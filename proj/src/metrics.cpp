#include "metaclust/metrics.hpp"

#include <cmath>
#include <string>

#include "metaclust/error.hpp"

namespace metaclust::metrics {
namespace {

// Hubert-Arabie pair form. Each denominator product pairs a "same" margin of
// one partition with a "different" margin of the other; this is what makes it
// equal to the contingency-table index when n2 != n3.
double rational_ari(double n1, double n2, double n3, double n4, bool* degenerate) {
  const double den = (n1 + n2) * (n2 + n4) + (n1 + n3) * (n3 + n4);
  if (std::fabs(den) < kDenominatorGuard) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  if (degenerate) *degenerate = false;
  return 2.0 * (n1 * n4 - n2 * n3) / den;
}

}  // namespace

SoftPairCounts SoftPairCountVars::values() const {
  return {n1.value().item(), n2.value().item(), n3.value().item(), n4.value().item()};
}

PairCounts pair_counts(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size())
    throw ShapeError("pair_counts: label vectors differ in length");
  if (y_true.size() < 2) throw ContractError("pair_counts: need at least two instances");
  PairCounts c;
  const std::size_t n = y_true.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same_true = y_true[i] == y_true[j];
      const bool same_pred = y_pred[i] == y_pred[j];
      if (!same_true && !same_pred) ++c.n1;
      else if (!same_true) ++c.n2;
      else if (!same_pred) ++c.n3;
      else ++c.n4;
    }
  return c;
}

double ari(const PairCounts& c) {
  return rational_ari(static_cast<double>(c.n1), static_cast<double>(c.n2),
                      static_cast<double>(c.n3), static_cast<double>(c.n4), nullptr);
}

double ari(std::span<const int> y_true, std::span<const int> y_pred) {
  return ari(pair_counts(y_true, y_pred));
}

double tv_distance(std::span<const double> r, std::span<const double> s) {
  if (r.size() != s.size()) throw ShapeError("tv_distance: rows differ in length");
  double acc = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) acc += std::fabs(r[k] - s[k]);
  return 0.5 * acc;
}

double prob_distance(std::span<const double> r, std::span<const double> s) {
  if (r.size() != s.size()) throw ShapeError("prob_distance: rows differ in length");
  double dot = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) dot += r[k] * s[k];
  return 1.0 - dot;
}

SoftPairCountVars soft_pair_counts(std::span<const int> y_true, ad::Var r, Distance distance) {
  const Tensor& rv = r.value();
  const std::size_t n = rv.rows();
  if (y_true.size() != n)
    throw ShapeError("soft_pair_counts: " + std::to_string(y_true.size()) + " labels for " +
                     std::to_string(n) + " rows");
  if (n < 2) throw ContractError("soft_pair_counts: need at least two instances");
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < rv.cols(); ++k) s += rv(i, k);
    if (std::fabs(s - 1.0) > 1e-9)
      throw ContractError("soft_pair_counts: row " + std::to_string(i) + " sums to " +
                          std::to_string(s));
  }

  ad::Graph& g = *r.graph();
  // Upper-triangle masks select each unordered pair once.
  Tensor differ(n, n), same(n, n);
  double pairs_differ = 0.0, pairs_same = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (y_true[i] == y_true[j]) {
        same(i, j) = 1.0;
        pairs_same += 1.0;
      } else {
        differ(i, j) = 1.0;
        pairs_differ += 1.0;
      }
    }

  const ad::Var d = distance == Distance::TotalVariation
                        ? 0.5 * ad::pairwise_l1(r)
                        : 1.0 - ad::matmul(r, r, false, true);
  SoftPairCountVars c;
  c.n1 = ad::sum(d * g.constant(std::move(differ)));
  c.n2 = pairs_differ - c.n1;
  c.n3 = ad::sum(d * g.constant(std::move(same)));
  c.n4 = pairs_same - c.n3;
  return c;
}

SoftPairCounts soft_pair_counts(std::span<const int> y_true, const Tensor& r, Distance distance) {
  ad::Graph g;
  return soft_pair_counts(y_true, g.constant(r), distance).values();
}

ContinuousAri continuous_ari(const SoftPairCountVars& c) {
  const SoftPairCounts v = c.values();
  ContinuousAri out;
  rational_ari(v.n1, v.n2, v.n3, v.n4, &out.degenerate);
  if (out.degenerate) {
    out.value = c.n1.graph()->constant(0.0);
    return out;
  }
  const ad::Var num = 2.0 * (c.n1 * c.n4 - c.n2 * c.n3);
  const ad::Var den = (c.n1 + c.n2) * (c.n2 + c.n4) + (c.n1 + c.n3) * (c.n3 + c.n4);
  out.value = num / den;
  return out;
}

double continuous_ari(const SoftPairCounts& c) {
  return rational_ari(c.n1, c.n2, c.n3, c.n4, nullptr);
}

}  // namespace metaclust::metrics

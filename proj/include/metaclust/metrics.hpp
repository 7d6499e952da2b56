#pragma once

// Adjusted Rand index from pairwise concordance counts, and its continuous
// relaxation over soft assignments.

#include <cstdint>
#include <span>

#include "metaclust/autodiff.hpp"

namespace metaclust::metrics {

// n1: different true / different predicted, n2: different / same,
// n3: same / different, n4: same / same.
struct PairCounts {
  std::int64_t n1 = 0, n2 = 0, n3 = 0, n4 = 0;
  friend bool operator==(const PairCounts&, const PairCounts&) = default;
};

struct SoftPairCounts {
  double n1 = 0.0, n2 = 0.0, n3 = 0.0, n4 = 0.0;
};

// Same counts as graph values, differentiable with respect to R.
struct SoftPairCountVars {
  ad::Var n1, n2, n3, n4;
  SoftPairCounts values() const;
};

enum class Distance { TotalVariation, Probability };

// Exhaustive count over all unordered pairs. Requires N >= 2.
PairCounts pair_counts(std::span<const int> y_true, std::span<const int> y_pred);

// 2 (n1 n4 - n2 n3) / ((n1 + n2)(n2 + n4) + (n1 + n3)(n3 + n4)); 0 when the
// denominator vanishes.
double ari(const PairCounts& c);
double ari(std::span<const int> y_true, std::span<const int> y_pred);

double tv_distance(std::span<const double> r, std::span<const double> s);
double prob_distance(std::span<const double> r, std::span<const double> s);

// Soft pair counts of `r` (N x K', rows on the simplex) against labels.
// Throws ContractError for N < 2 or rows that do not sum to 1.
SoftPairCountVars soft_pair_counts(std::span<const int> y_true, ad::Var r, Distance distance);
SoftPairCounts soft_pair_counts(std::span<const int> y_true, const Tensor& r, Distance distance);

inline constexpr double kDenominatorGuard = 1e-12;

struct ContinuousAri {
  ad::Var value;
  bool degenerate = false;  // |denominator| < guard; value is the constant 0
};

ContinuousAri continuous_ari(const SoftPairCountVars& c);
double continuous_ari(const SoftPairCounts& c);

}  // namespace metaclust::metrics

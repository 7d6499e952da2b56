#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "metaclust/autodiff.hpp"

namespace metaclust::ad {

// Builds a scalar loss on `graph` from parameter leaves bound to `params`.
using LossBuilder = std::function<Var(Graph& graph, std::span<const Var> params)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares reverse-mode gradients with central differences at every
// coordinate of every tensor in `params`. The relative error of a coordinate
// is |analytic - numeric| / max(1, |analytic|). Probed coordinates are
// restored bit-exactly. Throws NumericalError naming the coordinate when the
// loss is non-finite at a probe point.
GradCheckReport finite_difference_check(const LossBuilder& loss, std::vector<Tensor>& params,
                                        double step = 1e-5);

}  // namespace metaclust::ad

#include "metaclust/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "metaclust/error.hpp"

namespace metaclust::ad {
namespace {

double evaluate(const LossBuilder& loss, const std::vector<Tensor>& params) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(g.constant(p));
  return loss(g, vars).value().item();
}

}  // namespace

GradCheckReport finite_difference_check(const LossBuilder& loss, std::vector<Tensor>& params,
                                        double step) {
  if (!(step > 0.0)) throw ContractError("finite_difference_check: step must be positive");

  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& p : params) vars.push_back(g.parameter(p));
    const Var out = loss(g, vars);
    const GradientMap grads = g.backward(out, vars);
    for (const Var& v : vars) analytic.push_back(grads[v]);
  }

  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double original = params[t][i];
      params[t][i] = original + step;
      const double up = evaluate(loss, params);
      params[t][i] = original - step;
      const double down = evaluate(loss, params);
      params[t][i] = original;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericalError("finite_difference_check: non-finite loss probing tensor " +
                             std::to_string(t) + " index " + std::to_string(i));
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[t][i];
      const double err = std::fabs(a - numeric) / std::max(1.0, std::fabs(a));
      ++report.coordinates;
      if (err > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = err;
        report.worst_tensor = t;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace metaclust::ad

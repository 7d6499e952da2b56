#include "metaclust/dpgmm.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "metaclust/error.hpp"

namespace metaclust::vb {
namespace {

using ad::Axis;
using ad::Var;

// strict_upper(j, k) = 1 when j > k: (x * M)_k = sum_{j>k} x_j.
// strict_lower(j, k) = 1 when j < k: (x * M)_k = sum_{j<k} x_j.
Tensor triangular(std::size_t k, bool upper) {
  Tensor m(k, k);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t c = 0; c < k; ++c) m(j, c) = (upper ? j > c : j < c) ? 1.0 : 0.0;
  return m;
}

void check_rows(const Tensor& r, const char* who) {
  for (std::size_t n = 0; n < r.rows(); ++n) {
    double s = 0.0;
    for (std::size_t k = 0; k < r.cols(); ++k) {
      if (!(r(n, k) >= 0.0))
        throw ContractError(std::string(who) + ": negative or NaN entry in row " +
                            std::to_string(n));
      s += r(n, k);
    }
    if (std::fabs(s - 1.0) > 1e-9)
      throw ContractError(std::string(who) + ": row " + std::to_string(n) + " sums to " +
                          std::to_string(s));
  }
}

Var apply_floor(Var r, double floor) {
  const double k = static_cast<double>(r.cols());
  return (1.0 - k * floor) * r + floor;
}

// First cluster whose parameters make the assignment logits ill-defined.
std::string locate_bad_cluster(const VBState& s) {
  const Tensor& theta = s.theta.value();
  for (std::size_t k = 0; k < s.r.cols(); ++k) {
    bool bad = false;
    for (const Var* v : {&s.gamma1, &s.gamma2, &s.a, &s.b}) {
      const double x = v->value()(0, k);
      bad = bad || !std::isfinite(x) || !(x > 0.0);
    }
    for (std::size_t c = 0; c < theta.cols(); ++c) bad = bad || !std::isfinite(theta(k, c));
    if (bad) return "cluster " + std::to_string(k);
  }
  return "unidentified cluster";
}

}  // namespace

void VBConfig::validate() const {
  if (clusters < 1) throw ConfigError("vb.K must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("vb.alpha must be positive");
  if (!(assignment_floor >= 0.0 && assignment_floor * static_cast<double>(clusters) < 1.0))
    throw ConfigError("vb.assignment_floor must lie in [0, 1/K)");
}

json to_json(const VBConfig& c) {
  return json{{"K", c.clusters},
              {"alpha", c.alpha},
              {"steps", c.steps},
              {"assignment_floor", c.assignment_floor}};
}

void update_from_json(VBConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("vb: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    auto as_size = [&] {
      if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError("vb." + k + ": expected a non-negative integer");
      return static_cast<std::size_t>(v.get<long long>());
    };
    auto as_double = [&] {
      if (!v.is_number()) throw ConfigError("vb." + k + ": expected a number");
      return v.get<double>();
    };
    if (k == "K") c.clusters = as_size();
    else if (k == "alpha") c.alpha = as_double();
    else if (k == "steps") c.steps = as_size();
    else if (k == "assignment_floor") c.assignment_floor = as_double();
    else throw ConfigError("vb: unknown key \"" + k + "\"");
  }
}

VBState init_state(Var r0, const VBConfig& config, Var log_r0) {
  config.validate();
  check_rows(r0.value(), "init_state");
  ad::Graph& g = *r0.graph();
  const std::size_t k = r0.cols();
  VBState s;
  s.a = g.constant(Tensor(1, k, 1.0));
  s.b = g.constant(Tensor(1, k, 1.0));
  if (config.assignment_floor > 0.0) {
    s.r = apply_floor(r0, config.assignment_floor);
    s.log_r = ad::log(s.r);
  } else {
    s.r = r0;
    s.log_r = log_r0;
  }
  return s;
}

void update_globals(Var z, VBState& s, const VBConfig& config) {
  ad::Graph& g = *z.graph();
  const std::size_t k = s.r.cols();
  const double dim = static_cast<double>(z.cols());
  if (z.rows() != s.r.rows())
    throw ShapeError("update_globals: " + std::to_string(z.rows()) + " representations but " +
                     std::to_string(s.r.rows()) + " assignment rows");

  const Var mass = ad::sum(s.r, Axis::Rows);  // 1 x K
  s.gamma1 = 1.0 + mass;
  s.gamma2 = config.alpha + ad::matmul(mass, g.constant(triangular(k, true)));

  // Posterior mean of mu_k given E[beta_k] = a_k / b_k.
  const Var precision = ad::transpose(s.a / s.b);                 // K x 1
  const Var weighted = ad::matmul(s.r, z, true, false);            // K x S
  const Var mass_col = ad::transpose(mass);                        // K x 1
  s.theta = (precision * weighted) / (1.0 + precision * mass_col);

  s.a = 1.0 + (0.5 * dim) * mass;
  s.sqdist = ad::sqdist(z, s.theta);
  s.b = 1.0 + 0.5 * ad::sum(s.r * (s.sqdist + dim), Axis::Rows);
}

void update_assignments(Var z, VBState& s, const VBConfig& config) {
  if (!s.has_globals()) throw ContractError("update_assignments: globals not yet updated");
  ad::Graph& g = *z.graph();
  const std::size_t k = s.r.cols();
  const double dim = static_cast<double>(z.cols());
  try {
    const Var dg_total = ad::digamma(s.gamma1 + s.gamma2);
    const Var elog_eta = ad::digamma(s.gamma1) - dg_total;
    const Var elog_rest = ad::digamma(s.gamma2) - dg_total;
    const Var elog_pi = elog_eta + ad::matmul(elog_rest, g.constant(triangular(k, false)));
    const Var elog_beta = ad::digamma(s.a) - ad::log(s.b);
    const Var logits =
        elog_pi + (0.5 * dim) * elog_beta - (s.a / (2.0 * s.b)) * (s.sqdist + dim);
    Var log_r = ad::log_softmax_rows(logits);
    Var r = ad::exp(log_r);
    if (config.assignment_floor > 0.0) {
      r = apply_floor(r, config.assignment_floor);
      log_r = ad::log(r);
    }
    s.r = r;
    s.log_r = log_r;
  } catch (const NumericalError& e) {
    throw NumericalError("update_assignments: non-finite logits at " + locate_bad_cluster(s) +
                         " (" + e.what() + ")");
  } catch (const DomainError& e) {
    throw NumericalError("update_assignments: invalid parameters at " + locate_bad_cluster(s) +
                         " (" + e.what() + ")");
  }
}

Var elbo(Var z, const VBState& s, const VBConfig& config) {
  if (!s.has_globals()) throw ContractError("elbo: globals not yet updated");
  ad::Graph& g = *z.graph();
  const std::size_t k = s.r.cols();
  const double dim = static_cast<double>(z.cols());
  const double alpha = config.alpha;

  const Var log_r = s.log_r.valid() ? s.log_r : ad::log(s.r);

  const Var dg1 = ad::digamma(s.gamma1);
  const Var dg2 = ad::digamma(s.gamma2);
  const Var dg_total = ad::digamma(s.gamma1 + s.gamma2);
  const Var elog_pi =
      (dg1 - dg_total) + ad::matmul(dg2 - dg_total, g.constant(triangular(k, false)));
  const Var elog_beta = ad::digamma(s.a) - ad::log(s.b);
  const Var e_beta = s.a / s.b;

  // E_q[log p(z | v, mu, beta)]
  const Var per_point = (0.5 * dim) * elog_beta - 0.5 * dim * std::log(2.0 * std::numbers::pi) -
                        (0.5 * e_beta) * (s.sqdist + dim);
  const Var expected_lik = ad::sum(s.r * per_point);
  // E_q[log p(v | eta)] - E_q[log q(v)]
  const Var expected_assign = ad::sum(s.r * elog_pi) - ad::sum(s.r * log_r);

  // KL(Beta(gamma1, gamma2) || Beta(1, alpha))
  const Var log_beta_q =
      ad::lgamma(s.gamma1) + ad::lgamma(s.gamma2) - ad::lgamma(s.gamma1 + s.gamma2);
  const Var kl_eta = -std::log(alpha) - log_beta_q + (s.gamma1 - 1.0) * dg1 +
                     (s.gamma2 - alpha) * dg2 + ((1.0 + alpha) - s.gamma1 - s.gamma2) * dg_total;
  // KL(N(theta, I) || N(0, I))
  const Var kl_mu = 0.5 * ad::sum(s.theta * s.theta);
  // KL(Gamma(a, b) || Gamma(1, 1)), shape-rate
  const Var kl_beta = (s.a - 1.0) * ad::digamma(s.a) - ad::lgamma(s.a) + ad::log(s.b) +
                      s.a * (1.0 - s.b) / s.b;

  return expected_lik + expected_assign - ad::sum(kl_eta) - kl_mu - ad::sum(kl_beta);
}

VBResult run_vb(Var z, Var r0, const VBConfig& config, bool track_elbo, Var log_r0) {
  if (r0.rows() != z.rows())
    throw ShapeError("run_vb: " + std::to_string(z.rows()) + " representations but " +
                     std::to_string(r0.rows()) + " initial assignment rows");
  VBResult out;
  out.state = init_state(r0, config, log_r0);
  for (std::size_t step = 0; step < config.steps; ++step) {
    update_globals(z, out.state, config);
    update_assignments(z, out.state, config);
    if (track_elbo) out.elbo_trace.push_back(elbo(z, out.state, config).value().item());
  }
  return out;
}

EMResult run_em(Var z, Var r0, std::size_t steps) {
  check_rows(r0.value(), "run_em");
  if (r0.rows() != z.rows()) throw ShapeError("run_em: row count mismatch");
  ad::Graph& g = *z.graph();
  const std::size_t n = z.rows();
  const std::size_t k = r0.cols();
  const double dim = static_cast<double>(z.cols());
  const double log_norm = 0.5 * dim * std::log(2.0 * std::numbers::pi);

  EMResult out;
  out.r = r0;
  for (std::size_t step = 0; step < steps; ++step) {
    // M-step.
    const Var mass = ad::sum(out.r, Axis::Rows);  // 1 x K
    Tensor empty(1, k);
    for (std::size_t c = 0; c < k; ++c) empty(0, c) = mass.value()(0, c) < kEmMinMass ? 1.0 : 0.0;
    const Var empty_mask = g.constant(empty);
    const Var safe_mass = mass + empty_mask;
    const Var mu = ad::matmul(out.r, z, true, false) / ad::transpose(safe_mass);
    const Var sq = ad::sqdist(z, mu);
    const Var scatter = ad::sum(out.r * sq, Axis::Rows);

    Tensor clamp = empty;
    for (std::size_t c = 0; c < k; ++c) {
      const double sc = scatter.value()(0, c);
      if (sc <= 0.0 || dim * mass.value()(0, c) / sc > kEmMaxPrecision) clamp(0, c) = 1.0;
      if (clamp(0, c) > 0.0) out.collapsed = true;
    }
    const Var clamp_mask = g.constant(clamp);
    const Var keep = 1.0 - clamp_mask;
    const Var precision =
        keep * ((dim * mass) / (scatter + clamp_mask)) + kEmMaxPrecision * clamp_mask;
    const Var log_weight = (1.0 - empty_mask) * ad::log(safe_mass / static_cast<double>(n)) +
                           std::log(kEmMinMass / static_cast<double>(n)) * empty_mask;

    // E-step.
    const Var loglik =
        log_weight + (0.5 * dim) * ad::log(precision) - log_norm - (0.5 * precision) * sq;
    const Var norm = ad::logsumexp(loglik, Axis::Cols);
    out.loglik_trace.push_back(ad::sum(norm).value().item());
    out.log_r = loglik - norm;
    out.r = ad::exp(out.log_r);
  }
  return out;
}

std::vector<int> hard_assignments(const Tensor& r) {
  std::vector<int> labels(r.rows(), 0);
  for (std::size_t n = 0; n < r.rows(); ++n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < r.cols(); ++k)
      if (r(n, k) > r(n, best)) best = k;
    labels[n] = static_cast<int>(best);
  }
  return labels;
}

std::size_t populated_clusters(const Tensor& r, double min_mass) {
  std::size_t count = 0;
  for (std::size_t k = 0; k < r.cols(); ++k) {
    double mass = 0.0;
    for (std::size_t n = 0; n < r.rows(); ++n) mass += r(n, k);
    if (mass > min_mass) ++count;
  }
  return count;
}

}  // namespace metaclust::vb

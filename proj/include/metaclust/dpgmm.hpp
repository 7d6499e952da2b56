#pragma once

// Truncated stick-breaking variational Bayes for a spherical Dirichlet-process
// Gaussian mixture, written entirely in graph primitives so the fixed number
// of sweeps can be differentiated end to end.
//
// Generative model (truncated at K' clusters):
//   eta_k ~ Beta(1, alpha),  pi_k = eta_k prod_{j<k} (1 - eta_j)
//   mu_k ~ N(0, I),  beta_k ~ Gamma(1, 1) (shape, rate)
//   v_n ~ Categorical(pi),  z_n ~ N(mu_{v_n}, beta_{v_n}^{-1} I)
// Variational family:
//   q(eta_k) = Beta(gamma1_k, gamma2_k), q(mu_k) = N(theta_k, I),
//   q(beta_k) = Gamma(a_k, b_k), q(v_n = k) = r_nk.

#include <cstddef>
#include <vector>

#include "metaclust/autodiff.hpp"
#include "metaclust/json_io.hpp"

namespace metaclust::vb {

struct VBConfig {
  std::size_t clusters = 10;  // K'
  double alpha = 1.0;
  std::size_t steps = 10;
  // Mixed into every assignment row as (1 - K' floor) r + floor.
  double assignment_floor = 1e-6;

  void validate() const;
};

json to_json(const VBConfig& c);
void update_from_json(VBConfig& c, const json& j);

struct VBState {
  ad::Var gamma1;  // 1 x K'
  ad::Var gamma2;  // 1 x K'
  ad::Var theta;   // K' x S
  ad::Var a;       // 1 x K'
  ad::Var b;       // 1 x K'
  ad::Var r;       // N x K'
  ad::Var log_r;   // N x K', log of r (may be unset right after init_state)
  ad::Var sqdist;  // N x K', ||z_n - theta_k||^2 for the current theta

  bool has_globals() const { return gamma1.valid(); }
};

// a = b = 1, gamma/theta unset, r = (1 - K' floor) r0 + floor.
// Throws ContractError when a row of r0 is negative or does not sum to 1.
VBState init_state(ad::Var r0, const VBConfig& config, ad::Var log_r0 = {});

// Closed-form global updates in the order gamma -> theta -> a -> b, each
// using the freshest values.
void update_globals(ad::Var z, VBState& state, const VBConfig& config);

// Assignment update; rows normalised via log-sum-exp. Throws NumericalError
// naming the first offending cluster when a logit is non-finite.
void update_assignments(ad::Var z, VBState& state, const VBConfig& config);

// Evidence lower bound of the truncated model at `state`.
ad::Var elbo(ad::Var z, const VBState& state, const VBConfig& config);

struct VBResult {
  VBState state;
  std::vector<double> elbo_trace;  // one value per sweep (empty unless tracked)
};

// `config.steps` sweeps of update_globals followed by update_assignments.
VBResult run_vb(ad::Var z, ad::Var r0, const VBConfig& config, bool track_elbo = false,
                ad::Var log_r0 = {});

struct EMResult {
  ad::Var r;
  ad::Var log_r;
  std::vector<double> loglik_trace;  // log p(Z | params) at each E-step
  bool collapsed = false;            // some cluster's precision was clamped
};

inline constexpr double kEmMinMass = 1e-8;
inline constexpr double kEmMaxPrecision = 1e6;

// Maximum-likelihood EM for a spherical K-component mixture (K = r0.cols())
// with per-cluster precision and mixing weights, starting from the
// responsibilities r0. Each step is an M-step followed by an E-step.
EMResult run_em(ad::Var z, ad::Var r0, std::size_t steps);

// argmax per row, ties to the lowest index.
std::vector<int> hard_assignments(const Tensor& r);

// Clusters whose total responsibility exceeds `min_mass` instances.
std::size_t populated_clusters(const Tensor& r, double min_mass = 1.0);

}  // namespace metaclust::vb

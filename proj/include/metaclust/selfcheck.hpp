#pragma once

// Finite-difference verification of the derivative rules, staged from single
// primitives up to the full episode loss.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metaclust/gradcheck.hpp"
#include "metaclust/json_io.hpp"

namespace metaclust::selfcheck {

struct Check {
  std::string stage;  // primitives | encoder | vb | pipeline
  std::string name;
  ad::GradCheckReport report;
};

struct SuiteConfig {
  std::uint64_t seed = 0;
  std::size_t instances = 12;
  std::size_t input_dim = 4;
  std::size_t repr_dim = 4;
  std::size_t clusters = 4;
  std::size_t vb_steps = 5;
  std::size_t hidden = 8;
  std::size_t episodes = 3;
  double step = 1e-7;
  double tolerance = 1e-4;
};

json to_json(const SuiteConfig& c);
void update_from_json(SuiteConfig& c, const json& j);

std::vector<Check> check_primitives(std::uint64_t seed, double step);
Check check_encoder(const SuiteConfig& c);
Check check_vb(const SuiteConfig& c);
// One check per episode: gradient of -continuous ARI with respect to every
// encoder parameter on a random labelled episode of c.instances rows.
std::vector<Check> check_pipeline(const SuiteConfig& c);

struct SuiteReport {
  std::vector<Check> checks;
  double tolerance = 1e-4;

  double max_error() const;
  const Check* worst() const;
  bool passed() const { return max_error() < tolerance; }
};

SuiteReport run_suite(const SuiteConfig& c);
json to_json(const SuiteReport& r);

}  // namespace metaclust::selfcheck

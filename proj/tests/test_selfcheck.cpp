#include <doctest.h>

#include "metaclust/selfcheck.hpp"

using namespace metaclust;

TEST_CASE("every primitive passes its own check") {
  auto checks = selfcheck::check_primitives(3, 1e-7);
  CHECK(checks.size() >= ad::kOpCount - 2);
  for (const auto& c : checks) {
    INFO(c.name);
    CHECK(c.report.max_rel_error < 1e-5);
  }
}

TEST_CASE("staged suite passes and names all four stages") {
  selfcheck::SuiteConfig cfg;
  cfg.seed = 1;
  cfg.episodes = 2;
  auto rep = selfcheck::run_suite(cfg);
  CHECK(rep.passed());
  auto j = selfcheck::to_json(rep);
  for (const char* stage : {"primitives", "encoder", "vb", "pipeline"}) CHECK(j["stages"].contains(stage));
}

TEST_CASE("a faulted rule fails the pipeline check") {
  selfcheck::SuiteConfig cfg;
  cfg.seed = 2;
  cfg.episodes = 1;
  ad::testing::set_derivative_fault(ad::Op::Digamma, 1.5);
  auto vb = selfcheck::check_vb(cfg);
  ad::testing::clear_derivative_faults();
  CHECK(vb.report.max_rel_error > cfg.tolerance);
  CHECK(selfcheck::check_vb(cfg).report.max_rel_error < cfg.tolerance);
}

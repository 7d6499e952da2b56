#include "metaclust/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "metaclust/dataio.hpp"
#include "metaclust/dpgmm.hpp"
#include "metaclust/encoder.hpp"
#include "metaclust/error.hpp"
#include "metaclust/trainer.hpp"

namespace metaclust::selfcheck {
namespace {

using ad::Axis;
using ad::Var;
using Rng = std::mt19937_64;

Tensor uniform(std::size_t r, std::size_t c, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Magnitudes in [lo, hi] with random signs, keeping kinks at 0 out of reach.
Tensor signed_away(std::size_t r, std::size_t c, double lo, double hi, Rng& rng) {
  Tensor t = uniform(r, c, lo, hi, rng);
  std::bernoulli_distribution coin;
  for (auto& v : t.values())
    if (coin(rng)) v = -v;
  return t;
}

Check run(std::string stage, std::string name, const ad::LossBuilder& f, std::vector<Tensor> params,
          double step) {
  return {std::move(stage), std::move(name), ad::finite_difference_check(f, params, step)};
}

// Zero biases put rectifier inputs exactly on the kink for any row whose
// previous layer is entirely inactive; probe at random offsets instead.
void jitter_biases(nn::EncoderParams& p, Rng& rng) {
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (auto& [name, t] : p.named())
    if (name.back() == 'b')
      for (auto& v : t->values()) v = u(rng);
}

// Weighted sum so that no output coordinate cancels against another.
Var weighted(Var y, const Tensor& w) { return ad::sum(y * y.graph()->constant(w)); }

}  // namespace

json to_json(const SuiteConfig& c) {
  return {{"seed", c.seed},         {"instances", c.instances}, {"input_dim", c.input_dim},
          {"repr_dim", c.repr_dim}, {"clusters", c.clusters},   {"vb_steps", c.vb_steps},
          {"hidden", c.hidden},     {"episodes", c.episodes},   {"step", c.step},
          {"tolerance", c.tolerance}};
}

void update_from_json(SuiteConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("gradcheck: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    auto as_size = [&] {
      if (!v.is_number_integer() || v.get<long long>() < 1)
        throw ConfigError("gradcheck." + k + ": expected a positive integer");
      return static_cast<std::size_t>(v.get<long long>());
    };
    auto as_positive = [&] {
      if (!v.is_number() || !(v.get<double>() > 0.0))
        throw ConfigError("gradcheck." + k + ": expected a positive number");
      return v.get<double>();
    };
    if (k == "instances") c.instances = as_size();
    else if (k == "input_dim") c.input_dim = as_size();
    else if (k == "repr_dim") c.repr_dim = as_size();
    else if (k == "clusters") c.clusters = as_size();
    else if (k == "vb_steps") c.vb_steps = as_size();
    else if (k == "hidden") c.hidden = as_size();
    else if (k == "episodes") c.episodes = as_size();
    else if (k == "step") c.step = as_positive();
    else if (k == "tolerance") c.tolerance = as_positive();
    else throw ConfigError("gradcheck: unknown key \"" + k + "\"");
  }
  if (c.instances < 4) throw ConfigError("gradcheck.instances must be >= 4");
}

std::vector<Check> check_primitives(std::uint64_t seed, double step) {
  Rng rng(seed);
  std::vector<Check> out;
  auto unary = [&](std::string name, Tensor x, auto fn, std::size_t r = 0, std::size_t c = 0) {
    const Tensor w = uniform(r ? r : x.rows(), c ? c : x.cols(), -1.0, 1.0, rng);
    out.push_back(run("primitives", std::move(name),
                      [=](ad::Graph&, std::span<const Var> p) { return weighted(fn(p[0]), w); },
                      {std::move(x)}, step));
  };
  auto binary = [&](std::string name, Tensor a, Tensor b, std::size_t r, std::size_t c, auto fn) {
    const Tensor w = uniform(r, c, -1.0, 1.0, rng);
    out.push_back(run("primitives", std::move(name),
                      [=](ad::Graph&, std::span<const Var> p) { return weighted(fn(p[0], p[1]), w); },
                      {std::move(a), std::move(b)}, step));
  };

  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      Tensor a = ta ? uniform(4, 3, -1, 1, rng) : uniform(3, 4, -1, 1, rng);
      Tensor b = tb ? uniform(2, 4, -1, 1, rng) : uniform(4, 2, -1, 1, rng);
      binary(std::string("MatMul") + (ta ? "[tA]" : "") + (tb ? "[tB]" : ""), a, b, 3, 2,
             [=](Var x, Var y) { return ad::matmul(x, y, ta, tb); });
    }
  for (auto [rb, cb] : {std::pair<std::size_t, std::size_t>{3, 4}, {1, 4}, {3, 1}}) {
    const std::string tag = "[" + std::to_string(rb) + "x" + std::to_string(cb) + "]";
    binary("Add" + tag, uniform(3, 4, -1, 1, rng), uniform(rb, cb, -1, 1, rng), 3, 4,
           [](Var x, Var y) { return x + y; });
    binary("Sub" + tag, uniform(3, 4, -1, 1, rng), uniform(rb, cb, -1, 1, rng), 3, 4,
           [](Var x, Var y) { return x - y; });
    binary("Mul" + tag, uniform(3, 4, -1, 1, rng), uniform(rb, cb, -1, 1, rng), 3, 4,
           [](Var x, Var y) { return x * y; });
    binary("Div" + tag, uniform(3, 4, -1, 1, rng), signed_away(rb, cb, 0.5, 2.0, rng), 3, 4,
           [](Var x, Var y) { return x / y; });
  }
  unary("Neg", uniform(3, 4, -1, 1, rng), [](Var x) { return -x; });
  unary("Exp", uniform(3, 4, -1, 1, rng), [](Var x) { return ad::exp(x); });
  unary("Log", uniform(3, 4, 0.5, 2.0, rng), [](Var x) { return ad::log(x); });
  unary("Abs", signed_away(3, 4, 0.1, 1.0, rng), [](Var x) { return ad::abs(x); });
  unary("Relu", signed_away(3, 4, 0.1, 1.0, rng), [](Var x) { return ad::relu(x); });
  unary("Digamma", uniform(3, 4, 0.3, 12.0, rng), [](Var x) { return ad::digamma(x); });
  unary("Lgamma", uniform(3, 4, 0.3, 12.0, rng), [](Var x) { return ad::lgamma(x); });
  for (auto [axis, tag] : {std::pair{Axis::All, "[all]"}, {Axis::Rows, "[rows]"}, {Axis::Cols, "[cols]"}}) {
    const Axis ax = axis;
    unary(std::string("Sum") + tag, uniform(3, 4, -1, 1, rng), [ax](Var x) { return ad::sum(x, ax); });
    unary(std::string("Mean") + tag, uniform(3, 4, -1, 1, rng), [ax](Var x) { return ad::mean(x, ax); });
    unary(std::string("LogSumExp") + tag, uniform(3, 4, -2, 2, rng),
          [ax](Var x) { return ad::logsumexp(x, ax); });
  }
  binary("SqDist", uniform(5, 3, -1, 1, rng), uniform(4, 3, -1, 1, rng), 5, 4,
         [](Var x, Var y) { return ad::sqdist(x, y); });
  unary("PairwiseL1", uniform(5, 3, -1, 1, rng), [](Var x) { return ad::pairwise_l1(x); }, 5, 5);
  binary("ConcatCols", uniform(3, 2, -1, 1, rng), uniform(3, 4, -1, 1, rng), 3, 6,
         [](Var x, Var y) { return ad::concat_cols(x, y); });
  unary("Transpose", uniform(3, 4, -1, 1, rng), [](Var x) { return ad::transpose(x); }, 4, 3);
  return out;
}

namespace {

nn::EncoderConfig small_encoder(const SuiteConfig& c) {
  nn::EncoderConfig e;
  e.input_dim = c.input_dim;
  e.repr_dim = c.repr_dim;
  e.hidden = c.hidden;
  e.pool_dim = c.hidden;
  e.task_dim = c.hidden;
  e.clusters = c.clusters;
  e.depth = 3;
  return e;
}

}  // namespace

Check check_encoder(const SuiteConfig& c) {
  Rng rng(c.seed ^ 0x2545F4914F6CDD1DULL);
  const nn::EncoderConfig ec = small_encoder(c);
  nn::EncoderParams params = nn::init_params(ec, rng());
  jitter_biases(params, rng);
  const Tensor x = uniform(c.instances, c.input_dim, -2, 2, rng);
  const Tensor w = uniform(c.instances, c.clusters, -1, 1, rng);
  const std::uint64_t drop_seed = rng();
  std::vector<Tensor> flat;
  for (const auto& [name, t] : params.named()) flat.push_back(*t);

  train::ModelConfig mc;
  mc.encoder = ec;
  const auto builder = [=](ad::Graph& g, std::span<const Var> p) {
    // The pipeline's own layout helper is private; rebuild the networks here.
    nn::BoundEncoder enc;
    std::size_t i = 0;
    for (nn::BoundMLP* m : {&enc.fZ, &enc.fU, &enc.gU, &enc.fR})
      for (std::size_t l = 0; l < ec.depth; ++l) {
        m->weight.push_back(p[i++]);
        m->bias.push_back(p[i++]);
      }
    Rng drop(drop_seed);
    nn::DropoutContext ctx{&drop, ec.dropout_rate, ec.dropout_on};
    const Var z = nn::encode_instances(enc, g.constant(x), ec, &ctx);
    const Var u = nn::task_representation(enc, z, &ctx);
    return weighted(nn::initial_assignments(enc, z, u, &ctx).log_r, w);
  };
  return run("encoder", "fZ-fU-gU-fR", builder, std::move(flat), c.step);
}

Check check_vb(const SuiteConfig& c) {
  Rng rng(c.seed ^ 0x9FB21C651E98DF25ULL);
  Tensor z = uniform(c.instances, c.repr_dim, -3, 3, rng);
  Tensor logits = uniform(c.instances, c.clusters, -1, 1, rng);
  const Tensor w = uniform(c.instances, c.clusters, -1, 1, rng);
  vb::VBConfig vc;
  vc.clusters = c.clusters;
  vc.steps = c.vb_steps;
  const auto builder = [=](ad::Graph&, std::span<const Var> p) {
    const Var log_r0 = ad::log_softmax_rows(p[1]);
    const auto res = vb::run_vb(p[0], ad::exp(log_r0), vc, false, log_r0);
    return weighted(res.state.r, w);
  };
  return run("vb", "unrolled-" + std::to_string(c.vb_steps), builder, {std::move(z), std::move(logits)},
             c.step);
}

std::vector<Check> check_pipeline(const SuiteConfig& c) {
  Rng rng(c.seed ^ 0xD6E8FEB86659FD93ULL);
  train::ModelConfig mc;
  mc.encoder = small_encoder(c);
  mc.vb.clusters = c.clusters;
  mc.vb.steps = c.vb_steps;
  const nn::EncoderConfig ec = mc.effective_encoder();

  std::vector<Check> out;
  for (std::size_t e = 0; e < c.episodes; ++e) {
    // Between two and four categories sharing the instances, overlapping
    // enough that the assignments stay soft.
    const std::size_t k = 2 + static_cast<std::size_t>(rng() % 3);
    data::SyntheticSpec spec;
    spec.categories = k;
    spec.instances_per_category = (c.instances + k - 1) / k;
    spec.dim = std::max<std::size_t>(2, c.input_dim);
    spec.separation = 2.0;
    spec.box_half_width = 3.0;
    const auto d = data::gen_synthetic(spec, rng());
    train::TaskBatch batch;
    batch.seed = rng();
    batch.x = Tensor(c.instances, c.input_dim);
    for (std::size_t i = 0; i < c.instances; ++i) {
      for (std::size_t j = 0; j < c.input_dim; ++j) batch.x(i, j) = d.x(i, j) / 3.0;
      batch.y.push_back(d.y[i]);
    }
    for (int v = 0; v <= *std::max_element(batch.y.begin(), batch.y.end()); ++v)
      batch.categories.push_back(v);

    nn::EncoderParams params = nn::init_params(ec, rng());
    jitter_biases(params, rng);
    std::vector<Tensor> flat;
    for (const auto& [name, t] : params.named()) flat.push_back(*t);
    const auto builder = [=](ad::Graph& g, std::span<const Var> p) {
      return train::episode_loss_var(g, p, batch, mc, true);
    };
    out.push_back(run("pipeline", "episode-" + std::to_string(e), builder, std::move(flat), c.step));
  }
  return out;
}

double SuiteReport::max_error() const {
  double m = 0.0;
  for (const auto& c : checks) m = std::max(m, c.report.max_rel_error);
  return m;
}

const Check* SuiteReport::worst() const {
  const Check* w = nullptr;
  for (const auto& c : checks)
    if (!w || c.report.max_rel_error > w->report.max_rel_error) w = &c;
  return w;
}

SuiteReport run_suite(const SuiteConfig& c) {
  SuiteReport r;
  r.tolerance = c.tolerance;
  r.checks = check_primitives(c.seed, c.step);
  r.checks.push_back(check_encoder(c));
  r.checks.push_back(check_vb(c));
  for (auto& p : check_pipeline(c)) r.checks.push_back(std::move(p));
  return r;
}

json to_json(const SuiteReport& r) {
  json stages = json::object();
  json checks = json::array();
  for (const auto& c : r.checks) {
    const auto& g = c.report;
    checks.push_back({{"stage", c.stage},
                      {"name", c.name},
                      {"max_rel_error", g.max_rel_error},
                      {"coordinates", g.coordinates},
                      {"worst_tensor", g.worst_tensor},
                      {"worst_index", g.worst_index},
                      {"analytic", g.analytic},
                      {"numeric", g.numeric}});
    const double prev = stages.contains(c.stage) ? stages[c.stage].get<double>() : 0.0;
    stages[c.stage] = std::max(prev, g.max_rel_error);
  }
  json out = {{"tolerance", r.tolerance},
              {"max_rel_error", r.max_error()},
              {"passed", r.passed()},
              {"stages", stages},
              {"checks", checks}};
  if (const Check* w = r.worst())
    out["worst"] = {{"stage", w->stage},
                    {"name", w->name},
                    {"tensor", w->report.worst_tensor},
                    {"index", w->report.worst_index}};
  return out;
}

}  // namespace metaclust::selfcheck

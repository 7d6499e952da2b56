#include <cmath>
#include <map>
#include <random>

#include <doctest.h>

#include "metaclust/error.hpp"
#include "metaclust/trainer.hpp"

using namespace metaclust;
using train::Mode;

namespace {

std::vector<data::LabeledDataset> blob_tasks(std::size_t n, std::size_t cats, std::size_t dim,
                                             double half_width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<data::LabeledDataset> out;
  for (std::size_t i = 0; i < n; ++i) {
    data::SyntheticSpec s;
    s.categories = cats;
    s.dim = dim;
    s.box_half_width = half_width;
    out.push_back(data::gen_synthetic(s, rng()));
  }
  return out;
}

train::ModelConfig small_model(std::size_t input_dim, Mode mode = Mode::Full) {
  train::ModelConfig m;
  m.mode = mode;
  m.encoder.input_dim = input_dim;
  m.encoder.repr_dim = 3;
  m.encoder.hidden = 12;
  m.encoder.pool_dim = 8;
  m.encoder.task_dim = 8;
  m.vb.clusters = 4;
  m.vb.steps = 4;
  return m;
}

data::LabeledDataset one_hot_task(std::size_t cats, std::size_t per, double scale) {
  data::LabeledDataset d;
  d.x = Tensor(cats * per, cats);
  for (std::size_t c = 0; c < cats; ++c) {
    d.label_names.push_back("c" + std::to_string(c));
    d.feature_names.push_back("f" + std::to_string(c));
    for (std::size_t i = 0; i < per; ++i) {
      d.x(c * per + i, c) = scale;
      d.y.push_back(static_cast<int>(c));
    }
  }
  return d;
}

// Hand-set f_R: hidden unit h computes relu(rows[h] . input), passes
// unchanged through the middle layers, and feeds cluster h's logit with `gain`.
void route(nn::MLPParams& net, const std::vector<std::vector<double>>& rows, double gain) {
  for (auto& l : net.layers) l.weight.fill(0.0), l.bias.fill(0.0);
  for (std::size_t h = 0; h < rows.size(); ++h) {
    for (std::size_t j = 0; j < rows[h].size(); ++j) net.layers.front().weight(h, j) = rows[h][j];
    for (std::size_t i = 1; i + 1 < net.layers.size(); ++i) net.layers[i].weight(h, h) = 1.0;
    net.layers.back().weight(h, h) = gain;
  }
}

}  // namespace

TEST_CASE("mode names") {
  for (auto m : {Mode::Full, Mode::NoFRInit, Mode::EMInference, Mode::ProbDistance, Mode::IdentityEncoder})
    CHECK(train::parse_mode(train::mode_name(m)) == m);
  CHECK_THROWS_AS(train::parse_mode("fancy"), ConfigError);
}

TEST_CASE("train config json is strict") {
  train::TrainConfig c;
  train::update_from_json(c, json{{"max_epochs", 7}, {"learning_rate", 0.01}});
  CHECK(c.max_epochs == 7);
  CHECK(c.learning_rate == 0.01);
  CHECK_THROWS_AS(train::update_from_json(c, json{{"max_epoch", 7}}), ConfigError);
  CHECK_THROWS_AS(train::update_from_json(c, json{{"max_epochs", -1}}), ConfigError);
  train::TrainConfig back;
  train::update_from_json(back, train::to_json(c));
  CHECK(train::to_json(back) == train::to_json(c));
}

TEST_CASE("episode sampling") {
  data::LabeledDataset single = one_hot_task(1, 5, 1.0);
  train::Rng rng(1);
  auto b = train::sample_episode(std::span(&single, 1), {1, 10, 20}, rng);
  CHECK(b.x.rows() == 5);
  CHECK(b.y == std::vector<int>(5, 0));

  auto tasks = blob_tasks(3, 6, 2, 0, 2);
  train::Rng r1(42), r2(42);
  auto e1 = train::sample_episode(tasks, {2, 10, 7}, r1);
  auto e2 = train::sample_episode(tasks, {2, 10, 7}, r2);
  CHECK(e1.x == e2.x);
  CHECK(e1.y == e2.y);
  CHECK(e1.seed == e2.seed);
  CHECK(e1.x.rows() == 7 * e1.k());

  std::map<std::size_t, int> freq;
  std::map<std::size_t, int> ks;
  train::Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    auto e = train::sample_episode(tasks, {2, 4, 20}, r);
    ++freq[e.task_id];
    ++ks[e.k()];
    CHECK(e.k() >= 2);
    CHECK(e.k() <= 4);
  }
  const double sigma = std::sqrt(1000 * (1.0 / 3) * (2.0 / 3));
  for (auto& [t, f] : freq) CHECK(std::abs(f - 1000.0 / 3) < 3 * sigma);
  CHECK(ks.size() == 3);
}

TEST_CASE("episode loss conventions") {
  auto model = small_model(2);
  auto params = nn::init_params(model.effective_encoder(), 0);
  data::LabeledDataset single = one_hot_task(1, 6, 1.0);
  single.x = Tensor(6, 2, 0.5);
  single.feature_names = {"a", "b"};
  train::Rng rng(1);
  auto b = train::sample_episode(std::span(&single, 1), {1, 1, 20}, rng);
  auto res = train::episode_loss(params, b, model);
  CHECK(res.loss == 0.0);
  CHECK(res.degenerate);

  auto tasks = blob_tasks(4, 5, 2, 0, 5);
  for (int i = 0; i < 20; ++i) {
    auto e = train::sample_episode(tasks, {1, 4, 10}, rng);
    auto r = train::episode_loss(params, e, model);
    CHECK(r.loss >= -1.0);
    CHECK(r.loss <= 1.0);
    CHECK(r.grads.size() == params.named().size());
  }
}

TEST_CASE("separated representations give near-perfect loss in identity mode") {
  // two tight groups either side of the origin
  data::LabeledDataset d;
  d.label_names = {"a", "b"};
  d.feature_names = {"x", "y"};
  d.x = Tensor(20, 2);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 0.1);
  for (std::size_t i = 0; i < 20; ++i) {
    d.x(i, 0) = (i < 10 ? -3.0 : 3.0) + nd(rng);
    d.x(i, 1) = nd(rng);
    d.y.push_back(i < 10 ? 0 : 1);
  }
  auto model = small_model(2, Mode::IdentityEncoder);
  model.vb.clusters = 2;
  model.vb.steps = 10;
  train::TaskBatch b{d.x, d.y, 0, {0, 1}, 0};
  auto params = nn::init_params(model.effective_encoder(), 0);
  // f_R splits on the sign of the first coordinate
  route(params.fR, {{-1.0}, {1.0}}, 4.0);
  CHECK(train::episode_loss(params, b, model, false).loss <= -0.99);
}

TEST_CASE("adam") {
  train::TrainConfig cfg;
  Tensor p = Tensor::row({1.0, -2.0});
  std::vector<Tensor*> ps{&p};
  std::vector<const Tensor*> cps{&p};
  auto st = train::adam_init(cps);

  std::vector<Tensor> zero{Tensor(1, 2, 0.0)};
  CHECK(train::adam_step(ps, zero, st, cfg));
  CHECK(p == Tensor::row({1.0, -2.0}));
  CHECK(st.step == 1);

  auto fresh = train::adam_init(cps);
  std::vector<Tensor> g{Tensor::row({0.3, -5.0})};
  CHECK(train::adam_step(ps, g, fresh, cfg));
  CHECK(p[0] == doctest::Approx(1.0 - cfg.learning_rate).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-2.0 + cfg.learning_rate).epsilon(1e-6));

  const Tensor before = p;
  std::vector<Tensor> bad{Tensor::row({NAN, 1.0})};
  CHECK_FALSE(train::adam_step(ps, bad, fresh, cfg));
  CHECK(p == before);
  CHECK(fresh.step == 1);
}

TEST_CASE("clipping") {
  std::vector<Tensor> g{Tensor::row({3.0, 0.0}), Tensor::row({4.0})};
  CHECK(train::clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0][0] == doctest::Approx(0.6));
  CHECK(g[1][0] == doctest::Approx(0.8));
  std::vector<Tensor> small{Tensor::row({0.1})};
  train::clip_global_norm(small, 1.0);
  CHECK(small[0][0] == 0.1);
}

TEST_CASE("training") {
  auto tasks = blob_tasks(6, 5, 3, 0, 11);
  auto val = blob_tasks(2, 5, 3, 0, 12);
  auto model = small_model(3);
  auto init = nn::init_params(model.effective_encoder(), 1);
  train::TrainConfig cfg;
  cfg.validation_interval = 5;
  cfg.validation_tasks = 6;
  cfg.seed = 9;

  SUBCASE("zero epochs returns the initial parameters") {
    cfg.max_epochs = 0;
    auto st = train::train(init, tasks, val, model, cfg);
    CHECK(st.best.fZ.layers[0].weight == init.fZ.layers[0].weight);
    CHECK(st.log.size() == 1);
    CHECK(st.log[0].validation_ari.has_value());
  }

  SUBCASE("determinism, resumption and best-parameter bookkeeping") {
    cfg.max_epochs = 30;
    auto a = train::train(init, tasks, val, model, cfg);
    auto b = train::train(init, tasks, val, model, cfg);
    CHECK(dump_json(train::state_to_json(a)) == dump_json(train::state_to_json(b)));
    CHECK(a.log.size() == 31);

    auto half_cfg = cfg;
    half_cfg.max_epochs = 12;
    auto half = train::train(init, tasks, val, model, half_cfg);
    auto restored = train::state_from_json(json::parse(dump_json(train::state_to_json(half))));
    auto resumed = train::train(init, tasks, val, model, cfg, restored);
    CHECK(dump_json(train::state_to_json(resumed)) == dump_json(train::state_to_json(a)));

    double best = -2;
    for (const auto& r : a.log)
      if (r.validation_ari) best = std::max(best, *r.validation_ari);
    CHECK(a.best_validation == best);
    train::EvalConfig ec{cfg.validation_tasks, {cfg.eval_k_min, cfg.eval_k_max, cfg.n_max_per_category},
                         cfg.seed ^ 0x9E3779B97F4A7C15ULL, std::nullopt};
    CHECK(train::evaluate(a.best, val, model, ec).mean == best);
  }

  SUBCASE("patience stops the run") {
    cfg.max_epochs = 500;
    cfg.patience = 2;
    cfg.learning_rate = 1e-300;  // too small to move any weight
    auto st = train::train(init, tasks, val, model, cfg);
    CHECK(st.stopped);
    CHECK(st.epoch == 10);
  }
}

TEST_CASE("evaluation") {
  auto model = small_model(4, Mode::IdentityEncoder);
  model.vb.clusters = 10;
  model.vb.steps = 10;
  auto params = nn::init_params(model.effective_encoder(), 0);
  auto tasks = blob_tasks(3, 6, 4, 0, 3);

  SUBCASE("collapsed representations score zero") {
    auto m = small_model(4);
    auto p = nn::init_params(m.effective_encoder(), 0);
    for (auto& l : p.fZ.layers) l.weight.fill(0.0), l.bias.fill(0.0);
    auto r = train::evaluate(p, tasks, m, {30, {2, 6, 20}, 1, std::nullopt});
    CHECK(std::abs(r.mean) < 1e-12);
  }

  SUBCASE("standard error and ordering") {
    auto r = train::evaluate(params, tasks, model, {25, {2, 6, 20}, 4, std::nullopt});
    double mean = 0, ss = 0;
    for (auto& t : r.tasks) mean += t.ari / 25;
    for (auto& t : r.tasks) ss += (t.ari - mean) * (t.ari - mean);
    CHECK(r.mean == doctest::Approx(mean).epsilon(1e-14));
    CHECK(*r.standard_error == doctest::Approx(std::sqrt(ss / 24) / 5).epsilon(1e-12));
    auto again = train::evaluate(params, tasks, model, {25, {2, 6, 20}, 4, std::nullopt});
    CHECK(dump_json(train::to_json(again)) == dump_json(train::to_json(r)));
    auto one = train::evaluate(params, tasks, model, {1, {2, 6, 20}, 4, std::nullopt});
    CHECK_FALSE(one.standard_error.has_value());
  }

  SUBCASE("one-hot category codes are clustered") {
    auto oh = one_hot_task(6, 20, 3.0);
    auto m = small_model(6, Mode::IdentityEncoder);
    m.vb.clusters = 10;
    m.vb.steps = 10;
    m.encoder.hidden = 12;
    auto p = nn::init_params(m.effective_encoder(), 0);
    std::vector<std::vector<double>> rows(6, std::vector<double>(6, 0.0));
    for (std::size_t c = 0; c < 6; ++c) rows[c][c] = 1.0;
    route(p.fR, rows, 2.0);
    auto r = train::evaluate(p, std::span(&oh, 1), m, {50, {2, 6, 20}, 2, std::nullopt});
    CHECK(r.mean >= 0.99);
  }

  SUBCASE("random starts without inference carry no label information") {
    auto m = small_model(4, Mode::NoFRInit);
    m.vb.steps = 0;
    auto p = nn::init_params(m.effective_encoder(), 0);
    auto r = train::evaluate(p, tasks, m, {300, {2, 6, 20}, 8, std::nullopt});
    CHECK(std::abs(r.mean) < 0.05);
  }
}

TEST_CASE("prototypical pretraining separates blobs") {
  auto tasks = blob_tasks(1, 12, 2, 0, 21);
  auto held = blob_tasks(1, 6, 2, 0, 22);
  nn::EncoderConfig ec;
  ec.input_dim = 2;
  ec.repr_dim = 4;
  ec.hidden = 32;
  auto init = nn::init_params(ec, 0);
  auto st = data::Standardizer::fit(tasks[0].x);
  tasks[0] = st.apply(tasks[0]);
  held[0] = st.apply(held[0]);
  train::ProtoConfig pc;
  pc.episodes = 300;
  pc.optimizer.learning_rate = 1e-2;
  auto fz = train::proto_pretrain(init.fZ, tasks, ec, pc);
  auto fz2 = train::proto_pretrain(init.fZ, tasks, ec, pc);
  CHECK(fz.layers[0].weight == fz2.layers[0].weight);
  CHECK(train::proto_accuracy(fz, held, 100, 5, 1) > 0.95);
}

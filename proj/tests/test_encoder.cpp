#include <filesystem>
#include <random>

#include <doctest.h>

#include "metaclust/encoder.hpp"
#include "metaclust/error.hpp"

using namespace metaclust;

namespace {

nn::EncoderConfig small_config() {
  nn::EncoderConfig c;
  c.input_dim = 5;
  c.repr_dim = 4;
  c.hidden = 16;
  c.pool_dim = 8;
  c.task_dim = 6;
  c.clusters = 3;
  return c;
}

Tensor randn(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor t(r, c);
  for (auto& v : t.values()) v = std::normal_distribution<double>()(rng);
  return t;
}

void zero(nn::MLPParams& m) {
  for (auto& l : m.layers) l.weight.fill(0.0), l.bias.fill(0.0);
}

}  // namespace

TEST_CASE("init is deterministic per seed") {
  auto c = small_config();
  auto a = nn::init_params(c, 0), b = nn::init_params(c, 0), d = nn::init_params(c, 1);
  CHECK(a.fZ.layers[0].weight == b.fZ.layers[0].weight);
  CHECK(a.fR.layers[2].weight == b.fR.layers[2].weight);
  CHECK_FALSE(a.fZ.layers[0].weight == d.fZ.layers[0].weight);
}

TEST_CASE("default widths") {
  nn::EncoderConfig c;
  c.input_dim = 5;
  c.repr_dim = 10;
  auto p = nn::init_params(c, 0);
  CHECK(p.fZ.layers.size() == 3);
  CHECK(p.fZ.layers.back().weight.rows() == 10);
  CHECK(p.fZ.layers.back().weight.cols() == 256);
  CHECK(p.fR.input_dim() == 10 + 256);
  CHECK(p.fR.output_dim() == 10);
  CHECK(p.named().front().first == "fZ.0.W");
  CHECK(p.named().back().first == "fR.2.b");
}

TEST_CASE("instance encoder") {
  auto c = small_config();
  auto p = nn::init_params(c, 3);
  ad::Graph g;
  auto enc = nn::bind(g, p, false);
  Tensor x = randn(4, 5, 1);
  for (std::size_t j = 0; j < 5; ++j) x(3, j) = x(1, j);
  auto z = nn::encode_instances(enc, g.constant(x), c, nullptr).value();
  CHECK(z.rows() == 4);
  CHECK(z.cols() == 4);
  CHECK(z.row_at(1) == z.row_at(3));
  auto z1 = nn::encode_instances(enc, g.constant(x.row_at(0)), c, nullptr).value();
  CHECK(z1.rows() == 1);

  zero(p.fZ);
  ad::Graph h;
  auto zz = nn::encode_instances(nn::bind(h, p, false), h.constant(x), c, nullptr).value();
  for (double v : zz.values()) CHECK(v == 0.0);

  auto ident = c;
  ident.identity_encoder = true;
  CHECK(ident.effective_repr_dim() == 5);
  ad::Graph k;
  auto pi = nn::init_params(ident, 0);
  CHECK(nn::encode_instances(nn::bind(k, pi, false), k.constant(x), ident, nullptr).value() == x);
}

TEST_CASE("task representation is a set function") {
  auto c = small_config();
  auto p = nn::init_params(c, 4);
  ad::Graph g;
  auto enc = nn::bind(g, p, false);
  Tensor z = randn(6, 4, 2);
  Tensor perm(6, 4), twice(12, 4);
  const int order[6] = {3, 0, 5, 1, 4, 2};
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      perm(i, j) = z(static_cast<std::size_t>(order[i]), j);
      twice(i, j) = twice(i + 6, j) = z(i, j);
    }
  auto u = nn::task_representation(enc, g.constant(z), nullptr).value();
  auto up = nn::task_representation(enc, g.constant(perm), nullptr).value();
  auto ut = nn::task_representation(enc, g.constant(twice), nullptr).value();
  CHECK(u.rows() == 1);
  CHECK(u.cols() == 6);
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(std::abs(u[j] - up[j]) < 1e-12);
    CHECK(std::abs(u[j] - ut[j]) < 1e-12);
  }
}

TEST_CASE("initial assignments") {
  auto c = small_config();
  auto p = nn::init_params(c, 5);
  Tensor z = randn(7, 4, 3);
  {
    ad::Graph g;
    auto enc = nn::bind(g, p, false);
    auto zv = g.constant(z);
    auto r = nn::initial_assignments(enc, zv, nn::task_representation(enc, zv, nullptr), nullptr);
    for (std::size_t n = 0; n < 7; ++n) {
      double s = 0;
      for (std::size_t k = 0; k < 3; ++k) s += r.r.value()(n, k);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    // Shifting every output logit by the same constant leaves the rows alone.
    auto q = p;
    for (auto& v : q.fR.layers.back().bias.values()) v += 3.7;
    ad::Graph h;
    auto enc2 = nn::bind(h, q, false);
    auto zv2 = h.constant(z);
    auto r2 = nn::initial_assignments(enc2, zv2, nn::task_representation(enc2, zv2, nullptr), nullptr);
    for (std::size_t i = 0; i < r.r.value().size(); ++i)
      CHECK(std::abs(r.r.value()[i] - r2.r.value()[i]) < 1e-12);
  }
  zero(p.fR);
  ad::Graph g;
  auto enc = nn::bind(g, p, false);
  auto zv = g.constant(z);
  auto r = nn::initial_assignments(enc, zv, nn::task_representation(enc, zv, nullptr), nullptr);
  for (double v : r.r.value().values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("dropout only with a context") {
  auto c = small_config();
  auto p = nn::init_params(c, 6);
  Tensor x = randn(5, 5, 9);
  ad::Graph g;
  auto enc = nn::bind(g, p, true);
  std::mt19937_64 rng(1);
  nn::DropoutContext ctx{&rng, 0.5, {}};
  auto plain = nn::encode_instances(enc, g.constant(x), c, nullptr).value();
  auto dropped = nn::encode_instances(enc, g.constant(x), c, &ctx).value();
  CHECK_FALSE(plain == dropped);
}

TEST_CASE("checkpoint round trip") {
  auto c = small_config();
  auto p = nn::init_params(c, 7);
  const auto path = std::filesystem::temp_directory_path() / "metaclust_ckpt_test.json";
  nn::save_checkpoint(path, c, p);
  auto [c2, p2] = nn::load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(nn::to_json(c2) == nn::to_json(c));
  auto a = p.named();
  auto b = p2.named();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].second == *b[i].second);

  json doc = nn::checkpoint_to_json(c, p);
  doc["params"].erase("fR.2.b");
  CHECK_THROWS(nn::checkpoint_from_json(doc));
}

TEST_CASE("config validation") {
  nn::EncoderConfig c = small_config();
  CHECK_THROWS_AS(nn::update_from_json(c, json{{"hiden", 3}}), ConfigError);
  c.input_dim = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

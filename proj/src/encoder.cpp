#include "metaclust/encoder.hpp"

#include <cmath>

#include "metaclust/error.hpp"

namespace metaclust::nn {
namespace {

constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointFormat = "metaclust.encoder";

MLPParams make_mlp(std::size_t in, std::size_t hidden, std::size_t out, std::size_t depth,
                   std::mt19937_64& rng) {
  MLPParams p;
  std::size_t fan_in = in;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t fan_out = l + 1 == depth ? out : hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer{Tensor(fan_out, fan_in), Tensor(1, fan_out)};
    for (double& w : layer.weight.values()) w = dist(rng);
    p.layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return p;
}

BoundMLP bind_mlp(ad::Graph& g, const MLPParams& p, bool trainable) {
  BoundMLP b;
  for (const Layer& l : p.layers) {
    b.weight.push_back(trainable ? g.parameter(l.weight) : g.constant(l.weight));
    b.bias.push_back(trainable ? g.parameter(l.bias) : g.constant(l.bias));
  }
  return b;
}

ad::Var dropout_mask(ad::Var h, const DropoutContext& ctx) {
  std::bernoulli_distribution keep(1.0 - ctx.rate);
  const double scale = 1.0 / (1.0 - ctx.rate);
  Tensor mask(h.rows(), h.cols());
  for (double& m : mask.values()) m = keep(*ctx.rng) ? scale : 0.0;
  return h * h.graph()->constant(std::move(mask));
}

const DropoutContext* for_network(const DropoutContext* ctx, bool enabled) {
  return ctx && enabled && ctx->rate > 0.0 ? ctx : nullptr;
}

template <typename Params, typename Fn>
void for_each_named(Params& p, Fn fn) {
  auto visit = [&](const char* name, auto& mlp) {
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
      const std::string prefix = std::string(name) + "." + std::to_string(l) + ".";
      fn(prefix + "W", mlp.layers[l].weight);
      fn(prefix + "b", mlp.layers[l].bias);
    }
  };
  visit("fZ", p.fZ);
  visit("fU", p.fU);
  visit("gU", p.gU);
  visit("fR", p.fR);
}

std::size_t get_size(const json& j, const char* key) {
  if (!j.is_number_integer() && !j.is_number_unsigned())
    throw ConfigError(std::string("encoder.") + key + ": expected a non-negative integer");
  const auto v = j.get<long long>();
  if (v < 0) throw ConfigError(std::string("encoder.") + key + ": must be non-negative");
  return static_cast<std::size_t>(v);
}

}  // namespace

void EncoderConfig::validate() const {
  if (input_dim < 1) throw ConfigError("encoder.input_dim must be >= 1");
  if (!identity_encoder && repr_dim < 1) throw ConfigError("encoder.S must be >= 1");
  if (depth < 1) throw ConfigError("encoder.depth must be >= 1");
  if (hidden < 1 || pool_dim < 1 || task_dim < 1)
    throw ConfigError("encoder widths must be >= 1");
  if (clusters < 1) throw ConfigError("encoder.K must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("encoder.dropout must lie in [0, 1)");
}

json to_json(const EncoderConfig& c) {
  return json{{"input_dim", c.input_dim},
              {"S", c.repr_dim},
              {"hidden", c.hidden},
              {"depth", c.depth},
              {"pool_dim", c.pool_dim},
              {"task_dim", c.task_dim},
              {"K", c.clusters},
              {"dropout", c.dropout_rate},
              {"dropout_networks",
               {{"fZ", c.dropout_on.fZ},
                {"fU", c.dropout_on.fU},
                {"gU", c.dropout_on.gU},
                {"fR", c.dropout_on.fR}}},
              {"identity_encoder", c.identity_encoder}};
}

void update_from_json(EncoderConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("encoder: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    if (k == "input_dim") c.input_dim = get_size(v, "input_dim");
    else if (k == "S") c.repr_dim = get_size(v, "S");
    else if (k == "hidden") c.hidden = get_size(v, "hidden");
    else if (k == "depth") c.depth = get_size(v, "depth");
    else if (k == "pool_dim") c.pool_dim = get_size(v, "pool_dim");
    else if (k == "task_dim") c.task_dim = get_size(v, "task_dim");
    else if (k == "K") c.clusters = get_size(v, "K");
    else if (k == "dropout") {
      if (!v.is_number()) throw ConfigError("encoder.dropout: expected a number");
      c.dropout_rate = v.get<double>();
    } else if (k == "identity_encoder") {
      if (!v.is_boolean()) throw ConfigError("encoder.identity_encoder: expected a boolean");
      c.identity_encoder = v.get<bool>();
    } else if (k == "dropout_networks") {
      if (!v.is_object()) throw ConfigError("encoder.dropout_networks: expected an object");
      for (auto d = v.begin(); d != v.end(); ++d) {
        if (!d.value().is_boolean())
          throw ConfigError("encoder.dropout_networks." + d.key() + ": expected a boolean");
        const bool on = d.value().get<bool>();
        if (d.key() == "fZ") c.dropout_on.fZ = on;
        else if (d.key() == "fU") c.dropout_on.fU = on;
        else if (d.key() == "gU") c.dropout_on.gU = on;
        else if (d.key() == "fR") c.dropout_on.fR = on;
        else throw ConfigError("encoder.dropout_networks: unknown key \"" + d.key() + "\"");
      }
    } else {
      throw ConfigError("encoder: unknown key \"" + k + "\"");
    }
  }
}

std::vector<std::pair<std::string, Tensor*>> EncoderParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for_each_named(*this, [&](std::string name, Tensor& t) { out.emplace_back(std::move(name), &t); });
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> EncoderParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for_each_named(*this,
                 [&](std::string name, const Tensor& t) { out.emplace_back(std::move(name), &t); });
  return out;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t->size();
  return n;
}

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t s = config.effective_repr_dim();
  EncoderParams p;
  if (!config.identity_encoder)
    p.fZ = make_mlp(config.input_dim, config.hidden, s, config.depth, rng);
  p.fU = make_mlp(s, config.hidden, config.pool_dim, config.depth, rng);
  p.gU = make_mlp(config.pool_dim, config.hidden, config.task_dim, config.depth, rng);
  p.fR = make_mlp(s + config.task_dim, config.hidden, config.clusters, config.depth, rng);
  return p;
}

std::vector<ad::Var> BoundEncoder::all() const {
  std::vector<ad::Var> out;
  for (const BoundMLP* m : {&fZ, &fU, &gU, &fR})
    for (std::size_t l = 0; l < m->weight.size(); ++l) {
      out.push_back(m->weight[l]);
      out.push_back(m->bias[l]);
    }
  return out;
}

BoundEncoder bind(ad::Graph& graph, const EncoderParams& params, bool trainable) {
  return {bind_mlp(graph, params.fZ, trainable), bind_mlp(graph, params.fU, trainable),
          bind_mlp(graph, params.gU, trainable), bind_mlp(graph, params.fR, trainable)};
}

ad::Var mlp_forward(const BoundMLP& net, ad::Var x, const DropoutContext* dropout) {
  ad::Var h = x;
  const std::size_t depth = net.weight.size();
  for (std::size_t l = 0; l < depth; ++l) {
    if (h.cols() != net.weight[l].cols())
      throw ShapeError("mlp: layer " + std::to_string(l) + " expects " +
                       std::to_string(net.weight[l].cols()) + " inputs, got " +
                       std::to_string(h.cols()));
    h = ad::matmul(h, net.weight[l], false, true) + net.bias[l];
    if (l + 1 < depth) {
      h = ad::relu(h);
      if (dropout) h = dropout_mask(h, *dropout);
    }
  }
  return h;
}

ad::Var encode_instances(const BoundEncoder& enc, ad::Var x, const EncoderConfig& config,
                         const DropoutContext* dropout) {
  if (x.cols() != config.input_dim)
    throw ShapeError("encode_instances: expected " + std::to_string(config.input_dim) +
                     " features, got " + std::to_string(x.cols()));
  if (x.rows() < 1) throw ContractError("encode_instances: no instances");
  if (config.identity_encoder) return x;
  return mlp_forward(enc.fZ, x, for_network(dropout, dropout ? dropout->on.fZ : false));
}

ad::Var task_representation(const BoundEncoder& enc, ad::Var z, const DropoutContext* dropout) {
  ad::Var pooled =
      ad::mean(mlp_forward(enc.fU, z, for_network(dropout, dropout ? dropout->on.fU : false)),
               ad::Axis::Rows);
  return mlp_forward(enc.gU, pooled, for_network(dropout, dropout ? dropout->on.gU : false));
}

InitialAssignments initial_assignments(const BoundEncoder& enc, ad::Var z, ad::Var u,
                                       const DropoutContext* dropout) {
  ad::Graph& g = *z.graph();
  ad::Var ones = g.constant(Tensor(z.rows(), 1, 1.0));
  ad::Var input = ad::concat_cols(z, ad::matmul(ones, u));
  ad::Var logits =
      mlp_forward(enc.fR, input, for_network(dropout, dropout ? dropout->on.fR : false));
  ad::Var log_r = ad::log_softmax_rows(logits);
  return {log_r, ad::exp(log_r)};
}

json checkpoint_to_json(const EncoderConfig& config, const EncoderParams& params) {
  json p = json::object();
  for (const auto& [name, t] : params.named())
    p[name] = json(std::vector<double>(t->values().begin(), t->values().end()));
  return json{{"format", kCheckpointFormat},
              {"version", kCheckpointVersion},
              {"config", to_json(config)},
              {"params", std::move(p)}};
}

std::pair<EncoderConfig, EncoderParams> checkpoint_from_json(const json& doc) {
  if (!doc.is_object() || doc.value("format", "") != kCheckpointFormat)
    throw ParseError("not a metaclust encoder checkpoint", 0);
  if (doc.value("version", 0) != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version", 0);
  EncoderConfig config;
  update_from_json(config, doc.at("config"));
  EncoderParams params = init_params(config, 0);
  const json& p = doc.at("params");
  for (auto& [name, t] : params.named()) {
    if (!p.contains(name)) throw ParseError("checkpoint lacks tensor " + name, 0);
    const auto values = p.at(name).get<std::vector<double>>();
    if (values.size() != t->size())
      throw ParseError("checkpoint tensor " + name + " has " + std::to_string(values.size()) +
                           " values, expected " + std::to_string(t->size()),
                       0);
    std::copy(values.begin(), values.end(), t->values().begin());
  }
  return {config, std::move(params)};
}

void save_checkpoint(const std::filesystem::path& path, const EncoderConfig& config,
                     const EncoderParams& params) {
  write_text_file(path, dump_json(checkpoint_to_json(config, params)));
}

std::pair<EncoderConfig, EncoderParams> load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_json_file(path));
}

}  // namespace metaclust::nn

#include "metaclust/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>

#include "metaclust/error.hpp"

namespace metaclust::train {
namespace {

constexpr std::uint64_t kValidationSalt = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kInitSalt = 0xC2B2AE3D27D4EB4FULL;

std::vector<const Tensor*> const_ptrs(const nn::EncoderParams& p) {
  std::vector<const Tensor*> out;
  for (const auto& [name, t] : p.named()) out.push_back(t);
  return out;
}

std::vector<Tensor*> mutable_ptrs(nn::EncoderParams& p) {
  std::vector<Tensor*> out;
  for (auto& [name, t] : p.named()) out.push_back(t);
  return out;
}

// Rebuilds the per-network structure from flat leaves in named() order.
nn::BoundEncoder from_flat(std::span<const ad::Var> vars, const nn::EncoderConfig& enc) {
  nn::BoundEncoder out;
  std::size_t i = 0;
  auto take = [&](nn::BoundMLP& m, std::size_t layers) {
    for (std::size_t l = 0; l < layers; ++l) {
      if (i + 2 > vars.size()) throw ShapeError("episode_loss_var: too few parameter leaves");
      m.weight.push_back(vars[i++]);
      m.bias.push_back(vars[i++]);
    }
  };
  take(out.fZ, enc.identity_encoder ? 0 : enc.depth);
  take(out.fU, enc.depth);
  take(out.gU, enc.depth);
  take(out.fR, enc.depth);
  if (i != vars.size()) throw ShapeError("episode_loss_var: too many parameter leaves");
  return out;
}

struct LossVar {
  ad::Var loss;
  bool degenerate = false;
};

LossVar build_loss(const nn::BoundEncoder& enc, ad::Graph& g, const TaskBatch& batch,
                   const ModelConfig& config, bool training) {
  if (batch.y.size() != batch.x.rows())
    throw ContractError("episode_loss: batch needs one label per instance");
  if (batch.x.rows() < 2) throw ContractError("episode_loss: need at least two instances");
  const PipelineOutput out = run_pipeline(enc, g.constant(batch.x), config, batch.seed, training);
  const auto counts = metrics::soft_pair_counts(batch.y, out.r, config.distance());
  const auto cari = metrics::continuous_ari(counts);
  const bool one_category =
      std::all_of(batch.y.begin(), batch.y.end(), [&](int v) { return v == batch.y.front(); });
  if (cari.degenerate || one_category) return {g.constant(0.0), true};
  return {-cari.value, false};
}

json tensor_json(const Tensor& t) {
  return {{"rows", t.rows()}, {"cols", t.cols()},
          {"values", std::vector<double>(t.values().begin(), t.values().end())}};
}

Tensor tensor_from(const json& j) {
  const auto r = j.at("rows").get<std::size_t>(), c = j.at("cols").get<std::size_t>();
  auto v = j.at("values").get<std::vector<double>>();
  if (v.size() != r * c) throw ParseError("tensor: value count does not match shape", 0);
  Tensor t(r, c);
  std::copy(v.begin(), v.end(), t.data());
  return t;
}

json mlp_json(const nn::MLPParams& m) {
  json layers = json::array();
  for (const auto& l : m.layers) layers.push_back({{"W", tensor_json(l.weight)}, {"b", tensor_json(l.bias)}});
  return layers;
}

nn::MLPParams mlp_from(const json& j) {
  nn::MLPParams m;
  for (const auto& l : j) m.layers.push_back({tensor_from(l.at("W")), tensor_from(l.at("b"))});
  return m;
}

json params_json(const nn::EncoderParams& p) {
  return {{"fZ", mlp_json(p.fZ)}, {"fU", mlp_json(p.fU)}, {"gU", mlp_json(p.gU)}, {"fR", mlp_json(p.fR)}};
}

nn::EncoderParams params_from(const json& j) {
  return {mlp_from(j.at("fZ")), mlp_from(j.at("fU")), mlp_from(j.at("gU")), mlp_from(j.at("fR"))};
}

json tensors_json(const std::vector<Tensor>& ts) {
  json out = json::array();
  for (const auto& t : ts) out.push_back(tensor_json(t));
  return out;
}

std::vector<Tensor> tensors_from(const json& j) {
  std::vector<Tensor> out;
  for (const auto& t : j) out.push_back(tensor_from(t));
  return out;
}

// Support/query layout of one prototypical episode.
struct ProtoEpisode {
  Tensor support_avg;  // K x N, rows average the support instances of a class
  Tensor query_pick;   // Q x N, one-hot rows
  Tensor query_target; // Q x K, one-hot rows
};

std::optional<ProtoEpisode> proto_layout(const TaskBatch& b) {
  const std::size_t n = b.x.rows();
  std::vector<std::vector<std::size_t>> rows(b.k());
  for (std::size_t i = 0; i < n; ++i) rows[static_cast<std::size_t>(b.y[i])].push_back(i);
  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < rows.size(); ++c)
    if (rows[c].size() >= 2) kept.push_back(c);
  if (kept.size() < 2) return std::nullopt;

  std::size_t queries = 0;
  for (std::size_t c : kept) queries += rows[c].size() - rows[c].size() / 2;
  ProtoEpisode e{Tensor(kept.size(), n), Tensor(queries, n), Tensor(queries, kept.size())};
  std::size_t q = 0;
  for (std::size_t j = 0; j < kept.size(); ++j) {
    const auto& r = rows[kept[j]];
    const std::size_t ns = r.size() / 2;
    for (std::size_t s = 0; s < ns; ++s) e.support_avg(j, r[s]) = 1.0 / static_cast<double>(ns);
    for (std::size_t s = ns; s < r.size(); ++s, ++q) {
      e.query_pick(q, r[s]) = 1.0;
      e.query_target(q, j) = 1.0;
    }
  }
  return e;
}

nn::EncoderParams only_fZ(const nn::MLPParams& fZ) {
  nn::EncoderParams p;
  p.fZ = fZ;
  return p;
}

}  // namespace

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::Full: return "full";
    case Mode::NoFRInit: return "no_fR_init";
    case Mode::EMInference: return "em_inference";
    case Mode::ProbDistance: return "prob_distance";
    case Mode::IdentityEncoder: return "identity_encoder";
  }
  return "?";
}

Mode parse_mode(const std::string& name) {
  for (Mode m : {Mode::Full, Mode::NoFRInit, Mode::EMInference, Mode::ProbDistance,
                 Mode::IdentityEncoder})
    if (mode_name(m) == name) return m;
  throw ConfigError("unknown mode '" + name + "'");
}

nn::EncoderConfig ModelConfig::effective_encoder() const {
  nn::EncoderConfig e = encoder;
  e.clusters = vb.clusters;
  if (mode == Mode::IdentityEncoder) e.identity_encoder = true;
  return e;
}

void ModelConfig::validate() const {
  effective_encoder().validate();
  vb.validate();
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("train.learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be > 0");
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
  if (validation_interval < 1) throw ConfigError("train.validation_interval must be >= 1");
  if (validation_tasks < 1) throw ConfigError("train.validation_tasks must be >= 1");
  if (n_max_per_category < 1) throw ConfigError("train.n_max_per_category must be >= 1");
  if (eval_k_min < 1 || eval_k_max < eval_k_min)
    throw ConfigError("train.eval_k_min/eval_k_max must satisfy 1 <= min <= max");
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm must be >= 0");
  if (pretrain_ways < 2) throw ConfigError("train.pretrain_ways must be >= 2");
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"validation_interval", c.validation_interval},
          {"validation_tasks", c.validation_tasks},
          {"n_max_per_category", c.n_max_per_category},
          {"eval_k_min", c.eval_k_min},
          {"eval_k_max", c.eval_k_max},
          {"clip_norm", c.clip_norm},
          {"pretrain_episodes", c.pretrain_episodes},
          {"pretrain_ways", c.pretrain_ways},
          {"log_timing", c.log_timing},
          {"seed", c.seed}};
}

void update_from_json(TrainConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("train: expected an object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "learning_rate") c.learning_rate = v.get<double>();
      else if (k == "beta1") c.beta1 = v.get<double>();
      else if (k == "beta2") c.beta2 = v.get<double>();
      else if (k == "epsilon") c.epsilon = v.get<double>();
      else if (k == "max_epochs") c.max_epochs = json_count(v, "train.max_epochs");
      else if (k == "patience") c.patience = json_count(v, "train.patience");
      else if (k == "validation_interval") c.validation_interval = json_count(v, "train.validation_interval");
      else if (k == "validation_tasks") c.validation_tasks = json_count(v, "train.validation_tasks");
      else if (k == "n_max_per_category") c.n_max_per_category = json_count(v, "train.n_max_per_category");
      else if (k == "eval_k_min") c.eval_k_min = json_count(v, "train.eval_k_min");
      else if (k == "eval_k_max") c.eval_k_max = json_count(v, "train.eval_k_max");
      else if (k == "clip_norm") c.clip_norm = v.get<double>();
      else if (k == "pretrain_episodes") c.pretrain_episodes = json_count(v, "train.pretrain_episodes");
      else if (k == "pretrain_ways") c.pretrain_ways = json_count(v, "train.pretrain_ways");
      else if (k == "log_timing") c.log_timing = v.get<bool>();
      else if (k == "seed") c.seed = json_u64(v, "train.seed");
      else throw ConfigError("train: unknown key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  c.validate();
}

TaskBatch sample_episode(std::span<const data::LabeledDataset> tasks, const EpisodeSpec& spec,
                         Rng& rng) {
  if (tasks.empty()) throw ContractError("sample_episode: no tasks");
  TaskBatch b;
  b.seed = rng();
  b.task_id = std::uniform_int_distribution<std::size_t>(0, tasks.size() - 1)(rng);
  const auto& d = tasks[b.task_id];
  if (d.categories() == 0 || d.size() == 0 || !d.labeled())
    throw ContractError("sample_episode: task " + std::to_string(b.task_id) + " is empty");

  const std::size_t k_max = std::max<std::size_t>(1, std::min(spec.k_max, d.categories()));
  const std::size_t k_min = std::clamp<std::size_t>(spec.k_min, 1, k_max);
  const std::size_t k = std::uniform_int_distribution<std::size_t>(k_min, k_max)(rng);

  std::vector<int> order(d.categories());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, order.size() - 1)(rng);
    std::swap(order[i], order[j]);
  }
  b.categories.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));

  const auto index = d.category_index();
  std::vector<std::size_t> picked;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> rows = index[static_cast<std::size_t>(b.categories[c])];
    if (rows.size() > spec.n_max_per_category) {
      for (std::size_t i = 0; i < spec.n_max_per_category; ++i) {
        const std::size_t j = std::uniform_int_distribution<std::size_t>(i, rows.size() - 1)(rng);
        std::swap(rows[i], rows[j]);
      }
      rows.resize(spec.n_max_per_category);
      std::sort(rows.begin(), rows.end());
    }
    for (std::size_t r : rows) {
      picked.push_back(r);
      b.y.push_back(static_cast<int>(c));
    }
  }
  b.x = Tensor(picked.size(), d.dim());
  for (std::size_t i = 0; i < picked.size(); ++i)
    for (std::size_t j = 0; j < d.dim(); ++j) b.x(i, j) = d.x(picked[i], j);
  return b;
}

PipelineOutput run_pipeline(const nn::BoundEncoder& enc, ad::Var x, const ModelConfig& config,
                            std::uint64_t episode_seed, bool training, bool track_elbo) {
  const nn::EncoderConfig ec = config.effective_encoder();
  Rng drop_rng(episode_seed);
  nn::DropoutContext ctx{&drop_rng, ec.dropout_rate, ec.dropout_on};
  const nn::DropoutContext* dp = training && ec.dropout_rate > 0.0 ? &ctx : nullptr;

  PipelineOutput out;
  out.z = nn::encode_instances(enc, x, ec, dp);
  out.u = nn::task_representation(enc, out.z, dp);

  nn::InitialAssignments init;
  if (config.mode == Mode::NoFRInit) {
    Rng init_rng(episode_seed ^ kInitSalt);
    std::normal_distribution<double> normal;
    Tensor logits(x.rows(), config.vb.clusters);
    for (auto& v : logits.values()) v = normal(init_rng);
    init.log_r = ad::log_softmax_rows(x.graph()->constant(std::move(logits)));
    init.r = ad::exp(init.log_r);
  } else {
    init = nn::initial_assignments(enc, out.z, out.u, dp);
  }

  vb::VBConfig vc = config.vb;
  if (!training) vc.assignment_floor = 0.0;
  if (config.mode == Mode::EMInference) {
    auto em = vb::run_em(out.z, init.r, vc.steps);
    out.r = em.r;
    out.log_r = em.log_r;
  } else {
    auto res = vb::run_vb(out.z, init.r, vc, track_elbo, init.log_r);
    out.r = res.state.r;
    out.log_r = res.state.log_r;
    out.elbo_trace = std::move(res.elbo_trace);
  }
  return out;
}

ad::Var episode_loss_var(ad::Graph& g, std::span<const ad::Var> params, const TaskBatch& batch,
                         const ModelConfig& config, bool training) {
  return build_loss(from_flat(params, config.effective_encoder()), g, batch, config, training).loss;
}

EpisodeResult episode_loss(const nn::EncoderParams& params, const TaskBatch& batch,
                           const ModelConfig& config, bool training) {
  ad::Graph g;
  const nn::BoundEncoder enc = nn::bind(g, params, true);
  const LossVar lv = build_loss(enc, g, batch, config, training);
  EpisodeResult r;
  r.loss = lv.loss.value().item();
  r.degenerate = lv.degenerate;
  const auto vars = enc.all();
  const auto grads = g.backward(lv.loss, vars);
  r.grads.reserve(vars.size());
  for (const auto& v : vars) r.grads.push_back(grads[v]);
  return r;
}

AdamState adam_init(std::span<const Tensor* const> params) {
  AdamState s;
  for (const Tensor* p : params) {
    s.m.emplace_back(p->rows(), p->cols());
    s.v.emplace_back(p->rows(), p->cols());
  }
  return s;
}

bool adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const TrainConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: parameter, gradient and moment counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->size() != grads[i].size() || state.m[i].size() != grads[i].size())
      throw ShapeError("adam_step: shape mismatch at tensor " + std::to_string(i));
    if (!grads[i].all_finite()) return false;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->data();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    const double* g = grads[i].data();
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      p[j] -= config.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + config.epsilon);
    }
  }
  return true;
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
    const double scale = max_norm / norm;
    for (auto& g : grads)
      for (double& v : g.values()) v *= scale;
  }
  return norm;
}

json LogRecord::to_json() const {
  json j = {{"epoch", epoch},
            {"loss", loss ? json(*loss) : json(nullptr)},
            {"validation_ari", validation_ari ? json(*validation_ari) : json(nullptr)},
            {"degenerate", degenerate},
            {"skipped", skipped}};
  if (wall_ms) j["wall_ms"] = *wall_ms;
  return j;
}

json state_to_json(const TrainState& s) {
  json log = json::array();
  for (const auto& r : s.log) log.push_back(r.to_json());
  return {{"format", "metaclust.train_state"},
          {"version", 1},
          {"params", params_json(s.params)},
          {"best", params_json(s.best)},
          {"adam", {{"step", s.adam.step}, {"m", tensors_json(s.adam.m)}, {"v", tensors_json(s.adam.v)}}},
          {"epoch", s.epoch},
          {"best_validation", s.best_validation},
          {"stale_rounds", s.stale_rounds},
          {"degenerate", s.degenerate},
          {"skipped", s.skipped},
          {"stopped", s.stopped},
          {"rng", s.rng},
          {"log", log}};
}

TrainState state_from_json(const json& doc) {
  try {
    if (doc.at("format") != "metaclust.train_state" || doc.at("version") != 1)
      throw ParseError("not a version-1 training state", 0);
    TrainState s;
    s.params = params_from(doc.at("params"));
    s.best = params_from(doc.at("best"));
    s.adam.step = doc.at("adam").at("step").get<std::uint64_t>();
    s.adam.m = tensors_from(doc.at("adam").at("m"));
    s.adam.v = tensors_from(doc.at("adam").at("v"));
    s.epoch = doc.at("epoch").get<std::size_t>();
    s.best_validation = doc.at("best_validation").get<double>();
    s.stale_rounds = doc.at("stale_rounds").get<std::size_t>();
    s.degenerate = doc.at("degenerate").get<std::size_t>();
    s.skipped = doc.at("skipped").get<std::size_t>();
    s.stopped = doc.at("stopped").get<bool>();
    s.rng = doc.at("rng").get<std::string>();
    for (const auto& r : doc.at("log")) {
      LogRecord rec;
      rec.epoch = r.at("epoch").get<std::size_t>();
      if (!r.at("loss").is_null()) rec.loss = r.at("loss").get<double>();
      if (!r.at("validation_ari").is_null()) rec.validation_ari = r.at("validation_ari").get<double>();
      rec.degenerate = r.at("degenerate").get<std::size_t>();
      rec.skipped = r.at("skipped").get<std::size_t>();
      if (r.contains("wall_ms")) rec.wall_ms = r.at("wall_ms").get<double>();
      s.log.push_back(rec);
    }
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("training state: ") + e.what(), 0);
  }
}

TrainState train(const nn::EncoderParams& init, std::span<const data::LabeledDataset> train_tasks,
                 std::span<const data::LabeledDataset> validation_tasks, const ModelConfig& model,
                 const TrainConfig& config, std::optional<TrainState> resume) {
  model.validate();
  config.validate();
  if (validation_tasks.empty()) throw ContractError("train: no validation tasks");

  const EvalConfig val_cfg{config.validation_tasks,
                           {config.eval_k_min, config.eval_k_max, config.n_max_per_category},
                           config.seed ^ kValidationSalt,
                           std::nullopt};
  auto validate = [&](const nn::EncoderParams& p) {
    return evaluate(p, validation_tasks, model, val_cfg).mean;
  };
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  };

  TrainState st;
  Rng rng(config.seed);
  if (resume) {
    st = std::move(*resume);
    std::istringstream in(st.rng);
    in >> rng;
    if (!in) throw ParseError("training state: unreadable rng state", 0);
    if (st.adam.m.size() != st.params.named().size())
      throw ModelMismatchError("training state: optimizer does not match parameters");
  } else {
    st.params = init;
    st.best = init;
    st.adam = adam_init(const_ptrs(st.params));
    st.best_validation = validate(st.params);
    LogRecord rec;
    rec.validation_ari = st.best_validation;
    if (config.log_timing) rec.wall_ms = elapsed();
    st.log.push_back(rec);
  }

  const EpisodeSpec spec{1, model.vb.clusters, config.n_max_per_category};
  while (!st.stopped && st.epoch < config.max_epochs) {
    ++st.epoch;
    const TaskBatch batch = sample_episode(train_tasks, spec, rng);
    LogRecord rec;
    rec.epoch = st.epoch;
    try {
      EpisodeResult res = episode_loss(st.params, batch, model, true);
      rec.loss = res.loss;
      if (res.degenerate) ++st.degenerate;
      clip_global_norm(res.grads, config.clip_norm);
      if (!adam_step(mutable_ptrs(st.params), res.grads, st.adam, config)) ++st.skipped;
    } catch (const NumericalError&) {
      ++st.skipped;
    } catch (const DomainError&) {
      ++st.skipped;
    }
    if (st.epoch % config.validation_interval == 0) {
      const double v = validate(st.params);
      rec.validation_ari = v;
      if (v > st.best_validation) {
        st.best_validation = v;
        st.best = st.params;
        st.stale_rounds = 0;
      } else if (++st.stale_rounds >= config.patience) {
        st.stopped = true;
      }
    }
    rec.degenerate = st.degenerate;
    rec.skipped = st.skipped;
    if (config.log_timing) rec.wall_ms = elapsed();
    st.log.push_back(rec);
  }
  std::ostringstream out;
  out << rng;
  st.rng = out.str();
  return st;
}

EvalResult evaluate(const nn::EncoderParams& params, std::span<const data::LabeledDataset> tasks,
                    const ModelConfig& model, const EvalConfig& config) {
  model.validate();
  Rng rng(config.seed);
  std::vector<TaskBatch> batches;
  batches.reserve(config.n_tasks);
  for (std::size_t i = 0; i < config.n_tasks; ++i)
    batches.push_back(sample_episode(tasks, config.episodes, rng));

  ModelConfig m = model;
  if (config.vb_steps) m.vb.steps = *config.vb_steps;

  EvalResult out;
  out.tasks.resize(batches.size());
  std::vector<std::exception_ptr> errors(batches.size());
  const auto count = static_cast<std::ptrdiff_t>(batches.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      const TaskBatch& b = batches[idx];
      ad::Graph g;
      const auto enc = nn::bind(g, params, false);
      const auto res = run_pipeline(enc, g.constant(b.x), m, b.seed, false);
      TaskScore s;
      s.k = b.k();
      s.n = b.x.rows();
      const auto hard = vb::hard_assignments(res.r.value());
      s.ari = s.n >= 2 ? metrics::ari(b.y, hard) : 0.0;
      s.populated = vb::populated_clusters(res.r.value());
      out.tasks[idx] = s;
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  const double n = static_cast<double>(out.tasks.size());
  if (out.tasks.empty()) return out;
  double sum = 0.0;
  for (const auto& t : out.tasks) sum += t.ari;
  out.mean = sum / n;
  if (out.tasks.size() > 1) {
    double ss = 0.0;
    for (const auto& t : out.tasks) ss += (t.ari - out.mean) * (t.ari - out.mean);
    out.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return out;
}

json to_json(const EvalResult& r) {
  json tasks = json::array();
  std::vector<double> aris;
  for (const auto& t : r.tasks) {
    tasks.push_back({{"k", t.k}, {"n", t.n}, {"ari", t.ari}, {"populated_clusters", t.populated}});
    aris.push_back(t.ari);
  }
  return {{"n_tasks", r.tasks.size()},
          {"mean_ari", r.mean},
          {"standard_error", r.standard_error ? json(*r.standard_error) : json(nullptr)},
          {"ari", aris},
          {"tasks", tasks}};
}

nn::MLPParams proto_pretrain(const nn::MLPParams& fZ, std::span<const data::LabeledDataset> tasks,
                             const nn::EncoderConfig& encoder, const ProtoConfig& config) {
  if (encoder.identity_encoder || fZ.layers.empty())
    throw ContractError("proto_pretrain: no trainable encoder");
  config.optimizer.validate();
  nn::EncoderParams p = only_fZ(fZ);
  AdamState adam = adam_init(const_ptrs(p));
  Rng rng(config.seed);
  const EpisodeSpec spec{config.ways, config.ways, config.n_max_per_category};
  for (std::size_t e = 0; e < config.episodes; ++e) {
    const TaskBatch b = sample_episode(tasks, spec, rng);
    const auto layout = proto_layout(b);
    if (!layout) continue;

    ad::Graph g;
    const auto enc = nn::bind(g, p, true);
    Rng drop_rng(b.seed);
    nn::DropoutContext ctx{&drop_rng, encoder.dropout_rate, encoder.dropout_on};
    const nn::DropoutContext* dp = encoder.dropout_rate > 0.0 ? &ctx : nullptr;
    const ad::Var z = nn::mlp_forward(enc.fZ, g.constant(b.x), dp);
    const ad::Var centroids = ad::matmul(g.constant(layout->support_avg), z);
    const ad::Var zq = ad::matmul(g.constant(layout->query_pick), z);
    const ad::Var logp = ad::log_softmax_rows(-ad::sqdist(zq, centroids));
    const double nq = static_cast<double>(layout->query_pick.rows());
    const ad::Var loss = -ad::sum(logp * g.constant(layout->query_target)) / nq;

    const auto vars = enc.all();
    const auto grads = g.backward(loss, vars);
    std::vector<Tensor> gs;
    for (const auto& v : vars) gs.push_back(grads[v]);
    clip_global_norm(gs, config.optimizer.clip_norm);
    adam_step(mutable_ptrs(p), gs, adam, config.optimizer);
  }
  return p.fZ;
}

double proto_accuracy(const nn::MLPParams& fZ, std::span<const data::LabeledDataset> tasks,
                      std::size_t episodes, std::size_t ways, std::uint64_t seed) {
  const nn::EncoderParams p = only_fZ(fZ);
  Rng rng(seed);
  const EpisodeSpec spec{ways, ways, 20};
  double correct = 0.0, total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    const TaskBatch b = sample_episode(tasks, spec, rng);
    const auto layout = proto_layout(b);
    if (!layout) continue;
    ad::Graph g;
    const auto enc = nn::bind(g, p, false);
    const ad::Var z = nn::mlp_forward(enc.fZ, g.constant(b.x), nullptr);
    const ad::Var centroids = ad::matmul(g.constant(layout->support_avg), z);
    const ad::Var zq = ad::matmul(g.constant(layout->query_pick), z);
    const Tensor& d = ad::sqdist(zq, centroids).value();
    for (std::size_t q = 0; q < d.rows(); ++q) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < d.cols(); ++k)
        if (d(q, k) < d(q, best)) best = k;
      correct += layout->query_target(q, best);
      total += 1.0;
    }
  }
  return total > 0.0 ? correct / total : 0.0;
}

}  // namespace metaclust::train

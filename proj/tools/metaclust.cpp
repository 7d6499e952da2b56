// metaclust command-line entry point.
//
//   metaclust <train|pretrain|cluster|evaluate|ablate|gradcheck|synth>
//             --config <path> [--seed N] [--out <path>]
//
// Exit codes: 0 success, 1 check failure, 2 config, 3 data,
// 4 model/data mismatch, 5 generation infeasible.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metaclust/autodiff.hpp"
#include "metaclust/dataio.hpp"
#include "metaclust/error.hpp"
#include "metaclust/json_io.hpp"
#include "metaclust/selfcheck.hpp"
#include "metaclust/trainer.hpp"

namespace fs = std::filesystem;
using namespace metaclust;

namespace {

enum Exit { kOk = 0, kCheckFailed = 1, kConfig = 2, kData = 3, kMismatch = 4, kInfeasible = 5 };

// Raised when a data file the config names cannot be used.
struct DataError : Error {
  using Error::Error;
};

struct DataPaths {
  std::optional<fs::path> train, validation, test, input;
  bool standardize = true;
};

struct EvalOptions {
  std::size_t n_tasks = 100;
  std::size_t k_min = 2;
  std::size_t k_max = 10;
  std::optional<std::size_t> vb_steps;
};

struct RunConfig {
  std::uint64_t seed = 0;
  train::ModelConfig model;
  train::TrainConfig train;
  EvalOptions eval;
  DataPaths data;
  std::optional<data::SyntheticSpec> synthetic;
  data::SplitSpec split;
  std::optional<fs::path> model_path;
  std::optional<fs::path> resume;
  std::vector<train::Mode> modes{train::Mode::Full};
  selfcheck::SuiteConfig gradcheck;
  std::optional<std::string> inject_fault;
  double fault_scale = 1.5;
  fs::path base;  // config directory; relative paths resolve against it
};

fs::path resolve(const RunConfig& c, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : c.base / path;
}

std::size_t as_size(const json& v, const std::string& key) {
  return json_count(v, key);
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key + ": expected a string");
  return v.get<std::string>();
}

void parse_data(RunConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("data: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "train") c.data.train = resolve(c, as_string(*it, "data.train"));
    else if (k == "validation") c.data.validation = resolve(c, as_string(*it, "data.validation"));
    else if (k == "test") c.data.test = resolve(c, as_string(*it, "data.test"));
    else if (k == "input") c.data.input = resolve(c, as_string(*it, "data.input"));
    else if (k == "standardize") {
      if (!it->is_boolean()) throw ConfigError("data.standardize: expected a boolean");
      c.data.standardize = it->get<bool>();
    } else throw ConfigError("data: unknown key \"" + k + "\"");
  }
}

void parse_eval(RunConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("eval: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "n_tasks") c.eval.n_tasks = as_size(*it, "eval.n_tasks");
    else if (k == "k_min") c.eval.k_min = as_size(*it, "eval.k_min");
    else if (k == "k_max") c.eval.k_max = as_size(*it, "eval.k_max");
    else if (k == "vb_steps") c.eval.vb_steps = as_size(*it, "eval.vb_steps");
    else throw ConfigError("eval: unknown key \"" + k + "\"");
  }
  if (c.eval.n_tasks < 1) throw ConfigError("eval.n_tasks must be >= 1");
  if (c.eval.k_min < 1 || c.eval.k_max < c.eval.k_min)
    throw ConfigError("eval.k_min/k_max must satisfy 1 <= k_min <= k_max");
}

void parse_split(RunConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("split: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (!it->is_number()) throw ConfigError("split." + k + ": expected a number");
    if (k == "train") c.split.train = it->get<double>();
    else if (k == "validation") c.split.validation = it->get<double>();
    else if (k == "test") c.split.test = it->get<double>();
    else throw ConfigError("split: unknown key \"" + k + "\"");
    if (!(it->get<double>() > 0.0)) throw ConfigError("split." + k + ": must be > 0");
  }
  if (std::abs(c.split.train + c.split.validation + c.split.test - 1.0) > 1e-9)
    throw ConfigError("split: fractions must sum to 1");
}

RunConfig parse_config(const json& j, const fs::path& base) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  RunConfig c;
  c.base = base;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = *it;
    if (k == "seed") c.seed = json_u64(v, "seed");
    else if (k == "encoder") nn::update_from_json(c.model.encoder, v);
    else if (k == "vb") vb::update_from_json(c.model.vb, v);
    else if (k == "train") train::update_from_json(c.train, v);
    else if (k == "eval") parse_eval(c, v);
    else if (k == "data") parse_data(c, v);
    else if (k == "split") parse_split(c, v);
    else if (k == "synthetic") {
      data::SyntheticSpec s;
      data::update_from_json(s, v);
      c.synthetic = s;
    } else if (k == "mode") c.model.mode = train::parse_mode(as_string(v, "mode"));
    else if (k == "modes") {
      if (!v.is_array() || v.empty()) throw ConfigError("modes: expected a non-empty array");
      c.modes.clear();
      for (const auto& m : v) c.modes.push_back(train::parse_mode(as_string(m, "modes[]")));
    } else if (k == "model") c.model_path = resolve(c, as_string(v, "model"));
    else if (k == "resume") c.resume = resolve(c, as_string(v, "resume"));
    else if (k == "gradcheck") {
      json rest = v;
      if (rest.is_object() && rest.contains("inject_fault")) {
        c.inject_fault = as_string(rest["inject_fault"], "gradcheck.inject_fault");
        rest.erase("inject_fault");
      }
      if (rest.is_object() && rest.contains("fault_scale")) {
        if (!rest["fault_scale"].is_number()) throw ConfigError("gradcheck.fault_scale: expected a number");
        c.fault_scale = rest["fault_scale"].get<double>();
        rest.erase("fault_scale");
      }
      selfcheck::update_from_json(c.gradcheck, rest);
    } else throw ConfigError("config: unknown key \"" + k + "\"");
  }
  c.model.vb.validate();
  return c;
}

json effective_config(const RunConfig& c) {
  auto path = [](const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); };
  json modes = json::array();
  for (auto m : c.modes) modes.push_back(train::mode_name(m));
  return {{"seed", c.seed},
          {"mode", train::mode_name(c.model.mode)},
          {"modes", modes},
          {"encoder", nn::to_json(c.model.effective_encoder())},
          {"vb", vb::to_json(c.model.vb)},
          {"train", train::to_json(c.train)},
          {"eval",
           {{"n_tasks", c.eval.n_tasks},
            {"k_min", c.eval.k_min},
            {"k_max", c.eval.k_max},
            {"vb_steps", c.eval.vb_steps ? json(*c.eval.vb_steps) : json(nullptr)}}},
          {"data",
           {{"train", path(c.data.train)},
            {"validation", path(c.data.validation)},
            {"test", path(c.data.test)},
            {"input", path(c.data.input)},
            {"standardize", c.data.standardize}}},
          {"split", {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}}},
          {"synthetic", c.synthetic ? data::to_json(*c.synthetic) : json(nullptr)},
          {"model", path(c.model_path)},
          {"resume", path(c.resume)}};
}

data::LabeledDataset load(const fs::path& p, bool require_label) {
  try {
    return data::load_csv(p, require_label);
  } catch (const ParseError& e) {
    throw DataError(e.what());
  }
}

struct Datasets {
  data::LabeledDataset train, validation, test;
  std::optional<data::Standardizer> standardizer;
};

// Named CSV splits, or a generated synthetic family split by category.
Datasets load_datasets(const RunConfig& c, bool need_test) {
  Datasets d;
  if (c.data.train) {
    if (!c.data.validation) throw ConfigError("data.validation: required alongside data.train");
    d.train = load(*c.data.train, true);
    d.validation = load(*c.data.validation, true);
    if (c.data.test) d.test = load(*c.data.test, true);
    else if (need_test) throw ConfigError("data.test: required for this command");
  } else if (c.synthetic) {
    auto split = data::split_by_category(data::gen_synthetic(*c.synthetic, c.seed),
                                         {c.split.train, c.split.validation, c.split.test, c.seed});
    d.train = std::move(split.train);
    d.validation = std::move(split.validation);
    d.test = std::move(split.test);
  } else {
    throw ConfigError("data: name data.train/data.validation or give a synthetic spec");
  }
  for (const auto* s : {&d.validation, &d.test})
    if (s->size() && s->dim() != d.train.dim())
      throw DataError("data: splits disagree on the feature count");
  if (c.data.standardize) {
    d.standardizer = data::Standardizer::fit(d.train.x);
    d.train = d.standardizer->apply(std::move(d.train));
    d.validation = d.standardizer->apply(std::move(d.validation));
    if (d.test.size()) d.test = d.standardizer->apply(std::move(d.test));
  }
  return d;
}

json standardizer_json(const std::optional<data::Standardizer>& s) {
  if (!s) return nullptr;
  return {{"mean", s->mean}, {"scale", s->scale}};
}

struct Model {
  train::ModelConfig config;
  nn::EncoderParams params;
  std::optional<data::Standardizer> standardizer;
};

json model_json(const Model& m, const json& run_config) {
  return {{"format", "metaclust.model"},
          {"version", 1},
          {"mode", train::mode_name(m.config.mode)},
          {"vb", vb::to_json(m.config.vb)},
          {"standardizer", standardizer_json(m.standardizer)},
          {"encoder", nn::checkpoint_to_json(m.config.effective_encoder(), m.params)},
          {"run_config", run_config}};
}

Model load_model(const fs::path& p) {
  json doc;
  try {
    doc = read_json_file(p);
  } catch (const ParseError& e) {
    throw DataError(e.what());
  }
  try {
    if (doc.value("format", "") != "metaclust.model" || doc.value("version", 0) != 1)
      throw DataError(p.string() + ": not a metaclust model file");
    Model m;
    m.config.mode = train::parse_mode(doc.at("mode").get<std::string>());
    vb::update_from_json(m.config.vb, doc.at("vb"));
    auto [ec, params] = nn::checkpoint_from_json(doc.at("encoder"));
    m.config.encoder = ec;
    m.params = std::move(params);
    if (!doc.at("standardizer").is_null()) {
      data::Standardizer s;
      s.mean = doc["standardizer"].at("mean").get<std::vector<double>>();
      s.scale = doc["standardizer"].at("scale").get<std::vector<double>>();
      m.standardizer = s;
    }
    return m;
  } catch (const json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(p.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

data::LabeledDataset prepare_input(const Model& m, data::LabeledDataset d) {
  if (d.dim() != m.config.encoder.input_dim)
    throw ModelMismatchError("model expects " + std::to_string(m.config.encoder.input_dim) +
                             " features, data has " + std::to_string(d.dim()));
  if (m.standardizer) d = m.standardizer->apply(std::move(d));
  return d;
}

fs::path require_out(const std::optional<fs::path>& out, const char* what) {
  if (!out) throw ConfigError(std::string("--out: required (") + what + ")");
  return *out;
}

train::ModelConfig model_for(const RunConfig& c, const data::LabeledDataset& train_data,
                             train::Mode mode) {
  train::ModelConfig m = c.model;
  m.mode = mode;
  m.encoder.input_dim = train_data.dim();
  m.encoder.clusters = m.vb.clusters;
  m.validate();
  return m;
}

train::EvalConfig eval_config(const RunConfig& c) {
  return {c.eval.n_tasks, {c.eval.k_min, c.eval.k_max, c.train.n_max_per_category}, c.seed,
          c.eval.vb_steps};
}

struct Trained {
  Model model;
  train::TrainState state;
};

Trained fit(const RunConfig& c, const Datasets& d, train::Mode mode) {
  Trained t;
  t.model.config = model_for(c, d.train, mode);
  t.model.standardizer = d.standardizer;
  const nn::EncoderConfig ec = t.model.config.effective_encoder();
  nn::EncoderParams init = nn::init_params(ec, c.seed);
  if (c.train.pretrain_episodes > 0 && !ec.identity_encoder) {
    train::ProtoConfig pc;
    pc.episodes = c.train.pretrain_episodes;
    pc.ways = c.train.pretrain_ways;
    pc.n_max_per_category = c.train.n_max_per_category;
    pc.optimizer = c.train;
    pc.seed = c.seed;
    init.fZ = train::proto_pretrain(init.fZ, std::span(&d.train, 1), ec, pc);
  }
  std::optional<train::TrainState> resume;
  if (c.resume) {
    try {
      resume = train::state_from_json(read_json_file(*c.resume));
    } catch (const ParseError& e) {
      throw DataError(e.what());
    }
  }
  train::TrainConfig tc = c.train;
  tc.seed = c.seed;
  t.state = train::train(init, std::span(&d.train, 1), std::span(&d.validation, 1), t.model.config,
                         tc, std::move(resume));
  t.model.params = t.state.best;
  return t;
}

std::string log_ndjson(const json& header, const train::TrainState& st) {
  std::string out = dump_json(header, -1) + "\n";
  for (const auto& r : st.log) out += dump_json(r.to_json(), -1) + "\n";
  return out;
}

int cmd_synth(const RunConfig& c, const std::optional<fs::path>& out) {
  if (!c.synthetic) throw ConfigError("synthetic: required for synth");
  const fs::path dir = require_out(out, "output directory");
  const auto all = data::gen_synthetic(*c.synthetic, c.seed);
  auto split = data::split_by_category(all, {c.split.train, c.split.validation, c.split.test, c.seed});
  data::save_csv(split.train, dir / "train.csv");
  data::save_csv(split.validation, dir / "validation.csv");
  data::save_csv(split.test, dir / "test.csv");
  json manifest = split.manifest;
  manifest["config"] = effective_config(c);
  write_text_file(dir / "manifest.json", dump_json(manifest));
  std::cout << "wrote " << split.train.categories() << "/" << split.validation.categories() << "/"
            << split.test.categories() << " categories to " << dir.string() << "\n";
  return kOk;
}

int cmd_train(const RunConfig& c, const std::optional<fs::path>& out) {
  const fs::path dir = require_out(out, "output directory");
  const Datasets d = load_datasets(c, false);
  const Trained t = fit(c, d, c.model.mode);
  const json cfg = effective_config(c);
  write_text_file(dir / "model.json", dump_json(model_json(t.model, cfg)));
  write_text_file(dir / "train_log.ndjson", log_ndjson({{"config", cfg}, {"seed", c.seed}}, t.state));
  write_text_file(dir / "train_state.json", dump_json(train::state_to_json(t.state)));
  write_text_file(dir / "config.json", dump_json(cfg));
  std::cout << "epochs " << t.state.epoch << ", best validation ARI "
            << format_double(t.state.best_validation) << (t.state.stopped ? " (early stop)" : "")
            << "\n";
  return kOk;
}

int cmd_pretrain(const RunConfig& c, const std::optional<fs::path>& out) {
  const fs::path dir = require_out(out, "output directory");
  const Datasets d = load_datasets(c, false);
  Model m;
  m.config = model_for(c, d.train, c.model.mode);
  m.standardizer = d.standardizer;
  const nn::EncoderConfig ec = m.config.effective_encoder();
  if (ec.identity_encoder) throw ConfigError("pretrain: identity encoder has nothing to train");
  m.params = nn::init_params(ec, c.seed);
  train::ProtoConfig pc;
  pc.episodes = std::max<std::size_t>(1, c.train.pretrain_episodes);
  pc.ways = c.train.pretrain_ways;
  pc.n_max_per_category = c.train.n_max_per_category;
  pc.optimizer = c.train;
  pc.seed = c.seed;
  m.params.fZ = train::proto_pretrain(m.params.fZ, std::span(&d.train, 1), ec, pc);
  const double acc = train::proto_accuracy(m.params.fZ, std::span(&d.validation, 1), 100,
                                           c.train.pretrain_ways, c.seed);
  const json cfg = effective_config(c);
  write_text_file(dir / "model.json", dump_json(model_json(m, cfg)));
  write_text_file(dir / "pretrain.json",
                  dump_json({{"config", cfg}, {"seed", c.seed}, {"validation_query_accuracy", acc}}));
  std::cout << "validation query accuracy " << format_double(acc) << "\n";
  return kOk;
}

int cmd_cluster(const RunConfig& c, const std::optional<fs::path>& out) {
  if (!c.model_path) throw ConfigError("model: required for cluster");
  if (!c.data.input) throw ConfigError("data.input: required for cluster");
  const fs::path dest = require_out(out, "assignments file");
  const Model m = load_model(*c.model_path);
  const auto d = prepare_input(m, load(*c.data.input, false));

  ad::Graph g;
  const auto enc = nn::bind(g, m.params, false);
  const auto res = train::run_pipeline(enc, g.constant(d.x), m.config, c.seed, false, true);
  const Tensor& r = res.r.value();
  json rows = json::array();
  for (std::size_t i = 0; i < r.rows(); ++i) {
    const auto row = r.row_at(i);
    rows.push_back(std::vector<double>(row.values().begin(), row.values().end()));
  }
  const auto hard = vb::hard_assignments(r);
  const std::size_t populated = vb::populated_clusters(r);
  json doc = {{"config", effective_config(c)},
              {"seed", c.seed},
              {"n", d.size()},
              {"clusters", r.cols()},
              {"populated_clusters", populated},
              {"labels", hard},
              {"assignments", rows},
              {"elbo_trace", res.elbo_trace}};
  write_text_file(dest, dump_json(doc));
  std::cout << d.size() << " instances, " << populated << " populated clusters\n";
  return kOk;
}

void write_timing(const fs::path& dest, double ms) {
  fs::path t = dest;
  t += ".timing.json";
  write_text_file(t, dump_json({{"runtime_ms", ms}}));
}

int cmd_evaluate(const RunConfig& c, const std::optional<fs::path>& out) {
  if (!c.model_path) throw ConfigError("model: required for evaluate");
  const auto path = c.data.test ? c.data.test : c.data.input;
  if (!path && !c.synthetic) throw ConfigError("data.test: required for evaluate");
  const fs::path dest = require_out(out, "metrics file");
  const auto t0 = std::chrono::steady_clock::now();
  const Model m = load_model(*c.model_path);
  // without a named file, the test split of the synthetic family
  auto raw = path ? load(*path, true)
                  : data::split_by_category(data::gen_synthetic(*c.synthetic, c.seed),
                                            {c.split.train, c.split.validation, c.split.test, c.seed})
                        .test;
  const auto d = prepare_input(m, std::move(raw));
  const auto res = train::evaluate(m.params, std::span(&d, 1), m.config, eval_config(c));
  json doc = train::to_json(res);
  doc["config"] = effective_config(c);
  doc["seed"] = c.seed;
  write_text_file(dest, dump_json(doc));
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  write_timing(dest, ms);
  std::cout << "mean ARI " << format_double(res.mean) << " over " << res.tasks.size()
            << " tasks (" << static_cast<long long>(ms) << " ms)\n";
  return kOk;
}

int cmd_ablate(const RunConfig& c, const std::optional<fs::path>& out) {
  const fs::path dest = require_out(out, "comparison table file");
  const auto t0 = std::chrono::steady_clock::now();
  const Datasets d = load_datasets(c, true);
  json rows = json::array();
  for (const train::Mode mode : c.modes) {
    const Trained t = fit(c, d, mode);
    const auto res = train::evaluate(t.model.params, std::span(&d.test, 1), t.model.config,
                                     eval_config(c));
    rows.push_back({{"mode", train::mode_name(mode)},
                    {"mean_ari", res.mean},
                    {"standard_error", res.standard_error ? json(*res.standard_error) : json(nullptr)},
                    {"n_tasks", res.tasks.size()},
                    {"epochs", t.state.epoch},
                    {"best_validation_ari", t.state.best_validation},
                    {"ari", train::to_json(res)["ari"]},
                    {"tasks", train::to_json(res)["tasks"]}});
    std::cout << train::mode_name(mode) << ": " << format_double(res.mean) << "\n";
  }
  write_text_file(dest, dump_json({{"config", effective_config(c)}, {"seed", c.seed}, {"table", rows}}));
  write_timing(dest, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  return kOk;
}

int cmd_gradcheck(const RunConfig& c, const std::optional<fs::path>& out) {
  selfcheck::SuiteConfig sc = c.gradcheck;
  sc.seed = c.seed;
  if (c.inject_fault) {
    std::optional<ad::Op> op;
    for (std::size_t i = 0; i < ad::kOpCount; ++i)
      if (ad::op_name(static_cast<ad::Op>(i)) == *c.inject_fault) op = static_cast<ad::Op>(i);
    if (!op) throw ConfigError("gradcheck.inject_fault: unknown primitive \"" + *c.inject_fault + "\"");
    ad::testing::set_derivative_fault(*op, c.fault_scale);
  }
  const auto report = selfcheck::run_suite(sc);
  ad::testing::clear_derivative_faults();
  json doc = selfcheck::to_json(report);
  doc["config"] = selfcheck::to_json(sc);
  if (out) write_text_file(*out, dump_json(doc));
  for (const auto& [stage, err] : doc["stages"].items())
    std::cout << stage << ": max relative error " << format_double(err.get<double>()) << "\n";
  if (!report.passed()) {
    const auto* w = report.worst();
    std::cerr << "gradient check failed: " << w->stage << "/" << w->name << " tensor "
              << w->report.worst_tensor << " index " << w->report.worst_index << " analytic "
              << format_double(w->report.analytic) << " numeric "
              << format_double(w->report.numeric) << "\n";
    return kCheckFailed;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-learned clustering with differentiable DP-GMM inference"};
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  app.add_option("command", command, "train | pretrain | cluster | evaluate | ablate | gradcheck | synth")
      ->required()
      ->check(CLI::IsMember({"train", "pretrain", "cluster", "evaluate", "ablate", "gradcheck", "synth"}));
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--out", out, "output file or directory");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      json doc;
      try {
        doc = read_json_file(config_path);
      } catch (const ParseError& e) {
        throw ConfigError(e.what());
      }
      cfg = parse_config(doc, fs::path(config_path).parent_path());
    } else if (command != "gradcheck") {
      throw ConfigError("--config: required for " + command);
    }
    if (seed) cfg.seed = *seed;
    std::optional<fs::path> out_path;
    if (out) out_path = fs::path(*out);

    if (command == "synth") return cmd_synth(cfg, out_path);
    if (command == "train") return cmd_train(cfg, out_path);
    if (command == "pretrain") return cmd_pretrain(cfg, out_path);
    if (command == "cluster") return cmd_cluster(cfg, out_path);
    if (command == "evaluate") return cmd_evaluate(cfg, out_path);
    if (command == "ablate") return cmd_ablate(cfg, out_path);
    return cmd_gradcheck(cfg, out_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ModelMismatchError& e) {
    std::cerr << "model/data mismatch: " << e.what() << "\n";
    return kMismatch;
  } catch (const InfeasibleSpecError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ContractError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
}

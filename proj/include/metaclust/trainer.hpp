#pragma once

// Episodic meta-training of the encoder networks through unrolled inference.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "metaclust/dataio.hpp"
#include "metaclust/dpgmm.hpp"
#include "metaclust/encoder.hpp"
#include "metaclust/metrics.hpp"

namespace metaclust::train {

using Rng = std::mt19937_64;

enum class Mode { Full, NoFRInit, EMInference, ProbDistance, IdentityEncoder };

std::string mode_name(Mode m);
Mode parse_mode(const std::string& name);  // ConfigError on unknown names

// Everything that determines the forward pipeline.
struct ModelConfig {
  nn::EncoderConfig encoder;
  vb::VBConfig vb;
  Mode mode = Mode::Full;

  metrics::Distance distance() const {
    return mode == Mode::ProbDistance ? metrics::Distance::Probability
                                      : metrics::Distance::TotalVariation;
  }
  // Encoder config with identity_encoder and K' made consistent with mode and vb.
  nn::EncoderConfig effective_encoder() const;
  void validate() const;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t max_epochs = 1000;  // one episode per epoch
  std::size_t patience = 50;      // validation rounds without improvement
  std::size_t validation_interval = 10;
  std::size_t validation_tasks = 50;
  std::size_t n_max_per_category = 20;
  std::size_t eval_k_min = 2;
  std::size_t eval_k_max = 10;
  double clip_norm = 10.0;  // 0 disables clipping
  std::size_t pretrain_episodes = 0;  // proto pretraining of f_Z; 0 skips
  std::size_t pretrain_ways = 5;
  bool log_timing = false;  // wall-clock per record; breaks byte-identical logs
  std::uint64_t seed = 0;

  void validate() const;
};

json to_json(const TrainConfig& c);
void update_from_json(TrainConfig& c, const json& j);

struct TaskBatch {
  Tensor x;                     // N x D
  std::vector<int> y;           // contiguous 0..K-1, empty when unlabeled
  std::size_t task_id = 0;
  std::vector<int> categories;  // source label ids, in the order of y's ids
  std::uint64_t seed = 0;       // drives dropout and random initial assignments

  std::size_t k() const { return categories.size(); }
};

struct EpisodeSpec {
  std::size_t k_min = 1;
  std::size_t k_max = 10;  // clipped to the task's category count
  std::size_t n_max_per_category = 20;
};

// Uniform task, uniform K in [min(k_min, k_max'), k_max'] with
// k_max' = min(k_max, K_t), K categories without replacement, and at most
// n_max_per_category instances from each (uniform subsample).
TaskBatch sample_episode(std::span<const data::LabeledDataset> tasks, const EpisodeSpec& spec,
                         Rng& rng);

struct PipelineOutput {
  ad::Var z, u;
  ad::Var r, log_r;
  std::vector<double> elbo_trace;  // VB only, when tracked
};

// x -> Z -> u -> R0 -> (VB | EM) -> R. Training mode applies dropout and the
// configured assignment floor; evaluation mode neither.
PipelineOutput run_pipeline(const nn::BoundEncoder& enc, ad::Var x, const ModelConfig& config,
                            std::uint64_t episode_seed, bool training, bool track_elbo = false);

struct EpisodeResult {
  double loss = 0.0;  // -continuous ARI, in [-1, 1]
  bool degenerate = false;
  std::vector<Tensor> grads;  // EncoderParams::named() order
};

EpisodeResult episode_loss(const nn::EncoderParams& params, const TaskBatch& batch,
                           const ModelConfig& config, bool training = true);

// Differentiable loss only, for gradient checking against finite differences.
ad::Var episode_loss_var(ad::Graph& g, std::span<const ad::Var> params, const TaskBatch& batch,
                         const ModelConfig& config, bool training);

struct AdamState {
  std::vector<Tensor> m, v;
  std::uint64_t step = 0;
};

AdamState adam_init(std::span<const Tensor* const> params);

// Bias-corrected Adam. Returns false and leaves everything untouched when a
// gradient is non-finite.
bool adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const TrainConfig& config);

// Rescales so the global L2 norm is at most max_norm; returns the norm before.
double clip_global_norm(std::span<Tensor> grads, double max_norm);

struct LogRecord {
  std::size_t epoch = 0;
  std::optional<double> loss;            // absent for the epoch-0 record
  std::optional<double> validation_ari;  // present on validation epochs
  std::size_t degenerate = 0;            // cumulative
  std::size_t skipped = 0;               // cumulative non-finite episodes
  std::optional<double> wall_ms;

  json to_json() const;
};

// Complete resumable state of a training run.
struct TrainState {
  nn::EncoderParams params;
  nn::EncoderParams best;
  AdamState adam;
  std::size_t epoch = 0;
  double best_validation = -2.0;
  std::size_t stale_rounds = 0;
  std::size_t degenerate = 0;
  std::size_t skipped = 0;
  bool stopped = false;
  std::string rng;  // serialised engine
  std::vector<LogRecord> log;
};

json state_to_json(const TrainState& s);
TrainState state_from_json(const json& doc);

// Runs (or resumes) Algorithm-style episodic training until max_epochs or
// early stop. The returned state's `best` holds the parameters with the
// highest validation ARI.
TrainState train(const nn::EncoderParams& init, std::span<const data::LabeledDataset> train_tasks,
                 std::span<const data::LabeledDataset> validation_tasks, const ModelConfig& model,
                 const TrainConfig& config, std::optional<TrainState> resume = std::nullopt);

struct EvalConfig {
  std::size_t n_tasks = 100;
  EpisodeSpec episodes{2, 10, 20};
  std::uint64_t seed = 0;
  std::optional<std::size_t> vb_steps;  // overrides model.vb.steps
};

struct TaskScore {
  std::size_t k = 0;
  std::size_t n = 0;
  double ari = 0.0;
  std::size_t populated = 0;
};

struct EvalResult {
  std::vector<TaskScore> tasks;
  double mean = 0.0;
  std::optional<double> standard_error;  // absent for a single task
};

// Episodes are drawn sequentially from seed and clustered in parallel;
// results are ordered by episode index.
EvalResult evaluate(const nn::EncoderParams& params, std::span<const data::LabeledDataset> tasks,
                    const ModelConfig& model, const EvalConfig& config);

json to_json(const EvalResult& r);

struct ProtoConfig {
  std::size_t episodes = 500;
  std::size_t ways = 5;
  std::size_t n_max_per_category = 20;
  TrainConfig optimizer;
  std::uint64_t seed = 0;
};

// Prototypical-network training of f_Z alone.
nn::MLPParams proto_pretrain(const nn::MLPParams& fZ, std::span<const data::LabeledDataset> tasks,
                             const nn::EncoderConfig& encoder, const ProtoConfig& config);

// Mean nearest-centroid query accuracy of f_Z over held-out episodes.
double proto_accuracy(const nn::MLPParams& fZ, std::span<const data::LabeledDataset> tasks,
                      std::size_t episodes, std::size_t ways, std::uint64_t seed);

}  // namespace metaclust::train

#pragma once

// The four networks of the model:
//   f_Z : instance x (D)            -> representation z (S)
//   f_U : z (S)                     -> pooled feature (pool_dim)
//   g_U : mean_n f_U(z_n)           -> task representation u (task_dim)
//   f_R : [z_n, u] (S + task_dim)   -> initial cluster logits (K')
// Each is a feed-forward network of `depth` weight layers with rectifiers
// between layers and a linear output.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "metaclust/autodiff.hpp"
#include "metaclust/json_io.hpp"
#include "metaclust/tensor.hpp"

namespace metaclust::nn {

struct Layer {
  Tensor weight;  // out x in
  Tensor bias;    // 1 x out
};

struct MLPParams {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }
};

struct DropoutSwitches {
  bool fZ = true;
  bool fU = true;
  bool gU = true;
  bool fR = true;
};

struct EncoderConfig {
  std::size_t input_dim = 0;  // D
  std::size_t repr_dim = 10;  // S
  std::size_t hidden = 256;
  std::size_t depth = 3;
  std::size_t pool_dim = 256;  // f_U output
  std::size_t task_dim = 256;  // g_U output
  std::size_t clusters = 10;   // K'
  double dropout_rate = 0.1;
  DropoutSwitches dropout_on;
  // f_Z replaced by the identity map; repr_dim is then forced to input_dim.
  bool identity_encoder = false;

  std::size_t effective_repr_dim() const { return identity_encoder ? input_dim : repr_dim; }
  void validate() const;
};

json to_json(const EncoderConfig& c);
// Reads the keys present in `j` over the defaults in `c`; unknown keys throw ConfigError.
void update_from_json(EncoderConfig& c, const json& j);

struct EncoderParams {
  MLPParams fZ, fU, gU, fR;

  // Stable ordering "fZ.0.W", "fZ.0.b", ..., "fR.<depth-1>.b".
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::size_t parameter_count() const;
};

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);

// Parameters recorded as leaves of one graph, in EncoderParams::named() order.
struct BoundMLP {
  std::vector<ad::Var> weight;
  std::vector<ad::Var> bias;
};

struct BoundEncoder {
  BoundMLP fZ, fU, gU, fR;
  std::vector<ad::Var> all() const;
};

// trainable = false records the parameters as constants (no gradient work).
BoundEncoder bind(ad::Graph& graph, const EncoderParams& params, bool trainable);

// Present only in training mode.
struct DropoutContext {
  std::mt19937_64* rng = nullptr;
  double rate = 0.0;
  DropoutSwitches on;
};

// Generic MLP forward pass; dropout after every hidden rectifier when
// `dropout` is non-null.
ad::Var mlp_forward(const BoundMLP& net, ad::Var x, const DropoutContext* dropout);

// Z = f_Z(X), one row per instance.
ad::Var encode_instances(const BoundEncoder& enc, ad::Var x, const EncoderConfig& config,
                         const DropoutContext* dropout);

// u = g_U(mean_n f_U(z_n)), 1 x task_dim.
ad::Var task_representation(const BoundEncoder& enc, ad::Var z, const DropoutContext* dropout);

struct InitialAssignments {
  ad::Var log_r;  // N x K', rows are normalised log-probabilities
  ad::Var r;      // exp(log_r)
};

// Row n is softmax(f_R([z_n, u])).
InitialAssignments initial_assignments(const BoundEncoder& enc, ad::Var z, ad::Var u,
                                       const DropoutContext* dropout);

// Checkpoint: {"format", "version", "config", "params": {"fZ.0.W": [...], ...}}.
json checkpoint_to_json(const EncoderConfig& config, const EncoderParams& params);
std::pair<EncoderConfig, EncoderParams> checkpoint_from_json(const json& doc);
void save_checkpoint(const std::filesystem::path& path, const EncoderConfig& config,
                     const EncoderParams& params);
std::pair<EncoderConfig, EncoderParams> load_checkpoint(const std::filesystem::path& path);

}  // namespace metaclust::nn

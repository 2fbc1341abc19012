#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "crafter/nnet/layers.hpp"
#include "crafter/nnet/params.hpp"
#include "crafter/observe.hpp"

namespace crafter::agents {

using nn::Tensor;

enum class Architecture : std::uint8_t { ppo_cnn, ppo_spcnn, lstm_cnn, lstm_spcnn, oc_sa, oc_ca };
inline constexpr int kNumArchitectures = 6;

std::string_view name(Architecture a);
// Accepts the display names ("PPO-CNN") and snake case ("ppo_cnn").
std::optional<Architecture> parse_architecture(std::string_view s);

bool is_recurrent(Architecture a);
bool is_object_centric(Architecture a);
bool uses_spcnn(Architecture a);

class UnsupportedError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct AgentConfig {
  Architecture arch = Architecture::ppo_cnn;
  // Object-centric agents only.
  int patch_size = 0;
  int stride = 0;
  int n_slots = 8;
  int n_heads = 8;
  bool use_layernorm = false;
  bool use_residual_mlp = false;
  bool use_slot_competition = false;
  bool use_positional_embeddings = true;
  // Widths.
  std::array<int, 3> cnn_channels{32, 64, 64};
  int spcnn_channels = 64;
  int spcnn_layers = 4;
  int fc_dim = 512;
  int lstm_dim = 256;
  int critic_dim = 256;
  int embed_dim = 256;
  int mlp_dim = 256;

  static AgentConfig defaults(Architecture a);
  // Throws ConfigError on an inconsistent configuration.
  void validate() const;
  std::uint64_t digest() const;
  friend bool operator==(const AgentConfig&, const AgentConfig&) = default;
};

nlohmann::json to_json(const AgentConfig& c);
// Missing keys take the architecture defaults.
AgentConfig agent_config_from_json(const nlohmann::json& j);

// Exact trainable parameter count, computed without allocating.
std::size_t parameter_count(const AgentConfig& c);

enum class Toggle : std::uint8_t { layernorm, residual_mlp, slot_competition, no_positional_embeddings };
std::optional<Toggle> parse_toggle(std::string_view s);

struct Ablation {
  std::vector<Toggle> toggles;
  std::optional<int> patch_size;
  std::optional<int> stride;
  std::optional<int> n_slots;
  std::optional<int> n_heads;
};

// Switches blocks on and overrides attention geometry; throws
// UnsupportedError for toggles that do not apply to the architecture.
AgentConfig apply_ablation(const AgentConfig& c, const Ablation& a);

// Row-stochastic (or column-stochastic under slot competition) weights of one
// attention readout for one sample, with the patch grid for overlays.
struct AttentionMap {
  int layer = 0;
  int heads = 0;
  int rows = 0;
  int keys = 0;
  bool columns_stochastic = false;
  nn::PatchGeom geom{};
  // [heads, rows, keys]
  std::vector<double> weights;

  double at(int h, int r, int k) const {
    return weights[static_cast<std::size_t>((h * rows + r) * keys + k)];
  }
};

template <class T>
struct PolicyState {
  nn::LstmState<T> actor;
  nn::LstmState<T> critic;
  bool defined() const { return actor.h.defined(); }
};

template <class T>
struct LayerAttention {
  nn::AttentionResult<T> result;
  bool cls_readout = false;
};

template <class T>
struct BatchOutput {
  Tensor<T> logits;  // [N, 17]
  Tensor<T> value;   // [N, 1]
  PolicyState<T> state;
  std::vector<LayerAttention<T>> attention;
  nn::PatchGeom geom{};
};

struct PolicyOutput {
  std::array<float, kNumActions> logits{};
  float value = 0.0f;
  std::vector<AttentionMap> attention;
};

// Observations as [N, 3, 64, 64] in [0, 1].
template <class T>
Tensor<T> observations_to_tensor(std::span<const Observation> obs);

template <class T>
class Policy {
 public:
  Policy(AgentConfig config, std::uint64_t seed);

  const AgentConfig& config() const { return config_; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }

  // Zero recurrent state for n lanes (undefined for feed-forward agents).
  PolicyState<T> initial_state(int n) const;

  BatchOutput<T> forward(const Tensor<T>& obs, const PolicyState<T>* state = nullptr) const;
  BatchOutput<T> forward(std::span<const Observation> obs, const PolicyState<T>* state = nullptr) const;
  PolicyOutput forward_one(const Observation& obs, PolicyState<T>* state = nullptr) const;

  // Object-centric split: feature-map patches [N, k, C*p*p], then the
  // attention trunk and heads on those tokens.
  Tensor<T> encode_patches(const Tensor<T>& obs) const;
  BatchOutput<T> forward_from_patches(const Tensor<T>& patches) const;

 private:
  Tensor<T> cnn_trunk(const Tensor<T>& obs) const;
  Tensor<T> spcnn_trunk(const Tensor<T>& obs) const;
  Tensor<T> post_attention(const Tensor<T>& x, const std::string& prefix) const;
  void build(std::uint64_t seed);

  AgentConfig config_;
  nn::ParamSet<T> params_;
  Tensor<T> pe_;
};

// Multiplies each lane's state by keep[lane] (0 resets the lane).
template <class T>
PolicyState<T> mask_state(const PolicyState<T>& s, std::span<const T> keep);

// Attention readouts of sample `index`: the CLS row of the final layer for
// OC-SA (renormalized over patches), all slot rows for OC-CA.
template <class T>
std::vector<AttentionMap> extract_attention(const AgentConfig& config, const BatchOutput<T>& out, int index = 0);

// Per-pixel intensity [size*size] from one readout, averaged over heads and
// rows and over the patches covering each pixel, scaled to max 1.
std::vector<double> attention_heatmap(const AttentionMap& map, int size = kObsSize);

// Observation dimmed by a heatmap.
Image attention_overlay(const Observation& obs, std::span<const double> heat);
// Heatmap as a grey image.
Image heat_image(std::span<const double> heat, int size = kObsSize);

}  // namespace crafter::agents

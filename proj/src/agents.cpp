#include "crafter/agents.hpp"

#include <cctype>
#include <cmath>

#include <nlohmann/json.hpp>

namespace crafter::agents {

using nlohmann::json;
namespace {

constexpr std::array<std::string_view, kNumArchitectures> kDisplayNames = {
    "PPO-CNN", "PPO-SPCNN", "LSTM-CNN", "LSTM-SPCNN", "OC-SA", "OC-CA"};
constexpr std::array<std::string_view, kNumArchitectures> kSnakeNames = {
    "ppo_cnn", "ppo_spcnn", "lstm_cnn", "lstm_spcnn", "oc_sa", "oc_ca"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Spatial size after the three DQN convolutions on a 64x64 input.
constexpr int kCnnOut = ((((64 - 8) / 4 + 1) - 4) / 2 + 1) - 3 + 1;

std::size_t lin(std::size_t in, std::size_t out) { return in * out + out; }
std::size_t conv(std::size_t in, std::size_t out, std::size_t k) { return in * out * k * k + out; }
std::size_t lstm(std::size_t in, std::size_t h) { return 4 * h * in + 4 * h * h + 4 * h; }

}  // namespace

std::string_view name(Architecture a) { return kDisplayNames[static_cast<std::size_t>(a)]; }

std::optional<Architecture> parse_architecture(std::string_view s) {
  const std::string key = lower(s);
  for (int i = 0; i < kNumArchitectures; ++i)
    if (key == kSnakeNames[static_cast<std::size_t>(i)]) return static_cast<Architecture>(i);
  return std::nullopt;
}

bool is_recurrent(Architecture a) { return a == Architecture::lstm_cnn || a == Architecture::lstm_spcnn; }
bool is_object_centric(Architecture a) { return a == Architecture::oc_sa || a == Architecture::oc_ca; }
bool uses_spcnn(Architecture a) {
  return a == Architecture::ppo_spcnn || a == Architecture::lstm_spcnn || is_object_centric(a);
}

AgentConfig AgentConfig::defaults(Architecture a) {
  AgentConfig c;
  c.arch = a;
  if (a == Architecture::oc_sa) {
    c.patch_size = 8;
    c.stride = 8;
  } else if (a == Architecture::oc_ca) {
    c.patch_size = 16;
    c.stride = 16;
  }
  return c;
}

void AgentConfig::validate() const {
  auto fail = [this](const std::string& why) {
    throw ConfigError(std::string(name(arch)) + " config: " + why);
  };
  for (int c : cnn_channels)
    if (c < 1) fail("cnn_channels must be positive");
  if (spcnn_channels < 1 || spcnn_layers < 1) fail("spcnn widths must be positive");
  if (fc_dim < 1 || lstm_dim < 1 || critic_dim < 1 || embed_dim < 1 || mlp_dim < 1) fail("widths must be positive");
  if (!is_object_centric(arch)) {
    if (use_layernorm || use_residual_mlp || use_slot_competition)
      fail("attention toggles apply to object-centric agents only");
    return;
  }
  try {
    nn::patch_geometry(kObsSize, kObsSize, patch_size, stride);
  } catch (const nn::ShapeError& e) {
    fail(e.what());
  }
  if (n_heads < 1 || embed_dim % n_heads != 0) fail("embed_dim must be divisible by n_heads");
  if (use_positional_embeddings && embed_dim % 2 != 0) fail("positional embeddings need an even embed_dim");
  if (arch == Architecture::oc_ca && n_slots < 1) fail("n_slots must be positive");
  if (arch == Architecture::oc_sa && use_slot_competition) fail("slot competition needs learned slots (OC-CA)");
}

json to_json(const AgentConfig& c) {
  return json{{"architecture", kSnakeNames[static_cast<std::size_t>(c.arch)]},
              {"patch_size", c.patch_size},
              {"stride", c.stride},
              {"n_slots", c.n_slots},
              {"n_heads", c.n_heads},
              {"use_layernorm", c.use_layernorm},
              {"use_residual_mlp", c.use_residual_mlp},
              {"use_slot_competition", c.use_slot_competition},
              {"use_positional_embeddings", c.use_positional_embeddings},
              {"cnn_channels", c.cnn_channels},
              {"spcnn_channels", c.spcnn_channels},
              {"spcnn_layers", c.spcnn_layers},
              {"fc_dim", c.fc_dim},
              {"lstm_dim", c.lstm_dim},
              {"critic_dim", c.critic_dim},
              {"embed_dim", c.embed_dim},
              {"mlp_dim", c.mlp_dim}};
}

AgentConfig agent_config_from_json(const json& j) {
  try {
    const auto tag = j.at("architecture").get<std::string>();
    const auto arch = parse_architecture(tag);
    if (!arch) throw ConfigError("unknown architecture '" + tag + "'");
    AgentConfig c = AgentConfig::defaults(*arch);
    auto opt = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("patch_size", c.patch_size);
    opt("stride", c.stride);
    opt("n_slots", c.n_slots);
    opt("n_heads", c.n_heads);
    opt("use_layernorm", c.use_layernorm);
    opt("use_residual_mlp", c.use_residual_mlp);
    opt("use_slot_competition", c.use_slot_competition);
    opt("use_positional_embeddings", c.use_positional_embeddings);
    opt("cnn_channels", c.cnn_channels);
    opt("spcnn_channels", c.spcnn_channels);
    opt("spcnn_layers", c.spcnn_layers);
    opt("fc_dim", c.fc_dim);
    opt("lstm_dim", c.lstm_dim);
    opt("critic_dim", c.critic_dim);
    opt("embed_dim", c.embed_dim);
    opt("mlp_dim", c.mlp_dim);
    for (const auto& [key, _] : j.items())
      if (!to_json(c).contains(key)) throw ConfigError("unknown agent key '" + key + "'");
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("agent config: ") + e.what());
  }
}

std::uint64_t AgentConfig::digest() const { return fnv1a(to_json(*this).dump()); }

std::size_t parameter_count(const AgentConfig& c) {
  c.validate();
  const auto C = static_cast<std::size_t>(c.spcnn_channels);
  std::size_t n = 0;
  std::size_t flat = 0;
  if (uses_spcnn(c.arch)) {
    n += conv(3, C, 5);
    for (int i = 1; i < c.spcnn_layers; ++i) n += conv(C, C, 5);
    flat = C * kObsSize * kObsSize;
  } else {
    const auto& ch = c.cnn_channels;
    n += conv(3, static_cast<std::size_t>(ch[0]), 8) +
         conv(static_cast<std::size_t>(ch[0]), static_cast<std::size_t>(ch[1]), 4) +
         conv(static_cast<std::size_t>(ch[1]), static_cast<std::size_t>(ch[2]), 3);
    flat = static_cast<std::size_t>(ch[2]) * kCnnOut * kCnnOut;
  }
  const auto fc = static_cast<std::size_t>(c.fc_dim), H = static_cast<std::size_t>(c.lstm_dim);
  const auto E = static_cast<std::size_t>(c.embed_dim), M = static_cast<std::size_t>(c.mlp_dim);
  std::size_t post = 0;
  if (c.use_layernorm) post += 2 * E;
  if (c.use_residual_mlp) post += lin(E, M) + lin(M, E);
  switch (c.arch) {
    case Architecture::ppo_cnn:
    case Architecture::ppo_spcnn:
      return n + lin(flat, fc) + lin(fc, kNumActions) + lin(fc, 1);
    case Architecture::lstm_cnn:
      return n + lin(flat, fc) + 2 * lstm(fc, H) + lin(H, kNumActions) + lin(H, 1);
    case Architecture::lstm_spcnn:
      return n + lin(flat, fc) + lstm(fc, H) + lin(H, kNumActions) +
             lin(fc, static_cast<std::size_t>(c.critic_dim)) + lin(static_cast<std::size_t>(c.critic_dim), 1);
    case Architecture::oc_sa:
      return n + lin(C * static_cast<std::size_t>(c.patch_size * c.patch_size), E) + E +
             2 * (3 * lin(E, E) + post) + lin(E, kNumActions) + lin(E, 1);
    case Architecture::oc_ca:
      return n + lin(C * static_cast<std::size_t>(c.patch_size * c.patch_size), E) +
             static_cast<std::size_t>(c.n_slots) * E + 3 * lin(E, E) + post + lin(E, kNumActions) + lin(E, 1);
  }
  return n;
}

std::optional<Toggle> parse_toggle(std::string_view s) {
  const std::string key = lower(s);
  if (key == "layernorm") return Toggle::layernorm;
  if (key == "residual_mlp") return Toggle::residual_mlp;
  if (key == "slot_competition") return Toggle::slot_competition;
  if (key == "no_positional_embeddings" || key == "no_pe") return Toggle::no_positional_embeddings;
  return std::nullopt;
}

AgentConfig apply_ablation(const AgentConfig& c, const Ablation& a) {
  if (!is_object_centric(c.arch)) {
    if (!a.toggles.empty() || a.patch_size || a.stride || a.n_slots || a.n_heads)
      throw UnsupportedError(std::string("ablations apply to object-centric agents, not ") + std::string(name(c.arch)));
    return c;
  }
  AgentConfig out = c;
  for (Toggle t : a.toggles) {
    switch (t) {
      case Toggle::layernorm:
        out.use_layernorm = true;
        break;
      case Toggle::residual_mlp:
        out.use_residual_mlp = true;
        break;
      case Toggle::slot_competition:
        if (c.arch != Architecture::oc_ca) throw UnsupportedError("slot competition needs learned slots (OC-CA)");
        out.use_slot_competition = true;
        break;
      case Toggle::no_positional_embeddings:
        out.use_positional_embeddings = false;
        break;
    }
  }
  if (a.patch_size) out.patch_size = *a.patch_size;
  if (a.stride) out.stride = *a.stride;
  if (a.n_slots) {
    if (c.arch != Architecture::oc_ca) throw UnsupportedError("slot count applies to OC-CA only");
    out.n_slots = *a.n_slots;
  }
  if (a.n_heads) out.n_heads = *a.n_heads;
  out.validate();
  return out;
}

template <class T>
Tensor<T> observations_to_tensor(std::span<const Observation> obs) {
  const int n = static_cast<int>(obs.size());
  constexpr std::size_t plane = kObsSize * kObsSize;
  nn::Buffer<T> v(static_cast<std::size_t>(n) * 3 * plane);
  const T inv = T(1) / T(255);
  for (int i = 0; i < n; ++i) {
    const auto& px = obs[static_cast<std::size_t>(i)].pixels;
    T* dst = v.data() + static_cast<std::size_t>(i) * 3 * plane;
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t c = 0; c < 3; ++c) dst[c * plane + p] = static_cast<T>(px[p * 3 + c]) * inv;
  }
  return Tensor<T>::from({n, 3, kObsSize, kObsSize}, std::move(v));
}

template <class T>
Policy<T>::Policy(AgentConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  build(seed);
}

template <class T>
void Policy<T>::build(std::uint64_t seed) {
  Rng rng(stream_seed(seed, "policy_init"));
  const double relu_gain = std::sqrt(2.0);
  auto linear = [&](const std::string& n, int in, int out, double gain) {
    nn::orthogonal_init(params_.add(n + ".w", {out, in}), gain, rng);
    params_.add(n + ".b", {out});
  };
  auto conv = [&](const std::string& n, int in, int out, int k) {
    nn::orthogonal_init(params_.add(n + ".w", {out, in, k, k}), relu_gain, rng);
    params_.add(n + ".b", {out});
  };
  auto lstm = [&](const std::string& n, int in, int h) {
    nn::orthogonal_init(params_.add(n + ".w_ih", {4 * h, in}), 1.0, rng);
    nn::orthogonal_init(params_.add(n + ".w_hh", {4 * h, h}), 1.0, rng);
    params_.add(n + ".b", {4 * h});
  };
  const auto& c = config_;
  int flat = 0;
  if (uses_spcnn(c.arch)) {
    for (int i = 0; i < c.spcnn_layers; ++i) conv("spcnn" + std::to_string(i), i == 0 ? 3 : c.spcnn_channels, c.spcnn_channels, 5);
    flat = c.spcnn_channels * kObsSize * kObsSize;
  } else {
    conv("cnn0", 3, c.cnn_channels[0], 8);
    conv("cnn1", c.cnn_channels[0], c.cnn_channels[1], 4);
    conv("cnn2", c.cnn_channels[1], c.cnn_channels[2], 3);
    flat = c.cnn_channels[2] * kCnnOut * kCnnOut;
  }
  int head_in = c.fc_dim;
  auto post_blocks = [&](const std::string& p) {
    if (c.use_layernorm) {
      nn::fill(params_.add(p + ".ln.gamma", {c.embed_dim}), T(1));
      params_.add(p + ".ln.beta", {c.embed_dim});
    }
    if (c.use_residual_mlp) {
      linear(p + ".mlp1", c.embed_dim, c.mlp_dim, relu_gain);
      linear(p + ".mlp2", c.mlp_dim, c.embed_dim, 1.0);
    }
  };
  switch (c.arch) {
    case Architecture::ppo_cnn:
    case Architecture::ppo_spcnn:
      linear("fc", flat, c.fc_dim, relu_gain);
      break;
    case Architecture::lstm_cnn:
      linear("fc", flat, c.fc_dim, relu_gain);
      lstm("actor_lstm", c.fc_dim, c.lstm_dim);
      lstm("critic_lstm", c.fc_dim, c.lstm_dim);
      head_in = c.lstm_dim;
      break;
    case Architecture::lstm_spcnn:
      linear("fc", flat, c.fc_dim, relu_gain);
      lstm("actor_lstm", c.fc_dim, c.lstm_dim);
      linear("critic_fc", c.fc_dim, c.critic_dim, 1.0);
      head_in = c.lstm_dim;
      break;
    case Architecture::oc_sa:
    case Architecture::oc_ca: {
      const nn::PatchGeom g = nn::patch_geometry(kObsSize, kObsSize, c.patch_size, c.stride);
      linear("proj", c.spcnn_channels * c.patch_size * c.patch_size, c.embed_dim, 1.0);
      if (c.use_positional_embeddings) pe_ = nn::sinusoidal_pe<T>(g.count(), c.embed_dim);
      if (c.arch == Architecture::oc_sa) {
        nn::gaussian_init(params_.add("cls", {c.embed_dim}), 1.0, rng);
        for (int l = 0; l < 2; ++l) {
          const std::string p = "attn" + std::to_string(l);
          linear(p + ".q", c.embed_dim, c.embed_dim, 1.0);
          linear(p + ".k", c.embed_dim, c.embed_dim, 1.0);
          linear(p + ".v", c.embed_dim, c.embed_dim, 1.0);
          post_blocks(p);
        }
      } else {
        nn::gaussian_init(params_.add("slots", {c.n_slots, c.embed_dim}), 1.0, rng);
        linear("attn0.q", c.embed_dim, c.embed_dim, 1.0);
        linear("attn0.k", c.embed_dim, c.embed_dim, 1.0);
        linear("attn0.v", c.embed_dim, c.embed_dim, 1.0);
        post_blocks("attn0");
      }
      head_in = c.embed_dim;
      break;
    }
  }
  linear("pi", head_in, static_cast<int>(kNumActions), 0.01);
  linear("v", head_in, 1, 1.0);
}

template <class T>
PolicyState<T> Policy<T>::initial_state(int n) const {
  PolicyState<T> s;
  if (!is_recurrent(config_.arch)) return s;
  const int h = config_.lstm_dim;
  s.actor = {Tensor<T>::zeros({n, h}), Tensor<T>::zeros({n, h})};
  if (config_.arch == Architecture::lstm_cnn) s.critic = {Tensor<T>::zeros({n, h}), Tensor<T>::zeros({n, h})};
  return s;
}

template <class T>
Tensor<T> Policy<T>::cnn_trunk(const Tensor<T>& obs) const {
  const auto& p = params_;
  Tensor<T> x = nn::relu(nn::conv2d(obs, p.get("cnn0.w"), p.get("cnn0.b"), 4, 0));
  x = nn::relu(nn::conv2d(x, p.get("cnn1.w"), p.get("cnn1.b"), 2, 0));
  return nn::relu(nn::conv2d(x, p.get("cnn2.w"), p.get("cnn2.b"), 1, 0));
}

template <class T>
Tensor<T> Policy<T>::spcnn_trunk(const Tensor<T>& obs) const {
  Tensor<T> x = obs;
  for (int i = 0; i < config_.spcnn_layers; ++i) {
    const std::string n = "spcnn" + std::to_string(i);
    x = nn::relu(nn::conv2d(x, params_.get(n + ".w"), params_.get(n + ".b"), 1, 2));
  }
  return x;
}

template <class T>
Tensor<T> Policy<T>::post_attention(const Tensor<T>& x, const std::string& prefix) const {
  Tensor<T> y = x;
  if (config_.use_layernorm) y = nn::layernorm(y, params_.get(prefix + ".ln.gamma"), params_.get(prefix + ".ln.beta"));
  if (config_.use_residual_mlp)
    y = nn::residual_mlp(y, params_.get(prefix + ".mlp1.w"), params_.get(prefix + ".mlp1.b"),
                         params_.get(prefix + ".mlp2.w"), params_.get(prefix + ".mlp2.b"));
  return y;
}

template <class T>
BatchOutput<T> Policy<T>::forward(std::span<const Observation> obs, const PolicyState<T>* state) const {
  return forward(observations_to_tensor<T>(obs), state);
}

template <class T>
BatchOutput<T> Policy<T>::forward(const Tensor<T>& obs, const PolicyState<T>* state) const {
  if (obs.rank() != 4 || obs.dim(1) != 3 || obs.dim(2) != kObsSize || obs.dim(3) != kObsSize)
    throw nn::ShapeError("policy input must be [N, 3, 64, 64], got " + nn::to_string(obs.shape()));
  if (is_object_centric(config_.arch)) return forward_from_patches(encode_patches(obs));
  const auto& p = params_;
  const int n = obs.dim(0);
  const Tensor<T> trunk = uses_spcnn(config_.arch) ? spcnn_trunk(obs) : cnn_trunk(obs);
  const Tensor<T> f = nn::relu(nn::linear(nn::flatten(trunk), p.get("fc.w"), p.get("fc.b")));
  BatchOutput<T> out;
  if (!is_recurrent(config_.arch)) {
    out.logits = nn::linear(f, p.get("pi.w"), p.get("pi.b"));
    out.value = nn::linear(f, p.get("v.w"), p.get("v.b"));
    return out;
  }
  const PolicyState<T> init = state && state->defined() ? PolicyState<T>{} : initial_state(n);
  const PolicyState<T>& s = state && state->defined() ? *state : init;
  if (s.actor.h.dim(0) != n) throw nn::ShapeError("recurrent state batch differs from input batch");
  out.state.actor = nn::lstm_cell(f, s.actor, p.get("actor_lstm.w_ih"), p.get("actor_lstm.w_hh"), p.get("actor_lstm.b"));
  out.logits = nn::linear(out.state.actor.h, p.get("pi.w"), p.get("pi.b"));
  if (config_.arch == Architecture::lstm_cnn) {
    out.state.critic =
        nn::lstm_cell(f, s.critic, p.get("critic_lstm.w_ih"), p.get("critic_lstm.w_hh"), p.get("critic_lstm.b"));
    out.value = nn::linear(out.state.critic.h, p.get("v.w"), p.get("v.b"));
  } else {
    out.value = nn::linear(nn::linear(f, p.get("critic_fc.w"), p.get("critic_fc.b")), p.get("v.w"), p.get("v.b"));
  }
  return out;
}

template <class T>
Tensor<T> Policy<T>::encode_patches(const Tensor<T>& obs) const {
  if (!is_object_centric(config_.arch)) throw UnsupportedError("encode_patches needs an object-centric agent");
  return nn::patch_split(spcnn_trunk(obs), config_.patch_size, config_.stride);
}

template <class T>
BatchOutput<T> Policy<T>::forward_from_patches(const Tensor<T>& patches) const {
  if (!is_object_centric(config_.arch)) throw UnsupportedError("forward_from_patches needs an object-centric agent");
  const auto& c = config_;
  const auto& p = params_;
  const nn::PatchGeom g = nn::patch_geometry(kObsSize, kObsSize, c.patch_size, c.stride);
  if (patches.rank() != 3 || patches.dim(1) != g.count() || patches.dim(2) != c.spcnn_channels * c.patch_size * c.patch_size)
    throw nn::ShapeError("patch tokens have shape " + nn::to_string(patches.shape()));
  const int n = patches.dim(0), k = g.count();
  Tensor<T> tokens = nn::linear(patches, p.get("proj.w"), p.get("proj.b"));
  if (c.use_positional_embeddings) tokens = nn::add_trailing(tokens, pe_);
  BatchOutput<T> out;
  out.geom = g;
  Tensor<T> pooled;
  if (c.arch == Architecture::oc_sa) {
    Tensor<T> x = nn::append_token(tokens, p.get("cls"));
    for (int l = 0; l < 2; ++l) {
      const std::string pre = "attn" + std::to_string(l);
      auto r = nn::attention(nn::linear(x, p.get(pre + ".q.w"), p.get(pre + ".q.b")),
                             nn::linear(x, p.get(pre + ".k.w"), p.get(pre + ".k.b")),
                             nn::linear(x, p.get(pre + ".v.w"), p.get(pre + ".v.b")), c.n_heads);
      x = post_attention(r.out, pre);
      out.attention.push_back({std::move(r), true});
    }
    pooled = nn::select_token(x, k);
  } else {
    const Tensor<T> q = nn::expand_batch(nn::linear(p.get("slots"), p.get("attn0.q.w"), p.get("attn0.q.b")), n);
    auto r = nn::attention(q, nn::linear(tokens, p.get("attn0.k.w"), p.get("attn0.k.b")),
                           nn::linear(tokens, p.get("attn0.v.w"), p.get("attn0.v.b")), c.n_heads,
                           c.use_slot_competition ? nn::SoftmaxAxis::queries : nn::SoftmaxAxis::keys);
    pooled = nn::mean_tokens(post_attention(r.out, "attn0"));
    out.attention.push_back({std::move(r), false});
  }
  out.logits = nn::linear(pooled, p.get("pi.w"), p.get("pi.b"));
  out.value = nn::linear(pooled, p.get("v.w"), p.get("v.b"));
  return out;
}

template <class T>
PolicyOutput Policy<T>::forward_one(const Observation& obs, PolicyState<T>* state) const {
  nn::NoGrad guard;
  const auto out = forward(std::span<const Observation>(&obs, 1), state);
  PolicyOutput res;
  for (std::size_t i = 0; i < kNumActions; ++i) res.logits[i] = static_cast<float>(out.logits[i]);
  res.value = static_cast<float>(out.value.item());
  if (state && is_recurrent(config_.arch)) *state = out.state;
  if (is_object_centric(config_.arch)) res.attention = extract_attention(config_, out, 0);
  return res;
}

template <class T>
PolicyState<T> mask_state(const PolicyState<T>& s, std::span<const T> keep) {
  PolicyState<T> out;
  if (!s.defined()) return out;
  out.actor = {nn::scale_rows(s.actor.h, keep), nn::scale_rows(s.actor.c, keep)};
  if (s.critic.h.defined()) out.critic = {nn::scale_rows(s.critic.h, keep), nn::scale_rows(s.critic.c, keep)};
  return out;
}

template <class T>
std::vector<AttentionMap> extract_attention(const AgentConfig& config, const BatchOutput<T>& out, int index) {
  if (!is_object_centric(config.arch))
    throw UnsupportedError(std::string(name(config.arch)) + " has no attention to extract");
  if (out.attention.empty()) throw UnsupportedError("output carries no attention weights");
  const auto& last = out.attention.back();
  const auto& r = last.result;
  const std::size_t per_sample = static_cast<std::size_t>(r.heads * r.queries * r.keys);
  if (index < 0 || static_cast<std::size_t>(index + 1) * per_sample > r.weights.size())
    throw std::out_of_range("attention sample index out of range");
  const T* w = r.weights.data() + per_sample * static_cast<std::size_t>(index);
  AttentionMap m;
  m.layer = static_cast<int>(out.attention.size()) - 1;
  m.heads = r.heads;
  m.geom = out.geom;
  if (last.cls_readout) {
    const int k = r.keys - 1;
    m.rows = 1;
    m.keys = k;
    m.weights.resize(static_cast<std::size_t>(r.heads * k));
    for (int h = 0; h < r.heads; ++h) {
      const T* row = w + static_cast<std::size_t>((h * r.queries + k) * r.keys);
      double total = 0;
      for (int j = 0; j < k; ++j) total += static_cast<double>(row[j]);
      for (int j = 0; j < k; ++j) m.weights[static_cast<std::size_t>(h * k + j)] = static_cast<double>(row[j]) / total;
    }
  } else {
    m.rows = r.queries;
    m.keys = r.keys;
    m.columns_stochastic = config.use_slot_competition;
    m.weights.assign(w, w + per_sample);
  }
  return {std::move(m)};
}

std::vector<double> attention_heatmap(const AttentionMap& map, int size) {
  const auto& g = map.geom;
  if (g.count() != map.keys) throw nn::ShapeError("attention map keys do not match its patch grid");
  std::vector<double> per_key(static_cast<std::size_t>(map.keys), 0.0);
  for (int h = 0; h < map.heads; ++h)
    for (int r = 0; r < map.rows; ++r)
      for (int k = 0; k < map.keys; ++k) per_key[static_cast<std::size_t>(k)] += map.at(h, r, k);
  std::vector<double> sum(static_cast<std::size_t>(g.height * g.width), 0.0), cover(sum.size(), 0.0);
  const int gw = g.grid_w();
  for (int k = 0; k < map.keys; ++k) {
    const int y0 = (k / gw) * g.stride, x0 = (k % gw) * g.stride;
    for (int y = y0; y < y0 + g.patch; ++y)
      for (int x = x0; x < x0 + g.patch; ++x) {
        sum[static_cast<std::size_t>(y * g.width + x)] += per_key[static_cast<std::size_t>(k)];
        cover[static_cast<std::size_t>(y * g.width + x)] += 1.0;
      }
  }
  std::vector<double> heat(static_cast<std::size_t>(size * size), 0.0);
  double peak = 0.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int sy = y * g.height / size, sx = x * g.width / size;
      const auto s = static_cast<std::size_t>(sy * g.width + sx);
      const double v = cover[s] > 0 ? sum[s] / cover[s] : 0.0;
      heat[static_cast<std::size_t>(y * size + x)] = v;
      peak = std::max(peak, v);
    }
  if (peak > 0)
    for (double& v : heat) v /= peak;
  return heat;
}

Image attention_overlay(const Observation& obs, std::span<const double> heat) {
  if (heat.size() != static_cast<std::size_t>(kObsSize * kObsSize)) throw nn::ShapeError("heatmap must be 64x64");
  Image img(kObsSize, kObsSize);
  for (int y = 0; y < kObsSize; ++y)
    for (int x = 0; x < kObsSize; ++x) {
      const double f = 0.15 + 0.85 * heat[static_cast<std::size_t>(y * kObsSize + x)];
      const Rgb c = obs.at(x, y);
      auto scale = [f](std::uint8_t v) { return static_cast<std::uint8_t>(std::lround(v * f)); };
      img.put(x, y, {scale(c.r), scale(c.g), scale(c.b)});
    }
  return img;
}

Image heat_image(std::span<const double> heat, int size) {
  Image img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const auto v = static_cast<std::uint8_t>(std::lround(255.0 * heat[static_cast<std::size_t>(y * size + x)]));
      img.put(x, y, {v, v, v});
    }
  return img;
}

template Tensor<float> observations_to_tensor<float>(std::span<const Observation>);
template Tensor<double> observations_to_tensor<double>(std::span<const Observation>);
template class Policy<float>;
template class Policy<double>;
template PolicyState<float> mask_state<float>(const PolicyState<float>&, std::span<const float>);
template PolicyState<double> mask_state<double>(const PolicyState<double>&, std::span<const double>);
template std::vector<AttentionMap> extract_attention<float>(const AgentConfig&, const BatchOutput<float>&, int);
template std::vector<AttentionMap> extract_attention<double>(const AgentConfig&, const BatchOutput<double>&, int);

}  // namespace crafter::agents

#pragma once

// LighTN sampler: shared linear embedding, single-head self-correlation block
// (or an ablation attention variant), columnwise max pooling, and an
// expand-reduce FFN that emits m points.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lightn/checkpoint.hpp"
#include "lightn/errors.hpp"
#include "lightn/matrix.hpp"
#include "lightn/ops.hpp"
#include "lightn/pointcloud.hpp"
#include "lightn/rng.hpp"
#include "lightn/tape.hpp"

namespace lightn {

enum class AttentionVariant { self_correlation, qkv_full, q_removed, kv_removed };

inline std::string to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::self_correlation: return "self_correlation";
    case AttentionVariant::qkv_full: return "qkv_full";
    case AttentionVariant::q_removed: return "q_removed";
    case AttentionVariant::kv_removed: return "kv_removed";
  }
  return "unknown";
}

inline AttentionVariant parse_attention_variant(const std::string& s) {
  if (s == "self_correlation") return AttentionVariant::self_correlation;
  if (s == "qkv_full") return AttentionVariant::qkv_full;
  if (s == "q_removed") return AttentionVariant::q_removed;
  if (s == "kv_removed") return AttentionVariant::kv_removed;
  throw ConfigError("unknown attention variant '" + s + "'");
}

struct AttentionConfig {
  AttentionVariant variant = AttentionVariant::self_correlation;
  std::size_t heads = 1;
  std::size_t scale_factor_a = 1;  // Q/K width is model_dim / a (qkv_full only)
  std::size_t model_dim = 64;

  bool has_query_proj() const {
    return variant == AttentionVariant::qkv_full || variant == AttentionVariant::kv_removed;
  }
  bool has_key_value_proj() const {
    return variant == AttentionVariant::qkv_full || variant == AttentionVariant::q_removed;
  }
  // Width of the query/key vectors entering the score product.
  std::size_t score_dim() const {
    return variant == AttentionVariant::qkv_full ? model_dim / scale_factor_a : model_dim;
  }

  void validate() const {
    if (model_dim < 1) throw ConfigError("attention: model_dim must be >= 1");
    if (heads < 1) throw ConfigError("attention: heads must be >= 1");
    if (scale_factor_a < 1 || model_dim % scale_factor_a != 0) {
      throw ConfigError("attention: scale factor a must divide model_dim");
    }
    if (variant == AttentionVariant::self_correlation && heads != 1) {
      throw ConfigError("attention: self_correlation is single-head");
    }
    if (variant != AttentionVariant::qkv_full && scale_factor_a != 1) {
      throw ConfigError("attention: scale factor a applies to qkv_full only");
    }
  }
};

// Hidden widths of the generation head; the output layer (m x 3) is implicit.
// Default: the expand-reduce head d_o -> 512 -> 256 -> 3m.
struct FfnConfig {
  std::vector<std::size_t> hidden{512, 256};

  // Two linear layers L(512, 3m).
  static FfnConfig two_layer(std::size_t d_f = 512) { return FfnConfig{{d_f}}; }

  // `layers` linear layers in total. With middle_only the reduction ratio r is
  // applied once, to the layer after the first (d_f -> d_f / r); otherwise every
  // hidden layer after the first shrinks by another factor of r, starting from d_f / r.
  static FfnConfig expand_reduce(std::size_t layers, std::size_t r, bool middle_only = true, std::size_t d_f = 512) {
    if (layers < 2) throw ConfigError("ffn: at least two layers required");
    if (r < 1) throw ConfigError("ffn: reduction ratio must be >= 1");
    FfnConfig c;
    c.hidden.clear();
    if (middle_only) {
      c.hidden.push_back(d_f);
      for (std::size_t l = 2; l < layers; ++l) c.hidden.push_back(d_f / r);
    } else {
      std::size_t w = d_f / r;
      for (std::size_t l = 1; l < layers; ++l) {
        c.hidden.push_back(w);
        w = std::max<std::size_t>(1, w / r);
      }
    }
    return c;
  }
};

struct SamplerConfig {
  std::size_t num_samples = 32;  // m
  AttentionConfig attention{};
  FfnConfig ffn{};

  std::size_t model_dim() const { return attention.model_dim; }

  void validate() const {
    if (num_samples < 1) throw ConfigError("sampler: m must be >= 1");
    attention.validate();
    for (std::size_t w : ffn.hidden)
      if (w < 1) throw ConfigError("ffn: hidden widths must be >= 1");
  }
};

struct DenseLayer {
  Matrix w;  // fan_in x fan_out
  Matrix b;  // 1 x fan_out
};

struct AttentionHeadParams {
  Matrix wq;  // empty when the query projection is removed
  Matrix wk;  // empty when key/value projections are removed
  Matrix wv;
};

struct SamplerParams {
  SamplerConfig config;
  Matrix embed_w;  // 3 x d_o
  Matrix embed_b;  // 1 x d_o
  std::vector<AttentionHeadParams> heads;  // empty for self_correlation
  Matrix fc_out_w;  // (heads * d_o) x d_o
  Matrix fc_out_b;  // 1 x d_o
  Matrix ln_gain;   // 1 x d_o
  Matrix ln_shift;  // 1 x d_o
  std::vector<DenseLayer> ffn;
  Matrix temperature = Matrix::scalar(1.0);  // learnable t > 0

  double t() const { return temperature[0]; }

  // Every learnable block with a stable name, in a fixed order.
  std::vector<std::pair<std::string, Matrix*>> tensors() {
    std::vector<std::pair<std::string, Matrix*>> out;
    out.emplace_back("embed_w", &embed_w);
    out.emplace_back("embed_b", &embed_b);
    for (std::size_t h = 0; h < heads.size(); ++h) {
      const std::string p = "head" + std::to_string(h) + ".";
      if (!heads[h].wq.empty()) out.emplace_back(p + "wq", &heads[h].wq);
      if (!heads[h].wk.empty()) out.emplace_back(p + "wk", &heads[h].wk);
      if (!heads[h].wv.empty()) out.emplace_back(p + "wv", &heads[h].wv);
    }
    out.emplace_back("fc_out_w", &fc_out_w);
    out.emplace_back("fc_out_b", &fc_out_b);
    out.emplace_back("ln_gain", &ln_gain);
    out.emplace_back("ln_shift", &ln_shift);
    for (std::size_t l = 0; l < ffn.size(); ++l) {
      out.emplace_back("ffn" + std::to_string(l) + ".w", &ffn[l].w);
      out.emplace_back("ffn" + std::to_string(l) + ".b", &ffn[l].b);
    }
    out.emplace_back("temperature", &temperature);
    return out;
  }

  std::vector<std::pair<std::string, const Matrix*>> tensors() const {
    std::vector<std::pair<std::string, const Matrix*>> out;
    for (auto& [n, m] : const_cast<SamplerParams*>(this)->tensors()) out.emplace_back(n, m);
    return out;
  }

  // Learnable scalars, excluding the temperature.
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, m] : tensors())
      if (name != "temperature") n += m->size();
    return n;
  }

  friend bool operator==(const SamplerParams& a, const SamplerParams& b) {
    auto ta = a.tensors();
    auto tb = b.tensors();
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i)
      if (ta[i].first != tb[i].first || !(*ta[i].second == *tb[i].second)) return false;
    return true;
  }

  // Keeps t strictly positive after an optimizer step.
  void clamp_temperature(double floor = 1e-6) {
    if (!(temperature[0] > floor)) temperature[0] = floor;
  }
};

namespace detail {
inline Matrix uniform_matrix(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  Matrix m(fan_in, fan_out);
  for (double& v : m.data()) v = rng.uniform(-bound, bound);
  return m;
}
}  // namespace detail

// Weights ~ U[-sqrt(1/fan_in), +sqrt(1/fan_in)], biases zero, layer-norm gain
// one, t = 1.
inline SamplerParams init_params(std::uint64_t seed, const SamplerConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t d = cfg.model_dim();
  SamplerParams p;
  p.config = cfg;
  p.embed_w = detail::uniform_matrix(rng, 3, d);
  p.embed_b = Matrix(1, d);
  const AttentionConfig& ac = cfg.attention;
  if (ac.variant != AttentionVariant::self_correlation) {
    for (std::size_t h = 0; h < ac.heads; ++h) {
      AttentionHeadParams hp;
      if (ac.has_query_proj()) hp.wq = detail::uniform_matrix(rng, d, ac.score_dim());
      if (ac.has_key_value_proj()) {
        hp.wk = detail::uniform_matrix(rng, d, ac.score_dim());
        hp.wv = detail::uniform_matrix(rng, d, d);
      }
      p.heads.push_back(std::move(hp));
    }
  }
  p.fc_out_w = detail::uniform_matrix(rng, ac.heads * d, d);
  p.fc_out_b = Matrix(1, d);
  p.ln_gain = Matrix(1, d, 1.0);
  p.ln_shift = Matrix(1, d);
  std::size_t fan_in = d;
  for (std::size_t w : cfg.ffn.hidden) {
    p.ffn.push_back({detail::uniform_matrix(rng, fan_in, w), Matrix(1, w)});
    fan_in = w;
  }
  p.ffn.push_back({detail::uniform_matrix(rng, fan_in, 3 * cfg.num_samples), Matrix(1, 3 * cfg.num_samples)});
  p.temperature = Matrix::scalar(1.0);
  return p;
}

// SamplerParams bound to tape leaves for one forward/backward pass.
struct SamplerVars {
  const SamplerParams* params = nullptr;
  Var embed_w, embed_b;
  struct Head {
    Var wq, wk, wv;
  };
  std::vector<Head> heads;
  Var fc_out_w, fc_out_b, ln_gain, ln_shift;
  std::vector<std::pair<Var, Var>> ffn;
  Var temperature;

  // Leaves in the same order as SamplerParams::tensors().
  std::vector<Var> leaves() const {
    std::vector<Var> out{embed_w, embed_b};
    for (const Head& h : heads) {
      if (h.wq.valid()) out.push_back(h.wq);
      if (h.wk.valid()) out.push_back(h.wk);
      if (h.wv.valid()) out.push_back(h.wv);
    }
    out.insert(out.end(), {fc_out_w, fc_out_b, ln_gain, ln_shift});
    for (const auto& [w, b] : ffn) out.insert(out.end(), {w, b});
    out.push_back(temperature);
    return out;
  }
};

inline SamplerVars bind(Tape& tape, const SamplerParams& p, bool requires_grad = true) {
  SamplerVars v;
  v.params = &p;
  v.embed_w = tape.leaf(p.embed_w, requires_grad);
  v.embed_b = tape.leaf(p.embed_b, requires_grad);
  for (const AttentionHeadParams& h : p.heads) {
    SamplerVars::Head hv;
    if (!h.wq.empty()) hv.wq = tape.leaf(h.wq, requires_grad);
    if (!h.wk.empty()) hv.wk = tape.leaf(h.wk, requires_grad);
    if (!h.wv.empty()) hv.wv = tape.leaf(h.wv, requires_grad);
    v.heads.push_back(hv);
  }
  v.fc_out_w = tape.leaf(p.fc_out_w, requires_grad);
  v.fc_out_b = tape.leaf(p.fc_out_b, requires_grad);
  v.ln_gain = tape.leaf(p.ln_gain, requires_grad);
  v.ln_shift = tape.leaf(p.ln_shift, requires_grad);
  for (const DenseLayer& l : p.ffn) v.ffn.emplace_back(tape.leaf(l.w, requires_grad), tape.leaf(l.b, requires_grad));
  v.temperature = tape.leaf(p.temperature, requires_grad);
  return v;
}

// N x 3 points -> N x d_o features through one shared linear layer.
inline Var input_embed(const Var& points, const SamplerVars& v) {
  if (points.cols() != 3) {
    throw ContractError("input_embed: expected 3 coordinates per point, got " + std::to_string(points.cols()));
  }
  return linear(points, v.embed_w, v.embed_b);
}

// softmax(X X^T / sqrt(d)) X, the projection-free attention core.
inline Var self_correlation_core(const Var& x) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(x.cols()));
  return matmul(row_softmax(scale(gram(x), inv_sqrt_d)), x);
}

// Attention output before FC_out. For qkv_full with several heads the head
// outputs are concatenated.
inline Var attention_core(const Var& x, const AttentionConfig& cfg, const SamplerVars& v) {
  cfg.validate();
  if (cfg.variant == AttentionVariant::self_correlation) return self_correlation_core(x);
  if (v.heads.size() != cfg.heads) throw ConfigError("attention: head weights do not match config");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.score_dim()));
  std::vector<Var> outs;
  for (const SamplerVars::Head& h : v.heads) {
    const Var q = cfg.has_query_proj() ? matmul(x, h.wq) : x;
    const Var k = cfg.has_key_value_proj() ? matmul(x, h.wk) : x;
    const Var val = cfg.has_key_value_proj() ? matmul(x, h.wv) : x;
    const Var scores = row_softmax(scale(matmul(q, transpose(k)), inv_sqrt));
    outs.push_back(matmul(scores, val));
  }
  return outs.size() == 1 ? outs.front() : concat_cols(outs);
}

// FC_out applied to the attention core.
inline Var attention_variant(const Var& x, const AttentionConfig& cfg, const SamplerVars& v) {
  return linear(attention_core(x, cfg, v), v.fc_out_w, v.fc_out_b);
}

// Full block: LayerNorm(FC_out(C(X)) + X).
inline Var attention_block(const Var& x, const SamplerVars& v) {
  const AttentionConfig& cfg = v.params->config.attention;
  return layer_norm(add(attention_variant(x, cfg, v), x), v.ln_gain, v.ln_shift);
}

inline Var self_correlation(const Var& x, const SamplerVars& v) {
  if (v.params->config.attention.variant != AttentionVariant::self_correlation) {
    throw ConfigError("self_correlation: parameters were built for another variant");
  }
  return attention_block(x, v);
}

// Columnwise max over points -> 1 x d_o.
inline Var pool_global(const Var& x) { return max_over_rows(x); }

// 1 x d_o global feature -> m x 3 generated points.
inline Var ffn_generate(const Var& g, const SamplerVars& v, std::size_t m) {
  if (v.ffn.empty()) throw ConfigError("ffn: no layers");
  if (v.ffn.back().first.cols() != 3 * m) {
    throw ConfigError("ffn: last layer width " + std::to_string(v.ffn.back().first.cols()) + " does not equal 3m = " +
                      std::to_string(3 * m));
  }
  Var h = g;
  for (std::size_t l = 0; l < v.ffn.size(); ++l) {
    h = linear(h, v.ffn[l].first, v.ffn[l].second);
    if (l + 1 < v.ffn.size()) h = relu(h);
  }
  return reshape(h, m, 3);
}

// embed -> attention block -> max pool -> FFN. No positional encoding.
inline Var forward(const Var& points, const SamplerVars& v) {
  const Var x = input_embed(points, v);
  const Var y = attention_block(x, v);
  return ffn_generate(pool_global(y), v, v.params->config.num_samples);
}

// Generated points for one cloud, evaluated on a scratch tape.
inline PointCloud generate(const PointCloud& p, const SamplerParams& params) {
  p.validate();
  Tape tape;
  const SamplerVars v = bind(tape, params, false);
  return PointCloud::from_matrix(forward(tape.constant(p.to_matrix()), v).value());
}

// ---------------------------------------------------------------------------
// Checkpoint

inline Checkpoint to_checkpoint(const SamplerParams& p) {
  Checkpoint ck;
  const SamplerConfig& c = p.config;
  ck.set_meta("kind", "sampler");
  ck.set_meta("num_samples", std::to_string(c.num_samples));
  ck.set_meta("model_dim", std::to_string(c.attention.model_dim));
  ck.set_meta("variant", to_string(c.attention.variant));
  ck.set_meta("heads", std::to_string(c.attention.heads));
  ck.set_meta("scale_factor_a", std::to_string(c.attention.scale_factor_a));
  std::string hidden;
  for (std::size_t w : c.ffn.hidden) hidden += (hidden.empty() ? "" : ",") + std::to_string(w);
  ck.set_meta("ffn_hidden", hidden);
  for (const auto& [name, m] : p.tensors()) ck.tensors.emplace_back(name, *m);
  return ck;
}

inline SamplerParams sampler_from_checkpoint(const Checkpoint& ck) {
  if (ck.get_meta("kind") != "sampler") throw FormatError("checkpoint is not a sampler checkpoint");
  SamplerConfig c;
  c.num_samples = std::stoul(ck.get_meta("num_samples"));
  c.attention.model_dim = std::stoul(ck.get_meta("model_dim"));
  c.attention.variant = parse_attention_variant(ck.get_meta("variant"));
  c.attention.heads = std::stoul(ck.get_meta("heads"));
  c.attention.scale_factor_a = std::stoul(ck.get_meta("scale_factor_a"));
  c.ffn.hidden.clear();
  std::stringstream hs(ck.get_meta("ffn_hidden"));
  for (std::string tok; std::getline(hs, tok, ',');)
    if (!tok.empty()) c.ffn.hidden.push_back(std::stoul(tok));
  SamplerParams p = init_params(0, c);
  for (auto& [name, m] : p.tensors()) {
    const Matrix& src = ck.tensor(name);
    if (!src.same_shape(*m)) {
      throw FormatError("checkpoint: tensor '" + name + "' has shape " + src.shape() + ", expected " + m->shape());
    }
    *m = src;
  }
  return p;
}

}  // namespace lightn

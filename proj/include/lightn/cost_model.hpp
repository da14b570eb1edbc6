#pragma once

// Analytic compute and storage cost of the sampler and the task networks.
//
// Convention: the *_macs functions count multiply-accumulates of the dense
// products. A CostReport converts them at 1 MAC = 2 FLOPs and adds softmax at
// 4 FLOPs per element. Bias adds, activations and normalization are not counted.

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "lightn/errors.hpp"
#include "lightn/model.hpp"
#include "lightn/rng.hpp"
#include "lightn/task_head.hpp"
#include "lightn/tape.hpp"

namespace lightn {

inline constexpr std::uint64_t kFlopsPerMac = 2;
inline constexpr std::uint64_t kSoftmaxFlopsPerElement = 4;
inline constexpr const char* kCostConvention = "1 MAC = 2 FLOPs; softmax = 4 FLOPs/element; elementwise ops uncounted";

// How the N x N score product of self-correlation is costed. `dense` is the
// plain X X^T; `symmetric` computes the upper triangle only, as gram() does.
enum class ScoreProduct { dense, symmetric };

namespace detail {
inline void require_positive(const char* what, std::initializer_list<std::size_t> v) {
  for (std::size_t x : v)
    if (x < 1) throw DomainError(std::string(what) + ": parameters must be >= 1");
}
}  // namespace detail

// One attention layer including FC_out, counted in MACs.
//   qkv_full, one head, a = 1:  4nd^2 + 2n^2 d
//   heads h:                    h times the single-head count
//   self_correlation:           nd^2 + 2n^2 d   (nd^2 is FC_out)
//   q_removed / kv_removed:     drop the removed projections from 4nd^2
inline std::uint64_t attention_macs(std::size_t n, std::size_t d, std::size_t heads, std::size_t a,
                                    AttentionVariant variant, ScoreProduct scores = ScoreProduct::dense) {
  detail::require_positive("attention_macs", {n, d, heads, a});
  const std::uint64_t N = n, D = d, H = heads;
  const std::uint64_t proj = N * D * D;
  const std::uint64_t fc_out = H * N * D * D;
  switch (variant) {
    case AttentionVariant::self_correlation: {
      const std::uint64_t s = scores == ScoreProduct::dense ? N * N * D : N * (N + 1) / 2 * D;
      return fc_out + s + N * N * D;
    }
    case AttentionVariant::qkv_full: {
      if (d % a != 0) throw DomainError("attention_macs: a must divide d");
      const std::uint64_t ds = D / a;
      return H * (2 * N * D * ds + proj + N * N * ds + N * N * D) + fc_out;
    }
    case AttentionVariant::q_removed: return H * (2 * proj + 2 * N * N * D) + fc_out;
    case AttentionVariant::kv_removed: return H * (proj + 2 * N * N * D) + fc_out;
  }
  throw DomainError("attention_macs: unknown variant");
}

enum class EmbeddingStyle { lightn, reference_pct };

// lightn: one shared layer at width d_o, n d_o^2. reference_pct: two layers at
// d_m = 2 d_o, 2n (2 d_o)^2.
inline std::uint64_t embedding_macs(std::size_t n, std::size_t d_o, EmbeddingStyle style = EmbeddingStyle::lightn) {
  detail::require_positive("embedding_macs", {n, d_o});
  const std::uint64_t N = n, D = d_o;
  return style == EmbeddingStyle::lightn ? N * D * D : 2 * N * (2 * D) * (2 * D);
}

enum class FfnScope { global, per_point };

// Extra cost of the inserted middle layer: n d_f^2 / r^2, with n = 1 when the
// FFN runs on the pooled global feature.
inline std::uint64_t ffn_macs(std::size_t n, std::size_t d_f, std::size_t r, FfnScope scope) {
  detail::require_positive("ffn_macs", {n, d_f, r});
  const std::uint64_t rows = scope == FfnScope::global ? 1 : n;
  return rows * std::uint64_t{d_f} * d_f / (std::uint64_t{r} * r);
}

// Mini task head: per-point shared layers plus the classifier.
inline std::uint64_t task_head_macs(std::size_t n, const std::vector<std::size_t>& widths, std::size_t classes) {
  if (widths.size() < 2) throw DomainError("task_head_macs: need at least two widths");
  std::uint64_t per_point = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) per_point += std::uint64_t{widths[i]} * widths[i + 1];
  return n * per_point + std::uint64_t{widths.back()} * classes;
}

inline std::uint64_t task_head_params(const std::vector<std::size_t>& widths, std::size_t classes) {
  if (widths.size() < 2) throw DomainError("task_head_params: need at least two widths");
  std::uint64_t p = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) p += (std::uint64_t{widths[i]} + 1) * widths[i + 1];
  return p + (std::uint64_t{widths.back()} + 1) * classes;
}

// ---------------------------------------------------------------------------
// Reports

struct CostStage {
  std::string name;
  std::uint64_t macs = 0;
  std::uint64_t extra_flops = 0;  // non-MAC work such as softmax
  std::uint64_t params = 0;
  std::uint64_t flops() const { return kFlopsPerMac * macs + extra_flops; }
  friend bool operator==(const CostStage&, const CostStage&) = default;
};

struct CostReport {
  std::string config;
  std::size_t n = 0;  // points entering the network
  std::size_t m = 0;  // sampled points (0 when not applicable)
  std::vector<CostStage> breakdown;

  std::uint64_t macs() const {
    std::uint64_t s = 0;
    for (const CostStage& st : breakdown) s += st.macs;
    return s;
  }
  std::uint64_t flops() const {
    std::uint64_t s = 0;
    for (const CostStage& st : breakdown) s += st.flops();
    return s;
  }
  std::uint64_t params() const {
    std::uint64_t s = 0;
    for (const CostStage& st : breakdown) s += st.params;
    return s;
  }
  friend bool operator==(const CostReport&, const CostReport&) = default;
};

namespace detail {
inline CostStage dense_stage(std::string name, std::size_t rows, const std::vector<std::size_t>& widths) {
  CostStage s{std::move(name), 0, 0, 0};
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    s.macs += std::uint64_t{rows} * widths[i] * widths[i + 1];
    s.params += (std::uint64_t{widths[i]} + 1) * widths[i + 1];
  }
  return s;
}
}  // namespace detail

// Cost of the sampler as built by init_params/forward on an n-point cloud.
// Self-correlation is costed with the symmetric score product that gram() uses.
inline CostReport sampler_cost(const SamplerConfig& cfg, std::size_t n) {
  cfg.validate();
  detail::require_positive("sampler_cost", {n});
  const AttentionConfig& a = cfg.attention;
  const std::uint64_t d = a.model_dim, h = a.heads;
  CostReport r;
  r.config = "lightn_" + to_string(a.variant);
  r.n = n;
  r.m = cfg.num_samples;
  r.breakdown.push_back(detail::dense_stage("embedding", n, {3, a.model_dim}));

  CostStage attn{"attention", 0, 0, 0};
  attn.macs = attention_macs(n, a.model_dim, a.heads, a.scale_factor_a, a.variant, ScoreProduct::symmetric);
  const std::uint64_t heads_run = a.variant == AttentionVariant::self_correlation ? 1 : h;
  attn.extra_flops = kSoftmaxFlopsPerElement * heads_run * n * n;
  std::uint64_t proj = 0;
  if (a.variant != AttentionVariant::self_correlation) {
    const std::uint64_t ds = a.score_dim();
    if (a.has_query_proj()) proj += d * ds;
    if (a.has_key_value_proj()) proj += d * ds + d * d;
  }
  attn.params = h * proj + (heads_run * d + 1) * d + 2 * d;  // projections, FC_out, LayerNorm
  r.breakdown.push_back(attn);

  std::vector<std::size_t> widths{a.model_dim};
  widths.insert(widths.end(), cfg.ffn.hidden.begin(), cfg.ffn.hidden.end());
  widths.push_back(3 * cfg.num_samples);
  r.breakdown.push_back(detail::dense_stage("ffn", 1, widths));
  return r;
}

inline CostReport task_head_cost(std::size_t n, const std::vector<std::size_t>& widths, std::size_t classes) {
  CostReport r;
  r.config = "task_head";
  r.n = n;
  r.breakdown.push_back(detail::dense_stage("shared_mlp", n, widths));
  r.breakdown.push_back(detail::dense_stage("classifier", 1, {widths.back(), classes}));
  return r;
}

// Standard PointNet classifier: input and feature transform nets, shared MLPs
// 3-64-64 and 64-64-128-1024, classifier FC 1024-512-256-classes. Weights and
// biases are counted; batch-norm parameters are not.
inline CostReport pointnet_full_cost(std::size_t n, std::size_t classes = 40) {
  detail::require_positive("pointnet_full_cost", {n, classes});
  const std::uint64_t N = n;
  CostReport r;
  r.config = "pointnet_full";
  r.n = n;
  auto add = [&](CostStage s) { r.breakdown.push_back(std::move(s)); };
  add(detail::dense_stage("input_tnet_mlp", n, {3, 64, 128, 1024}));
  add(detail::dense_stage("input_tnet_fc", 1, {1024, 512, 256, 9}));
  add({"input_transform", N * 3 * 3, 0, 0});
  add(detail::dense_stage("mlp1", n, {3, 64, 64}));
  add(detail::dense_stage("feature_tnet_mlp", n, {64, 64, 128, 1024}));
  add(detail::dense_stage("feature_tnet_fc", 1, {1024, 512, 256, 64 * 64}));
  add({"feature_transform", N * 64 * 64, 0, 0});
  add(detail::dense_stage("mlp2", n, {64, 64, 128, 1024}));
  add(detail::dense_stage("classifier", 1, {1024, 512, 256, classes}));
  return r;
}

// ---------------------------------------------------------------------------
// Budget

// Exact fraction of signed integers, kept in lowest terms with den > 0.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Ratio make(std::int64_t num, std::int64_t den) {
    if (den == 0) throw DomainError("ratio: zero denominator");
    if (den < 0) num = -num, den = -den;
    const std::int64_t g = std::gcd(num, den);
    return g > 1 ? Ratio{num / g, den / g} : Ratio{num, den};
  }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

struct BudgetResult {
  bool within = false;     // both conditions hold
  bool flops_ok = false;   // flops(sampler) + flops(task at m) < flops(task at n)
  bool params_ok = false;  // sampler + task params within the storage budget
  Ratio flops_reduction;   // 1 - (sampler + task at m) / task at n
  Ratio params_increase;   // sampler params / task params
};

inline BudgetResult budget_check(const CostReport& sampler, const CostReport& task_at_m, const CostReport& task_at_n,
                                 std::optional<std::uint64_t> param_budget = std::nullopt) {
  if (task_at_n.flops() == 0) throw DomainError("budget_check: reference cost is zero");
  const auto used = static_cast<std::int64_t>(sampler.flops() + task_at_m.flops());
  const auto ref = static_cast<std::int64_t>(task_at_n.flops());
  BudgetResult b;
  b.flops_ok = used < ref;
  b.params_ok = !param_budget || sampler.params() + task_at_m.params() <= *param_budget;
  b.within = b.flops_ok && b.params_ok;
  b.flops_reduction = Ratio::make(ref - used, ref);
  b.params_increase = task_at_n.params() ? Ratio::make(static_cast<std::int64_t>(sampler.params()),
                                                       static_cast<std::int64_t>(task_at_n.params()))
                                         : Ratio{};
  return b;
}

// Sampler at n points feeding a task network at m points, against the task
// network at full resolution.
struct PipelineCost {
  CostReport sampler;
  CostReport task_at_m;
  CostReport task_at_n;
  BudgetResult budget;
};

using TaskCostFn = std::function<CostReport(std::size_t n)>;

inline PipelineCost pipeline_cost(const SamplerConfig& cfg, std::size_t n, const TaskCostFn& task) {
  PipelineCost p{sampler_cost(cfg, n), task(cfg.num_samples), task(n), {}};
  p.budget = budget_check(p.sampler, p.task_at_m, p.task_at_n);
  return p;
}

// ---------------------------------------------------------------------------
// Instrumentation

// MACs executed by one sampler forward pass on a random n-point cloud.
inline std::uint64_t instrument_count(const SamplerParams& params, std::size_t n, std::uint64_t seed = 1) {
  Rng rng(seed);
  Matrix pts(n, 3);
  for (double& v : pts.data()) v = rng.uniform(-1.0, 1.0);
  Tape tape;
  const SamplerVars v = bind(tape, params, false);
  const Var input = tape.constant(std::move(pts));
  const instrument::MacScope scope;
  forward(input, v);
  return scope.count();
}

inline std::uint64_t instrument_count(const TaskParams& params, std::size_t n, std::uint64_t seed = 1) {
  Rng rng(seed);
  Matrix pts(n, 3);
  for (double& v : pts.data()) v = rng.uniform(-1.0, 1.0);
  Tape tape;
  const TaskVars v = bind(tape, params, false);
  const Var input = tape.constant(std::move(pts));
  const instrument::MacScope scope;
  task_forward(input, v);
  return scope.count();
}

// ---------------------------------------------------------------------------
// Tabular output

inline std::string format_pct(const Ratio& r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", 100.0 * r.value());
  return buf;
}

inline std::string cost_csv_header() { return "config,N,m,flops,params,reduction_pct,increase_pct\n"; }

// One row per pipeline: flops and params are sampler + task at m.
inline std::string cost_csv_row(const PipelineCost& p) {
  return p.sampler.config + "+" + p.task_at_m.config + "," + std::to_string(p.task_at_n.n) + "," +
         std::to_string(p.sampler.m) + "," + std::to_string(p.sampler.flops() + p.task_at_m.flops()) + "," +
         std::to_string(p.sampler.params() + p.task_at_m.params()) + "," + format_pct(p.budget.flops_reduction) +
         "," + format_pct(p.budget.params_increase) + "\n";
}

}  // namespace lightn

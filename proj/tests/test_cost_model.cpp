#include <gtest/gtest.h>

#include <cmath>

#include "lightn/cost_model.hpp"
#include "test_util.hpp"

using namespace lightn;
using lightn::test::random_matrix;

namespace {

SamplerConfig small_config(std::size_t d, std::size_t m, AttentionVariant v, std::size_t heads = 1,
                           std::size_t a = 1) {
  SamplerConfig c;
  c.num_samples = m;
  c.attention.variant = v;
  c.attention.heads = heads;
  c.attention.scale_factor_a = a;
  c.attention.model_dim = d;
  c.ffn.hidden = {8, 4};
  return c;
}

// Per-point and pooled layer widths of the reference classifier, listed flat.
std::uint64_t pointnet_macs_by_hand(std::uint64_t n) {
  std::uint64_t per_point = 0, pooled = 0;
  auto chain = [](std::initializer_list<std::uint64_t> w) {
    std::uint64_t s = 0;
    for (auto it = w.begin(); it + 1 != w.end(); ++it) s += *it * *(it + 1);
    return s;
  };
  per_point += chain({3, 64, 128, 1024}) + 9;          // input transform net + 3x3 apply
  per_point += chain({3, 64, 64});                     // first shared mlp
  per_point += chain({64, 64, 128, 1024}) + 64 * 64;   // feature transform net + 64x64 apply
  per_point += chain({64, 64, 128, 1024});             // second shared mlp
  pooled += chain({1024, 512, 256, 9}) + chain({1024, 512, 256, 4096}) + chain({1024, 512, 256, 40});
  return n * per_point + pooled;
}

}  // namespace

TEST(Formulas, ReferenceValues) {
  EXPECT_EQ(attention_macs(1024, 64, 1, 1, AttentionVariant::qkv_full), 150994944u);
  EXPECT_EQ(attention_macs(1024, 64, 2, 1, AttentionVariant::qkv_full), 2u * 150994944u);
  EXPECT_EQ(attention_macs(1024, 64, 1, 1, AttentionVariant::self_correlation), 138412032u);
  EXPECT_EQ(embedding_macs(1024, 64), 4194304u);
  EXPECT_EQ(embedding_macs(1024, 64, EmbeddingStyle::reference_pct), 8u * 4194304u);
  EXPECT_EQ(ffn_macs(1024, 512, 2, FfnScope::global), 65536u);
  EXPECT_EQ(ffn_macs(1024, 512, 2, FfnScope::per_point), 1024u * 65536u);
  EXPECT_EQ(ffn_macs(1, 512, 1, FfnScope::global), 512u * 512u);
}

TEST(Formulas, VariantOrdering) {
  for (std::size_t n : {16, 256, 1024}) {
    const auto full = attention_macs(n, 64, 1, 1, AttentionVariant::qkv_full);
    const auto q = attention_macs(n, 64, 1, 1, AttentionVariant::q_removed);
    const auto kv = attention_macs(n, 64, 1, 1, AttentionVariant::kv_removed);
    const auto sc = attention_macs(n, 64, 1, 1, AttentionVariant::self_correlation);
    const auto sym = attention_macs(n, 64, 1, 1, AttentionVariant::self_correlation, ScoreProduct::symmetric);
    EXPECT_GT(full, q);
    EXPECT_GT(q, kv);
    EXPECT_GT(kv, sc);
    EXPECT_GT(sc, sym);
    EXPECT_EQ(full - sc, 3u * n * 64 * 64);
  }
  EXPECT_LT(attention_macs(1024, 64, 1, 4, AttentionVariant::qkv_full),
            attention_macs(1024, 64, 1, 1, AttentionVariant::qkv_full));
}

TEST(Formulas, Errors) {
  EXPECT_THROW(attention_macs(0, 64, 1, 1, AttentionVariant::qkv_full), DomainError);
  EXPECT_THROW(attention_macs(8, 64, 1, 3, AttentionVariant::qkv_full), DomainError);
  EXPECT_THROW(ffn_macs(8, 512, 0, FfnScope::global), DomainError);
}

TEST(Instrumented, DenseSelfCorrelationPathMatchesFormula) {
  for (std::size_t n : {2, 4, 8, 16}) {
    for (std::size_t d : {2, 4, 8}) {
      Tape t;
      const Var x = t.constant(random_matrix(n, d, n * 10 + d));
      const Var w = t.constant(random_matrix(d, d, 1));
      const Var b = t.constant(Matrix(1, d));
      const instrument::MacScope scope;
      const Var a = row_softmax(scale(matmul(x, transpose(x)), 1.0 / std::sqrt(double(d))));
      linear(matmul(a, x), w, b);
      EXPECT_EQ(scope.count(), attention_macs(n, d, 1, 1, AttentionVariant::self_correlation)) << n << "x" << d;
    }
  }
}

TEST(Instrumented, SymmetricScoresMatchGram) {
  for (std::size_t n : {2, 4, 8, 16}) {
    for (std::size_t d : {2, 4, 8}) {
      Tape t;
      const Var x = t.constant(random_matrix(n, d, n + d));
      const instrument::MacScope scope;
      gram(x);
      EXPECT_EQ(scope.count(), std::uint64_t(n) * (n + 1) / 2 * d);
    }
  }
}

TEST(Instrumented, EmbeddingWidthLayer) {
  for (std::size_t n : {2, 4, 8, 16}) {
    for (std::size_t d : {2, 4, 8}) {
      Tape t;
      const instrument::MacScope scope;
      linear(t.constant(random_matrix(n, d, 3)), t.constant(random_matrix(d, d, 4)), t.constant(Matrix(1, d)));
      EXPECT_EQ(scope.count(), embedding_macs(n, d));
    }
  }
}

TEST(Instrumented, SamplerForwardMatchesReport) {
  for (AttentionVariant v : {AttentionVariant::self_correlation, AttentionVariant::qkv_full,
                             AttentionVariant::q_removed, AttentionVariant::kv_removed}) {
    for (std::size_t heads : {1, 2}) {
      if (v == AttentionVariant::self_correlation && heads > 1) continue;
      for (std::size_t n : {2, 4, 8, 16}) {
        for (std::size_t d : {2, 4, 8}) {
          const SamplerConfig cfg = small_config(d, 2, v, heads);
          const SamplerParams p = init_params(5, cfg);
          EXPECT_EQ(instrument_count(p, n), sampler_cost(cfg, n).macs())
              << to_string(v) << " h" << heads << " n" << n << " d" << d;
          EXPECT_EQ(p.parameter_count(), sampler_cost(cfg, n).params());
        }
      }
    }
  }
  const SamplerConfig scaled = small_config(8, 2, AttentionVariant::qkv_full, 1, 2);
  EXPECT_EQ(instrument_count(init_params(1, scaled), 8), sampler_cost(scaled, 8).macs());
}

TEST(Instrumented, TaskHeadMatchesReport) {
  const TaskParams p = init_task_params(3, 4);
  for (std::size_t n : {2, 16, 64}) {
    EXPECT_EQ(instrument_count(p, n), task_head_cost(n, p.widths, 4).macs());
    EXPECT_EQ(instrument_count(p, n), task_head_macs(n, p.widths, 4));
  }
  EXPECT_EQ(p.parameter_count(), task_head_params(p.widths, 4));
  EXPECT_EQ(task_head_params({3, 32, 64, 128}, 4), 4u * 32 + 33u * 64 + 65u * 128 + 129u * 4);
}

TEST(Instrumented, NoLayersNoMacs) {
  Tape t;
  const Var x = t.constant(random_matrix(8, 3, 1));
  const instrument::MacScope scope;
  relu(add(x, x));
  max_over_rows(x);
  EXPECT_EQ(scope.count(), 0u);
}

TEST(Instrumented, DefaultModelAtFullResolution) {
  SamplerConfig cfg;
  cfg.num_samples = 32;
  EXPECT_EQ(instrument_count(init_params(1, cfg), 1024), sampler_cost(cfg, 1024).macs());
}

TEST(Reports, PointNetProfile) {
  const CostReport r = pointnet_full_cost(1024);
  EXPECT_EQ(r.macs(), pointnet_macs_by_hand(1024));
  EXPECT_NEAR(static_cast<double>(r.flops()), 927.2e6, 0.10 * 927.2e6);
  EXPECT_EQ(r.flops(), kFlopsPerMac * r.macs());
}

TEST(Reports, PerPointStagesScaleLinearly) {
  const CostReport full = task_head_cost(1024, {3, 32, 64, 128}, 4), half = task_head_cost(512, {3, 32, 64, 128}, 4);
  EXPECT_EQ(full.breakdown[0].macs, 2 * half.breakdown[0].macs);
  EXPECT_EQ(full.breakdown[1].macs, half.breakdown[1].macs);
}

TEST(Reports, SoftmaxCountedSeparately) {
  const CostReport r = sampler_cost(small_config(8, 2, AttentionVariant::self_correlation), 16);
  EXPECT_EQ(r.breakdown[1].extra_flops, kSoftmaxFlopsPerElement * 16 * 16);
  EXPECT_EQ(r.flops(), kFlopsPerMac * r.macs() + kSoftmaxFlopsPerElement * 16 * 16);
}

TEST(Budget, PipelineReductionAtDownsamplingRatio32) {
  SamplerConfig cfg;
  cfg.num_samples = 32;
  const PipelineCost p = pipeline_cost(cfg, 1024, [](std::size_t k) { return pointnet_full_cost(k); });
  EXPECT_TRUE(p.budget.within);
  const double pct = 100.0 * p.budget.flops_reduction.value();
  EXPECT_NEAR(pct, 75.93, 5.0);
  const auto used = static_cast<std::int64_t>(p.sampler.flops() + p.task_at_m.flops());
  const auto ref = static_cast<std::int64_t>(p.task_at_n.flops());
  EXPECT_EQ(p.budget.flops_reduction, Ratio::make(ref - used, ref));
}

TEST(Budget, TrivialCases) {
  const CostReport task_n = pointnet_full_cost(64), task_m = pointnet_full_cost(16);
  CostReport free_sampler;
  const BudgetResult b = budget_check(free_sampler, task_m, task_n);
  EXPECT_TRUE(b.within);
  EXPECT_EQ(b.params_increase, Ratio{});
  // Any non-zero sampler cost breaks the budget when the task runs at full size.
  const CostReport s = sampler_cost(small_config(4, 2, AttentionVariant::self_correlation), 64);
  EXPECT_FALSE(budget_check(s, task_n, task_n).within);
  EXPECT_FALSE(budget_check(free_sampler, task_n, task_n).flops_ok);
  EXPECT_FALSE(budget_check(free_sampler, task_m, task_n, 10).params_ok);
  EXPECT_THROW(budget_check(s, task_m, CostReport{}), DomainError);
}

TEST(Budget, ExactMargins) {
  CostReport s, tm, tn;
  s.breakdown.push_back({"s", 1, 0, 2});
  tm.breakdown.push_back({"m", 2, 0, 0});
  tn.breakdown.push_back({"n", 4, 0, 8});
  const BudgetResult b = budget_check(s, tm, tn);
  EXPECT_EQ(b.flops_reduction, (Ratio{1, 4}));
  EXPECT_EQ(b.params_increase, (Ratio{1, 4}));
  EXPECT_TRUE(b.flops_ok);
  tn.breakdown[0].macs = 3;  // used == reference
  EXPECT_FALSE(budget_check(s, tm, tn).flops_ok);
  EXPECT_EQ(budget_check(s, tm, tn).flops_reduction, (Ratio{0, 1}));
}

TEST(Ratio, LowestTerms) {
  EXPECT_EQ(Ratio::make(6, -8), (Ratio{-3, 4}));
  EXPECT_EQ(Ratio::make(0, 5), (Ratio{0, 1}));
  EXPECT_THROW(Ratio::make(1, 0), DomainError);
  EXPECT_EQ(format_pct(Ratio{1, 3}), "33.3333");
}

TEST(Csv, RowLayout) {
  SamplerConfig cfg;
  cfg.num_samples = 32;
  const PipelineCost p = pipeline_cost(cfg, 1024, [](std::size_t k) { return pointnet_full_cost(k); });
  const std::string row = cost_csv_row(p);
  EXPECT_EQ(row.rfind("lightn_self_correlation+pointnet_full,1024,32,", 0), 0u);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 6);
  EXPECT_EQ(cost_csv_header(), "config,N,m,flops,params,reduction_pct,increase_pct\n");
}

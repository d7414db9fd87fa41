#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "hammersim/metrics.hpp"
#include "oracles.hpp"

using namespace hammersim;

namespace {

std::vector<RoundRecord> rounds(std::vector<std::vector<std::uint32_t>> sets) {
  std::vector<RoundRecord> out;
  for (std::size_t t = 0; t < sets.size(); ++t) out.push_back({t, std::move(sets[t])});
  return out;
}

std::vector<std::uint32_t> random_set(Rng& rng, std::size_t k, std::uint32_t M) {
  std::vector<std::uint32_t> all(M);
  std::iota(all.begin(), all.end(), 0u);
  rng.shuffle(all);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

TEST(Rur, HandExamples) {
  EXPECT_DOUBLE_EQ(compute_rur(rounds({{1, 2, 3}, {2, 3, 4}})), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(compute_rur(rounds({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}})), 1.0);
  EXPECT_DOUBLE_EQ(compute_rur(rounds({{1, 2}, {3, 4}, {5}})), 0.0);
  // Denominator is |U_t| for t < T, so the last round's size never counts.
  EXPECT_DOUBLE_EQ(compute_rur(rounds({{1}, {1, 2, 3, 4}})), 1.0);
  EXPECT_DOUBLE_EQ(compute_rur(rounds({{}, {}})), 0.0);
}

TEST(Rur, NeedsTwoRounds) {
  EXPECT_THROW(compute_rur(rounds({{1, 2}})), InvalidArgument);
  EXPECT_THROW(compute_rur({}), InvalidArgument);
}

TEST(Rur, PropertyBoundsAndExtremes) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const std::uint32_t M = 4 + static_cast<std::uint32_t>(rng.below(13));
    const std::size_t T = 2 + rng.below(5);
    const std::size_t k = 1 + rng.below(M / 2 + 1);
    std::vector<std::vector<std::uint32_t>> sets;
    for (std::size_t t = 0; t < T; ++t) sets.push_back(random_set(rng, k, M));
    const double r = compute_rur(rounds(sets));
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
    bool identical = true, disjoint = true;
    for (std::size_t t = 0; t + 1 < T; ++t) {
      std::vector<std::uint32_t> inter;
      std::set_intersection(sets[t].begin(), sets[t].end(), sets[t + 1].begin(), sets[t + 1].end(),
                            std::back_inserter(inter));
      identical = identical && sets[t] == sets[t + 1];
      disjoint = disjoint && inter.empty();
    }
    EXPECT_EQ(r == 1.0, identical);
    EXPECT_EQ(r == 0.0, disjoint);
  }
}

TEST(ClusterDensity, HandExamples) {
  const std::vector<std::uint32_t> one{42};
  auto cd = compute_cd(one, 100);
  EXPECT_EQ(cd.covered, 1u);
  EXPECT_EQ(cd.span, 1u);
  EXPECT_DOUBLE_EQ(cd.density, 0.01);

  std::vector<std::uint32_t> dense(10);
  std::iota(dense.begin(), dense.end(), 0u);
  cd = compute_cd(dense, 100);
  EXPECT_EQ(cd.covered, 9u);
  EXPECT_EQ(cd.span, 9u);
  EXPECT_DOUBLE_EQ(cd.density, 0.09);

  std::vector<std::uint32_t> spread;
  for (std::uint32_t i = 0; i <= 99; i += 11) spread.push_back(i);
  cd = compute_cd(spread, 100);
  EXPECT_EQ(cd.covered, 9u);
  EXPECT_EQ(cd.span, 89u);
  EXPECT_DOUBLE_EQ(cd.density, 0.89);
}

TEST(ClusterDensity, UnsortedAndDuplicatesIgnored) {
  const std::vector<std::uint32_t> a{9, 3, 3, 0, 5};
  const std::vector<std::uint32_t> b{0, 3, 5, 9};
  EXPECT_EQ(compute_cd(a, 10).span, compute_cd(b, 10).span);
}

TEST(ClusterDensity, Errors) {
  EXPECT_THROW(compute_cd({}, 10), InvalidArgument);
}

TEST(ClusterDensity, SlidingWindowMatchesExhaustiveSubsets) {
  Rng rng(5);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t k = 1 + rng.below(12);
    const auto idx = random_set(rng, k, 64);
    EXPECT_EQ(compute_cd(idx, 64).span, oracle::cd_span_exhaustive(idx)) << "k=" << k;
  }
}

TEST(UpdateSize, HandExamples) {
  EXPECT_DOUBLE_EQ(update_size_bytes(8'700'000, 4, 0.001), 4350.0);
  EXPECT_DOUBLE_EQ(update_size_bytes(6'700'000, 8, 0.0005), 3350.0);
  EXPECT_DOUBLE_EQ(update_size_bytes(1000, 8, 0.001), 1.0);
  EXPECT_DOUBLE_EQ(update_size_bytes(1000, 8, 0.001, 4.0), 5.0);
}

TEST(UpdateSize, NeedsUniformPrecision) {
  ModelSpec mixed({{"a", 10, 8}, {"b", 10, 4}});
  EXPECT_THROW(update_size(mixed, 0.5), InvalidArgument);
  ModelSpec uniform({{"a", 10, 4}, {"b", 10, 4}});
  EXPECT_DOUBLE_EQ(update_size(uniform, 0.5), 5.0);
}

TEST(HMax, PublishedRows) {
  const DramConfig d;
  const std::uint64_t cap = d.act_cap();
  auto h = [&](double bytes) { return h_max(d.bandwidth, d.refresh_ps(), bytes, cap); };
  EXPECT_EQ(h(4350).updates, 296'204u);
  EXPECT_EQ(h(1450).updates, 888'613u);
  EXPECT_FALSE(h(1450).exceeds_act_cap);
  EXPECT_EQ(h(d.bandwidth.window_bytes(d.refresh_ps())).updates, 1u);
  EXPECT_TRUE(h(100).exceeds_act_cap);
  EXPECT_THROW(h(0), InvalidArgument);
}

TEST(HMax, MatchesLongDivisionOnWholeByteSizes) {
  // window bytes = 2400 * 2^20 * 8 * 0.064 = 1288490188.8, i.e. 6442450944 / 5.
  const DramConfig d;
  for (std::uint64_t bytes = 1; bytes < 20000; bytes += 37) {
    const std::uint64_t expect = 6'442'450'944ull / (5 * bytes);
    EXPECT_EQ(h_max(d.bandwidth, d.refresh_ps(), static_cast<double>(bytes), d.act_cap()).updates, expect);
  }
}

TEST(ExpectedActivations, HandExamples) {
  EXPECT_EQ(expected_activations(0.695, 296'000), 205'720u);
  EXPECT_EQ(truncate_k(expected_activations(0.695, 296'204)), 205u);
  EXPECT_EQ(nearest_k(expected_activations(0.695, 296'204)), 206u);
  EXPECT_EQ(nearest_k(expected_activations(0.583, 888'613)), 518u);
  EXPECT_EQ(expected_activations(0.0, 888'613), 0u);
  EXPECT_EQ(expected_activations(1.0, 888'613), 888'613u);
  EXPECT_THROW(expected_activations(1.01, 10), InvalidArgument);
  EXPECT_THROW(expected_activations(-0.1, 10), InvalidArgument);
}

TEST(Thresholds, SummaryOfDefaultTable) {
  const auto s = summarize_thresholds(ThresholdTable::defaults());
  EXPECT_EQ(s.minimum, 185'000u);
  EXPECT_DOUBLE_EQ(s.exact_mean, 237'500.0);
  EXPECT_EQ(s.average, 240'000u);
  EXPECT_EQ(summarize_thresholds(ThresholdTable::defaults(), 1).average, 237'500u);
}

TEST(Thresholds, RoundUpIsExactOnQuantum) {
  using M = HammerMode;
  ThresholdTable t({{0xFF, 0x00, M::single_sided, 200'000}, {0xFF, 0x00, M::double_sided, 100'000},
                    {0x00, 0xFF, M::single_sided, 220'000}, {0x00, 0xFF, M::double_sided, 100'000}});
  EXPECT_EQ(summarize_thresholds(t).average, 210'000u);
  ThresholdTable u({{0xFF, 0x00, M::single_sided, 200'001}, {0xFF, 0x00, M::double_sided, 100'000}});
  EXPECT_EQ(summarize_thresholds(u).average, 210'000u);
}

TEST(Verdict, Boundaries) {
  const auto t = ThresholdTable::defaults();
  EXPECT_EQ(feasibility_verdict(281'000, t), Verdict::feasible);
  EXPECT_EQ(feasibility_verdict(240'000, t), Verdict::feasible);
  EXPECT_EQ(feasibility_verdict(239'999, t), Verdict::marginal);
  EXPECT_EQ(feasibility_verdict(233'000, t), Verdict::marginal);
  EXPECT_EQ(feasibility_verdict(185'000, t), Verdict::marginal);
  EXPECT_EQ(feasibility_verdict(184'999, t), Verdict::infeasible);
  EXPECT_EQ(feasibility_verdict(0, t), Verdict::infeasible);
  EXPECT_EQ(to_string(Verdict::marginal), "marginal");
}

TEST(Presets, LookupNormalizesNames) {
  EXPECT_EQ(find_preset("conformer_ctc_s").total_params, 8'700'000u);
  EXPECT_EQ(find_preset("QuartzNet 5x5").precision_bits, 8);
  EXPECT_EQ(find_preset("mobilenetv3-small").name, "MobileNetV3 Small");
  EXPECT_THROW(find_preset("resnet50"), ConfigError);
}

TEST(Presets, ModelSpecSpreadsParameters) {
  for (const auto& p : model_presets()) {
    const auto spec = preset_model_spec(p);
    EXPECT_EQ(spec.total_params(), p.total_params) << p.name;
    EXPECT_EQ(spec.layers().size(), p.tensors) << p.name;
    std::size_t lo = SIZE_MAX, hi = 0;
    for (const auto& l : spec.layers()) {
      lo = std::min(lo, l.element_count);
      hi = std::max(hi, l.element_count);
      EXPECT_EQ(l.precision_bits, p.precision_bits);
    }
    EXPECT_LE(hi - lo, 1u) << p.name;
  }
}

TEST(FeasibilityReport, ExactNumbersForReferenceInputs) {
  const auto inputs = reference_inputs();
  const auto rep = build_feasibility_report(inputs, DramConfig{}, ThresholdTable::defaults());
  const std::uint64_t h[] = {296'204, 592'409, 286'331, 572'662, 192'311, 384'623, 444'306, 888'613};
  const std::uint64_t e[] = {205'861, 358'407, 180'674, 307'519, 146'156, 233'850, 281'245, 518'061};
  ASSERT_EQ(rep.rows.size(), 8u);
  EXPECT_DOUBLE_EQ(rep.bandwidth_bytes_per_s, 20'132'659'200.0);
  EXPECT_DOUBLE_EQ(rep.bandwidth_decimal_bytes_per_s, 19.2e9);
  EXPECT_NEAR(rep.window_bytes, 1'288'490'188.8, 1e-3);
  EXPECT_EQ(rep.act_cap, 1'306'122u);
  for (std::size_t i = 0; i < 8; ++i) {
    const auto& r = rep.rows[i];
    EXPECT_EQ(r.h_max, h[i]) << r.model;
    EXPECT_EQ(r.e_act, e[i]) << r.model;
    EXPECT_EQ(r.e_act, expected_activations(r.rur, r.h_max));
    EXPECT_FALSE(r.h_max_exceeds_cap);
    EXPECT_EQ(r.verdict, reference_rows()[i].verdict) << r.model << " " << r.sparsity;
    EXPECT_EQ(r.per_pattern.size(), 4u);
  }
}

TEST(FeasibilityReport, TruncatedHMaxAgreesWithPublishedColumn) {
  const auto rep = build_feasibility_report(reference_inputs(), DramConfig{}, ThresholdTable::defaults());
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    EXPECT_EQ(truncate_k(rep.rows[i].h_max), reference_rows()[i].h_max_k);
    const auto e = static_cast<std::int64_t>(nearest_k(rep.rows[i].e_act));
    EXPECT_LE(std::abs(e - static_cast<std::int64_t>(reference_rows()[i].e_act_k)), 1);
  }
}

TEST(FeasibilityReport, MetadataShrinksHMax) {
  const std::vector<FeasibilityInput> in{{"Conformer-CTC-S", 0.001, 0.5}};
  const auto plain = build_feasibility_report(in, DramConfig{}, ThresholdTable::defaults());
  const auto meta = build_feasibility_report(in, DramConfig{}, ThresholdTable::defaults(), 4.0);
  EXPECT_DOUBLE_EQ(meta.rows[0].update_bytes, 8700 * 4.5);
  EXPECT_LT(meta.rows[0].h_max, plain.rows[0].h_max);
}

TEST(FeasibilityReport, PerPatternFlags) {
  const std::vector<FeasibilityInput> in{{"MobileNetV3 Small", 0.001, 0.633}};
  const auto rep = build_feasibility_report(in, DramConfig{}, ThresholdTable::defaults());
  for (const auto& [entry, reached] : rep.rows[0].per_pattern) EXPECT_EQ(reached, 281'245u >= entry.count);
}

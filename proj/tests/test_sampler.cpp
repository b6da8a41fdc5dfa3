#include <gtest/gtest.h>

#include <set>

#include "latentprobe/sampler.hpp"

using namespace latentprobe;

namespace {

Batch planned(Eigen::Index dim, std::uint64_t seed, const SamplerConfig& config = {}) {
  return plan_batch("b0", draw_bases("b0", seed, dim, config), seed, config);
}

/// Counts distinct latents (by their bytes) among bases and samples.
std::size_t distinct_latents(const Batch& batch) {
  std::set<std::vector<double>> seen;
  for (const auto& b : batch.bases) seen.emplace(b.latent.data(), b.latent.data() + b.latent.size());
  for (const auto& s : batch.samples) {
    if (s.latent.size() > 0) seen.emplace(s.latent.data(), s.latent.data() + s.latent.size());
  }
  return seen.size();
}

/// Counts generate calls.
class CountingGenerator final : public GeneratorOracle {
 public:
  explicit CountingGenerator(std::shared_ptr<SyntheticWorld> world) : world_(std::move(world)) {}
  Eigen::Index dim() const override { return world_->dim(); }
  std::string identity() const override { return world_->identity(); }
  ImageRef generate(const LatentVector& latent) override {
    ++calls;
    if (fail_after >= 0 && calls > fail_after) throw TransportError("oracle went away");
    return world_->generate(latent);
  }
  int calls = 0;
  int fail_after = -1;

 private:
  std::shared_ptr<SyntheticWorld> world_;
};

}  // namespace

TEST(PlanBatch, KindHistogramMatchesRecipe) {
  const auto batch = planned(512, 1);
  EXPECT_EQ(batch.samples.size(), 112u);
  const auto h = kind_histogram(batch);
  EXPECT_EQ(h.at(SampleType::genuine), 4u);
  EXPECT_EQ(h.at(SampleType::positive), 24u);
  EXPECT_EQ(h.at(SampleType::negative), 12u);
  EXPECT_EQ(h.at(SampleType::interpolation), 36u);
  EXPECT_EQ(h.at(SampleType::optimized), 36u);
  for (const auto& b : batch.bases) {
    const auto per = kind_histogram(batch, b.base_id);
    EXPECT_EQ(per.at(SampleType::genuine), 1u);
    EXPECT_EQ(per.at(SampleType::positive), 6u);
    EXPECT_EQ(per.at(SampleType::negative), 3u);
    EXPECT_EQ(per.at(SampleType::interpolation), 9u);
    EXPECT_EQ(per.at(SampleType::optimized), 9u);
  }
  EXPECT_EQ(SamplerConfig{}.samples_per_base(), 28u);
}

TEST(PlanBatch, GenuineAndNegatives) {
  const auto batch = planned(32, 2);
  for (const auto& b : batch.bases) {
    std::set<std::string> negatives;
    for (const auto& s : batch.samples) {
      if (s.base_id != b.base_id) continue;
      if (std::holds_alternative<GenuineKind>(s.kind)) {
        EXPECT_EQ(s.latent, b.latent);
        EXPECT_EQ(s.latent_distance_to_base, 0.0);
      }
      if (const auto* n = std::get_if<NegativeKind>(&s.kind)) {
        negatives.insert(n->source_base_id);
        EXPECT_EQ(s.latent, batch.base(n->source_base_id).latent);
      }
    }
    std::set<std::string> others;
    for (const auto& o : batch.bases) {
      if (o.base_id != b.base_id) others.insert(o.base_id);
    }
    EXPECT_EQ(negatives, others);
  }
}

TEST(PlanBatch, GeometryInvariants) {
  SamplerConfig config;
  config.direction_scale = 95.3;
  const auto batch = planned(512, 42, config);
  for (const auto& b : batch.bases) {
    std::set<std::vector<double>> directions;
    std::map<int, std::map<double, double>> positive;
    for (const auto& s : batch.samples) {
      if (s.base_id != b.base_id) continue;
      if (s.latent.size() > 0) {
        const double d = euclidean_distance(s.latent, b.latent);
        EXPECT_NEAR(s.latent_distance_to_base, d, 1e-12 * std::max(1.0, d));
      }
      if (const auto* p = std::get_if<PositiveKind>(&s.kind)) {
        EXPECT_NEAR(s.latent_distance_to_base, p->distance * 95.3, 1e-9 * p->distance * 95.3);
        positive[p->direction_index][p->distance] = s.latent_distance_to_base;
        const LatentVector dir = (s.latent - b.latent).normalized();
        std::vector<double> rounded(4);
        for (int i = 0; i < 4; ++i) rounded[i] = std::round(dir[i] * 1e6);
        directions.insert(rounded);
      }
      if (const auto* k = std::get_if<InterpolationKind>(&s.kind)) {
        const double full = euclidean_distance(b.latent, batch.base(k->negative_base_id).latent);
        EXPECT_NEAR(s.latent_distance_to_base, k->fraction * full, 1e-9 * k->fraction * full);
      }
    }
    EXPECT_EQ(directions.size(), 2u);
    for (const auto& [d, steps] : positive) {
      EXPECT_NEAR(steps.at(0.4) / steps.at(0.2), 2.0, 1e-9);
      EXPECT_NEAR(steps.at(0.6) / steps.at(0.2), 3.0, 1e-9);
    }
  }
}

TEST(PlanBatch, InterpolationIsDirectional) {
  const auto batch = planned(16, 5);
  const auto& a = batch.bases[0];
  const auto& b = batch.bases[1];
  const LatentVector ab = lerp(a.latent, b.latent, 0.25);
  const LatentVector ba = lerp(b.latent, a.latent, 0.25);
  EXPECT_NE(ab, ba);
  bool found_ab = false, found_ba = false;
  for (const auto& s : batch.samples) {
    if (!std::holds_alternative<InterpolationKind>(s.kind)) continue;
    found_ab |= s.base_id == a.base_id && s.latent == ab;
    found_ba |= s.base_id == b.base_id && s.latent == ba;
  }
  EXPECT_TRUE(found_ab);
  EXPECT_TRUE(found_ba);
}

TEST(PlanBatch, Deterministic) {
  EXPECT_EQ(planned(64, 9), planned(64, 9));
  EXPECT_NE(planned(64, 9).bases[0].latent, planned(64, 10).bases[0].latent);
  // directions are scoped to the base
  const auto batch = planned(64, 9);
  EXPECT_NE(batch.samples[1].latent - batch.bases[0].latent, batch.samples[29].latent - batch.bases[1].latent);
}

TEST(PlanBatch, RejectsBadBases) {
  SamplerConfig config;
  auto bases = draw_bases("b0", 1, 8, config);
  auto dup = bases;
  dup[1].base_id = dup[0].base_id;
  EXPECT_THROW(plan_batch("b0", dup, 1, config), ValidationError);
  auto same = bases;
  same[2].latent = same[0].latent;
  EXPECT_THROW(plan_batch("b0", same, 1, config), ValidationError);
  auto three = bases;
  three.pop_back();
  EXPECT_THROW(plan_batch("b0", three, 1, config), ValidationError);
  auto mixed = bases;
  mixed[3].latent = LatentVector::Ones(9);
  EXPECT_THROW(plan_batch("b0", mixed, 1, config), DimensionError);
}

TEST(PlanBatch, ConfigValidation) {
  SamplerConfig c;
  c.thresholds = {0.3, 0.4};
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.fractions = {1.5};
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.steps = {0.0};
  EXPECT_THROW(c.validate(), ValidationError);
}

class OptimizedTest : public ::testing::Test {
 protected:
  OptimizedTest()
      : world(std::make_shared<SyntheticWorld>(16, 10.0, std::make_shared<MemoryImageStore>())),
        decision(world, "synthetic") {}
  std::shared_ptr<SyntheticWorld> world;
  DecisionOracle decision;
};

TEST_F(OptimizedTest, TwelveRunsFillThirtySixSlots) {
  auto batch = planned(16, 11);
  CountingGenerator gen(world);
  CmaConfig cma;
  cma.dim = 16;
  int runs = 0;
  run_optimized(batch, gen, decision, cma, SamplerConfig{}, [&](const Batch&) { ++runs; });
  EXPECT_EQ(runs, 12);
  EXPECT_TRUE(batch.optimized_complete());
  std::size_t filled = 0;
  for (const auto& s : batch.samples) {
    const auto* k = std::get_if<OptimizedKind>(&s.kind);
    if (!k) continue;
    ++filled;
    EXPECT_TRUE(k->filled);
    // in 16 dimensions every run gets far below the lowest threshold
    EXPECT_TRUE(k->reached) << s.sample_id;
    EXPECT_LT(k->achieved, k->threshold);
    const double d = euclidean_distance(s.latent, batch.base(s.base_id).latent);
    EXPECT_DOUBLE_EQ(k->achieved, d / 10.0);
    EXPECT_NEAR(s.latent_distance_to_base, d, 1e-12);
  }
  EXPECT_EQ(filled, 36u);
}

TEST_F(OptimizedTest, CrossingGenerationsAreMonotone) {
  auto batch = planned(16, 12);
  CmaConfig cma;
  cma.dim = 16;
  cma.truncation = 0.05;
  run_optimized(batch, *world, decision, cma, SamplerConfig{});
  for (const auto& b : batch.bases) {
    for (const auto& o : batch.bases) {
      if (o.base_id == b.base_id) continue;
      std::map<double, std::size_t> generation;
      for (const auto& s : batch.samples) {
        const auto* k = std::get_if<OptimizedKind>(&s.kind);
        if (k && s.base_id == b.base_id && k->start_negative_id == o.base_id) generation[k->threshold] = k->generation;
      }
      ASSERT_EQ(generation.size(), 3u);
      EXPECT_LE(generation.at(0.5), generation.at(0.4));
      EXPECT_LE(generation.at(0.4), generation.at(0.3));
    }
  }
}

TEST_F(OptimizedTest, SingleGenerationFallsBackToBestSoFar) {
  auto batch = planned(16, 13);
  CmaConfig cma;
  cma.dim = 16;
  cma.max_generations = 1;
  run_optimized(batch, *world, decision, cma, SamplerConfig{});
  std::size_t unreached = 0;
  for (const auto& s : batch.samples) {
    const auto* k = std::get_if<OptimizedKind>(&s.kind);
    if (!k) continue;
    EXPECT_TRUE(k->filled);
    EXPECT_EQ(k->generation, 1u);
    if (!k->reached) {
      ++unreached;
      EXPECT_GE(k->achieved, k->threshold);
    }
  }
  EXPECT_GT(unreached, 0u);
}

TEST_F(OptimizedTest, ParallelRunsMatchSequential) {
  CmaConfig cma;
  cma.dim = 16;
  cma.max_generations = 20;
  auto a = planned(16, 14);
  auto b = a;
  run_optimized(a, *world, decision, cma, SamplerConfig{});
  run_optimized(b, *world, decision, cma, SamplerConfig{}, {}, 4);
  EXPECT_EQ(a, b);
}

TEST_F(OptimizedTest, ResumesAfterFailure) {
  auto batch = planned(16, 15);
  CmaConfig cma;
  cma.dim = 16;
  cma.max_generations = 5;
  CountingGenerator flaky(world);
  flaky.fail_after = 300;
  Batch checkpoint;
  EXPECT_THROW(run_optimized(batch, flaky, decision, cma, SamplerConfig{}, [&](const Batch& b) { checkpoint = b; }),
               TransportError);
  ASSERT_FALSE(checkpoint.samples.empty());
  EXPECT_FALSE(checkpoint.optimized_complete());
  std::size_t done_before = 0;
  for (const auto& s : checkpoint.samples) {
    if (const auto* k = std::get_if<OptimizedKind>(&s.kind); k && k->filled) ++done_before;
  }
  EXPECT_GT(done_before, 0u);

  int runs = 0;
  run_optimized(checkpoint, *world, decision, cma, SamplerConfig{}, [&](const Batch&) { ++runs; });
  EXPECT_EQ(static_cast<std::size_t>(runs), 12 - done_before / 3);
  auto fresh = planned(16, 15);
  run_optimized(fresh, *world, decision, cma, SamplerConfig{});
  EXPECT_EQ(checkpoint, fresh);
}

TEST_F(OptimizedTest, MaterializeIsIdempotentAndDeduplicated) {
  auto batch = planned(16, 16);
  // 4 bases + 24 positives + 18 interpolations: a->b at f equals b->a at 1-f bit for bit
  EXPECT_EQ(distinct_latents(batch), 46u);
  const auto& a = batch.bases[0].latent;
  const auto& b = batch.bases[1].latent;
  EXPECT_EQ(lerp(a, b, 0.25), lerp(b, a, 0.75));
  CmaConfig cma;
  cma.dim = 16;
  cma.max_generations = 10;
  run_optimized(batch, *world, decision, cma, SamplerConfig{});
  CountingGenerator gen(world);
  const auto report = materialize(batch, gen);
  EXPECT_TRUE(batch.materialized());
  EXPECT_EQ(report.failures, 0u);
  EXPECT_EQ(report.generate_calls, distinct_latents(batch));
  EXPECT_LE(report.generate_calls, 112u);
  for (const auto& s : batch.samples) {
    if (std::holds_alternative<GenuineKind>(s.kind)) EXPECT_EQ(s.image, batch.base(s.base_id).image);
  }
  EXPECT_EQ(materialize(batch, gen).generate_calls, 0u);
  EXPECT_EQ(gen.calls, static_cast<int>(report.generate_calls));
}

TEST_F(OptimizedTest, MaterializeRecordsFailures) {
  auto batch = planned(16, 17);
  CountingGenerator gen(world);
  gen.fail_after = 30;
  const auto report = materialize(batch, gen);
  EXPECT_GT(report.failures, 0u);
  EXPECT_FALSE(batch.materialized());
  std::size_t marked = 0;
  for (const auto& s : batch.samples) marked += s.error.empty() ? 0 : 1;
  EXPECT_EQ(marked, report.failures);
  gen.fail_after = -1;
  const auto retry = materialize(batch, gen);
  EXPECT_EQ(retry.failures, 0u);
  for (const auto& s : batch.samples) EXPECT_TRUE(s.error.empty());
}

// Copyright 2026 The vlmattack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vlmattack/attack.hpp"
#include "vlmattack/toy.hpp"

namespace vlmattack {
namespace {

using testing::RandomImage;
using testing::RandomIntegerImage;
using testing::RandomVector;

const ImageShape kShape{2, 3};  // 18 values

std::vector<double> Px(const PixelImage& x) {
  return {x.pixels().begin(), x.pixels().end()};
}

// Linear encoder whose column j is `columns[j]` (remaining columns zero).
std::shared_ptr<LinearImageEncoder> ColumnEncoder(
    const std::vector<EmbeddingVector>& columns, int dim, bool normalize) {
  std::vector<double> w(dim * kShape.size(), 0.0);
  for (std::size_t j = 0; j < columns.size(); ++j) {
    for (int r = 0; r < dim; ++r) w[r * kShape.size() + j] = columns[j][r];
  }
  return std::make_shared<LinearImageEncoder>("columns", kShape, dim, w,
                                              normalize);
}

PixelImage Lit(std::size_t j, double v = 200.0) {
  std::vector<double> px(kShape.size(), 0.0);
  px[j] = v;
  return PixelImage(kShape, px);
}

std::shared_ptr<ReferenceLinearImageEncoder> RefEncoder(bool normalize,
                                                        std::uint64_t seed = 4,
                                                        ImageShape shape = kShape) {
  ReferenceLinearOptions o;
  o.input_shape = shape;
  o.embed_dim = 16;
  o.seed = seed;
  o.normalize_output = normalize;
  return std::make_shared<ReferenceLinearImageEncoder>(o);
}

// ---------------------------------------------------------------------------
// Transfer objectives.

TEST(MfItObjectiveTest, MatchingEmbeddingGivesOne) {
  HashingTextEncoder g(16);
  auto f = ColumnEncoder({g.encode("a photo of a dog")}, 16, true);
  EXPECT_NEAR(mf_it_objective(Lit(0), "a photo of a dog", *f, g), 1.0, 1e-12);
}

TEST(MfItObjectiveTest, OrthogonalGivesZero) {
  HashingTextEncoder g(16);
  const std::string text = "dog";
  std::vector<double> basis(16, 0.0);
  basis[(g.Bucket("dog") + 1) % 16] = 1.0;
  auto f = ColumnEncoder({EmbeddingVector(basis, false)}, 16, true);
  EXPECT_EQ(mf_it_objective(Lit(0), text, *f, g), 0.0);
}

TEST(MfItObjectiveTest, MatchesDotOracle) {
  std::mt19937_64 rng(1);
  auto f = RefEncoder(true);
  HashingTextEncoder g(16);
  for (int t = 0; t < 20; ++t) {
    const PixelImage x = RandomImage(rng, kShape);
    const auto fe = f->encode(x);
    const auto ge = g.encode("a red cow");
    double want = 0.0;
    for (int i = 0; i < 16; ++i) want += fe[i] * ge[i];
    ASSERT_NEAR(mf_it_objective(x, "a red cow", *f, g), want, 1e-9);
  }
  EXPECT_THROW(mf_it_objective(Lit(0), "x", *f, HashingTextEncoder(8)), Error);
}

TEST(MfIiObjectiveTest, SelfSymmetryAndOracle) {
  std::mt19937_64 rng(2);
  auto f = RefEncoder(true);
  for (int t = 0; t < 20; ++t) {
    const PixelImage x = RandomImage(rng, kShape);
    const PixelImage y = RandomImage(rng, kShape);
    ASSERT_NEAR(mf_ii_objective(x, x, *f), 1.0, 1e-12);
    ASSERT_EQ(mf_ii_objective(x, y, *f), mf_ii_objective(y, x, *f));
    const auto a = f->encode(x), b = f->encode(y);
    double want = 0.0;
    for (int i = 0; i < 16; ++i) want += a[i] * b[i];
    ASSERT_NEAR(mf_ii_objective(x, y, *f), want, 1e-9);
  }
}

// ---------------------------------------------------------------------------
// pgd_transfer.

TEST(PgdTransferTest, ZeroStepsReturnsClean) {
  std::mt19937_64 rng(3);
  auto f = RefEncoder(true);
  const PixelImage x = RandomImage(rng, kShape);
  TransferConfig cfg;
  cfg.steps = 0;
  auto [out, trace] =
      pgd_transfer(x, cfg, make_mf_ii_target(*f, RandomImage(rng, kShape)));
  EXPECT_EQ(out, x);
  EXPECT_TRUE(trace.objective.empty());
}

TEST(PgdTransferTest, ConstantObjectiveLeavesImage) {
  std::mt19937_64 rng(4);
  LinearImageEncoder zero("zero", kShape, 4,
                          std::vector<double>(4 * kShape.size(), 0.0), false);
  const PixelImage x = RandomImage(rng, kShape);
  TransferConfig cfg;
  cfg.steps = 25;
  auto [out, trace] = pgd_transfer(
      x, cfg, {&zero, EmbeddingVector({1.0, 0.0, 0.0, 0.0}, false)});
  EXPECT_EQ(out, x);
}

TEST(PgdTransferTest, ReachesClosedFormOptimumOfLinearObjective) {
  std::mt19937_64 rng(5);
  auto f = RefEncoder(false);
  const auto w = std::vector<double>(f->weights().begin(), f->weights().end());
  for (double step_size : {1.0, 0.5, 3.0}) {
    const PixelImage x = RandomImage(rng, kShape, 40, 215);
    const EmbeddingVector e(RandomVector(rng, 16, -1, 1), false);
    TransferConfig cfg;
    cfg.step_size = step_size;
    cfg.steps = static_cast<int>(std::ceil(8.0 / step_size));
    auto [out, trace] = pgd_transfer(x, cfg, {f.get(), e});
    for (std::size_t j = 0; j < x.size(); ++j) {
      double g = 0.0;
      for (int r = 0; r < 16; ++r) g += w[r * x.size() + j] * e[r];
      const double want = 8.0 * (g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0));
      ASSERT_EQ(out[j], x[j] + want) << "step " << step_size << " pixel " << j;
    }
  }
}

TEST(PgdTransferTest, FeasibleAndBestSoFarMonotone) {
  std::mt19937_64 rng(6);
  auto f = RefEncoder(true);
  for (int t = 0; t < 20; ++t) {
    const PixelImage x = RandomImage(rng, kShape);
    TransferConfig cfg;
    cfg.steps = 12;
    cfg.budget = LinfBudget(std::uniform_real_distribution<double>(0, 16)(rng));
    auto [out, trace] =
        pgd_transfer(x, cfg, make_mf_ii_target(*f, RandomImage(rng, kShape)));
    ASSERT_LE(linf_distance(out, x), cfg.budget.epsilon() + 1e-12);
    ASSERT_EQ(trace.objective.size(), 13u);
    for (std::size_t k = 1; k < trace.best_so_far.size(); ++k) {
      ASSERT_GE(trace.best_so_far[k], trace.best_so_far[k - 1]);
    }
  }
}

TEST(PgdTransferTest, PositiveObjectiveScaleLeavesIteratesUnchanged) {
  std::mt19937_64 rng(7);
  auto f = RefEncoder(false);
  const PixelImage x = RandomImage(rng, kShape);
  const auto t = RandomVector(rng, 16, -1, 1);
  auto scaled = t;
  for (double& v : scaled) v *= 37.0;
  TransferConfig cfg;
  cfg.steps = 5;
  auto a = pgd_transfer(x, cfg, {f.get(), EmbeddingVector(t, false)});
  auto b = pgd_transfer(x, cfg, {f.get(), EmbeddingVector(scaled, false)});
  EXPECT_EQ(a.first, b.first);
}

TEST(PgdTransferTest, NonFiniteGradientAborts) {
  class NanEncoder : public ImageEncoder {
   public:
    const std::string& name() const override { return name_; }
    int embed_dim() const override { return 2; }
    bool normalizes() const override { return false; }
    EmbeddingVector encode(const PixelImage&) const override {
      return EmbeddingVector({1.0, 0.0}, false);
    }
    std::vector<double> similarity_vjp(const PixelImage& x,
                                       const EmbeddingVector&) const override {
      return std::vector<double>(x.size(), std::nan(""));
    }

   private:
    std::string name_ = "nan";
  } enc;
  TransferConfig cfg;
  cfg.steps = 1;
  EXPECT_THROW(pgd_transfer(PixelImage(kShape, 9.0), cfg,
                            {&enc, EmbeddingVector({1.0, 0.0}, false)}),
               Error);
}

TEST(PgdTransferTest, ClampedPixelsGetNoGradient) {
  // Pixel at 255 with an increasing objective stays put, and delta does not
  // drift beyond the realized change.
  LinearImageEncoder f("ones", kShape, 1,
                       std::vector<double>(kShape.size(), 1.0), false);
  TransferConfig cfg;
  cfg.steps = 20;
  auto [out, trace] =
      pgd_transfer(PixelImage(kShape, 255.0), cfg,
                   {&f, EmbeddingVector(std::vector<double>{1.0}, false)});
  EXPECT_EQ(out, PixelImage(kShape, 255.0));
}

// ---------------------------------------------------------------------------
// MF-tt loss.

TEST(MfTtLossTest, EchoVictimScoresOne) {
  HashingTextEncoder g(32);
  CallbackVictim echo("echo", [](const PixelImage&, const Prompt&) {
    return std::string("a photo of a red cat");
  });
  EXPECT_NEAR(mf_tt_loss(Lit(0), echo, g, "a photo of a red cat", Prompt()),
              1.0, 1e-12);
  EXPECT_EQ(echo.read_ledger().total_queries, 1);
  mf_tt_loss(Lit(0), echo, g, "x", Prompt());
  EXPECT_EQ(echo.read_ledger().total_queries, 2);
}

TEST(MfTtLossTest, BucketDisjointCaptionScoresZero) {
  HashingTextEncoder g(32);
  const auto captions = default_toy_captions();
  const std::string target = "zebra";
  std::string disjoint;
  for (const auto& c : captions) {
    bool clash = false;
    for (const auto& tok : tokenize(c)) clash |= g.Bucket(tok) == g.Bucket(target);
    if (!clash) {
      disjoint = c;
      break;
    }
  }
  ASSERT_FALSE(disjoint.empty());
  CallbackVictim v("fixed", [&](const PixelImage&, const Prompt&) { return disjoint; });
  EXPECT_EQ(mf_tt_loss(Lit(0), v, g, target, Prompt()), 0.0);
}

TEST(MfTtLossTest, EmptyResponseScoresZeroAndIsCounted) {
  HashingTextEncoder g(32);
  CallbackVictim v("silent", [](const PixelImage&, const Prompt&) {
    return std::string("  ");
  });
  MfTtLoss loss(v, g, "a cat");
  EXPECT_EQ(loss(Lit(0)), 0.0);
  EXPECT_EQ(loss.empty_responses(), 1);
}

// ---------------------------------------------------------------------------
// RGF.

TEST(RgfTest, ConstantLossGivesExactZero) {
  QueryConfig cfg;
  cfg.queries = 50;
  const auto g = rgf_estimate([](const PixelImage&) { return 0.25; },
                              PixelImage(kShape, 100.0), cfg);
  for (double v : g) ASSERT_EQ(v, 0.0);
}

TEST(RgfTest, SingleSampleSubstitution) {
  QueryConfig cfg;
  cfg.queries = 1;
  cfg.sigma = 2.0;
  cfg.seed = 77;
  const PixelImage x(kShape, 100.0);
  const double l0 = 0.3, l1 = 0.8;
  const auto g = rgf_estimate(
      [&](const PixelImage& p) { return p == x ? l0 : l1; }, x, cfg);
  std::vector<double> d(x.size());
  rgf_direction(cfg, 0, 0, d);
  for (std::size_t i = 0; i < d.size(); ++i) {
    ASSERT_NEAR(g[i], (l1 - l0) / 2.0 * d[i], 1e-15);
  }
}

TEST(RgfTest, CostsNPlusOneEvaluationsAndClampsSamples) {
  QueryConfig cfg;
  cfg.queries = 17;
  cfg.sigma = 50.0;
  std::atomic<int> calls{0};
  rgf_estimate(
      [&](const PixelImage& p) {
        ++calls;
        for (double v : p.pixels()) EXPECT_TRUE(v >= 0.0 && v <= 255.0);
        return 0.0;
      },
      PixelImage(kShape, 250.0), cfg);
  EXPECT_EQ(calls.load(), 18);
  calls = 0;
  rgf_estimate([&](const PixelImage&) { return ++calls, 0.0; },
               PixelImage(kShape, 1.0), cfg, 0, 0.0);
  EXPECT_EQ(calls.load(), 17);
}

TEST(RgfTest, WorkerCountDoesNotChangeEstimate) {
  std::mt19937_64 rng(8);
  const auto c = RandomVector(rng, kShape.size(), -1, 1);
  auto loss = [&](const PixelImage& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * std::sin(p[i] / 40.0);
    return s;
  };
  QueryConfig cfg;
  cfg.queries = 64;
  cfg.seed = 5;
  const PixelImage x = RandomImage(rng, kShape);
  const auto serial = rgf_estimate(loss, x, cfg, 3, std::nullopt, 1);
  for (int w : {2, 5, 16}) {
    EXPECT_EQ(rgf_estimate(loss, x, cfg, 3, std::nullopt, w), serial);
  }
}

TEST(RgfTest, SphereDirectionsHaveNormSqrtD) {
  QueryConfig cfg;
  cfg.distribution = DirectionDistribution::kSphere;
  std::vector<double> d(kShape.size());
  for (std::uint64_t n = 0; n < 10; ++n) {
    rgf_direction(cfg, 1, n, d);
    ASSERT_NEAR(testing::Dot(d, d), static_cast<double>(d.size()), 1e-9);
  }
}

double MeanCosine(double sigma, int seeds) {
  const ImageShape shape{1, 22};  // 66 values; the loss uses the first 64
  std::mt19937_64 rng(9);
  double total = 0.0;
  for (int s = 0; s < seeds; ++s) {
    std::vector<double> c = RandomVector(rng, shape.size(), -1, 1);
    c[64] = c[65] = 0.0;
    const PixelImage x = RandomImage(rng, shape, 50, 200);
    auto loss = [&](const PixelImage& p) {
      double v = 0.0;
      for (std::size_t i = 0; i < 64; ++i) {
        v += c[i] * p[i] + 0.01 * (p[i] - x[i]) * (p[i] - x[i]);
      }
      return v;
    };
    QueryConfig cfg;
    cfg.queries = 1000;
    cfg.sigma = sigma;
    cfg.seed = static_cast<std::uint64_t>(s);
    total += testing::Cosine(rgf_estimate(loss, x, cfg), c);
  }
  return total / seeds;
}

TEST(RgfTest, SmallerSigmaDoesNotHurtFidelityOnQuadratic) {
  const double coarse = MeanCosine(1e-2, 10);
  const double fine = MeanCosine(1e-3, 10);
  EXPECT_GE(fine, 0.9);
  EXPECT_GE(fine, coarse - 0.01);
}

// ---------------------------------------------------------------------------
// pgd_query and the pipeline on the toy world.

class ToyAttackTest : public ::testing::Test {
 protected:
  ToyAttackTest()
      : victim_(world_.MakeVictim()), provider_(world_.MakeTargetProvider()) {}

  AttackComponents Components() {
    return {world_.surrogate_image().get(), world_.text_encoder().get(),
            victim_.get(), provider_.get()};
  }

  QueryConfig Query(int steps, std::uint64_t seed) const {
    QueryConfig q;
    q.steps = steps;
    q.queries = 20;
    q.seed = seed;
    return q;
  }

  ToyWorld world_;
  std::unique_ptr<ToyRetrievalVictim> victim_;
  std::unique_ptr<CallbackTargetProvider> provider_;
};

TEST_F(ToyAttackTest, ZeroQueryStepsReturnsInit) {
  ToyCase tc = make_toy_case(world_, *victim_, 1);
  MfTtLoss loss(*victim_, *world_.text_encoder(), tc.attack_case.targeted_text);
  const auto out = pgd_query(tc.clean, tc.clean, Query(0, 1), loss);
  EXPECT_EQ(out.x_adv, tc.clean);
  EXPECT_FALSE(out.final_text.has_value());
  EXPECT_EQ(out.trace.query_count, 0);
  EXPECT_EQ(victim_->read_ledger().total_queries, 0);
}

TEST_F(ToyAttackTest, QueryAttackFeasibleAndAccounted) {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 10; ++t) {
    ToyCase tc = make_toy_case(world_, *victim_, 100 + t);
    const double eps = std::vector<double>{2, 4, 8, 16}[t % 4];
    QueryConfig q = Query(3, t);
    q.budget = LinfBudget(eps);
    victim_->reset_ledger();
    MfTtLoss loss(*victim_, *world_.text_encoder(), tc.attack_case.targeted_text);
    const auto out = pgd_query(tc.clean, tc.clean, q, loss);
    ASSERT_LE(linf_distance(out.x_adv, tc.clean), eps);
    ASSERT_EQ(out.trace.query_count, 3 * 21);
    ASSERT_EQ(victim_->read_ledger().total_queries, 3 * 21);
    ASSERT_EQ(out.trace.objective.size(), 3u);
    // The returned iterate is the earliest maximum of the recorded losses.
    const auto& obj = out.trace.objective;
    const double best = *std::max_element(obj.begin(), obj.end());
    ASSERT_EQ(out.final_loss, best);
    for (std::size_t k = 1; k < obj.size(); ++k) {
      ASSERT_GE(out.trace.best_so_far[k], out.trace.best_so_far[k - 1]);
    }
    ASSERT_EQ(*out.final_text, victim_->captions()[victim_->Retrieve(out.x_adv)]);
  }
}

TEST_F(ToyAttackTest, QueryCapTruncates) {
  ToyCase tc = make_toy_case(world_, *victim_, 2);
  QueryConfig q = Query(5, 2);
  q.query_cap = 50;  // two steps cost 42; a third would exceed the cap
  MfTtLoss loss(*victim_, *world_.text_encoder(), tc.attack_case.targeted_text);
  const auto out = pgd_query(tc.clean, tc.clean, q, loss);
  EXPECT_TRUE(out.trace.truncated);
  EXPECT_EQ(out.trace.query_count, 42);
  EXPECT_EQ(victim_->read_ledger().total_queries, 42);
}

TEST_F(ToyAttackTest, InitOutsideBudgetRejected) {
  ToyCase tc = make_toy_case(world_, *victim_, 3);
  MfTtLoss loss(*victim_, *world_.text_encoder(), tc.attack_case.targeted_text);
  std::vector<double> px(tc.clean.pixels().begin(), tc.clean.pixels().end());
  px[0] += 20.0;
  EXPECT_THROW(
      pgd_query(PixelImage(tc.clean.shape(), px), tc.clean, Query(1, 0), loss),
      Error);
}

TEST_F(ToyAttackTest, DeterministicAcrossWorkers) {
  ToyCase tc = make_toy_case(world_, *victim_, 4);
  QueryConfig q = Query(3, 9);
  AttackResult a =
      attack_pipeline(tc.attack_case, tc.clean, TransferConfig{}, q, Components());
  q.workers = 8;
  AttackResult b =
      attack_pipeline(tc.attack_case, tc.clean, TransferConfig{}, q, Components());
  EXPECT_EQ(a.x_adv, b.x_adv);
  EXPECT_EQ(a.final_text, b.final_text);
}

TEST_F(ToyAttackTest, DegenerateStagesMatchSingleStageAttacks) {
  ToyCase tc = make_toy_case(world_, *victim_, 5);
  const AttackCase& c = tc.attack_case;
  TransferConfig t;
  t.steps = 30;

  // No query stage: pure transfer plus one query for the final response.
  victim_->reset_ledger();
  AttackResult r = attack_pipeline(c, tc.clean, t, Query(0, 1), Components());
  auto [x_trans, trace] = pgd_transfer(
      tc.clean, t,
      make_mf_ii_target(*world_.surrogate_image(),
                        world_.RenderTarget(c.targeted_text)));
  EXPECT_EQ(r.x_adv, x_trans);
  EXPECT_EQ(r.x_trans, x_trans);
  EXPECT_EQ(r.total_queries, 1);
  EXPECT_EQ(r.final_text, victim_->captions()[victim_->Retrieve(x_trans)]);

  // No transfer stage: pure query attack from the clean image.
  TransferConfig none;
  none.steps = 0;
  AttackResult rq = attack_pipeline(c, tc.clean, none, Query(2, 1), Components());
  MfTtLoss loss(*victim_, *world_.text_encoder(), c.targeted_text);
  const auto direct = pgd_query(tc.clean, tc.clean, Query(2, 1), loss);
  EXPECT_EQ(rq.x_trans, tc.clean);
  EXPECT_EQ(rq.x_adv, direct.x_adv);
  EXPECT_EQ(rq.total_queries, 2 * 21);
}

TEST_F(ToyAttackTest, MfItPipelineNeedsNoTargetImage) {
  ToyCase tc = make_toy_case(world_, *victim_, 6);
  TransferConfig t;
  t.steps = 10;
  t.objective = TransferObjective::kMfIt;
  AttackComponents comp = Components();
  comp.target_provider = nullptr;
  EXPECT_NO_THROW(attack_pipeline(tc.attack_case, tc.clean, t, Query(1, 0), comp));
  t.objective = TransferObjective::kMfIi;
  EXPECT_THROW(attack_pipeline(tc.attack_case, tc.clean, t, Query(1, 0), comp),
               Error);
}

TEST_F(ToyAttackTest, CombinedBeatsEachPureStrategyOnAverage) {
  TransferConfig t;  // MF-ii, 100 steps
  TransferConfig no_t = t;
  no_t.steps = 0;
  double combined = 0, transfer_only = 0, query_only = 0;
  const int cases = 50;
  for (int s = 0; s < cases; ++s) {
    ToyCase tc = make_toy_case(world_, *victim_, 1000 + s);
    QueryConfig q;
    q.steps = 10;
    q.seed = derive_seed(77, {static_cast<std::uint64_t>(s)});
    QueryConfig no_q = q;
    no_q.steps = 0;
    combined += attack_pipeline(tc.attack_case, tc.clean, t, q, Components()).final_mf_tt;
    transfer_only +=
        attack_pipeline(tc.attack_case, tc.clean, t, no_q, Components()).final_mf_tt;
    query_only +=
        attack_pipeline(tc.attack_case, tc.clean, no_t, q, Components()).final_mf_tt;
  }
  EXPECT_GE(combined, transfer_only);
  EXPECT_GE(combined, query_only);
}

// ---------------------------------------------------------------------------
// Budget splits.

TEST(BudgetSplitTest, LabelAndValidation) {
  EXPECT_EQ((BudgetSplit{8, 0, 8}).Label(), "t8-q0");
  EXPECT_EQ((BudgetSplit{2.5, 5.5, 8}).Label(), "t2.5-q5.5");
  EXPECT_THROW((BudgetSplit{-1, 9, 8}).Validate(), Error);
  EXPECT_THROW((BudgetSplit{4, 2, 8}).Validate(), Error);
  EXPECT_NO_THROW((BudgetSplit{4, 4, 8}).Validate());
}

TEST(BudgetSplitTest, StageConfigs) {
  TransferConfig t;
  QueryConfig q;
  q.steps = 4;
  auto [t1, q1] = split_configs({8, 0, 8}, t, q);
  EXPECT_EQ(t1.budget.epsilon(), 8.0);
  EXPECT_EQ(q1.steps, 0);
  auto [t2, q2] = split_configs({0, 8, 8}, t, q);
  EXPECT_EQ(t2.steps, 0);
  EXPECT_EQ(q2.budget.epsilon(), 8.0);
  auto [t3, q3] = split_configs({2, 6, 8}, t, q);
  EXPECT_EQ(t3.budget.epsilon(), 2.0);
  EXPECT_EQ(q3.budget.epsilon(), 8.0);
  EXPECT_EQ(q3.steps, 4);
}

TEST_F(ToyAttackTest, SplitsMatchPureAttacksAndStayInBudget) {
  std::vector<AttackCase> cases;
  std::map<std::string, PixelImage> clean;
  for (int s = 0; s < 4; ++s) {
    ToyCase tc = make_toy_case(world_, *victim_, 200 + s);
    cases.push_back(tc.attack_case);
    clean.emplace(tc.attack_case.id, tc.clean);
  }
  auto load = [&](const AttackCase& c) { return clean.at(c.id); };
  TransferConfig t;
  t.steps = 20;
  QueryConfig q = Query(2, 3);
  const auto encoders =
      std::vector<std::shared_ptr<const TextEncoder>>{world_.text_encoder()};

  const SplitReport pure_t =
      budget_split_run({8, 0, 8}, cases, load, t, q, Components(), encoders);
  const SplitReport pure_q =
      budget_split_run({0, 8, 8}, cases, load, t, q, Components(), encoders);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    QueryConfig no_q = q;
    no_q.steps = 0;
    TransferConfig no_t = t;
    no_t.steps = 0;
    const auto& x = clean.at(cases[i].id);
    ASSERT_EQ(pure_t.rows[i].final_text,
              attack_pipeline(cases[i], x, t, no_q, Components()).final_text);
    ASSERT_EQ(pure_q.rows[i].final_text,
              attack_pipeline(cases[i], x, no_t, q, Components()).final_text);
  }
  for (const BudgetSplit& s : {BudgetSplit{8, 0, 8}, BudgetSplit{6, 2, 8},
                               BudgetSplit{4, 4, 8}, BudgetSplit{0, 8, 8}}) {
    const SplitReport r = budget_split_run(s, cases, load, t, q, Components(),
                                           encoders);
    for (const auto& row : r.rows) {
      ASSERT_TRUE(row.error.empty()) << row.error;
      ASSERT_LE(row.linf, 8.0);
    }
  }
}

}  // namespace
}  // namespace vlmattack

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "ilmt/decoding.hpp"
#include "ilmt/lm.hpp"
#include "ilmt/losses.hpp"
#include "decode_oracles.hpp"
#include "test_util.hpp"

namespace ilmt {
namespace {

using testing::random_features;
using testing::random_tokens;

using testing::Fixture;
using testing::make_fixture;
using testing::argmax;
using testing::aed_exhaustive;
using testing::rnnt_exhaustive;

std::vector<FusionConfig> method_grid(int beam) {
  std::vector<FusionConfig> out;
  out.push_back({FusionMethod::None, 0.0, 0.0, beam});
  out.push_back({FusionMethod::ShallowFusion, 0.7, 0.0, beam});
  out.push_back({FusionMethod::DensityRatio, 0.8, 0.5, beam});
  out.push_back({FusionMethod::Ilme, 0.9, 0.6, beam});
  out.push_back({FusionMethod::Ilme, 1.5, 1.2, beam});
  return out;
}

void expect_same_hypothesis(const Hypothesis& a, const Hypothesis& b, double tol) {
  EXPECT_EQ(a.prefix, b.prefix);
  EXPECT_NEAR(a.score_total, b.score_total, tol);
  EXPECT_NEAR(a.score_e2e, b.score_e2e, tol);
  EXPECT_NEAR(a.score_ext_lm, b.score_ext_lm, tol);
  EXPECT_NEAR(a.score_ilm, b.score_ilm, tol);
}

TEST(RnntBeamSearch, MatchesExhaustiveSearch) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Fixture fx = make_fixture(Family::Rnnt, 2, seed);
    Rng rng(seed + 100);
    const FeatureSequence x = random_features(rng, fx.cfg.input_dim(), 2);
    const LmScorer ext(fx.ext, fx.lm_cfg), src(fx.src, fx.lm_cfg);
    for (const FusionConfig& f : method_grid(64)) {
      const auto all = rnnt_exhaustive(fx, x, f, 2);
      ASSERT_LE(all.size(), 200u);
      const DecodeResult r = rnnt_beam_search(fx.params, fx.cfg.rnnt, x, f, {&ext, &src}, {2, 0});
      expect_same_hypothesis(r.best(), argmax(all), 1e-9);
      // Without pruning every complete hypothesis carries its offline score.
      EXPECT_EQ(r.hypotheses.size(), all.size());
      for (const auto& h : r.hypotheses) expect_same_hypothesis(h, all.at(h.prefix), 1e-9);
    }
  }
}

TEST(AedBeamSearch, MatchesExhaustiveSearch) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Fixture fx = make_fixture(Family::Aed, 2, seed);
    Rng rng(seed + 200);
    const FeatureSequence x = random_features(rng, fx.cfg.input_dim(), 3);
    const LmScorer ext(fx.ext, fx.lm_cfg), src(fx.src, fx.lm_cfg);
    for (const FusionConfig& f : method_grid(64)) {
      const auto all = aed_exhaustive(fx, x, f, 3);
      ASSERT_LE(all.size(), 200u);
      const DecodeResult r = aed_beam_search(fx.params, fx.cfg.aed, x, f, {&ext, &src}, {2, 3});
      expect_same_hypothesis(r.best(), argmax(all), 1e-9);
      EXPECT_EQ(r.hypotheses.size(), all.size());
      for (const auto& h : r.hypotheses) expect_same_hypothesis(h, all.at(h.prefix), 1e-9);
    }
  }
}

class Identities : public ::testing::TestWithParam<Family> {
 protected:
  void SetUp() override {
    fx_ = make_fixture(GetParam(), 6, 42, 2.0);
    Rng rng(43);
    for (int i = 0; i < 6; ++i) inputs_.push_back(random_features(rng, fx_.cfg.input_dim(), 4 + i));
  }
  DecodeResult decode(const FeatureSequence& x, const FusionConfig& f) const {
    const LmScorer ext(fx_.ext, fx_.lm_cfg), src(fx_.src, fx_.lm_cfg);
    return beam_search(fx_.cfg, fx_.params, x, f, {&ext, &src});
  }
  Fixture fx_;
  std::vector<FeatureSequence> inputs_;
};

void expect_identical(const DecodeResult& a, const DecodeResult& b) {
  ASSERT_EQ(a.hypotheses.size(), b.hypotheses.size());
  for (std::size_t i = 0; i < a.hypotheses.size(); ++i) {
    EXPECT_EQ(a.hypotheses[i].prefix, b.hypotheses[i].prefix);
    EXPECT_EQ(a.hypotheses[i].score_total, b.hypotheses[i].score_total);
  }
}

TEST_P(Identities, IlmeWithZeroSubtractionEqualsShallowFusion) {
  for (const auto& x : inputs_)
    expect_identical(decode(x, {FusionMethod::Ilme, 0.8, 0.0, 4}), decode(x, {FusionMethod::ShallowFusion, 0.8, 0.0, 4}));
}

TEST_P(Identities, ZeroWeightsEqualNoLm) {
  for (const auto& x : inputs_) {
    const DecodeResult none = decode(x, {FusionMethod::None, 0.0, 0.0, 4});
    for (FusionMethod m : {FusionMethod::ShallowFusion, FusionMethod::DensityRatio, FusionMethod::Ilme})
      expect_identical(decode(x, {m, 0.0, 0.0, 4}), none);
  }
}

TEST_P(Identities, BeamOneEqualsGreedy) {
  std::size_t emitted = 0;
  for (const auto& x : inputs_) {
    const TokenSequence g = greedy_decode(fx_.cfg, fx_.params, x);
    EXPECT_EQ(decode(x, {FusionMethod::None, 0.0, 0.0, 1}).best().prefix, g);
    emitted += g.size();
  }
  EXPECT_GT(emitted, 0u);  // the comparison is not between empty outputs
}

// Density ratio with the model's own internal LM as the "source LM" is ILME.
TEST_P(Identities, DensityRatioWithIlmCopyEqualsIlme) {
  const auto ilm = make_ilm_scorer(fx_.cfg, fx_.params);
  const LmScorer ext(fx_.ext, fx_.lm_cfg);
  for (const auto& x : inputs_) {
    const DecodeResult a = beam_search(fx_.cfg, fx_.params, x, {FusionMethod::DensityRatio, 0.6, 0.4, 4}, {&ext, ilm.get()});
    const DecodeResult b = beam_search(fx_.cfg, fx_.params, x, {FusionMethod::Ilme, 0.6, 0.4, 4}, {&ext, nullptr});
    expect_identical(a, b);
  }
}

TEST_P(Identities, ScoreDecompositionHolds) {
  for (const auto& x : inputs_) {
    const FusionConfig f{FusionMethod::Ilme, 0.6, 0.3, 4};
    for (const auto& h : decode(x, f).hypotheses)
      EXPECT_EQ(h.score_total, h.score_e2e + 0.6 * h.score_ext_lm - 0.3 * h.score_ilm);
  }
}

// Enlarging the beam never lowers the best fused score on these inputs.
TEST_P(Identities, BeamMonotonicity) {
  for (const auto& x : inputs_)
    for (const FusionConfig& base : method_grid(1)) {
      double prev = -std::numeric_limits<double>::infinity();
      for (int beam : {1, 2, 4, 8}) {
        FusionConfig f = base;
        f.beam_size = beam;
        const double s = decode(x, f).best().score_total;
        EXPECT_GE(s, prev) << to_string(f.method) << " beam " << beam;
        prev = s;
      }
    }
}

TEST_P(Identities, ConfigErrors) {
  const auto& x = inputs_[0];
  const LmScorer ext(fx_.ext, fx_.lm_cfg);
  EXPECT_THROW(decode(x, {FusionMethod::None, 0.0, 0.0, 0}), ConfigError);
  EXPECT_THROW(beam_search(fx_.cfg, fx_.params, x, {FusionMethod::DensityRatio, 0.5, 0.5, 2}, {&ext, nullptr}),
               ConfigError);
  EXPECT_THROW(beam_search(fx_.cfg, fx_.params, x, {FusionMethod::ShallowFusion, 0.5, 0.0, 2}, {}), ConfigError);
  EXPECT_THROW(decode(x, {FusionMethod::Ilme, -0.5, 0.0, 2}), ConfigError);
  LmConfig other = fx_.lm_cfg;
  other.vocab_size += 1;
  const ParamStore op = make_lm_params(other);
  const LmScorer wrong(op, other);
  EXPECT_THROW(beam_search(fx_.cfg, fx_.params, x, {FusionMethod::ShallowFusion, 0.5, 0.0, 2}, {&wrong, nullptr}),
               ConfigError);
  // ILME needs nothing beyond the model.
  EXPECT_NO_THROW(beam_search(fx_.cfg, fx_.params, x, {FusionMethod::Ilme, 0.0, 0.5, 2}, {&ext, nullptr}));
}

INSTANTIATE_TEST_SUITE_P(Families, Identities, ::testing::Values(Family::Rnnt, Family::Aed),
                         [](const auto& info) { return to_string(info.param); });

TEST(FusedStepScores, BlankCarriesE2EOnly) {
  const Vector e2e = (Vector(4) << -1.0, -2.0, -3.0, -0.5).finished();
  const Vector ext = (Vector(4) << -0.1, -0.2, -0.3, -9.0).finished();
  const Vector sub = (Vector(3) << -1.5, -0.5, -2.5).finished();
  for (FusionMethod m : {FusionMethod::None, FusionMethod::ShallowFusion, FusionMethod::DensityRatio, FusionMethod::Ilme})
    EXPECT_EQ(fused_step_scores(Family::Rnnt, e2e, ext, sub, {m, 0.7, 0.4, 1})[3], -0.5);
  const Vector ilme = fused_step_scores(Family::Rnnt, e2e, ext, sub, {FusionMethod::Ilme, 0.7, 0.4, 1});
  EXPECT_DOUBLE_EQ(ilme[1], -2.0 + 0.7 * -0.2 - 0.4 * -0.5);
  EXPECT_EQ(fused_step_scores(Family::Rnnt, e2e, ext, sub, {FusionMethod::Ilme, 0.7, 0.0, 1}),
            fused_step_scores(Family::Rnnt, e2e, ext, sub, {FusionMethod::ShallowFusion, 0.7, 0.0, 1}));
  // AED: the last entry is <eos> and is fused.
  const Vector sub4 = (Vector(4) << -1.5, -0.5, -2.5, -0.25).finished();
  const Vector aed = fused_step_scores(Family::Aed, e2e, ext, sub4, {FusionMethod::Ilme, 0.7, 0.4, 1});
  EXPECT_DOUBLE_EQ(aed[3], -0.5 + 0.7 * -9.0 - 0.4 * -0.25);
}

struct Utt {
  FeatureSequence x;
  TokenSequence y;
};

TEST(Sweep, GridBehaviour) {
  const Fixture fx = make_fixture(Family::Rnnt, 6, 9, 2.0);
  Rng rng(10);
  std::vector<Utt> dev;
  for (int i = 0; i < 4; ++i) dev.push_back({random_features(rng, fx.cfg.input_dim(), 5), random_tokens(rng, 6, 3)});
  const LmScorer ext(fx.ext, fx.lm_cfg);
  const FusionScorers lms{&ext, nullptr};
  const FusionConfig ilme{FusionMethod::Ilme, 0, 0, 2};
  const SweepResult single = sweep_lambdas(fx.cfg, fx.params, dev, {{0.3, 0.2}}, ilme, lms);
  EXPECT_EQ(single.best.lambda_ext, 0.3);
  EXPECT_EQ(single.best.lambda_ilm, 0.2);

  const SweepResult grid = sweep_lambdas(fx.cfg, fx.params, dev, {{0.5, 0.5}, {0.0, 0.0}, {0.5, 0.0}}, ilme, lms);
  ASSERT_EQ(grid.grid.size(), 3u);
  EditCounts none;
  for (const auto& u : dev)
    none += wer(u.y, beam_search(fx.cfg, fx.params, u.x, {FusionMethod::None, 0, 0, 2}, lms).best().prefix);
  EXPECT_EQ(grid.grid[1].counts.errors(), none.errors());
  for (const auto& pt : grid.grid) EXPECT_GE(pt.counts.rate(), grid.best.counts.rate());

  // All-equal WERs resolve to the smallest lambda_ilm, then lambda_ext.
  const SweepResult ties = sweep_lambdas(fx.cfg, fx.params, dev, {{0.0, 0.0}, {0.0, 0.0}}, ilme, lms);
  EXPECT_EQ(ties.best.lambda_ilm, 0.0);
  EXPECT_THROW(sweep_lambdas(fx.cfg, fx.params, std::vector<Utt>{}, {{0, 0}}, ilme, lms), ConfigError);
  EXPECT_THROW(sweep_lambdas(fx.cfg, fx.params, dev, {}, ilme, lms), ConfigError);
}

}  // namespace
}  // namespace ilmt

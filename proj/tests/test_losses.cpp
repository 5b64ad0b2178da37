#include <gtest/gtest.h>

#include "ilmt/losses.hpp"
#include "test_util.hpp"

namespace ilmt {
namespace {

using testing::random_features;
using testing::random_tokens;

TEST(RnntLoss, SingleFrameNoLabelsIsBlankProbability) {
  Rng rng(1);
  const RnntConfig cfg = testing::tiny_rnnt();
  const ParamStore p = make_rnnt_params(cfg, rng);
  const FeatureSequence x = random_features(rng, cfg.input_dim, 1);
  const Matrix H = rnnt_encode(p, cfg, x);
  const RecurrentState s = rnnt_pred_start(p, cfg);
  const LogProbVector lp = log_softmax(rnnt_joint(p, H.col(0), s.back().h).logits);
  EXPECT_NEAR(rnnt_loss(p, cfg, x, {}), -lp[cfg.vocab_size], 1e-12);
}

TEST(RnntLoss, MatchesExhaustiveAlignmentSum) {
  Rng rng(2);
  const RnntConfig cfg = testing::tiny_rnnt();
  for (int trial = 0; trial < 20; ++trial) {
    ParamStore p = make_rnnt_params(cfg, rng);
    testing::scale_params(p, 3.0);
    const int T = 1 + trial % 3;
    const auto U = static_cast<std::size_t>(trial % 4);
    const FeatureSequence x = random_features(rng, cfg.input_dim, T);
    const TokenSequence y = random_tokens(rng, cfg.vocab_size, U);
    EXPECT_NEAR(rnnt_loss(p, cfg, x, y), testing::rnnt_bruteforce_nll(p, cfg, x, y), 1e-9)
        << "T=" << T << " U=" << U;
  }
}

TEST(RnntLoss, GradientPassesFiniteDifferences) {
  Rng rng(3);
  const RnntConfig cfg = testing::tiny_rnnt();
  ParamStore p = make_rnnt_params(cfg, rng);
  testing::scale_params(p, 2.0);
  const FeatureSequence x = random_features(rng, cfg.input_dim, 3);
  const TokenSequence y = random_tokens(rng, cfg.vocab_size, 2);
  const auto r = grad_check([&](const ParamStore& q, ParamStore* g) { return rnnt_loss(q, cfg, x, y, g); }, p);
  EXPECT_TRUE(r.passed) << r.worst_param << "[" << r.worst_index << "] rel=" << r.max_rel_error;
}

TEST(RnntIlmLoss, GradientAndStructuralZeros) {
  Rng rng(4);
  const RnntConfig cfg = testing::tiny_rnnt();
  ParamStore p = make_rnnt_params(cfg, rng);
  testing::scale_params(p, 2.0);
  const TokenSequence y = random_tokens(rng, cfg.vocab_size, 3);
  const auto r = grad_check([&](const ParamStore& q, ParamStore* g) { return rnnt_ilm_loss(q, cfg, y, g); }, p);
  EXPECT_TRUE(r.passed) << r.worst_param << " rel=" << r.max_rel_error;
  ParamStore g = p.zeros_like();
  rnnt_ilm_loss(p, cfg, y, &g);
  for (const auto& [name, m] : g.entries()) {
    if (is_rnnt_encoder_param(name)) {
      EXPECT_TRUE((m.array() == 0.0).all()) << name;
    }
  }
}

TEST(RnntIlmLoss, ZeroParamsGiveUniform) {
  const RnntConfig cfg = testing::tiny_rnnt(5);
  const ParamStore p = make_rnnt_params(cfg);
  EXPECT_NEAR(rnnt_ilm_loss(p, cfg, {0, 1, 4}), 3.0 * std::log(5.0), 1e-12);
}

TEST(AedLoss, GradientPassesFiniteDifferences) {
  Rng rng(5);
  const AedConfig cfg = testing::tiny_aed();
  ParamStore p = make_aed_params(cfg, rng);
  testing::scale_params(p, 2.0);
  const FeatureSequence x = random_features(rng, cfg.input_dim, 4);
  const TokenSequence y = random_tokens(rng, cfg.vocab_size, 3);
  const auto r = grad_check([&](const ParamStore& q, ParamStore* g) { return aed_loss(q, cfg, x, y, g); }, p);
  EXPECT_TRUE(r.passed) << r.worst_param << "[" << r.worst_index << "] rel=" << r.max_rel_error
                        << " a=" << r.worst_analytic << " n=" << r.worst_numeric;
}

TEST(AedIlmLoss, GradientAndStructuralZeros) {
  Rng rng(6);
  const AedConfig cfg = testing::tiny_aed();
  ParamStore p = make_aed_params(cfg, rng);
  testing::scale_params(p, 2.0);
  const TokenSequence y = random_tokens(rng, cfg.vocab_size, 3);
  const auto r = grad_check([&](const ParamStore& q, ParamStore* g) { return aed_ilm_loss(q, cfg, y, g); }, p);
  EXPECT_TRUE(r.passed) << r.worst_param << " rel=" << r.max_rel_error;
  ParamStore g = p.zeros_like();
  aed_ilm_loss(p, cfg, y, &g);
  for (const auto& [name, m] : g.entries()) {
    if (is_aed_encoder_param(name) || is_aed_attention_param(name)) {
      EXPECT_TRUE((m.array() == 0.0).all()) << name;
    }
  }
}

TEST(AedLoss, ZeroParamsGiveUniform) {
  const AedConfig cfg = testing::tiny_aed(5);
  const ParamStore p = make_aed_params(cfg);
  Rng rng(7);
  const FeatureSequence x = random_features(rng, cfg.input_dim, 4);
  EXPECT_NEAR(aed_loss(p, cfg, x, {0, 1, 4}), 4.0 * std::log(6.0), 1e-12);
  EXPECT_NEAR(aed_ilm_loss(p, cfg, {0, 1, 4}), 4.0 * std::log(6.0), 1e-12);
}

TEST(AedLoss, EmptyTranscriptIsSingleEosTerm) {
  Rng rng(8);
  const AedConfig cfg = testing::tiny_aed();
  const ParamStore p = make_aed_params(cfg, rng);
  const FeatureSequence x = random_features(rng, cfg.input_dim, 3);
  const AedEncoded enc = aed_encode(p, cfg, x);
  const AedStepResult r = aed_decode_step(p, cfg, enc, aed_initial_state(p, cfg, enc), cfg.vocab_size);
  EXPECT_NEAR(aed_loss(p, cfg, x, {}), -r.log_probs[cfg.vocab_size], 1e-12);
}

TEST(AedLoss, RejectsOutOfVocabularyToken) {
  const AedConfig cfg = testing::tiny_aed();
  const ParamStore p = make_aed_params(cfg);
  Rng rng(9);
  const FeatureSequence x = random_features(rng, cfg.input_dim, 3);
  EXPECT_THROW(aed_loss(p, cfg, x, {0, cfg.vocab_size}), std::invalid_argument);
  EXPECT_THROW(rnnt_ilm_loss(make_rnnt_params(testing::tiny_rnnt()), testing::tiny_rnnt(), {-1}),
               std::invalid_argument);
}

E2EConfig tiny_e2e(Family f) {
  E2EConfig c;
  c.family = f;
  c.rnnt = testing::tiny_rnnt();
  c.aed = testing::tiny_aed();
  return c;
}

class IlmtLoss : public ::testing::TestWithParam<Family> {};

TEST_P(IlmtLoss, GradientPassesFiniteDifferences) {
  Rng rng(10);
  const E2EConfig cfg = tiny_e2e(GetParam());
  ParamStore p = make_e2e_params(cfg, rng);
  testing::scale_params(p, 2.0);
  const FeatureSequence x = random_features(rng, cfg.input_dim(), 3);
  const TokenSequence y = random_tokens(rng, cfg.vocab_size(), 2);
  const double alpha = GetParam() == Family::Rnnt ? 0.4 : 1.0;
  const auto r = grad_check(
      [&](const ParamStore& q, ParamStore* g) { return ilmt_loss(cfg, q, x, y, alpha, g).total; }, p);
  EXPECT_TRUE(r.passed) << r.worst_param << " rel=" << r.max_rel_error;
}

TEST_P(IlmtLoss, ZeroWeightEqualsPlainLossBitForBit) {
  Rng rng(11);
  const E2EConfig cfg = tiny_e2e(GetParam());
  const ParamStore p = make_e2e_params(cfg, rng);
  const FeatureSequence x = random_features(rng, cfg.input_dim(), 4);
  const TokenSequence y = random_tokens(rng, cfg.vocab_size(), 3);
  ParamStore g0 = p.zeros_like(), g1 = p.zeros_like();
  const double plain = e2e_loss(cfg, p, x, y, &g0);
  const LossReport r = ilmt_loss(cfg, p, x, y, 0.0, &g1);
  EXPECT_EQ(r.total, plain);
  EXPECT_TRUE(g0 == g1);
}

TEST_P(IlmtLoss, NegativeWeightIsConfigError) {
  const E2EConfig cfg = tiny_e2e(GetParam());
  const ParamStore p = make_e2e_params(cfg);
  Rng rng(12);
  const FeatureSequence x = random_features(rng, cfg.input_dim(), 2);
  EXPECT_THROW(ilmt_loss(cfg, p, x, {0}, -0.1), ConfigError);
}

TEST_P(IlmtLoss, IlmTermIgnoresEncoderMutation) {
  Rng rng(13);
  const E2EConfig cfg = tiny_e2e(GetParam());
  const ParamStore p = make_e2e_params(cfg, rng);
  const TokenSequence y = random_tokens(rng, cfg.vocab_size(), 4);
  ParamStore q = p;
  for (const auto& name : q.names()) {
    const bool acoustic = GetParam() == Family::Rnnt ? is_rnnt_encoder_param(name)
                                                     : (is_aed_encoder_param(name) || is_aed_attention_param(name));
    if (acoustic) q.mut(name).setConstant(0.37);
  }
  EXPECT_EQ(ilm_loss(cfg, p, y), ilm_loss(cfg, q, y));
}

// A small step along the negative ILMT gradient reduces the ILM component.
TEST_P(IlmtLoss, StepDecreasesIlmLoss) {
  Rng rng(14);
  const E2EConfig cfg = tiny_e2e(GetParam());
  const ParamStore p = make_e2e_params(cfg, rng);
  const FeatureSequence x = random_features(rng, cfg.input_dim(), 4);
  const TokenSequence y = random_tokens(rng, cfg.vocab_size(), 3);
  const double alpha = 1.0;
  ParamStore g = p.zeros_like();
  const LossReport before = ilmt_loss(cfg, p, x, y, alpha, &g);
  ParamStore ilm_g = p.zeros_like();
  ilm_loss(cfg, p, y, &ilm_g);
  bool decreased = false;
  for (double step = 1e-1; step > 1e-6 && !decreased; step /= 4) {
    ParamStore q = p;
    q.axpy(-step, ilm_g);
    decreased = ilm_loss(cfg, q, y) < before.ilm_part;
  }
  EXPECT_TRUE(decreased);
  ParamStore q = p;
  q.axpy(-1e-3, g);
  EXPECT_LT(ilmt_loss(cfg, q, x, y, alpha).total, before.total);
}

INSTANTIATE_TEST_SUITE_P(Families, IlmtLoss, ::testing::Values(Family::Rnnt, Family::Aed),
                         [](const auto& info) { return to_string(info.param); });

}  // namespace
}  // namespace ilmt

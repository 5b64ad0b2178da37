#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "ilmt/checkpoint.hpp"
#include "ilmt/grad_check.hpp"
#include "ilmt/optimizer.hpp"
#include "ilmt/param_store.hpp"

namespace ilmt {
namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

TEST(LogSoftmax, UniformLogits) {
  const LogProbVector lp = log_softmax(Vector::Zero(4));
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(lp[i], -std::log(4.0), 1e-15);
  EXPECT_TRUE(lp.normalized);
}

TEST(LogSoftmax, ShiftInvariance) {
  const double c = 812.5, delta = 3.25;
  const LogProbVector a = log_softmax(vec({c, c + delta}));
  const LogProbVector b = log_softmax(vec({0.0, delta}));
  EXPECT_NEAR(a[0], b[0], 1e-12);
  EXPECT_NEAR(a[1], b[1], 1e-12);
}

TEST(LogSoftmax, MatchesExtendedPrecisionReference) {
  Rng rng(4);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    Vector z(5);
    for (auto& v : z) v = n(rng);
    long double sum = 0;
    for (double v : z) sum += std::exp(static_cast<long double>(v));
    const LogProbVector lp = log_softmax(z);
    for (Eigen::Index i = 0; i < 5; ++i)
      EXPECT_NEAR(lp[i], static_cast<double>(static_cast<long double>(z[i]) - std::log(sum)), 1e-12);
    EXPECT_NEAR(log_sum_exp(lp.values), 0.0, 1e-9);
  }
}

TEST(LogSoftmax, ExtremeLogitsStayFinite) {
  const LogProbVector lp = log_softmax(vec({1e4, -1e4, 0.0}));
  EXPECT_TRUE(lp.values.allFinite());
  EXPECT_NEAR(lp[0], 0.0, 1e-15);
}

TEST(LogSoftmax, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(log_softmax(Vector(0)), std::invalid_argument);
  try {
    log_softmax(vec({0.0, std::numeric_limits<double>::quiet_NaN(), 1.0}));
    FAIL() << "expected an exception";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find('1'), std::string::npos) << e.what();
  }
  EXPECT_THROW(log_softmax(vec({0.0, std::numeric_limits<double>::infinity()})), std::invalid_argument);
}

TEST(LogAdd, HandlesLogZero) {
  EXPECT_EQ(log_add(kLogZero, kLogZero), kLogZero);
  EXPECT_EQ(log_add(kLogZero, -2.0), -2.0);
  EXPECT_NEAR(log_add(std::log(0.25), std::log(0.5)), std::log(0.75), 1e-15);
}

TEST(ParamStore, ShapesAreFixedAndNamesUnique) {
  ParamStore p;
  p.add("w", 2, 3);
  EXPECT_THROW(p.add("w", 2, 3), std::invalid_argument);
  EXPECT_THROW((void)p.get("missing"), std::invalid_argument);
  EXPECT_THROW(p.add("z", 0, 3), std::invalid_argument);
  EXPECT_EQ(p.get("w").rows(), 2);
  EXPECT_EQ(p.num_elements(), 6u);
  ParamStore g = p.zeros_like();
  EXPECT_TRUE(p.same_shapes(g));
}

TEST(ParamStore, AssignFromNamesMismatchedParameter) {
  ParamStore a, b;
  a.add("enc.w", 2, 2);
  b.add("enc.w", 3, 2);
  try {
    a.assign_from(b);
    FAIL() << "expected an exception";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("enc.w"), std::string::npos) << e.what();
  }
}

TEST(ParamStore, InitIsUniformWithinFanInBound) {
  ParamStore p;
  p.add("w", 50, 16);
  p.add("b", 50, 1);
  Rng rng(1);
  init_uniform(p, rng);
  EXPECT_LE(p.get("w").cwiseAbs().maxCoeff(), 0.25);
  EXPECT_GT(p.get("w").cwiseAbs().maxCoeff(), 0.2);
  EXPECT_LE(p.get("b").cwiseAbs().maxCoeff(), 1.0 / std::sqrt(50.0));
  ParamStore q;
  q.add("w", 50, 16);
  q.add("b", 50, 1);
  Rng rng2(1);
  init_uniform(q, rng2);
  EXPECT_TRUE(p == q);
}

ParamStore random_store(std::uint64_t seed) {
  ParamStore p;
  p.add("a", 3, 4);
  p.add("b", 5, 1);
  Rng rng(seed);
  init_uniform(p, rng);
  return p;
}

TEST(GradCheck, QuadraticIsExact) {
  const Objective f = [](const ParamStore& p, ParamStore* g) {
    double s = 0;
    for (const auto& [name, m] : p.entries()) {
      s += m.squaredNorm();
      if (g) g->mut(name) += 2.0 * m;
    }
    return s;
  };
  const GradCheckReport r = grad_check(f, random_store(2));
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_error, 1e-8);
  EXPECT_EQ(r.checked, 17u);
}

TEST(GradCheck, DetectsWrongGradient) {
  const Objective f = [](const ParamStore& p, ParamStore* g) {
    const double s = p.get("a").array().cube().sum();
    if (g) g->mut("a") += 3.0 * p.get("a").array().square().matrix() * 1.01;
    return s;
  };
  const GradCheckReport r = grad_check(f, random_store(3));
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.worst_param, "a");
}

TEST(GradCheck, RejectsNonDeterministicObjective) {
  int calls = 0;
  const Objective f = [&calls](const ParamStore& p, ParamStore*) { return p.get("a").sum() + 1e-3 * ++calls; };
  EXPECT_THROW(grad_check(f, random_store(4)), std::runtime_error);
}

TEST(GradCheck, RejectsBadStep) {
  const Objective f = [](const ParamStore& p, ParamStore*) { return p.get("a").sum(); };
  GradCheckOptions o;
  o.eps = 1e-2;
  EXPECT_THROW(grad_check(f, random_store(5), o), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ParamStore p = random_store(6);
  p.mut("a")(0, 0) = -0.0;
  p.mut("a")(1, 1) = std::numeric_limits<double>::denorm_min();
  const CheckpointHeader h{"rnnt", 32, {{"encoder_dim", 64}}};
  std::stringstream ss;
  write_checkpoint(ss, h, p);
  CheckpointHeader h2;
  ParamStore q;
  read_checkpoint(ss, h2, q);
  EXPECT_EQ(h, h2);
  ASSERT_EQ(q.names(), p.names());
  for (const auto& name : p.names())
    EXPECT_EQ(std::memcmp(p.get(name).data(), q.get(name).data(), sizeof(double) * p.get(name).size()), 0);
  EXPECT_TRUE(std::signbit(q.get("a")(0, 0)));
}

TEST(Checkpoint, LayoutIsLittleEndianWithMagic) {
  ParamStore p;
  p.add("x", 1, 1);
  p.mut("x")(0, 0) = 1.0;
  std::stringstream ss;
  write_checkpoint(ss, {"lm", 4, {}}, p);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 8), "ILMTCKPT");
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[9], 0);
  // last 8 bytes: 1.0 = 0x3FF0000000000000 little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 1]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 2]), 0xF0);
}

TEST(Checkpoint, CorruptInputIsRejected) {
  std::stringstream bad("NOTACKPT");
  CheckpointHeader h;
  ParamStore p;
  EXPECT_THROW(read_checkpoint(bad, h, p), std::runtime_error);
  std::stringstream ss;
  write_checkpoint(ss, {"lm", 4, {}}, random_store(1));
  std::stringstream truncated(ss.str().substr(0, ss.str().size() - 3));
  EXPECT_THROW(read_checkpoint(truncated, h, p), std::runtime_error);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore p = random_store(7);
  const ParamStore before = p;
  ParamStore g = p.zeros_like();
  g.mut("a").setConstant(0.3);
  g.mut("b").setConstant(-0.2);
  Adam adam(p, {});
  adam.step(p, g);
  // Bias-corrected first step is lr * sign(g) (up to epsilon).
  EXPECT_NEAR((before.get("a") - p.get("a")).maxCoeff(), 1e-3, 1e-10);
  EXPECT_NEAR((p.get("b") - before.get("b")).minCoeff(), 1e-3, 1e-10);
}

TEST(Adam, ClipsGlobalNorm) {
  ParamStore p = random_store(8);
  ParamStore g = p.zeros_like();
  g.mut("a").setConstant(100.0);
  Adam adam(p, {});
  EXPECT_NEAR(adam.step(p, g), std::sqrt(12.0) * 100.0, 1e-9);
}

TEST(Adam, MinimizesQuadratic) {
  ParamStore p = random_store(9);
  AdamOptions o;
  o.learning_rate = 0.05;
  Adam adam(p, o);
  for (int i = 0; i < 500; ++i) {
    ParamStore g = p.zeros_like();
    for (const auto& name : p.names()) g.mut(name) = 2.0 * p.get(name);
    adam.step(p, g);
  }
  EXPECT_LT(p.squared_norm(), 1e-4);
}

}  // namespace
}  // namespace ilmt

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "ilmt/data.hpp"
#include "ilmt/wer.hpp"

namespace ilmt {
namespace {

DomainPair presets() { return make_domain_pair({}, 7); }

TEST(Domain, PresetsAreValidAndSeparated) {
  const DomainPair dp = presets();
  EXPECT_NO_THROW(validate_domain(dp.source));
  EXPECT_NO_THROW(validate_domain(dp.target));
  EXPECT_GT(mean_row_kl(dp.target.transitions, dp.source.transitions), 0.5);
  EXPECT_EQ(dp.source.vocab_size(), 32);
  EXPECT_EQ(dp.source.prototypes, dp.target.prototypes);
}

TEST(Domain, AbsorbingTokenIsRejected) {
  DomainSpec spec = presets().source;
  spec.transitions.row(3).setZero();
  spec.transitions(3, 3) = 1.0;
  EXPECT_THROW(validate_domain(spec), ConfigError);
  EXPECT_THROW(generate_corpus(spec, 10, 1), ConfigError);
}

TEST(Domain, UnnormalizedRowIsRejected) {
  DomainSpec spec = presets().source;
  spec.transitions(0, 1) += 0.1;
  EXPECT_THROW(validate_domain(spec), std::invalid_argument);
}

TEST(Corpus, TooFewUtterancesIsRejected) { EXPECT_THROW(generate_corpus(presets().source, 2, 1), ConfigError); }

TEST(Corpus, NoiselessRenderingReproducesPrototypes) {
  DomainSpec spec = presets().source;
  spec.noise = 0.0;
  spec.min_frames = spec.max_frames = 3;
  for (const auto& u : generate_utterances(spec, 20, 5, "x")) {
    ASSERT_EQ(u.x.num_frames(), 3 * static_cast<Eigen::Index>(u.y.size()));
    for (std::size_t k = 0; k < u.y.size(); ++k)
      for (Eigen::Index j = 0; j < 3; ++j)
        EXPECT_EQ(u.x.frames.col(3 * static_cast<Eigen::Index>(k) + j), spec.prototypes.col(u.y[k]));
  }
}

TEST(Corpus, ShapeInvariants) {
  const DomainSpec spec = presets().target;
  for (const auto& u : generate_utterances(spec, 200, 3, "t")) {
    EXPECT_GE(u.y.size(), 3u);
    EXPECT_LE(u.y.size(), 12u);
    EXPECT_GE(u.x.num_frames(), 2 * static_cast<Eigen::Index>(u.y.size()));
    EXPECT_LE(u.x.num_frames(), 4 * static_cast<Eigen::Index>(u.y.size()));
    EXPECT_TRUE(u.x.frames.allFinite());
    EXPECT_EQ(u.domain, "target");
  }
}

std::string corpus_bytes(const std::vector<Utterance>& utts) {
  std::ostringstream os;
  for (const auto& u : utts) os << utterance_to_json(u).dump() << '\n';
  return os.str();
}

TEST(Corpus, SameSeedIsByteIdentical) {
  const DomainSpec spec = presets().source;
  const CorpusSplits a = generate_corpus(spec, 50, 11);
  const CorpusSplits b = generate_corpus(spec, 50, 11);
  EXPECT_EQ(corpus_bytes(a.train), corpus_bytes(b.train));
  EXPECT_EQ(corpus_bytes(a.dev), corpus_bytes(b.dev));
  EXPECT_EQ(corpus_bytes(a.test), corpus_bytes(b.test));
  const CorpusSplits c = generate_corpus(spec, 50, 12);
  EXPECT_NE(corpus_bytes(a.train), corpus_bytes(c.train));
}

TEST(Corpus, SplitsAreDisjointById) {
  const CorpusSplits c = generate_corpus(presets().source, 100, 4);
  EXPECT_EQ(c.train.size(), 80u);
  EXPECT_EQ(c.dev.size(), 10u);
  EXPECT_EQ(c.test.size(), 10u);
  std::set<std::string> ids;
  for (const auto* split : {&c.train, &c.dev, &c.test})
    for (const auto& u : *split) EXPECT_TRUE(ids.insert(u.id).second) << u.id;
}

TEST(Corpus, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "ilmt_test_corpus";
  std::filesystem::create_directories(dir);
  const CorpusSplits c = generate_corpus(presets().source, 20, 9);
  write_corpus((dir / "train.jsonl").string(), c.train);
  const auto back = read_corpus((dir / "train.jsonl").string());
  EXPECT_EQ(corpus_bytes(back), corpus_bytes(c.train));
  ASSERT_EQ(back.size(), c.train.size());
  EXPECT_EQ(back[0].x.frames, c.train[0].x.frames);
  write_text((dir / "text.txt").string(), transcripts(c.train));
  EXPECT_EQ(read_text((dir / "text.txt").string()), transcripts(c.train));
  std::filesystem::remove_all(dir);
}

Matrix bigram_counts(const std::vector<TokenSequence>& text, int V) {
  Matrix counts = Matrix::Zero(V + 1, V);
  for (const auto& y : text) {
    int prev = V;
    for (int tok : y) {
      counts(prev, tok) += 1;
      prev = tok;
    }
  }
  return counts;
}

double row_tv(const Matrix& counts, const Matrix& spec, int r) {
  return 0.5 * (counts.row(r) / counts.row(r).sum() - spec.row(r)).cwiseAbs().sum();
}

// 10k sentences give 10k draws of the <sos> row but only ~2.3k of each
// token row, where sampling noise alone is about 0.02. The 0.02 bound is
// applied to the <sos> row and scaled by sqrt(10k / n) for the others.
TEST(Corpus, BigramStatisticsMatchSpec) {
  const DomainSpec spec = presets().source;
  const int V = spec.vocab_size();
  const Matrix counts = bigram_counts(sample_text(spec, 10000, 21), V);
  EXPECT_EQ(counts.row(V).sum(), 10000.0);
  EXPECT_LT(row_tv(counts, spec.transitions, V), 0.02);
  for (int r = 0; r < V; ++r) {
    const double n = counts.row(r).sum();
    ASSERT_GT(n, 0) << "row " << r;
    EXPECT_LT(row_tv(counts, spec.transitions, r), 0.02 * std::sqrt(10000.0 / n)) << "row " << r << " n=" << n;
  }
}

// With 300k sentences every row has more than 10k draws and must meet 0.02.
TEST(Corpus, BigramStatisticsEveryRowAtScale) {
  const DomainSpec spec = presets().target;
  const int V = spec.vocab_size();
  const Matrix counts = bigram_counts(sample_text(spec, 300000, 22), V);
  for (int r = 0; r <= V; ++r) {
    EXPECT_GT(counts.row(r).sum(), 10000.0) << "row " << r;
    EXPECT_LT(row_tv(counts, spec.transitions, r), 0.02) << "row " << r;
  }
}

TEST(Sampler, NormalMomentsAndDeterminism) {
  Sampler a(5), b(5);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = a.normal();
    ASSERT_EQ(x, b.normal());
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Wer, IdenticalIsZero) {
  const EditCounts c = wer({1, 2, 3}, {1, 2, 3});
  EXPECT_EQ(c.errors(), 0);
  EXPECT_EQ(c.rate(), 0.0);
}

TEST(Wer, HandCaseSubstitution) {
  // "a b c" vs "a x c"
  const EditCounts c = wer({0, 1, 2}, {0, 9, 2});
  EXPECT_EQ(c.substitutions, 1);
  EXPECT_EQ(c.insertions, 0);
  EXPECT_EQ(c.deletions, 0);
  EXPECT_DOUBLE_EQ(c.rate(), 1.0 / 3.0);
}

TEST(Wer, EmptyReferenceCountsInsertions) {
  const EditCounts c = wer({}, {4, 5});
  EXPECT_EQ(c.insertions, 2);
  EXPECT_EQ(c.errors(), 2);
  EXPECT_DOUBLE_EQ(c.rate(), 2.0);
  EXPECT_EQ(wer({1, 2}, {}).deletions, 2);
}

// Plain edit-distance DP with an explicit traceback that prefers diagonal
// moves; returns (S, I, D).
std::array<long, 3> dp_oracle(const TokenSequence& r, const TokenSequence& h) {
  const std::size_t R = r.size(), H = h.size();
  std::vector<std::vector<long>> d(R + 1, std::vector<long>(H + 1));
  std::vector<std::vector<long>> s(R + 1, std::vector<long>(H + 1, 0));
  for (std::size_t i = 0; i <= R; ++i) d[i][0] = static_cast<long>(i);
  for (std::size_t j = 0; j <= H; ++j) d[0][j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= R; ++i)
    for (std::size_t j = 1; j <= H; ++j) {
      const long sub = r[i - 1] != h[j - 1];
      d[i][j] = std::min({d[i - 1][j - 1] + sub, d[i - 1][j] + 1, d[i][j - 1] + 1});
      // most substitutions among optimal predecessors
      long best = -1;
      if (d[i - 1][j - 1] + sub == d[i][j]) best = std::max(best, s[i - 1][j - 1] + sub);
      if (d[i - 1][j] + 1 == d[i][j]) best = std::max(best, s[i - 1][j]);
      if (d[i][j - 1] + 1 == d[i][j]) best = std::max(best, s[i][j - 1]);
      s[i][j] = best;
    }
  // Traceback to count insertions and deletions explicitly.
  long S = 0, I = 0, D = 0;
  std::size_t i = R, j = H;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const long sub = r[i - 1] != h[j - 1];
      if (d[i - 1][j - 1] + sub == d[i][j] && s[i - 1][j - 1] + sub == s[i][j]) {
        S += sub;
        --i, --j;
        continue;
      }
    }
    if (i > 0 && d[i - 1][j] + 1 == d[i][j] && s[i - 1][j] == s[i][j]) {
      ++D;
      --i;
    } else {
      ++I;
      --j;
    }
  }
  return {S, I, D};
}

TEST(Wer, MatchesTracebackOracleAndIsSymmetric) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> len(0, 9), tok(0, 3);
  for (int trial = 0; trial < 2000; ++trial) {
    TokenSequence a(static_cast<std::size_t>(len(rng))), b(static_cast<std::size_t>(len(rng)));
    for (auto& v : a) v = tok(rng);
    for (auto& v : b) v = tok(rng);
    const EditCounts c = wer(a, b);
    const auto o = dp_oracle(a, b);
    ASSERT_EQ(c.substitutions, o[0]);
    ASSERT_EQ(c.insertions, o[1]);
    ASSERT_EQ(c.deletions, o[2]);
    const EditCounts r = wer(b, a);
    ASSERT_EQ(r.errors(), c.errors());
    ASSERT_EQ(r.substitutions, c.substitutions);
    ASSERT_EQ(r.insertions, c.deletions);
    ASSERT_EQ(r.deletions, c.insertions);
  }
}

TEST(Wer, CorpusWerPoolsCounts) {
  const std::vector<TokenSequence> refs{{1}, {1, 2, 3, 4, 5, 6, 7, 8, 9}};
  const std::vector<TokenSequence> hyps{{2}, {1, 2, 3, 4, 5, 6, 7, 8, 9}};
  const EditCounts c = corpus_wer(refs, hyps);
  EXPECT_DOUBLE_EQ(c.rate(), 0.1);  // the mean of per-utterance rates would be 0.5
  EXPECT_THROW(corpus_wer(refs, {{1}}), std::invalid_argument);
}

TEST(Wer, RelativeReduction) {
  EXPECT_DOUBLE_EQ(werr(0.2, 0.15), 0.25);
  EXPECT_DOUBLE_EQ(werr(0.2, 0.2), 0.0);
  EXPECT_LT(werr(0.2, 0.3), 0.0);
}

}  // namespace
}  // namespace ilmt

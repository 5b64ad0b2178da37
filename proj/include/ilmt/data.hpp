#pragma once

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ilmt/param_store.hpp"
#include "ilmt/types.hpp"

namespace ilmt {

/// Seeded sampling primitives with a fixed algorithm (no dependence on the
/// standard library's distribution implementations).
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  int uniform_int(int lo, int hi) {  // inclusive
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(rng_() % span);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  int categorical(const Eigen::Ref<const Vector>& probs) {
    const double r = uniform();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (r < acc) return static_cast<int>(i);
    }
    for (Eigen::Index i = probs.size() - 1; i >= 0; --i)
      if (probs[i] > 0) return static_cast<int>(i);
    return 0;
  }

  Rng& engine() { return rng_; }

 private:
  Rng rng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// A synthetic domain: a token-bigram "true LM" plus acoustic rendering.
struct DomainSpec {
  std::string name;
  // (V + 1) x V. Row v is P(next | v); row V is P(first | <sos>).
  Matrix transitions;
  // input_dim x V prototype vector per token.
  Matrix prototypes;
  int min_frames = 2;
  int max_frames = 4;
  double noise = 0.5;
  int min_length = 3;
  int max_length = 12;

  [[nodiscard]] int vocab_size() const { return static_cast<int>(transitions.cols()); }
  [[nodiscard]] int input_dim() const { return static_cast<int>(prototypes.rows()); }
};

inline void validate_domain(const DomainSpec& spec) {
  const int V = spec.vocab_size();
  require(V >= 1, "domain '" + spec.name + "': empty vocabulary");
  require(spec.transitions.rows() == V + 1, "domain '" + spec.name + "': transition table must have V+1 rows");
  require(spec.prototypes.cols() == V, "domain '" + spec.name + "': need one prototype per token");
  require(spec.prototypes.allFinite(), "domain '" + spec.name + "': non-finite prototype");
  require(spec.min_frames >= 1 && spec.max_frames >= spec.min_frames, "domain '" + spec.name + "': bad frame range");
  require(spec.min_length >= 1 && spec.max_length >= spec.min_length, "domain '" + spec.name + "': bad length range");
  require(spec.noise >= 0.0, "domain '" + spec.name + "': noise must be non-negative");
  for (Eigen::Index r = 0; r <= V; ++r) {
    require((spec.transitions.row(r).array() >= 0.0).all(),
            "domain '" + spec.name + "': negative transition probability in row " + std::to_string(r));
    require(std::abs(spec.transitions.row(r).sum() - 1.0) < 1e-9,
            "domain '" + spec.name + "': transition row " + std::to_string(r) + " is not normalized");
    if (r < V && spec.transitions(r, r) >= 1.0 - 1e-12)
      throw ConfigError("domain '" + spec.name + "': token " + std::to_string(r) + " is absorbing");
  }
}

/// Mean over rows of KL(a_row || b_row), in nats.
inline double mean_row_kl(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mean_row_kl: shape mismatch");
  double total = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      if (a(r, c) <= 0.0) continue;
      if (b(r, c) <= 0.0) return std::numeric_limits<double>::infinity();
      total += a(r, c) * std::log(a(r, c) / b(r, c));
    }
  }
  return total / static_cast<double>(a.rows());
}

struct DomainPairOptions {
  int vocab_size = 32;
  int input_dim = 8;
  double prototype_scale = 1.5;  // spread of confusion-pair centres
  double pair_separation = 1.0;  // distance between the two members of a pair
  double noise = 0.6;
  int branching = 4;              // successor pairs per row
  double preference_min = 0.75;   // probability of the preferred pair member
  double preference_max = 0.95;
  double min_kl = 0.5;
};

struct DomainPair {
  DomainSpec source;
  DomainSpec target;
};

/// Builds the shipped source/target presets. Tokens come in acoustically
/// confusable pairs (2k, 2k+1); both domains share successor pairs but
/// prefer opposite members, so the language prior decides between
/// confusable tokens differently in each domain.
inline DomainPair make_domain_pair(const DomainPairOptions& o, std::uint64_t seed) {
  require(o.vocab_size >= 4 && o.vocab_size % 2 == 0, "domain pair: vocab_size must be even and >= 4");
  const int V = o.vocab_size;
  const int pairs = V / 2;
  require(o.branching >= 1 && o.branching < pairs, "domain pair: branching must be in [1, V/2)");
  Sampler s(seed);
  Matrix proto(o.input_dim, V);
  for (int p = 0; p < pairs; ++p) {
    Vector centre(o.input_dim);
    Vector dir(o.input_dim);
    for (int i = 0; i < o.input_dim; ++i) centre[i] = o.prototype_scale * s.normal();
    for (int i = 0; i < o.input_dim; ++i) dir[i] = s.normal();
    dir.normalize();
    proto.col(2 * p) = centre + 0.5 * o.pair_separation * dir;
    proto.col(2 * p + 1) = centre - 0.5 * o.pair_separation * dir;
  }
  Matrix src = Matrix::Zero(V + 1, V);
  Matrix tgt = Matrix::Zero(V + 1, V);
  for (int r = 0; r <= V; ++r) {
    std::vector<int> candidates;
    for (int p = 0; p < pairs; ++p)
      if (r == V || p != r / 2) candidates.push_back(p);
    // Partial Fisher-Yates for `branching` distinct successor pairs.
    std::vector<double> w(static_cast<std::size_t>(o.branching));
    double wsum = 0.0;
    for (int k = 0; k < o.branching; ++k) {
      const int j = s.uniform_int(k, static_cast<int>(candidates.size()) - 1);
      std::swap(candidates[static_cast<std::size_t>(k)], candidates[static_cast<std::size_t>(j)]);
      w[static_cast<std::size_t>(k)] = 0.5 + s.uniform();
      wsum += w[static_cast<std::size_t>(k)];
    }
    for (int k = 0; k < o.branching; ++k) {
      const int p = candidates[static_cast<std::size_t>(k)];
      const double mass = w[static_cast<std::size_t>(k)] / wsum;
      const double q = o.preference_min + (o.preference_max - o.preference_min) * s.uniform();
      const int preferred = 2 * p + s.uniform_int(0, 1);
      const int other = preferred ^ 1;
      src(r, preferred) = mass * q;
      src(r, other) = mass * (1.0 - q);
      tgt(r, preferred) = mass * (1.0 - q);
      tgt(r, other) = mass * q;
    }
  }
  DomainPair dp;
  dp.source = {"source", src, proto, 2, 4, o.noise, 3, 12};
  dp.target = {"target", tgt, proto, 2, 4, o.noise, 3, 12};
  validate_domain(dp.source);
  validate_domain(dp.target);
  const double kl = mean_row_kl(tgt, src);
  if (!(kl > o.min_kl))
    throw ConfigError("domain pair: bigram KL " + std::to_string(kl) + " does not exceed " + std::to_string(o.min_kl));
  return dp;
}

struct Utterance {
  std::string id;
  std::string domain;
  FeatureSequence x;
  TokenSequence y;
};

inline TokenSequence sample_sentence(const DomainSpec& spec, Sampler& s) {
  const int len = s.uniform_int(spec.min_length, spec.max_length);
  TokenSequence y;
  int prev = spec.vocab_size();
  for (int k = 0; k < len; ++k) {
    prev = s.categorical(spec.transitions.row(prev).transpose());
    y.push_back(prev);
  }
  return y;
}

inline FeatureSequence render_features(const DomainSpec& spec, const TokenSequence& y, Sampler& s) {
  std::vector<int> frame_tokens;
  for (int tok : y) {
    const int k = s.uniform_int(spec.min_frames, spec.max_frames);
    for (int i = 0; i < k; ++i) frame_tokens.push_back(tok);
  }
  if (frame_tokens.empty()) frame_tokens.push_back(-1);  // silence frame for empty transcripts
  FeatureSequence x;
  x.frames.resize(spec.input_dim(), static_cast<Eigen::Index>(frame_tokens.size()));
  for (std::size_t t = 0; t < frame_tokens.size(); ++t) {
    for (int i = 0; i < spec.input_dim(); ++i) {
      const double base = frame_tokens[t] >= 0 ? spec.prototypes(i, frame_tokens[t]) : 0.0;
      x.frames(i, static_cast<Eigen::Index>(t)) = base + spec.noise * s.normal();
    }
  }
  return x;
}

inline std::vector<Utterance> generate_utterances(const DomainSpec& spec, int n, std::uint64_t seed,
                                                  const std::string& id_prefix) {
  validate_domain(spec);
  Sampler s(seed);
  std::vector<Utterance> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Utterance u;
    char buf[32];
    std::snprintf(buf, sizeof buf, "-%06d", i);
    u.id = id_prefix + buf;
    u.domain = spec.name;
    u.y = sample_sentence(spec, s);
    u.x = render_features(spec, u.y, s);
    out.push_back(std::move(u));
  }
  return out;
}

inline std::vector<TokenSequence> sample_text(const DomainSpec& spec, int n, std::uint64_t seed) {
  validate_domain(spec);
  Sampler s(seed);
  std::vector<TokenSequence> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(sample_sentence(spec, s));
  return out;
}

struct CorpusSplits {
  std::vector<Utterance> train;
  std::vector<Utterance> dev;
  std::vector<Utterance> test;
};

/// Splits n_utts utterances 80/10/10 (each split non-empty). Utterance ids
/// carry the domain name and split, so splits are disjoint by id.
inline CorpusSplits generate_corpus(const DomainSpec& spec, int n_utts, std::uint64_t seed) {
  if (n_utts < 3) throw ConfigError("generate_corpus: need at least 3 utterances");
  const int n_dev = std::max(1, n_utts / 10);
  const int n_test = std::max(1, n_utts / 10);
  const int n_train = n_utts - n_dev - n_test;
  CorpusSplits c;
  c.train = generate_utterances(spec, n_train, seed * 3 + 0, spec.name + "-train");
  c.dev = generate_utterances(spec, n_dev, seed * 3 + 1, spec.name + "-dev");
  c.test = generate_utterances(spec, n_test, seed * 3 + 2, spec.name + "-test");
  return c;
}

inline std::vector<TokenSequence> transcripts(const std::vector<Utterance>& utts) {
  std::vector<TokenSequence> out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back(u.y);
  return out;
}

// Corpus files: one JSON object per line with keys id, domain, tokens,
// frames, dim and features (frame-major, `frames` x `dim` values).

inline nlohmann::json utterance_to_json(const Utterance& u) {
  std::vector<double> feats;
  feats.reserve(static_cast<std::size_t>(u.x.frames.size()));
  for (Eigen::Index t = 0; t < u.x.num_frames(); ++t)
    for (Eigen::Index i = 0; i < u.x.dim(); ++i) feats.push_back(u.x.frames(i, t));
  return {{"id", u.id},          {"domain", u.domain},      {"tokens", u.y},
          {"frames", u.x.num_frames()}, {"dim", u.x.dim()}, {"features", feats}};
}

inline Utterance utterance_from_json(const nlohmann::json& j) {
  Utterance u;
  u.id = j.at("id").get<std::string>();
  u.domain = j.at("domain").get<std::string>();
  u.y = j.at("tokens").get<TokenSequence>();
  const auto T = j.at("frames").get<Eigen::Index>();
  const auto d = j.at("dim").get<Eigen::Index>();
  const auto feats = j.at("features").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(feats.size()) != T * d)
    throw std::runtime_error("utterance '" + u.id + "': feature payload does not match frames x dim");
  u.x.frames.resize(d, T);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < d; ++i) u.x.frames(i, t) = feats[static_cast<std::size_t>(t * d + i)];
  return u;
}

inline void write_corpus(const std::string& path, const std::vector<Utterance>& utts) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  for (const auto& u : utts) os << utterance_to_json(u).dump() << '\n';
}

inline std::vector<Utterance> read_corpus(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open corpus '" + path + "'");
  std::vector<Utterance> out;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) out.push_back(utterance_from_json(nlohmann::json::parse(line)));
  return out;
}

/// Text corpora: one sentence per line, whitespace-separated token ids.
inline void write_text(const std::string& path, const std::vector<TokenSequence>& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  for (const auto& y : text) {
    for (std::size_t i = 0; i < y.size(); ++i) os << (i ? " " : "") << y[i];
    os << '\n';
  }
}

inline std::vector<TokenSequence> read_text(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open text corpus '" + path + "'");
  std::vector<TokenSequence> out;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    TokenSequence y;
    int v;
    while (ls >> v) y.push_back(v);
    out.push_back(std::move(y));
  }
  return out;
}

}  // namespace ilmt

#pragma once

#include <algorithm>
#include <vector>

#include "ilmt/types.hpp"

namespace ilmt {

struct EditCounts {
  long substitutions = 0;
  long insertions = 0;
  long deletions = 0;
  long ref_length = 0;

  [[nodiscard]] long errors() const { return substitutions + insertions + deletions; }
  /// Errors over max(1, reference length).
  [[nodiscard]] double rate() const {
    return static_cast<double>(errors()) / static_cast<double>(std::max<long>(1, ref_length));
  }

  EditCounts& operator+=(const EditCounts& o) {
    substitutions += o.substitutions;
    insertions += o.insertions;
    deletions += o.deletions;
    ref_length += o.ref_length;
    return *this;
  }
};

/// Token-level Levenshtein alignment. Among minimum-edit alignments the one
/// with the most substitutions is reported, which makes the breakdown
/// symmetric: wer(b, a) swaps insertions and deletions of wer(a, b).
inline EditCounts wer(const TokenSequence& ref, const TokenSequence& hyp) {
  const std::size_t R = ref.size();
  const std::size_t H = hyp.size();
  // cost[i][j] = (edits, -substitutions) for ref[:i] vs hyp[:j].
  struct Cell {
    long edits;
    long subs;
    bool operator<(const Cell& o) const { return edits != o.edits ? edits < o.edits : subs > o.subs; }
  };
  std::vector<std::vector<Cell>> d(R + 1, std::vector<Cell>(H + 1));
  for (std::size_t i = 0; i <= R; ++i) d[i][0] = {static_cast<long>(i), 0};
  for (std::size_t j = 0; j <= H; ++j) d[0][j] = {static_cast<long>(j), 0};
  for (std::size_t i = 1; i <= R; ++i)
    for (std::size_t j = 1; j <= H; ++j) {
      const bool match = ref[i - 1] == hyp[j - 1];
      Cell diag{d[i - 1][j - 1].edits + (match ? 0 : 1), d[i - 1][j - 1].subs + (match ? 0 : 1)};
      Cell del{d[i - 1][j].edits + 1, d[i - 1][j].subs};
      Cell ins{d[i][j - 1].edits + 1, d[i][j - 1].subs};
      d[i][j] = std::min({diag, del, ins});
    }
  EditCounts c;
  c.ref_length = static_cast<long>(R);
  c.substitutions = d[R][H].subs;
  // insertions - deletions = H - R; insertions + deletions = edits - subs.
  const long indel = d[R][H].edits - c.substitutions;
  c.insertions = (indel + static_cast<long>(H) - static_cast<long>(R)) / 2;
  c.deletions = indel - c.insertions;
  return c;
}

/// Pooled corpus WER: total errors over total reference tokens.
inline EditCounts corpus_wer(const std::vector<TokenSequence>& refs, const std::vector<TokenSequence>& hyps) {
  require(refs.size() == hyps.size(), "corpus_wer: reference and hypothesis counts differ");
  EditCounts total;
  for (std::size_t i = 0; i < refs.size(); ++i) total += wer(refs[i], hyps[i]);
  return total;
}

/// Relative WER reduction; positive means the system improves on the baseline.
inline double werr(double baseline, double system) {
  if (baseline == 0.0) return 0.0;
  return (baseline - system) / baseline;
}

}  // namespace ilmt

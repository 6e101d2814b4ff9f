// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

// Translation quality: corpus BLEU with clipped n-gram precision and a
// brevity penalty, token error rate, exact-match rate.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "s2c/common.hpp"

namespace s2c {

using Tokens = std::vector<std::string>;

struct BleuScore {
  double bleu = 0;                  // 0..100
  std::vector<double> precisions;   // clipped precision per order 1..max_n
  std::vector<long> matches;        // clipped n-gram matches per order
  std::vector<long> totals;         // hypothesis n-grams per order
  double brevity_penalty = 1;
  long hyp_len = 0;
  long ref_len = 0;
};

/// Corpus BLEU. Unsmoothed, any zero precision gives 0. With `smooth`,
/// orders n >= 2 use (matches + 1) / (totals + 1).
BleuScore CorpusBleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs,
                     int max_n = 4, bool smooth = false);
BleuScore CorpusBleu(const std::vector<CodeSequence>& hyps, const std::vector<CodeSequence>& refs,
                     int max_n = 4, bool smooth = false);

template <typename T>
long EditDistance(const std::vector<T>& a, const std::vector<T>& b) {
  std::vector<long> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = long(j);
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = long(i);
    for (size_t j = 1; j <= b.size(); ++j) {
      const long sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min(sub, std::min(prev[j], cur[j - 1]) + 1);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Levenshtein(hyp, ref) / |ref|. Throws on an empty reference.
double TokenErrorRate(const CodeSequence& hyp, const CodeSequence& ref);
double TokenErrorRate(const Tokens& hyp, const Tokens& ref);

Tokens ToTokens(const CodeSequence& codes);

struct UtteranceEval {
  std::string id;
  double bleu = 0;  // sentence BLEU, add-one smoothed
  double ter = 0;
  bool exact = false;
  long hyp_len = 0;
  long ref_len = 0;
};

struct EvalReport {
  std::vector<UtteranceEval> rows;
  BleuScore corpus;
  double ter = 0;          // total edits / total reference tokens
  double exact_match = 0;  // fraction of utterances reproduced exactly
  std::optional<BleuScore> word_bleu;
  std::vector<std::string> missing;  // ids with no hypothesis
};

/// Scores every id in `refs`; ids absent from `hyps` are listed as missing
/// and skipped. Throws if nothing is left to score.
EvalReport Evaluate(const std::vector<std::string>& ids, const std::map<std::string, Tokens>& hyps,
                    const std::map<std::string, Tokens>& refs, bool smooth = false);

/// Tab-separated table: one row per utterance plus a final "corpus" row.
void WriteReportTsv(const std::string& path, const EvalReport& r);
std::string FormatBleu(const BleuScore& b);

/// One whitespace-tokenized utterance per line.
std::vector<Tokens> ReadTokenLines(const std::string& path);

}  // namespace s2c

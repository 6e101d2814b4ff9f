// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2c/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace s2c {
namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, long> CountNgrams(const Tokens& s, int n) {
  std::map<Ngram, long> out;
  for (size_t i = 0; i + size_t(n) <= s.size(); ++i)
    ++out[Ngram(s.begin() + long(i), s.begin() + long(i) + n)];
  return out;
}

}  // namespace

BleuScore CorpusBleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs, int max_n,
                     bool smooth) {
  if (hyps.size() != refs.size()) throw Error("eval", "hypothesis/reference count mismatch");
  if (hyps.empty()) throw Error("eval", "empty corpus");
  if (max_n < 1) throw Error("eval", "max_n must be >= 1");
  BleuScore b;
  b.matches.assign(size_t(max_n), 0);
  b.totals.assign(size_t(max_n), 0);
  for (size_t k = 0; k < hyps.size(); ++k) {
    b.hyp_len += long(hyps[k].size());
    b.ref_len += long(refs[k].size());
    for (int n = 1; n <= max_n; ++n) {
      const auto h = CountNgrams(hyps[k], n);
      const auto r = CountNgrams(refs[k], n);
      for (const auto& [g, c] : h) {
        auto it = r.find(g);
        if (it != r.end()) b.matches[size_t(n - 1)] += std::min(c, it->second);
        b.totals[size_t(n - 1)] += c;
      }
    }
  }
  double log_sum = 0;
  bool zero = false;
  for (int n = 1; n <= max_n; ++n) {
    double m = double(b.matches[size_t(n - 1)]), t = double(b.totals[size_t(n - 1)]);
    if (smooth && n >= 2) {
      m += 1;
      t += 1;
    }
    const double p = t > 0 ? m / t : 0.0;
    b.precisions.push_back(p);
    if (p > 0)
      log_sum += std::log(p);
    else
      zero = true;
  }
  if (b.hyp_len == 0)
    b.brevity_penalty = 0;
  else if (b.hyp_len < b.ref_len)
    b.brevity_penalty = std::exp(1.0 - double(b.ref_len) / double(b.hyp_len));
  b.bleu = zero ? 0.0 : 100.0 * b.brevity_penalty * std::exp(log_sum / max_n);
  return b;
}

Tokens ToTokens(const CodeSequence& codes) {
  Tokens t;
  t.reserve(codes.size());
  for (int c : codes) t.push_back(std::to_string(c));
  return t;
}

BleuScore CorpusBleu(const std::vector<CodeSequence>& hyps, const std::vector<CodeSequence>& refs,
                     int max_n, bool smooth) {
  std::vector<Tokens> h, r;
  for (const auto& s : hyps) h.push_back(ToTokens(s));
  for (const auto& s : refs) r.push_back(ToTokens(s));
  return CorpusBleu(h, r, max_n, smooth);
}

double TokenErrorRate(const CodeSequence& hyp, const CodeSequence& ref) {
  if (ref.empty()) throw Error("eval", "empty reference");
  return double(EditDistance(hyp, ref)) / double(ref.size());
}

double TokenErrorRate(const Tokens& hyp, const Tokens& ref) {
  if (ref.empty()) throw Error("eval", "empty reference");
  return double(EditDistance(hyp, ref)) / double(ref.size());
}

EvalReport Evaluate(const std::vector<std::string>& ids, const std::map<std::string, Tokens>& hyps,
                    const std::map<std::string, Tokens>& refs, bool smooth) {
  EvalReport rep;
  std::vector<Tokens> hs, rs;
  long edits = 0, ref_tokens = 0, exact = 0;
  for (const auto& id : ids) {
    auto r = refs.find(id);
    if (r == refs.end()) throw Error("eval", "no reference for " + id);
    auto h = hyps.find(id);
    if (h == hyps.end()) {
      rep.missing.push_back(id);
      continue;
    }
    UtteranceEval u;
    u.id = id;
    u.hyp_len = long(h->second.size());
    u.ref_len = long(r->second.size());
    u.bleu = CorpusBleu({h->second}, {r->second}, 4, true).bleu;
    u.ter = TokenErrorRate(h->second, r->second);
    u.exact = h->second == r->second;
    edits += EditDistance(h->second, r->second);
    ref_tokens += u.ref_len;
    exact += u.exact;
    rep.rows.push_back(u);
    hs.push_back(h->second);
    rs.push_back(r->second);
  }
  if (rep.rows.empty()) throw Error("eval", "no hypotheses to score");
  rep.corpus = CorpusBleu(hs, rs, 4, smooth);
  rep.ter = double(edits) / double(ref_tokens);
  rep.exact_match = double(exact) / double(rep.rows.size());
  return rep;
}

std::string FormatBleu(const BleuScore& b) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "BLEU=%.2f (%.1f/%.1f/%.1f/%.1f) BP=%.3f hyp_len=%ld ref_len=%ld",
                b.bleu, b.precisions.size() > 0 ? 100 * b.precisions[0] : 0.0,
                b.precisions.size() > 1 ? 100 * b.precisions[1] : 0.0,
                b.precisions.size() > 2 ? 100 * b.precisions[2] : 0.0,
                b.precisions.size() > 3 ? 100 * b.precisions[3] : 0.0, b.brevity_penalty,
                b.hyp_len, b.ref_len);
  return buf;
}

void WriteReportTsv(const std::string& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw Error("eval", "cannot write " + path);
  char buf[256];
  out << "utt_id\tbleu\tter\texact\thyp_len\tref_len\n";
  for (const auto& u : r.rows) {
    std::snprintf(buf, sizeof(buf), "%s\t%.4f\t%.4f\t%d\t%ld\t%ld\n", u.id.c_str(), u.bleu, u.ter,
                  int(u.exact), u.hyp_len, u.ref_len);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "corpus\t%.4f\t%.4f\t%.4f\t%ld\t%ld\n", r.corpus.bleu, r.ter,
                r.exact_match, r.corpus.hyp_len, r.corpus.ref_len);
  out << buf;
}

std::vector<Tokens> ReadTokenLines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("eval", "cannot open " + path);
  std::vector<Tokens> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    Tokens t;
    std::string w;
    while (ss >> w) t.push_back(w);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace s2c

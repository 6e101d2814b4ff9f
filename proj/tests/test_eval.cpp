// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "s2c/eval.hpp"
#include "toy_data.hpp"

using namespace s2c;

namespace {

Tokens Words(const std::string& s) {
  Tokens out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Brute-force n-gram counting over joined strings.
double NaiveBleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  double log_sum = 0;
  long hl = 0, rl = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    hl += long(hyps[i].size());
    rl += long(refs[i].size());
  }
  for (int n = 1; n <= 4; ++n) {
    long match = 0, total = 0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      std::map<std::string, long> h, r;
      auto grams = [n](const Tokens& t, std::map<std::string, long>& out) {
        for (std::size_t s = 0; s + std::size_t(n) <= t.size(); ++s) {
          std::string key;
          for (int k = 0; k < n; ++k) key += t[s + std::size_t(k)] + "\x1f";
          ++out[key];
        }
      };
      grams(hyps[i], h);
      grams(refs[i], r);
      for (const auto& [g, c] : h) {
        total += c;
        auto it = r.find(g);
        if (it != r.end()) match += std::min(c, it->second);
      }
    }
    if (match == 0) return 0.0;
    log_sum += std::log(double(match) / double(total));
  }
  const double bp = hl >= rl ? 1.0 : std::exp(1.0 - double(rl) / double(hl));
  return 100.0 * bp * std::exp(log_sum / 4);
}

long DpEdit(const CodeSequence& a, const CodeSequence& b) {
  std::vector<std::vector<long>> d(a.size() + 1, std::vector<long>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = long(i);
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = long(j);
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
  return d[a.size()][b.size()];
}

std::vector<Tokens> RandomCorpus(std::mt19937& gen, int n, int vocab, int maxlen) {
  std::vector<Tokens> out(static_cast<std::size_t>(n));
  for (auto& s : out) {
    s.resize(1 + gen() % std::size_t(maxlen));
    for (auto& t : s) t = "w" + std::to_string(gen() % std::size_t(vocab));
  }
  return out;
}

}  // namespace

TEST_CASE("identity corpus scores 100") {
  const std::vector<Tokens> c{Words("1 2 3 4 5"), Words("7 7 8 9"), Words("a b c d e f")};
  const BleuScore b = CorpusBleu(c, c);
  CHECK(b.bleu == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(b.brevity_penalty == 1.0);
  for (double p : b.precisions) CHECK(p == 1.0);
  CHECK(b.hyp_len == 15);
  CHECK(b.ref_len == 15);
}

TEST_CASE("clipped counts by hand") {
  const BleuScore b = CorpusBleu(std::vector<Tokens>{Words("a a a a")}, std::vector<Tokens>{Words("a b")});
  CHECK(b.matches[0] == 1);
  CHECK(b.totals[0] == 4);
  CHECK(b.precisions[0] == doctest::Approx(0.25));
  CHECK(b.matches[1] == 0);
  CHECK(b.bleu == 0.0);
  CHECK(b.brevity_penalty == 1.0);

  // short hypothesis: BP = exp(1 - 6/4)
  const BleuScore s = CorpusBleu(std::vector<Tokens>{Words("a b c d")}, std::vector<Tokens>{Words("a b c d e f")});
  CHECK(s.brevity_penalty == doctest::Approx(std::exp(1.0 - 1.5)).epsilon(1e-12));
  CHECK(s.bleu == doctest::Approx(100.0 * std::exp(-0.5)).epsilon(1e-12));

  // smoothing rescues missing higher orders
  const BleuScore sm = CorpusBleu(std::vector<Tokens>{Words("a a a a")}, std::vector<Tokens>{Words("a b")}, 4, true);
  CHECK(sm.bleu > 0.0);
  CHECK(sm.bleu < 100.0);
}

TEST_CASE("BLEU errors") {
  CHECK_THROWS_AS(CorpusBleu(std::vector<Tokens>{}, std::vector<Tokens>{}), Error);
  CHECK_THROWS_AS(CorpusBleu(std::vector<Tokens>{Words("a")}, std::vector<Tokens>{}), Error);
  const BleuScore e = CorpusBleu(std::vector<Tokens>{Tokens{}}, std::vector<Tokens>{Words("a b")});
  CHECK(e.bleu == 0.0);
}

TEST_CASE("BLEU matches a naive counting oracle") {
  std::mt19937 gen(11);
  double worst = 0;
  int nonzero = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + int(gen() % 6);
    const int vocab = 2 + int(gen() % 4);
    const auto refs = RandomCorpus(gen, n, vocab, 12);
    auto hyps = RandomCorpus(gen, n, vocab, 12);
    // bias some hypotheses toward their reference so scores are not all zero
    for (std::size_t i = 0; i < hyps.size(); ++i)
      if (gen() % 2) {
        hyps[i] = refs[i];
        if (!hyps[i].empty() && gen() % 2) hyps[i][gen() % hyps[i].size()] = "x";
        if (gen() % 3 == 0) hyps[i].pop_back();
      }
    const double got = CorpusBleu(hyps, refs).bleu, want = NaiveBleu(hyps, refs);
    worst = std::max(worst, std::abs(got - want));
    if (want > 0) ++nonzero;
  }
  MESSAGE(nonzero << " of 50 corpora have nonzero BLEU");
  CHECK(nonzero >= 10);
  CHECK(worst < 1e-9);
}

TEST_CASE("BLEU is invariant to utterance order and token relabeling") {
  std::mt19937 gen(12);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<CodeSequence> refs(6), hyps(6);
    for (std::size_t i = 0; i < 6; ++i) {
      refs[i].resize(4 + gen() % 8);
      for (int& c : refs[i]) c = int(gen() % 5);
      hyps[i] = refs[i];
      hyps[i][gen() % hyps[i].size()] = int(gen() % 5);
    }
    const double base = CorpusBleu(hyps, refs).bleu;
    std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5};
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<CodeSequence> ph, pr;
    for (std::size_t p : perm) {
      ph.push_back(hyps[p]);
      pr.push_back(refs[p]);
    }
    CHECK(CorpusBleu(ph, pr).bleu == doctest::Approx(base).epsilon(1e-12));
    std::vector<int> relabel{40, 7, 3, 19, 22};
    for (auto* c : {&hyps, &refs})
      for (auto& s : *c)
        for (int& v : s) v = relabel[std::size_t(v)];
    CHECK(CorpusBleu(hyps, refs).bleu == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("token error rate") {
  CHECK(TokenErrorRate(CodeSequence{1, 2, 3}, CodeSequence{1, 2, 3}) == 0.0);
  CHECK(TokenErrorRate(CodeSequence{}, CodeSequence{1, 2, 3, 4}) == 1.0);
  CHECK(TokenErrorRate(CodeSequence{1, 9, 3}, CodeSequence{1, 2, 3}) == doctest::Approx(1.0 / 3));
  CHECK(TokenErrorRate(Words("a b"), Words("a b c d")) == 0.5);
  CHECK_THROWS_AS(TokenErrorRate(CodeSequence{1}, CodeSequence{}), Error);

  std::mt19937 gen(13);
  auto rnd = [&] {
    CodeSequence s(gen() % 10);
    for (int& v : s) v = int(gen() % 4);
    return s;
  };
  for (int trial = 0; trial < 200; ++trial) {
    const CodeSequence a = rnd(), b = rnd(), c = rnd();
    CHECK(EditDistance(a, b) == DpEdit(a, b));
    CHECK(EditDistance(a, c) <= EditDistance(a, b) + EditDistance(b, c));
    CHECK(EditDistance(a, b) == EditDistance(b, a));
    if (!b.empty()) CHECK(TokenErrorRate(a, b) == double(DpEdit(a, b)) / double(b.size()));
  }
}

TEST_CASE("evaluate report") {
  const std::vector<std::string> ids{"u1", "u2", "u3"};
  std::map<std::string, Tokens> refs{{"u1", Words("1 2 3 4")}, {"u2", Words("5 6 7")}, {"u3", Words("8 9")}};
  const EvalReport perfect = Evaluate(ids, refs, refs);
  CHECK(perfect.corpus.bleu == doctest::Approx(100.0));
  CHECK(perfect.ter == 0.0);
  CHECK(perfect.exact_match == 1.0);
  CHECK(perfect.rows.size() == 3);

  std::map<std::string, Tokens> hyps{{"u1", Words("1 2 3 4")}, {"u2", Words("5 0 7")}};
  const EvalReport r = Evaluate(ids, hyps, refs);
  CHECK(r.missing == std::vector<std::string>{"u3"});
  CHECK(r.rows.size() == 2);
  CHECK(r.ter == doctest::Approx(1.0 / 7));
  CHECK(r.exact_match == 0.5);
  CHECK_THROWS_AS(Evaluate(ids, {}, refs), Error);

  const std::string dir = testing::TempDir("eval");
  WriteReportTsv(dir + "/r.tsv", r);
  std::ifstream in(dir + "/r.tsv");
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 4);  // header, two rows, corpus
  CHECK(lines[1].rfind("u1\t", 0) == 0);
  CHECK(lines[3].rfind("corpus\t", 0) == 0);

  std::ofstream(dir + "/h.txt") << "a b  c\n\nd\n";
  const auto tl = ReadTokenLines(dir + "/h.txt");
  REQUIRE(tl.size() == 3);
  CHECK(tl[0] == Words("a b c"));
  CHECK(tl[1].empty());
}

// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "s2c/config.hpp"
#include "toy_data.hpp"

using namespace s2c;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result Run(const std::string& args) {
  const std::string cmd = std::string(S2C_BINARY) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof(buf), p)) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

bool Has(const Result& r, const std::string& s) { return r.out.find(s) != std::string::npos; }

std::size_t CountWavs(const std::string& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.path().extension() == ".wav") ++n;
  return n;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(Run("").code == 2);
  CHECK(Run("no-such-command").code == 2);
  CHECK(Run("make-corpus --pairs -3").code == 2);
  CHECK(Run("translate").code == 2);
  const Result h = Run("--help");
  CHECK(h.code == 0);
  CHECK(Has(h, "train-vqvae"));
  CHECK(Has(h, "grid"));
}

TEST_CASE("make-corpus writes 80 wavs") {
  const std::string dir = testing::TempDir("cli_corpus");
  const Result r = Run("--run-dir " + dir + " make-corpus --pairs 40");
  INFO(r.out);
  CHECK(r.code == 0);
  CHECK(Has(r, "status=ok"));
  CHECK(Has(r, "wavs=80"));
  CHECK(CountWavs(dir + "/corpus") == 80);
  CHECK(fs::exists(dir + "/corpus/manifest.tsv"));
}

TEST_CASE("stage 2 before stage 1 fails") {
  const std::string dir = testing::TempDir("cli_order");
  REQUIRE(Run("--run-dir " + dir + " make-corpus --pairs 8").code == 0);
  const Result r = Run("--run-dir " + dir + " train-s2s");
  CHECK(r.code == 1);
  CHECK(Has(r, "stage-1 artifacts missing"));
  CHECK(Has(r, "status=error"));
  const Result t = Run("--run-dir " + dir + " translate " + dir + "/corpus/wav/src/utt0000.wav");
  CHECK(t.code == 1);
  const Result bad = Run("--run-dir " + dir + " --config " + dir + "/none.json train-vqvae");
  CHECK(bad.code == 1);
}

TEST_CASE("short end-to-end run through every subcommand") {
  const std::string dir = testing::TempDir("cli_flow");
  ExperimentConfig c = ExperimentConfig::Toy();
  c.vqvae.channels = 16;
  c.inverter.channels = 8;
  c.inverter.lstm_hidden = 8;
  c.s2s.enc_hidden = 8;
  c.s2s.dec_hidden = 16;
  c.s2s.attention_dim = 8;
  c.s2s.max_decode_len = 20;
  c.vqvae_steps = 4;
  c.inverter_steps = 3;
  c.s2s_steps = 3;
  c.eval_interval = 2;
  c.features.griffin_lim_iters = 4;
  SaveExperimentConfig(dir + "/tiny.json", c);
  const std::string g = "--run-dir " + dir + " --config " + dir + "/tiny.json ";
  const std::string run = dir + "/" + ConfigHash(c);

  REQUIRE(Run(g + "make-corpus --pairs 8").code == 0);
  Result r = Run(g + "extract-features");
  INFO(r.out);
  CHECK(r.code == 0);
  CHECK(fs::exists(run + "/features/utt0000.tgt.linear.sp2c"));

  r = Run(g + "train-vqvae");
  CHECK(r.code == 0);
  CHECK(Has(r, "heldout_perplexity="));
  CHECK(fs::exists(run + "/vqvae.ckpt"));
  CHECK(fs::exists(run + "/codes/tgt_test.txt"));
  r = Run(g + "train-vqvae --skip-existing");
  CHECK(Has(r, "skipped=1"));

  r = Run(g + "train-inverter");
  CHECK(r.code == 0);
  CHECK(Has(r, "loss_final="));
  r = Run(g + "train-s2s");
  CHECK(r.code == 0);
  CHECK(Has(r, "token_acc="));
  for (const char* f : {"metrics/vqvae.jsonl", "metrics/inverter.jsonl", "metrics/s2s.jsonl",
                        "s2s.ckpt", "inverter.ckpt", "stats_src.sp2c", "run.json"})
    CHECK(fs::exists(run + "/" + f));

  r = Run(g + "encode " + dir + "/corpus/wav/tgt/utt0001.wav --out " + dir + "/enc");
  CHECK(r.code == 0);
  CHECK(fs::exists(dir + "/enc.txt"));
  CHECK(fs::exists(dir + "/enc.ids"));

  r = Run(g + "synthesize " + dir + "/enc.txt --out-dir " + dir + "/syn --spectrogram");
  CHECK(r.code == 0);
  CHECK(fs::exists(dir + "/syn/utt0001.wav"));
  CHECK(fs::exists(dir + "/syn/utt0001.linear.sp2c"));

  r = Run(g + "translate " + dir + "/corpus/wav/src/utt0002.wav --out " + dir + "/t.wav");
  CHECK(r.code == 0);
  CHECK(fs::exists(dir + "/t.wav"));
  CHECK(fs::exists(dir + "/t.codes.txt"));
  CHECK(fs::exists(dir + "/t.json"));
  r = Run(g + "translate " + dir + "/corpus/wav/src/utt0002.wav --beam 2 --out " + dir + "/b.wav");
  CHECK(r.code == 0);

  r = Run(g + "evaluate --split train");
  CHECK(r.code == 0);
  CHECK(Has(r, "code_bleu="));
  CHECK(Has(r, "control_bleu="));
  CHECK(fs::exists(run + "/eval/train.tsv"));
  CHECK(fs::exists(run + "/eval/train.json"));
  r = Run(g + "evaluate --split nonsense");
  CHECK(r.code == 1);
}

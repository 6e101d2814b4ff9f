// Copyright 2026 The speech2code Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2c/wav_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "s2c/common.hpp"

namespace s2c {
namespace {

uint32_t ReadU32(const unsigned char* p) {
  return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
         (uint32_t(p[3]) << 24);
}
uint16_t ReadU16(const unsigned char* p) {
  return uint16_t(p[0] | (p[1] << 8));
}

void PutU32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void PutU16(std::string& out, uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char(v >> 8));
}

}  // namespace

Waveform ReadWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open wav file: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw Error("not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const unsigned char* data = nullptr;
  uint32_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* chunk = buf.data() + pos;
    uint32_t len = ReadU32(chunk + 4);
    if (pos + 8 + len > buf.size()) len = uint32_t(buf.size() - pos - 8);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && len >= 16) {
      format = ReadU16(chunk + 8);
      channels = ReadU16(chunk + 10);
      rate = ReadU32(chunk + 12);
      bits = ReadU16(chunk + 22);
      if (format == 0xFFFE && len >= 26) format = ReadU16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (data == nullptr || rate == 0) throw Error("malformed wav file: " + path);
  if (channels != 1) throw Error("only mono wav is supported: " + path);

  Waveform wav;
  wav.sample_rate = int(rate);
  if (format == 1 && bits == 16) {
    wav.samples.resize(data_len / 2);
    for (std::size_t i = 0; i < wav.samples.size(); ++i) {
      int16_t v = int16_t(ReadU16(data + 2 * i));
      wav.samples[i] = v / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    wav.samples.resize(data_len / 4);
    for (std::size_t i = 0; i < wav.samples.size(); ++i) {
      uint32_t u = ReadU32(data + 4 * i);
      float f;
      std::memcpy(&f, &u, 4);
      wav.samples[i] = f;
    }
  } else {
    throw Error("unsupported wav encoding (need PCM16 or float32): " + path);
  }
  return wav;
}

void WriteWav(const std::string& path, const Waveform& wav,
              WavEncoding encoding) {
  const bool pcm = encoding == WavEncoding::kPcm16;
  const uint16_t bits = pcm ? 16 : 32;
  const uint32_t data_len = uint32_t(wav.samples.size() * (bits / 8));

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  PutU32(out, 36 + data_len);
  out += "WAVEfmt ";
  PutU32(out, 16);
  PutU16(out, pcm ? 1 : 3);
  PutU16(out, 1);
  PutU32(out, uint32_t(wav.sample_rate));
  PutU32(out, uint32_t(wav.sample_rate) * (bits / 8));
  PutU16(out, bits / 8);
  PutU16(out, bits);
  out += "data";
  PutU32(out, data_len);
  for (double s : wav.samples) {
    if (pcm) {
      double c = std::clamp(s, -1.0, 1.0) * 32767.0;
      PutU16(out, uint16_t(int16_t(std::lround(c))));
    } else {
      float f = static_cast<float>(s);
      uint32_t u;
      std::memcpy(&u, &f, 4);
      PutU32(out, u);
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write wav file: " + path);
  os.write(out.data(), std::streamsize(out.size()));
}

}  // namespace s2c

// src/audio.cpp

// Copyright 2026  bpfdet authors

// See COPYING for clarification regarding multiple authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABILITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "bpfdet/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "bpfdet/error.hpp"

namespace bpfdet {

AudioSegment AudioSegment::Slice(std::size_t begin, std::size_t count) const {
  if (begin > samples.size() || count > samples.size() - begin)
    throw InvalidArgument("slice out of range");
  AudioSegment out;
  out.sample_rate = sample_rate;
  out.start_time = start_time + static_cast<double>(begin) / sample_rate;
  out.samples.assign(samples.begin() + begin, samples.begin() + begin + count);
  return out;
}

void ValidateSegment(const AudioSegment& segment) {
  if (segment.sample_rate != kSampleRate)
    throw InvalidArgument("sample rate must be 16000 Hz, got " +
                          std::to_string(segment.sample_rate));
  if (segment.samples.size() < static_cast<std::size_t>(kWindowSize))
    throw InvalidArgument("segment too short");
  for (double s : segment.samples)
    if (!std::isfinite(s)) throw InvalidArgument("invalid audio");
}

double Rms(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return std::sqrt(acc / samples.size());
}

namespace {

std::uint32_t ReadU32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t ReadU16(const unsigned char* p) { return p[0] | (p[1] << 8); }

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void PutU16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

AudioSegment ReadWav(const std::filesystem::path& path, int channel) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw IoError(path.string() + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t size = ReadU32(chunk + 4);
    std::size_t body = pos + 8;
    std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) throw IoError(path.string() + ": corrupt fmt chunk");
      format = ReadU16(chunk + 8);
      channels = ReadU16(chunk + 10);
      rate = ReadU32(chunk + 12);
      bits = ReadU16(chunk + 22);
      if (format == kFormatExtensible && size >= 26 && avail >= 26)
        format = ReadU16(chunk + 8 + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = std::min<std::size_t>(size, avail);
    }
    pos = body + size + (size & 1);
  }
  if (channels == 0 || data == nullptr)
    throw IoError(path.string() + ": missing fmt or data chunk");
  if (rate != static_cast<std::uint32_t>(kSampleRate))
    throw InvalidArgument(path.string() + ": sample rate " + std::to_string(rate) +
                          " Hz, expected 16000 Hz");
  bool pcm16 = format == kFormatPcm && bits == 16;
  bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32)
    throw IoError(path.string() + ": unsupported encoding (16-bit PCM or 32-bit float only)");
  if (channel >= static_cast<int>(channels))
    throw InvalidArgument("channel " + std::to_string(channel) + " out of range (file has " +
                          std::to_string(channels) + ")");

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frames = data_size / (bytes_per_sample * channels);
  AudioSegment seg;
  seg.samples.resize(frames);
  auto sample_at = [&](std::size_t i, int c) {
    const unsigned char* p = data + (i * channels + c) * bytes_per_sample;
    if (pcm16) return static_cast<std::int16_t>(ReadU16(p)) / 32768.0;
    std::uint32_t u = ReadU32(p);
    float f;
    std::memcpy(&f, &u, sizeof f);
    return static_cast<double>(f);
  };
  for (std::size_t i = 0; i < frames; ++i) {
    if (channel >= 0) {
      seg.samples[i] = sample_at(i, channel);
    } else {
      double acc = 0.0;
      for (int c = 0; c < channels; ++c) acc += sample_at(i, c);
      seg.samples[i] = acc / channels;
    }
  }
  return seg;
}

void WriteWav(const std::filesystem::path& path, const AudioSegment& segment,
              WavEncoding encoding) {
  const bool pcm16 = encoding == WavEncoding::kPcm16;
  const std::uint16_t bits = pcm16 ? 16 : 32;
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(segment.samples.size() * (bits / 8));
  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  PutU32(out, 36 + data_size);
  out += "WAVEfmt ";
  PutU32(out, 16);
  PutU16(out, pcm16 ? kFormatPcm : kFormatFloat);
  PutU16(out, 1);
  PutU32(out, segment.sample_rate);
  PutU32(out, segment.sample_rate * (bits / 8));
  PutU16(out, bits / 8);
  PutU16(out, bits);
  out += "data";
  PutU32(out, data_size);
  for (double s : segment.samples) {
    double c = std::clamp(s, -1.0, 1.0);
    if (pcm16) {
      auto v = static_cast<std::int16_t>(std::clamp<long>(std::lround(c * 32768.0), -32768, 32767));
      PutU16(out, static_cast<std::uint16_t>(v));
    } else {
      float f = static_cast<float>(c);
      std::uint32_t u;
      std::memcpy(&u, &f, sizeof u);
      PutU32(out, u);
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace bpfdet

// include/bpfdet/audio.hpp

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

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace bpfdet {

inline constexpr int kSampleRate = 16000;
inline constexpr int kWindowSize = 2048;
inline constexpr int kHopSize = 512;
inline constexpr double kFrameRate = static_cast<double>(kSampleRate) / kHopSize;

inline double FrameTime(std::size_t frame) { return frame / kFrameRate; }

// Mono 16 kHz audio. start_time is seconds from the recording origin.
struct AudioSegment {
  std::vector<double> samples;
  int sample_rate = kSampleRate;
  double start_time = 0.0;

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  std::size_t num_frames() const { return samples.size() / kHopSize; }

  // Copy of samples [begin, begin + count).
  AudioSegment Slice(std::size_t begin, std::size_t count) const;
};

// Throws "segment too short" / "invalid audio".
void ValidateSegment(const AudioSegment& segment);

double Rms(std::span<const double> samples);

// Channel reduction for multi-channel files: a non-negative index selects
// that channel, kAverageChannels averages all of them.
inline constexpr int kAverageChannels = -1;

enum class WavEncoding { kPcm16, kFloat32 };

AudioSegment ReadWav(const std::filesystem::path& path, int channel = kAverageChannels);
void WriteWav(const std::filesystem::path& path, const AudioSegment& segment,
              WavEncoding encoding = WavEncoding::kPcm16);

}  // namespace bpfdet

// include/bpfdet/track.hpp

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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace bpfdet {

// Estimated per-frame BPF pair (ascending, Hz) and activity score in [0, 1].
struct BpfTrack {
  std::vector<std::array<double, 2>> bpf;
  std::vector<double> activity;
  // Set by the oracle when only one harmonic source was found.
  std::vector<std::uint8_t> single_source;
  std::vector<std::optional<double>> distance_m;

  std::size_t size() const { return bpf.size(); }
  void Resize(std::size_t frames);
};

// CSV: frame,time_s,bpf1,bpf2,activity. Values are written with
// shortest round-trip precision, so read(write(x)) == x.
void WriteTrackCsv(const std::filesystem::path& path, const BpfTrack& track);
BpfTrack ReadTrackCsv(const std::filesystem::path& path);

}  // namespace bpfdet

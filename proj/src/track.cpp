// src/track.cpp

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

#include "bpfdet/track.hpp"

#include <fstream>

#include "bpfdet/audio.hpp"
#include "bpfdet/error.hpp"
#include "csv.hpp"

namespace bpfdet {

void BpfTrack::Resize(std::size_t frames) {
  bpf.resize(frames, {0.0, 0.0});
  activity.resize(frames, 0.0);
  single_source.resize(frames, 0);
  distance_m.resize(frames);
}

void WriteTrackCsv(const std::filesystem::path& path, const BpfTrack& track) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "frame,time_s,bpf1,bpf2,activity\n";
  for (std::size_t i = 0; i < track.size(); ++i)
    os << i << ',' << detail::FormatDouble(FrameTime(i)) << ','
       << detail::FormatDouble(track.bpf[i][0]) << ',' << detail::FormatDouble(track.bpf[i][1])
       << ',' << detail::FormatDouble(track.activity[i]) << '\n';
  if (!os) throw IoError("write failed for " + path.string());
}

BpfTrack ReadTrackCsv(const std::filesystem::path& path) {
  BpfTrack track;
  const std::string ctx = path.string();
  for (const auto& row : detail::ReadCsvRows(path)) {
    if (row.size() < 5) throw IoError(ctx + ": track rows need 5 columns");
    track.bpf.push_back({detail::ParseDoubleOrThrow(row[2], ctx),
                         detail::ParseDoubleOrThrow(row[3], ctx)});
    track.activity.push_back(detail::ParseDoubleOrThrow(row[4], ctx));
  }
  track.single_source.assign(track.size(), 0);
  track.distance_m.resize(track.size());
  return track;
}

}  // namespace bpfdet

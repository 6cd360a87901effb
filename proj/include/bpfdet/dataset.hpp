// include/bpfdet/dataset.hpp

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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpfdet/audio.hpp"
#include "bpfdet/calibration.hpp"
#include "bpfdet/features.hpp"
#include "bpfdet/synth.hpp"
#include "bpfdet/trainer.hpp"

namespace bpfdet {

enum class Role { kTrain, kValid, kTest };

const char* RoleName(Role role);
Role ParseRole(const std::string& name);

// One recording. Labels come from, in order of precedence: noise_only
// (all zero), labels_path (a label CSV already on the audio frame grid), or
// telemetry_path run through the calibration curve with sync and drift.
struct ManifestEntry {
  std::string id;
  std::filesystem::path wav_path;
  std::filesystem::path telemetry_path;
  std::filesystem::path labels_path;
  double sync_offset_s = 0.0;
  double drift_start_hz = 0.0;
  double drift_end_hz = 0.0;
  std::vector<double> delivery_times_s;
  Role role = Role::kTrain;
  bool noise_only = false;
};

struct RecordingManifest {
  std::filesystem::path calibration_path;
  std::vector<ManifestEntry> entries;
};

// Relative paths are resolved against the manifest's directory. Unknown keys
// are rejected.
RecordingManifest ReadManifest(const std::filesystem::path& path);
RecordingManifest ParseManifest(const std::string& json_text,
                                const std::filesystem::path& base_dir = {});
nlohmann::json ManifestEntryToJson(const ManifestEntry& entry);
void WriteManifest(const std::filesystem::path& path, const RecordingManifest& manifest);

struct LoadedRecording {
  ManifestEntry entry;
  AudioSegment audio;
  std::vector<TelemetryFrame> telemetry;
  BpfLabelTrack labels;  // one row per audio frame
  std::vector<std::string> warnings;
};

// Throws for a delivery flight in the training role, for missing or corrupt
// files (naming the entry), and for non-monotone telemetry timestamps.
LoadedRecording LoadRecording(const ManifestEntry& entry, const CalibrationCurve* curve,
                              int channel = kAverageChannels);

struct LabeledSegment {
  FeatureBlock features;  // standardized
  BpfLabelTrack labels;
  std::string source;
  std::size_t start_frame = 0;
  std::optional<double> max_distance_m;
  bool augmented = false;
};

struct AssembleOptions {
  AugmentPolicy augment;
  int augmented_copies = 2;
  double max_distance_m = 150.0;  // train/valid only
  int segment_frames = 93;
  std::uint64_t seed = 0;
  int channel = kAverageChannels;
};

struct DatasetSplits {
  std::vector<LabeledSegment> train, valid, test;
  NormStats norm;  // fitted on the training split
  std::vector<std::string> warnings;
};

// Cuts every recording into non-overlapping segments, adds augmented copies
// of training files and standardizes everything with training statistics.
DatasetSplits Assemble(const RecordingManifest& manifest, const AssembleOptions& options,
                       std::span<const AudioSegment> noise_sources = {});

std::vector<TrainingSample> ToTrainingSamples(std::span<const LabeledSegment> segments);

// Mean labeled distance over active frames; nullopt for noise or unknown.
std::optional<double> SegmentDistance(const BpfLabelTrack& labels);

struct DistanceGroupOptions {
  int group_count = 9;
  double max_m = 180.0;
  std::uint64_t seed = 0;
};

struct DistanceGroup {
  int index = 0;
  double lo_m = 0.0, hi_m = 0.0;
  std::vector<std::size_t> drone;  // indices into the input segments
  std::vector<std::size_t> noise;  // as many as drone, drawn from noise-only segments
  bool empty = true;
};

// Segments with any active frame and a distance go to their bin; segments
// without activity form the noise pool used to balance every bin 50/50.
std::vector<DistanceGroup> DistanceGroups(std::span<const BpfLabelTrack> tracks,
                                          const DistanceGroupOptions& options = {});

}  // namespace bpfdet

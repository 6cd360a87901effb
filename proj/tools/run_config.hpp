// tools/run_config.hpp

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
#include <string>

#include <json.hpp>

#include "bpfdet/crnn.hpp"
#include "bpfdet/detector.hpp"
#include "bpfdet/oracle.hpp"
#include "bpfdet/trainer.hpp"

namespace bpfdet::cli {

enum class EstimatorKind { kOracle, kCrnn };

EstimatorKind ParseEstimator(const std::string& name);

// Dataset assembly knobs exposed to the command line; the augmentation
// policy itself stays at its defaults.
struct AssembleSettings {
  int segment_frames = kSegmentFrames;
  int augmented_copies = 2;
  double max_distance_m = 150.0;
};

// Everything a run needs. Global options come from flags; the sections
// come from an optional JSON file:
//   {"model": {...}, "train": {...}, "assemble": {...}, "detector": {...},
//    "weights": {...}, "oracle": {...}, "activity_threshold": 0.5}
// Every section and key is optional; unknown ones are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  bool seed_given = false;  // --seed was passed explicitly
  int threads = 1;
  std::filesystem::path output_dir = ".";
  std::string log_level = "info";
  EstimatorKind estimator = EstimatorKind::kOracle;
  int channel = kAverageChannels;

  ModelConfig model;
  TrainConfig train;
  AssembleSettings assemble;
  DetectorConfig detector;
  ScoreWeights weights;
  OracleConfig oracle;
  double activity_threshold = 0.5;

  // Throws InvalidArgument on the first bad value.
  void Validate() const;
};

// Applies the sections of a JSON document on top of `base`.
RunConfig ApplyConfigJson(const nlohmann::json& doc, RunConfig base);
RunConfig LoadConfigFile(const std::filesystem::path& path, RunConfig base);

}  // namespace bpfdet::cli

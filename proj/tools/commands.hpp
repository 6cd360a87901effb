// tools/commands.hpp

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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpfdet/dataset.hpp"
#include "bpfdet/eval.hpp"
#include "run_config.hpp"

namespace bpfdet::cli {

using std::filesystem::path;

struct SynthOutput {
  std::string id;
  path wav, labels, manifest;
};

// Renders each scene spec to <out>/<stem>.wav and <stem>_labels.csv and
// upserts an entry into <out>/manifest.json. An explicit --seed replaces
// the spec's own seed.
std::vector<SynthOutput> CmdSynth(const RunConfig& cfg, const std::vector<path>& spec_files,
                                  Role role);

struct FeaturesOutput {
  path mel, cepstrum;
};

// Raw (unstandardized) log-mel and power-cepstrum matrices, one CSV row
// per frame.
FeaturesOutput CmdFeatures(const RunConfig& cfg, const path& wav);

// Assembles the manifest's train/valid splits, trains and writes
// <out>/model.bpfckpt plus <out>/train_log.jsonl.
path CmdTrain(const RunConfig& cfg, const path& manifest);

// Per-frame track CSV at <out>/<stem>_track.csv.
path CmdPredict(const RunConfig& cfg, const path& wav, const std::optional<path>& weights);

struct DetectOutput {
  path scores, events;
  std::vector<DeliveryEvent> detected;
};

// `input` is either a track CSV (detector only) or audio (estimator first).
DetectOutput CmdDetect(const RunConfig& cfg, const path& input, const std::optional<path>& weights);

// Runs the estimator over every manifest entry in `split` ("train",
// "valid", "test" or "all") and writes <out>/eval_report.json.
nlohmann::json CmdEval(const RunConfig& cfg, const path& manifest,
                       const std::optional<path>& weights, const std::string& split);

struct CalibrateOutput {
  path knots, table;
};

// Fits the PWM -> BPF curve from a measurement CSV; writes the averaged
// knots and a 10 us lookup table.
CalibrateOutput CmdCalibrate(const RunConfig& cfg, const path& measurements);

// Estimator over raw audio; each call builds its own model instance, so
// the result may be used from one thread only.
Estimator MakeEstimator(const RunConfig& cfg, const std::optional<path>& weights);

}  // namespace bpfdet::cli

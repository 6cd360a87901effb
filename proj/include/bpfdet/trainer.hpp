// include/bpfdet/trainer.hpp

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
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "bpfdet/audio.hpp"
#include "bpfdet/calibration.hpp"
#include "bpfdet/crnn.hpp"
#include "bpfdet/features.hpp"
#include "bpfdet/track.hpp"

namespace bpfdet {

// Network weights plus everything needed to run them on raw audio.
struct TrainedModel {
  ModelConfig config;
  NormStats norm;
  Crnn<float> net;

  explicit TrainedModel(const ModelConfig& cfg = {}, const NormStats& stats = {})
      : config(cfg), norm(stats), net(cfg) {}
};

// One standardized feature block with aligned labels.
struct TrainingSample {
  FeatureBlock features;
  BpfLabelTrack labels;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 16;
  int epochs = 100;
  std::uint64_t seed = 0;
  // Early stopping on validation MMAE; 0 disables it.
  int patience = 10;
  double activity_threshold = 0.5;
  LossConfig loss;
  // Evaluate train-set MAE / accuracy in eval mode after every epoch.
  bool train_metrics = true;
  std::optional<std::filesystem::path> log_path;  // JSON lines

  void Validate() const;
};

struct EpochStats {
  int epoch = 0;  // 0 = before any update
  double train_loss = 0.0;
  std::optional<double> train_mae_hz;
  std::optional<double> train_accuracy;
  std::optional<double> valid_loss;
  std::optional<double> valid_mae_hz;
  std::optional<double> valid_mmae_hz;
  std::optional<double> valid_accuracy;
};

struct TrainResult {
  std::vector<EpochStats> log;
  int best_epoch = 0;
  bool stopped_early = false;
};

// Returning false stops training after the current epoch.
using EpochCallback = std::function<bool(const EpochStats&)>;

// Initializes model.net from cfg.seed and trains it. With validation data
// the weights of the best validation MMAE epoch are kept.
TrainResult Train(TrainedModel& model, std::span<const TrainingSample> train,
                  std::span<const TrainingSample> valid, const TrainConfig& cfg,
                  const EpochCallback& callback = {});

// Eval-mode loss over a sample set.
double EvaluateLoss(TrainedModel& model, std::span<const TrainingSample> samples,
                    const LossConfig& loss = {});

// Per-sample predictions (eval mode), BPF pair sorted, not thresholded.
std::vector<BpfTrack> PredictSamples(TrainedModel& model, std::span<const TrainingSample> samples);

inline constexpr int kSegmentFrames = 93;
inline constexpr int kSegmentHop = 46;

// Windows the audio into 93-frame blocks at ~50% overlap, averages
// overlapping frames, sorts the pair and zeroes BPF below the threshold.
BpfTrack Predict(TrainedModel& model, const AudioSegment& audio, double activity_threshold = 0.5);

void SaveCheckpoint(const std::filesystem::path& path, TrainedModel& model);
TrainedModel LoadCheckpoint(const std::filesystem::path& path);

}  // namespace bpfdet

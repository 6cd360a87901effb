// include/bpfdet/eval.hpp

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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpfdet/audio.hpp"
#include "bpfdet/calibration.hpp"
#include "bpfdet/detector.hpp"
#include "bpfdet/track.hpp"

namespace bpfdet {

struct BpfErrors {
  std::optional<double> mae_hz;   // over frames with label activity 1
  std::optional<double> mmae_hz;  // ... and predicted activity >= threshold
};

BpfErrors ComputeBpfErrors(const BpfTrack& pred, const BpfLabelTrack& label,
                           double activity_threshold = 0.5);

struct ActivityMetrics {
  double accuracy = 0.0;
  std::optional<double> precision;  // undefined without predicted positives
  std::optional<double> recall;     // undefined without actual positives
};

ActivityMetrics ComputeActivityMetrics(const BpfTrack& pred, const BpfLabelTrack& label,
                                       double threshold = 0.5);
ActivityMetrics ComputeActivityMetrics(std::span<const double> scores, std::span<const int> labels,
                                       double threshold = 0.5);

struct RocPoint {
  double fpr;
  double tpr;
  double threshold;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1)
  double auc = 0.0;

  // Highest TPR among points with FPR <= max_fpr.
  double TprAtFpr(double max_fpr) const;
};

// Sweeps thresholds over the unique scores; a sample is positive when
// score >= threshold. Throws when either class is absent.
RocCurve ComputeRoc(std::span<const double> scores, std::span<const int> labels);

struct MetricsReport {
  std::string group;
  std::optional<double> mae_hz;
  std::optional<double> mmae_hz;
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<RocCurve> roc;

  nlohmann::json ToJson() const;
};

MetricsReport EvaluateTracks(const std::string& group, std::span<const BpfTrack> preds,
                             std::span<const BpfLabelTrack> labels, double activity_threshold = 0.5);

using Estimator = std::function<BpfTrack(const AudioSegment&)>;

struct SnrPoint {
  double snr_db;
  std::optional<double> mae_hz;
};

std::vector<SnrPoint> SnrSweep(const AudioSegment& clean, const BpfLabelTrack& truth,
                               const AudioSegment& noise, std::span<const double> snr_list,
                               const Estimator& estimator);

struct EventMatch {
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
};

struct DeliveryEvaluation {
  std::vector<double> frame_scores;  // invalid frames carry -inf
  std::vector<int> frame_labels;
  std::optional<RocCurve> roc;
  EventMatch events;
};

// Frames within +/- tolerance_s of a true delivery are positives. Events are
// matched greedily, nearest first, each truth at most once.
DeliveryEvaluation EvaluateDelivery(const DeliveryScoreSeries& series,
                                    std::span<const DeliveryEvent> events,
                                    std::span<const double> true_times_s,
                                    double tolerance_s = 0.25);
EventMatch MatchEvents(std::span<const DeliveryEvent> events, std::span<const double> true_times_s,
                       double tolerance_s = 0.25);

void WriteRocCsv(const std::filesystem::path& path, const RocCurve& roc);
void WriteSnrCsv(const std::filesystem::path& path, std::span<const SnrPoint> points);
void WriteScoreCsv(const std::filesystem::path& path, const DeliveryScoreSeries& series);
void WriteEventsJson(const std::filesystem::path& path, std::span<const DeliveryEvent> events);

}  // namespace bpfdet

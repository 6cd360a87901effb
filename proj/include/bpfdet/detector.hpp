// include/bpfdet/detector.hpp

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
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "bpfdet/track.hpp"

namespace bpfdet {

// Fixed 40-bin histogram over [100, 500) Hz. Values outside the range,
// including the 0 Hz emitted for inactive frames, are not counted.
class Histogram {
 public:
  static constexpr double kLowHz = 100.0;
  static constexpr double kHighHz = 500.0;
  static constexpr int kNumBins = 40;
  static constexpr double kBinWidthHz = (kHighHz - kLowHz) / kNumBins;

  Histogram() = default;
  explicit Histogram(std::span<const double> values);

  void Add(double value);
  int total() const { return total_; }
  std::span<const int> counts() const { return counts_; }
  std::array<double, kNumBins> Normalized() const;
  static double BinCenter(int bin) { return kLowHz + (bin + 0.5) * kBinWidthHz; }
  static double Edge(int i) { return kLowHz + i * kBinWidthHz; }

 private:
  std::array<int, kNumBins> counts_{};
  int total_ = 0;
};

// Distances on normalized histograms; both totals must be > 0.
double ChiSquared(const Histogram& a, const Histogram& b);
double JensenShannon(const Histogram& a, const Histogram& b);
double Intersection(const Histogram& a, const Histogram& b);
// Bin-centre weighted mean of a minus that of b, in Hz.
double MeanDiff(const Histogram& a, const Histogram& b);

// Same definitions over raw probability vectors.
double ChiSquared(std::span<const double> a, std::span<const double> b);
double JensenShannon(std::span<const double> a, std::span<const double> b);
double Intersection(std::span<const double> a, std::span<const double> b);

struct ScoreWeights {
  double chi_squared = 10.0;
  double jensen_shannon = 2.0;
  double intersection = -20.0;
  double mean_diff = -0.05;  // per Hz
};

struct DetectorConfig {
  std::vector<int> window_sizes = DefaultWindowSizes();
  double threshold = 0.0;
  double min_event_gap_s = 1.0;

  static std::vector<int> DefaultWindowSizes();
  int max_window() const;
  // Streaming output lag in frames: half the largest window.
  int lag() const { return max_window() / 2; }
  void Validate() const;
};

// Minimum in-range samples each half needs for a window to count.
inline int MinValidPerHalf(int n) { return (n + 3) / 4; }

struct WindowSplit {
  std::vector<double> before;  // frames [t - n/2, t - 1]
  std::vector<double> after;   // frames [t, t + n/2]
};

// motor is 0 or 1. Throws "window out of bounds".
WindowSplit SplitWindow(const BpfTrack& track, std::size_t t, int n, int motor);

double WindowScore(const Histogram& before, const Histogram& after, const ScoreWeights& w);

// Score for one motor and window; nullopt when either half has fewer than
// ceil(n/4) in-range values.
std::optional<double> MotorScore(const BpfTrack& track, std::size_t t, int n, int motor,
                                 const ScoreWeights& weights = {});

struct DeliveryEvent {
  std::size_t frame = 0;
  double time_s = 0.0;
  double score = 0.0;
};

struct DeliveryScoreSeries {
  std::vector<double> score;  // d_t, meaningful where valid
  std::vector<std::uint8_t> valid;
  std::vector<DeliveryEvent> events;

  std::size_t size() const { return score.size(); }
};

DeliveryScoreSeries ScoreSeries(const BpfTrack& track, const DetectorConfig& cfg = {},
                                const ScoreWeights& weights = {});

// Runs of valid frames with d_t >= threshold, one event per run at its
// peak; runs separated by less than min_event_gap_s are merged.
std::vector<DeliveryEvent> ExtractEvents(const DeliveryScoreSeries& series, double threshold,
                                         double min_event_gap_s);

// Online detector over a ring buffer of the last max_window frames. Each
// pushed frame k yields the score of frame k - lag once enough context has
// arrived; Flush() emits the tail. The emitted sequence is bit-identical to
// ScoreSeries on the same track.
class StreamingDetector {
 public:
  struct Output {
    std::size_t frame;
    double score;
    bool valid;
  };

  explicit StreamingDetector(DetectorConfig cfg = {}, ScoreWeights weights = {});

  std::optional<Output> Push(const std::array<double, 2>& bpf);
  std::vector<Output> Flush();
  std::size_t frames_seen() const { return pushed_; }

 private:
  Output ScoreFrame(std::size_t t, std::size_t known_frames) const;

  DetectorConfig cfg_;
  ScoreWeights weights_;
  std::size_t capacity_;
  std::vector<std::array<double, 2>> ring_;
  std::size_t pushed_ = 0;
  std::size_t emitted_ = 0;
};

}  // namespace bpfdet

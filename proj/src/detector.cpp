// src/detector.cpp

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

#include "bpfdet/detector.hpp"

#include <algorithm>
#include <cmath>

#include "bpfdet/audio.hpp"
#include "bpfdet/error.hpp"

namespace bpfdet {

Histogram::Histogram(std::span<const double> values) {
  for (double v : values) Add(v);
}

void Histogram::Add(double value) {
  if (!(value >= kLowHz && value < kHighHz)) return;
  const int bin = std::min(kNumBins - 1, static_cast<int>((value - kLowHz) / kBinWidthHz));
  ++counts_[bin];
  ++total_;
}

std::array<double, Histogram::kNumBins> Histogram::Normalized() const {
  std::array<double, kNumBins> p{};
  if (total_ == 0) return p;
  for (int i = 0; i < kNumBins; ++i) p[i] = static_cast<double>(counts_[i]) / total_;
  return p;
}

namespace {

void RequireMass(const Histogram& a, const Histogram& b) {
  if (a.total() == 0 || b.total() == 0)
    throw InvalidArgument("histogram distance needs non-empty histograms");
}

void RequireSameSize(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw InvalidArgument("histogram sizes differ");
}

}  // namespace

double ChiSquared(std::span<const double> a, std::span<const double> b) {
  RequireSameSize(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double s = a[i] + b[i];
    if (s > 0) acc += (a[i] - b[i]) * (a[i] - b[i]) / s;
  }
  return 0.5 * acc;
}

double JensenShannon(std::span<const double> a, std::span<const double> b) {
  RequireSameSize(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double m = 0.5 * (a[i] + b[i]);
    if (a[i] > 0) acc += 0.5 * a[i] * std::log2(a[i] / m);
    if (b[i] > 0) acc += 0.5 * b[i] * std::log2(b[i] / m);
  }
  return acc;
}

double Intersection(std::span<const double> a, std::span<const double> b) {
  RequireSameSize(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::min(a[i], b[i]);
  return acc;
}

// The histogram overloads work on integer counts so that identical and
// disjoint inputs give exact results: with p = ca / na and q = cb / nb,
// every ratio below is formed from the exact products ca * nb and cb * na.
double ChiSquared(const Histogram& a, const Histogram& b) {
  RequireMass(a, b);
  const double na = a.total(), nb = b.total();
  double acc = 0.0;
  for (int i = 0; i < Histogram::kNumBins; ++i) {
    const double x = a.counts()[i] * nb, y = b.counts()[i] * na;
    if (x + y > 0) acc += (x - y) * (x - y) / (x + y);
  }
  return 0.5 * acc / (na * nb);
}

double JensenShannon(const Histogram& a, const Histogram& b) {
  RequireMass(a, b);
  const double na = a.total(), nb = b.total();
  double acc_a = 0.0, acc_b = 0.0;
  for (int i = 0; i < Histogram::kNumBins; ++i) {
    const double ca = a.counts()[i], cb = b.counts()[i];
    const double x = ca * nb, y = cb * na;
    if (ca > 0) acc_a += ca * std::log2(2.0 * x / (x + y));
    if (cb > 0) acc_b += cb * std::log2(2.0 * y / (x + y));
  }
  return 0.5 * (acc_a / na + acc_b / nb);
}

double Intersection(const Histogram& a, const Histogram& b) {
  RequireMass(a, b);
  const double na = a.total(), nb = b.total();
  double acc = 0.0;
  for (int i = 0; i < Histogram::kNumBins; ++i)
    acc += std::min(a.counts()[i] * nb, b.counts()[i] * na);
  return acc / (na * nb);
}

double MeanDiff(const Histogram& a, const Histogram& b) {
  RequireMass(a, b);
  auto mean = [](const Histogram& h) {
    double acc = 0.0;
    for (int i = 0; i < Histogram::kNumBins; ++i) acc += h.counts()[i] * Histogram::BinCenter(i);
    return acc / h.total();
  };
  return mean(a) - mean(b);
}

std::vector<int> DetectorConfig::DefaultWindowSizes() {
  // Nearest odd integers to 15 evenly spaced points on [93, 465].
  std::vector<int> sizes;
  for (int i = 0; i < 15; ++i) {
    const double x = 93.0 + (465.0 - 93.0) * i / 14.0;
    sizes.push_back(2 * static_cast<int>(std::lround((x - 1.0) / 2.0)) + 1);
  }
  return sizes;
}

int DetectorConfig::max_window() const {
  return window_sizes.empty() ? 1 : *std::max_element(window_sizes.begin(), window_sizes.end());
}

void DetectorConfig::Validate() const {
  if (window_sizes.empty()) throw InvalidArgument("detector needs at least one window");
  for (int n : window_sizes)
    if (n < 3 || n % 2 == 0) throw InvalidArgument("window sizes must be odd and >= 3");
  if (!(min_event_gap_s >= 0)) throw InvalidArgument("min_event_gap_s must be >= 0");
}

namespace {

bool InBounds(std::size_t t, int n, std::size_t frames) {
  const std::size_t half = static_cast<std::size_t>(n / 2);
  return t >= half && t + half < frames && t >= 1;
}

// Shared by batch and streaming paths so both sum in the same order.
template <typename ValueAt>
std::optional<double> MotorScoreImpl(ValueAt&& value_at, std::size_t t, int n, int motor,
                                     const ScoreWeights& weights) {
  const std::size_t half = static_cast<std::size_t>(n / 2);
  Histogram before, after;
  for (std::size_t k = t - half; k < t; ++k) before.Add(value_at(k, motor));
  for (std::size_t k = t; k <= t + half; ++k) after.Add(value_at(k, motor));
  const int need = MinValidPerHalf(n);
  if (before.total() < need || after.total() < need) return std::nullopt;
  return WindowScore(before, after, weights);
}

template <typename ValueAt>
std::pair<double, bool> FrameScore(ValueAt&& value_at, std::size_t t, std::size_t frames,
                                   const DetectorConfig& cfg, const ScoreWeights& weights) {
  double sum = 0.0;
  int count = 0;
  for (int n : cfg.window_sizes) {
    if (!InBounds(t, n, frames)) continue;
    for (int m = 0; m < 2; ++m) {
      if (auto s = MotorScoreImpl(value_at, t, n, m, weights)) {
        sum += *s;
        ++count;
      }
    }
  }
  if (count == 0) return {0.0, false};
  return {sum / count, true};
}

}  // namespace

WindowSplit SplitWindow(const BpfTrack& track, std::size_t t, int n, int motor) {
  if (n < 1 || n % 2 == 0) throw InvalidArgument("window size must be odd");
  if (motor < 0 || motor > 1) throw InvalidArgument("motor index must be 0 or 1");
  if (!InBounds(t, n, track.size())) throw InvalidArgument("window out of bounds");
  const std::size_t half = static_cast<std::size_t>(n / 2);
  WindowSplit split;
  for (std::size_t k = t - half; k < t; ++k) split.before.push_back(track.bpf[k][motor]);
  for (std::size_t k = t; k <= t + half; ++k) split.after.push_back(track.bpf[k][motor]);
  return split;
}

double WindowScore(const Histogram& before, const Histogram& after, const ScoreWeights& w) {
  return w.chi_squared * ChiSquared(after, before) + w.jensen_shannon * JensenShannon(after, before) +
         w.intersection * Intersection(after, before) + w.mean_diff * MeanDiff(after, before);
}

std::optional<double> MotorScore(const BpfTrack& track, std::size_t t, int n, int motor,
                                 const ScoreWeights& weights) {
  if (n < 1 || n % 2 == 0) throw InvalidArgument("window size must be odd");
  if (!InBounds(t, n, track.size())) throw InvalidArgument("window out of bounds");
  return MotorScoreImpl([&](std::size_t k, int m) { return track.bpf[k][m]; }, t, n, motor,
                        weights);
}

DeliveryScoreSeries ScoreSeries(const BpfTrack& track, const DetectorConfig& cfg,
                                const ScoreWeights& weights) {
  cfg.Validate();
  DeliveryScoreSeries series;
  const std::size_t frames = track.size();
  series.score.assign(frames, 0.0);
  series.valid.assign(frames, 0);
  auto value_at = [&](std::size_t k, int m) { return track.bpf[k][m]; };
  for (std::size_t t = 0; t < frames; ++t) {
    auto [score, valid] = FrameScore(value_at, t, frames, cfg, weights);
    series.score[t] = score;
    series.valid[t] = valid ? 1 : 0;
  }
  series.events = ExtractEvents(series, cfg.threshold, cfg.min_event_gap_s);
  return series;
}

std::vector<DeliveryEvent> ExtractEvents(const DeliveryScoreSeries& series, double threshold,
                                         double min_event_gap_s) {
  struct Run {
    std::size_t first, last, peak;
  };
  std::vector<Run> runs;
  for (std::size_t t = 0; t < series.size(); ++t) {
    const bool above = series.valid[t] && series.score[t] >= threshold;
    if (!above) continue;
    if (!runs.empty() && runs.back().last + 1 == t) {
      runs.back().last = t;
      if (series.score[t] > series.score[runs.back().peak]) runs.back().peak = t;
    } else {
      runs.push_back({t, t, t});
    }
  }
  std::vector<Run> merged;
  for (const Run& r : runs) {
    if (!merged.empty() && FrameTime(r.first) - FrameTime(merged.back().last) < min_event_gap_s) {
      Run& m = merged.back();
      m.last = r.last;
      if (series.score[r.peak] > series.score[m.peak]) m.peak = r.peak;
    } else {
      merged.push_back(r);
    }
  }
  std::vector<DeliveryEvent> events;
  for (const Run& r : merged) events.push_back({r.peak, FrameTime(r.peak), series.score[r.peak]});
  return events;
}

StreamingDetector::StreamingDetector(DetectorConfig cfg, ScoreWeights weights)
    : cfg_(std::move(cfg)), weights_(weights) {
  cfg_.Validate();
  capacity_ = static_cast<std::size_t>(cfg_.max_window());
  ring_.resize(capacity_);
}

StreamingDetector::Output StreamingDetector::ScoreFrame(std::size_t t, std::size_t known) const {
  auto value_at = [&](std::size_t k, int m) { return ring_[k % capacity_][m]; };
  auto [score, valid] = FrameScore(value_at, t, known, cfg_, weights_);
  return {t, score, valid};
}

std::optional<StreamingDetector::Output> StreamingDetector::Push(const std::array<double, 2>& bpf) {
  ring_[pushed_ % capacity_] = bpf;
  ++pushed_;
  const std::size_t lag = static_cast<std::size_t>(cfg_.lag());
  if (pushed_ < lag + 1) return std::nullopt;
  const std::size_t t = pushed_ - 1 - lag;
  emitted_ = t + 1;
  return ScoreFrame(t, pushed_);
}

std::vector<StreamingDetector::Output> StreamingDetector::Flush() {
  std::vector<Output> out;
  for (std::size_t t = emitted_; t < pushed_; ++t) out.push_back(ScoreFrame(t, pushed_));
  emitted_ = pushed_;
  return out;
}

}  // namespace bpfdet

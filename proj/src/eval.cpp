// src/eval.cpp

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

#include "bpfdet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "bpfdet/error.hpp"
#include "bpfdet/synth.hpp"
#include "csv.hpp"

namespace bpfdet {

namespace {

void RequireAligned(std::size_t a, std::size_t b) {
  if (a != b)
    throw InvalidArgument("prediction and label lengths differ (" + std::to_string(a) + " vs " +
                          std::to_string(b) + ")");
}

nlohmann::json OptJson(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

BpfErrors ComputeBpfErrors(const BpfTrack& pred, const BpfLabelTrack& label,
                           double activity_threshold) {
  RequireAligned(pred.size(), label.size());
  double all = 0, masked = 0;
  std::size_t n_all = 0, n_masked = 0;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (label.activity[i] != 1) continue;
    const double err = 0.5 * (std::abs(pred.bpf[i][0] - label.bpf[i][0]) +
                              std::abs(pred.bpf[i][1] - label.bpf[i][1]));
    all += err;
    ++n_all;
    if (pred.activity[i] >= activity_threshold) {
      masked += err;
      ++n_masked;
    }
  }
  BpfErrors out;
  if (n_all) out.mae_hz = all / n_all;
  if (n_masked) out.mmae_hz = masked / n_masked;
  return out;
}

ActivityMetrics ComputeActivityMetrics(std::span<const double> scores, std::span<const int> labels,
                                       double threshold) {
  RequireAligned(scores.size(), labels.size());
  if (scores.empty()) throw InvalidArgument("activity metrics need at least one frame");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool p = scores[i] >= threshold;
    const bool y = labels[i] == 1;
    tp += p && y;
    fp += p && !y;
    tn += !p && !y;
    fn += !p && y;
  }
  ActivityMetrics m;
  m.accuracy = static_cast<double>(tp + tn) / scores.size();
  if (tp + fp) m.precision = static_cast<double>(tp) / (tp + fp);
  if (tp + fn) m.recall = static_cast<double>(tp) / (tp + fn);
  return m;
}

ActivityMetrics ComputeActivityMetrics(const BpfTrack& pred, const BpfLabelTrack& label,
                                       double threshold) {
  RequireAligned(pred.size(), label.size());
  return ComputeActivityMetrics(pred.activity, label.activity, threshold);
}

double RocCurve::TprAtFpr(double max_fpr) const {
  double best = 0.0;
  for (const auto& p : points)
    if (p.fpr <= max_fpr) best = std::max(best, p.tpr);
  return best;
}

RocCurve ComputeRoc(std::span<const double> scores, std::span<const int> labels) {
  RequireAligned(scores.size(), labels.size());
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw InvalidArgument("ROC needs both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    // Consume every sample tied at this score.
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]] == 1) ++tp; else ++fp;
      ++i;
    }
    roc.points.push_back({static_cast<double>(fp) / negatives, static_cast<double>(tp) / positives, s});
  }
  if (roc.points.back().fpr != 1.0 || roc.points.back().tpr != 1.0)
    roc.points.push_back({1.0, 1.0, -std::numeric_limits<double>::infinity()});
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    const auto& a = roc.points[i - 1];
    const auto& b = roc.points[i];
    roc.auc += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
  }
  return roc;
}

nlohmann::json MetricsReport::ToJson() const {
  nlohmann::json j;
  j["group"] = group;
  j["mae_hz"] = OptJson(mae_hz);
  j["mmae_hz"] = OptJson(mmae_hz);
  j["accuracy"] = OptJson(accuracy);
  j["precision"] = OptJson(precision);
  j["recall"] = OptJson(recall);
  j["auc"] = roc ? nlohmann::json(roc->auc) : nlohmann::json(nullptr);
  return j;
}

MetricsReport EvaluateTracks(const std::string& group, std::span<const BpfTrack> preds,
                             std::span<const BpfLabelTrack> labels, double activity_threshold) {
  RequireAligned(preds.size(), labels.size());
  BpfTrack pred_all;
  BpfLabelTrack label_all;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    RequireAligned(preds[i].size(), labels[i].size());
    pred_all.bpf.insert(pred_all.bpf.end(), preds[i].bpf.begin(), preds[i].bpf.end());
    pred_all.activity.insert(pred_all.activity.end(), preds[i].activity.begin(), preds[i].activity.end());
    label_all.bpf.insert(label_all.bpf.end(), labels[i].bpf.begin(), labels[i].bpf.end());
    label_all.activity.insert(label_all.activity.end(), labels[i].activity.begin(), labels[i].activity.end());
  }
  label_all.distance_m.resize(label_all.bpf.size());
  MetricsReport r;
  r.group = group;
  if (pred_all.size() == 0) return r;
  const auto errors = ComputeBpfErrors(pred_all, label_all, activity_threshold);
  r.mae_hz = errors.mae_hz;
  r.mmae_hz = errors.mmae_hz;
  const auto act = ComputeActivityMetrics(pred_all.activity, label_all.activity, activity_threshold);
  r.accuracy = act.accuracy;
  r.precision = act.precision;
  r.recall = act.recall;
  const auto pos = std::count(label_all.activity.begin(), label_all.activity.end(), 1);
  if (pos > 0 && static_cast<std::size_t>(pos) < label_all.size())
    r.roc = ComputeRoc(pred_all.activity, label_all.activity);
  return r;
}

std::vector<SnrPoint> SnrSweep(const AudioSegment& clean, const BpfLabelTrack& truth,
                               const AudioSegment& noise, std::span<const double> snr_list,
                               const Estimator& estimator) {
  std::vector<SnrPoint> out;
  for (double snr : snr_list) {
    const AudioSegment mixed = MixAtSnr(clean, noise, snr);
    const BpfTrack pred = estimator(mixed);
    out.push_back({snr, ComputeBpfErrors(pred, truth).mae_hz});
  }
  return out;
}

EventMatch MatchEvents(std::span<const DeliveryEvent> events, std::span<const double> true_times_s,
                       double tolerance_s) {
  struct Pair {
    double dist;
    std::size_t event, truth;
  };
  std::vector<Pair> pairs;
  for (std::size_t e = 0; e < events.size(); ++e)
    for (std::size_t t = 0; t < true_times_s.size(); ++t) {
      const double d = std::abs(events[e].time_s - true_times_s[t]);
      if (d <= tolerance_s) pairs.push_back({d, e, t});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.dist < b.dist; });
  std::vector<char> used_event(events.size(), 0), used_truth(true_times_s.size(), 0);
  EventMatch m;
  for (const Pair& p : pairs) {
    if (used_event[p.event] || used_truth[p.truth]) continue;
    used_event[p.event] = used_truth[p.truth] = 1;
    ++m.true_positives;
  }
  m.false_positives = static_cast<int>(events.size()) - m.true_positives;
  m.false_negatives = static_cast<int>(true_times_s.size()) - m.true_positives;
  return m;
}

DeliveryEvaluation EvaluateDelivery(const DeliveryScoreSeries& series,
                                    std::span<const DeliveryEvent> events,
                                    std::span<const double> true_times_s, double tolerance_s) {
  DeliveryEvaluation ev;
  ev.frame_scores.resize(series.size());
  ev.frame_labels.assign(series.size(), 0);
  for (std::size_t t = 0; t < series.size(); ++t) {
    ev.frame_scores[t] = series.valid[t] ? series.score[t] : -std::numeric_limits<double>::infinity();
    for (double truth : true_times_s)
      if (std::abs(FrameTime(t) - truth) <= tolerance_s) ev.frame_labels[t] = 1;
  }
  const auto pos = std::count(ev.frame_labels.begin(), ev.frame_labels.end(), 1);
  if (pos > 0 && static_cast<std::size_t>(pos) < series.size())
    ev.roc = ComputeRoc(ev.frame_scores, ev.frame_labels);
  ev.events = MatchEvents(events, true_times_s, tolerance_s);
  return ev;
}

void WriteRocCsv(const std::filesystem::path& path, const RocCurve& roc) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "fpr,tpr,threshold\n";
  for (const auto& p : roc.points)
    os << detail::FormatDouble(p.fpr) << ',' << detail::FormatDouble(p.tpr) << ','
       << detail::FormatDouble(p.threshold) << '\n';
}

void WriteSnrCsv(const std::filesystem::path& path, std::span<const SnrPoint> points) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "snr_db,mae_hz\n";
  for (const auto& p : points)
    os << detail::FormatDouble(p.snr_db) << ',' << (p.mae_hz ? detail::FormatDouble(*p.mae_hz) : "")
       << '\n';
}

void WriteScoreCsv(const std::filesystem::path& path, const DeliveryScoreSeries& series) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "frame,time_s,d_t,valid\n";
  for (std::size_t t = 0; t < series.size(); ++t)
    os << t << ',' << detail::FormatDouble(FrameTime(t)) << ','
       << detail::FormatDouble(series.score[t]) << ',' << int(series.valid[t]) << '\n';
}

void WriteEventsJson(const std::filesystem::path& path, std::span<const DeliveryEvent> events) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : events) j.push_back({{"time_s", e.time_s}, {"score", e.score}, {"frame", e.frame}});
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace bpfdet

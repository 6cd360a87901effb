// tests/test_eval.cpp

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

#include <doctest.h>

#include <cmath>
#include <random>

#include "bpfdet/error.hpp"
#include "bpfdet/eval.hpp"
#include "bpfdet/synth.hpp"
#include "test_util.hpp"

using namespace bpfdet;

namespace {

BpfLabelTrack Labels(std::size_t n, double a, double b) {
  BpfLabelTrack l;
  l.Resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    l.bpf[i] = {a, b};
    l.activity[i] = 1;
  }
  return l;
}

BpfTrack Pred(std::size_t n, double a, double b, double act = 1.0) {
  BpfTrack p;
  p.Resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.bpf[i] = {a, b};
    p.activity[i] = act;
  }
  return p;
}

// Probability a random positive outscores a random negative, ties half.
double PairwiseAuc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

}  // namespace

TEST_CASE("bpf errors") {
  const auto label = Labels(10, 200, 260);
  auto e = ComputeBpfErrors(Pred(10, 200, 260), label);
  CHECK(*e.mae_hz == 0.0);
  CHECK(*e.mmae_hz == 0.0);

  e = ComputeBpfErrors(Pred(10, 210, 270), label);
  CHECK(*e.mae_hz == doctest::Approx(10.0));
  CHECK(*e.mmae_hz == doctest::Approx(10.0));

  // Half the frames are wrong by 100 Hz but flagged inactive: only MAE sees them.
  auto p = Pred(10, 200, 260);
  for (int i = 0; i < 5; ++i) {
    p.bpf[i] = {300, 360};
    p.activity[i] = 0.1;
  }
  e = ComputeBpfErrors(p, label);
  CHECK(*e.mae_hz == doctest::Approx(50.0));
  CHECK(*e.mmae_hz == doctest::Approx(0.0));

  // Label-inactive frames are ignored; all of them gives no value.
  auto quiet = label;
  std::fill(quiet.activity.begin(), quiet.activity.end(), 0);
  e = ComputeBpfErrors(Pred(10, 0, 0), quiet);
  CHECK_FALSE(e.mae_hz.has_value());
  CHECK_FALSE(e.mmae_hz.has_value());

  CHECK_ERROR(kInvalidArgument, "lengths differ", ComputeBpfErrors(Pred(9, 0, 0), label));
}

TEST_CASE("activity metrics") {
  const std::vector<int> y = {1, 1, 0, 0};
  auto m = ComputeActivityMetrics(std::vector<double>{1, 1, 1, 1}, y);
  CHECK(m.accuracy == 0.5);
  CHECK(*m.precision == 0.5);
  CHECK(*m.recall == 1.0);

  m = ComputeActivityMetrics(std::vector<double>{0, 0, 0, 0}, y);
  CHECK(m.accuracy == 0.5);
  CHECK_FALSE(m.precision.has_value());
  CHECK(*m.recall == 0.0);

  m = ComputeActivityMetrics(std::vector<double>{0.9, 0.2, 0.7, 0.1}, y);
  CHECK(m.accuracy == 0.5);
  CHECK(*m.precision == 0.5);
  CHECK(*m.recall == 0.5);

  m = ComputeActivityMetrics(std::vector<double>{0.5, 0.0}, std::vector<int>{0, 0});
  CHECK_FALSE(m.recall.has_value());
  CHECK(m.accuracy == 0.5);  // threshold is inclusive
}

TEST_CASE("ROC area matches the pairwise ranking probability") {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> level(0, 20);  // coarse scores force ties
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(200);
    std::vector<int> y(200);
    for (std::size_t i = 0; i < s.size(); ++i) {
      y[i] = coin(rng);
      s[i] = level(rng) + 3.0 * y[i] * (trial % 3);
    }
    const auto roc = ComputeRoc(s, y);
    CHECK(roc.auc == doctest::Approx(PairwiseAuc(s, y)).epsilon(1e-12));
    CHECK(roc.points.front().fpr == 0.0);
    CHECK(roc.points.front().tpr == 0.0);
    CHECK(roc.points.back().fpr == 1.0);
    CHECK(roc.points.back().tpr == 1.0);
    for (std::size_t i = 1; i < roc.points.size(); ++i) {
      CHECK(roc.points[i].fpr >= roc.points[i - 1].fpr);
      CHECK(roc.points[i].tpr >= roc.points[i - 1].tpr);
    }
  }
}

TEST_CASE("ROC of uninformative scores is near chance") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> s(10000);
  std::vector<int> y(10000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = u(rng);
    y[i] = i % 2;
  }
  std::shuffle(y.begin(), y.end(), rng);
  CHECK(std::abs(ComputeRoc(s, y).auc - 0.5) < 0.05);
}

TEST_CASE("ROC edge cases") {
  const auto perfect = ComputeRoc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0});
  CHECK(perfect.auc == 1.0);
  CHECK(perfect.TprAtFpr(0.0) == 1.0);
  const auto inverted = ComputeRoc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{1, 1, 0, 0});
  CHECK(inverted.auc == 0.0);
  CHECK(inverted.TprAtFpr(0.5) == 0.0);
  const auto tied = ComputeRoc(std::vector<double>{1, 1, 1, 1}, std::vector<int>{1, 0, 1, 0});
  CHECK(tied.auc == 0.5);
  CHECK_ERROR(kInvalidArgument, "", ComputeRoc(std::vector<double>{1, 2}, std::vector<int>{1, 1}));
}

TEST_CASE("event matching within tolerance") {
  const std::vector<double> truth = {10.0};
  auto m = MatchEvents(std::vector<DeliveryEvent>{{0, 10.1, 1.0}}, truth);
  CHECK(m.true_positives == 1);
  CHECK(m.false_positives == 0);
  CHECK(m.false_negatives == 0);

  m = MatchEvents(std::vector<DeliveryEvent>{{0, 10.4, 1.0}}, truth);
  CHECK(m.true_positives == 0);
  CHECK(m.false_positives == 1);
  CHECK(m.false_negatives == 1);

  m = MatchEvents(std::vector<DeliveryEvent>{}, truth);
  CHECK(m.false_negatives == 1);

  // Each truth matches once; the nearer event wins.
  m = MatchEvents(std::vector<DeliveryEvent>{{0, 9.9, 1.0}, {0, 10.05, 1.0}}, truth);
  CHECK(m.true_positives == 1);
  CHECK(m.false_positives == 1);

  // Nearest-first is greedy, not a maximum matching: 10.2 takes 10.3 and
  // strands both 10.45 and 10.0.
  m = MatchEvents(std::vector<DeliveryEvent>{{0, 10.2, 1.0}, {0, 10.45, 1.0}},
                  std::vector<double>{10.0, 10.3});
  CHECK(m.true_positives == 1);
  CHECK(m.false_negatives == 1);
}

TEST_CASE("delivery evaluation labels frames near the truth") {
  DeliveryScoreSeries series;
  series.score.assign(200, 0.0);
  series.valid.assign(200, 1);
  series.valid[0] = 0;
  const std::size_t hit = 100;
  series.score[hit] = 5.0;
  const auto ev = EvaluateDelivery(series, {}, std::vector<double>{FrameTime(hit)});
  CHECK(std::isinf(ev.frame_scores[0]));
  int positives = 0;
  for (std::size_t t = 0; t < series.size(); ++t) {
    positives += ev.frame_labels[t];
    if (ev.frame_labels[t]) CHECK(std::abs(FrameTime(t) - FrameTime(hit)) <= 0.25);
  }
  CHECK(positives == 15);  // +/- 0.25 s at 31.25 frames/s
  REQUIRE(ev.roc.has_value());
  CHECK(ev.roc->auc > 0.5);
  CHECK(ev.events.false_negatives == 1);
}

TEST_CASE("metrics report serializes undefined values as null") {
  BpfLabelTrack quiet;
  quiet.Resize(4);
  const std::vector<BpfTrack> preds = {Pred(4, 0, 0, 0.0)};
  const std::vector<BpfLabelTrack> labels = {quiet};
  const auto r = EvaluateTracks("noise", preds, labels);
  const auto j = r.ToJson();
  CHECK(j["group"] == "noise");
  CHECK(j["mae_hz"].is_null());
  CHECK(j["precision"].is_null());
  CHECK(j["auc"].is_null());
  CHECK(j["accuracy"] == 1.0);

  const std::vector<BpfTrack> good = {Pred(4, 200, 250)};
  const std::vector<BpfLabelTrack> truth = {Labels(4, 200, 250)};
  const auto j2 = EvaluateTracks("drone", good, truth).ToJson();
  CHECK(j2["mae_hz"] == 0.0);
  CHECK(j2["recall"] == 1.0);
}

TEST_CASE("SNR sweep runs the estimator on each mix") {
  SceneSpec s;
  s.duration_s = 3.0;
  s.rotors.resize(1);
  const auto scene = RenderScene(s);
  const auto noise = WhiteNoise(scene.audio.size(), 9);
  std::vector<double> clean_to_mix;
  const auto points = SnrSweep(scene.audio, scene.labels, noise, std::vector<double>{-10, 0, 10},
                               [&](const AudioSegment& a) {
                                 clean_to_mix.push_back(20 * std::log10(Rms(scene.audio.samples) /
                                                                Rms(a.samples)));
                                 return Pred(scene.labels.size(), 220, 220);
                               });
  REQUIRE(points.size() == 3);
  CHECK(clean_to_mix.size() == 3);
  CHECK(clean_to_mix[0] < clean_to_mix[1]);
  CHECK(clean_to_mix[1] < clean_to_mix[2]);
  for (const auto& p : points) CHECK(*p.mae_hz == doctest::Approx(0.0));
}

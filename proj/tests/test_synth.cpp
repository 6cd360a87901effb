// tests/test_synth.cpp

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
#include <complex>
#include <random>

#include "bpfdet/error.hpp"
#include "bpfdet/features.hpp"
#include "bpfdet/synth.hpp"
#include "test_util.hpp"

using namespace bpfdet;

namespace {

SceneSpec Basic(std::uint64_t seed = 1) {
  SceneSpec s;
  s.seed = seed;
  s.duration_s = 4.0;
  s.rotors.resize(2);
  s.rotors[0].base_bpf = 200;
  s.rotors[1].base_bpf = 280;
  return s;
}

// Single-bin DFT magnitude.
double Goertzel(const std::vector<double>& x, double hz, std::size_t n) {
  std::complex<double> acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * std::polar(1.0, -2 * M_PI * hz * i / kSampleRate);
  return std::abs(acc) / n;
}

}  // namespace

TEST_CASE("rendering is deterministic in the seed") {
  const auto a = RenderScene(Basic(5)), b = RenderScene(Basic(5)), c = RenderScene(Basic(6));
  CHECK(a.audio.samples == b.audio.samples);
  CHECK(a.audio.samples != c.audio.samples);
  CHECK(a.audio.size() == 64000);
  CHECK(a.labels.size() == 125);
}

TEST_CASE("labels are the exact rotor BPFs, top two ascending") {
  SceneSpec s = Basic();
  s.rotors.resize(4);
  s.rotors[2].base_bpf = 150;
  s.rotors[3].base_bpf = 330;
  const auto r = RenderScene(s);
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    CHECK(r.labels.bpf[i] == std::array<double, 2>{280, 330});
    CHECK(r.labels.activity[i] == 1);
    CHECK(r.labels.distance_m[i] == 1.0);
  }
}

TEST_CASE("rotor audio has its energy at the BPF harmonics") {
  SceneSpec s = Basic();
  s.rotors.resize(1);
  const auto r = RenderScene(s);
  const double on = Goertzel(r.audio.samples, 200.0, 16000);
  const double h2 = Goertzel(r.audio.samples, 400.0, 16000);
  const double off = Goertzel(r.audio.samples, 233.0, 16000);
  CHECK(on > 20 * off);
  CHECK(h2 == doctest::Approx(on / 2).epsilon(0.1));  // 1/h roll-off
  // Blade-rate modulated carrier: sidebands at 5000 +/- 200 Hz.
  CHECK(Goertzel(r.audio.samples, 5200.0, 16000) > 20 * Goertzel(r.audio.samples, 5133.0, 16000));
}

TEST_CASE("delivery drops both rotors by the requested amount and settles") {
  SceneSpec s = Basic();
  s.duration_s = 6.0;
  s.delivery.push_back({3.0, 30.0, 0.1});
  const auto r = RenderScene(s);
  CHECK(r.delivery_times_s == std::vector<double>{3.0});
  CHECK(r.labels.bpf[50] == std::array<double, 2>{200, 280});
  const auto& late = r.labels.bpf[static_cast<std::size_t>(4.5 * kFrameRate)];
  CHECK(late[0] == doctest::Approx(170).epsilon(1e-4));
  CHECK(late[1] == doctest::Approx(250).epsilon(1e-4));
}

TEST_CASE("jitter wanders with roughly the requested spread") {
  SceneSpec s = Basic();
  s.duration_s = 60.0;
  s.rotors.resize(1);
  s.rotors[0].jitter_sigma = 5.0;
  s.rotors[0].jitter_tau_s = 0.5;
  const auto r = RenderScene(s);
  double sum = 0, sq = 0;
  for (const auto& p : r.labels.bpf) {
    sum += p[0];
    sq += p[0] * p[0];
  }
  const double n = static_cast<double>(r.labels.size());
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  CHECK(sd > 3.0);
  CHECK(sd < 7.0);
}

TEST_CASE("amplitude falls as 1/distance") {
  SceneSpec near = Basic(), far = Basic();
  near.distance_traj = {{0.0, 2.0}};
  far.distance_traj = {{0.0, 8.0}};
  const double ratio = Rms(RenderScene(near).audio.samples) / Rms(RenderScene(far).audio.samples);
  CHECK(ratio == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(DistanceAt({{0, 10}, {10, 20}}, 5.0) == 15.0);
  CHECK(DistanceAt({{0, 10}, {10, 20}}, 50.0) == 20.0);
}

TEST_CASE("mixing hits the requested SNR") {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> snr(-20, 30);
  const auto sig = RenderScene(Basic()).audio;
  for (int t = 0; t < 10; ++t) {
    const double target = snr(rng);
    const auto noise = WhiteNoise(5000, t, 0.3);  // shorter: tiled
    MixInfo info;
    const auto mix = MixAtSnr(sig, noise, target, &info);
    std::vector<double> diff(sig.size());
    for (std::size_t i = 0; i < sig.size(); ++i) diff[i] = mix.samples[i] - sig.samples[i];
    if (info.clip_fraction == 0)
      CHECK(20 * std::log10(Rms(sig.samples) / Rms(diff)) == doctest::Approx(target).epsilon(1e-9));
  }
  AudioSegment silent;
  silent.samples.assign(100, 0.0);
  CHECK_THROWS_AS(MixAtSnr(sig, silent, 0.0), Error);
}

TEST_CASE("heavy mixes clip and warn") {
  AudioSegment sig = RenderScene(Basic()).audio;
  for (double& v : sig.samples) v *= 15.0;
  MixInfo info;
  MixAtSnr(sig, WhiteNoise(1000, 1), -10.0, &info);
  CHECK(info.clip_fraction > 0.01);
  CHECK(info.warning.has_value());
}

TEST_CASE("urban noise is low-pass; white noise is flat") {
  const auto lp = LowpassNoise(64000, 1000.0, 3);
  const auto wn = WhiteNoise(64000, 3);
  CHECK(Rms(lp.samples) == doctest::Approx(1.0));
  CHECK(Rms(wn.samples) == doctest::Approx(1.0));
  const Matrix ml = MelSpectrogram(lp), mw = MelSpectrogram(wn);
  const auto centers = DefaultExtractor().band_centers_hz();
  int b500 = 0, b4k = 0;
  for (int m = 0; m < kNumMelBands; ++m) {
    if (std::abs(centers[m] - 500) < std::abs(centers[b500] - 500)) b500 = m;
    if (std::abs(centers[m] - 4000) < std::abs(centers[b4k] - 4000)) b4k = m;
  }
  // 4th-order roll-off: > 40 dB (ln 1e4 ~ 9.2) down two octaves above the corner.
  CHECK(ml.col(b500).mean() - ml.col(b4k).mean() > 9.2);
  CHECK(std::abs(mw.col(b500).mean() - mw.col(b4k).mean()) < 1.0);
}

TEST_CASE("noise-only scenes have zero labels and the requested level") {
  SceneSpec s;
  s.noise.kind = NoiseKind::kUrban;
  s.noise.rms = 0.05;
  const auto r = RenderScene(s);
  CHECK(Rms(r.audio.samples) == doctest::Approx(0.05));
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    CHECK(r.labels.activity[i] == 0);
    CHECK(r.labels.bpf[i] == std::array<double, 2>{0, 0});
  }
}

TEST_CASE("scene validation") {
  SceneSpec s = Basic();
  s.duration_s = 1.0;
  CHECK_THROWS_WITH_AS(RenderScene(s), "duration >= 3 s required", Error);
  s = Basic();
  s.rotors.resize(5);
  CHECK_THROWS_AS(s.Validate(), Error);
  s = Basic();
  s.delivery.push_back({10.0, 30.0, 0.1});
  CHECK_THROWS_AS(s.Validate(), Error);
}

TEST_CASE("scene spec json round-trips and rejects unknown keys") {
  SceneSpec s = Basic(42);
  s.rotors[0].jitter_sigma = 4.5;
  s.rotors[1].step_events.push_back({2.0, 15.0, 0.2});
  s.delivery.push_back({3.5, 25.0, 0.1});
  s.distance_traj = {{0, 10}, {4, 30}};
  s.noise.kind = NoiseKind::kWhite;
  s.noise.snr_db = 5;
  const SceneSpec r = ParseSceneSpec(SceneSpecToJson(s));
  CHECK(SceneSpecToJson(r) == SceneSpecToJson(s));
  CHECK(RenderScene(r).audio.samples == RenderScene(s).audio.samples);
  CHECK_THROWS_WITH_AS(ParseSceneSpec(R"({"duration_s": 4, "colour": "red"})"),
                       doctest::Contains("unknown key 'colour'"), Error);
  CHECK_THROWS_AS(ParseSceneSpec("{not json"), Error);
}

TEST_CASE("augmentation keeps length, is deterministic and can be disabled") {
  const auto a = RenderScene(Basic()).audio;
  CHECK(Augment(a, AugmentPolicy::Disabled(), 3).samples == a.samples);
  const auto x = Augment(a, AugmentPolicy{}, 3), y = Augment(a, AugmentPolicy{}, 3);
  CHECK(x.samples == y.samples);
  CHECK(x.size() == a.size());
  for (double v : x.samples) CHECK(std::abs(v) <= 1.0);

  AugmentPolicy gain_only = AugmentPolicy::Disabled();
  gain_only.gain = {1.0, 6.0, 6.0};
  const auto g = Augment(a, gain_only, 1);
  CHECK(g.samples[1000] == doctest::Approx(a.samples[1000] * std::pow(10.0, 0.3)));

  AugmentPolicy mask_only = AugmentPolicy::Disabled();
  mask_only.time_mask = {1.0, 0.25, 0.25};
  const auto m = Augment(a, mask_only, 1);
  int zeros = 0;
  for (std::size_t i = 0; i < kSampleRate; ++i) zeros += m.samples[i] == 0.0;
  CHECK(zeros >= 4000);

  AugmentPolicy freq_only = AugmentPolicy::Disabled();
  freq_only.freq_mask = {1.0, 100.0, 1100.0};
  freq_only.freq_mask_min_width_hz = freq_only.freq_mask_max_width_hz = 1000.0;
  const auto f = Augment(a, freq_only, 1);
  // The whole [100, 1100] band goes: both fundamentals vanish.
  CHECK(Goertzel(f.samples, 200.0, 16000) < 1e-6);
  CHECK(Goertzel(f.samples, 5000.0 + 200.0, 16000) ==
        doctest::Approx(Goertzel(a.samples, 5200.0, 16000)).epsilon(1e-6));
}

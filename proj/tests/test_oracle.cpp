// tests/test_oracle.cpp

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

#include "bpfdet/error.hpp"
#include "bpfdet/oracle.hpp"
#include "bpfdet/synth.hpp"
#include "test_util.hpp"

using namespace bpfdet;

namespace {

SceneSpec TwoRotors(double a, double b, std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  s.duration_s = 3.0;
  s.rotors.resize(2);
  s.rotors[0].base_bpf = a;
  s.rotors[1].base_bpf = b;
  return s;
}

double MeanAbsError(const BpfTrack& t, const BpfLabelTrack& l) {
  double e = 0;
  for (std::size_t i = 0; i < t.size(); ++i)
    e += std::abs(t.bpf[i][0] - l.bpf[i][0]) + std::abs(t.bpf[i][1] - l.bpf[i][1]);
  return e / (2.0 * t.size());
}

}  // namespace

TEST_CASE("single harmonic source is found and flagged") {
  SceneSpec s;
  s.seed = 1;
  s.duration_s = 3.0;
  s.rotors.resize(1);
  s.rotors[0].base_bpf = 233.3;
  const BpfTrack t = EstimateOracle(RenderScene(s).audio);
  int single = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(t.bpf[i][0] == doctest::Approx(233.3).epsilon(0.004));
    CHECK(t.activity[i] >= 0.5);
    single += t.single_source[i];
  }
  CHECK(single >= static_cast<int>(0.9 * t.size()));
}

TEST_CASE("two rotors are both recovered, sorted ascending") {
  for (auto [a, b] : {std::pair{150.0, 310.0}, std::pair{260.0, 237.0}, std::pair{470.0, 125.0}}) {
    const RenderedScene r = RenderScene(TwoRotors(a, b, 3));
    const BpfTrack t = EstimateOracle(r.audio);
    CHECK(MeanAbsError(t, r.labels) < 1.0);
    for (const auto& p : t.bpf) CHECK(p[0] <= p[1]);
  }
}

TEST_CASE("silence and broadband noise are inactive") {
  AudioSegment silence;
  silence.samples.assign(48000, 0.0);
  for (double a : EstimateOracle(silence).activity) CHECK(a < 0.5);
  const BpfTrack n = EstimateOracle(WhiteNoise(48000, 5, 0.1));
  int active = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    active += n.activity[i] >= 0.5;
    if (n.activity[i] < 0.5) CHECK(n.bpf[i] == std::array<double, 2>{0, 0});
  }
  CHECK(active <= static_cast<int>(0.05 * n.size()));
}

TEST_CASE("blade-rate modulation of the high mode alone recovers the BPF") {
  // Low band buried under strong low-pass noise; only the ~5 kHz mode is clean.
  const RenderedScene r = RenderScene(TwoRotors(180.0, 290.0, 9));
  const AudioSegment noisy = MixAtSnr(r.audio, LowpassNoise(r.audio.size(), 1000.0, 4), -10.0);
  OracleConfig with_env, without_env;
  without_env.use_envelope = false;
  const double e_env = MeanAbsError(EstimateOracle(noisy, with_env), r.labels);
  const double e_lin = MeanAbsError(EstimateOracle(noisy, without_env), r.labels);
  CHECK(e_env < 10.0);
  CHECK(e_env < e_lin);
}

TEST_CASE("oracle configuration is validated") {
  OracleConfig c;
  c.f_min = 600;
  CHECK_THROWS_AS(c.Validate(), Error);
  c = {};
  c.fft_size = 3000;
  CHECK_THROWS_AS(c.Validate(), Error);
  c = {};
  c.num_harmonics = 1;
  CHECK_THROWS_AS(EstimateOracle(testutil::Noise(48000, 1), c), Error);
}

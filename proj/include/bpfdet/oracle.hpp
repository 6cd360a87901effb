// include/bpfdet/oracle.hpp

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

#include "bpfdet/audio.hpp"
#include "bpfdet/track.hpp"

namespace bpfdet {

// Training-free harmonic-comb BPF estimator.
//
// Each candidate fundamental f on [f_min, f_max] is scored by the harmonic
// sum sum_h |X(h f)| / h over a zero-padded magnitude spectrum. When
// use_envelope is set, the same comb is also evaluated on the spectrum of
// the squared envelope of the high band [envelope_band_lo, envelope_band_hi]
// (blade-rate modulation of the ~5 kHz rotor mode); each path is divided by
// its median over the grid before summing, so a path drowned in noise
// contributes a flat curve.
//
// The strongest peaks of each comb, with their octave and twelfth
// relatives, are candidates. A candidate is admissible on a spectrum when
// most of its teeth stand clear of the local median. The linear spectrum is
// used whenever it admits anything; otherwise the envelope spectrum, where
// two rotors sharing one carrier also leave difference and sum lines that
// the pair is credited with. Among admissible candidates, the single
// fundamental or pair explaining the most whitened energy wins, and each
// estimate is refined on harmonics clear of the other's partials.
// Activity is the explained fraction, 0.5 at activity_ratio_threshold.
struct OracleConfig {
  double f_min = 100.0;
  double f_max = 500.0;
  double grid_step = 0.5;
  int num_harmonics = 8;
  double min_separation = 12.0;
  double activity_ratio_threshold = 0.3;
  // A pair must explain this much more whitened energy than the best
  // single fundamental.
  double pair_min_gain = 0.05;
  // Otherwise a second comb peak this strong (excess over the median, as a
  // fraction of the top peak's) still makes a pair.
  double second_peak_ratio = 0.5;
  int fft_size = 8192;
  bool use_envelope = true;
  double envelope_band_lo = 4000.0;
  double envelope_band_hi = 6500.0;

  void Validate() const;
};

BpfTrack EstimateOracle(const AudioSegment& segment, const OracleConfig& cfg = {});

}  // namespace bpfdet

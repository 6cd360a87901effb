// include/bpfdet/synth.hpp

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
#include <optional>
#include <string>
#include <vector>

#include "bpfdet/audio.hpp"
#include "bpfdet/calibration.hpp"

namespace bpfdet {

struct StepEvent {
  double time_s = 0.0;
  double delta_hz = 0.0;
  double settle_tau_s = 0.1;
};

// One rotor's blade passing frequency trajectory and timbre.
struct RotorTraj {
  double base_bpf = 220.0;
  double jitter_sigma = 0.0;  // stationary std of the mean-reverting wander, Hz
  double jitter_tau_s = 2.0;  // wander correlation time
  int harmonics = 8;          // amplitudes roll off as 1/h
  double mode2_freq = 5000.0;
  double mode2_gain = 0.3;    // relative to the fundamental
  std::vector<StepEvent> step_events;
};

struct DistancePoint {
  double time_s = 0.0;
  double meters = 1.0;
};

enum class NoiseKind { kNone, kUrban, kWhite, kFile };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kNone;
  double snr_db = 20.0;
  // Absolute noise RMS for scenes without rotors.
  double rms = 0.02;
  // Corner of the 4th-order low-pass shaping urban noise.
  double cutoff_hz = 1000.0;
  std::filesystem::path file;
};

struct DeliverySpec {
  double time_s = 0.0;
  double bpf_drop_hz = 30.0;
  double settle_tau_s = 0.1;
};

struct SceneSpec {
  std::vector<RotorTraj> rotors;
  double duration_s = 10.0;
  std::vector<DistancePoint> distance_traj;  // empty: constant 1 m
  NoiseSpec noise;
  std::vector<DeliverySpec> delivery;
  std::uint64_t seed = 0;
  double level = 0.05;  // fundamental amplitude at 1 m
  bool doppler = false;

  void Validate() const;
};

struct RenderedScene {
  AudioSegment audio;
  BpfLabelTrack labels;
  std::vector<double> delivery_times_s;
};

RenderedScene RenderScene(const SceneSpec& spec);

double DistanceAt(const std::vector<DistancePoint>& traj, double t);

struct MixInfo {
  double noise_scale = 1.0;
  double clip_fraction = 0.0;
  std::optional<std::string> warning;
};

// Scales noise (tiled to length) so 20 log10(rms_signal / rms_noise) = snr_db.
AudioSegment MixAtSnr(const AudioSegment& signal, const AudioSegment& noise, double snr_db,
                      MixInfo* info = nullptr);

AudioSegment WhiteNoise(std::size_t samples, std::uint64_t seed, double rms = 1.0);
// White noise through a 4th-order Butterworth low-pass.
AudioSegment LowpassNoise(std::size_t samples, double cutoff_hz, std::uint64_t seed,
                          double rms = 1.0);

struct AugmentRange {
  double probability = 0.0;
  double min = 0.0;
  double max = 0.0;
};

// Label-preserving augmentations, re-drawn for every second of audio.
struct AugmentPolicy {
  AugmentRange background_noise{0.5, 20.0, 30.0};  // SNR dB
  AugmentRange gain{0.5, -5.0, 5.0};               // dB
  AugmentRange time_mask{0.5, 0.2, 0.5};           // seconds
  AugmentRange freq_mask{0.5, 0.0, 7000.0};        // band edge range, Hz
  double freq_mask_min_width_hz = 100.0;
  double freq_mask_max_width_hz = 1000.0;

  static AugmentPolicy Disabled();
};

AudioSegment Augment(const AudioSegment& segment, const AugmentPolicy& policy,
                     std::uint64_t seed, const AudioSegment* noise_source = nullptr);

SceneSpec ReadSceneSpec(const std::filesystem::path& path);
SceneSpec ParseSceneSpec(const std::string& json_text);
std::string SceneSpecToJson(const SceneSpec& spec);

}  // namespace bpfdet

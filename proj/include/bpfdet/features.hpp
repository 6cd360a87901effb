// include/bpfdet/features.hpp

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

#include <Eigen/Core>
#include <memory>
#include <span>
#include <vector>

#include "bpfdet/audio.hpp"

namespace bpfdet {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kNumMelBands = 128;
inline constexpr int kNumQuefrencyBins = 128;
inline constexpr double kMelMaxHz = 7000.0;
inline constexpr double kLogFloor = 1e-10;

double HzToMel(double hz);
double MelToHz(double mel);

// Per-channel standardization statistics (channel 0 = mel, 1 = cepstrum).
struct NormStats {
  double mean[2] = {0.0, 0.0};
  double stddev[2] = {1.0, 1.0};

  static NormStats Identity() { return {}; }
  bool is_identity() const {
    return mean[0] == 0.0 && mean[1] == 0.0 && stddev[0] == 1.0 && stddev[1] == 1.0;
  }
};

// frames x 2 x 128: mel in channel 0, truncated power cepstrum in channel 1.
struct FeatureBlock {
  Matrix mel;
  Matrix cepstrum;

  std::size_t frames() const { return static_cast<std::size_t>(mel.rows()); }
  // Rows [begin, begin + count) of both channels.
  FeatureBlock Frames(std::size_t begin, std::size_t count) const;
};

// Centered STFT front end (Hann window 2048, hop 512, reflection padding).
// Const methods are safe to call concurrently.
class FeatureExtractor {
 public:
  FeatureExtractor();
  ~FeatureExtractor();

  Matrix MelSpectrogram(const AudioSegment& segment) const;
  Matrix PowerCepstrum(const AudioSegment& segment) const;
  // Unstandardized mel + cepstrum, sharing one STFT pass.
  FeatureBlock Raw(const AudioSegment& segment) const;

  // 128 x 1025 triangular filterbank, rows are bands.
  const Matrix& filterbank() const { return filterbank_; }
  std::span<const double> band_centers_hz() const { return band_centers_; }

 private:
  struct Fft;
  std::unique_ptr<Fft> fft_;
  std::vector<double> window_;
  Matrix filterbank_;
  std::vector<double> band_centers_;
};

// Shared default extractor.
const FeatureExtractor& DefaultExtractor();

// Windowed frame i of a segment: samples centered on i * 512, reflected at edges.
std::vector<double> AnalysisFrame(std::span<const double> samples, std::size_t frame,
                                  std::span<const double> window);
std::vector<double> HannWindow(std::size_t n);

Matrix MelSpectrogram(const AudioSegment& segment);
Matrix PowerCepstrum(const AudioSegment& segment);

FeatureBlock Standardize(const FeatureBlock& raw, const NormStats& stats);
FeatureBlock MakeFeatureBlock(const AudioSegment& segment, const NormStats& stats);

// Moments over every value of every block, per channel.
NormStats ComputeNormStats(std::span<const FeatureBlock> raw_blocks);

}  // namespace bpfdet

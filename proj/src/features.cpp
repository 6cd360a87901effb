// src/features.cpp

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

#include "bpfdet/features.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "bpfdet/error.hpp"
#include "fft.hpp"

namespace bpfdet {

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

FeatureBlock FeatureBlock::Frames(std::size_t begin, std::size_t count) const {
  if (begin + count > frames()) throw InvalidArgument("frame range out of bounds");
  FeatureBlock out;
  out.mel = mel.middleRows(begin, count);
  out.cepstrum = cepstrum.middleRows(begin, count);
  return out;
}

std::vector<double> HannWindow(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

std::vector<double> AnalysisFrame(std::span<const double> samples, std::size_t frame,
                                  std::span<const double> window) {
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  const auto len = static_cast<std::ptrdiff_t>(window.size());
  const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(frame) * kHopSize - len / 2;
  std::vector<double> out(window.size());
  for (std::ptrdiff_t k = 0; k < len; ++k) {
    std::ptrdiff_t idx = start + k;
    if (idx < 0) idx = -idx;
    if (idx >= n) idx = 2 * (n - 1) - idx;
    out[k] = samples[idx] * window[k];
  }
  return out;
}

struct FeatureExtractor::Fft {
  detail::RealFft fft{kWindowSize};
};

FeatureExtractor::FeatureExtractor()
    : fft_(std::make_unique<Fft>()), window_(HannWindow(kWindowSize)) {
  const int bins = kWindowSize / 2 + 1;
  filterbank_ = Matrix::Zero(kNumMelBands, bins);
  band_centers_.resize(kNumMelBands);
  const double mel_lo = HzToMel(0.0), mel_hi = HzToMel(kMelMaxHz);
  std::vector<double> edges(kNumMelBands + 2);
  for (int i = 0; i < kNumMelBands + 2; ++i)
    edges[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * i / (kNumMelBands + 1));
  for (int m = 0; m < kNumMelBands; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    band_centers_[m] = center;
    const double norm = 2.0 / (hi - lo);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * kSampleRate / kWindowSize;
      double w = 0.0;
      if (f > lo && f <= center)
        w = (f - lo) / (center - lo);
      else if (f > center && f < hi)
        w = (hi - f) / (hi - center);
      filterbank_(m, k) = w * norm;
    }
  }
}

FeatureExtractor::~FeatureExtractor() = default;

FeatureBlock FeatureExtractor::Raw(const AudioSegment& segment) const {
  ValidateSegment(segment);
  const std::size_t frames = segment.num_frames();
  const int bins = kWindowSize / 2 + 1;
  FeatureBlock out;
  out.mel.resize(frames, kNumMelBands);
  out.cepstrum.resize(frames, kNumQuefrencyBins);
  std::vector<std::complex<double>> spec(bins);
  std::vector<double> cep(kWindowSize);
  Eigen::VectorXd power(bins);
  for (std::size_t i = 0; i < frames; ++i) {
    const auto frame = AnalysisFrame(segment.samples, i, window_);
    fft_->fft.Forward(frame, spec);
    for (int k = 0; k < bins; ++k) power[k] = std::norm(spec[k]);

    Eigen::VectorXd mel = filterbank_ * power;
    for (int m = 0; m < kNumMelBands; ++m) out.mel(i, m) = std::log(mel[m] + kLogFloor);

    for (int k = 0; k < bins; ++k) spec[k] = std::log(power[k] + kLogFloor);
    fft_->fft.Inverse(spec, cep);
    for (int q = 0; q < kNumQuefrencyBins; ++q) {
      const double c = cep[q] / kWindowSize;
      out.cepstrum(i, q) = c * c;
    }
  }
  return out;
}

Matrix FeatureExtractor::MelSpectrogram(const AudioSegment& segment) const {
  return Raw(segment).mel;
}

Matrix FeatureExtractor::PowerCepstrum(const AudioSegment& segment) const {
  return Raw(segment).cepstrum;
}

const FeatureExtractor& DefaultExtractor() {
  static const FeatureExtractor extractor;
  return extractor;
}

Matrix MelSpectrogram(const AudioSegment& segment) {
  return DefaultExtractor().MelSpectrogram(segment);
}

Matrix PowerCepstrum(const AudioSegment& segment) {
  return DefaultExtractor().PowerCepstrum(segment);
}

FeatureBlock Standardize(const FeatureBlock& raw, const NormStats& stats) {
  if (raw.mel.rows() != raw.cepstrum.rows() || raw.mel.cols() != raw.cepstrum.cols())
    throw NumericError("mel/cepstrum frame counts differ");
  if (stats.is_identity()) return raw;
  FeatureBlock out;
  out.mel = (raw.mel.array() - stats.mean[0]) / stats.stddev[0];
  out.cepstrum = (raw.cepstrum.array() - stats.mean[1]) / stats.stddev[1];
  return out;
}

FeatureBlock MakeFeatureBlock(const AudioSegment& segment, const NormStats& stats) {
  return Standardize(DefaultExtractor().Raw(segment), stats);
}

NormStats ComputeNormStats(std::span<const FeatureBlock> raw_blocks) {
  NormStats stats;
  double sum[2] = {0, 0}, sq[2] = {0, 0};
  double count = 0;
  for (const auto& b : raw_blocks) {
    sum[0] += b.mel.sum();
    sq[0] += b.mel.squaredNorm();
    sum[1] += b.cepstrum.sum();
    sq[1] += b.cepstrum.squaredNorm();
    count += static_cast<double>(b.mel.size());
  }
  if (count == 0) throw InvalidArgument("cannot compute normalization from an empty corpus");
  for (int c = 0; c < 2; ++c) {
    stats.mean[c] = sum[c] / count;
    const double var = std::max(sq[c] / count - stats.mean[c] * stats.mean[c], 0.0);
    stats.stddev[c] = var > 0 ? std::sqrt(var) : 1.0;
  }
  return stats;
}

}  // namespace bpfdet

// src/oracle.cpp

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

#include "bpfdet/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "bpfdet/error.hpp"
#include "bpfdet/features.hpp"
#include "fft.hpp"

namespace bpfdet {

void OracleConfig::Validate() const {
  if (!(f_min > 0 && f_min < f_max)) throw InvalidArgument("oracle: need 0 < f_min < f_max");
  if (!(grid_step > 0 && grid_step <= 1.0)) throw InvalidArgument("oracle: grid_step must be in (0, 1] Hz");
  if (num_harmonics < 3) throw InvalidArgument("oracle: num_harmonics must be >= 3");
  if (fft_size < kWindowSize || (fft_size & (fft_size - 1)) != 0)
    throw InvalidArgument("oracle: fft_size must be a power of two >= 2048");
  if (!(min_separation >= 0)) throw InvalidArgument("oracle: min_separation must be >= 0");
  if (!(second_peak_ratio > 0 && second_peak_ratio <= 1))
    throw InvalidArgument("oracle: second_peak_ratio must be in (0, 1]");
  if (use_envelope && !(envelope_band_lo > 0 && envelope_band_lo < envelope_band_hi &&
                        envelope_band_hi <= kSampleRate / 2.0))
    throw InvalidArgument("oracle: invalid envelope band");
}

namespace {

double Median(std::vector<double> v) {
  auto mid = v.begin() + v.size() / 2;
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

class CombScorer {
 public:
  CombScorer(const OracleConfig& cfg)
      : cfg_(cfg), padded_(cfg.fft_size), frame_(kWindowSize), complex_(kWindowSize) {
    for (double f = cfg.f_min; f <= cfg.f_max + 1e-9; f += cfg.grid_step) grid_.push_back(f);
    const double bin_hz = static_cast<double>(kSampleRate) / kWindowSize;
    band_lo_ = static_cast<int>(std::ceil(cfg.f_min / bin_hz));
    band_hi_ = std::min(kWindowSize / 2, static_cast<int>(cfg.num_harmonics * cfg.f_max / bin_hz));
  }

  std::span<const double> grid() const { return grid_; }

  // Zero-padded magnitude spectrum of a (windowed) 2048-sample frame.
  std::vector<double> Magnitude(std::span<const double> windowed) const {
    std::vector<double> buf(cfg_.fft_size, 0.0);
    std::copy(windowed.begin(), windowed.end(), buf.begin());
    std::vector<std::complex<double>> spec(padded_.num_bins());
    padded_.Forward(buf, spec);
    std::vector<double> mag(spec.size());
    for (std::size_t k = 0; k < spec.size(); ++k) mag[k] = std::abs(spec[k]);
    return mag;
  }

  // Mean-removed, tapered squared envelope of the band-limited analytic signal.
  std::vector<double> Envelope(std::span<const double> raw, std::span<const double> window) const {
    std::vector<std::complex<double>> spec(frame_.num_bins());
    frame_.Forward(raw, spec);
    std::vector<std::complex<double>> analytic(kWindowSize, 0.0);
    const double bin_hz = static_cast<double>(kSampleRate) / kWindowSize;
    for (std::size_t k = 1; k + 1 < spec.size(); ++k) {
      const double f = k * bin_hz;
      if (f >= cfg_.envelope_band_lo && f <= cfg_.envelope_band_hi) analytic[k] = 2.0 * spec[k];
    }
    std::vector<std::complex<double>> z(kWindowSize);
    complex_.Inverse(analytic, z);
    std::vector<double> env(kWindowSize);
    double mean = 0.0;
    for (int n = 0; n < kWindowSize; ++n) {
      env[n] = std::norm(z[n] / static_cast<double>(kWindowSize));
      mean += env[n];
    }
    mean /= kWindowSize;
    for (int n = 0; n < kWindowSize; ++n) env[n] = (env[n] - mean) * window[n];
    return env;
  }

  std::vector<double> Comb(std::span<const double> mag) const {
    const double bins_per_hz = static_cast<double>(cfg_.fft_size) / kSampleRate;
    std::vector<double> score(grid_.size());
    for (std::size_t g = 0; g < grid_.size(); ++g) {
      double s = 0.0;
      for (int h = 1; h <= cfg_.num_harmonics; ++h) {
        const double pos = h * grid_[g] * bins_per_hz;
        const auto k = static_cast<std::size_t>(pos);
        if (k + 1 >= mag.size()) break;
        const double frac = pos - k;
        s += ((1 - frac) * mag[k] + frac * mag[k + 1]) / h;
      }
      score[g] = s;
    }
    return score;
  }

  // Band [f_min, H * f_max] of the 2048-point amplitude spectrum with its
  // running median, so coloured noise (low-pass, or the sloped envelope
  // spectrum of band noise) does not pile up on low harmonics.
  struct Band {
    std::vector<double> amp, level;
    double floor = 0.0;
  };

  Band Analyze(std::span<const double> mag) const {
    const int stride = cfg_.fft_size / kWindowSize;
    const int nbins = kWindowSize / 2 + 1;
    Band band;
    band.amp.resize(nbins);
    band.level.assign(nbins, 0.0);
    for (int k = 0; k < nbins; ++k) band.amp[k] = mag[static_cast<std::size_t>(k) * stride];
    constexpr int kHalfSpan = 32;
    std::vector<double> local;
    double peak = 0.0;
    for (int k = band_lo_; k <= band_hi_; ++k) {
      const int a = std::max(0, k - kHalfSpan), b = std::min(nbins - 1, k + kHalfSpan);
      local.assign(band.amp.begin() + a, band.amp.begin() + b + 1);
      band.level[k] = Median(local);
      peak = std::max(peak, band.amp[k]);
    }
    band.floor = 1e-3 * peak;
    return band;
  }

  // Comb over the whitened amplitude ratio, capped so no single partial
  // rules; flat wherever the path is drowned, whatever the noise colour.
  std::vector<double> WhiteComb(const Band& band) const {
    const double bins_per_hz = static_cast<double>(kWindowSize) / kSampleRate;
    auto ratio = [&](int k) {
      if (k < band_lo_ || k > band_hi_ || band.level[k] <= 0) return 0.0;
      return std::min(band.amp[k] / band.level[k], kRatioCap);
    };
    std::vector<double> score(grid_.size());
    for (std::size_t g = 0; g < grid_.size(); ++g) {
      double s = 0.0;
      for (int h = 1; h <= cfg_.num_harmonics; ++h) {
        const double pos = h * grid_[g] * bins_per_hz;
        const int k = static_cast<int>(pos);
        const double frac = pos - k;
        s += ((1 - frac) * ratio(k) + frac * ratio(k + 1)) / h;
      }
      score[g] = s;
    }
    return score;
  }

  // Fraction of the teeth h f (h = 1..H, inside the band) that land on a
  // partial standing well above the local median.
  double Support(const Band& band, double f) const {
    const double bin_hz = static_cast<double>(kSampleRate) / kWindowSize;
    int teeth = 0, visible = 0;
    for (int h = 1; h <= cfg_.num_harmonics; ++h) {
      const int c = static_cast<int>(std::lround(h * f / bin_hz));
      if (c > band_hi_) break;
      ++teeth;
      for (int k = std::max(c - 1, band_lo_); k <= std::min(c + 1, band_hi_); ++k)
        if (band.level[k] > 0 && band.amp[k] >= kVisibleRatio * band.level[k]) {
          ++visible;
          break;
        }
    }
    return teeth ? static_cast<double>(visible) / teeth : 0.0;
  }

  // Fraction of band energy within one bin of a harmonic of any of the
  // fundamentals. With `floored`, the whitening level is clamped at -60 dB
  // re the strongest bin so a clean spectrum is not ruled by its sidelobes.
  // With `products`, a pair also claims its difference and sum lines, which
  // the envelope of two modulations on one carrier always carries.
  double Explained(const Band& band, std::span<const double> fundamentals, bool floored,
                   bool products = false) const {
    const double bin_hz = static_cast<double>(kSampleRate) / kWindowSize;
    auto weight = [&](int k) {
      const double level = floored ? std::max(band.level[k], band.floor) : band.level[k];
      const double w = level > 0 ? band.amp[k] / level : 0.0;
      return w * w;
    };
    double total = 0.0, on = 0.0;
    std::vector<char> hit(band.amp.size(), 0);
    auto claim = [&](double hz) {
      const int c = static_cast<int>(std::lround(hz / bin_hz));
      for (int k = std::max(c - 1, band_lo_); k <= std::min(c + 1, band_hi_); ++k) {
        if (!hit[k]) on += weight(k);
        hit[k] = 1;
      }
    };
    for (double f : fundamentals)
      for (int h = 1; h <= cfg_.num_harmonics; ++h) claim(h * f);
    if (products && fundamentals.size() == 2) {
      claim(std::abs(fundamentals[0] - fundamentals[1]));
      claim(fundamentals[0] + fundamentals[1]);
    }
    for (int k = band_lo_; k <= band_hi_; ++k) total += weight(k);
    return total > 0 ? on / total : 0.0;
  }

  // Comb score on [lo_hz, hi_hz] using only the harmonics that sit clear of
  // every partial of `other` (further than a Hann main lobe), so a
  // near-octave partner cannot pull the peak. Empty when fewer than two
  // clean harmonics are left.
  std::vector<double> CleanComb(std::span<const double> mag, double other, double lo_hz,
                                double hi_hz, std::vector<double>& grid) const {
    const double bins_per_hz = static_cast<double>(cfg_.fft_size) / kSampleRate;
    const double guard_hz = 2.0 * kSampleRate / kWindowSize;
    grid.clear();
    for (double f : grid_)
      if (f >= lo_hz && f <= hi_hz) grid.push_back(f);
    // The harmonic set is fixed from the window centre so every grid point
    // sums the same partials.
    const double centre = 0.5 * (lo_hz + hi_hz);
    std::vector<int> clean;
    for (int h = 1; h <= cfg_.num_harmonics; ++h) {
      const double fh = h * centre;
      const double nearest = std::max(1.0, std::round(fh / other)) * other;
      if (std::abs(fh - nearest) >= guard_hz) clean.push_back(h);
    }
    if (clean.size() < 2) return {};
    std::vector<double> score(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
      double s = 0.0;
      for (int h : clean) {
        const double pos = h * grid[g] * bins_per_hz;
        const auto k = static_cast<std::size_t>(pos);
        if (k + 1 >= mag.size()) break;
        const double frac = pos - k;
        s += ((1 - frac) * mag[k] + frac * mag[k + 1]) / h;
      }
      score[g] = s;
    }
    return score;
  }

 private:
  const OracleConfig& cfg_;
  detail::RealFft padded_;
  detail::RealFft frame_;
  detail::ComplexFft complex_;
  static constexpr double kVisibleRatio = 2.5;
  static constexpr double kRatioCap = 10.0;
  std::vector<double> grid_;
  int band_lo_ = 0, band_hi_ = 0;
};

// Parabolic refinement of a grid peak.
double Refine(std::span<const double> grid, std::span<const double> score, std::size_t i) {
  if (i == 0 || i + 1 >= score.size()) return grid[i];
  const double a = score[i - 1], b = score[i], c = score[i + 1];
  const double denom = a - 2 * b + c;
  if (denom >= 0) return grid[i];
  const double offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
  return grid[i] + offset * (grid[1] - grid[0]);
}

constexpr std::size_t kCombPeaks = 8;

// Local maxima of a curve, strongest first.
std::vector<std::size_t> LocalPeaks(std::span<const double> curve) {
  std::vector<std::size_t> peaks;
  for (std::size_t g = 0; g < curve.size(); ++g) {
    const bool left_ok = g == 0 || curve[g] >= curve[g - 1];
    const bool right_ok = g + 1 == curve.size() || curve[g] > curve[g + 1];
    if (left_ok && right_ok) peaks.push_back(g);
  }
  std::sort(peaks.begin(), peaks.end(),
            [&](std::size_t a, std::size_t b) { return curve[a] > curve[b]; });
  return peaks;
}
// A candidate must show a partial on this fraction of its teeth.
constexpr double kMinSupport = 0.75;

double ActivityScore(double ratio, double threshold) {
  if (ratio <= threshold) return 0.5 * ratio / threshold;
  return std::min(1.0, 0.5 + 0.5 * (ratio - threshold) / (1.0 - threshold));
}

}  // namespace

BpfTrack EstimateOracle(const AudioSegment& segment, const OracleConfig& cfg) {
  ValidateSegment(segment);
  cfg.Validate();
  CombScorer scorer(cfg);
  const auto window = HannWindow(kWindowSize);
  const auto grid = scorer.grid();
  const double span = std::max(cfg.min_separation / 2, 2 * cfg.grid_step);

  const std::size_t frames = segment.num_frames();
  BpfTrack track;
  track.Resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    // Edge frames are analysed from the nearest window lying inside the
    // signal; reflection would fold each partial onto itself with a phase
    // kink and smear the comb.
    const std::ptrdiff_t centred = static_cast<std::ptrdiff_t>(i) * kHopSize - kWindowSize / 2;
    const auto start = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
        centred, 0, static_cast<std::ptrdiff_t>(segment.size()) - kWindowSize));
    const std::vector<double> raw(segment.samples.begin() + start,
                                  segment.samples.begin() + start + kWindowSize);
    std::vector<double> windowed(kWindowSize);
    for (int n = 0; n < kWindowSize; ++n) windowed[n] = raw[n] * window[n];

    // Harmonic-sum curve: linear comb plus, optionally, the comb of the
    // high-band envelope, each divided by its median over the grid.
    const auto mag = scorer.Magnitude(windowed);
    auto lin_score = scorer.Comb(mag);
    const double lin_median = Median(lin_score);
    for (double& s : lin_score) s = lin_median > 0 ? s / lin_median : 0.0;
    auto score = lin_score;
    std::vector<double> env_mag, env_score;
    if (cfg.use_envelope) {
      env_mag = scorer.Magnitude(scorer.Envelope(raw, window));
      env_score = scorer.Comb(env_mag);
      const double env_median = Median(env_score);
      for (double& s : env_score) s = env_median > 0 ? s / env_median : 0.0;
      for (std::size_t g = 0; g < score.size(); ++g) score[g] += env_score[g];
    }

    const auto band_lin = scorer.Analyze(mag);
    const auto band_env = cfg.use_envelope ? scorer.Analyze(env_mag) : CombScorer::Band{};

    // Candidates: the strongest peaks of each comb curve and their
    // octave/twelfth relatives, which is where subharmonic confusions put
    // the truth.
    const auto peaks = LocalPeaks(score);
    if (peaks.empty()) continue;
    std::vector<double> candidates;
    auto add_relatives = [&](std::span<const std::size_t> top) {
      for (std::size_t p = 0; p < std::min(top.size(), kCombPeaks); ++p)
        for (double m : {1.0, 2.0, 3.0, 0.5, 1.0 / 3.0}) {
          const double f = grid[top[p]] * m;
          if (f < cfg.f_min || f > cfg.f_max) continue;
          if (std::none_of(candidates.begin(), candidates.end(),
                           [&](double c) { return std::abs(c - f) < 1.0; }))
            candidates.push_back(f);
        }
    };
    add_relatives(peaks);
    add_relatives(LocalPeaks(lin_score));
    if (cfg.use_envelope) add_relatives(LocalPeaks(env_score));

    // Choose on the linear spectrum when it shows clean harmonic structure;
    // the envelope carries intermodulation at |fa - fb| that makes a common
    // subharmonic look complete, so it only decides when the linear path is
    // buried.
    auto admissible = [&](const CombScorer::Band& band) {
      std::vector<double> out;
      for (double c : candidates)
        if (scorer.Support(band, c) >= kMinSupport) out.push_back(c);
      return out;
    };
    const CombScorer::Band* chosen = &band_lin;
    auto pool = admissible(band_lin);
    if (pool.empty() && cfg.use_envelope) {
      chosen = &band_env;
      pool = admissible(band_env);
      // A partner may show only through its difference or sum line with the
      // other rotor; offer those as candidates too.
      const std::size_t direct = pool.size();
      for (std::size_t a = 0; a < direct; ++a)
        for (std::size_t b = a + 1; b < direct; ++b)
          for (double f : {std::abs(pool[a] - pool[b]), pool[a] + pool[b]})
            if (f >= cfg.f_min && f <= cfg.f_max &&
                std::none_of(pool.begin(), pool.end(), [&](double c) { return std::abs(c - f) < 1.0; }))
              pool.push_back(f);
    }

    // Without clear structure on either path, fall back to the whitened
    // combs, summed.
    const bool no_structure = pool.empty();
    std::vector<double> white_score;
    if (no_structure) {
      white_score = scorer.WhiteComb(band_lin);
      if (cfg.use_envelope) {
        const auto env_white = scorer.WhiteComb(band_env);
        for (std::size_t g = 0; g < white_score.size(); ++g) white_score[g] += env_white[g];
      }
    }
    const auto& select_score = no_structure ? white_score : score;
    const auto select_peaks = no_structure ? LocalPeaks(white_score) : peaks;
    if (select_peaks.empty()) continue;

    double best_single = grid[select_peaks[0]], single_value = -1.0;
    std::array<double, 2> best_pair{best_single, best_single};
    double pair_value = -1.0;
    for (double c : pool) {
      const double v = scorer.Explained(*chosen, std::array<double, 1>{c}, true);
      if (v > single_value) {
        single_value = v;
        best_single = c;
      }
    }
    for (std::size_t a = 0; a < pool.size(); ++a)
      for (std::size_t b = a + 1; b < pool.size(); ++b) {
        if (std::abs(pool[a] - pool[b]) < cfg.min_separation) continue;
        const double v = scorer.Explained(*chosen, std::array<double, 2>{pool[a], pool[b]}, true,
                                         chosen == &band_env);
        if (v > pair_value) {
          pair_value = v;
          best_pair = {pool[a], pool[b]};
        }
      }

    // Refinement runs on the spectrum that made the choice; the other one
    // only adds intermodulation or noise.
    const bool on_envelope = chosen == &band_env;
    const auto& path_mag = on_envelope ? env_mag : mag;
    const auto& path_score = no_structure ? white_score : on_envelope ? env_score : lin_score;

    auto refine_near = [&](double f) {
      std::size_t best = grid.size();
      for (std::size_t g = 0; g < grid.size(); ++g)
        if (std::abs(grid[g] - f) <= span && (best == grid.size() || path_score[g] > path_score[best]))
          best = g;
      return best == grid.size() ? f : Refine(grid, path_score, best);
    };
    // With two sources, re-score each near its estimate using only its
    // harmonics that sit clear of the other's partials.
    auto refine_against = [&](double f, double other) {
      for (int pass = 0; pass < 4; ++pass) {
        std::vector<double> local_grid;
        auto local = scorer.CleanComb(path_mag, other, f - span, f + span, local_grid);
        if (local.size() < 3 || no_structure) return refine_near(f);
        const auto peak = static_cast<std::size_t>(
            std::max_element(local.begin(), local.end()) - local.begin());
        const double next = Refine(local_grid, local, peak);
        // A peak on the edge of the window means the estimate started off
        // by more than the span; follow it.
        if (peak != 0 && peak + 1 != local.size()) return next;
        f = next;
      }
      return f;
    };

    bool single = pool.size() < 2 || pair_value - single_value < cfg.pair_min_gain;
    if (single) {
      // A near-octave partner hides under the even harmonics and adds no
      // coverage; it still shows as a strong second comb peak.
      const double baseline = Median(select_score);
      const double best_excess = select_score[select_peaks[0]] - baseline;
      std::size_t second = grid.size();
      for (std::size_t g : select_peaks)
        if (std::abs(grid[g] - best_single) >= cfg.min_separation &&
            (second == grid.size() || select_score[g] > select_score[second]))
          second = g;
      if (second != grid.size() &&
          select_score[second] - baseline >= cfg.second_peak_ratio * best_excess) {
        single = false;
        best_pair = {best_single, grid[second]};
      }
    }
    double f1, f2;
    if (single) {
      f1 = f2 = refine_near(best_single);
    } else {
      f1 = best_pair[0];
      f2 = best_pair[1];
      for (int pass = 0; pass < 2; ++pass) {
        f1 = refine_against(f1, f2);
        f2 = refine_against(f2, f1);
      }
    }

    const std::array<double, 2> fundamentals{f1, f2};
    // Floored whitening keeps clean spectra steady; plain whitening keeps a
    // clean band visible next to strongly coloured noise.
    auto covered = [&](const CombScorer::Band& band, bool products) {
      return std::max(scorer.Explained(band, fundamentals, true, products),
                      scorer.Explained(band, fundamentals, false, products));
    };
    double ratio = covered(band_lin, false);
    if (cfg.use_envelope) ratio = std::max(ratio, covered(band_env, !single));

    track.activity[i] = ActivityScore(ratio, cfg.activity_ratio_threshold);
    track.single_source[i] = single ? 1 : 0;
    if (ratio >= cfg.activity_ratio_threshold)
      track.bpf[i] = {std::min(f1, f2), std::max(f1, f2)};
  }
  return track;
}

}  // namespace bpfdet

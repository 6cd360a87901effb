// src/calibration.cpp

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

#include "bpfdet/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "bpfdet/audio.hpp"
#include "bpfdet/error.hpp"
#include "csv.hpp"

namespace bpfdet {

CalibrationCurve CalibrationCurve::Fit(std::vector<Knot> measurements) {
  if (measurements.size() < 2) throw InvalidArgument("calibration needs at least two knots");
  for (std::size_t i = 0; i < measurements.size(); ++i) {
    if (!std::isfinite(measurements[i].pwm_us) || !std::isfinite(measurements[i].bpf_hz))
      throw InvalidArgument("non-finite calibration knot");
    if (i == 0) continue;
    if (measurements[i].pwm_us == measurements[i - 1].pwm_us)
      throw InvalidArgument("duplicate pwm knot " + detail::FormatDouble(measurements[i].pwm_us));
    if (measurements[i].pwm_us < measurements[i - 1].pwm_us)
      throw InvalidArgument("pwm knots must be strictly increasing");
    if (measurements[i].bpf_hz <= measurements[i - 1].bpf_hz)
      throw InvalidArgument("non-monotone calibration");
  }

  CalibrationCurve c;
  c.knots_ = std::move(measurements);
  const std::size_t n = c.knots_.size();
  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = c.knots_[i + 1].pwm_us - c.knots_[i].pwm_us;
    delta[i] = (c.knots_[i + 1].bpf_hz - c.knots_[i].bpf_hz) / h[i];
  }
  c.slopes_.assign(n, 0.0);
  if (n == 2) {
    c.slopes_[0] = c.slopes_[1] = delta[0];
    return c;
  }
  // Fritsch-Carlson: weighted harmonic mean in the interior, one-sided
  // three-point estimates at the ends, limited to keep monotonicity.
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double w1 = 2 * h[i] + h[i - 1], w2 = h[i] + 2 * h[i - 1];
    c.slopes_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
  }
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s <= 0) return 0.0;
    if (d0 * d1 <= 0 || (d1 > 0 && s > 3 * d0)) return std::min(s, 3 * d0);
    return s;
  };
  c.slopes_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
  c.slopes_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  return c;
}

double CalibrationCurve::ToBpf(double pwm_us) const {
  if (pwm_us <= knots_.front().pwm_us) return knots_.front().bpf_hz;
  if (pwm_us >= knots_.back().pwm_us) return knots_.back().bpf_hz;
  auto it = std::upper_bound(knots_.begin(), knots_.end(), pwm_us,
                             [](double p, const Knot& k) { return p < k.pwm_us; });
  const std::size_t i = static_cast<std::size_t>(it - knots_.begin()) - 1;
  const double h = knots_[i + 1].pwm_us - knots_[i].pwm_us;
  const double t = (pwm_us - knots_[i].pwm_us) / h;
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
  const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  return h00 * knots_[i].bpf_hz + h10 * h * slopes_[i] + h01 * knots_[i + 1].bpf_hz +
         h11 * h * slopes_[i + 1];
}

std::vector<CalibrationCurve::Knot> AverageMeasurements(
    std::span<const CalibrationCurve::Knot> raw) {
  std::map<double, std::pair<double, int>> acc;
  for (const auto& k : raw) {
    auto& [sum, count] = acc[k.pwm_us];
    sum += k.bpf_hz;
    ++count;
  }
  std::vector<CalibrationCurve::Knot> out;
  for (const auto& [pwm, sc] : acc) out.push_back({pwm, sc.first / sc.second});
  return out;
}

std::vector<CalibrationCurve::Knot> ReadCalibrationCsv(const std::filesystem::path& path) {
  std::vector<CalibrationCurve::Knot> knots;
  for (const auto& row : detail::ReadCsvRows(path)) {
    if (row.size() < 2) throw IoError(path.string() + ": expected pwm_us,bpf_hz rows");
    knots.push_back({detail::ParseDoubleOrThrow(row[0], path.string()),
                     detail::ParseDoubleOrThrow(row[1], path.string())});
  }
  return AverageMeasurements(knots);
}

void DriftProfile::Validate() const {
  if (!std::isfinite(start_offset_hz) || !std::isfinite(end_offset_hz) ||
      std::abs(start_offset_hz) > kMaxAbsOffsetHz || std::abs(end_offset_hz) > kMaxAbsOffsetHz)
    throw InvalidArgument("drift offsets must be finite and within +/-50 Hz");
}

void ValidateTelemetry(std::span<const TelemetryFrame> frames) {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (i > 0 && !(frames[i].timestamp > frames[i - 1].timestamp))
      throw InvalidArgument("telemetry timestamps must be strictly increasing (row " +
                            std::to_string(i) + ")");
    for (double p : frames[i].motor_pwm)
      if (!(p >= 1000.0 && p <= 2200.0))
        throw InvalidArgument("telemetry pwm out of [1000, 2200] us at row " + std::to_string(i));
  }
}

std::vector<TelemetryFrame> ReadTelemetryCsv(const std::filesystem::path& path) {
  std::vector<TelemetryFrame> out;
  const std::string ctx = path.string();
  for (const auto& row : detail::ReadCsvRows(path)) {
    if (row.size() < 10) throw IoError(ctx + ": telemetry rows need 10 columns");
    TelemetryFrame f;
    f.timestamp = detail::ParseDoubleOrThrow(row[0], ctx);
    for (int m = 0; m < 4; ++m) f.motor_pwm[m] = detail::ParseDoubleOrThrow(row[1 + m], ctx);
    double x, y, z;
    if (detail::ParseDouble(row[5], x) && detail::ParseDouble(row[6], y) &&
        detail::ParseDouble(row[7], z))
      f.position = std::array<double, 3>{x, y, z};
    f.servo = detail::ParseDoubleOrThrow(row[8], ctx) != 0 ? ServoState::kReleased
                                                           : ServoState::kHolding;
    f.status = detail::ParseDoubleOrThrow(row[9], ctx) != 0 ? FlightStatus::kActive
                                                            : FlightStatus::kGrounded;
    out.push_back(f);
  }
  ValidateTelemetry(out);
  return out;
}

void WriteTelemetryCsv(const std::filesystem::path& path, std::span<const TelemetryFrame> frames) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "timestamp_s,pwm1,pwm2,pwm3,pwm4,x,y,z,servo,status\n";
  for (const auto& f : frames) {
    os << detail::FormatDouble(f.timestamp);
    for (double p : f.motor_pwm) os << ',' << detail::FormatDouble(p);
    for (int k = 0; k < 3; ++k)
      os << ',' << (f.position ? detail::FormatDouble((*f.position)[k]) : "");
    os << ',' << static_cast<int>(f.servo) << ',' << static_cast<int>(f.status) << '\n';
  }
}

void BpfLabelTrack::Resize(std::size_t frames) {
  bpf.resize(frames, {0.0, 0.0});
  activity.resize(frames, 0);
  distance_m.resize(frames);
}

BpfLabelTrack BpfLabelTrack::Frames(std::size_t begin, std::size_t count) const {
  if (begin + count > size()) throw InvalidArgument("label frame range out of bounds");
  BpfLabelTrack out;
  out.bpf.assign(bpf.begin() + begin, bpf.begin() + begin + count);
  out.activity.assign(activity.begin() + begin, activity.begin() + begin + count);
  out.distance_m.assign(distance_m.begin() + begin, distance_m.begin() + begin + count);
  return out;
}

std::optional<double> BpfLabelTrack::MaxDistance() const {
  std::optional<double> best;
  for (const auto& d : distance_m)
    if (d && (!best || *d > *best)) best = d;
  return best;
}

void WriteLabelCsv(const std::filesystem::path& path, const BpfLabelTrack& track) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "frame,time_s,bpf1,bpf2,activity,distance_m\n";
  for (std::size_t i = 0; i < track.size(); ++i) {
    os << i << ',' << detail::FormatDouble(FrameTime(i)) << ','
       << detail::FormatDouble(track.bpf[i][0]) << ',' << detail::FormatDouble(track.bpf[i][1])
       << ',' << track.activity[i] << ','
       << (track.distance_m[i] ? detail::FormatDouble(*track.distance_m[i]) : "") << '\n';
  }
}

BpfLabelTrack ReadLabelCsv(const std::filesystem::path& path) {
  BpfLabelTrack track;
  const std::string ctx = path.string();
  for (const auto& row : detail::ReadCsvRows(path)) {
    if (row.size() < 5) throw IoError(ctx + ": label rows need at least 5 columns");
    track.bpf.push_back({detail::ParseDoubleOrThrow(row[2], ctx),
                         detail::ParseDoubleOrThrow(row[3], ctx)});
    track.activity.push_back(detail::ParseDoubleOrThrow(row[4], ctx) != 0 ? 1 : 0);
    double d;
    if (row.size() > 5 && detail::ParseDouble(row[5], d))
      track.distance_m.emplace_back(d);
    else
      track.distance_m.emplace_back();
  }
  return track;
}

BpfLabelTrack ApplyDrift(const BpfLabelTrack& track, const DriftProfile& profile,
                         double duration_s) {
  if (!(duration_s > 0)) throw InvalidArgument("drift duration must be positive");
  BpfLabelTrack out = track;
  if (profile.start_offset_hz == 0.0 && profile.end_offset_hz == 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double offset = profile.start_offset_hz +
                          (profile.end_offset_hz - profile.start_offset_hz) * FrameTime(i) /
                              duration_s;
    for (double& v : out.bpf[i])
      if (v != 0.0) v += offset;
  }
  return out;
}

std::vector<double> KalmanSmooth(std::span<const double> series, const KalmanParams& params) {
  if (!(params.process_var > 0) || !(params.measurement_var > 0))
    throw InvalidArgument("Kalman variances must be positive");
  const double q = params.process_var, r = params.measurement_var;
  std::vector<double> out(series.begin(), series.end());
  bool running = false;
  double x0 = 0, x1 = 0;                // position, velocity
  double p00 = 0, p01 = 0, p11 = 0;     // covariance
  for (std::size_t t = 0; t < series.size(); ++t) {
    const double z = series[t];
    if (!(std::isfinite(z) && z > 0)) {
      running = false;
      continue;
    }
    if (!running) {
      x0 = z;
      x1 = 0;
      p00 = r;
      p01 = 0;
      p11 = r;
      running = true;
      out[t] = z;
      continue;
    }
    // Predict with unit time step; white-acceleration process noise.
    x0 += x1;
    const double n00 = p00 + 2 * p01 + p11 + q / 4;
    const double n01 = p01 + p11 + q / 2;
    const double n11 = p11 + q;
    // Update.
    const double s = n00 + r;
    const double k0 = n00 / s, k1 = n01 / s;
    const double innov = z - x0;
    x0 += k0 * innov;
    x1 += k1 * innov;
    p00 = (1 - k0) * n00;
    p01 = (1 - k0) * n01;
    p11 = n11 - k1 * n01;
    out[t] = x0;
  }
  return out;
}

std::array<double, 2> TopTwoAscending(const std::array<double, 4>& values) {
  std::array<double, 4> v = values;
  std::partial_sort(v.begin(), v.begin() + 2, v.end(), std::greater<>());
  return {v[1], v[0]};
}

LabelBuildResult BuildLabels(std::span<const TelemetryFrame> telemetry,
                             const CalibrationCurve& curve, const DriftProfile& drift,
                             double sync_offset_s, std::size_t num_frames,
                             const LabelBuildOptions& options) {
  ValidateTelemetry(telemetry);
  drift.Validate();
  LabelBuildResult result;
  BpfLabelTrack& track = result.track;
  track.Resize(num_frames);
  if (num_frames == 0) return result;

  const double audio_end = FrameTime(num_frames - 1);
  auto to_audio = [&](const TelemetryFrame& f) { return f.timestamp - sync_offset_s; };

  if (telemetry.empty() || to_audio(telemetry.back()) < -options.activity_window_s ||
      to_audio(telemetry.front()) > audio_end + options.activity_window_s) {
    result.warnings.push_back("telemetry does not overlap the audio span; labels are all zero");
    return result;
  }
  for (std::size_t i = 1; i < telemetry.size(); ++i) {
    const auto& a = telemetry[i - 1];
    const auto& b = telemetry[i];
    if (a.status == FlightStatus::kActive && b.status == FlightStatus::kActive &&
        b.timestamp - a.timestamp > options.max_active_gap_s && to_audio(b) >= 0 &&
        to_audio(a) <= audio_end)
      result.warnings.push_back("telemetry gap of " +
                                detail::FormatDouble(b.timestamp - a.timestamp) +
                                " s inside active flight at audio time " +
                                detail::FormatDouble(to_audio(a)) +
                                " s; uncovered frames labeled inactive");
  }

  std::vector<double> times(telemetry.size());
  for (std::size_t i = 0; i < telemetry.size(); ++i) times[i] = to_audio(telemetry[i]);

  for (std::size_t f = 0; f < num_frames; ++f) {
    const double t = FrameTime(f);
    auto lo = std::lower_bound(times.begin(), times.end(), t - options.activity_window_s);
    bool active = false;
    for (auto it = lo; it != times.end() && *it <= t + options.activity_window_s; ++it)
      if (telemetry[it - times.begin()].status == FlightStatus::kActive) {
        active = true;
        break;
      }
    auto hi = std::lower_bound(times.begin(), times.end(), t);
    std::size_t nearest;
    if (hi == times.end())
      nearest = times.size() - 1;
    else if (hi == times.begin())
      nearest = 0;
    else
      nearest = (t - *(hi - 1) <= *hi - t) ? (hi - times.begin()) - 1 : hi - times.begin();
    const TelemetryFrame& sample = telemetry[nearest];
    if (sample.position) {
      const auto& p = *sample.position;
      track.distance_m[f] = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    }
    if (!active) continue;
    std::array<double, 4> motor_bpf;
    for (int m = 0; m < 4; ++m) motor_bpf[m] = curve.ToBpf(sample.motor_pwm[m]);
    track.bpf[f] = TopTwoAscending(motor_bpf);
    track.activity[f] = 1;
  }

  track = ApplyDrift(track, drift, num_frames / kFrameRate);
  for (int m = 0; m < 2; ++m) {
    std::vector<double> column(num_frames);
    for (std::size_t f = 0; f < num_frames; ++f) column[f] = track.bpf[f][m];
    const auto smoothed = KalmanSmooth(column, options.kalman);
    for (std::size_t f = 0; f < num_frames; ++f) track.bpf[f][m] = smoothed[f];
  }
  // Independent smoothing of the two columns can cross them; restore order.
  for (auto& pair : track.bpf)
    if (pair[0] > pair[1]) std::swap(pair[0], pair[1]);
  return result;
}

}  // namespace bpfdet

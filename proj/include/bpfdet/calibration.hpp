// include/bpfdet/calibration.hpp

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

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bpfdet {

// Monotone PWM (us) -> BPF (Hz) mapping, shape-preserving cubic between knots.
class CalibrationCurve {
 public:
  struct Knot {
    double pwm_us;
    double bpf_hz;
  };

  // Throws on fewer than two knots, duplicate/decreasing PWM, or
  // non-increasing BPF ("non-monotone calibration").
  static CalibrationCurve Fit(std::vector<Knot> measurements);

  // Clamped to the end values outside the knot domain.
  double ToBpf(double pwm_us) const;

  std::span<const Knot> knots() const { return knots_; }
  double min_pwm() const { return knots_.front().pwm_us; }
  double max_pwm() const { return knots_.back().pwm_us; }

 private:
  std::vector<Knot> knots_;
  std::vector<double> slopes_;  // Fritsch-Carlson tangents at knots
};

inline double PwmToBpf(const CalibrationCurve& curve, double pwm_us) {
  return curve.ToBpf(pwm_us);
}

// Reads "pwm_us,bpf_hz" rows (header optional). Repeated PWM values are
// averaged, which is how per-motor measurements are pooled.
std::vector<CalibrationCurve::Knot> ReadCalibrationCsv(const std::filesystem::path& path);
std::vector<CalibrationCurve::Knot> AverageMeasurements(
    std::span<const CalibrationCurve::Knot> raw);

struct DriftProfile {
  double start_offset_hz = 0.0;
  double end_offset_hz = 0.0;

  static constexpr double kMaxAbsOffsetHz = 50.0;
  void Validate() const;
};

enum class ServoState { kHolding = 0, kReleased = 1 };
enum class FlightStatus { kGrounded = 0, kActive = 1 };

struct TelemetryFrame {
  double timestamp = 0.0;
  std::array<double, 4> motor_pwm{};
  std::optional<std::array<double, 3>> position;
  ServoState servo = ServoState::kHolding;
  FlightStatus status = FlightStatus::kGrounded;
};

// Columns: timestamp_s,pwm1,pwm2,pwm3,pwm4,x,y,z,servo,status. Empty x/y/z
// cells mean no position. Throws on non-increasing timestamps.
std::vector<TelemetryFrame> ReadTelemetryCsv(const std::filesystem::path& path);
void WriteTelemetryCsv(const std::filesystem::path& path, std::span<const TelemetryFrame> frames);
void ValidateTelemetry(std::span<const TelemetryFrame> frames);

// Per-audio-frame labels on the 31.25 fps grid.
struct BpfLabelTrack {
  std::vector<std::array<double, 2>> bpf;
  std::vector<int> activity;
  std::vector<std::optional<double>> distance_m;

  std::size_t size() const { return bpf.size(); }
  void Resize(std::size_t frames);
  BpfLabelTrack Frames(std::size_t begin, std::size_t count) const;
  std::optional<double> MaxDistance() const;
};

// Label cache CSV: frame,time_s,bpf1,bpf2,activity,distance_m.
void WriteLabelCsv(const std::filesystem::path& path, const BpfLabelTrack& track);
BpfLabelTrack ReadLabelCsv(const std::filesystem::path& path);

// Adds a linear start->end offset (in time over duration_s) to nonzero BPF values.
BpfLabelTrack ApplyDrift(const BpfLabelTrack& track, const DriftProfile& profile,
                         double duration_s);

struct KalmanParams {
  double process_var = 1.0;       // Hz^2 / frame^2
  double measurement_var = 25.0;  // Hz^2
};

// Forward constant-velocity Kalman filter. Non-positive or non-finite
// samples are gaps: they pass through unchanged and restart the filter.
std::vector<double> KalmanSmooth(std::span<const double> series, const KalmanParams& params = {});

// The two largest values, ascending.
std::array<double, 2> TopTwoAscending(const std::array<double, 4>& values);

struct LabelBuildOptions {
  double activity_window_s = 0.1;
  double max_active_gap_s = 1.0;
  KalmanParams kalman;
};

struct LabelBuildResult {
  BpfLabelTrack track;
  std::vector<std::string> warnings;
};

// Telemetry time t maps to audio time t - sync_offset_s.
LabelBuildResult BuildLabels(std::span<const TelemetryFrame> telemetry,
                             const CalibrationCurve& curve, const DriftProfile& drift,
                             double sync_offset_s, std::size_t num_frames,
                             const LabelBuildOptions& options = {});

}  // namespace bpfdet

// tests/test_calibration.cpp

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

#include <fstream>
#include <random>

#include "bpfdet/calibration.hpp"
#include "bpfdet/error.hpp"
#include "test_util.hpp"

using namespace bpfdet;

namespace {

CalibrationCurve Curve() {
  return CalibrationCurve::Fit({{1100, 150}, {1300, 190}, {1500, 260}, {1700, 300}, {2000, 420}});
}

std::vector<TelemetryFrame> Hover(double t0, double t1, double dt, std::array<double, 4> pwm) {
  std::vector<TelemetryFrame> out;
  for (double t = t0; t <= t1 + 1e-9; t += dt) {
    TelemetryFrame f;
    f.timestamp = t;
    f.motor_pwm = pwm;
    f.status = FlightStatus::kActive;
    f.position = std::array<double, 3>{30.0, 40.0, 0.0};
    out.push_back(f);
  }
  return out;
}

}  // namespace

TEST_CASE("calibration matches reference PCHIP values") {
  // Reference values from an independent monotone cubic Hermite implementation.
  const CalibrationCurve c = Curve();
  CHECK(c.ToBpf(1150) == doctest::Approx(157.37926136363635).epsilon(1e-12));
  CHECK(c.ToBpf(1250) == doctest::Approx(177.7627840909091).epsilon(1e-12));
  CHECK(c.ToBpf(1333) == doctest::Approx(199.7877325).epsilon(1e-12));
  CHECK(c.ToBpf(1499) == doctest::Approx(259.7440275).epsilon(1e-12));
  CHECK(c.ToBpf(1620) == doctest::Approx(283.2942292490119).epsilon(1e-12));
  CHECK(c.ToBpf(1850) == doctest::Approx(350.2826086956522).epsilon(1e-12));
  CHECK(c.ToBpf(1999) == doctest::Approx(419.48033644444445).epsilon(1e-12));
}

TEST_CASE("calibration interpolates knots, clamps outside and never overshoots") {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_real_distribution<double> step(5.0, 150.0), rise(0.1, 60.0);
    std::vector<CalibrationCurve::Knot> knots;
    double p = 1000, b = 100;
    const int n = 2 + trial % 8;
    for (int i = 0; i < n; ++i) {
      knots.push_back({p, b});
      p += step(rng);
      b += rise(rng);
    }
    const CalibrationCurve c = CalibrationCurve::Fit(knots);
    for (const auto& k : knots) CHECK(c.ToBpf(k.pwm_us) == doctest::Approx(k.bpf_hz).epsilon(1e-12));
    CHECK(c.ToBpf(knots.front().pwm_us - 100) == knots.front().bpf_hz);
    CHECK(c.ToBpf(knots.back().pwm_us + 100) == knots.back().bpf_hz);
    // Dense grid: nondecreasing and inside each interval's value range.
    double prev = -1e300;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i)
      for (int s = 0; s <= 200; ++s) {
        const double x = knots[i].pwm_us + (knots[i + 1].pwm_us - knots[i].pwm_us) * s / 200.0;
        const double y = c.ToBpf(x);
        CHECK(y >= prev - 1e-9);
        CHECK(y >= knots[i].bpf_hz - 1e-9);
        CHECK(y <= knots[i + 1].bpf_hz + 1e-9);
        prev = y;
      }
  }
}

TEST_CASE("calibration rejects malformed knot sets") {
  CHECK_THROWS_WITH_AS(CalibrationCurve::Fit({{1100, 150}, {1100, 160}}), doctest::Contains("duplicate pwm knot"), Error);
  CHECK_THROWS_WITH_AS(CalibrationCurve::Fit({{1100, 150}, {1200, 140}}), "non-monotone calibration", Error);
  CHECK_THROWS_AS(CalibrationCurve::Fit({{1100, 150}}), Error);
}

TEST_CASE("calibration csv averages repeated pwm measurements") {
  const auto dir = testutil::TempDir("calib");
  std::ofstream(dir / "c.csv") << "pwm_us,bpf_hz\n1100,150\n1100,154\n1500,260\n2000,420\n";
  const auto knots = ReadCalibrationCsv(dir / "c.csv");
  REQUIRE(knots.size() == 3);
  CHECK(knots[0].bpf_hz == 152.0);
}

TEST_CASE("kalman filter: constant input stays put, step input converges, gaps reset") {
  std::vector<double> flat(100, 250.0);
  for (double v : KalmanSmooth(flat)) CHECK(v == doctest::Approx(250.0));

  std::vector<double> step(200, 200.0);
  for (int i = 100; i < 200; ++i) step[i] = 260.0;
  const auto s = KalmanSmooth(step);
  CHECK(s[100] > 200.0);
  CHECK(s[100] < 260.0);
  CHECK(s[199] == doctest::Approx(260.0).epsilon(1e-3));

  std::vector<double> gap = {200, 201, 0, 0, 300, 301};
  const auto g = KalmanSmooth(gap);
  CHECK(g[2] == 0.0);
  CHECK(g[3] == 0.0);
  CHECK(g[4] == 300.0);  // restarts from the first sample after the gap

  // Noise reduction on a noisy constant.
  std::mt19937 rng(1);
  std::normal_distribution<double> n(0.0, 5.0);
  std::vector<double> noisy(2000);
  for (double& v : noisy) v = 300 + n(rng);
  const auto sm = KalmanSmooth(noisy);
  double e_raw = 0, e_sm = 0;
  for (int i = 100; i < 2000; ++i) {
    e_raw += (noisy[i] - 300) * (noisy[i] - 300);
    e_sm += (sm[i] - 300) * (sm[i] - 300);
  }
  CHECK(e_sm < 0.5 * e_raw);
}

TEST_CASE("top two of four motors, ascending") {
  CHECK(TopTwoAscending({300, 100, 400, 200}) == std::array<double, 2>{300, 400});
  CHECK(TopTwoAscending({0, 0, 0, 0}) == std::array<double, 2>{0, 0});
}

TEST_CASE("labels from hover telemetry follow the calibration") {
  const CalibrationCurve c = Curve();
  const auto tel = Hover(0.0, 10.0, 0.05, {1500, 1300, 1700, 1100});
  const auto res = BuildLabels(tel, c, {}, 0.0, 310);
  CHECK(res.warnings.empty());
  for (std::size_t f = 0; f < 310; ++f) {
    CHECK(res.track.activity[f] == 1);
    CHECK(res.track.bpf[f][0] == doctest::Approx(260.0));
    CHECK(res.track.bpf[f][1] == doctest::Approx(300.0));
    CHECK(res.track.distance_m[f] == doctest::Approx(50.0));
  }
}

TEST_CASE("sync offset of one second shifts labels by 31.25 frames") {
  const CalibrationCurve c = Curve();
  auto tel = Hover(0.0, 20.0, 0.05, {1500, 1500, 1500, 1500});
  for (auto& f : tel)
    if (f.timestamp >= 5.0) f.motor_pwm = {1700, 1700, 1700, 1700};
  LabelBuildOptions opt;
  const auto a = BuildLabels(tel, c, {}, 0.0, 400, opt).track;
  const auto b = BuildLabels(tel, c, {}, 1.0, 400, opt).track;
  auto first_high = [](const BpfLabelTrack& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t.bpf[i][1] > 280) return static_cast<long>(i);
    return -1L;
  };
  // 1 s is 31.25 frames, so a crossing moves by 31 or 32 depending on phase.
  const long shift = first_high(a) - first_high(b);
  CHECK(shift >= 31);
  CHECK(shift <= 32);
  CHECK(std::abs((FrameTime(first_high(a)) - FrameTime(first_high(b))) - 1.0) <= 1.0 / kFrameRate);
}

TEST_CASE("activity uses the status within +/-0.1 s and grounded frames are zero") {
  const CalibrationCurve c = Curve();
  auto tel = Hover(0.0, 6.0, 0.05, {1500, 1500, 1500, 1500});
  for (auto& f : tel)
    if (f.timestamp > 3.0) f.status = FlightStatus::kGrounded;
  const auto t = BuildLabels(tel, c, {}, 0.0, 187).track;
  CHECK(t.activity[10] == 1);
  CHECK(t.activity[static_cast<std::size_t>(2.9 * kFrameRate)] == 1);
  CHECK(t.activity[static_cast<std::size_t>(3.2 * kFrameRate)] == 0);
  CHECK(t.bpf[static_cast<std::size_t>(4.0 * kFrameRate)] == std::array<double, 2>{0, 0});
}

TEST_CASE("label building warns on non-overlap and active gaps") {
  const CalibrationCurve c = Curve();
  const auto far = Hover(100.0, 110.0, 0.05, {1500, 1500, 1500, 1500});
  const auto r = BuildLabels(far, c, {}, 0.0, 93);
  REQUIRE(r.warnings.size() == 1);
  for (int a : r.track.activity) CHECK(a == 0);

  auto gappy = Hover(0.0, 1.0, 0.05, {1500, 1500, 1500, 1500});
  const auto later = Hover(3.0, 5.0, 0.05, {1500, 1500, 1500, 1500});
  gappy.insert(gappy.end(), later.begin(), later.end());
  const auto g = BuildLabels(gappy, c, {}, 0.0, 150);
  CHECK(g.warnings.size() == 1);
  CHECK(g.track.activity[static_cast<std::size_t>(2.0 * kFrameRate)] == 0);
}

TEST_CASE("drift adds a linear offset to nonzero labels and is bounded") {
  BpfLabelTrack t;
  t.Resize(101);
  for (auto& p : t.bpf) p = {200, 300};
  t.bpf[50] = {0, 0};
  const double dur = 101 / kFrameRate;
  const auto d = ApplyDrift(t, {10.0, -10.0}, dur);
  CHECK(d.bpf[0][0] == 210.0);
  CHECK(d.bpf[100][1] == doctest::Approx(300 + 10 - 20 * FrameTime(100) / dur));
  CHECK(d.bpf[50][0] == 0.0);
  CHECK_THROWS_AS((DriftProfile{60.0, 0.0}.Validate()), Error);
}

TEST_CASE("telemetry validation and csv round-trip") {
  const auto dir = testutil::TempDir("telemetry");
  auto tel = Hover(0.0, 1.0, 0.1, {1200, 1300, 1400, 1500});
  tel[3].servo = ServoState::kReleased;
  tel[4].position.reset();
  WriteTelemetryCsv(dir / "t.csv", tel);
  const auto r = ReadTelemetryCsv(dir / "t.csv");
  REQUIRE(r.size() == tel.size());
  CHECK(r[3].servo == ServoState::kReleased);
  CHECK(!r[4].position);
  CHECK(r[5].motor_pwm == tel[5].motor_pwm);
  auto bad = tel;
  bad[2].timestamp = bad[1].timestamp;
  CHECK_THROWS_AS(ValidateTelemetry(bad), Error);
  bad = tel;
  bad[0].motor_pwm[0] = 900;
  CHECK_THROWS_AS(ValidateTelemetry(bad), Error);
}

TEST_CASE("label csv round-trips exactly") {
  const auto dir = testutil::TempDir("labels");
  BpfLabelTrack t;
  t.Resize(20);
  for (std::size_t i = 0; i < 20; ++i) {
    t.bpf[i] = {200.125 + i, 300.0 / 7 + i};
    t.activity[i] = i % 2;
    if (i % 3) t.distance_m[i] = 12.5 * i;
  }
  WriteLabelCsv(dir / "l.csv", t);
  const auto r = ReadLabelCsv(dir / "l.csv");
  CHECK(r.bpf == t.bpf);
  CHECK(r.activity == t.activity);
  CHECK(r.distance_m == t.distance_m);
}

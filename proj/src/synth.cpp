// src/synth.cpp

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

#include "bpfdet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bpfdet/error.hpp"
#include "fft.hpp"

namespace bpfdet {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kSpeedOfSound = 343.0;
// Sharpness of the blade-rate modulation on the mode-2 carrier.
constexpr double kModulationKappa = 1.5;

using Json = nlohmann::json;

}  // namespace

void SceneSpec::Validate() const {
  if (rotors.size() > 4) throw InvalidArgument("scene supports at most 4 rotors");
  if (!(duration_s >= 3.0)) throw InvalidArgument("duration >= 3 s required");
  if (!std::isfinite(noise.snr_db)) throw InvalidArgument("noise snr_db must be finite");
  if (!(level > 0)) throw InvalidArgument("level must be positive");
  if (noise.kind == NoiseKind::kFile && noise.file.empty())
    throw InvalidArgument("file noise requires a path");
  if (noise.kind == NoiseKind::kUrban && !(noise.cutoff_hz > 0 && noise.cutoff_hz < kSampleRate / 2))
    throw InvalidArgument("urban noise cutoff must be in (0, 8000) Hz");
  for (const auto& r : rotors) {
    if (!(r.base_bpf > 0 && r.base_bpf < 800)) throw InvalidArgument("rotor base_bpf must be in (0, 800) Hz");
    if (r.harmonics < 1) throw InvalidArgument("rotor harmonics must be >= 1");
    if (!(r.jitter_sigma >= 0) || !(r.jitter_tau_s > 0))
      throw InvalidArgument("rotor jitter must have sigma >= 0 and tau > 0");
    if (!(r.mode2_gain >= 0) || !(r.mode2_freq > 0 && r.mode2_freq < kSampleRate / 2))
      throw InvalidArgument("rotor mode-2 parameters out of range");
    for (const auto& s : r.step_events)
      if (!(s.settle_tau_s > 0)) throw InvalidArgument("step settle_tau_s must be positive");
  }
  for (const auto& d : delivery) {
    if (!(d.time_s >= 0 && d.time_s <= duration_s))
      throw InvalidArgument("delivery time outside the scene duration");
    if (!(d.settle_tau_s > 0)) throw InvalidArgument("delivery settle_tau_s must be positive");
  }
  for (std::size_t i = 0; i < distance_traj.size(); ++i) {
    if (!(distance_traj[i].meters >= 0)) throw InvalidArgument("distances must be non-negative");
    if (i > 0 && !(distance_traj[i].time_s > distance_traj[i - 1].time_s))
      throw InvalidArgument("distance trajectory times must be increasing");
  }
}

double DistanceAt(const std::vector<DistancePoint>& traj, double t) {
  if (traj.empty()) return 1.0;
  if (t <= traj.front().time_s) return traj.front().meters;
  if (t >= traj.back().time_s) return traj.back().meters;
  auto it = std::upper_bound(traj.begin(), traj.end(), t,
                             [](double v, const DistancePoint& p) { return v < p.time_s; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  return a.meters + (b.meters - a.meters) * (t - a.time_s) / (b.time_s - a.time_s);
}

namespace {

double EventOffset(double t, double t0, double delta, double tau) {
  return t < t0 ? 0.0 : delta * (1.0 - std::exp(-(t - t0) / tau));
}

// Cascaded RBJ low-pass biquads forming a 4th-order Butterworth.
void ButterworthLowpass(std::vector<double>& x, double cutoff_hz) {
  for (double q : {0.54119610, 1.30656296}) {
    const double w0 = kTwoPi * cutoff_hz / kSampleRate;
    const double alpha = std::sin(w0) / (2 * q), c = std::cos(w0);
    const double a0 = 1 + alpha;
    const double b0 = (1 - c) / 2 / a0, b1 = (1 - c) / a0, b2 = b0;
    const double a1 = -2 * c / a0, a2 = (1 - alpha) / a0;
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : x) {
      const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = v;
      y2 = y1;
      y1 = y;
      v = y;
    }
  }
}

void ScaleToRms(std::vector<double>& x, double rms) {
  const double cur = Rms(x);
  if (cur > 0)
    for (double& v : x) v *= rms / cur;
}

AudioSegment TileTo(const AudioSegment& noise, std::size_t n) {
  if (noise.samples.empty()) throw InvalidArgument("noise source is empty");
  AudioSegment out;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = noise.samples[i % noise.samples.size()];
  return out;
}

}  // namespace

AudioSegment WhiteNoise(std::size_t samples, std::uint64_t seed, double rms) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  AudioSegment out;
  out.samples.resize(samples);
  for (double& v : out.samples) v = normal(rng);
  ScaleToRms(out.samples, rms);
  return out;
}

AudioSegment LowpassNoise(std::size_t samples, double cutoff_hz, std::uint64_t seed, double rms) {
  // Run the filter over a short lead-in so the output starts in steady state.
  const std::size_t lead = 4096;
  AudioSegment out = WhiteNoise(samples + lead, seed, 1.0);
  ButterworthLowpass(out.samples, cutoff_hz);
  out.samples.erase(out.samples.begin(), out.samples.begin() + lead);
  ScaleToRms(out.samples, rms);
  return out;
}

RenderedScene RenderScene(const SceneSpec& spec) {
  spec.Validate();
  const std::size_t n = static_cast<std::size_t>(std::llround(spec.duration_s * kSampleRate));
  const double dt = 1.0 / kSampleRate;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const std::size_t num_frames = n / kHopSize;
  RenderedScene scene;
  scene.audio.samples.assign(n, 0.0);
  scene.labels.Resize(num_frames);
  for (const auto& d : spec.delivery) scene.delivery_times_s.push_back(d.time_s);
  std::sort(scene.delivery_times_s.begin(), scene.delivery_times_s.end());

  std::vector<std::vector<double>> frame_bpf(spec.rotors.size(), std::vector<double>(num_frames));
  for (std::size_t r = 0; r < spec.rotors.size(); ++r) {
    const RotorTraj& rotor = spec.rotors[r];
    std::vector<double> harmonic_phase(rotor.harmonics);
    for (double& p : harmonic_phase) p = kTwoPi * uniform(rng);
    const double carrier_phase = kTwoPi * uniform(rng);
    double phase = uniform(rng);  // cycles
    const double decay = std::exp(-dt / rotor.jitter_tau_s);
    const double drive = rotor.jitter_sigma * std::sqrt(1.0 - decay * decay);
    double wander = rotor.jitter_sigma * normal(rng);

    for (std::size_t i = 0; i < n; ++i) {
      const double t = i * dt;
      double bpf = rotor.base_bpf + wander;
      for (const auto& s : rotor.step_events) bpf += EventOffset(t, s.time_s, s.delta_hz, s.settle_tau_s);
      for (const auto& d : spec.delivery) bpf += EventOffset(t, d.time_s, -d.bpf_drop_hz, d.settle_tau_s);
      bpf = std::max(bpf, 1.0);
      if (i % kHopSize == 0 && i / kHopSize < num_frames) frame_bpf[r][i / kHopSize] = bpf;

      const double dist = DistanceAt(spec.distance_traj, t);
      double observed = bpf;
      double carrier = rotor.mode2_freq;
      if (spec.doppler) {
        const double v = (DistanceAt(spec.distance_traj, t + dt) - dist) / dt;
        const double factor = kSpeedOfSound / (kSpeedOfSound + v);
        observed *= factor;
        carrier *= factor;
      }
      const double amp = spec.level / std::max(dist, 1.0);
      double s = 0.0;
      for (int h = 1; h <= rotor.harmonics; ++h) {
        if (h * observed >= 0.49 * kSampleRate) break;
        s += std::sin(kTwoPi * h * phase + harmonic_phase[h - 1]) / h;
      }
      const double modulation = std::exp(kModulationKappa * (std::cos(kTwoPi * phase) - 1.0));
      s += rotor.mode2_gain * modulation * std::sin(kTwoPi * carrier * t + carrier_phase);
      scene.audio.samples[i] += amp * s;

      phase += observed * dt;
      phase -= std::floor(phase);
      wander = decay * wander + drive * normal(rng);
    }
  }

  for (std::size_t f = 0; f < num_frames; ++f) {
    const double t = FrameTime(f);
    scene.labels.distance_m[f] = DistanceAt(spec.distance_traj, t);
    if (spec.rotors.empty()) continue;
    std::array<double, 4> values{0, 0, 0, 0};
    for (std::size_t r = 0; r < spec.rotors.size(); ++r) values[r] = frame_bpf[r][f];
    if (spec.rotors.size() == 1) values[1] = values[0];
    scene.labels.bpf[f] = TopTwoAscending(values);
    scene.labels.activity[f] = 1;
  }

  if (spec.noise.kind != NoiseKind::kNone) {
    const std::uint64_t noise_seed = spec.seed ^ 0x9e3779b97f4a7c15ULL;
    AudioSegment noise;
    switch (spec.noise.kind) {
      case NoiseKind::kWhite: noise = WhiteNoise(n, noise_seed); break;
      case NoiseKind::kUrban: noise = LowpassNoise(n, spec.noise.cutoff_hz, noise_seed); break;
      case NoiseKind::kFile: noise = TileTo(ReadWav(spec.noise.file), n); break;
      case NoiseKind::kNone: break;
    }
    if (spec.rotors.empty()) {
      ScaleToRms(noise.samples, spec.noise.rms);
      scene.audio.samples = std::move(noise.samples);
    } else {
      scene.audio = MixAtSnr(scene.audio, noise, spec.noise.snr_db);
    }
  }
  return scene;
}

AudioSegment MixAtSnr(const AudioSegment& signal, const AudioSegment& noise, double snr_db,
                      MixInfo* info) {
  if (!std::isfinite(snr_db)) throw InvalidArgument("snr_db must be finite");
  const double rms_signal = Rms(signal.samples);
  if (!(rms_signal > 0)) throw InvalidArgument("signal has zero RMS");
  const AudioSegment tiled = TileTo(noise, signal.samples.size());
  const double rms_noise = Rms(tiled.samples);
  if (!(rms_noise > 0)) throw InvalidArgument("noise has zero RMS");
  const double scale = rms_signal / (rms_noise * std::pow(10.0, snr_db / 20.0));

  AudioSegment out = signal;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    double v = out.samples[i] + scale * tiled.samples[i];
    if (v > 1.0 || v < -1.0) {
      ++clipped;
      v = std::clamp(v, -1.0, 1.0);
    }
    out.samples[i] = v;
  }
  if (info) {
    info->noise_scale = scale;
    info->clip_fraction = static_cast<double>(clipped) / std::max<std::size_t>(1, out.size());
    if (info->clip_fraction > 0.01)
      info->warning = "mix clipped " + std::to_string(info->clip_fraction * 100) + "% of samples";
  }
  return out;
}

AugmentPolicy AugmentPolicy::Disabled() {
  AugmentPolicy p;
  p.background_noise.probability = 0;
  p.gain.probability = 0;
  p.time_mask.probability = 0;
  p.freq_mask.probability = 0;
  return p;
}

AudioSegment Augment(const AudioSegment& segment, const AugmentPolicy& policy,
                     std::uint64_t seed, const AudioSegment* noise_source) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  auto draw = [&](const AugmentRange& r) { return r.min + (r.max - r.min) * uniform(rng); };
  auto fires = [&](const AugmentRange& r) { return uniform(rng) < r.probability; };

  AudioSegment out = segment;
  const std::size_t n = out.samples.size();
  const std::size_t block = kSampleRate;
  const AudioSegment noise = noise_source ? TileTo(*noise_source, n)
                                          : WhiteNoise(n, seed ^ 0x5851f42d4c957f2dULL);
  for (std::size_t start = 0; start < n; start += block) {
    const std::size_t len = std::min(block, n - start);
    std::span<double> x(out.samples.data() + start, len);

    if (fires(policy.background_noise)) {
      const double snr = draw(policy.background_noise);
      const double rs = Rms(x);
      const double rn = Rms(std::span<const double>(noise.samples.data() + start, len));
      if (rs > 0 && rn > 0) {
        const double scale = rs / (rn * std::pow(10.0, snr / 20.0));
        for (std::size_t i = 0; i < len; ++i) x[i] += scale * noise.samples[start + i];
      }
    }
    if (fires(policy.gain)) {
      const double g = std::pow(10.0, draw(policy.gain) / 20.0);
      for (double& v : x) v *= g;
    }
    if (fires(policy.time_mask)) {
      const auto mask = std::min<std::size_t>(
          len, static_cast<std::size_t>(std::llround(draw(policy.time_mask) * kSampleRate)));
      const auto offset = static_cast<std::size_t>(uniform(rng) * (len - mask));
      std::fill(x.begin() + offset, x.begin() + offset + mask, 0.0);
    }
    if (fires(policy.freq_mask) && len >= 16) {
      const double width = policy.freq_mask_min_width_hz +
                           (policy.freq_mask_max_width_hz - policy.freq_mask_min_width_hz) * uniform(rng);
      const double hi_edge = std::max(policy.freq_mask.min, policy.freq_mask.max - width);
      const double lo = policy.freq_mask.min + (hi_edge - policy.freq_mask.min) * uniform(rng);
      detail::RealFft fft(len);
      std::vector<std::complex<double>> spec(fft.num_bins());
      fft.Forward(std::vector<double>(x.begin(), x.end()), spec);
      for (std::size_t k = 0; k < spec.size(); ++k) {
        const double f = static_cast<double>(k) * kSampleRate / len;
        if (f >= lo && f <= lo + width) spec[k] = 0.0;
      }
      std::vector<double> back(len);
      fft.Inverse(spec, back);
      for (std::size_t i = 0; i < len; ++i) x[i] = back[i] / len;
    }
  }
  for (double& v : out.samples) v = std::clamp(v, -1.0, 1.0);
  return out;
}

namespace {

void CheckKeys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw InvalidArgument("unknown key '" + key + "' in " + where);
}

template <typename T>
void Get(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

NoiseKind ParseNoiseKind(const std::string& s) {
  if (s == "none") return NoiseKind::kNone;
  if (s == "urban") return NoiseKind::kUrban;
  if (s == "white") return NoiseKind::kWhite;
  if (s == "file") return NoiseKind::kFile;
  throw InvalidArgument("unknown noise kind '" + s + "'");
}

const char* NoiseKindName(NoiseKind k) {
  switch (k) {
    case NoiseKind::kNone: return "none";
    case NoiseKind::kUrban: return "urban";
    case NoiseKind::kWhite: return "white";
    case NoiseKind::kFile: return "file";
  }
  return "none";
}

}  // namespace

SceneSpec ParseSceneSpec(const std::string& json_text) {
  SceneSpec spec;
  try {
    const Json j = Json::parse(json_text);
    CheckKeys(j, {"rotors", "duration_s", "distance_traj", "noise", "delivery", "seed", "level", "doppler"},
              "scene");
    Get(j, "duration_s", spec.duration_s);
    Get(j, "seed", spec.seed);
    Get(j, "level", spec.level);
    Get(j, "doppler", spec.doppler);
    for (const auto& jr : j.value("rotors", Json::array())) {
      CheckKeys(jr, {"base_bpf", "jitter_sigma", "jitter_tau_s", "harmonics", "mode2_freq", "mode2_gain",
                     "step_events"},
                "rotor");
      RotorTraj r;
      Get(jr, "base_bpf", r.base_bpf);
      Get(jr, "jitter_sigma", r.jitter_sigma);
      Get(jr, "jitter_tau_s", r.jitter_tau_s);
      Get(jr, "harmonics", r.harmonics);
      Get(jr, "mode2_freq", r.mode2_freq);
      Get(jr, "mode2_gain", r.mode2_gain);
      for (const auto& js : jr.value("step_events", Json::array())) {
        CheckKeys(js, {"time_s", "delta_hz", "settle_tau_s"}, "step event");
        StepEvent s;
        Get(js, "time_s", s.time_s);
        Get(js, "delta_hz", s.delta_hz);
        Get(js, "settle_tau_s", s.settle_tau_s);
        r.step_events.push_back(s);
      }
      spec.rotors.push_back(r);
    }
    for (const auto& jd : j.value("distance_traj", Json::array())) {
      CheckKeys(jd, {"time_s", "meters"}, "distance point");
      DistancePoint p;
      Get(jd, "time_s", p.time_s);
      Get(jd, "meters", p.meters);
      spec.distance_traj.push_back(p);
    }
    if (j.contains("noise")) {
      const Json& jn = j.at("noise");
      CheckKeys(jn, {"kind", "snr_db", "rms", "cutoff_hz", "file"}, "noise");
      spec.noise.kind = ParseNoiseKind(jn.value("kind", std::string("none")));
      Get(jn, "snr_db", spec.noise.snr_db);
      Get(jn, "rms", spec.noise.rms);
      Get(jn, "cutoff_hz", spec.noise.cutoff_hz);
      if (jn.contains("file")) spec.noise.file = jn.at("file").get<std::string>();
    }
    for (const auto& jd : j.value("delivery", Json::array())) {
      CheckKeys(jd, {"time_s", "bpf_drop_hz", "settle_tau_s"}, "delivery");
      DeliverySpec d;
      Get(jd, "time_s", d.time_s);
      Get(jd, "bpf_drop_hz", d.bpf_drop_hz);
      Get(jd, "settle_tau_s", d.settle_tau_s);
      spec.delivery.push_back(d);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("scene spec: ") + e.what());
  }
  spec.Validate();
  return spec;
}

SceneSpec ReadSceneSpec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseSceneSpec(ss.str());
}

std::string SceneSpecToJson(const SceneSpec& spec) {
  Json j;
  j["duration_s"] = spec.duration_s;
  j["seed"] = spec.seed;
  j["level"] = spec.level;
  j["doppler"] = spec.doppler;
  j["rotors"] = Json::array();
  for (const auto& r : spec.rotors) {
    Json jr{{"base_bpf", r.base_bpf}, {"jitter_sigma", r.jitter_sigma}, {"jitter_tau_s", r.jitter_tau_s},
            {"harmonics", r.harmonics}, {"mode2_freq", r.mode2_freq}, {"mode2_gain", r.mode2_gain}};
    jr["step_events"] = Json::array();
    for (const auto& s : r.step_events)
      jr["step_events"].push_back({{"time_s", s.time_s}, {"delta_hz", s.delta_hz}, {"settle_tau_s", s.settle_tau_s}});
    j["rotors"].push_back(jr);
  }
  j["distance_traj"] = Json::array();
  for (const auto& p : spec.distance_traj) j["distance_traj"].push_back({{"time_s", p.time_s}, {"meters", p.meters}});
  j["noise"] = {{"kind", NoiseKindName(spec.noise.kind)}, {"snr_db", spec.noise.snr_db},
                {"rms", spec.noise.rms}, {"cutoff_hz", spec.noise.cutoff_hz}};
  if (!spec.noise.file.empty()) j["noise"]["file"] = spec.noise.file.string();
  j["delivery"] = Json::array();
  for (const auto& d : spec.delivery)
    j["delivery"].push_back({{"time_s", d.time_s}, {"bpf_drop_hz", d.bpf_drop_hz}, {"settle_tau_s", d.settle_tau_s}});
  return j.dump(2);
}

}  // namespace bpfdet

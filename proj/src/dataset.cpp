// src/dataset.cpp

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

#include "bpfdet/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "bpfdet/error.hpp"

namespace bpfdet {

using json = nlohmann::json;

const char* RoleName(Role role) {
  switch (role) {
    case Role::kTrain: return "train";
    case Role::kValid: return "valid";
    case Role::kTest: return "test";
  }
  return "?";
}

Role ParseRole(const std::string& name) {
  if (name == "train") return Role::kTrain;
  if (name == "valid") return Role::kValid;
  if (name == "test") return Role::kTest;
  throw InvalidArgument("unknown role '" + name + "' (expected train, valid or test)");
}

namespace {

std::filesystem::path Resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

const std::set<std::string> kEntryKeys = {
    "id", "wav_path", "telemetry_path", "labels_path", "sync_offset_s", "drift_start_hz",
    "drift_end_hz", "delivery_times_s", "role", "noise_only"};

ManifestEntry EntryFromJson(const json& j, const std::filesystem::path& base) {
  if (!j.is_object()) throw InvalidArgument("manifest entry must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!kEntryKeys.count(it.key()))
      throw InvalidArgument("unknown manifest key '" + it.key() + "'");
  ManifestEntry e;
  e.id = j.at("id").get<std::string>();
  e.wav_path = Resolve(base, j.at("wav_path").get<std::string>());
  e.telemetry_path = Resolve(base, j.value("telemetry_path", std::string()));
  e.labels_path = Resolve(base, j.value("labels_path", std::string()));
  e.sync_offset_s = j.value("sync_offset_s", 0.0);
  e.drift_start_hz = j.value("drift_start_hz", 0.0);
  e.drift_end_hz = j.value("drift_end_hz", 0.0);
  e.delivery_times_s = j.value("delivery_times_s", std::vector<double>{});
  e.role = ParseRole(j.value("role", std::string("train")));
  e.noise_only = j.value("noise_only", false);
  if (!e.noise_only && e.telemetry_path.empty() && e.labels_path.empty())
    throw InvalidArgument("entry '" + e.id + "' needs telemetry_path, labels_path or noise_only");
  return e;
}

}  // namespace

RecordingManifest ParseManifest(const std::string& json_text, const std::filesystem::path& base_dir) {
  RecordingManifest m;
  try {
    const json j = json::parse(json_text);
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "calibration_path" && it.key() != "entries")
        throw InvalidArgument("unknown manifest key '" + it.key() + "'");
    m.calibration_path = Resolve(base_dir, j.value("calibration_path", std::string()));
    std::set<std::string> ids;
    for (const json& e : j.at("entries")) {
      m.entries.push_back(EntryFromJson(e, base_dir));
      if (!ids.insert(m.entries.back().id).second)
        throw InvalidArgument("duplicate manifest id '" + m.entries.back().id + "'");
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("invalid manifest: ") + e.what());
  }
  return m;
}

RecordingManifest ReadManifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseManifest(ss.str(), path.parent_path());
}

json ManifestEntryToJson(const ManifestEntry& e) {
  json j = {{"id", e.id},
            {"wav_path", e.wav_path.string()},
            {"sync_offset_s", e.sync_offset_s},
            {"drift_start_hz", e.drift_start_hz},
            {"drift_end_hz", e.drift_end_hz},
            {"delivery_times_s", e.delivery_times_s},
            {"role", RoleName(e.role)}};
  if (!e.telemetry_path.empty()) j["telemetry_path"] = e.telemetry_path.string();
  if (!e.labels_path.empty()) j["labels_path"] = e.labels_path.string();
  if (e.noise_only) j["noise_only"] = true;
  return j;
}

void WriteManifest(const std::filesystem::path& path, const RecordingManifest& manifest) {
  json j;
  if (!manifest.calibration_path.empty()) j["calibration_path"] = manifest.calibration_path.string();
  j["entries"] = json::array();
  for (const auto& e : manifest.entries) j["entries"].push_back(ManifestEntryToJson(e));
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

LoadedRecording LoadRecording(const ManifestEntry& entry, const CalibrationCurve* curve,
                              int channel) {
  if (entry.role == Role::kTrain && !entry.delivery_times_s.empty())
    throw InvalidArgument("entry '" + entry.id +
                          "': flights with delivery events may not be used for training");
  LoadedRecording rec;
  rec.entry = entry;
  try {
    rec.audio = ReadWav(entry.wav_path, channel);
    const std::size_t frames = rec.audio.num_frames();
    if (entry.noise_only) {
      rec.labels.Resize(frames);
    } else if (!entry.labels_path.empty()) {
      rec.labels = ReadLabelCsv(entry.labels_path);
      if (rec.labels.size() != frames)
        throw InvalidArgument("label rows " + std::to_string(rec.labels.size()) +
                              " do not match audio frames " + std::to_string(frames));
    } else {
      if (!curve) throw InvalidArgument("telemetry labels need a calibration curve");
      rec.telemetry = ReadTelemetryCsv(entry.telemetry_path);
      DriftProfile drift{entry.drift_start_hz, entry.drift_end_hz};
      LabelBuildResult built =
          BuildLabels(rec.telemetry, *curve, drift, entry.sync_offset_s, frames);
      rec.labels = std::move(built.track);
      rec.warnings = std::move(built.warnings);
    }
  } catch (const Error& e) {
    throw Error(e.kind(), "entry '" + entry.id + "': " + e.what());
  }
  return rec;
}

std::optional<double> SegmentDistance(const BpfLabelTrack& labels) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels.activity[i] == 1 && labels.distance_m[i]) {
      sum += *labels.distance_m[i];
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

namespace {

struct RawSegment {
  FeatureBlock raw;
  LabeledSegment meta;
};

void Cut(const FeatureBlock& raw, const BpfLabelTrack& labels, const std::string& source,
         bool augmented, bool apply_distance_filter, const AssembleOptions& opt,
         std::vector<RawSegment>& out) {
  const std::size_t n = static_cast<std::size_t>(opt.segment_frames);
  for (std::size_t s = 0; s + n <= raw.frames(); s += n) {
    RawSegment seg;
    seg.meta.labels = labels.Frames(s, n);
    seg.meta.max_distance_m = seg.meta.labels.MaxDistance();
    if (apply_distance_filter && seg.meta.max_distance_m &&
        *seg.meta.max_distance_m > opt.max_distance_m)
      continue;
    seg.raw = raw.Frames(s, n);
    seg.meta.source = source;
    seg.meta.start_frame = s;
    seg.meta.augmented = augmented;
    out.push_back(std::move(seg));
  }
}

}  // namespace

DatasetSplits Assemble(const RecordingManifest& manifest, const AssembleOptions& opt,
                       std::span<const AudioSegment> noise_sources) {
  if (manifest.entries.empty()) throw InvalidArgument("manifest has no entries");
  if (opt.segment_frames < 1) throw InvalidArgument("segment_frames must be >= 1");
  if (opt.augmented_copies < 0) throw InvalidArgument("augmented_copies must be >= 0");

  std::optional<CalibrationCurve> curve;
  if (!manifest.calibration_path.empty())
    curve = CalibrationCurve::Fit(ReadCalibrationCsv(manifest.calibration_path));

  const FeatureExtractor& fx = DefaultExtractor();
  std::vector<RawSegment> parts[3];
  std::set<Role> present;
  DatasetSplits splits;
  std::mt19937_64 rng(opt.seed);
  for (const ManifestEntry& entry : manifest.entries) {
    const LoadedRecording rec = LoadRecording(entry, curve ? &*curve : nullptr, opt.channel);
    for (const auto& w : rec.warnings) splits.warnings.push_back(entry.id + ": " + w);
    present.insert(entry.role);
    const bool filter = entry.role != Role::kTest;
    auto& dst = parts[static_cast<int>(entry.role)];
    Cut(fx.Raw(rec.audio), rec.labels, entry.id, false, filter, opt, dst);
    if (entry.role != Role::kTrain) continue;
    for (int c = 0; c < opt.augmented_copies; ++c) {
      const std::uint64_t seed = rng();
      const AudioSegment* noise = nullptr;
      if (!noise_sources.empty()) noise = &noise_sources[rng() % noise_sources.size()];
      const AudioSegment aug = Augment(rec.audio, opt.augment, seed, noise);
      Cut(fx.Raw(aug), rec.labels, entry.id + "#aug" + std::to_string(c + 1), true, filter, opt,
          dst);
    }
  }
  for (Role r : present)
    if (parts[static_cast<int>(r)].empty())
      throw InvalidArgument(std::string("split '") + RoleName(r) + "' is empty after filtering");

  std::vector<FeatureBlock> train_raw;
  for (const auto& p : parts[0]) train_raw.push_back(p.raw);
  splits.norm = train_raw.empty() ? NormStats::Identity() : ComputeNormStats(train_raw);

  std::vector<LabeledSegment>* outs[3] = {&splits.train, &splits.valid, &splits.test};
  for (int r = 0; r < 3; ++r)
    for (auto& p : parts[r]) {
      p.meta.features = Standardize(p.raw, splits.norm);
      outs[r]->push_back(std::move(p.meta));
    }
  return splits;
}

std::vector<TrainingSample> ToTrainingSamples(std::span<const LabeledSegment> segments) {
  std::vector<TrainingSample> out;
  out.reserve(segments.size());
  for (const auto& s : segments) out.push_back({s.features, s.labels});
  return out;
}

std::vector<DistanceGroup> DistanceGroups(std::span<const BpfLabelTrack> tracks,
                                          const DistanceGroupOptions& opt) {
  if (opt.group_count < 1 || !(opt.max_m > 0.0))
    throw InvalidArgument("distance groups need group_count >= 1 and max_m > 0");
  const double width = opt.max_m / opt.group_count;
  std::vector<DistanceGroup> groups(opt.group_count);
  for (int g = 0; g < opt.group_count; ++g) {
    groups[g].index = g;
    groups[g].lo_m = g * width;
    groups[g].hi_m = (g + 1) * width;
  }
  std::vector<std::size_t> noise_pool;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const BpfLabelTrack& t = tracks[i];
    const bool active = std::any_of(t.activity.begin(), t.activity.end(), [](int a) { return a == 1; });
    if (!active) {
      noise_pool.push_back(i);
      continue;
    }
    const std::optional<double> d = SegmentDistance(t);
    if (!d || *d < 0.0 || *d >= opt.max_m) continue;
    groups[static_cast<int>(*d / width)].drone.push_back(i);
  }
  std::mt19937_64 rng(opt.seed);
  std::shuffle(noise_pool.begin(), noise_pool.end(), rng);
  std::size_t next = 0;
  for (auto& g : groups) {
    g.empty = g.drone.empty();
    if (noise_pool.empty()) continue;
    for (std::size_t k = 0; k < g.drone.size(); ++k)
      g.noise.push_back(noise_pool[next++ % noise_pool.size()]);
  }
  return groups;
}

}  // namespace bpfdet

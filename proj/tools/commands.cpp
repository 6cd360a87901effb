// tools/commands.cpp

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

#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "bpfdet/error.hpp"
#include "bpfdet/features.hpp"
#include "bpfdet/synth.hpp"

namespace bpfdet::cli {

using nlohmann::json;

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers; fn receives the
// worker index too. The first exception is rethrown after all workers stop.
template <typename Fn>
void ParallelFor(std::size_t n, int threads, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&](std::size_t worker) {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i, worker);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  if (workers <= 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

std::string Shortest(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void EnsureDir(const path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void WriteMatrixCsv(const path& file, const Matrix& m) {
  std::ofstream os(file);
  if (!os) throw IoError("cannot write " + file.string());
  os << "frame,time_s";
  for (Eigen::Index c = 0; c < m.cols(); ++c) os << ',' << c;
  os << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    os << r << ',' << Shortest(FrameTime(static_cast<std::size_t>(r)));
    for (Eigen::Index c = 0; c < m.cols(); ++c) os << ',' << Shortest(m(r, c));
    os << '\n';
  }
  if (!os) throw IoError("write failed for " + file.string());
}

void WriteJson(const path& file, const json& j) {
  std::ofstream os(file);
  if (!os) throw IoError("cannot write " + file.string());
  os << j.dump(2) << '\n';
}

json ReadJsonFile(const path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument(file.string() + ": " + e.what());
  }
}

BpfTrack SliceTrack(const BpfTrack& t, std::size_t begin, std::size_t count) {
  BpfTrack out;
  out.bpf.assign(t.bpf.begin() + begin, t.bpf.begin() + begin + count);
  out.activity.assign(t.activity.begin() + begin, t.activity.begin() + begin + count);
  if (t.single_source.size() == t.size())
    out.single_source.assign(t.single_source.begin() + begin, t.single_source.begin() + begin + count);
  if (t.distance_m.size() == t.size())
    out.distance_m.assign(t.distance_m.begin() + begin, t.distance_m.begin() + begin + count);
  return out;
}

std::optional<CalibrationCurve> ManifestCurve(const RecordingManifest& m) {
  if (m.calibration_path.empty()) return std::nullopt;
  return CalibrationCurve::Fit(ReadCalibrationCsv(m.calibration_path));
}

}  // namespace

Estimator MakeEstimator(const RunConfig& cfg, const std::optional<path>& weights) {
  if (cfg.estimator == EstimatorKind::kOracle) {
    const OracleConfig oracle = cfg.oracle;
    return [oracle](const AudioSegment& audio) { return EstimateOracle(audio, oracle); };
  }
  if (!weights) throw InvalidArgument("--weights is required for the crnn estimator");
  auto model = std::make_shared<TrainedModel>(LoadCheckpoint(*weights));
  const double threshold = cfg.activity_threshold;
  return [model, threshold](const AudioSegment& audio) { return Predict(*model, audio, threshold); };
}

std::vector<SynthOutput> CmdSynth(const RunConfig& cfg, const std::vector<path>& spec_files,
                                  Role role) {
  if (spec_files.empty()) throw InvalidArgument("synth needs at least one scene spec");
  // Parse and validate everything before rendering anything.
  std::vector<SceneSpec> specs;
  std::vector<SynthOutput> outputs;
  for (const auto& file : spec_files) {
    SceneSpec spec = ReadSceneSpec(file);
    if (cfg.seed_given) spec.seed = cfg.seed;
    spec.Validate();
    if (role == Role::kTrain && !spec.delivery.empty())
      throw InvalidArgument(file.string() + ": delivery flights cannot go to the train role");
    SynthOutput out;
    out.id = file.stem().string();
    if (std::any_of(outputs.begin(), outputs.end(), [&](const auto& o) { return o.id == out.id; }))
      throw InvalidArgument("duplicate scene id '" + out.id + "'");
    out.wav = cfg.output_dir / (out.id + ".wav");
    out.labels = cfg.output_dir / (out.id + "_labels.csv");
    out.manifest = cfg.output_dir / "manifest.json";
    specs.push_back(std::move(spec));
    outputs.push_back(std::move(out));
  }
  EnsureDir(cfg.output_dir);

  std::vector<std::vector<double>> deliveries(specs.size());
  ParallelFor(specs.size(), cfg.threads, [&](std::size_t i, std::size_t) {
    const RenderedScene scene = RenderScene(specs[i]);
    WriteWav(outputs[i].wav, scene.audio, WavEncoding::kFloat32);
    WriteLabelCsv(outputs[i].labels, scene.labels);
    deliveries[i] = scene.delivery_times_s;
    spdlog::info("synth {}: {} frames, {} deliveries", outputs[i].id, scene.labels.size(),
                 scene.delivery_times_s.size());
  });

  // Upsert into the manifest, keeping paths relative to it.
  const path manifest_path = cfg.output_dir / "manifest.json";
  json doc = {{"entries", json::array()}};
  if (std::filesystem::exists(manifest_path)) {
    doc = ReadJsonFile(manifest_path);
    if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_array())
      throw InvalidArgument(manifest_path.string() + ": not a manifest");
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    ManifestEntry e;
    e.id = outputs[i].id;
    e.wav_path = outputs[i].wav.filename();
    e.labels_path = outputs[i].labels.filename();
    e.delivery_times_s = deliveries[i];
    e.role = role;
    e.noise_only = specs[i].rotors.empty();
    if (e.noise_only) e.labels_path.clear();
    auto& entries = doc["entries"];
    auto it = std::find_if(entries.begin(), entries.end(),
                           [&](const json& j) { return j.value("id", std::string()) == e.id; });
    if (it != entries.end())
      *it = ManifestEntryToJson(e);
    else
      entries.push_back(ManifestEntryToJson(e));
  }
  WriteJson(manifest_path, doc);
  // Round-trip through the reader so a bad merge fails here, not later.
  ReadManifest(manifest_path);
  return outputs;
}

FeaturesOutput CmdFeatures(const RunConfig& cfg, const path& wav) {
  const AudioSegment audio = ReadWav(wav, cfg.channel);
  const FeatureBlock block = DefaultExtractor().Raw(audio);
  EnsureDir(cfg.output_dir);
  const std::string stem = wav.stem().string();
  FeaturesOutput out{cfg.output_dir / (stem + "_mel.csv"), cfg.output_dir / (stem + "_cepstrum.csv")};
  WriteMatrixCsv(out.mel, block.mel);
  WriteMatrixCsv(out.cepstrum, block.cepstrum);
  spdlog::info("features {}: {} frames", stem, block.frames());
  return out;
}

path CmdTrain(const RunConfig& cfg, const path& manifest_file) {
  const RecordingManifest manifest = ReadManifest(manifest_file);
  EnsureDir(cfg.output_dir);

  // Noise-only training recordings double as background-noise sources for
  // augmentation.
  const auto curve = ManifestCurve(manifest);
  std::vector<AudioSegment> noise;
  for (const auto& e : manifest.entries)
    if (e.role == Role::kTrain && e.noise_only)
      noise.push_back(LoadRecording(e, curve ? &*curve : nullptr, cfg.channel).audio);

  AssembleOptions opt;
  opt.segment_frames = cfg.assemble.segment_frames;
  opt.augmented_copies = cfg.assemble.augmented_copies;
  opt.max_distance_m = cfg.assemble.max_distance_m;
  opt.seed = cfg.seed;
  opt.channel = cfg.channel;
  const DatasetSplits splits = Assemble(manifest, opt, noise);
  for (const auto& w : splits.warnings) spdlog::warn("{}", w);
  spdlog::info("dataset: {} train, {} valid, {} test segments", splits.train.size(),
               splits.valid.size(), splits.test.size());
  if (splits.train.empty()) throw InvalidArgument("manifest has no training segments");

  const auto train = ToTrainingSamples(splits.train);
  const auto valid = ToTrainingSamples(splits.valid);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.activity_threshold = cfg.activity_threshold;
  tc.log_path = cfg.output_dir / "train_log.jsonl";
  TrainedModel model(cfg.model, splits.norm);
  const TrainResult result = Train(model, train, valid, tc, [](const EpochStats& s) {
    auto show = [](const std::optional<double>& v) { return v ? Shortest(*v) : std::string("-"); };
    spdlog::info("epoch {}: loss {} train_mae {} valid_mmae {}", s.epoch, Shortest(s.train_loss),
                 show(s.train_mae_hz), show(s.valid_mmae_hz));
    return true;
  });
  const path out = cfg.output_dir / "model.bpfckpt";
  SaveCheckpoint(out, model);
  spdlog::info("best epoch {}{}; weights in {}", result.best_epoch,
               result.stopped_early ? " (stopped early)" : "", out.string());
  return out;
}

path CmdPredict(const RunConfig& cfg, const path& wav, const std::optional<path>& weights) {
  const Estimator estimate = MakeEstimator(cfg, weights);
  const AudioSegment audio = ReadWav(wav, cfg.channel);
  const BpfTrack track = estimate(audio);
  EnsureDir(cfg.output_dir);
  const path out = cfg.output_dir / (wav.stem().string() + "_track.csv");
  WriteTrackCsv(out, track);
  spdlog::info("predict {}: {} frames", wav.stem().string(), track.size());
  return out;
}

DetectOutput CmdDetect(const RunConfig& cfg, const path& input, const std::optional<path>& weights) {
  BpfTrack track;
  std::string stem = input.stem().string();
  if (input.extension() == ".csv") {
    track = ReadTrackCsv(input);
    const std::string suffix = "_track";
    if (stem.size() > suffix.size() && stem.ends_with(suffix)) stem.resize(stem.size() - suffix.size());
  } else {
    track = MakeEstimator(cfg, weights)(ReadWav(input, cfg.channel));
  }
  const DeliveryScoreSeries series = ScoreSeries(track, cfg.detector, cfg.weights);
  EnsureDir(cfg.output_dir);
  DetectOutput out{cfg.output_dir / (stem + "_scores.csv"), cfg.output_dir / (stem + "_events.json"),
                   series.events};
  WriteScoreCsv(out.scores, series);
  WriteEventsJson(out.events, series.events);
  spdlog::info("detect {}: {} events", stem, series.events.size());
  return out;
}

nlohmann::json CmdEval(const RunConfig& cfg, const path& manifest_file,
                       const std::optional<path>& weights, const std::string& split) {
  const RecordingManifest manifest = ReadManifest(manifest_file);
  std::optional<Role> role;
  if (split != "all") role = ParseRole(split);
  std::vector<const ManifestEntry*> entries;
  for (const auto& e : manifest.entries)
    if (!role || e.role == *role) entries.push_back(&e);
  if (entries.empty()) throw InvalidArgument("no manifest entries in split '" + split + "'");
  const auto curve = ManifestCurve(manifest);

  // One estimator per worker: the network keeps activations between calls.
  const std::size_t workers = std::min<std::size_t>(cfg.threads, entries.size());
  std::vector<Estimator> estimators;
  for (std::size_t w = 0; w < workers; ++w) estimators.push_back(MakeEstimator(cfg, weights));

  std::vector<BpfTrack> preds(entries.size());
  std::vector<BpfLabelTrack> labels(entries.size());
  ParallelFor(entries.size(), static_cast<int>(workers), [&](std::size_t i, std::size_t w) {
    LoadedRecording rec = LoadRecording(*entries[i], curve ? &*curve : nullptr, cfg.channel);
    for (const auto& warning : rec.warnings) spdlog::warn("{}: {}", rec.entry.id, warning);
    preds[i] = estimators[w](rec.audio);
    labels[i] = std::move(rec.labels);
    spdlog::debug("eval {}: {} frames", rec.entry.id, preds[i].size());
  });

  json report;
  report["estimator"] = cfg.estimator == EstimatorKind::kOracle ? "oracle" : "crnn";
  report["split"] = split;
  report["activity_threshold"] = cfg.activity_threshold;
  report["recordings"] = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    json row = EvaluateTracks(entries[i]->id, std::span(&preds[i], 1), std::span(&labels[i], 1),
                              cfg.activity_threshold)
                   .ToJson();
    row["frames"] = preds[i].size();
    report["recordings"].push_back(row);
  }
  report["overall"] = EvaluateTracks("overall", preds, labels, cfg.activity_threshold).ToJson();

  // Distance groups over fixed-length segments, each balanced with noise.
  std::vector<BpfTrack> seg_preds;
  std::vector<BpfLabelTrack> seg_labels;
  const auto seg = static_cast<std::size_t>(cfg.assemble.segment_frames);
  for (std::size_t i = 0; i < entries.size(); ++i)
    for (std::size_t b = 0; b + seg <= labels[i].size(); b += seg) {
      seg_preds.push_back(SliceTrack(preds[i], b, seg));
      seg_labels.push_back(labels[i].Frames(b, seg));
    }
  DistanceGroupOptions group_opt;
  group_opt.seed = cfg.seed;
  report["distance_groups"] = json::array();
  for (const DistanceGroup& g : DistanceGroups(seg_labels, group_opt)) {
    if (g.empty) continue;
    std::vector<BpfTrack> gp;
    std::vector<BpfLabelTrack> gl;
    for (auto idx : g.drone) gp.push_back(seg_preds[idx]), gl.push_back(seg_labels[idx]);
    for (auto idx : g.noise) gp.push_back(seg_preds[idx]), gl.push_back(seg_labels[idx]);
    std::ostringstream name;
    name << g.lo_m << "-" << g.hi_m << " m";
    json row = EvaluateTracks(name.str(), gp, gl, cfg.activity_threshold).ToJson();
    row["drone_segments"] = g.drone.size();
    row["noise_segments"] = g.noise.size();
    report["distance_groups"].push_back(row);
  }

  // Delivery detection on entries that carry delivery times.
  std::vector<double> scores;
  std::vector<int> flags;
  EventMatch total;
  int flights = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i]->delivery_times_s.empty()) continue;
    ++flights;
    const DeliveryScoreSeries series = ScoreSeries(preds[i], cfg.detector, cfg.weights);
    const DeliveryEvaluation ev = EvaluateDelivery(series, series.events, entries[i]->delivery_times_s);
    scores.insert(scores.end(), ev.frame_scores.begin(), ev.frame_scores.end());
    flags.insert(flags.end(), ev.frame_labels.begin(), ev.frame_labels.end());
    total.true_positives += ev.events.true_positives;
    total.false_positives += ev.events.false_positives;
    total.false_negatives += ev.events.false_negatives;
  }
  if (flights > 0) {
    json d = {{"flights", flights},
              {"true_positives", total.true_positives},
              {"false_positives", total.false_positives},
              {"false_negatives", total.false_negatives}};
    const bool both = std::count(flags.begin(), flags.end(), 1) > 0 &&
                      std::count(flags.begin(), flags.end(), 0) > 0;
    if (both) {
      const RocCurve roc = ComputeRoc(scores, flags);
      d["frame_auc"] = roc.auc;
      d["frame_tpr_at_fpr_0.1"] = roc.TprAtFpr(0.1);
    } else {
      d["frame_auc"] = nullptr;
      d["frame_tpr_at_fpr_0.1"] = nullptr;
    }
    report["delivery"] = d;
  } else {
    report["delivery"] = nullptr;
  }

  EnsureDir(cfg.output_dir);
  WriteJson(cfg.output_dir / "eval_report.json", report);
  spdlog::info("eval {}: {} recordings", split, entries.size());
  return report;
}

CalibrateOutput CmdCalibrate(const RunConfig& cfg, const path& measurements) {
  const auto knots = AverageMeasurements(ReadCalibrationCsv(measurements));
  const CalibrationCurve curve = CalibrationCurve::Fit(knots);
  EnsureDir(cfg.output_dir);
  CalibrateOutput out{cfg.output_dir / "calibration.csv", cfg.output_dir / "calibration_table.csv"};
  {
    std::ofstream os(out.knots);
    if (!os) throw IoError("cannot write " + out.knots.string());
    os << "pwm_us,bpf_hz\n";
    for (const auto& k : curve.knots()) os << Shortest(k.pwm_us) << ',' << Shortest(k.bpf_hz) << '\n';
  }
  {
    std::ofstream os(out.table);
    if (!os) throw IoError("cannot write " + out.table.string());
    os << "pwm_us,bpf_hz\n";
    for (double pwm = std::ceil(curve.min_pwm() / 10) * 10; pwm <= curve.max_pwm(); pwm += 10)
      os << Shortest(pwm) << ',' << Shortest(curve.ToBpf(pwm)) << '\n';
  }
  spdlog::info("calibration: {} knots over {}-{} us", curve.knots().size(), curve.min_pwm(),
               curve.max_pwm());
  return out;
}

}  // namespace bpfdet::cli

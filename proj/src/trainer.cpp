// src/trainer.cpp

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

#include "bpfdet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "bpfdet/error.hpp"
#include "bpfdet/eval.hpp"

namespace bpfdet {

using nn::Mat;
using json = nlohmann::json;

void TrainConfig::Validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (patience < 0) throw InvalidArgument("patience must be >= 0");
  loss.Validate();
}

namespace {

struct Batch {
  std::vector<Mat<float>> inputs;
  Mat<float> label_bpf, label_act;
  int frames = 0;
};

Batch MakeBatch(std::span<const TrainingSample> samples, std::span<const std::size_t> idx,
                int bins) {
  Batch b;
  b.frames = static_cast<int>(samples[idx[0]].features.frames());
  const Eigen::Index rows = static_cast<Eigen::Index>(idx.size()) * b.frames;
  b.label_bpf.resize(rows, 2);
  b.label_act.resize(rows, 1);
  Eigen::Index r = 0;
  for (std::size_t i : idx) {
    const TrainingSample& s = samples[i];
    if (static_cast<int>(s.features.frames()) != b.frames || s.labels.size() != s.features.frames())
      throw InvalidArgument("training samples must share one frame count with aligned labels");
    b.inputs.push_back(Crnn<float>::ToInput(s.features, bins));
    for (std::size_t f = 0; f < s.labels.size(); ++f, ++r) {
      b.label_bpf(r, 0) = static_cast<float>(s.labels.bpf[f][0]);
      b.label_bpf(r, 1) = static_cast<float>(s.labels.bpf[f][1]);
      b.label_act(r, 0) = static_cast<float>(s.labels.activity[f]);
    }
  }
  return b;
}

BpfTrack ToTrack(const CrnnOutput<float>& out, Eigen::Index row0, int frames) {
  BpfTrack t;
  t.Resize(frames);
  for (int f = 0; f < frames; ++f) {
    double a = out.bpf(row0 + f, 0), b = out.bpf(row0 + f, 1);
    if (a > b) std::swap(a, b);
    t.bpf[f] = {a, b};
    t.activity[f] = out.activity(row0 + f, 0);
  }
  return t;
}

struct SetMetrics {
  double loss = 0.0;
  std::optional<double> mae, mmae, accuracy;
};

SetMetrics Evaluate(TrainedModel& model, std::span<const TrainingSample> samples,
                    const TrainConfig& cfg) {
  SetMetrics m;
  BpfTrack all_pred;
  BpfLabelTrack all_label;
  double loss_sum = 0.0;
  std::size_t rows = 0;
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < samples.size(); start += bs) {
    std::vector<std::size_t> idx(std::min(bs, samples.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    Batch b = MakeBatch(samples, idx, model.config.bins);
    CrnnOutput<float> out = model.net.Forward(b.inputs, b.frames, false);
    const auto lv = ComputeLoss(out.bpf, out.activity, b.label_bpf, b.label_act, cfg.loss);
    loss_sum += lv.total * static_cast<double>(b.label_act.rows());
    rows += static_cast<std::size_t>(b.label_act.rows());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      BpfTrack t = ToTrack(out, static_cast<Eigen::Index>(k) * b.frames, b.frames);
      const BpfLabelTrack& l = samples[idx[k]].labels;
      all_pred.bpf.insert(all_pred.bpf.end(), t.bpf.begin(), t.bpf.end());
      all_pred.activity.insert(all_pred.activity.end(), t.activity.begin(), t.activity.end());
      all_label.bpf.insert(all_label.bpf.end(), l.bpf.begin(), l.bpf.end());
      all_label.activity.insert(all_label.activity.end(), l.activity.begin(), l.activity.end());
    }
  }
  all_pred.single_source.assign(all_pred.bpf.size(), 0);
  all_pred.distance_m.assign(all_pred.bpf.size(), std::nullopt);
  all_label.distance_m.assign(all_label.bpf.size(), std::nullopt);
  m.loss = rows ? loss_sum / static_cast<double>(rows) : 0.0;
  const BpfErrors e = ComputeBpfErrors(all_pred, all_label, cfg.activity_threshold);
  m.mae = e.mae_hz;
  m.mmae = e.mmae_hz;
  if (!all_pred.bpf.empty())
    m.accuracy = ComputeActivityMetrics(all_pred, all_label, cfg.activity_threshold).accuracy;
  return m;
}

json OptJson(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json EpochJson(const EpochStats& s) {
  return {{"epoch", s.epoch},
          {"train_loss", s.train_loss},
          {"train_mae_hz", OptJson(s.train_mae_hz)},
          {"train_accuracy", OptJson(s.train_accuracy)},
          {"valid_loss", OptJson(s.valid_loss)},
          {"valid_mae_hz", OptJson(s.valid_mae_hz)},
          {"valid_mmae_hz", OptJson(s.valid_mmae_hz)},
          {"valid_accuracy", OptJson(s.valid_accuracy)}};
}

std::vector<Mat<float>> Snapshot(TrainedModel& model) {
  std::vector<Mat<float>> out;
  for (auto& [name, m] : model.net.NamedTensors()) out.push_back(*m);
  return out;
}

void Restore(TrainedModel& model, const std::vector<Mat<float>>& snap) {
  auto tensors = model.net.NamedTensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) *tensors[i].second = snap[i];
}

}  // namespace

double EvaluateLoss(TrainedModel& model, std::span<const TrainingSample> samples,
                    const LossConfig& loss) {
  if (samples.empty()) throw InvalidArgument("empty sample set");
  TrainConfig cfg;
  cfg.loss = loss;
  return Evaluate(model, samples, cfg).loss;
}

std::vector<BpfTrack> PredictSamples(TrainedModel& model, std::span<const TrainingSample> samples) {
  std::vector<BpfTrack> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::size_t idx[1] = {i};
    Batch b = MakeBatch(samples, idx, model.config.bins);
    out.push_back(ToTrack(model.net.Forward(b.inputs, b.frames, false), 0, b.frames));
  }
  return out;
}

TrainResult Train(TrainedModel& model, std::span<const TrainingSample> train,
                  std::span<const TrainingSample> valid, const TrainConfig& cfg,
                  const EpochCallback& callback) {
  cfg.Validate();
  if (train.empty()) throw InvalidArgument("empty training set");
  model.net.Init(cfg.seed);
  model.net.SetDropoutSeed(cfg.seed + 1);

  std::ofstream log;
  if (cfg.log_path) {
    log.open(*cfg.log_path);
    if (!log) throw IoError("cannot write training log " + cfg.log_path->string());
  }

  TrainResult result;
  std::optional<double> best_score;
  std::vector<Mat<float>> best;
  int since_best = 0;

  // Returns false when training should stop.
  auto record = [&](EpochStats s, const std::optional<SetMetrics>& train_eval) {
    if (train_eval) {
      s.train_mae_hz = train_eval->mae;
      s.train_accuracy = train_eval->accuracy;
    }
    bool keep_going = true;
    if (!valid.empty()) {
      const SetMetrics v = Evaluate(model, valid, cfg);
      s.valid_loss = v.loss;
      s.valid_mae_hz = v.mae;
      s.valid_mmae_hz = v.mmae;
      s.valid_accuracy = v.accuracy;
      const std::optional<double> score = v.mmae ? v.mmae : std::optional<double>(v.loss);
      if (!best_score || *score < *best_score) {
        best_score = score;
        best = Snapshot(model);
        result.best_epoch = s.epoch;
        since_best = 0;
      } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
        result.stopped_early = true;
        keep_going = false;
      }
    } else {
      result.best_epoch = s.epoch;
    }
    if (log) log << EpochJson(s).dump() << '\n' << std::flush;
    result.log.push_back(s);
    if (callback && !callback(s)) {
      result.stopped_early = true;
      keep_going = false;
    }
    return keep_going;
  };

  {
    const SetMetrics m0 = Evaluate(model, train, cfg);
    EpochStats s;
    s.epoch = 0;
    s.train_loss = m0.loss;
    if (!record(s, m0) || cfg.epochs == 0) {
      if (!best.empty()) Restore(model, best);
      return result;
    }
  }

  nn::Adam<float> opt(model.net.Params(), cfg.learning_rate);
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t rows = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      Batch b = MakeBatch(train, std::span(order).subspan(start, n), model.config.bins);
      opt.ZeroGrad();
      CrnnOutput<float> out = model.net.Forward(b.inputs, b.frames, true);
      const auto lv = ComputeLoss(out.bpf, out.activity, b.label_bpf, b.label_act, cfg.loss);
      if (!std::isfinite(lv.total))
        throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                           ": non-finite loss (mse " + std::to_string(lv.mse) + ", bce " +
                           std::to_string(lv.bce) + ")");
      model.net.Backward(lv.grad_bpf, lv.grad_activity);
      opt.Step();
      loss_sum += lv.total * static_cast<double>(b.label_act.rows());
      rows += static_cast<std::size_t>(b.label_act.rows());
    }
    EpochStats s;
    s.epoch = epoch;
    s.train_loss = loss_sum / static_cast<double>(rows);
    std::optional<SetMetrics> te;
    if (cfg.train_metrics) te = Evaluate(model, train, cfg);
    if (!record(s, te)) break;
  }
  if (!best.empty()) Restore(model, best);
  return result;
}

BpfTrack Predict(TrainedModel& model, const AudioSegment& audio, double activity_threshold) {
  ValidateSegment(audio);
  const FeatureBlock block = Standardize(DefaultExtractor().Raw(audio), model.norm);
  const std::size_t n = block.frames();
  std::vector<std::size_t> starts;
  const std::size_t win = std::min<std::size_t>(kSegmentFrames, n);
  for (std::size_t s = 0; s + win <= n; s += kSegmentHop) starts.push_back(s);
  if (starts.back() + win < n) starts.push_back(n - win);

  std::vector<std::array<double, 2>> bpf_sum(n, {0.0, 0.0});
  std::vector<double> act_sum(n, 0.0);
  std::vector<int> count(n, 0);
  for (std::size_t s : starts) {
    std::vector<Mat<float>> in{Crnn<float>::ToInput(block.Frames(s, win), model.config.bins)};
    const CrnnOutput<float> out = model.net.Forward(in, static_cast<int>(win), false);
    for (std::size_t f = 0; f < win; ++f) {
      bpf_sum[s + f][0] += out.bpf(f, 0);
      bpf_sum[s + f][1] += out.bpf(f, 1);
      act_sum[s + f] += out.activity(f, 0);
      ++count[s + f];
    }
  }
  BpfTrack track;
  track.Resize(n);
  for (std::size_t f = 0; f < n; ++f) {
    double a = bpf_sum[f][0] / count[f], b = bpf_sum[f][1] / count[f];
    if (a > b) std::swap(a, b);
    track.activity[f] = act_sum[f] / count[f];
    track.bpf[f] = track.activity[f] < activity_threshold ? std::array<double, 2>{0.0, 0.0}
                                                          : std::array<double, 2>{a, b};
  }
  return track;
}

// ---- checkpoint -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'B', 'P', 'F', 'C', 'K', 'P', 'T', '1'};
constexpr int kFormatVersion = 1;

json ConfigJson(const ModelConfig& c) {
  return {{"kernel_widths", c.kernel_widths}, {"conv1_channels", c.conv1_channels},
          {"conv2_channels", c.conv2_channels}, {"gru_hidden", c.gru_hidden},
          {"gru_layers", c.gru_layers}, {"dropout", c.dropout},
          {"fc_hidden", c.fc_hidden}, {"bins", c.bins},
          {"bpf_scale_hz", c.bpf_scale_hz}, {"bpf_bias_init", c.bpf_bias_init}};
}

ModelConfig ConfigFromJson(const json& j) {
  ModelConfig c;
  c.kernel_widths = j.at("kernel_widths").get<std::array<int, 4>>();
  c.conv1_channels = j.at("conv1_channels").get<int>();
  c.conv2_channels = j.at("conv2_channels").get<int>();
  c.gru_hidden = j.at("gru_hidden").get<int>();
  c.gru_layers = j.at("gru_layers").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.fc_hidden = j.at("fc_hidden").get<int>();
  c.bins = j.at("bins").get<int>();
  c.bpf_scale_hz = j.at("bpf_scale_hz").get<double>();
  c.bpf_bias_init = j.at("bpf_bias_init").get<double>();
  c.Validate();
  return c;
}

}  // namespace

void SaveCheckpoint(const std::filesystem::path& path, TrainedModel& model) {
  auto tensors = model.net.NamedTensors();
  json header;
  header["format_version"] = kFormatVersion;
  header["config"] = ConfigJson(model.config);
  header["norm"] = {{"mean", {model.norm.mean[0], model.norm.mean[1]}},
                    {"stddev", {model.norm.stddev[0], model.norm.stddev[1]}}};
  json list = json::array();
  for (auto& [name, m] : tensors) list.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  header["tensors"] = list;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto& [name, m] : tensors)
    out.write(reinterpret_cast<const char*>(m->data()),
              static_cast<std::streamsize>(m->size() * sizeof(float)));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

TrainedModel LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weights file " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint file: " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 26)) throw IoError("corrupt checkpoint header: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint header: " + path.string());

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header: " + std::string(e.what()));
  }
  if (header.value("format_version", 0) != kFormatVersion)
    throw IoError("unsupported checkpoint version in " + path.string());

  NormStats norm;
  ModelConfig cfg;
  try {
    cfg = ConfigFromJson(header.at("config"));
    for (int c = 0; c < 2; ++c) {
      norm.mean[c] = header.at("norm").at("mean").at(c).get<double>();
      norm.stddev[c] = header.at("norm").at("stddev").at(c).get<double>();
    }
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header: " + std::string(e.what()));
  }
  TrainedModel model(cfg, norm);
  auto tensors = model.net.NamedTensors();
  const json& list = header.at("tensors");
  if (list.size() != tensors.size()) throw IoError("checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Mat<float>& m = *tensors[i].second;
    if (list[i].at("name") != tensors[i].first || list[i].at("rows") != m.rows() ||
        list[i].at("cols") != m.cols())
      throw IoError("checkpoint tensor mismatch at " + tensors[i].first);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint data: " + path.string());
  }
  return model;
}

}  // namespace bpfdet

// tools/run_config.cpp

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

#include "run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "bpfdet/error.hpp"

namespace bpfdet::cli {

using nlohmann::json;

EstimatorKind ParseEstimator(const std::string& name) {
  if (name == "oracle") return EstimatorKind::kOracle;
  if (name == "crnn") return EstimatorKind::kCrnn;
  throw InvalidArgument("unknown estimator '" + name + "' (expected oracle or crnn)");
}

namespace {

// Checks that `j` is an object holding only `allowed` keys, then reads them.
class Section {
 public:
  Section(const json& j, std::string name, std::set<std::string> allowed)
      : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw InvalidArgument("config: '" + name_ + "' must be an object");
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!allowed.count(it.key()))
        throw InvalidArgument("config: unknown key '" + it.key() + "' in '" + name_ + "'");
  }

  template <typename T>
  Section& Get(const char* key, T& out) {
    if (!j_.contains(key)) return *this;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw InvalidArgument("config: bad value for '" + name_ + "." + key + "'");
    }
    return *this;
  }

 private:
  const json& j_;
  std::string name_;
};

}  // namespace

RunConfig ApplyConfigJson(const json& doc, RunConfig cfg) {
  const std::set<std::string> top = {"model",   "train",  "assemble",          "detector",
                                     "weights", "oracle", "activity_threshold"};
  Section root(doc, "config", top);
  root.Get("activity_threshold", cfg.activity_threshold);

  if (doc.contains("model")) {
    auto& m = cfg.model;
    Section(doc["model"], "model",
            {"kernel_widths", "conv1_channels", "conv2_channels", "gru_hidden", "gru_layers",
             "dropout", "fc_hidden", "bpf_scale_hz", "bpf_bias_init"})
        .Get("kernel_widths", m.kernel_widths)
        .Get("conv1_channels", m.conv1_channels)
        .Get("conv2_channels", m.conv2_channels)
        .Get("gru_hidden", m.gru_hidden)
        .Get("gru_layers", m.gru_layers)
        .Get("dropout", m.dropout)
        .Get("fc_hidden", m.fc_hidden)
        .Get("bpf_scale_hz", m.bpf_scale_hz)
        .Get("bpf_bias_init", m.bpf_bias_init);
  }
  if (doc.contains("train")) {
    auto& t = cfg.train;
    Section(doc["train"], "train",
            {"learning_rate", "batch_size", "epochs", "patience", "alpha", "beta",
             "train_metrics"})
        .Get("learning_rate", t.learning_rate)
        .Get("batch_size", t.batch_size)
        .Get("epochs", t.epochs)
        .Get("patience", t.patience)
        .Get("alpha", t.loss.alpha)
        .Get("beta", t.loss.beta)
        .Get("train_metrics", t.train_metrics);
  }
  if (doc.contains("assemble")) {
    auto& a = cfg.assemble;
    Section(doc["assemble"], "assemble", {"segment_frames", "augmented_copies", "max_distance_m"})
        .Get("segment_frames", a.segment_frames)
        .Get("augmented_copies", a.augmented_copies)
        .Get("max_distance_m", a.max_distance_m);
  }
  if (doc.contains("detector")) {
    auto& d = cfg.detector;
    Section(doc["detector"], "detector", {"window_sizes", "threshold", "min_event_gap_s"})
        .Get("window_sizes", d.window_sizes)
        .Get("threshold", d.threshold)
        .Get("min_event_gap_s", d.min_event_gap_s);
  }
  if (doc.contains("weights")) {
    auto& w = cfg.weights;
    Section(doc["weights"], "weights",
            {"chi_squared", "jensen_shannon", "intersection", "mean_diff"})
        .Get("chi_squared", w.chi_squared)
        .Get("jensen_shannon", w.jensen_shannon)
        .Get("intersection", w.intersection)
        .Get("mean_diff", w.mean_diff);
  }
  if (doc.contains("oracle")) {
    auto& o = cfg.oracle;
    Section(doc["oracle"], "oracle",
            {"f_min", "f_max", "grid_step", "num_harmonics", "min_separation",
             "activity_ratio_threshold", "pair_min_gain", "second_peak_ratio", "fft_size",
             "use_envelope", "envelope_band_lo", "envelope_band_hi"})
        .Get("f_min", o.f_min)
        .Get("f_max", o.f_max)
        .Get("grid_step", o.grid_step)
        .Get("num_harmonics", o.num_harmonics)
        .Get("min_separation", o.min_separation)
        .Get("activity_ratio_threshold", o.activity_ratio_threshold)
        .Get("pair_min_gain", o.pair_min_gain)
        .Get("second_peak_ratio", o.second_peak_ratio)
        .Get("fft_size", o.fft_size)
        .Get("use_envelope", o.use_envelope)
        .Get("envelope_band_lo", o.envelope_band_lo)
        .Get("envelope_band_hi", o.envelope_band_hi);
  }
  return cfg;
}

RunConfig LoadConfigFile(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json doc;
  try {
    doc = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  return ApplyConfigJson(doc, std::move(base));
}

void RunConfig::Validate() const {
  if (threads < 1) throw InvalidArgument("--threads must be >= 1");
  if (!(activity_threshold > 0 && activity_threshold < 1))
    throw InvalidArgument("activity_threshold must be in (0, 1)");
  if (assemble.segment_frames < 1) throw InvalidArgument("assemble.segment_frames must be >= 1");
  if (assemble.augmented_copies < 0) throw InvalidArgument("assemble.augmented_copies must be >= 0");
  if (!(assemble.max_distance_m > 0)) throw InvalidArgument("assemble.max_distance_m must be > 0");
  model.Validate();
  train.Validate();
  detector.Validate();
  oracle.Validate();
}

}  // namespace bpfdet::cli

// tools/bpfdet.cpp

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

// bpfdet: command-line front end for synthesis, feature extraction,
// training, BPF estimation, delivery detection, evaluation and calibration.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "bpfdet/error.hpp"
#include "commands.hpp"
#include "run_config.hpp"

namespace {

using namespace bpfdet;
using namespace bpfdet::cli;

constexpr int kExitConfig = static_cast<int>(ErrorKind::kInvalidArgument);
constexpr int kExitIo = static_cast<int>(ErrorKind::kIo);

std::optional<path> OptionalPath(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return path(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drone BPF estimation and payload-delivery detection"};
  app.require_subcommand(1);
  app.fallthrough();

  RunConfig cfg;
  std::string output_dir = ".", config_file, estimator = "oracle";
  auto* seed_opt = app.add_option("--seed", cfg.seed, "Random seed for every stochastic step");
  app.add_option("--threads", cfg.threads, "Worker threads for batch stages")->check(CLI::PositiveNumber);
  app.add_option("--output-dir", output_dir, "Directory for all artifacts")
      ->envname("BPFDET_OUTPUT_DIR");
  app.add_option("--log-level", cfg.log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
  app.add_option("--config", config_file, "JSON file with model/train/detector/oracle settings");
  app.add_option("--estimator", estimator, "BPF estimator")->check(CLI::IsMember({"oracle", "crnn"}));
  app.add_option("--channel", cfg.channel, "WAV channel to read; -1 averages all channels");

  std::vector<std::string> specs;
  std::string role = "test";
  auto* synth = app.add_subcommand("synth", "Render scene specs to WAV + labels + manifest entry");
  synth->add_option("specs", specs, "Scene spec JSON files")->required();
  synth->add_option("--role", role, "Manifest role")->check(CLI::IsMember({"train", "valid", "test"}));

  std::string input, weights, split = "test";
  std::optional<double> threshold;
  auto* features = app.add_subcommand("features", "Write log-mel and power-cepstrum CSVs");
  features->add_option("wav", input, "Input WAV")->required();

  auto* train = app.add_subcommand("train", "Train the CRNN on a manifest");
  train->add_option("manifest", input, "Recording manifest")->required();

  auto* predict = app.add_subcommand("predict", "Estimate the per-frame BPF track of a WAV");
  predict->add_option("wav", input, "Input WAV")->required();
  predict->add_option("--weights", weights, "CRNN checkpoint (crnn estimator)");

  auto* detect = app.add_subcommand("detect", "Score delivery events from a WAV or a track CSV");
  detect->add_option("input", input, "WAV, or track CSV from predict")->required();
  detect->add_option("--weights", weights, "CRNN checkpoint (crnn estimator)");
  detect->add_option("--threshold", threshold, "Event threshold on the delivery score");

  auto* eval = app.add_subcommand("eval", "Evaluate an estimator over a manifest split");
  eval->add_option("manifest", input, "Recording manifest")->required();
  eval->add_option("--weights", weights, "CRNN checkpoint (crnn estimator)");
  eval->add_option("--split", split, "train, valid, test or all")
      ->check(CLI::IsMember({"train", "valid", "test", "all"}));

  auto* calibrate = app.add_subcommand("calibrate", "Fit the PWM to BPF curve from measurements");
  calibrate->add_option("measurements", input, "CSV of pwm_us,bpf_hz rows")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  auto logger = spdlog::stderr_color_mt("bpfdet");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(cfg.log_level));

  try {
    cfg.output_dir = output_dir;
    cfg.seed_given = seed_opt->count() > 0;
    cfg.estimator = ParseEstimator(estimator);
    if (!config_file.empty()) cfg = LoadConfigFile(config_file, cfg);
    if (threshold) cfg.detector.threshold = *threshold;
    cfg.Validate();

    if (synth->parsed()) {
      std::vector<path> files(specs.begin(), specs.end());
      for (const auto& out : CmdSynth(cfg, files, ParseRole(role)))
        std::cout << out.wav.string() << '\n' << out.labels.string() << '\n';
      std::cout << (cfg.output_dir / "manifest.json").string() << '\n';
    } else if (features->parsed()) {
      const auto out = CmdFeatures(cfg, input);
      std::cout << out.mel.string() << '\n' << out.cepstrum.string() << '\n';
    } else if (train->parsed()) {
      std::cout << CmdTrain(cfg, input).string() << '\n';
    } else if (predict->parsed()) {
      std::cout << CmdPredict(cfg, input, OptionalPath(weights)).string() << '\n';
    } else if (detect->parsed()) {
      const auto out = CmdDetect(cfg, input, OptionalPath(weights));
      std::cout << out.scores.string() << '\n' << out.events.string() << '\n';
    } else if (eval->parsed()) {
      CmdEval(cfg, input, OptionalPath(weights), split);
      std::cout << (cfg.output_dir / "eval_report.json").string() << '\n';
    } else if (calibrate->parsed()) {
      const auto out = CmdCalibrate(cfg, input);
      std::cout << out.knots.string() << '\n' << out.table.string() << '\n';
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}

// include/bpfdet/crnn.hpp

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
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bpfdet/features.hpp"
#include "bpfdet/nn.hpp"

namespace bpfdet {

struct ModelConfig {
  std::array<int, 4> kernel_widths{33, 21, 11, 3};
  int conv1_channels = 16;
  int conv2_channels = 32;
  int gru_hidden = 128;
  int gru_layers = 3;
  double dropout = 0.4;
  int fc_hidden = 128;
  int bins = kNumMelBands;
  // BPF head is relu(bpf_scale_hz * z); the FC bias starts at bpf_bias_init
  // so untrained outputs sit in the BPF range instead of near 0 Hz.
  double bpf_scale_hz = 100.0;
  double bpf_bias_init = 2.0;

  int concat_channels() const { return 4 * conv2_channels; }
  int flat_width() const { return concat_channels() * bins; }
  void Validate() const;
};

struct LossConfig {
  double alpha = 1.0;
  double beta = 1.0;
  static constexpr double kEps = 1e-7;
  void Validate() const;
};

// Rows are sample-major: row = sample * frames + frame.
template <typename T>
struct CrnnOutput {
  nn::Mat<T> bpf;       // rows x 2, Hz
  nn::Mat<T> activity;  // rows x 1, probability
};

template <typename T>
struct LossValue {
  double total = 0, mse = 0, bce = 0;
  nn::Mat<T> grad_bpf;
  nn::Mat<T> grad_activity;
};

// alpha * mean squared BPF error + beta * mean binary cross-entropy, with the
// activity prediction clipped to [eps, 1 - eps]. Gradients are w.r.t. the
// predictions.
template <typename T>
LossValue<T> ComputeLoss(const nn::Mat<T>& pred_bpf, const nn::Mat<T>& pred_activity,
                         const nn::Mat<T>& label_bpf, const nn::Mat<T>& label_activity,
                         const LossConfig& cfg);

template <typename T>
class Crnn {
 public:
  explicit Crnn(const ModelConfig& cfg = {});

  void Init(std::uint64_t seed);
  void SetDropoutSeed(std::uint64_t seed) { dropout_rng_.seed(seed); }

  // (frames * bins) x 2 pixel-major input; throws on a bad bins/channel shape.
  static nn::Mat<T> ToInput(const FeatureBlock& block, int bins = kNumMelBands);

  // All inputs must share the same frame count.
  CrnnOutput<T> Forward(const std::vector<nn::Mat<T>>& inputs, int frames, bool train);
  // Gradients w.r.t. the outputs of the last Forward (which must be train mode).
  void Backward(const nn::Mat<T>& grad_bpf, const nn::Mat<T>& grad_activity);

  std::vector<nn::Param<T>*> Params();
  // Parameters plus batch-norm running statistics, for checkpoints.
  std::vector<std::pair<std::string, nn::Mat<T>*>> NamedTensors();
  void ZeroGrad();
  std::size_t NumParameters();

  const ModelConfig& config() const { return cfg_; }
  // Shape of the last concatenated conv output and its per-frame flattening.
  int last_concat_channels() const { return last_concat_channels_; }
  Eigen::Index last_flat_width() const { return last_flat_width_; }

 private:
  struct ConvBlock {
    nn::Conv2d<T> conv1, conv2;
    nn::BatchNorm<T> bn1, bn2;
    std::vector<nn::Mat<T>> act1, act2;  // post-ReLU, for the ReLU masks
  };
  struct Branch {
    std::vector<nn::BiGru<T>> grus;
    std::vector<nn::Dropout<T>> gru_dropout;
    nn::Linear<T> fc1, fc2;
    nn::Dropout<T> fc_dropout;
    nn::Mat<T> fc1_act, head;
  };

  nn::Mat<T> RunBranch(Branch& br, const nn::Mat<T>& flat, bool train);
  nn::Mat<T> BackBranch(Branch& br, const nn::Mat<T>& grad_head);
  void InitBranch(Branch& br, const std::string& name, int outputs);

  ModelConfig cfg_;
  std::array<ConvBlock, 4> blocks_;
  Branch bpf_branch_, act_branch_;
  nn::Rng dropout_rng_;
  int batch_ = 0, frames_ = 0;
  int last_concat_channels_ = 0;
  Eigen::Index last_flat_width_ = 0;
};

}  // namespace bpfdet

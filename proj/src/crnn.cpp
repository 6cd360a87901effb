// src/crnn.cpp

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

#include "bpfdet/crnn.hpp"

#include <algorithm>
#include <cmath>

#include "bpfdet/error.hpp"

namespace bpfdet {

using nn::Mat;

void ModelConfig::Validate() const {
  for (int k : kernel_widths)
    if (k <= 0 || k % 2 == 0) throw InvalidArgument("kernel widths must be positive and odd");
  if (conv1_channels <= 0 || conv2_channels <= 0 || gru_hidden <= 0 || gru_layers <= 0 ||
      fc_hidden <= 0 || bins <= 0)
    throw InvalidArgument("model dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout must be in [0, 1)");
  if (!(bpf_scale_hz > 0.0)) throw InvalidArgument("bpf_scale_hz must be positive");
}

void LossConfig::Validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw InvalidArgument("loss weights must be >= 0");
}

template <typename T>
LossValue<T> ComputeLoss(const Mat<T>& pred_bpf, const Mat<T>& pred_activity,
                         const Mat<T>& label_bpf, const Mat<T>& label_activity,
                         const LossConfig& cfg) {
  if (pred_bpf.rows() != label_bpf.rows() || pred_bpf.cols() != label_bpf.cols())
    throw InvalidArgument("loss: bpf prediction/label shape mismatch");
  if (pred_activity.rows() != label_activity.rows() ||
      pred_activity.cols() != label_activity.cols())
    throw InvalidArgument("loss: activity prediction/label shape mismatch");
  if (pred_bpf.rows() != pred_activity.rows())
    throw InvalidArgument("loss: bpf and activity frame counts differ");
  if (pred_bpf.size() == 0 || pred_activity.size() == 0)
    throw InvalidArgument("loss: empty input");

  LossValue<T> out;
  const double nb = static_cast<double>(pred_bpf.size());
  out.grad_bpf.resize(pred_bpf.rows(), pred_bpf.cols());
  double sq = 0.0;
  for (Eigen::Index i = 0; i < pred_bpf.size(); ++i) {
    const double d = static_cast<double>(pred_bpf.data()[i]) - label_bpf.data()[i];
    sq += d * d;
    out.grad_bpf.data()[i] = static_cast<T>(2.0 * cfg.alpha * d / nb);
  }
  out.mse = sq / nb;

  const double na = static_cast<double>(pred_activity.size());
  constexpr double eps = LossConfig::kEps;
  out.grad_activity.resize(pred_activity.rows(), pred_activity.cols());
  double bce = 0.0;
  for (Eigen::Index i = 0; i < pred_activity.size(); ++i) {
    const double raw = pred_activity.data()[i];
    const double p = std::clamp(raw, eps, 1.0 - eps);
    const double y = label_activity.data()[i];
    bce -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    const bool clipped = raw < eps || raw > 1.0 - eps;
    out.grad_activity.data()[i] =
        clipped ? T(0) : static_cast<T>(cfg.beta * (-y / p + (1.0 - y) / (1.0 - p)) / na);
  }
  out.bce = bce / na;
  out.total = cfg.alpha * out.mse + cfg.beta * out.bce;
  return out;
}

template <typename T>
Crnn<T>::Crnn(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.Validate();
  for (int k = 0; k < 4; ++k) {
    const std::string p = "block" + std::to_string(k);
    blocks_[k].conv1 =
        nn::Conv2d<T>(p + ".conv1", 2, cfg_.conv1_channels, cfg_.kernel_widths[k], cfg_.bins);
    blocks_[k].bn1 = nn::BatchNorm<T>(p + ".bn1", cfg_.conv1_channels);
    blocks_[k].conv2 =
        nn::Conv2d<T>(p + ".conv2", cfg_.conv1_channels, cfg_.conv2_channels, 3, cfg_.bins);
    blocks_[k].bn2 = nn::BatchNorm<T>(p + ".bn2", cfg_.conv2_channels);
  }
  InitBranch(bpf_branch_, "bpf", 2);
  InitBranch(act_branch_, "activity", 1);
}

template <typename T>
void Crnn<T>::InitBranch(Branch& br, const std::string& name, int outputs) {
  br.grus.clear();
  br.gru_dropout.clear();
  for (int l = 0; l < cfg_.gru_layers; ++l) {
    const int in = l == 0 ? cfg_.flat_width() : 2 * cfg_.gru_hidden;
    br.grus.emplace_back(name + ".gru" + std::to_string(l), in, cfg_.gru_hidden);
    if (l + 1 < cfg_.gru_layers) br.gru_dropout.emplace_back(cfg_.dropout);
  }
  br.fc1 = nn::Linear<T>(name + ".fc1", 2 * cfg_.gru_hidden, cfg_.fc_hidden);
  br.fc2 = nn::Linear<T>(name + ".fc2", cfg_.fc_hidden, outputs);
  br.fc_dropout = nn::Dropout<T>(cfg_.dropout);
}

template <typename T>
void Crnn<T>::Init(std::uint64_t seed) {
  nn::Rng rng(seed);
  for (auto& b : blocks_) {
    b.conv1.Init(rng);
    b.conv2.Init(rng);
  }
  for (Branch* br : {&bpf_branch_, &act_branch_}) {
    for (auto& g : br->grus) g.Init(rng);
    br->fc1.Init(rng);
    br->fc2.Init(rng);
  }
  bpf_branch_.fc2.bias().value.setConstant(static_cast<T>(cfg_.bpf_bias_init));
  dropout_rng_.seed(seed ^ 0x9e3779b97f4a7c15ULL);
}

template <typename T>
Mat<T> Crnn<T>::ToInput(const FeatureBlock& block, int bins) {
  if (block.mel.cols() != bins)
    throw InvalidArgument("input bins dimension is " + std::to_string(block.mel.cols()) +
                          ", expected " + std::to_string(bins));
  if (block.cepstrum.cols() != bins)
    throw InvalidArgument("input bins dimension of channel 1 is " +
                          std::to_string(block.cepstrum.cols()) + ", expected " +
                          std::to_string(bins));
  if (block.cepstrum.rows() != block.mel.rows())
    throw InvalidArgument("input frames dimension differs between channels");
  if (block.mel.rows() < 1) throw InvalidArgument("input frames dimension is 0");
  const Eigen::Index frames = block.mel.rows();
  Mat<T> x(frames * bins, 2);
  for (Eigen::Index f = 0; f < frames; ++f)
    for (int b = 0; b < bins; ++b) {
      x(f * bins + b, 0) = static_cast<T>(block.mel(f, b));
      x(f * bins + b, 1) = static_cast<T>(block.cepstrum(f, b));
    }
  return x;
}

template <typename T>
Mat<T> Crnn<T>::RunBranch(Branch& br, const Mat<T>& flat, bool train) {
  Mat<T> h = flat;
  for (std::size_t l = 0; l < br.grus.size(); ++l) {
    h = br.grus[l].Forward(h, batch_, frames_);
    if (l < br.gru_dropout.size()) h = br.gru_dropout[l].Forward(h, train, dropout_rng_);
  }
  br.fc1_act = br.fc1.Forward(h).cwiseMax(T(0));
  h = br.fc_dropout.Forward(br.fc1_act, train, dropout_rng_);
  br.head = br.fc2.Forward(h);
  return br.head;
}

template <typename T>
CrnnOutput<T> Crnn<T>::Forward(const std::vector<Mat<T>>& inputs, int frames, bool train) {
  if (inputs.empty()) throw InvalidArgument("empty batch");
  if (frames < 1) throw InvalidArgument("input frames dimension must be >= 1");
  const int bins = cfg_.bins;
  for (const auto& x : inputs) {
    if (x.cols() != 2)
      throw InvalidArgument("input channels dimension is " + std::to_string(x.cols()) +
                            ", expected 2");
    if (x.rows() != static_cast<Eigen::Index>(frames) * bins)
      throw InvalidArgument("input frames x bins dimension is " + std::to_string(x.rows()) +
                            ", expected " + std::to_string(frames * bins));
  }
  batch_ = static_cast<int>(inputs.size());
  frames_ = frames;

  const int c2 = cfg_.conv2_channels;
  const Eigen::Index width = static_cast<Eigen::Index>(4) * c2 * bins;
  Mat<T> flat(static_cast<Eigen::Index>(batch_) * frames, width);
  int channels = 0;
  for (int k = 0; k < 4; ++k) {
    ConvBlock& blk = blocks_[k];
    auto a = blk.conv1.Forward(inputs);
    a = blk.bn1.Forward(a, train);
    nn::ReluInPlace(a);
    blk.act1 = a;
    a = blk.conv2.Forward(a);
    a = blk.bn2.Forward(a, train);
    nn::ReluInPlace(a);
    blk.act2 = a;
    channels += static_cast<int>(a[0].cols());
    for (int s = 0; s < batch_; ++s) {
      const Mat<T>& o = a[s];
      for (int f = 0; f < frames; ++f) {
        T* dst = flat.data() + (static_cast<Eigen::Index>(s) * frames + f) * width +
                 static_cast<Eigen::Index>(k) * c2 * bins;
        for (int b = 0; b < bins; ++b) {
          const T* src = o.data() + (static_cast<Eigen::Index>(f) * bins + b) * c2;
          for (int c = 0; c < c2; ++c) dst[c * bins + b] = src[c];
        }
      }
    }
  }
  last_concat_channels_ = channels;
  last_flat_width_ = width;

  CrnnOutput<T> out;
  const Mat<T> zb = RunBranch(bpf_branch_, flat, train);
  out.bpf = (zb * static_cast<T>(cfg_.bpf_scale_hz)).cwiseMax(T(0));
  const Mat<T> za = RunBranch(act_branch_, flat, train);
  out.activity = za.unaryExpr([](T v) { return T(1) / (T(1) + std::exp(-v)); });
  return out;
}

template <typename T>
Mat<T> Crnn<T>::BackBranch(Branch& br, const Mat<T>& grad_head) {
  Mat<T> g = br.fc2.Backward(grad_head);
  g = br.fc_dropout.Backward(g);
  g = g.cwiseProduct((br.fc1_act.array() > T(0)).template cast<T>().matrix());
  g = br.fc1.Backward(g);
  for (int l = static_cast<int>(br.grus.size()) - 1; l >= 0; --l) {
    if (l < static_cast<int>(br.gru_dropout.size())) g = br.gru_dropout[l].Backward(g);
    g = br.grus[l].Backward(g, true);
  }
  return g;
}

template <typename T>
void Crnn<T>::Backward(const Mat<T>& grad_bpf, const Mat<T>& grad_activity) {
  const Mat<T>& zb = bpf_branch_.head;
  const Mat<T>& za = act_branch_.head;
  if (grad_bpf.rows() != zb.rows() || grad_bpf.cols() != zb.cols() ||
      grad_activity.rows() != za.rows() || grad_activity.cols() != za.cols())
    throw InvalidArgument("gradient shape does not match the last forward pass");
  const T scale = static_cast<T>(cfg_.bpf_scale_hz);
  Mat<T> gzb(zb.rows(), zb.cols());
  for (Eigen::Index i = 0; i < zb.size(); ++i)
    gzb.data()[i] = zb.data()[i] > T(0) ? grad_bpf.data()[i] * scale : T(0);
  Mat<T> gza(za.rows(), za.cols());
  for (Eigen::Index i = 0; i < za.size(); ++i) {
    const T p = T(1) / (T(1) + std::exp(-za.data()[i]));
    gza.data()[i] = grad_activity.data()[i] * p * (T(1) - p);
  }
  Mat<T> gflat = BackBranch(bpf_branch_, gzb);
  gflat += BackBranch(act_branch_, gza);

  const int bins = cfg_.bins;
  const int c2 = cfg_.conv2_channels;
  const Eigen::Index width = gflat.cols();
  for (int k = 0; k < 4; ++k) {
    ConvBlock& blk = blocks_[k];
    std::vector<Mat<T>> g(batch_);
    for (int s = 0; s < batch_; ++s) {
      g[s].resize(static_cast<Eigen::Index>(frames_) * bins, c2);
      const Mat<T>& act = blk.act2[s];
      for (int f = 0; f < frames_; ++f) {
        const T* src = gflat.data() + (static_cast<Eigen::Index>(s) * frames_ + f) * width +
                       static_cast<Eigen::Index>(k) * c2 * bins;
        for (int b = 0; b < bins; ++b) {
          const Eigen::Index row = static_cast<Eigen::Index>(f) * bins + b;
          for (int c = 0; c < c2; ++c)
            g[s](row, c) = act(row, c) > T(0) ? src[c * bins + b] : T(0);
        }
      }
    }
    g = blk.bn2.Backward(g);
    g = blk.conv2.Backward(g, true);
    for (int s = 0; s < batch_; ++s)
      g[s] = g[s].cwiseProduct((blk.act1[s].array() > T(0)).template cast<T>().matrix());
    g = blk.bn1.Backward(g);
    blk.conv1.Backward(g, false);
  }
}

template <typename T>
std::vector<nn::Param<T>*> Crnn<T>::Params() {
  std::vector<nn::Param<T>*> out;
  auto add = [&out](std::vector<nn::Param<T>*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  for (auto& b : blocks_) {
    add(b.conv1.Params());
    add(b.bn1.Params());
    add(b.conv2.Params());
    add(b.bn2.Params());
  }
  for (Branch* br : {&bpf_branch_, &act_branch_}) {
    for (auto& g : br->grus) add(g.Params());
    add(br->fc1.Params());
    add(br->fc2.Params());
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Mat<T>*>> Crnn<T>::NamedTensors() {
  std::vector<std::pair<std::string, Mat<T>*>> out;
  for (auto* p : Params()) out.emplace_back(p->name, &p->value);
  for (int k = 0; k < 4; ++k) {
    const std::string p = "block" + std::to_string(k);
    out.emplace_back(p + ".bn1.running_mean", &blocks_[k].bn1.running_mean());
    out.emplace_back(p + ".bn1.running_var", &blocks_[k].bn1.running_var());
    out.emplace_back(p + ".bn2.running_mean", &blocks_[k].bn2.running_mean());
    out.emplace_back(p + ".bn2.running_var", &blocks_[k].bn2.running_var());
  }
  return out;
}

template <typename T>
void Crnn<T>::ZeroGrad() {
  for (auto* p : Params()) p->grad.setZero();
}

template <typename T>
std::size_t Crnn<T>::NumParameters() {
  std::size_t n = 0;
  for (auto* p : Params()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

template class Crnn<float>;
template class Crnn<double>;
template LossValue<float> ComputeLoss<float>(const Mat<float>&, const Mat<float>&,
                                             const Mat<float>&, const Mat<float>&,
                                             const LossConfig&);
template LossValue<double> ComputeLoss<double>(const Mat<double>&, const Mat<double>&,
                                               const Mat<double>&, const Mat<double>&,
                                               const LossConfig&);

}  // namespace bpfdet

// include/bpfdet/nn.hpp

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

// Minimal layers for the CRNN with explicit forward/backward passes.
// Activations are row-major matrices; feature maps are stored pixel-major
// (row = frame * bins + bin, column = channel).

#include <Eigen/Core>
#include <random>
#include <string>
#include <vector>

namespace bpfdet::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Param {
  std::string name;
  Mat<T> value;
  Mat<T> grad;

  void Init(std::string n, Eigen::Index rows, Eigen::Index cols) {
    name = std::move(n);
    value = Mat<T>::Zero(rows, cols);
    grad = Mat<T>::Zero(rows, cols);
  }
};

using Rng = std::mt19937_64;

template <typename T>
void UniformInit(Mat<T>& m, double bound, Rng& rng);

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_ch, int out_ch, int kernel_w, int bins);

  // Each input is (frames * bins) x in_ch.
  std::vector<Mat<T>> Forward(const std::vector<Mat<T>>& in);
  std::vector<Mat<T>> Backward(const std::vector<Mat<T>>& grad_out, bool need_input_grad);
  std::vector<Param<T>*> Params() { return {&weight_, &bias_}; }
  void Init(Rng& rng);

 private:
  Mat<T> Im2Col(const Mat<T>& in) const;
  void Col2ImAdd(const Mat<T>& cols, Mat<T>& out) const;

  int in_ch_ = 0, out_ch_ = 0, kernel_w_ = 0, bins_ = 0;
  Param<T> weight_, bias_;
  std::vector<Mat<T>> inputs_;
};

template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(const std::string& name, int channels);

  std::vector<Mat<T>> Forward(const std::vector<Mat<T>>& in, bool train);
  std::vector<Mat<T>> Backward(const std::vector<Mat<T>>& grad_out);
  std::vector<Param<T>*> Params() { return {&gamma_, &beta_}; }
  // Running statistics, saved alongside parameters.
  Mat<T>& running_mean() { return running_mean_; }
  Mat<T>& running_var() { return running_var_; }

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

 private:
  int channels_ = 0;
  Param<T> gamma_, beta_;
  Mat<T> running_mean_, running_var_;
  std::vector<Mat<T>> normalized_;
  Eigen::Matrix<T, 1, Eigen::Dynamic> inv_std_;
  Eigen::Index count_ = 0;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out);

  Mat<T> Forward(const Mat<T>& in);
  Mat<T> Backward(const Mat<T>& grad_out);
  std::vector<Param<T>*> Params() { return {&weight_, &bias_}; }
  void Init(Rng& rng);
  Param<T>& bias() { return bias_; }

 private:
  Param<T> weight_, bias_;
  Mat<T> input_;
};

// Bidirectional single-layer GRU (gate order r, z, n). Input rows are
// sample-major: row = sample * frames + frame. Output is [forward | backward].
template <typename T>
class BiGru {
 public:
  BiGru() = default;
  BiGru(const std::string& name, int input_dim, int hidden);

  Mat<T> Forward(const Mat<T>& in, int batch, int frames);
  Mat<T> Backward(const Mat<T>& grad_out, bool need_input_grad);
  std::vector<Param<T>*> Params();
  void Init(Rng& rng);

 private:
  struct Direction {
    Param<T> w_ih, w_hh, b_ih, b_hh;
    // Per-step caches, rows ordered as the input.
    Mat<T> r, z, n, hn, h_prev;
  };
  void RunDirection(Direction& d, const Mat<T>& in, bool reverse, Mat<T>& out, int col0);
  void BackDirection(Direction& d, const Mat<T>& grad_out, bool reverse, int col0,
                     Mat<T>& grad_gates);

  int input_dim_ = 0, hidden_ = 0, batch_ = 0, frames_ = 0;
  Direction dir_[2];
  Mat<T> input_;
};

template <typename T>
class Dropout {
 public:
  explicit Dropout(double p = 0.0) : p_(p) {}
  Mat<T> Forward(const Mat<T>& in, bool train, Rng& rng);
  Mat<T> Backward(const Mat<T>& grad_out) const;

 private:
  double p_;
  Mat<T> mask_;
  bool active_ = false;
};

template <typename T>
void ReluInPlace(std::vector<Mat<T>>& x);

// Adam over a parameter list.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Param<T>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void Step();
  void ZeroGrad();

 private:
  std::vector<Param<T>*> params_;
  std::vector<Mat<T>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
};

}  // namespace bpfdet::nn

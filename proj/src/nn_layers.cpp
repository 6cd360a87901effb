// src/nn_layers.cpp

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

#include <cmath>

#include "bpfdet/error.hpp"
#include "bpfdet/nn.hpp"

namespace bpfdet::nn {

template <typename T>
void UniformInit(Mat<T>& m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
}

// ---- Conv2d ---------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, int in_ch, int out_ch, int kernel_w, int bins)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_w_(kernel_w), bins_(bins) {
  weight_.Init(name + ".weight", out_ch, in_ch * 3 * kernel_w);
  bias_.Init(name + ".bias", 1, out_ch);
}

template <typename T>
void Conv2d<T>::Init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch_ * 3 * kernel_w_));
  UniformInit(weight_.value, bound, rng);
  UniformInit(bias_.value, bound, rng);
}

template <typename T>
Mat<T> Conv2d<T>::Im2Col(const Mat<T>& in) const {
  const int frames = static_cast<int>(in.rows() / bins_);
  const int pad = kernel_w_ / 2;
  const int k = in_ch_ * 3 * kernel_w_;
  Mat<T> cols(in.rows(), k);
  for (int f = 0; f < frames; ++f) {
    for (int b = 0; b < bins_; ++b) {
      T* dst = cols.data() + static_cast<Eigen::Index>(f * bins_ + b) * k;
      for (int c = 0; c < in_ch_; ++c) {
        for (int i = 0; i < 3; ++i) {
          T* out = dst + (c * 3 + i) * kernel_w_;
          const int ff = f + i - 1;
          if (ff < 0 || ff >= frames) {
            std::fill(out, out + kernel_w_, T(0));
            continue;
          }
          const T* row = in.data() + static_cast<Eigen::Index>(ff) * bins_ * in_ch_ + c;
          for (int j = 0; j < kernel_w_; ++j) {
            const int bb = b + j - pad;
            out[j] = (bb >= 0 && bb < bins_) ? row[bb * in_ch_] : T(0);
          }
        }
      }
    }
  }
  return cols;
}

template <typename T>
void Conv2d<T>::Col2ImAdd(const Mat<T>& cols, Mat<T>& out) const {
  const int frames = static_cast<int>(out.rows() / bins_);
  const int pad = kernel_w_ / 2;
  const int k = in_ch_ * 3 * kernel_w_;
  for (int f = 0; f < frames; ++f) {
    for (int b = 0; b < bins_; ++b) {
      const T* src = cols.data() + static_cast<Eigen::Index>(f * bins_ + b) * k;
      for (int c = 0; c < in_ch_; ++c) {
        for (int i = 0; i < 3; ++i) {
          const int ff = f + i - 1;
          if (ff < 0 || ff >= frames) continue;
          const T* g = src + (c * 3 + i) * kernel_w_;
          T* row = out.data() + static_cast<Eigen::Index>(ff) * bins_ * in_ch_ + c;
          for (int j = 0; j < kernel_w_; ++j) {
            const int bb = b + j - pad;
            if (bb >= 0 && bb < bins_) row[bb * in_ch_] += g[j];
          }
        }
      }
    }
  }
}

template <typename T>
std::vector<Mat<T>> Conv2d<T>::Forward(const std::vector<Mat<T>>& in) {
  inputs_ = in;
  std::vector<Mat<T>> out(in.size());
  for (std::size_t s = 0; s < in.size(); ++s) {
    if (in[s].cols() != in_ch_ || in[s].rows() % bins_ != 0)
      throw InvalidArgument("conv input shape mismatch");
    const Mat<T> cols = Im2Col(in[s]);
    out[s].resize(cols.rows(), out_ch_);
    out[s].noalias() = cols * weight_.value.transpose();
    out[s].rowwise() += bias_.value.row(0);
  }
  return out;
}

template <typename T>
std::vector<Mat<T>> Conv2d<T>::Backward(const std::vector<Mat<T>>& grad_out, bool need_input_grad) {
  std::vector<Mat<T>> grad_in;
  if (need_input_grad) grad_in.resize(grad_out.size());
  for (std::size_t s = 0; s < grad_out.size(); ++s) {
    const Mat<T> cols = Im2Col(inputs_[s]);
    weight_.grad.noalias() += grad_out[s].transpose() * cols;
    bias_.grad.row(0) += grad_out[s].colwise().sum();
    if (need_input_grad) {
      Mat<T> dcols(cols.rows(), cols.cols());
      dcols.noalias() = grad_out[s] * weight_.value;
      grad_in[s] = Mat<T>::Zero(inputs_[s].rows(), in_ch_);
      Col2ImAdd(dcols, grad_in[s]);
    }
  }
  return grad_in;
}

// ---- BatchNorm ------------------------------------------------------------

template <typename T>
BatchNorm<T>::BatchNorm(const std::string& name, int channels) : channels_(channels) {
  gamma_.Init(name + ".gamma", 1, channels);
  gamma_.value.setOnes();
  beta_.Init(name + ".beta", 1, channels);
  running_mean_ = Mat<T>::Zero(1, channels);
  running_var_ = Mat<T>::Ones(1, channels);
}

template <typename T>
std::vector<Mat<T>> BatchNorm<T>::Forward(const std::vector<Mat<T>>& in, bool train) {
  std::vector<Mat<T>> out(in.size());
  if (!train) {
    const Eigen::Matrix<T, 1, Eigen::Dynamic> scale =
        (gamma_.value.array() / (running_var_.array() + T(kEps)).sqrt()).matrix();
    const Eigen::Matrix<T, 1, Eigen::Dynamic> shift =
        beta_.value.array() - running_mean_.array() * scale.array();
    for (std::size_t s = 0; s < in.size(); ++s) {
      out[s] = in[s];
      out[s].array().rowwise() *= scale.array();
      out[s].rowwise() += shift;
    }
    return out;
  }
  count_ = 0;
  Eigen::Matrix<double, 1, Eigen::Dynamic> sum = Eigen::Matrix<double, 1, Eigen::Dynamic>::Zero(channels_);
  for (const auto& x : in) {
    sum += x.colwise().sum().template cast<double>();
    count_ += x.rows();
  }
  const Eigen::Matrix<double, 1, Eigen::Dynamic> mean = sum / static_cast<double>(count_);
  Eigen::Matrix<double, 1, Eigen::Dynamic> sq = Eigen::Matrix<double, 1, Eigen::Dynamic>::Zero(channels_);
  for (const auto& x : in) {
    Mat<T> centered = x.rowwise() - mean.template cast<T>();
    sq += centered.colwise().squaredNorm().template cast<double>();
  }
  const Eigen::Matrix<double, 1, Eigen::Dynamic> var = sq / static_cast<double>(count_);
  inv_std_ = (var.array() + kEps).rsqrt().matrix().template cast<T>();
  const double unbiased = count_ > 1 ? static_cast<double>(count_) / (count_ - 1) : 1.0;
  running_mean_ = ((1 - kMomentum) * running_mean_.template cast<double>() + kMomentum * mean)
                      .template cast<T>();
  running_var_ =
      ((1 - kMomentum) * running_var_.template cast<double>() + kMomentum * unbiased * var)
          .template cast<T>();

  normalized_.resize(in.size());
  const Eigen::Matrix<T, 1, Eigen::Dynamic> mean_t = mean.template cast<T>();
  for (std::size_t s = 0; s < in.size(); ++s) {
    normalized_[s] = in[s].rowwise() - mean_t;
    normalized_[s].array().rowwise() *= inv_std_.array();
    out[s] = normalized_[s];
    out[s].array().rowwise() *= gamma_.value.row(0).array();
    out[s].rowwise() += beta_.value.row(0);
  }
  return out;
}

template <typename T>
std::vector<Mat<T>> BatchNorm<T>::Backward(const std::vector<Mat<T>>& grad_out) {
  Eigen::Matrix<T, 1, Eigen::Dynamic> sum_dy = Eigen::Matrix<T, 1, Eigen::Dynamic>::Zero(channels_);
  Eigen::Matrix<T, 1, Eigen::Dynamic> sum_dy_xhat = sum_dy;
  for (std::size_t s = 0; s < grad_out.size(); ++s) {
    sum_dy += grad_out[s].colwise().sum();
    sum_dy_xhat += grad_out[s].cwiseProduct(normalized_[s]).colwise().sum();
  }
  gamma_.grad.row(0) += sum_dy_xhat;
  beta_.grad.row(0) += sum_dy;
  const T n = static_cast<T>(count_);
  // dx = gamma * inv_std / N * (N dy - sum(dy) - xhat * sum(dy * xhat))
  const Eigen::Matrix<T, 1, Eigen::Dynamic> coef =
      (gamma_.value.row(0).array() * inv_std_.array() / n).matrix();
  std::vector<Mat<T>> grad_in(grad_out.size());
  for (std::size_t s = 0; s < grad_out.size(); ++s) {
    Mat<T> g = grad_out[s] * n;
    g.rowwise() -= sum_dy;
    Mat<T> corr = normalized_[s];
    corr.array().rowwise() *= sum_dy_xhat.array();
    g -= corr;
    g.array().rowwise() *= coef.array();
    grad_in[s] = std::move(g);
  }
  return grad_in;
}

// ---- Linear ---------------------------------------------------------------

template <typename T>
Linear<T>::Linear(const std::string& name, int in, int out) {
  weight_.Init(name + ".weight", out, in);
  bias_.Init(name + ".bias", 1, out);
}

template <typename T>
void Linear<T>::Init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(weight_.value.cols()));
  UniformInit(weight_.value, bound, rng);
  UniformInit(bias_.value, bound, rng);
}

template <typename T>
Mat<T> Linear<T>::Forward(const Mat<T>& in) {
  input_ = in;
  Mat<T> out(in.rows(), weight_.value.rows());
  out.noalias() = in * weight_.value.transpose();
  out.rowwise() += bias_.value.row(0);
  return out;
}

template <typename T>
Mat<T> Linear<T>::Backward(const Mat<T>& grad_out) {
  weight_.grad.noalias() += grad_out.transpose() * input_;
  bias_.grad.row(0) += grad_out.colwise().sum();
  Mat<T> grad_in(grad_out.rows(), weight_.value.cols());
  grad_in.noalias() = grad_out * weight_.value;
  return grad_in;
}

// ---- BiGru ----------------------------------------------------------------

template <typename T>
BiGru<T>::BiGru(const std::string& name, int input_dim, int hidden)
    : input_dim_(input_dim), hidden_(hidden) {
  const char* suffix[2] = {"fwd", "bwd"};
  for (int d = 0; d < 2; ++d) {
    const std::string p = name + "." + suffix[d];
    dir_[d].w_ih.Init(p + ".w_ih", 3 * hidden, input_dim);
    dir_[d].w_hh.Init(p + ".w_hh", 3 * hidden, hidden);
    dir_[d].b_ih.Init(p + ".b_ih", 1, 3 * hidden);
    dir_[d].b_hh.Init(p + ".b_hh", 1, 3 * hidden);
  }
}

template <typename T>
std::vector<Param<T>*> BiGru<T>::Params() {
  std::vector<Param<T>*> out;
  for (auto& d : dir_) {
    out.push_back(&d.w_ih);
    out.push_back(&d.w_hh);
    out.push_back(&d.b_ih);
    out.push_back(&d.b_hh);
  }
  return out;
}

template <typename T>
void BiGru<T>::Init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
  for (auto* p : Params()) UniformInit(p->value, bound, rng);
}

namespace {
template <typename T>
inline T Sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}
}  // namespace

template <typename T>
void BiGru<T>::RunDirection(Direction& d, const Mat<T>& in, bool reverse, Mat<T>& out, int col0) {
  const int h = hidden_;
  Mat<T> gi(in.rows(), 3 * h);
  gi.noalias() = in * d.w_ih.value.transpose();
  gi.rowwise() += d.b_ih.value.row(0);
  d.r.resize(in.rows(), h);
  d.z.resize(in.rows(), h);
  d.n.resize(in.rows(), h);
  d.hn.resize(in.rows(), h);
  d.h_prev.resize(in.rows(), h);

  Mat<T> state = Mat<T>::Zero(batch_, h);
  Mat<T> gh(batch_, 3 * h);
  for (int step = 0; step < frames_; ++step) {
    const int t = reverse ? frames_ - 1 - step : step;
    gh.noalias() = state * d.w_hh.value.transpose();
    gh.rowwise() += d.b_hh.value.row(0);
    for (int b = 0; b < batch_; ++b) {
      const Eigen::Index row = static_cast<Eigen::Index>(b) * frames_ + t;
      const T* gir = gi.data() + row * 3 * h;
      const T* ghr = gh.data() + static_cast<Eigen::Index>(b) * 3 * h;
      for (int k = 0; k < h; ++k) {
        const T r = Sigmoid(gir[k] + ghr[k]);
        const T z = Sigmoid(gir[h + k] + ghr[h + k]);
        const T hn = ghr[2 * h + k];
        const T n = std::tanh(gir[2 * h + k] + r * hn);
        const T prev = state(b, k);
        d.r(row, k) = r;
        d.z(row, k) = z;
        d.n(row, k) = n;
        d.hn(row, k) = hn;
        d.h_prev(row, k) = prev;
        const T next = (T(1) - z) * n + z * prev;
        state(b, k) = next;
        out(row, col0 + k) = next;
      }
    }
  }
}

template <typename T>
Mat<T> BiGru<T>::Forward(const Mat<T>& in, int batch, int frames) {
  if (in.cols() != input_dim_)
    throw InvalidArgument("GRU input width " + std::to_string(in.cols()) + ", expected " +
                          std::to_string(input_dim_));
  batch_ = batch;
  frames_ = frames;
  input_ = in;
  Mat<T> out(in.rows(), 2 * hidden_);
  RunDirection(dir_[0], in, false, out, 0);
  RunDirection(dir_[1], in, true, out, hidden_);
  return out;
}

template <typename T>
void BiGru<T>::BackDirection(Direction& d, const Mat<T>& grad_out, bool reverse, int col0,
                             Mat<T>& grad_gates) {
  const int h = hidden_;
  grad_gates.resize(input_.rows(), 3 * h);
  Mat<T> dh_next = Mat<T>::Zero(batch_, h);
  Mat<T> dgh(batch_, 3 * h);
  Mat<T> prev_rows(batch_, h);
  Mat<T> dh_carry(batch_, h);
  for (int step = frames_ - 1; step >= 0; --step) {
    const int t = reverse ? frames_ - 1 - step : step;
    for (int b = 0; b < batch_; ++b) {
      const Eigen::Index row = static_cast<Eigen::Index>(b) * frames_ + t;
      T* dgi = grad_gates.data() + row * 3 * h;
      T* dghr = dgh.data() + static_cast<Eigen::Index>(b) * 3 * h;
      for (int k = 0; k < h; ++k) {
        const T dh = grad_out(row, col0 + k) + dh_next(b, k);
        const T r = d.r(row, k), z = d.z(row, k), n = d.n(row, k);
        const T prev = d.h_prev(row, k);
        const T dn = dh * (T(1) - z);
        const T dz = dh * (prev - n);
        const T dan = dn * (T(1) - n * n);
        const T dr = dan * d.hn(row, k);
        const T dar = dr * r * (T(1) - r);
        const T daz = dz * z * (T(1) - z);
        dgi[k] = dar;
        dgi[h + k] = daz;
        dgi[2 * h + k] = dan;
        dghr[k] = dar;
        dghr[h + k] = daz;
        dghr[2 * h + k] = dan * r;
        dh_carry(b, k) = dh * z;
        prev_rows(b, k) = prev;
      }
    }
    d.w_hh.grad.noalias() += dgh.transpose() * prev_rows;
    d.b_hh.grad.row(0) += dgh.colwise().sum();
    dh_next = dh_carry;
    dh_next.noalias() += dgh * d.w_hh.value;
  }
}

template <typename T>
Mat<T> BiGru<T>::Backward(const Mat<T>& grad_out, bool need_input_grad) {
  Mat<T> grad_in;
  if (need_input_grad) grad_in = Mat<T>::Zero(input_.rows(), input_dim_);
  for (int d = 0; d < 2; ++d) {
    Mat<T> dgi;
    BackDirection(dir_[d], grad_out, d == 1, d * hidden_, dgi);
    dir_[d].w_ih.grad.noalias() += dgi.transpose() * input_;
    dir_[d].b_ih.grad.row(0) += dgi.colwise().sum();
    if (need_input_grad) grad_in.noalias() += dgi * dir_[d].w_ih.value;
  }
  return grad_in;
}

// ---- Dropout / ReLU -------------------------------------------------------

template <typename T>
Mat<T> Dropout<T>::Forward(const Mat<T>& in, bool train, Rng& rng) {
  active_ = train && p_ > 0;
  if (!active_) return in;
  std::bernoulli_distribution keep(1.0 - p_);
  const T scale = static_cast<T>(1.0 / (1.0 - p_));
  mask_.resize(in.rows(), in.cols());
  for (Eigen::Index i = 0; i < mask_.size(); ++i) mask_.data()[i] = keep(rng) ? scale : T(0);
  return in.cwiseProduct(mask_);
}

template <typename T>
Mat<T> Dropout<T>::Backward(const Mat<T>& grad_out) const {
  if (!active_) return grad_out;
  return grad_out.cwiseProduct(mask_);
}

template <typename T>
void ReluInPlace(std::vector<Mat<T>>& x) {
  for (auto& m : x) m = m.cwiseMax(T(0));
}

// ---- Adam -----------------------------------------------------------------

template <typename T>
Adam<T>::Adam(std::vector<Param<T>*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
  }
}

template <typename T>
void Adam<T>::Step() {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, step_);
  const double c2 = 1.0 - std::pow(beta2_, step_);
  const T step_size = static_cast<T>(lr_ / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_), eps = static_cast<T>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto g = params_[i]->grad.array();
    m_[i].array() = b1 * m_[i].array() + (T(1) - b1) * g;
    v_[i].array() = b2 * v_[i].array() + (T(1) - b2) * g * g;
    params_[i]->value.array() -= step_size * m_[i].array() / ((v_[i].array() * inv_c2).sqrt() + eps);
  }
}

template <typename T>
void Adam<T>::ZeroGrad() {
  for (auto* p : params_) p->grad.setZero();
}

#define BPFDET_INSTANTIATE(T)                                       \
  template void UniformInit<T>(Mat<T>&, double, Rng&);              \
  template class Conv2d<T>;                                         \
  template class BatchNorm<T>;                                      \
  template class Linear<T>;                                         \
  template class BiGru<T>;                                          \
  template class Dropout<T>;                                        \
  template void ReluInPlace<T>(std::vector<Mat<T>>&);               \
  template class Adam<T>;

BPFDET_INSTANTIATE(float)
BPFDET_INSTANTIATE(double)

}  // namespace bpfdet::nn

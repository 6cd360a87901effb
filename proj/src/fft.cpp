// src/fft.cpp

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

#include "fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <vector>

#include "bpfdet/error.hpp"

namespace bpfdet::detail {
namespace {

std::mutex& PlannerMutex() {
  static std::mutex m;
  return m;
}

fftw_complex* AsFftw(std::complex<double>* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  std::vector<double> real(n);
  std::vector<std::complex<double>> spec(n / 2 + 1);
  std::lock_guard lock(PlannerMutex());
  const int size = static_cast<int>(n);
  forward_plan_ = fftw_plan_dft_r2c_1d(size, real.data(), AsFftw(spec.data()), FFTW_ESTIMATE);
  inverse_plan_ = fftw_plan_dft_c2r_1d(size, AsFftw(spec.data()), real.data(),
                                       FFTW_ESTIMATE | FFTW_PRESERVE_INPUT);
  if (!forward_plan_ || !inverse_plan_) throw NumericError("FFTW planning failed");
}

RealFft::~RealFft() {
  std::lock_guard lock(PlannerMutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

void RealFft::Forward(std::span<const double> in, std::span<std::complex<double>> out) const {
  // The new-array execute functions require matching alignment; copy to be safe.
  std::vector<double> buf(in.begin(), in.end());
  std::vector<std::complex<double>> res(num_bins());
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), buf.data(), AsFftw(res.data()));
  std::copy(res.begin(), res.end(), out.begin());
}

void RealFft::Inverse(std::span<const std::complex<double>> in, std::span<double> out) const {
  std::vector<std::complex<double>> buf(in.begin(), in.end());
  std::vector<double> res(n_);
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_), AsFftw(buf.data()), res.data());
  std::copy(res.begin(), res.end(), out.begin());
}

ComplexFft::ComplexFft(std::size_t n) : n_(n) {
  std::vector<std::complex<double>> a(n), b(n);
  std::lock_guard lock(PlannerMutex());
  const int size = static_cast<int>(n);
  forward_plan_ =
      fftw_plan_dft_1d(size, AsFftw(a.data()), AsFftw(b.data()), FFTW_FORWARD, FFTW_ESTIMATE);
  inverse_plan_ =
      fftw_plan_dft_1d(size, AsFftw(a.data()), AsFftw(b.data()), FFTW_BACKWARD, FFTW_ESTIMATE);
  if (!forward_plan_ || !inverse_plan_) throw NumericError("FFTW planning failed");
}

ComplexFft::~ComplexFft() {
  std::lock_guard lock(PlannerMutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

void ComplexFft::Forward(std::span<const std::complex<double>> in,
                         std::span<std::complex<double>> out) const {
  std::vector<std::complex<double>> a(in.begin(), in.end()), b(n_);
  fftw_execute_dft(static_cast<fftw_plan>(forward_plan_), AsFftw(a.data()), AsFftw(b.data()));
  std::copy(b.begin(), b.end(), out.begin());
}

void ComplexFft::Inverse(std::span<const std::complex<double>> in,
                         std::span<std::complex<double>> out) const {
  std::vector<std::complex<double>> a(in.begin(), in.end()), b(n_);
  fftw_execute_dft(static_cast<fftw_plan>(inverse_plan_), AsFftw(a.data()), AsFftw(b.data()));
  std::copy(b.begin(), b.end(), out.begin());
}

}  // namespace bpfdet::detail

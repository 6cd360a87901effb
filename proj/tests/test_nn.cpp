// tests/test_nn.cpp

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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "bpfdet/crnn.hpp"
#include "bpfdet/error.hpp"
#include "bpfdet/nn.hpp"
#include "bpfdet/synth.hpp"
#include "bpfdet/trainer.hpp"
#include "test_util.hpp"

using namespace bpfdet;
using nn::Mat;

namespace {

Mat<double> Random(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Central-difference check of every entry of `x` against `analytic`.
double MaxRelError(Mat<double>& x, const Mat<double>& analytic, const std::function<double()>& f) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i], h = 1e-6;
    x.data()[i] = orig + h;
    const double up = f();
    x.data()[i] = orig - h;
    const double down = f();
    x.data()[i] = orig;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({std::abs(numeric), std::abs(analytic.data()[i]), 1e-4});
    worst = std::max(worst, std::abs(numeric - analytic.data()[i]) / scale);
  }
  return worst;
}

// Projects outputs onto fixed random weights so every output carries gradient.
double Project(const Mat<double>& out, const Mat<double>& w) { return out.cwiseProduct(w).sum(); }

ModelConfig Tiny() {
  ModelConfig c;
  c.kernel_widths = {3, 5, 3, 1};
  c.conv1_channels = 2;
  c.conv2_channels = 3;
  c.gru_hidden = 4;
  c.gru_layers = 2;
  c.fc_hidden = 5;
  c.dropout = 0.2;
  return c;
}

std::vector<TrainingSample> RandomSamples(int count, int frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<TrainingSample> out(count);
  for (int s = 0; s < count; ++s) {
    auto& smp = out[s];
    smp.features.mel = Matrix(frames, kNumMelBands);
    smp.features.cepstrum = Matrix(frames, kNumMelBands);
    for (Eigen::Index i = 0; i < smp.features.mel.size(); ++i) {
      smp.features.mel.data()[i] = n(rng);
      smp.features.cepstrum.data()[i] = n(rng);
    }
    smp.labels.Resize(frames);
    for (int f = 0; f < frames; ++f) {
      smp.labels.activity[f] = s % 2;
      smp.labels.bpf[f] = s % 2 ? std::array<double, 2>{180, 240} : std::array<double, 2>{0, 0};
    }
  }
  return out;
}

}  // namespace

TEST_CASE("conv2d gradients") {
  std::mt19937_64 rng(1);
  const int frames = 3, bins = 6;
  nn::Conv2d<double> conv("c", 2, 3, 5, bins);
  nn::Rng init(2);
  conv.Init(init);
  std::vector<Mat<double>> x = {Random(frames * bins, 2, rng), Random(frames * bins, 2, rng)};
  const Mat<double> w = Random(frames * bins, 3, rng);
  auto f = [&] {
    const auto y = conv.Forward(x);
    return Project(y[0], w) + 0.5 * Project(y[1], w);
  };
  f();
  for (auto* p : conv.Params()) p->grad.setZero();
  const auto gx = conv.Backward({w, 0.5 * w}, true);
  for (auto* p : conv.Params()) CHECK(MaxRelError(p->value, p->grad, f) < 1e-6);
  CHECK(MaxRelError(x[0], gx[0], f) < 1e-6);
  CHECK(MaxRelError(x[1], gx[1], f) < 1e-6);
}

TEST_CASE("conv2d is a same-padded cross-correlation over frames and bins") {
  const int frames = 3, bins = 5;
  nn::Conv2d<double> conv("c", 1, 1, 3, bins);
  auto params = conv.Params();
  // 3 (frames) x 3 (bins) kernel with a single tap at the centre-right.
  params[0]->value.setZero();
  REQUIRE(params[0]->value.size() == 9);
  params[0]->value.data()[1 * 3 + 2] = 1.0;
  Mat<double> x(frames * bins, 1);
  for (int i = 0; i < frames * bins; ++i) x(i, 0) = i;
  const auto y = conv.Forward({x})[0];
  for (int t = 0; t < frames; ++t)
    for (int b = 0; b < bins; ++b)
      CHECK(y(t * bins + b, 0) == (b + 1 < bins ? x(t * bins + b + 1, 0) : 0.0));
}

TEST_CASE("batch norm gradients and running statistics") {
  std::mt19937_64 rng(3);
  nn::BatchNorm<double> bn("bn", 3);
  for (auto* p : bn.Params()) p->value = Random(1, 3, rng);
  std::vector<Mat<double>> x = {Random(8, 3, rng), Random(8, 3, rng)};
  x[0].array() += 4.0;
  const Mat<double> w = Random(8, 3, rng);
  auto f = [&] {
    const auto y = bn.Forward(x, true);
    return Project(y[0], w) + Project(y[1], w * 2);
  };
  f();
  for (auto* p : bn.Params()) p->grad.setZero();
  const auto gx = bn.Backward({w, w * 2});
  for (auto* p : bn.Params()) CHECK(MaxRelError(p->value, p->grad, f) < 1e-6);
  CHECK(MaxRelError(x[0], gx[0], f) < 1e-6);
  CHECK(MaxRelError(x[1], gx[1], f) < 1e-6);

  // Fresh layer, one train step: running = 0.9 * init + 0.1 * batch (unbiased var).
  nn::BatchNorm<double> fresh("bn", 1);
  Mat<double> v(4, 1);
  v << 1, 2, 3, 6;
  fresh.Forward({v}, true);
  CHECK(fresh.running_mean()(0, 0) == doctest::Approx(0.3));
  CHECK(fresh.running_var()(0, 0) == doctest::Approx(0.9 + 0.1 * 14.0 / 3.0));
  // Eval mode uses the running statistics.
  const auto e = fresh.Forward({v}, false)[0];
  CHECK(e(0, 0) == doctest::Approx((1 - 0.3) / std::sqrt(0.9 + 1.4 / 3.0 + 1e-5)));
}

TEST_CASE("linear gradients") {
  std::mt19937_64 rng(4);
  nn::Linear<double> fc("fc", 5, 3);
  nn::Rng init(5);
  fc.Init(init);
  Mat<double> x = Random(7, 5, rng);
  const Mat<double> w = Random(7, 3, rng);
  auto f = [&] { return Project(fc.Forward(x), w); };
  f();
  for (auto* p : fc.Params()) p->grad.setZero();
  const Mat<double> gx = fc.Backward(w);
  for (auto* p : fc.Params()) CHECK(MaxRelError(p->value, p->grad, f) < 1e-6);
  CHECK(MaxRelError(x, gx, f) < 1e-6);
}

TEST_CASE("bidirectional GRU gradients") {
  std::mt19937_64 rng(6);
  const int batch = 2, frames = 5, in_dim = 3, hidden = 4;
  nn::BiGru<double> gru("g", in_dim, hidden);
  nn::Rng init(7);
  gru.Init(init);
  Mat<double> x = Random(batch * frames, in_dim, rng);
  const Mat<double> w = Random(batch * frames, 2 * hidden, rng);
  auto f = [&] { return Project(gru.Forward(x, batch, frames), w); };
  f();
  for (auto* p : gru.Params()) p->grad.setZero();
  const Mat<double> gx = gru.Backward(w, true);
  for (auto* p : gru.Params()) {
    INFO(p->name);
    CHECK(MaxRelError(p->value, p->grad, f) < 1e-6);
  }
  CHECK(MaxRelError(x, gx, f) < 1e-6);
}

TEST_CASE("GRU directions do not mix samples and run in opposite time order") {
  std::mt19937_64 rng(8);
  nn::BiGru<double> gru("g", 2, 3);
  nn::Rng init(9);
  gru.Init(init);
  Mat<double> x = Random(2 * 4, 2, rng);
  const Mat<double> y = gru.Forward(x, 2, 4);
  Mat<double> x2 = x;
  x2.row(4 + 3) += Mat<double>::Ones(1, 2);  // sample 1, last frame
  const Mat<double> y2 = gru.Forward(x2, 2, 4);
  CHECK(y2.topRows(4) == y.topRows(4));             // sample 0 untouched
  CHECK(y2.block(4, 0, 3, 3) == y.block(4, 0, 3, 3));  // forward half before the change
  CHECK(y2.block(4, 3, 3, 3) != y.block(4, 3, 3, 3));  // backward half sees it early
}

TEST_CASE("dropout scales kept units and is the identity in eval mode") {
  nn::Dropout<double> d(0.25);
  nn::Rng rng(1);
  Mat<double> x = Mat<double>::Ones(200, 50);
  const Mat<double> y = d.Forward(x, true, rng);
  int kept = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y.data()[i];
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    kept += v != 0.0;
  }
  CHECK(kept / 10000.0 == doctest::Approx(0.75).epsilon(0.03));
  const Mat<double> g = d.Backward(Mat<double>::Ones(200, 50));
  CHECK(g == y);
  CHECK(d.Forward(x, false, rng) == x);
}

TEST_CASE("adam takes lr-sized first steps against the gradient") {
  nn::Param<double> p;
  p.Init("p", 1, 3);
  p.grad << 5.0, -0.001, 0.0;
  nn::Adam<double> opt({&p}, 0.01);
  opt.Step();
  CHECK(p.value(0, 0) == doctest::Approx(-0.01));
  CHECK(p.value(0, 1) == doctest::Approx(0.01).epsilon(1e-4));
  CHECK(p.value(0, 2) == 0.0);
  opt.ZeroGrad();
  CHECK(p.grad.isZero());
}

TEST_CASE("loss values and gradients") {
  Mat<double> yb(2, 2), ya(2, 1);
  yb << 200, 260, 0, 0;
  ya << 1, 0;
  LossConfig lc;

  // Perfect prediction: only the eps clipping remains.
  auto l = ComputeLoss<double>(yb, ya, yb, ya, lc);
  CHECK(l.mse == 0.0);
  CHECK(l.bce == doctest::Approx(-std::log(1 - 1e-7)));
  CHECK(l.grad_activity.isZero());  // both predictions clipped

  Mat<double> pb = yb, pa(2, 1);
  pb(0, 0) += 10;
  pa << 0.8, 0.3;
  l = ComputeLoss<double>(pb, pa, yb, ya, lc);
  CHECK(l.mse == doctest::Approx(100.0 / 4));
  CHECK(l.bce == doctest::Approx(-(std::log(0.8) + std::log(0.7)) / 2));
  CHECK(l.total == doctest::Approx(l.mse + l.bce));
  CHECK(l.grad_bpf(0, 0) == doctest::Approx(2 * 10.0 / 4));
  CHECK(l.grad_activity(0, 0) == doctest::Approx(-1 / 0.8 / 2));
  CHECK(l.grad_activity(1, 0) == doctest::Approx(1 / 0.7 / 2));

  // alpha = 0: the BPF prediction no longer matters.
  lc.alpha = 0;
  Mat<double> wild = pb;
  wild.array() += 1000;
  const auto a = ComputeLoss<double>(pb, pa, yb, ya, lc), b = ComputeLoss<double>(wild, pa, yb, ya, lc);
  CHECK(a.total == b.total);
  CHECK(b.grad_bpf.isZero());

  CHECK_ERROR(kInvalidArgument, "", ComputeLoss<double>(pb, pa, yb.topRows(1), ya, lc));
  lc.alpha = -1;
  CHECK_ERROR(kInvalidArgument, "", lc.Validate());
}

TEST_CASE("network input shape errors name the dimension") {
  FeatureBlock block;
  block.mel = Matrix::Zero(10, 64);
  block.cepstrum = Matrix::Zero(10, 64);
  CHECK_ERROR(kInvalidArgument, "bins", Crnn<float>::ToInput(block));
  block.mel = Matrix::Zero(10, 128);
  block.cepstrum = Matrix::Zero(9, 128);
  CHECK_ERROR(kInvalidArgument, "frames", Crnn<float>::ToInput(block));

  Crnn<float> net(Tiny());
  net.Init(1);
  CHECK_ERROR(kInvalidArgument, "channels", net.Forward({Mat<float>::Zero(10 * 128, 3)}, 10, false));
  CHECK_ERROR(kInvalidArgument, "frames", net.Forward({Mat<float>::Zero(10 * 128, 2)}, 11, false));

  ModelConfig bad = Tiny();
  bad.kernel_widths[0] = 4;
  CHECK_ERROR(kInvalidArgument, "", Crnn<float>{bad});
}

TEST_CASE("ToInput lays out frame-major pixels with mel and cepstrum channels") {
  FeatureBlock block;
  block.mel = Matrix::Zero(2, 128);
  block.cepstrum = Matrix::Zero(2, 128);
  block.mel(1, 5) = 3.0;
  block.cepstrum(0, 7) = -2.0;
  const auto x = Crnn<float>::ToInput(block);
  CHECK(x.rows() == 256);
  CHECK(x(128 + 5, 0) == 3.0f);
  CHECK(x(7, 1) == -2.0f);
  CHECK(x.sum() == 1.0f);
}

TEST_CASE("full network parameter count and outputs") {
  Crnn<float> net;
  net.Init(0);
  // Conv blocks + 2 branches of 3-layer BiGRU and two linear layers.
  std::size_t conv = 0;
  for (int k : {33, 21, 11, 3}) conv += (2 * 3 * k * 16 + 16) + 2 * 16 + (16 * 3 * 3 * 32 + 32) + 2 * 32;
  auto gru_layer = [](std::size_t in) { return 2 * (3 * 128 * in + 3 * 128 * 128 + 2 * 3 * 128); };
  const std::size_t gru = gru_layer(128 * 128) + 2 * gru_layer(256);
  const std::size_t heads = 2 * (gru + 256 * 128 + 128) + (128 * 2 + 2) + (128 + 1);
  CHECK(net.NumParameters() == conv + heads);

  FeatureBlock block;
  block.mel = Matrix::Random(20, 128);
  block.cepstrum = Matrix::Random(20, 128);
  const auto out = net.Forward({Crnn<float>::ToInput(block)}, 20, false);
  CHECK(out.bpf.rows() == 20);
  // Untrained BPF sits near relu(100 * 2) Hz.
  CHECK(out.bpf.mean() > 100.0f);
  CHECK(out.bpf.mean() < 300.0f);
}

TEST_CASE("checkpoint round trip restores identical predictions") {
  const auto dir = testutil::TempDir("ckpt");
  NormStats norm;
  norm.mean[0] = -3.0;
  norm.mean[1] = 0.01;
  norm.stddev[0] = 2.0;
  norm.stddev[1] = 0.5;
  TrainedModel model(Tiny(), norm);
  model.net.Init(21);
  // Perturb running statistics so they must round-trip too.
  auto train = RandomSamples(2, 8, 3);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 2;
  tc.seed = 21;
  Train(model, train, {}, tc);

  SaveCheckpoint(dir / "m.ckpt", model);
  TrainedModel loaded = LoadCheckpoint(dir / "m.ckpt");
  for (int c = 0; c < 2; ++c) {
    CHECK(loaded.norm.mean[c] == norm.mean[c]);
    CHECK(loaded.norm.stddev[c] == norm.stddev[c]);
  }
  CHECK(loaded.config.kernel_widths == Tiny().kernel_widths);
  CHECK(loaded.config.gru_layers == 2);
  auto a = model.net.NamedTensors(), b = loaded.net.NamedTensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(*a[i].second == *b[i].second);
  }
  SceneSpec s;
  s.duration_s = 3.0;
  s.rotors.resize(1);
  const auto audio = RenderScene(s).audio;
  const auto pa = Predict(model, audio), pb = Predict(loaded, audio);
  CHECK(pa.activity == pb.activity);
  CHECK(pa.bpf == pb.bpf);
}

TEST_CASE("checkpoint loading errors name the file") {
  const auto dir = testutil::TempDir("ckpt_err");
  CHECK_ERROR(kIo, "missing.ckpt", LoadCheckpoint(dir / "missing.ckpt"));
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  CHECK_ERROR(kIo, "junk.ckpt", LoadCheckpoint(dir / "junk.ckpt"));

  TrainedModel model(Tiny());
  model.net.Init(1);
  SaveCheckpoint(dir / "ok.ckpt", model);
  const auto size = std::filesystem::file_size(dir / "ok.ckpt");
  std::filesystem::resize_file(dir / "ok.ckpt", size - 10);
  CHECK_ERROR(kIo, "truncated", LoadCheckpoint(dir / "ok.ckpt"));
}

TEST_CASE("prediction covers every frame of long recordings") {
  TrainedModel model(Tiny());
  model.net.Init(4);
  SceneSpec s;
  s.duration_s = 3.0;
  s.rotors.resize(2);
  s.rotors[1].base_bpf = 260;
  auto t = Predict(model, RenderScene(s).audio);
  CHECK(t.size() == 93);
  s.duration_s = 6.0;
  t = Predict(model, RenderScene(s).audio, 0.0);
  CHECK(t.size() == 187);
  for (std::size_t f = 0; f < t.size(); ++f) {
    CHECK(t.bpf[f][0] <= t.bpf[f][1]);
    CHECK(t.activity[f] >= 0.0);
    CHECK(t.activity[f] <= 1.0);
  }
  // Threshold above any probability zeroes every BPF.
  t = Predict(model, RenderScene(s).audio, 1.1);
  for (const auto& p : t.bpf) CHECK(p == std::array<double, 2>{0, 0});
}

TEST_CASE("training is reproducible and respects its configuration") {
  const auto train = RandomSamples(4, 8, 5), valid = RandomSamples(2, 8, 6);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 2;
  tc.seed = 9;
  TrainedModel m1(Tiny()), m2(Tiny());
  const auto r1 = Train(m1, train, valid, tc);
  const auto r2 = Train(m2, train, valid, tc);
  REQUIRE(r1.log.size() == 3);
  CHECK(r1.log[0].epoch == 0);
  for (std::size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(r1.log[i].train_loss == r2.log[i].train_loss);
    CHECK(r1.log[i].valid_loss == r2.log[i].valid_loss);
  }

  // Zero epochs only measures: the weights stay at their initialization.
  tc.epochs = 0;
  TrainedModel m3(Tiny());
  const auto r3 = Train(m3, train, {}, tc);
  REQUIRE(r3.log.size() == 1);
  CHECK(r3.log[0].train_loss == doctest::Approx(r1.log[0].train_loss));
  CHECK(EvaluateLoss(m3, train) == doctest::Approx(r3.log[0].train_loss));

  CHECK_ERROR(kInvalidArgument, "", Train(m3, {}, {}, tc));
  tc.batch_size = 0;
  CHECK_ERROR(kInvalidArgument, "", Train(m3, train, {}, tc));
}

TEST_CASE("training writes one log line per epoch and honours the callback") {
  const auto dir = testutil::TempDir("trainlog");
  const auto train = RandomSamples(2, 8, 7);
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 2;
  tc.log_path = dir / "log.jsonl";
  TrainedModel m(Tiny());
  int calls = 0;
  const auto r = Train(m, train, {}, tc, [&](const EpochStats& s) { return ++calls, s.epoch < 2; });
  CHECK(r.log.size() == 3);
  std::ifstream in(*tc.log_path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    CHECK(line.find("\"epoch\"") != std::string::npos);
    ++lines;
  }
  CHECK(lines == 3);
}

TEST_CASE("training a small model reduces the loss") {
  const auto train = RandomSamples(4, 8, 8);
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 4;
  tc.learning_rate = 1e-2;
  tc.train_metrics = false;
  ModelConfig c = Tiny();
  c.dropout = 0.0;
  TrainedModel m(c);
  const auto r = Train(m, train, {}, tc);
  CHECK(r.log.back().train_loss < 0.5 * r.log.front().train_loss);
}

// tests/test_util.hpp

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

#include <filesystem>
#include <random>
#include <string>

#include "bpfdet/audio.hpp"
#include "bpfdet/error.hpp"

namespace testutil {

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path TempDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("bpfdet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline bpfdet::AudioSegment Noise(std::size_t n, unsigned seed, double sigma = 0.1) {
  bpfdet::AudioSegment a;
  std::mt19937 rng(seed);
  std::normal_distribution<double> d(0.0, sigma);
  a.samples.resize(n);
  for (double& s : a.samples) s = d(rng);
  return a;
}

}  // namespace testutil

// Expects `expr` to throw bpfdet::Error of the given kind whose message
// contains `text`. Variadic so the expression may contain commas.
#define CHECK_ERROR(expected_kind, text, ...) \
  do {                                                                            \
    try {                                                                         \
      (void)(__VA_ARGS__);                                                        \
      FAIL_CHECK("no exception from " #__VA_ARGS__);                              \
    } catch (const bpfdet::Error& error_) {                                       \
      CHECK(error_.kind() == bpfdet::ErrorKind::expected_kind);                          \
      CHECK_MESSAGE(std::string(error_.what()).find(text) != std::string::npos,   \
                    error_.what());                                               \
    }                                                                             \
  } while (0)

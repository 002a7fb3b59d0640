// Copyright 2026 The Weedet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <algorithm>
#include <chrono>
#include <vector>

#include "weedet/model/decode.hpp"
#include "weedet/model/detector.hpp"

namespace weedet {

template <typename T>
std::size_t count_params(const Detector<T>& det) {
  return det.count_params();
}

// Median wall time in milliseconds of forward + decode on one input of the
// configured size, after n_warmup untimed runs.
template <typename T>
double measure_latency(const Detector<T>& det, int n_warmup = 3, int n_runs = 20) {
  if (n_runs < 1) throw ConfigError("n_runs must be >= 1");
  const int S = det.config().input_size;
  Rng rng = make_rng(det.config().seed, 0x6c6174ULL);
  auto x = Var<T>(nn::randn<T>({1, 3, S, S}, T(1), rng));
  nn::NoGradGuard guard;
  auto run = [&] {
    auto out = det.forward(x);
    return decode_predictions(out.raw, det.config(), 0, "latency", det.config().conf_threshold).size();
  };
  for (int i = 0; i < n_warmup; ++i) run();
  std::vector<double> ms;
  for (int i = 0; i < n_runs; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    run();
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::nth_element(ms.begin(), ms.begin() + ms.size() / 2, ms.end());
  if (ms.size() % 2 == 1) return ms[ms.size() / 2];
  const double hi = ms[ms.size() / 2];
  return 0.5 * (hi + *std::max_element(ms.begin(), ms.begin() + ms.size() / 2));
}

}  // namespace weedet

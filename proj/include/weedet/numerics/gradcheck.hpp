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
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "weedet/core/errors.hpp"
#include "weedet/core/rng.hpp"
#include "weedet/numerics/optim.hpp"

namespace weedet::nn {

struct GradCheckOptions {
  double epsilon = 1e-3;
  double tolerance = 1e-3;
  // Below this magnitude gradients are compared absolutely.
  double abs_floor = 1e-7;
  // 0 checks every entry; otherwise a seeded random subset per parameter.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

struct ParamCheck {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  double max_abs_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  bool passed = true;
};

inline double relative_error(double analytic, double numeric, double floor) {
  double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Compares reverse-mode gradients of a scalar computation against central
// differences (f(x + eps) - f(x - eps)) / 2eps, entry by entry.
template <typename T>
GradCheckReport grad_check(const std::function<Var<T>()>& f, ParameterList<T>& params,
                           const GradCheckOptions& opt = {}) {
  for (auto& p : params) p.var.clear_grad();
  Var<T> loss = f();
  if (loss.numel() != 1) throw CheckError("grad_check: computation is not scalar");
  if (!std::isfinite(static_cast<double>(loss.item()))) throw CheckError("grad_check: non-finite value");
  backward(loss);
  loss = Var<T>();

  Rng rng = make_rng(opt.seed, 0x6763);
  GradCheckReport report;
  const T eps = static_cast<T>(opt.epsilon);
  auto eval = [&]() {
    NoGradGuard guard;
    double v = static_cast<double>(f().item());
    if (!std::isfinite(v)) throw CheckError("grad_check: non-finite value under perturbation");
    return v;
  };
  for (auto& p : params) {
    ParamCheck pc;
    pc.name = p.name;
    const std::size_t n = p.var.numel();
    std::vector<std::size_t> entries(n);
    std::iota(entries.begin(), entries.end(), 0);
    if (opt.max_entries_per_param > 0 && n > opt.max_entries_per_param) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(opt.max_entries_per_param);
      std::sort(entries.begin(), entries.end());
    }
    Tensor<T> analytic = p.var.has_grad() ? p.var.grad() : Tensor<T>(p.var.shape());
    auto& w = p.var.mutable_value();
    for (std::size_t i : entries) {
      const T orig = w[i];
      w[i] = orig + eps;
      double plus = eval();
      w[i] = orig - eps;
      double minus = eval();
      w[i] = orig;
      double numeric = (plus - minus) / (2.0 * static_cast<double>(eps));
      double a = static_cast<double>(analytic[i]);
      double rel = relative_error(a, numeric, opt.abs_floor);
      pc.max_rel_error = std::max(pc.max_rel_error, rel);
      pc.max_abs_analytic = std::max(pc.max_abs_analytic, std::abs(a));
      pc.max_abs_numeric = std::max(pc.max_abs_numeric, std::abs(numeric));
      ++pc.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, pc.max_rel_error);
    report.params.push_back(std::move(pc));
  }
  for (auto& p : params) p.var.clear_grad();
  report.passed = report.max_rel_error <= opt.tolerance;
  return report;
}

}  // namespace weedet::nn

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

#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "weedet/core/errors.hpp"
#include "weedet/numerics/autograd.hpp"

namespace weedet::nn {

template <typename T>
struct Parameter {
  std::string name;  // dotted path, unique within a model
  Var<T> var;

  std::size_t numel() const { return var.numel(); }
};

template <typename T>
using ParameterList = std::vector<Parameter<T>>;

template <typename T>
Parameter<T> make_parameter(std::string name, Tensor<T> init) {
  return {std::move(name), Var<T>(std::move(init), true)};
}

template <typename T>
std::size_t count_elements(const ParameterList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.numel();
  return n;
}

template <typename T>
void check_unique_names(const ParameterList<T>& params) {
  std::set<std::string> seen;
  for (const auto& p : params)
    if (!seen.insert(p.name).second) throw ConfigError("duplicate parameter name " + p.name);
}

template <typename T>
void zero_grads(ParameterList<T>& params) {
  for (auto& p : params) p.var.zero_grad();
}

// Momentum buffers keyed by parameter name.
template <typename T>
struct SgdState {
  std::unordered_map<std::string, std::vector<T>> velocity;
};

// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v;
// gradients are zeroed afterwards.
template <typename T>
void sgd_step(ParameterList<T>& params, T lr, T momentum, T weight_decay, SgdState<T>& state) {
  for (auto& p : params)
    if (!p.var.has_grad()) throw StateError("parameter " + p.name + " has no gradient");
  for (auto& p : params) {
    auto& w = p.var.mutable_value();
    const auto& g = p.var.grad();
    auto& v = state.velocity[p.name];
    if (v.size() != w.numel()) v.assign(w.numel(), T(0));
    for (std::size_t i = 0; i < w.numel(); ++i) {
      v[i] = momentum * v[i] + g[i] + weight_decay * w[i];
      w[i] -= lr * v[i];
    }
    p.var.zero_grad();
  }
}

// Gaussian initializer, deterministic for a given engine state.
template <typename T, typename Engine>
Tensor<T> randn(Shape shape, T stddev, Engine& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T, typename Engine>
Tensor<T> rand_uniform(Shape shape, T lo, T hi, Engine& rng) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace weedet::nn

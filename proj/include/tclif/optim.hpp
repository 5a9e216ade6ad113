// Copyright 2026 The tclif-eprop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// First-order optimizers over ParamRef blocks, learning-rate schedules and
// global-norm clipping.

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tclif/errors.hpp"
#include "tclif/network.hpp"

namespace tclif {

// p <- p - lr * g on every trainable block, then clamped into its range.
inline void sgd_step(std::span<const ParamRef> refs, double lr) {
  for (const auto& r : refs) {
    if (!r.trainable) continue;
    for (std::size_t k = 0; k < r.value.size(); ++k) {
      r.value[k] -= lr * r.grad[k];
      r.value[k] = std::clamp(r.value[k], r.lo, r.hi);
    }
  }
}

struct AdamState {
  double beta_m = 0.9;
  double beta_v = 0.999;
  double eps = 1e-8;
  std::size_t steps = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// Adam with bias correction. Moments are kept for every block, trainable or
// not, so the layout never depends on the trainer.
inline void adam_step(AdamState& st, std::span<const ParamRef> refs, double lr) {
  if (st.m.empty()) {
    for (const auto& r : refs) {
      st.m.emplace_back(r.value.size(), 0.0);
      st.v.emplace_back(r.value.size(), 0.0);
    }
  }
  check_shape(st.m.size() == refs.size(), "adam_step: state does not match parameters");
  ++st.steps;
  const double n = static_cast<double>(st.steps);
  const double corr_m = 1.0 - std::pow(st.beta_m, n);
  const double corr_v = 1.0 - std::pow(st.beta_v, n);
  for (std::size_t b = 0; b < refs.size(); ++b) {
    const ParamRef& r = refs[b];
    check_shape(st.m[b].size() == r.value.size(), "adam_step: block size changed");
    if (!r.trainable) continue;
    for (std::size_t k = 0; k < r.value.size(); ++k) {
      const double g = r.grad[k];
      st.m[b][k] = st.beta_m * st.m[b][k] + (1.0 - st.beta_m) * g;
      st.v[b][k] = st.beta_v * st.v[b][k] + (1.0 - st.beta_v) * g * g;
      const double m_hat = st.m[b][k] / corr_m;
      const double v_hat = st.v[b][k] / corr_v;
      r.value[k] -= lr * m_hat / (std::sqrt(v_hat) + st.eps);
      r.value[k] = std::clamp(r.value[k], r.lo, r.hi);
    }
  }
}

enum class Schedule { kCosine, kStep, kConstant };

inline std::string_view to_string(Schedule s) {
  switch (s) {
    case Schedule::kCosine: return "cosine";
    case Schedule::kStep: return "step";
    case Schedule::kConstant: return "constant";
  }
  return "?";
}

inline Schedule schedule_from_string(std::string_view s) {
  if (s == "cosine") return Schedule::kCosine;
  if (s == "step") return Schedule::kStep;
  if (s == "constant") return Schedule::kConstant;
  throw ParameterError("unknown schedule '" + std::string(s) + "'");
}

struct ScheduleSpec {
  Schedule kind = Schedule::kCosine;
  double lr0 = 0.08;
  std::size_t total_epochs = 1;  // cosine horizon
  std::size_t step_every = 15;
  double step_factor = 0.8;
};

inline double lr_at(const ScheduleSpec& s, std::size_t epoch) {
  switch (s.kind) {
    case Schedule::kCosine: {
      const double frac = static_cast<double>(epoch) /
                          static_cast<double>(std::max<std::size_t>(s.total_epochs, 1));
      return s.lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
    }
    case Schedule::kStep:
      return s.lr0 * std::pow(s.step_factor, static_cast<double>(epoch / s.step_every));
    case Schedule::kConstant:
      return s.lr0;
  }
  return s.lr0;
}

// Rescales the trainable gradients so their joint L2 norm is at most
// max_norm. Returns the norm before clipping.
inline double clip_global_norm(std::span<const ParamRef> refs, double max_norm) {
  double sq = 0.0;
  for (const auto& r : refs)
    if (r.trainable)
      for (double g : r.grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& r : refs)
      if (r.trainable)
        for (double& g : r.grad) g *= s;
  }
  return norm;
}

}  // namespace tclif

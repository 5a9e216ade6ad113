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

// Run configuration: a flat JSON object with snake_case keys. Unknown keys
// are rejected; `key=value` overrides are applied on top of a document.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include "tclif/eprop.hpp"
#include "tclif/errors.hpp"
#include "tclif/network.hpp"
#include "tclif/neurons.hpp"
#include "tclif/optim.hpp"

namespace tclif {

enum class DatasetKind { kSmnist, kPsmnist, kShd };

inline std::string_view to_string(DatasetKind d) {
  switch (d) {
    case DatasetKind::kSmnist: return "smnist";
    case DatasetKind::kPsmnist: return "psmnist";
    case DatasetKind::kShd: return "shd";
  }
  return "?";
}

inline DatasetKind dataset_from_string(std::string_view s) {
  if (s == "smnist") return DatasetKind::kSmnist;
  if (s == "psmnist") return DatasetKind::kPsmnist;
  if (s == "shd") return DatasetKind::kShd;
  throw ParameterError("unknown dataset '" + std::string(s) + "'");
}

enum class OptimizerKind { kSgd, kAdam };

inline std::string_view to_string(OptimizerKind o) {
  return o == OptimizerKind::kSgd ? "sgd" : "adam";
}

inline OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw ParameterError("unknown optimizer '" + std::string(s) + "'");
}

inline std::string_view to_string(TrainerKind t) {
  return t == TrainerKind::kEprop ? "eprop" : "bptt";
}

inline TrainerKind trainer_from_string(std::string_view s) {
  if (s == "eprop") return TrainerKind::kEprop;
  if (s == "bptt") return TrainerKind::kBptt;
  throw ParameterError("unknown trainer '" + std::string(s) + "'");
}

struct TrainConfig {
  DatasetKind dataset = DatasetKind::kSmnist;
  std::vector<std::size_t> arch = {28, 128, 10};
  bool recurrent = false;
  NeuronTag neuron = NeuronTag::kTclifAdaptive;
  bool reset = true;
  std::size_t frame_size = 28;
  double v_th = 1.0;
  double gamma = 0.5;
  double alpha1 = 0.7;
  double alpha2 = 0.8;
  double a_d = 0.7;
  double a_s = 0.8;
  // Couplings: held at (beta1, beta2) when fixed, else derived from (c1, c2).
  bool fixed_couplings = true;
  double beta1 = -0.5;
  double beta2 = 1.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double readout_kappa = 0.9;
  TraceContraction contraction = TraceContraction::kSomatic;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr0 = 0.01;
  Schedule schedule = Schedule::kCosine;
  std::size_t step_every = 15;
  double step_factor = 0.8;
  double clip_norm = 1.0;  // 0 disables clipping
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  TrainerKind trainer = TrainerKind::kEprop;
  bool update_per_step = false;
  std::size_t train_limit = 10000;  // 0 = whole split
  std::size_t test_limit = 2000;
  std::uint64_t perm_seed = 0;
  std::size_t shd_bins = 250;
  bool shd_binary = false;
  bool record_wallclock = true;
  std::string data_dir;  // empty: TCLIF_DATA_DIR, then the caller's default
};

inline void validate(const TrainConfig& c) {
  if (c.arch.size() < 3) throw ParameterError("arch needs at least three widths");
  for (std::size_t w : c.arch)
    if (w == 0) throw ParameterError("arch widths must be positive");
  if (!(c.lr0 > 0.0)) throw ParameterError("lr0 must be positive");
  if (!(c.step_factor > 0.0 && c.step_factor < 1.0))
    throw ParameterError("step_factor must lie in (0, 1)");
  if (c.step_every == 0) throw ParameterError("step_every must be positive");
  if (c.batch_size == 0) throw ParameterError("batch_size must be positive");
  if (!(c.v_th > 0.0)) throw ParameterError("v_th must be positive");
  if (!(c.gamma > 0.0)) throw ParameterError("gamma must be positive");
  if (!(c.readout_kappa >= 0.0 && c.readout_kappa < 1.0))
    throw ParameterError("readout_kappa must lie in [0, 1)");
  if (!(c.alpha1 >= 0.0 && c.alpha1 <= 1.0 && c.alpha2 >= 0.0 && c.alpha2 <= 1.0))
    throw ParameterError("alpha1 and alpha2 must lie in [0, 1]");
  if (!(c.a_d > 0.0 && c.a_d <= 1.0 && c.a_s > 0.0 && c.a_s <= 1.0))
    throw ParameterError("a_d and a_s must lie in (0, 1]");
  if (c.neuron == NeuronTag::kTclifModified && !c.fixed_couplings)
    throw ParameterError("the modified neuron requires fixed couplings");
  if (c.clip_norm < 0.0) throw ParameterError("clip_norm must be non-negative");
  if (c.frame_size == 0) throw ParameterError("frame_size must be positive");
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"dataset", to_string(c.dataset)},
      {"arch", c.arch},
      {"recurrent", c.recurrent},
      {"neuron", to_string(c.neuron)},
      {"reset", c.reset},
      {"frame_size", c.frame_size},
      {"v_th", c.v_th},
      {"gamma", c.gamma},
      {"alpha1", c.alpha1},
      {"alpha2", c.alpha2},
      {"a_d", c.a_d},
      {"a_s", c.a_s},
      {"fixed_couplings", c.fixed_couplings},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"c1", c.c1},
      {"c2", c.c2},
      {"readout_kappa", c.readout_kappa},
      {"contraction", to_string(c.contraction)},
      {"optimizer", to_string(c.optimizer)},
      {"lr0", c.lr0},
      {"schedule", to_string(c.schedule)},
      {"step_every", c.step_every},
      {"step_factor", c.step_factor},
      {"clip_norm", c.clip_norm},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"trainer", to_string(c.trainer)},
      {"update_per_step", c.update_per_step},
      {"train_limit", c.train_limit},
      {"test_limit", c.test_limit},
      {"perm_seed", c.perm_seed},
      {"shd_bins", c.shd_bins},
      {"shd_binary", c.shd_binary},
      {"record_wallclock", c.record_wallclock},
      {"data_dir", c.data_dir},
  };
}

// Fields present in `j` replace those of `base`; anything else is an error.
inline TrainConfig from_json(const nlohmann::json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw ParameterError("config must be a JSON object");
  const nlohmann::json known = to_json(base);
  try {
    for (const auto& [key, value] : j.items()) {
      if (!known.contains(key)) throw ParameterError("unknown config key '" + key + "'");
      TrainConfig& c = base;
      if (key == "dataset") c.dataset = dataset_from_string(value.get<std::string>());
      else if (key == "arch") c.arch = value.get<std::vector<std::size_t>>();
      else if (key == "recurrent") c.recurrent = value.get<bool>();
      else if (key == "neuron") c.neuron = neuron_tag_from_string(value.get<std::string>());
      else if (key == "reset") c.reset = value.get<bool>();
      else if (key == "frame_size") c.frame_size = value.get<std::size_t>();
      else if (key == "v_th") c.v_th = value.get<double>();
      else if (key == "gamma") c.gamma = value.get<double>();
      else if (key == "alpha1") c.alpha1 = value.get<double>();
      else if (key == "alpha2") c.alpha2 = value.get<double>();
      else if (key == "a_d") c.a_d = value.get<double>();
      else if (key == "a_s") c.a_s = value.get<double>();
      else if (key == "fixed_couplings") c.fixed_couplings = value.get<bool>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "c1") c.c1 = value.get<double>();
      else if (key == "c2") c.c2 = value.get<double>();
      else if (key == "readout_kappa") c.readout_kappa = value.get<double>();
      else if (key == "contraction")
        c.contraction = trace_contraction_from_string(value.get<std::string>());
      else if (key == "optimizer") c.optimizer = optimizer_from_string(value.get<std::string>());
      else if (key == "lr0") c.lr0 = value.get<double>();
      else if (key == "schedule") c.schedule = schedule_from_string(value.get<std::string>());
      else if (key == "step_every") c.step_every = value.get<std::size_t>();
      else if (key == "step_factor") c.step_factor = value.get<double>();
      else if (key == "clip_norm") c.clip_norm = value.get<double>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "trainer") c.trainer = trainer_from_string(value.get<std::string>());
      else if (key == "update_per_step") c.update_per_step = value.get<bool>();
      else if (key == "train_limit") c.train_limit = value.get<std::size_t>();
      else if (key == "test_limit") c.test_limit = value.get<std::size_t>();
      else if (key == "perm_seed") c.perm_seed = value.get<std::uint64_t>();
      else if (key == "shd_bins") c.shd_bins = value.get<std::size_t>();
      else if (key == "shd_binary") c.shd_binary = value.get<bool>();
      else if (key == "record_wallclock") c.record_wallclock = value.get<bool>();
      else if (key == "data_dir") c.data_dir = value.get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
  validate(base);
  return base;
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError("config '" + path + "': " + e.what());
  }
  return from_json(j);
}

// Applies "key=value" overrides. The value is read as JSON when it parses
// (numbers, booleans, arrays), otherwise as a plain string.
inline TrainConfig apply_overrides(const TrainConfig& base,
                                   const std::vector<std::string>& overrides) {
  nlohmann::json patch = nlohmann::json::object();
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ParameterError("override '" + kv + "' is not of the form key=value");
    const std::string key = kv.substr(0, eq);
    const std::string text = kv.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    patch[key] = value;
  }
  return from_json(patch, base);
}

inline NetworkSpec network_spec(const TrainConfig& c) {
  NetworkSpec s;
  s.widths = c.arch;
  s.recurrent = c.recurrent;
  s.kind = NeuronKind{c.neuron, c.reset};
  s.v_th = c.v_th;
  s.gamma = c.gamma;
  s.alpha1 = c.alpha1;
  s.alpha2 = c.alpha2;
  s.a_d = c.a_d;
  s.a_s = c.a_s;
  s.c1 = c.c1;
  s.c2 = c.c2;
  if (c.fixed_couplings) {
    s.fixed_couplings = Couplings{c.beta1, c.beta2};
  } else {
    s.fixed_couplings.reset();
  }
  s.kappa = c.readout_kappa;
  return s;
}

}  // namespace tclif

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

// A stack of spiking layers followed by a leaky non-spiking readout, plus the
// pieces of the forward pass that the online and the BPTT trainer share so
// that both compute bitwise-identical losses.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tclif/eprop.hpp"
#include "tclif/errors.hpp"
#include "tclif/neurons.hpp"
#include "tclif/tensor.hpp"

namespace tclif {

// What the readout integrates: spikes of the top layer, or (for smooth
// gradient checks) its somatic potential.
enum class ReadoutSource { kSpikes, kSomatic };

enum class TrainerKind { kEprop, kBptt };

struct Network {
  std::vector<LayerParams> layers;
  Matrix w_out;  // classes x top width
  double kappa = 0.9;
  ReadoutSource readout_source = ReadoutSource::kSpikes;

  std::size_t input_dim() const { return layers.front().pre(); }
  std::size_t num_classes() const { return w_out.rows(); }
  std::size_t top_width() const { return layers.back().post(); }
};

struct NetworkSpec {
  std::vector<std::size_t> widths;  // input, hidden..., classes
  bool recurrent = false;
  NeuronKind kind;
  double v_th = 1.0;
  double gamma = 0.5;
  double alpha1 = 0.7;
  double alpha2 = 0.8;
  double a_d = 0.7;
  double a_s = 0.8;
  double c1 = 0.0;
  double c2 = 0.0;
  std::optional<Couplings> fixed_couplings = Couplings{-0.5, 1.0};
  double kappa = 0.9;
  ReadoutSource readout_source = ReadoutSource::kSpikes;
};

namespace detail {

inline void fill_uniform(Matrix& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : m.flat()) v = dist(rng);
}

inline void zero_diagonal(Matrix& m) {
  const std::size_t n = std::min(m.rows(), m.cols());
  for (std::size_t j = 0; j < n; ++j) m(j, j) = 0.0;
}

}  // namespace detail

// Weights are uniform in +-sqrt(1/fan_in); recurrent matrices use the same
// scheme with a zeroed diagonal; biases start at zero.
inline Network make_network(const NetworkSpec& spec, std::uint64_t seed) {
  if (spec.widths.size() < 3)
    throw ParameterError("network needs input, at least one hidden and output width");
  for (std::size_t w : spec.widths)
    if (w == 0) throw ParameterError("layer widths must be positive");
  if (spec.kind.tag == NeuronTag::kTclifModified && !spec.fixed_couplings)
    throw ParameterError("the modified neuron requires fixed couplings");
  std::mt19937_64 rng(seed);
  Network net;
  net.kappa = spec.kappa;
  net.readout_source = spec.readout_source;
  for (std::size_t l = 1; l + 1 < spec.widths.size(); ++l) {
    const std::size_t pre = spec.widths[l - 1];
    const std::size_t post = spec.widths[l];
    LayerParams p;
    p.w_in = Matrix(post, pre);
    detail::fill_uniform(p.w_in, std::sqrt(1.0 / static_cast<double>(pre)), rng);
    if (spec.recurrent) {
      p.w_rec = Matrix(post, post);
      detail::fill_uniform(p.w_rec, std::sqrt(1.0 / static_cast<double>(post)), rng);
      detail::zero_diagonal(p.w_rec);
    }
    p.bias = zeros(post);
    p.c1 = spec.c1;
    p.c2 = spec.c2;
    p.fixed_couplings = spec.fixed_couplings;
    p.alpha1 = spec.alpha1;
    p.alpha2 = spec.alpha2;
    p.a_d = spec.a_d;
    p.a_s = spec.a_s;
    p.v_th = spec.v_th;
    p.gamma = spec.gamma;
    p.kind = spec.kind;
    net.layers.push_back(std::move(p));
  }
  const std::size_t top = spec.widths[spec.widths.size() - 2];
  net.w_out = Matrix(spec.widths.back(), top);
  detail::fill_uniform(net.w_out, std::sqrt(1.0 / static_cast<double>(top)), rng);
  return net;
}

struct LayerGrads {
  Matrix w_in;
  Matrix w_rec;
  Vector bias;
  double c1 = 0.0;
  double c2 = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double a_d = 0.0;
  double a_s = 0.0;
};

// Per-parameter gradient sums; same shapes as the network.
struct NetworkGrads {
  std::vector<LayerGrads> layers;
  Matrix w_out;

  NetworkGrads() = default;
  explicit NetworkGrads(const Network& net) {
    for (const auto& p : net.layers) {
      LayerGrads g;
      g.w_in = Matrix(p.w_in.rows(), p.w_in.cols());
      if (p.recurrent()) g.w_rec = Matrix(p.w_rec.rows(), p.w_rec.cols());
      g.bias = zeros(p.bias.size());
      layers.push_back(std::move(g));
    }
    w_out = Matrix(net.w_out.rows(), net.w_out.cols());
  }

  void zero() {
    for (auto& g : layers) {
      g.w_in.fill(0.0);
      g.w_rec.fill(0.0);
      std::fill(g.bias.begin(), g.bias.end(), 0.0);
      g.c1 = g.c2 = g.alpha1 = g.alpha2 = g.a_d = g.a_s = 0.0;
    }
    w_out.fill(0.0);
  }

  std::size_t stored_reals() const {
    std::size_t n = w_out.size();
    for (const auto& g : layers) n += g.w_in.size() + g.w_rec.size() + g.bias.size() + 6;
    return n;
  }
};

// A named parameter block together with its gradient and feasible range.
struct ParamRef {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool trainable = true;
};

inline constexpr double kMinDecayFloor = 1e-3;

// Every parameter block in declaration order: per layer w_in, w_rec, bias, c1,
// c2, alpha1, alpha2, a_d, a_s; then the readout. `trainable` reflects which
// blocks the given trainer updates: the couplings only under BPTT, the decay
// constants only for the neuron kinds that own them.
inline std::vector<ParamRef> param_refs(Network& net, NetworkGrads& grads,
                                        TrainerKind trainer) {
  check_shape(grads.layers.size() == net.layers.size(),
              "param_refs: gradient layout does not match network");
  std::vector<ParamRef> refs;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& p = net.layers[l];
    auto& g = grads.layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    const NeuronTag tag = p.kind.tag;
    const bool couplings_free = trainer == TrainerKind::kBptt &&
                                p.kind.two_compartment() && !p.fixed_couplings;
    refs.push_back({prefix + "w_in", p.w_in.flat(), g.w_in.flat()});
    if (p.recurrent()) refs.push_back({prefix + "w_rec", p.w_rec.flat(), g.w_rec.flat()});
    refs.push_back({prefix + "bias", p.bias, g.bias});
    auto scalar = [&](const char* name, double& v, double& gv, double lo, double hi,
                      bool trainable) {
      refs.push_back({prefix + name, std::span<double>(&v, 1),
                      std::span<double>(&gv, 1), lo, hi, trainable});
    };
    const double inf = std::numeric_limits<double>::infinity();
    scalar("c1", p.c1, g.c1, -inf, inf, couplings_free);
    scalar("c2", p.c2, g.c2, -inf, inf, couplings_free);
    scalar("alpha1", p.alpha1, g.alpha1, 0.0, 1.0, tag == NeuronTag::kTclifModified);
    scalar("alpha2", p.alpha2, g.alpha2, 0.0, 1.0, tag == NeuronTag::kTclifModified);
    scalar("a_d", p.a_d, g.a_d, kMinDecayFloor, 1.0, tag == NeuronTag::kTclifAdaptive);
    scalar("a_s", p.a_s, g.a_s, kMinDecayFloor, 1.0, tag == NeuronTag::kTclifAdaptive);
  }
  refs.push_back({"readout.w_out", net.w_out.flat(), grads.w_out.flat()});
  return refs;
}

// Restores invariants after an update: decay constants inside their ranges and
// recurrent diagonals at zero.
inline void project(Network& net) {
  for (auto& p : net.layers) {
    p.alpha1 = std::clamp(p.alpha1, 0.0, 1.0);
    p.alpha2 = std::clamp(p.alpha2, 0.0, 1.0);
    p.a_d = std::clamp(p.a_d, kMinDecayFloor, 1.0);
    p.a_s = std::clamp(p.a_s, kMinDecayFloor, 1.0);
    if (p.recurrent()) detail::zero_diagonal(p.w_rec);
  }
}

// Decay multipliers of every layer for the transition out of step t. Only
// adaptive layers consume randomness (two gamma draws each).
inline std::vector<DecayDraw> draws_for_step(const Network& net, std::size_t t,
                                             DecayStream& stream) {
  std::vector<DecayDraw> draws;
  draws.reserve(net.layers.size());
  for (const auto& p : net.layers) {
    if (p.kind.tag == NeuronTag::kTclifAdaptive) {
      draws.push_back(stream.next(t, p.a_d, p.a_s));
    } else {
      DecayDraw d;
      d.t = t;
      draws.push_back(effective_decay(p, d));
    }
  }
  return draws;
}

// Signal the readout integrates for the given top-layer state.
inline MatrixView readout_input(const Network& net, const LayerState& top) {
  return net.readout_source == ReadoutSource::kSpikes ? MatrixView(top.z)
                                                      : MatrixView(top.v_s);
}

// Advances the readout by one step, adds each row's softmax to `prob_sum`,
// writes (softmax - onehot) * scale into `dl_dy` and returns the summed
// per-row cross entropy.
inline double readout_loss_step(const Network& net, ReadoutState& ro,
                                MatrixView top_signal, std::span<const int> labels,
                                double scale, Matrix& dl_dy, Matrix& prob_sum) {
  ro = readout_step(ro, net.w_out, top_signal);
  double loss = 0.0;
  for (std::size_t b = 0; b < ro.y.rows(); ++b) {
    const OutputSignal sig =
        output_learning_signal(ro.y.row(b), static_cast<std::size_t>(labels[b]));
    loss += sig.loss;
    auto d = dl_dy.row(b);
    auto ps = prob_sum.row(b);
    for (std::size_t k = 0; k < d.size(); ++k) {
      d[k] = sig.l_out[k] * scale;
      ps[k] += sig.l_out[k] + (k == static_cast<std::size_t>(labels[b]) ? 1.0 : 0.0);
    }
  }
  return loss;
}

inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] > v[best]) best = k;
  return best;
}

inline std::size_t count_correct(const Matrix& prob_sum, std::span<const int> labels) {
  std::size_t correct = 0;
  for (std::size_t b = 0; b < prob_sum.rows(); ++b)
    if (argmax(prob_sum.row(b)) == static_cast<std::size_t>(labels[b])) ++correct;
  return correct;
}

}  // namespace tclif

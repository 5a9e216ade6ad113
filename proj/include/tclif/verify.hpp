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

// Self-checks on random instances:
//   recursion     iterative eligibility vectors vs. the unrolled sum of
//                 Jacobian products,
//   feedforward   e-prop vs. BPTT on a single feedforward layer without reset,
//   finite-diff   BPTT and e-prop vs. central differences in the subthreshold
//                 (linear) regime.
// A fourth, informational measurement reports the e-prop/BPTT gap when reset
// and recurrence are active; no tolerance applies to it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "tclif/bptt.hpp"
#include "tclif/eprop.hpp"
#include "tclif/network.hpp"
#include "tclif/neurons.hpp"
#include "tclif/online.hpp"

namespace tclif {

struct SuiteResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t instances = 0;
  bool passed() const { return std::isfinite(max_rel_error) && max_rel_error <= tolerance; }
};

namespace detail {

inline constexpr NeuronTag kAllTags[] = {NeuronTag::kLif, NeuronTag::kTclifVanilla,
                                         NeuronTag::kTclifModified,
                                         NeuronTag::kTclifAdaptive};

// Relative error with the denominator floored so that blocks whose reference
// is numerically zero compare absolutely.
inline double block_error(std::span<const double> a, std::span<const double> b,
                          double floor = 1e-8) {
  double num = 0.0, den = floor;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num = std::max(num, std::abs(a[k] - b[k]));
    den = std::max(den, std::abs(b[k]));
  }
  return num / den;
}

inline SequenceBatch random_batch(std::mt19937_64& rng, std::size_t t_len, std::size_t batch,
                                  std::size_t width, std::size_t classes, double hi) {
  std::uniform_real_distribution<double> u(0.0, hi);
  SequenceBatch b;
  b.t_len = t_len;
  b.batch = batch;
  b.input_dim = width;
  b.x.resize(t_len * batch * width);
  for (double& v : b.x) v = u(rng);
  std::uniform_int_distribution<int> lab(0, static_cast<int>(classes) - 1);
  for (std::size_t k = 0; k < batch; ++k) b.labels.push_back(lab(rng));
  return b;
}

}  // namespace detail

// Iterative traces vs. sum_{s<=t} (J_t ... J_{s+1}) d h[s] / dW for random
// decays, couplings and presynaptic sequences.
inline SuiteResult check_recursion(std::uint64_t seed, std::size_t instances = 200) {
  SuiteResult res{"recursion", 0.0, 1e-10, instances};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t n = 0; n < instances; ++n) {
    const NeuronTag tag = detail::kAllTags[n % 4];
    const std::size_t t_len = 1 + rng() % 20;
    const std::size_t pre = 1 + rng() % 8;
    LayerParams p;
    p.kind.tag = tag;
    p.fixed_couplings = Couplings{-u(rng), u(rng)};
    p.alpha1 = u(rng);
    p.alpha2 = u(rng);
    p.a_d = 0.05 + 0.95 * u(rng);
    p.a_s = 0.05 + 0.95 * u(rng);
    DecayStream stream(rng());
    std::vector<DecayDraw> draws;
    std::vector<std::vector<double>> xs;
    for (std::size_t t = 0; t < t_len; ++t) {
      draws.push_back(tag == NeuronTag::kTclifAdaptive ? stream.next(t, p.a_d, p.a_s)
                                                       : effective_decay(p, DecayDraw{}));
      std::vector<double> x(pre);
      for (double& v : x) v = 2.0 * u(rng) - 1.0;
      xs.push_back(x);
    }
    const Couplings c = p.betas();
    const bool two = p.kind.two_compartment();
    TracePair eps(1, pre);
    for (std::size_t t = 0; t < t_len; ++t) {
      const MatrixView x{xs[t].data(), 1, pre};
      if (two) {
        step_eligibility_tclif(eps, x, c, draws[t]);
      } else {
        step_eligibility_lif(eps.s, x, effective_decay(p, draws[t]).a_s_t);
      }
      // Unrolled sum for every presynaptic index.
      std::vector<double> ref_d(pre, 0.0), ref_s(pre, 0.0);
      for (std::size_t s = 0; s <= t; ++s) {
        // Direct term of step s: [x, beta2 x] (TC-LIF) or x (LIF).
        double m[2][2] = {{1.0, 0.0}, {0.0, 1.0}};
        for (std::size_t r = s + 1; r <= t; ++r) {
          const StateJacobian j = state_jacobian(p, draws[r]);
          double next[2][2];
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              next[a][b] = j.m[a][0] * m[0][b] + j.m[a][1] * m[1][b];
          std::copy(&next[0][0], &next[0][0] + 4, &m[0][0]);
        }
        for (std::size_t i = 0; i < pre; ++i) {
          const double dd = two ? xs[s][i] : 0.0;
          const double ds = two ? c.beta2 * xs[s][i] : xs[s][i];
          ref_d[i] += m[0][0] * dd + m[0][1] * ds;
          ref_s[i] += m[1][0] * dd + m[1][1] * ds;
        }
      }
      if (two)
        res.max_rel_error =
            std::max(res.max_rel_error, max_rel_error(eps.d.flat(), ref_d));
      res.max_rel_error = std::max(res.max_rel_error, max_rel_error(eps.s.flat(), ref_s));
    }
  }
  return res;
}

// Random single-layer network with every neuron kind; couplings fixed.
inline Network random_single_layer(std::mt19937_64& rng, NeuronTag tag, std::size_t in,
                                   std::size_t hidden, std::size_t classes, bool reset,
                                   bool recurrent = false) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  NetworkSpec spec;
  spec.widths = {in, hidden, classes};
  spec.recurrent = recurrent;
  spec.kind = NeuronKind{tag, reset};
  spec.v_th = 0.3 + 0.5 * u(rng);
  spec.gamma = 0.3 + 0.7 * u(rng);
  spec.alpha1 = 0.3 + 0.6 * u(rng);
  spec.alpha2 = 0.3 + 0.6 * u(rng);
  spec.a_d = 0.4 + 0.5 * u(rng);
  spec.a_s = 0.4 + 0.5 * u(rng);
  spec.fixed_couplings = Couplings{-0.9 * u(rng), 0.1 + 0.9 * u(rng)};
  spec.kappa = 0.95 * u(rng);
  Network net = make_network(spec, rng());
  for (auto& p : net.layers)
    for (double& b : p.bias) b = 0.2 * (u(rng) - 0.5);
  return net;
}

// Largest per-block relative error between two gradients over the blocks the
// given trainer updates.
inline double grads_error(Network& net, NetworkGrads& a, NetworkGrads& b,
                          TrainerKind trainer) {
  auto ra = param_refs(net, a, trainer);
  auto rb = param_refs(net, b, trainer);
  double err = 0.0;
  for (std::size_t k = 0; k < ra.size(); ++k)
    if (ra[k].trainable) err = std::max(err, detail::block_error(ra[k].grad, rb[k].grad));
  return err;
}

inline SuiteResult check_feedforward(std::uint64_t seed, std::size_t instances = 50) {
  SuiteResult res{"feedforward", 0.0, 1e-8, instances};
  std::mt19937_64 rng(seed);
  for (std::size_t n = 0; n < instances; ++n) {
    const NeuronTag tag = detail::kAllTags[n % 4];
    const std::size_t in = 1 + rng() % 6, hidden = 1 + rng() % 8, classes = 2 + rng() % 3;
    Network net = random_single_layer(rng, tag, in, hidden, classes, false);
    const SequenceBatch batch =
        detail::random_batch(rng, 1 + rng() % 15, 1 + rng() % 3, in, classes, 1.5);
    const std::uint64_t stream_seed = rng();
    NetworkGrads g_online(net), g_bptt(net);
    {
      DecayStream stream(stream_seed);
      EpropTrainer trainer(net, batch.batch);
      trainer.run(net, batch, stream, g_online);
    }
    {
      DecayStream stream(stream_seed);
      ForwardResult fwd = unroll_forward(net, batch, stream);
      backward(fwd.cache, net, g_bptt);
    }
    res.max_rel_error =
        std::max(res.max_rel_error, grads_error(net, g_online, g_bptt, TrainerKind::kEprop));
  }
  return res;
}

// Loss of the network on a batch with a freshly seeded decay stream.
inline double batch_loss(const Network& net, const SequenceBatch& batch,
                         std::uint64_t stream_seed) {
  DecayStream stream(stream_seed);
  return unroll_forward(net, batch, stream).outcome.loss;
}

// Central differences of the mean loss for every trainable entry.
inline NetworkGrads finite_difference_grads(Network& net, const SequenceBatch& batch,
                                            std::uint64_t stream_seed, TrainerKind trainer,
                                            double eps = 1e-5) {
  NetworkGrads fd(net);
  for (auto& r : param_refs(net, fd, trainer)) {
    if (!r.trainable) continue;
    for (std::size_t k = 0; k < r.value.size(); ++k) {
      const double keep = r.value[k];
      r.value[k] = keep + eps;
      const double up = batch_loss(net, batch, stream_seed);
      r.value[k] = keep - eps;
      const double down = batch_loss(net, batch, stream_seed);
      r.value[k] = keep;
      r.grad[k] = (up - down) / (2.0 * eps);
    }
  }
  return fd;
}

// v_th = +inf (no spikes, the map is smooth) and the readout integrates v_s.
// BPTT is checked on every block it trains, including learned couplings;
// e-prop is checked on its blocks, which include the decay constants.
inline SuiteResult check_finite_differences(std::uint64_t seed, std::size_t instances = 24) {
  SuiteResult res{"finite-diff", 0.0, 1e-5, instances};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t n = 0; n < instances; ++n) {
    const NeuronTag tag = detail::kAllTags[n % 4];
    const std::size_t in = 1 + rng() % 4, hidden = 1 + rng() % 5, classes = 2 + rng() % 3;
    Network net = random_single_layer(rng, tag, in, hidden, classes, true);
    net.readout_source = ReadoutSource::kSomatic;
    for (auto& p : net.layers) {
      p.v_th = std::numeric_limits<double>::infinity();
      // Learned couplings exercise the c1/c2 path under BPTT.
      if (tag == NeuronTag::kTclifVanilla || tag == NeuronTag::kTclifAdaptive) {
        p.fixed_couplings.reset();
        p.c1 = 2.0 * u(rng) - 1.0;
        p.c2 = 2.0 * u(rng) - 1.0;
      }
    }
    const SequenceBatch batch =
        detail::random_batch(rng, 2 + rng() % 9, 1 + rng() % 2, in, classes, 1.0);
    const std::uint64_t stream_seed = rng();
    for (TrainerKind trainer : {TrainerKind::kBptt, TrainerKind::kEprop}) {
      NetworkGrads g(net);
      DecayStream stream(stream_seed);
      if (trainer == TrainerKind::kBptt) {
        ForwardResult fwd = unroll_forward(net, batch, stream);
        backward(fwd.cache, net, g);
      } else {
        EpropTrainer online(net, batch.batch);
        online.run(net, batch, stream, g);
      }
      NetworkGrads fd = finite_difference_grads(net, batch, stream_seed, trainer);
      res.max_rel_error = std::max(res.max_rel_error, grads_error(net, g, fd, trainer));
    }
  }
  return res;
}

// Reductions over random sequences. Adaptive with unit floors must reproduce
// vanilla bit for bit (any mismatch reports an infinite error). With a_d_t = 0,
// beta1 = 0 and beta2 = 1 the somatic trajectory must equal LIF elementwise;
// the dendritic reset -gamma z would leak into the soma, so those sequences run
// either with reset off or with reset on and gamma = 0.
inline SuiteResult check_reductions(std::uint64_t seed, std::size_t instances = 100) {
  SuiteResult res{"reductions", 0.0, 1e-12, instances};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto make = [&](NeuronTag tag, std::size_t pre, std::size_t post) {
    LayerParams p;
    p.kind.tag = tag;
    p.w_in = Matrix(post, pre);
    for (double& v : p.w_in.flat()) v = 2.0 * u(rng) - 0.5;
    p.bias = zeros(post);
    p.fixed_couplings = Couplings{-u(rng), u(rng) + 0.1};
    p.v_th = 0.3 + u(rng);
    p.gamma = 0.2 + u(rng);
    return p;
  };
  for (std::size_t n = 0; n < instances; ++n) {
    const std::size_t t_len = 1 + rng() % 100, pre = 1 + rng() % 6, post = 1 + rng() % 8;

    LayerParams van = make(NeuronTag::kTclifVanilla, pre, post);
    LayerParams ada = van;
    ada.kind.tag = NeuronTag::kTclifAdaptive;
    ada.a_d = ada.a_s = 1.0;
    DecayStream stream(rng());
    LayerState a(1, post), b(1, post);
    for (std::size_t t = 0; t < t_len; ++t) {
      Matrix x(1, pre);
      for (double& v : x.flat()) v = u(rng);
      a = layer_step(van, a, x, DecayDraw{});
      b = layer_step(ada, b, x, stream.next(t, ada.a_d, ada.a_s));
      if (!(a.v_d == b.v_d && a.v_s == b.v_s && a.z == b.z))
        res.max_rel_error = std::numeric_limits<double>::infinity();
    }

    const bool reset = n % 2 == 0;
    LayerParams p = make(NeuronTag::kTclifAdaptive, 1, post);
    p.fixed_couplings = Couplings{0.0, 1.0};
    p.kind.reset_enabled = reset;
    if (reset) p.gamma = 0.0;
    LayerState tc(1, post), lif(1, post);
    for (std::size_t t = 0; t < t_len; ++t) {
      DecayDraw d;
      d.a_d_t = 0.0;
      d.a_s_t = u(rng);
      Matrix i(1, post);
      for (double& v : i.flat()) v = 2.0 * u(rng) - 0.5;
      tc = tclif_step(tc, i, p, d);
      lif = lif_step(lif, i, d.a_s_t, p.v_th, reset);
      for (std::size_t k = 0; k < post; ++k) {
        if (tc.z(0, k) != lif.z(0, k))
          res.max_rel_error = std::numeric_limits<double>::infinity();
        const double err =
            std::abs(tc.v_s(0, k) - lif.v_s(0, k)) / (1.0 + std::abs(lif.v_s(0, k)));
        res.max_rel_error = std::max(res.max_rel_error, err);
      }
    }
  }
  return res;
}

// Informational: e-prop vs. BPTT with reset and recurrence switched on.
inline double eprop_bptt_gap(std::uint64_t seed, std::size_t instances = 20) {
  std::mt19937_64 rng(seed);
  double gap = 0.0;
  for (std::size_t n = 0; n < instances; ++n) {
    const NeuronTag tag = detail::kAllTags[n % 4];
    Network net = random_single_layer(rng, tag, 4, 6, 3, true, true);
    const SequenceBatch batch = detail::random_batch(rng, 12, 2, 4, 3, 1.5);
    const std::uint64_t stream_seed = rng();
    NetworkGrads g_online(net), g_bptt(net);
    {
      DecayStream stream(stream_seed);
      EpropTrainer trainer(net, batch.batch);
      trainer.run(net, batch, stream, g_online);
    }
    {
      DecayStream stream(stream_seed);
      ForwardResult fwd = unroll_forward(net, batch, stream);
      backward(fwd.cache, net, g_bptt);
    }
    gap = std::max(gap, grads_error(net, g_online, g_bptt, TrainerKind::kEprop));
  }
  return gap;
}

}  // namespace tclif

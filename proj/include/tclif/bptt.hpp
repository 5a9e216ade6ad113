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

// Reference trainer: unrolls the whole sequence, keeps every intermediate
// state, then runs reverse-mode differentiation by hand. The spike function
// uses the triangular surrogate as its derivative; every other path (reset,
// recurrence, inter-layer, couplings, decay clamps) is differentiated exactly.

#include <array>
#include <cmath>
#include <new>
#include <string>
#include <vector>

#include "tclif/data.hpp"
#include "tclif/eprop.hpp"
#include "tclif/network.hpp"
#include "tclif/neurons.hpp"
#include "tclif/online.hpp"
#include "tclif/tensor.hpp"

namespace tclif {

// d h[t+1] / d h[t] for h = (v_d, v_s) with spikes held fixed:
//   [[A_d,         beta1          ],
//    [beta2 A_d,   A_s + beta1 beta2]]
struct StateJacobian {
  std::array<std::array<double, 2>, 2> m{};
};

inline StateJacobian state_jacobian(const LayerParams& params, const DecayDraw& draw) {
  const DecayDraw d = effective_decay(params, draw);
  StateJacobian j;
  if (!params.kind.two_compartment()) {
    j.m = {{{0.0, 0.0}, {0.0, d.a_s_t}}};
    return j;
  }
  const Couplings c = params.betas();
  j.m = {{{d.a_d_t, c.beta1}, {c.beta2 * d.a_d_t, d.a_s_t + c.beta1 * c.beta2}}};
  return j;
}

struct StepRecord {
  std::vector<LayerState> states;  // state of each layer after this step
  std::vector<Matrix> psi;         // surrogate derivative at that state
  std::vector<DecayDraw> draws;    // decays used to reach it
  Matrix dl_dy;                    // scaled dE_t / dy_t

  std::size_t stored_reals() const {
    std::size_t n = dl_dy.size();
    for (const auto& s : states) n += s.stored_reals();
    for (const auto& p : psi) n += p.size();
    return n;
  }
};

struct UnrollCache {
  const SequenceBatch* batch = nullptr;
  std::vector<StepRecord> steps;

  std::size_t length() const { return steps.size(); }
  std::size_t stored_reals() const {
    std::size_t n = 0;
    for (const auto& s : steps) n += s.stored_reals();
    return n;
  }
};

struct ForwardResult {
  UnrollCache cache;
  BatchOutcome outcome;
};

// Runs the sequence forward, recording every step. Consumes the decay stream in
// exactly the same order as EpropTrainer::run, so both see identical draws and
// compute the same loss bit for bit.
inline ForwardResult unroll_forward(const Network& net, const SequenceBatch& batch,
                                    DecayStream& stream) {
  check_shape(batch.input_dim == net.input_dim(),
              "unroll_forward: batch input width does not match network");
  ForwardResult out;
  out.cache.batch = &batch;
  const std::size_t num_layers = net.layers.size();
  const double scale =
      1.0 / static_cast<double>(batch.t_len * std::max<std::size_t>(batch.batch, 1));
  std::vector<LayerState> states;
  for (const auto& p : net.layers) states.emplace_back(batch.batch, p.post());
  ReadoutState readout(batch.batch, net.num_classes(), net.kappa);
  Matrix prob_sum(batch.batch, net.num_classes());
  double loss_sum = 0.0;

  for (std::size_t t = 0; t < batch.t_len; ++t) {
    StepRecord rec;
    try {
      rec.draws = draws_for_step(net, t, stream);
      MatrixView input = batch.frame(t);
      for (std::size_t l = 0; l < num_layers; ++l) {
        const LayerParams& p = net.layers[l];
        states[l] = layer_step(p, states[l], input, rec.draws[l]);
        const bool linear_top = l + 1 == num_layers &&
                                net.readout_source == ReadoutSource::kSomatic;
        if (linear_top) {
          rec.psi.emplace_back(batch.batch, p.post(), 0.0);
        } else {
          rec.psi.push_back(surrogate_grad(states[l].v_s, p.v_th, p.gamma));
        }
        input = states[l].z;
      }
      rec.dl_dy = Matrix(batch.batch, net.num_classes());
      loss_sum += readout_loss_step(net, readout, readout_input(net, states.back()),
                                    batch.labels, scale, rec.dl_dy, prob_sum);
      rec.states = states;
      out.cache.steps.push_back(std::move(rec));
    } catch (const std::bad_alloc&) {
      throw ResourceError("unroll_forward: out of memory while caching states", t);
    }
  }
  out.outcome.loss = loss_sum * scale;
  out.outcome.correct = count_correct(prob_sum, batch.labels);
  out.outcome.count = batch.batch;
  return out;
}

// Reverse-mode pass over a cache produced by unroll_forward. Adds
// loss_scale * dE/dtheta into `grads`.
inline void backward(const UnrollCache& cache, const Network& net, NetworkGrads& grads,
                     double loss_scale = 1.0) {
  const std::size_t num_layers = net.layers.size();
  const std::size_t steps = cache.length();
  if (steps == 0) return;
  const SequenceBatch& batch = *cache.batch;
  const std::size_t nb = batch.batch;

  // Adjoints of the step after the one being processed.
  std::vector<Matrix> g_d_next, g_s_next, g_i_next;
  std::vector<Matrix> g_d(num_layers), g_s(num_layers), g_i(num_layers);
  for (const auto& p : net.layers) {
    g_d_next.emplace_back(nb, p.post());
    g_s_next.emplace_back(nb, p.post());
    g_i_next.emplace_back(nb, p.post());
  }
  Matrix g_y_next(nb, net.num_classes());
  Matrix g_y(nb, net.num_classes());
  const LayerState zero_top(nb, net.top_width());

  for (std::size_t t = steps; t-- > 0;) {
    const StepRecord& rec = cache.steps[t];
    const StepRecord* next_rec = t + 1 < steps ? &cache.steps[t + 1] : nullptr;

    {
      auto gy = g_y.flat();
      auto gyn = g_y_next.flat();
      auto dl = rec.dl_dy.flat();
      for (std::size_t k = 0; k < gy.size(); ++k)
        gy[k] = loss_scale * dl[k] + net.kappa * gyn[k];
    }
    add_outer_batch(grads.w_out, g_y, readout_input(net, rec.states.back()));

    for (std::size_t l = num_layers; l-- > 0;) {
      const LayerParams& p = net.layers[l];
      LayerGrads& g = grads.layers[l];
      const LayerState& cur = rec.states[l];
      const Matrix& psi = rec.psi[l];
      const bool two = p.kind.two_compartment();
      const Couplings c = two ? p.betas() : Couplings{0.0, 0.0};
      // Decays that carry this step's state into the next one.
      DecayDraw d_next;
      if (next_rec) d_next = effective_decay(p, next_rec->draws[l]);
      const bool top = l + 1 == num_layers;
      const bool reset = p.kind.reset_enabled;

      // dE/dz at this step.
      Matrix g_z(nb, p.post());
      Matrix g_s_direct(nb, p.post());
      if (top) {
        if (net.readout_source == ReadoutSource::kSpikes) {
          add_matmul(g_z, g_y, net.w_out);
        } else {
          add_matmul(g_s_direct, g_y, net.w_out);
        }
      } else {
        add_matmul(g_z, g_i[l + 1], net.layers[l + 1].w_in);
      }
      if (next_rec) {
        if (p.recurrent()) add_matmul(g_z, g_i_next[l], p.w_rec);
        if (reset) {
          auto gz = g_z.flat();
          auto gdn = g_d_next[l].flat();
          auto gsn = g_s_next[l].flat();
          for (std::size_t k = 0; k < gz.size(); ++k) {
            if (two) gz[k] -= p.gamma * gdn[k];
            gz[k] -= p.v_th * gsn[k];
          }
        }
      }

      g_d[l] = Matrix(nb, p.post());
      g_s[l] = Matrix(nb, p.post());
      {
        auto gs = g_s[l].flat();
        auto gd = g_d[l].flat();
        auto gz = g_z.flat();
        auto ps = psi.flat();
        auto gsd = g_s_direct.flat();
        auto gdn = g_d_next[l].flat();
        auto gsn = g_s_next[l].flat();
        for (std::size_t k = 0; k < gs.size(); ++k) {
          double v = ps[k] * gz[k] + gsd[k];
          if (next_rec) v += d_next.a_s_t * gsn[k] + (two ? c.beta1 * gdn[k] : 0.0);
          gs[k] = v;
          if (two) gd[k] = c.beta2 * gs[k] + (next_rec ? d_next.a_d_t * gdn[k] : 0.0);
        }
      }
      g_i[l] = two ? g_d[l] : g_s[l];

      // Parameter gradients for the transition into this step.
      const MatrixView x = l == 0 ? batch.frame(t) : MatrixView(rec.states[l - 1].z);
      add_outer_batch(g.w_in, g_i[l], x);
      if (p.recurrent() && t > 0) {
        add_outer_batch(g.w_rec, g_i[l], cache.steps[t - 1].states[l].z);
        detail::zero_diagonal(g.w_rec);
      }
      for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t j = 0; j < p.post(); ++j) g.bias[j] += g_i[l](b, j);

      if (two) {
        const LayerState& prev = t > 0 ? cache.steps[t - 1].states[l] : zero_top;
        const bool prev_valid = t > 0;
        double dA_d = 0.0, dA_s = 0.0, d_beta1 = 0.0, d_beta2 = 0.0;
        for (std::size_t b = 0; b < nb; ++b) {
          for (std::size_t j = 0; j < p.post(); ++j) {
            const double gd = g_d[l](b, j);
            const double gs = g_s[l](b, j);
            if (prev_valid) {
              dA_d += gd * prev.v_d(b, j);
              dA_s += gs * prev.v_s(b, j);
              d_beta1 += gd * prev.v_s(b, j);
            }
            d_beta2 += gs * cur.v_d(b, j);
          }
        }
        const DecayDraw d_cur = rec.draws[l];
        if (p.kind.tag == NeuronTag::kTclifModified) {
          g.alpha1 += dA_d;
          g.alpha2 += dA_s;
        } else if (p.kind.tag == NeuronTag::kTclifAdaptive) {
          if (d_cur.floor_d) g.a_d += dA_d;
          if (d_cur.floor_s) g.a_s += dA_s;
        }
        if (!p.fixed_couplings) {
          const double s1 = sigmoid(p.c1);
          const double s2 = sigmoid(p.c2);
          g.c1 += d_beta1 * (-s1 * (1.0 - s1));
          g.c2 += d_beta2 * (s2 * (1.0 - s2));
        }
      }
    }

    std::swap(g_y_next, g_y);
    for (std::size_t l = 0; l < num_layers; ++l) {
      std::swap(g_d_next[l], g_d[l]);
      std::swap(g_s_next[l], g_s[l]);
      std::swap(g_i_next[l], g_i[l]);
    }
  }
}

// One row of the memory table.
struct MemoryRow {
  std::size_t t_len = 0;
  std::string algo;
  std::size_t stored_reals = 0;
  std::size_t peak_bytes = 0;
};

// Measures, for each sequence length, the reals a single training step
// allocates beyond the network itself (stored_reals) and the peak of all
// library-managed buffers during that step (peak_bytes). Inputs are synthetic
// uniform [0, 1) streams of width net.input_dim().
inline std::vector<MemoryRow> memory_report(const Network& net,
                                            std::span<const std::size_t> lengths,
                                            std::size_t batch_size, std::uint64_t seed,
                                            EpropOptions opts = {}) {
  std::vector<MemoryRow> rows;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto make = [&](std::size_t t_len) {
    SequenceBatch b;
    b.t_len = t_len;
    b.batch = batch_size;
    b.input_dim = net.input_dim();
    b.x.resize(t_len * batch_size * b.input_dim);
    for (double& v : b.x) v = unif(rng);
    for (std::size_t k = 0; k < batch_size; ++k)
      b.labels.push_back(static_cast<int>(k % net.num_classes()));
    return b;
  };
  for (const char* algo : {"eprop", "bptt"}) {
    for (std::size_t t_len : lengths) {
      const SequenceBatch batch = make(t_len);
      const std::size_t base = MemoryMeter::current_bytes();
      MemoryMeter::reset_peak();
      {
        NetworkGrads grads(net);
        DecayStream stream(seed);
        if (std::string(algo) == "eprop") {
          EpropTrainer trainer(net, batch_size, opts);
          trainer.run(net, batch, stream, grads);
        } else {
          ForwardResult fwd = unroll_forward(net, batch, stream);
          backward(fwd.cache, net, grads);
        }
      }
      MemoryRow row;
      row.t_len = t_len;
      row.algo = algo;
      row.peak_bytes = MemoryMeter::peak_bytes();
      row.stored_reals = (MemoryMeter::peak_bytes() - base) / sizeof(double);
      rows.push_back(row);
    }
  }
  return rows;
}

inline std::string memory_report_csv(std::span<const MemoryRow> rows) {
  std::string out = "T,algo,stored_reals,peak_bytes\n";
  for (const auto& r : rows)
    out += std::to_string(r.t_len) + "," + r.algo + "," + std::to_string(r.stored_reals) +
           "," + std::to_string(r.peak_bytes) + "\n";
  return out;
}

}  // namespace tclif

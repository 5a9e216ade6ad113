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

// Online (e-prop) gradient computation. Every buffer is sized by the network
// and batch width at construction; nothing grows with sequence length.
//
// Per time step the trainer
//   1. advances every layer and its eligibility vectors,
//   2. advances the readout and computes the per-step cross-entropy signal,
//   3. maps it to per-neuron learning signals (readout weights for the top
//      layer, same-step spatial backpropagation below),
//   4. low-pass filters each eligibility trace with the readout leak kappa and
//      adds learning signal x filtered trace to the gradient sums.
// Filtering with kappa makes the top-layer gradient exact for a leaky readout
// when neither recurrence nor reset carries temporal credit.

#include <functional>
#include <vector>

#include "tclif/data.hpp"
#include "tclif/eprop.hpp"
#include "tclif/network.hpp"
#include "tclif/neurons.hpp"
#include "tclif/tensor.hpp"

namespace tclif {

struct EpropOptions {
  TraceContraction contraction = TraceContraction::kSomatic;
};

struct BatchOutcome {
  double loss = 0.0;  // mean cross entropy over time steps and batch rows
  std::size_t correct = 0;
  std::size_t count = 0;
};

class EpropTrainer {
 public:
  // Called after every time step with the gradient accumulated so far; used
  // for per-step parameter updates.
  using StepCallback = std::function<void(std::size_t t, NetworkGrads& grads)>;

  EpropTrainer(const Network& net, std::size_t batch, EpropOptions opts = {})
      : opts_(opts) {
    allocate(net, batch);
  }

  // Runs one batch and adds the gradient of its mean loss into `grads`.
  BatchOutcome run(const Network& net, const SequenceBatch& batch, DecayStream& stream,
                   NetworkGrads& grads, const StepCallback& on_step = {}) {
    start(net, batch);
    advance(net, batch, 0, batch.t_len, stream, grads, on_step);
    return outcome(batch);
  }

  // Clears states, traces and loss sums for a new batch.
  void start(const Network& net, const SequenceBatch& batch) {
    check_shape(batch.input_dim == net.input_dim(),
                "EpropTrainer: batch input width does not match network");
    if (batch.batch != batch_ || states_.size() != net.layers.size())
      allocate(net, batch.batch);
    reset();
  }

  // Processes steps [t_begin, t_end) of the batch, carrying all state over
  // from the previous call.
  void advance(const Network& net, const SequenceBatch& batch, std::size_t t_begin,
               std::size_t t_end, DecayStream& stream, NetworkGrads& grads,
               const StepCallback& on_step = {}) {
    const std::size_t num_layers = net.layers.size();
    const double scale =
        1.0 / static_cast<double>(batch.t_len * std::max<std::size_t>(batch.batch, 1));

    for (std::size_t t = t_begin; t < std::min(t_end, batch.t_len); ++t) {
      const std::vector<DecayDraw> draws = draws_for_step(net, t, stream);
      MatrixView input = batch.frame(t);
      for (std::size_t l = 0; l < num_layers; ++l) {
        const LayerParams& p = net.layers[l];
        LayerState next = layer_step(p, states_[l], input, draws[l]);
        advance_traces(p, l, input, draws[l]);
        states_[l] = std::move(next);
        const bool linear_top = l + 1 == num_layers &&
                                net.readout_source == ReadoutSource::kSomatic;
        if (linear_top) {
          psi_[l].fill(1.0);
        } else {
          psi_[l] = surrogate_grad(states_[l].v_s, p.v_th, p.gamma);
        }
        input = states_[l].z;
      }

      const LayerState& top = states_.back();
      const MatrixView top_signal = readout_input(net, top);
      loss_sum_ += readout_loss_step(net, readout_, top_signal, batch.labels, scale,
                                     dl_dy_, prob_sum_);

      // Readout gradient against the kappa-filtered presynaptic signal.
      filter_into(zbar_, top_signal, net.kappa);
      add_outer_batch(grads.w_out, dl_dy_, zbar_);

      signal_[num_layers - 1].fill(0.0);
      add_matmul(signal_[num_layers - 1], dl_dy_, net.w_out);
      for (std::size_t l = num_layers; l-- > 0;) {
        const LayerParams& p = net.layers[l];
        const bool linear_top = l + 1 == num_layers &&
                                net.readout_source == ReadoutSource::kSomatic;
        accumulate_layer(p, l, net.kappa, linear_top, grads.layers[l]);
        if (l > 0)
          signal_[l - 1] = hidden_learning_signal(signal_[l], p.w_in, psi_[l],
                                                  upward_coupling(p, opts_.contraction));
      }
      if (on_step) on_step(t, grads);
    }
  }

  // Mean loss and accuracy of everything processed since start().
  BatchOutcome outcome(const SequenceBatch& batch) const {
    BatchOutcome out;
    const double scale =
        1.0 / static_cast<double>(batch.t_len * std::max<std::size_t>(batch.batch, 1));
    out.loss = loss_sum_ * scale;
    out.correct = count_correct(prob_sum_, batch.labels);
    out.count = batch.batch;
    return out;
  }

  // Reals held by the trainer between steps (states, traces, readout, signals).
  std::size_t stored_reals() const {
    std::size_t n = readout_.y.size() + dl_dy_.size() + prob_sum_.size() + zbar_.size();
    for (std::size_t l = 0; l < states_.size(); ++l)
      n += states_[l].stored_reals() + elig_[l].stored_reals() + psi_[l].size() +
           signal_[l].size();
    return n;
  }

  const std::vector<EligibilityState>& eligibility() const { return elig_; }
  const std::vector<LayerState>& states() const { return states_; }

 private:
  void allocate(const Network& net, std::size_t batch) {
    batch_ = batch;
    states_.clear();
    elig_.clear();
    psi_.clear();
    signal_.clear();
    for (const auto& p : net.layers) {
      states_.emplace_back(batch, p.post());
      elig_.emplace_back(batch, p);
      psi_.emplace_back(batch, p.post());
      signal_.emplace_back(batch, p.post());
    }
    readout_ = ReadoutState(batch, net.num_classes(), net.kappa);
    dl_dy_ = Matrix(batch, net.num_classes());
    prob_sum_ = Matrix(batch, net.num_classes());
    zbar_ = Matrix(batch, net.top_width());
    ones_ = Matrix(1, 1, 1.0);
  }

  void reset() {
    for (auto& s : states_) {
      s.v_d.fill(0.0);
      s.v_s.fill(0.0);
      s.z.fill(0.0);
    }
    for (auto& e : elig_) {
      for (TracePair* tp : {&e.in, &e.rec, &e.bias, &e.decay1, &e.decay2}) {
        tp->d.fill(0.0);
        tp->s.fill(0.0);
      }
      e.filtered.in.fill(0.0);
      e.filtered.rec.fill(0.0);
      e.filtered.bias.fill(0.0);
      e.filtered.decay1.fill(0.0);
      e.filtered.decay2.fill(0.0);
    }
    readout_.y.fill(0.0);
    prob_sum_.fill(0.0);
    zbar_.fill(0.0);
    loss_sum_ = 0.0;
  }

  static void filter_into(Matrix& bar, MatrixView x, double kappa) {
    auto b = bar.flat();
    for (std::size_t k = 0; k < b.size(); ++k) b[k] = kappa * b[k] + x.data[k];
  }

  // Eligibility vectors for the transition from states_[l] (still the previous
  // state when this runs) to the next one.
  void advance_traces(const LayerParams& p, std::size_t l, MatrixView input,
                      const DecayDraw& draw) {
    EligibilityState& e = elig_[l];
    const LayerState& prev = states_[l];
    if (!p.kind.two_compartment()) {
      step_eligibility_lif(e.in.s, input, p.alpha2);
      if (p.recurrent()) step_eligibility_lif(e.rec.s, prev.z, p.alpha2);
      step_eligibility_lif(e.bias.s, ones_, p.alpha2);
      return;
    }
    const DecayDraw d = effective_decay(p, draw);
    const Couplings c = p.betas();
    // Decay traces first: they read the previous state.
    const NeuronTag tag = p.kind.tag;
    if (tag == NeuronTag::kTclifModified) {
      step_eligibility_decay(e, prev, d, c, true, true);
    } else if (tag == NeuronTag::kTclifAdaptive) {
      step_eligibility_decay(e, prev, d, c, d.floor_d, d.floor_s);
    }
    step_eligibility_tclif(e.in, input, c, d);
    if (p.recurrent()) step_eligibility_tclif(e.rec, prev.z, c, d);
    step_eligibility_tclif(e.bias, ones_, c, d);
  }

  void accumulate_layer(const LayerParams& p, std::size_t l, double kappa,
                        bool linear_top, LayerGrads& g) {
    EligibilityState& e = elig_[l];
    const Matrix& psi = psi_[l];
    const Matrix& sig = signal_[l];
    const ContractionWeights w =
        linear_top ? ContractionWeights{0.0, kTraceSign}
                   : contraction_weights(p.kind.two_compartment(), opts_.contraction,
                                         p.kind.two_compartment() ? p.betas().beta2 : 0.0);
    const std::size_t post = p.post();
    const std::size_t pre = p.pre();
    const bool decays = p.kind.tag == NeuronTag::kTclifModified ||
                        p.kind.tag == NeuronTag::kTclifAdaptive;
    const double bias_d = e.bias.d(0, 0);
    const double bias_s = e.bias.s(0, 0);
    double g_decay1 = 0.0;
    double g_decay2 = 0.0;

    for (std::size_t b = 0; b < batch_; ++b) {
      const auto eps_d = e.in.d.row(b);
      const auto eps_s = e.in.s.row(b);
      for (std::size_t j = 0; j < post; ++j) {
        const double pj = psi(b, j);
        const double lj = sig(b, j);
        const double cd = pj * w.on_d;
        const double cs = pj * w.on_s;
        auto bar = e.filtered.in.row(b * post + j);
        auto gj = g.w_in.row(j);
        for (std::size_t i = 0; i < pre; ++i) {
          bar[i] = kappa * bar[i] + (cd * eps_d[i] + cs * eps_s[i]);
          gj[i] += lj * bar[i];
        }
        if (p.recurrent()) {
          const auto rd = e.rec.d.row(b);
          const auto rs = e.rec.s.row(b);
          auto rbar = e.filtered.rec.row(b * post + j);
          auto gr = g.w_rec.row(j);
          for (std::size_t i = 0; i < post; ++i) {
            if (i == j) continue;
            rbar[i] = kappa * rbar[i] + (cd * rd[i] + cs * rs[i]);
            gr[i] += lj * rbar[i];
          }
        }
        double& bb = e.filtered.bias(b, j);
        bb = kappa * bb + (cd * bias_d + cs * bias_s);
        g.bias[j] += lj * bb;
        if (decays) {
          double& q1 = e.filtered.decay1(b, j);
          q1 = kappa * q1 + (cd * e.decay1.d(b, j) + cs * e.decay1.s(b, j));
          g_decay1 += lj * q1;
          double& q2 = e.filtered.decay2(b, j);
          q2 = kappa * q2 + (cd * e.decay2.d(b, j) + cs * e.decay2.s(b, j));
          g_decay2 += lj * q2;
        }
      }
    }
    if (p.kind.tag == NeuronTag::kTclifModified) {
      g.alpha1 += g_decay1;
      g.alpha2 += g_decay2;
    } else if (p.kind.tag == NeuronTag::kTclifAdaptive) {
      g.a_d += g_decay1;
      g.a_s += g_decay2;
    }
  }

  EpropOptions opts_;
  std::size_t batch_ = 0;
  std::vector<LayerState> states_;
  std::vector<EligibilityState> elig_;
  std::vector<Matrix> psi_;
  std::vector<Matrix> signal_;
  ReadoutState readout_;
  Matrix dl_dy_;
  Matrix prob_sum_;
  Matrix zbar_;
  Matrix ones_;
  double loss_sum_ = 0.0;
};

}  // namespace tclif

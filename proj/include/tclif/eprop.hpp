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

// Building blocks of online credit assignment: eligibility vectors, their
// contraction into eligibility traces, the leaky readout, learning signals and
// gradient accumulation.
//
// For a two-compartment neuron the eligibility vector of a synapse (j, i) is
// eps = [d v_d / dW, d v_s / dW], propagated forward as
//   eps_d[t] = A_d eps_d[t-1] + beta1 eps_s[t-1] + pre_i[t]
//   eps_s[t] = A_s eps_s[t-1] + beta2 eps_d[t]
// Reset terms are treated as constants. Because the recursion coefficients are
// shared by every neuron of a layer, eps depends on the presynaptic index
// only; the trainer stores it once per presynaptic unit and batch row.

#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include "tclif/errors.hpp"
#include "tclif/neurons.hpp"
#include "tclif/tensor.hpp"

namespace tclif {

// How the spike pseudo-derivative is contracted with the eligibility vector.
//   kSomatic:  e = psi * eps_s. Since eps_s already contains the path through
//              v_d, this is dz/dW of the forward graph.
//   kCombined: e = psi * (beta2 * eps_d + eps_s), i.e. dz/dh taken as
//              [beta2 psi, psi]; adds the dendritic path a second time.
enum class TraceContraction { kSomatic, kCombined };

inline std::string_view to_string(TraceContraction c) {
  return c == TraceContraction::kSomatic ? "somatic" : "combined";
}

inline TraceContraction trace_contraction_from_string(std::string_view s) {
  if (s == "somatic") return TraceContraction::kSomatic;
  if (s == "combined") return TraceContraction::kCombined;
  throw ParameterError("unknown trace contraction '" + std::string(s) + "'");
}

// Two-component eligibility vectors, one row per batch element and one column
// per presynaptic unit.
struct TracePair {
  Matrix d;
  Matrix s;

  TracePair() = default;
  TracePair(std::size_t rows, std::size_t cols) : d(rows, cols), s(rows, cols) {}
  std::size_t stored_reals() const { return d.size() + s.size(); }
};

// Filtered eligibility traces of one layer: rows are (batch, post) pairs,
// columns presynaptic units.
struct FilteredTraces {
  Matrix in;    // (batch * post) x pre
  Matrix rec;   // (batch * post) x post, zero diagonal per batch block
  Matrix bias;  // batch x post
  Matrix decay1;  // batch x post, alpha1 / a_d
  Matrix decay2;  // batch x post, alpha2 / a_s
};

struct EligibilityState {
  TracePair in;     // pre = x[t]
  TracePair rec;    // pre = z[t-1]; empty for feedforward layers
  TracePair bias;   // 1 x 1, pre = 1
  TracePair decay1;  // batch x post, alpha1 or a_d
  TracePair decay2;  // batch x post, alpha2 or a_s
  FilteredTraces filtered;

  EligibilityState() = default;
  EligibilityState(std::size_t batch, const LayerParams& p)
      : in(batch, p.pre()), bias(1, 1), decay1(batch, p.post()),
        decay2(batch, p.post()) {
    if (p.recurrent()) rec = TracePair(batch, p.post());
    filtered.in = Matrix(batch * p.post(), p.pre());
    if (p.recurrent()) filtered.rec = Matrix(batch * p.post(), p.post());
    filtered.bias = Matrix(batch, p.post());
    filtered.decay1 = Matrix(batch, p.post());
    filtered.decay2 = Matrix(batch, p.post());
  }

  std::size_t stored_reals() const {
    return in.stored_reals() + rec.stored_reals() + bias.stored_reals() +
           decay1.stored_reals() + decay2.stored_reals() + filtered.in.size() +
           filtered.rec.size() + filtered.bias.size() + filtered.decay1.size() +
           filtered.decay2.size();
  }
};

// LIF: eps' = alpha eps + pre.
inline void step_eligibility_lif(Matrix& eps, MatrixView pre_t, double alpha) {
  check_shape(eps.rows() == pre_t.rows && eps.cols() == pre_t.cols,
              "step_eligibility_lif: trace and input shapes differ");
  auto e = eps.flat();
  for (std::size_t k = 0; k < e.size(); ++k)
    e[k] = alpha * e[k] + pre_t.data[k];
}

// Two-compartment recursion in sequential form.
inline void step_eligibility_tclif(TracePair& eps, MatrixView pre_t,
                                   const Couplings& c, const DecayDraw& decay) {
  check_shape(eps.d.rows() == pre_t.rows && eps.d.cols() == pre_t.cols &&
                  eps.s.same_shape(eps.d),
              "step_eligibility_tclif: trace and input shapes differ");
  auto d = eps.d.flat();
  auto s = eps.s.flat();
  for (std::size_t k = 0; k < d.size(); ++k) {
    d[k] = decay.a_d_t * d[k] + c.beta1 * s[k] + pre_t.data[k];
    s[k] = decay.a_s_t * s[k] + c.beta2 * d[k];
  }
}

// Same recursion in expanded form:
//   eps_s[t] = (A_s + beta1 beta2) eps_s[t-1] + A_d beta2 eps_d[t-1] + beta2 pre
inline void step_eligibility_tclif_expanded(TracePair& eps, MatrixView pre_t,
                                            const Couplings& c,
                                            const DecayDraw& decay) {
  check_shape(eps.d.rows() == pre_t.rows && eps.d.cols() == pre_t.cols &&
                  eps.s.same_shape(eps.d),
              "step_eligibility_tclif_expanded: trace and input shapes differ");
  auto d = eps.d.flat();
  auto s = eps.s.flat();
  for (std::size_t k = 0; k < d.size(); ++k) {
    const double d_prev = d[k];
    const double s_prev = s[k];
    const double x = pre_t.data[k];
    d[k] = decay.a_d_t * d_prev + c.beta1 * s_prev + x;
    s[k] = (decay.a_s_t + c.beta1 * c.beta2) * s_prev +
           decay.a_d_t * c.beta2 * d_prev + c.beta2 * x;
  }
}

// Per-neuron contraction weight on eps_d and eps_s.
struct ContractionWeights {
  double on_d = 0.0;
  double on_s = 1.0;
};

// Building with TCLIF_MUTATE_TRACE_SIGN flips the sign of every trace; the
// gradient checks must then fail.
#ifdef TCLIF_MUTATE_TRACE_SIGN
inline constexpr double kTraceSign = -1.0;
#else
inline constexpr double kTraceSign = 1.0;
#endif

inline ContractionWeights contraction_weights(bool two_compartment,
                                              TraceContraction c, double beta2) {
  if (two_compartment && c == TraceContraction::kCombined)
    return {kTraceSign * beta2, kTraceSign};
  return {0.0, kTraceSign};
}

// e[j][i] = psi[j] (w_d eps_d[j][i] + w_s eps_s[j][i]) for one sample, with the
// per-synapse eligibility vectors given as (post x pre) matrices.
inline Matrix eligibility_trace(const Matrix& eps_d, const Matrix& eps_s,
                                std::span<const double> psi, double beta2,
                                TraceContraction contraction =
                                    TraceContraction::kCombined) {
  check_shape(eps_d.same_shape(eps_s) && psi.size() == eps_d.rows(),
              "eligibility_trace: shape mismatch");
  const ContractionWeights w = contraction_weights(true, contraction, beta2);
  Matrix e(eps_d.rows(), eps_d.cols());
  for (std::size_t j = 0; j < e.rows(); ++j) {
    for (std::size_t i = 0; i < e.cols(); ++i) {
      e(j, i) = psi[j] * (w.on_d * eps_d(j, i) + w.on_s * eps_s(j, i));
    }
  }
  return e;
}

// LIF layers: e[j][i] = psi[j] eps[j][i].
inline Matrix eligibility_trace_lif(const Matrix& eps, std::span<const double> psi) {
  check_shape(psi.size() == eps.rows(), "eligibility_trace_lif: shape mismatch");
  Matrix e(eps.rows(), eps.cols());
  for (std::size_t j = 0; j < e.rows(); ++j)
    for (std::size_t i = 0; i < e.cols(); ++i) e(j, i) = psi[j] * eps(j, i);
  return e;
}

// Non-spiking leaky integrator y' = kappa y + z W_out^T.
struct ReadoutState {
  Matrix y;  // batch x classes
  double kappa = 0.9;

  ReadoutState() = default;
  ReadoutState(std::size_t batch, std::size_t classes, double kappa_)
      : y(batch, classes), kappa(kappa_) {}
};

inline ReadoutState readout_step(const ReadoutState& ro, const Matrix& w_out,
                                 MatrixView z_t) {
  check_shape(z_t.cols == w_out.cols() && z_t.rows == ro.y.rows() &&
                  ro.y.cols() == w_out.rows(),
              "readout_step: shape mismatch");
  ReadoutState next = ro;
  auto y = next.y.flat();
  for (double& v : y) v *= ro.kappa;
  add_matmul_transposed(next.y, z_t, w_out);
  return next;
}

struct OutputSignal {
  double loss = 0.0;
  std::vector<double> l_out;  // softmax(y) - onehot(target)
};

inline void softmax_into(std::span<const double> y, std::span<double> p) {
  double m = y[0];
  for (double v : y) m = std::max(m, v);
  double z = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    p[k] = std::exp(y[k] - m);
    z += p[k];
  }
  for (double& v : p) v /= z;
}

// Cross entropy of softmax(y) against target, and its gradient w.r.t. y.
inline OutputSignal output_learning_signal(std::span<const double> y,
                                           std::size_t target) {
  if (target >= y.size())
    throw ParameterError("output_learning_signal: target out of range");
  OutputSignal out;
  out.l_out.resize(y.size());
  double m = y[0];
  for (double v : y) m = std::max(m, v);
  double z = 0.0;
  for (double v : y) z += std::exp(v - m);
  const double log_z = m + std::log(z);
  out.loss = log_z - y[target];
  for (std::size_t k = 0; k < y.size(); ++k)
    out.l_out[k] = std::exp(y[k] - log_z) - (k == target ? 1.0 : 0.0);
  return out;
}

// Same-step spatial backpropagation of a learning signal from an upper layer:
//   L[b][i] = sum_j l_upper[b][j] * psi_upper[b][j] * coupling * w_upper[j][i]
// `coupling` is d v_s / d I of the upper neuron as seen by the chosen
// contraction (beta2, 2 beta2 for the combined form, or 1 for LIF).
inline Matrix hidden_learning_signal(const Matrix& l_upper, const Matrix& w_upper,
                                     const Matrix& psi_upper, double coupling) {
  check_shape(l_upper.same_shape(psi_upper) && l_upper.cols() == w_upper.rows(),
              "hidden_learning_signal: shape mismatch");
  Matrix scaled(l_upper.rows(), l_upper.cols());
  auto s = scaled.flat();
  auto l = l_upper.flat();
  auto p = psi_upper.flat();
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = l[k] * p[k] * coupling;
  Matrix out(l_upper.rows(), w_upper.cols());
  add_matmul(out, scaled, w_upper);
  return out;
}

// d v_s / d I as weighted by the contraction; used to pass learning signals
// down through a layer.
inline double upward_coupling(const LayerParams& p, TraceContraction c) {
  if (!p.kind.two_compartment()) return 1.0;
  const double beta2 = p.betas().beta2;
  return c == TraceContraction::kCombined ? 2.0 * beta2 : beta2;
}

// g[j][i] += sum_b l[b][j] e[b][j][i], with e laid out as (batch * post) x pre.
inline void accumulate(Matrix& g, const Matrix& l, const Matrix& e) {
  check_shape(l.cols() == g.rows() && e.rows() == l.rows() * l.cols() &&
                  e.cols() == g.cols(),
              "accumulate: shape mismatch");
  const std::size_t post = g.rows();
  for (std::size_t b = 0; b < l.rows(); ++b) {
    const auto lb = l.row(b);
    for (std::size_t j = 0; j < post; ++j) {
      const double lj = lb[j];
      if (lj == 0.0) continue;
      const auto ej = e.row(b * post + j);
      auto gj = g.row(j);
      for (std::size_t i = 0; i < gj.size(); ++i) gj[i] += lj * ej[i];
    }
  }
}

// Traces for the learnable decay constants of one layer. `state_prev` is the
// state the transition starts from. The direct term d h[t] / d theta is
// v_d[t-1] (first constant) or v_s[t-1] (second constant) for the modified
// neuron; for the adaptive neuron it is the same value when the draw sits at
// its floor and zero otherwise.
inline void step_eligibility_decay(EligibilityState& elig,
                                   const LayerState& state_prev,
                                   const DecayDraw& decay, const Couplings& c,
                                   bool clamped_d, bool clamped_s) {
  check_shape(elig.decay1.d.same_shape(state_prev.v_d),
              "step_eligibility_decay: trace and state shapes differ");
  auto d1 = elig.decay1.d.flat();
  auto s1 = elig.decay1.s.flat();
  auto d2 = elig.decay2.d.flat();
  auto s2 = elig.decay2.s.flat();
  auto vd = state_prev.v_d.flat();
  auto vs = state_prev.v_s.flat();
  for (std::size_t k = 0; k < d1.size(); ++k) {
    d1[k] = decay.a_d_t * d1[k] + c.beta1 * s1[k] + (clamped_d ? vd[k] : 0.0);
    s1[k] = decay.a_s_t * s1[k] + c.beta2 * d1[k];
    d2[k] = decay.a_d_t * d2[k] + c.beta1 * s2[k];
    s2[k] = decay.a_s_t * s2[k] + c.beta2 * d2[k] + (clamped_s ? vs[k] : 0.0);
  }
}

}  // namespace tclif

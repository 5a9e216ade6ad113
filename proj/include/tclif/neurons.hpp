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

// Discrete-time dynamics of the supported spiking neurons.
//
// LIF keeps one membrane potential:
//   v[t+1] = alpha v[t] - v_th z[t] + I[t+1],       z = H(v - v_th)
//
// The two-compartment (TC-LIF) family keeps a dendritic potential v_d and a
// somatic potential v_s:
//   v_d[t+1] = A_d[t] v_d[t] + beta1 v_s[t]   - gamma z[t] + I[t+1]
//   v_s[t+1] = A_s[t] v_s[t] + beta2 v_d[t+1] - v_th  z[t]
//   z[t+1]   = H(v_s[t+1] - v_th)
// with (A_d, A_s) = (1, 1) for the vanilla neuron, constant learnable
// (alpha1, alpha2) for the modified neuron, and clamped gamma-distributed
// draws with learnable floors (a_d, a_s) for the adaptive neuron.
//
// All functions here are pure: state in, state out. A LIF layer stores its
// membrane in LayerState::v_s and leaves v_d at zero.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "tclif/errors.hpp"
#include "tclif/tensor.hpp"

namespace tclif {

enum class NeuronTag { kLif, kTclifVanilla, kTclifModified, kTclifAdaptive };

inline std::string_view to_string(NeuronTag tag) {
  switch (tag) {
    case NeuronTag::kLif:
      return "lif";
    case NeuronTag::kTclifVanilla:
      return "tclif_vanilla";
    case NeuronTag::kTclifModified:
      return "tclif_modified";
    case NeuronTag::kTclifAdaptive:
      return "tclif_adaptive";
  }
  return "?";
}

inline NeuronTag neuron_tag_from_string(std::string_view s) {
  if (s == "lif") return NeuronTag::kLif;
  if (s == "tclif_vanilla" || s == "vanilla") return NeuronTag::kTclifVanilla;
  if (s == "tclif_modified" || s == "modified") return NeuronTag::kTclifModified;
  if (s == "tclif_adaptive" || s == "adaptive") return NeuronTag::kTclifAdaptive;
  throw ParameterError("unknown neuron kind '" + std::string(s) + "'");
}

struct NeuronKind {
  NeuronTag tag = NeuronTag::kTclifAdaptive;
  // Test-harness switch: false removes both reset terms from the update.
  bool reset_enabled = true;

  bool two_compartment() const { return tag != NeuronTag::kLif; }
};

struct Couplings {
  double beta1 = -0.5;
  double beta2 = 0.5;
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// beta1 = -sigmoid(c1) in (-1, 0), beta2 = sigmoid(c2) in (0, 1).
inline Couplings couplings(double c1, double c2) {
  return {-sigmoid(c1), sigmoid(c2)};
}

struct LayerParams {
  Matrix w_in;   // post x pre
  Matrix w_rec;  // post x post with zero diagonal; empty for feedforward layers
  Vector bias;   // post
  double c1 = 0.0;
  double c2 = 0.0;
  // When set, the couplings are held at these values instead of being derived
  // from (c1, c2). The modified neuron always uses fixed couplings.
  std::optional<Couplings> fixed_couplings;
  double alpha1 = 1.0;
  double alpha2 = 1.0;  // also the membrane decay of LIF layers
  double a_d = 1.0;
  double a_s = 1.0;
  double v_th = 1.0;
  double gamma = 0.5;
  NeuronKind kind;

  std::size_t post() const { return w_in.rows(); }
  std::size_t pre() const { return w_in.cols(); }
  bool recurrent() const { return !w_rec.empty(); }

  Couplings betas() const {
    if (fixed_couplings) return *fixed_couplings;
    return couplings(c1, c2);
  }
};

struct LayerState {
  Matrix v_d;  // batch x post
  Matrix v_s;  // batch x post
  Matrix z;    // batch x post, entries in {0, 1}

  LayerState() = default;
  LayerState(std::size_t batch, std::size_t post)
      : v_d(batch, post), v_s(batch, post), z(batch, post) {}

  std::size_t batch() const { return v_s.rows(); }
  std::size_t post() const { return v_s.cols(); }
  std::size_t stored_reals() const { return v_d.size() + v_s.size() + z.size(); }
};

// Decay multipliers for one transition t -> t+1 of one layer.
struct DecayDraw {
  double a_d_t = 1.0;
  double a_s_t = 1.0;
  std::size_t t = 0;
  // True when the raw draw fell below the floor and the clamp returned the
  // floor itself; the clamp's derivative with respect to the floor is then 1.
  bool floor_d = false;
  bool floor_s = false;
};

// H(x) = 1 for x >= 0.
inline double heaviside(double x) { return x >= 0.0 ? 1.0 : 0.0; }

// Triangular pseudo-derivative of the spike function:
//   psi = max(0, gamma - |v_s - v_th|) / gamma^2
inline double surrogate_grad(double v_s, double v_th, double gamma) {
  const double d = gamma - std::abs(v_s - v_th);
  return d > 0.0 ? d / (gamma * gamma) : 0.0;
}

inline Matrix surrogate_grad(const Matrix& v_s, double v_th, double gamma) {
  if (!(gamma > 0.0)) throw ParameterError("surrogate_grad: gamma must be > 0");
  Matrix psi(v_s.rows(), v_s.cols());
  auto in = v_s.flat();
  auto out = psi.flat();
  for (std::size_t k = 0; k < in.size(); ++k)
    out[k] = surrogate_grad(in[k], v_th, gamma);
  return psi;
}

// I = x W_in^T + z_prev W_rec^T + b, computed per batch row.
inline Matrix input_current(const LayerParams& params, MatrixView x_t,
                            MatrixView z_prev) {
  check_shape(x_t.cols == params.pre(),
              "input_current: input width does not match w_in columns");
  check_shape(params.bias.size() == params.post(),
              "input_current: bias length does not match layer width");
  Matrix current(x_t.rows, params.post());
  for (std::size_t b = 0; b < x_t.rows; ++b) {
    auto row = current.row(b);
    for (std::size_t j = 0; j < params.post(); ++j) row[j] = params.bias[j];
  }
  add_matmul_transposed(current, x_t, params.w_in);
  if (params.recurrent()) {
    check_shape(z_prev.rows == x_t.rows && z_prev.cols == params.post(),
                "input_current: z_prev does not match w_rec");
    add_matmul_transposed(current, z_prev, params.w_rec);
  }
  return current;
}

namespace detail {

// Reset subtraction, written so that an infinite threshold with z = 0 adds 0.
inline double reset_term(double magnitude, double z, bool enabled) {
  return (enabled && z != 0.0) ? magnitude * z : 0.0;
}

}  // namespace detail

inline LayerState lif_step(const LayerState& state, const Matrix& i_t,
                           double alpha, double v_th, bool reset_enabled = true) {
  check_shape(i_t.same_shape(state.v_s), "lif_step: current does not match state");
  LayerState next(state.batch(), state.post());
  auto v = state.v_s.flat();
  auto z = state.z.flat();
  auto in = i_t.flat();
  auto v_out = next.v_s.flat();
  auto z_out = next.z.flat();
  for (std::size_t k = 0; k < v.size(); ++k) {
    v_out[k] = alpha * v[k] - detail::reset_term(v_th, z[k], reset_enabled) + in[k];
    z_out[k] = heaviside(v_out[k] - v_th);
  }
  return next;
}

// The decay multipliers a layer of the given kind actually applies.
inline DecayDraw effective_decay(const LayerParams& params, const DecayDraw& draw) {
  DecayDraw out = draw;
  switch (params.kind.tag) {
    case NeuronTag::kTclifVanilla:
      out.a_d_t = out.a_s_t = 1.0;
      out.floor_d = out.floor_s = false;
      break;
    case NeuronTag::kTclifModified:
      out.a_d_t = params.alpha1;
      out.a_s_t = params.alpha2;
      out.floor_d = out.floor_s = false;
      break;
    case NeuronTag::kLif:
      out.a_d_t = 0.0;
      out.a_s_t = params.alpha2;
      out.floor_d = out.floor_s = false;
      break;
    case NeuronTag::kTclifAdaptive:
      break;
  }
  return out;
}

inline LayerState tclif_step(const LayerState& state, const Matrix& i_t,
                             const LayerParams& params, const DecayDraw& decay) {
  check_shape(i_t.same_shape(state.v_s) && state.v_d.same_shape(state.v_s),
              "tclif_step: current does not match state");
  check_shape(state.post() == params.post(),
              "tclif_step: state width does not match layer");
  const DecayDraw d = effective_decay(params, decay);
  const Couplings c = params.betas();
  const bool reset = params.kind.reset_enabled;
  LayerState next(state.batch(), state.post());
  auto vd = state.v_d.flat();
  auto vs = state.v_s.flat();
  auto z = state.z.flat();
  auto in = i_t.flat();
  auto vd_out = next.v_d.flat();
  auto vs_out = next.v_s.flat();
  auto z_out = next.z.flat();
  for (std::size_t k = 0; k < vd.size(); ++k) {
    vd_out[k] = d.a_d_t * vd[k] + c.beta1 * vs[k] -
                detail::reset_term(params.gamma, z[k], reset) + in[k];
    vs_out[k] = d.a_s_t * vs[k] + c.beta2 * vd_out[k] -
                detail::reset_term(params.v_th, z[k], reset);
    z_out[k] = heaviside(vs_out[k] - params.v_th);
  }
  return next;
}

// One full layer update: input current followed by the neuron's dynamics.
inline LayerState layer_step(const LayerParams& params, const LayerState& prev,
                             MatrixView x_t, const DecayDraw& decay) {
  const Matrix current = input_current(params, x_t, prev.z);
  if (params.kind.tag == NeuronTag::kLif)
    return lif_step(prev, current, params.alpha2, params.v_th,
                    params.kind.reset_enabled);
  return tclif_step(prev, current, params, decay);
}

// Draws A_d[t], A_s[t] = clamp(Gamma(shape t+1, scale 1/(t+1)), floor, 1).
// A stream is seeded once; every consumer that replays the same sequence of
// calls sees the same draws.
class DecayStream {
 public:
  explicit DecayStream(std::uint64_t seed = 0) : engine_(seed) {}

  DecayDraw next(std::size_t t, double a_d, double a_s) {
    check_floor(a_d, "a_d");
    check_floor(a_s, "a_s");
    const double shape = static_cast<double>(t) + 1.0;
    std::gamma_distribution<double> gamma(shape, 1.0 / shape);
    const double g_d = gamma(engine_);
    const double g_s = gamma(engine_);
    DecayDraw draw;
    draw.t = t;
    draw.a_d_t = clamp(g_d, a_d, &draw.floor_d);
    draw.a_s_t = clamp(g_s, a_s, &draw.floor_s);
    return draw;
  }

  // Unclamped draw, exposed for distribution checks.
  double raw(std::size_t t) {
    const double shape = static_cast<double>(t) + 1.0;
    std::gamma_distribution<double> gamma(shape, 1.0 / shape);
    return gamma(engine_);
  }

 private:
  static void check_floor(double a, const char* name) {
    if (!(a > 0.0 && a <= 1.0))
      throw ParameterError(std::string("sample_decay: ") + name +
                           " must lie in (0, 1]");
  }
  static double clamp(double g, double floor, bool* at_floor) {
    *at_floor = g < floor;
    if (g < floor) return floor;
    if (g > 1.0) return 1.0;
    return g;
  }

  std::mt19937_64 engine_;
};

inline DecayDraw sample_decay(std::size_t t, double a_d, double a_s,
                              DecayStream& rng) {
  return rng.next(t, a_d, a_s);
}

}  // namespace tclif

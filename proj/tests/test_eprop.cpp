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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "tclif.hpp"

namespace {

using namespace tclif;

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, v.size());
  std::copy(v.begin(), v.end(), m.flat().begin());
  return m;
}

TEST(LifTrace, ZeroIsFixedPoint) {
  Matrix eps(1, 3);
  step_eligibility_lif(eps, Matrix(1, 3), 0.7);
  for (double v : eps.flat()) EXPECT_EQ(v, 0.0);
}

TEST(LifTrace, UnitDecayAccumulates) {
  Matrix eps(1, 1);
  for (int t = 0; t < 7; ++t) step_eligibility_lif(eps, row({0.25}), 1.0);
  EXPECT_DOUBLE_EQ(eps(0, 0), 7 * 0.25);
}

TEST(LifTrace, GeometricDecay) {
  Matrix eps(1, 1);
  for (double x : {1.0, 0.0, 0.0}) step_eligibility_lif(eps, row({x}), 0.9);
  EXPECT_NEAR(eps(0, 0), 0.81, 1e-15);
}

TEST(TclifTrace, ZeroIsFixedPoint) {
  TracePair eps(1, 2);
  step_eligibility_tclif(eps, Matrix(1, 2), Couplings{-0.5, 1.0}, DecayDraw{});
  for (double v : eps.d.flat()) EXPECT_EQ(v, 0.0);
  for (double v : eps.s.flat()) EXPECT_EQ(v, 0.0);
}

TEST(TclifTrace, VanillaFirstStep) {
  TracePair eps(1, 1);
  step_eligibility_tclif(eps, row({1.0}), Couplings{-0.5, 1.0}, DecayDraw{});
  EXPECT_EQ(eps.d(0, 0), 1.0);
  EXPECT_EQ(eps.s(0, 0), 1.0);
}

// Sequential form, expanded form, dual-number derivative and the explicit
// Jacobian-chain sum on random instances of every kind.
TEST(TclifTrace, FormsAgreeWithOracles) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const NeuronTag tag = oracle::kTags[trial % 4];
    const bool lif = tag == NeuronTag::kLif;
    const std::size_t t_len = 20, pre = 1 + rng() % 8;
    LayerParams p;
    p.kind.tag = tag;
    p.fixed_couplings = Couplings{-u(rng), u(rng)};
    p.alpha1 = u(rng);
    p.alpha2 = u(rng);
    DecayStream stream(rng());
    const double floor_d = 0.05 + 0.9 * u(rng), floor_s = 0.05 + 0.9 * u(rng);
    std::vector<DecayDraw> draws;
    std::vector<oracle::Decay> decays;
    for (std::size_t t = 0; t < t_len; ++t) {
      const DecayDraw d = stream.next(t, floor_d, floor_s);
      draws.push_back(d);
      decays.push_back(oracle::decay_of(p, d));
    }
    std::vector<std::vector<double>> x(pre, std::vector<double>(t_len));
    for (auto& xi : x)
      for (double& v : xi) v = 2 * u(rng) - 1;
    const Couplings c = p.betas();
    TracePair seq(1, pre), exp(1, pre);
    std::vector<oracle::TraceOut> dual, chain;
    for (std::size_t i = 0; i < pre; ++i) {
      dual.push_back(oracle::dual_traces(x[i], decays, c.beta1, c.beta2, lif));
      chain.push_back(oracle::jacobian_chain_traces(x[i], decays, c.beta1, c.beta2, lif));
    }
    for (std::size_t t = 0; t < t_len; ++t) {
      Matrix xt(1, pre);
      for (std::size_t i = 0; i < pre; ++i) xt(0, i) = x[i][t];
      const DecayDraw d = effective_decay(p, draws[t]);
      if (lif) {
        step_eligibility_lif(seq.s, xt, d.a_s_t);
      } else {
        step_eligibility_tclif(seq, xt, c, d);
        step_eligibility_tclif_expanded(exp, xt, c, d);
        ASSERT_LE(max_rel_error(exp.s.flat(), seq.s.flat()), 1e-12);
        ASSERT_LE(max_rel_error(exp.d.flat(), seq.d.flat()), 1e-12);
      }
      std::vector<double> dual_s, chain_s, dual_d, chain_d;
      for (std::size_t i = 0; i < pre; ++i) {
        dual_s.push_back(dual[i].s[t]);
        chain_s.push_back(chain[i].s[t]);
        dual_d.push_back(dual[i].d[t]);
        chain_d.push_back(chain[i].d[t]);
      }
      const std::vector<double> got_s(seq.s.flat().begin(), seq.s.flat().end());
      ASSERT_LE(oracle::rel_err(got_s, chain_s), 1e-10);
      ASSERT_LE(oracle::rel_err(got_s, dual_s), 1e-10);
      if (!lif) {
        const std::vector<double> got_d(seq.d.flat().begin(), seq.d.flat().end());
        ASSERT_LE(oracle::rel_err(got_d, chain_d), 1e-10);
        ASSERT_LE(oracle::rel_err(got_d, dual_d), 1e-10);
      }
    }
  }
}

TEST(EligibilityTrace, DeadSurrogateGivesZero) {
  Matrix d(2, 2, 3.0), s(2, 2, -1.0);
  const std::vector<double> psi{0.0, 0.0};
  const Matrix e = eligibility_trace(d, s, psi, 0.7);
  for (double v : e.flat()) EXPECT_EQ(v, 0.0);
}

TEST(EligibilityTrace, CombinedFormHandValue) {
  const Matrix d(1, 1, 2.0), s(1, 1, 3.0);
  const std::vector<double> psi{0.5};
  EXPECT_DOUBLE_EQ(eligibility_trace(d, s, psi, 1.0)(0, 0), 2.5);
}

// z depends on h only through v_s, so dz/dh = [0, psi] and the exact trace is
// psi * eps_s; the combined form adds psi * beta2 * eps_d on top.
TEST(EligibilityTrace, SomaticFormIsSpikeJacobianTimesVector) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix d(3, 4), s(3, 4);
  for (double& v : d.flat()) v = u(rng);
  for (double& v : s.flat()) v = u(rng);
  LayerParams p;
  p.v_th = 0.4;
  p.gamma = 0.6;
  Matrix v_s(1, 3);
  for (double& v : v_s.flat()) v = u(rng);
  const Matrix psi = surrogate_grad(v_s, p.v_th, p.gamma);
  const double beta2 = 0.8;
  const Matrix som = eligibility_trace(d, s, psi.flat(), beta2, TraceContraction::kSomatic);
  const Matrix com = eligibility_trace(d, s, psi.flat(), beta2, TraceContraction::kCombined);
  for (std::size_t j = 0; j < 3; ++j) {
    // Hand-evaluated triangle derivative; dz/dv_d is zero.
    const double dz_dvs =
        std::max(0.0, p.gamma - std::abs(v_s(0, j) - p.v_th)) / (p.gamma * p.gamma);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(som(j, i), dz_dvs * s(j, i), 1e-14);
      EXPECT_NEAR(com(j, i), psi(0, j) * (beta2 * d(j, i) + s(j, i)), 1e-14);
    }
  }
}

TEST(EligibilityTrace, LifIsPsiTimesVector) {
  const Matrix eps(2, 1, 4.0);
  const std::vector<double> psi{0.5, 0.25};
  const Matrix e = eligibility_trace_lif(eps, psi);
  EXPECT_EQ(e(0, 0), 2.0);
  EXPECT_EQ(e(1, 0), 1.0);
}

TEST(Readout, MemorylessWhenKappaZero) {
  ReadoutState ro(1, 2, 0.0);
  ro.y(0, 0) = 100.0;
  Matrix w(2, 1);
  w(0, 0) = 2.0;
  w(1, 0) = -1.0;
  ro = readout_step(ro, w, row({3.0}));
  EXPECT_EQ(ro.y(0, 0), 6.0);
  EXPECT_EQ(ro.y(0, 1), -3.0);
}

TEST(Readout, DecaysGeometricallyWithoutInput) {
  ReadoutState ro(1, 1, 0.5);
  ro.y(0, 0) = 8.0;
  const Matrix w(1, 1, 1.0);
  for (double want : {4.0, 2.0, 1.0}) {
    ro = readout_step(ro, w, Matrix(1, 1));
    EXPECT_EQ(ro.y(0, 0), want);
  }
}

TEST(Readout, GeometricSum) {
  ReadoutState ro(1, 1, 0.9);
  const Matrix w(1, 1, 1.0);
  ro = readout_step(ro, w, row({1.0}));
  ro = readout_step(ro, w, row({1.0}));
  EXPECT_NEAR(ro.y(0, 0), 1.9, 1e-15);
}

TEST(OutputSignal, UniformLogitsGiveLogC) {
  const std::vector<double> y(5, 0.3);
  const OutputSignal s = output_learning_signal(y, 2);
  EXPECT_NEAR(s.loss, std::log(5.0), 1e-15);
  for (std::size_t k = 0; k < 5; ++k)
    EXPECT_NEAR(s.l_out[k], 0.2 - (k == 2 ? 1.0 : 0.0), 1e-15);
}

TEST(OutputSignal, SaturatesToZeroLoss) {
  const std::vector<double> y{0.0, 1e4, 0.0};
  const OutputSignal s = output_learning_signal(y, 1);
  EXPECT_EQ(s.loss, 0.0);
  EXPECT_NEAR(s.l_out[1], 0.0, 1e-300);
}

TEST(OutputSignal, MatchesExtendedPrecision) {
  const std::vector<double> y{1.0, 2.0, 3.0};
  const OutputSignal s = output_learning_signal(y, 2);
  long double z = 0.0L;
  for (double v : y) z += std::exp(static_cast<long double>(v));
  EXPECT_NEAR(s.loss, static_cast<double>(std::log(z) - 3.0L), 1e-15);
  for (std::size_t k = 0; k < 3; ++k) {
    const long double p = std::exp(static_cast<long double>(y[k])) / z;
    EXPECT_NEAR(s.l_out[k], static_cast<double>(p - (k == 2 ? 1.0L : 0.0L)), 1e-15);
  }
  EXPECT_THROW(output_learning_signal(y, 3), ParameterError);
}

TEST(HiddenSignal, ZeroUpperSignalGivesZero) {
  const Matrix l(2, 3), w(3, 4, 1.0), psi(2, 3, 1.0);
  const Matrix out = hidden_learning_signal(l, w, psi, 0.7);
  for (double v : out.flat()) EXPECT_EQ(v, 0.0);
}

TEST(HiddenSignal, ScalarChainRule) {
  Matrix l(1, 1, 0.3), psi(1, 1, 2.0), w(1, 3);
  w(0, 1) = 1.0;
  const Matrix out = hidden_learning_signal(l, w, psi, 0.5);
  EXPECT_EQ(out(0, 0), 0.0);
  EXPECT_NEAR(out(0, 1), 0.3 * 2.0 * 0.5, 1e-16);
  EXPECT_EQ(out(0, 2), 0.0);
}

TEST(Accumulate, ZeroSignalLeavesSums) {
  Matrix g(2, 2, 1.5);
  accumulate(g, Matrix(1, 2), Matrix(2, 2, 9.0));
  for (double v : g.flat()) EXPECT_EQ(v, 1.5);
}

TEST(Accumulate, ScalarProduct) {
  Matrix g(1, 1);
  accumulate(g, Matrix(1, 1, 2.0), Matrix(1, 1, 3.0));
  EXPECT_EQ(g(0, 0), 6.0);
}

// Single feedforward layer, reset disabled: e-prop equals BPTT.
TEST(Accumulate, FeedforwardSequenceEqualsBptt) {
  std::mt19937_64 rng(41);
  std::size_t spiking = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const NeuronTag tag = oracle::kTags[trial % 4];
    Network net = oracle::random_network(rng, tag, {3, 5, 3}, false, false,
                                         0.9 * std::uniform_real_distribution<double>()(rng));
    const SequenceBatch batch = oracle::random_batch(rng, 12, 2, 3, 3, 1.5);
    const std::uint64_t seed = rng();
    spiking += oracle::count_spikes(net, batch, seed) > 0;
    NetworkGrads a = oracle::eprop_grads(net, batch, seed);
    NetworkGrads b = oracle::bptt_grads(net, batch, seed);
    EXPECT_LE(oracle::block_rel_err(net, a, b, TrainerKind::kEprop), 1e-8) << trial;
  }
  EXPECT_GT(spiking, 30u);
}

// Two hidden layers, no reset, kappa = 0: the lower layer's e-prop gradient
// equals the gradient truncated to same-step spatial paths through the upper
// layer, computed here from the reference forward and dual traces.
TEST(HiddenSignal, TwoLayerMatchesTruncatedOracle) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const NeuronTag tag = oracle::kTags[1 + trial % 3];
    Network net = oracle::random_network(rng, tag, {3, 4, 4, 2}, false, false, 0.0);
    const SequenceBatch batch = oracle::random_batch(rng, 5, 2, 3, 2, 1.5);
    const std::uint64_t seed = rng();
    NetworkGrads g = oracle::eprop_grads(net, batch, seed);

    const auto draws = oracle::record_draws(net, batch.t_len, seed);
    DecayStream stream(seed);
    const ForwardResult fwd = unroll_forward(net, batch, stream);
    const auto& p1 = net.layers[0];
    const auto& p2 = net.layers[1];
    const Couplings c1 = p1.betas(), c2 = p2.betas();
    Matrix want(p1.post(), p1.pre());
    for (std::size_t b = 0; b < batch.batch; ++b) {
      for (std::size_t i = 0; i < p1.pre(); ++i) {
        std::vector<double> x(batch.t_len);
        std::vector<oracle::Decay> dec;
        for (std::size_t t = 0; t < batch.t_len; ++t) {
          x[t] = batch.x[(t * batch.batch + b) * batch.input_dim + i];
          dec.push_back(oracle::decay_of(p1, draws[t][0]));
        }
        const oracle::TraceOut tr = oracle::dual_traces(x, dec, c1.beta1, c1.beta2, false);
        for (std::size_t t = 0; t < batch.t_len; ++t) {
          const auto& rec = fwd.cache.steps[t];
          for (std::size_t j = 0; j < p1.post(); ++j) {
            // dE_t/dz1_j through v2_s at the same step: dv2_s/dI2 = beta2.
            double sig = 0.0;
            for (std::size_t k = 0; k < p2.post(); ++k) {
              double l2 = 0.0;
              for (std::size_t c = 0; c < net.num_classes(); ++c)
                l2 += rec.dl_dy(b, c) * net.w_out(c, k);
              sig += l2 * rec.psi[1](b, k) * c2.beta2 * p2.w_in(k, j);
            }
            want(j, i) += sig * rec.psi[0](b, j) * tr.s[t];
          }
        }
      }
    }
    const std::vector<double> got(g.layers[0].w_in.flat().begin(), g.layers[0].w_in.flat().end());
    const std::vector<double> ref(want.flat().begin(), want.flat().end());
    EXPECT_LE(oracle::rel_err(got, ref), 1e-8) << trial;
  }
}

TEST(DecayTrace, ZeroStateKeepsTracesZero) {
  LayerParams p;
  p.w_in = Matrix(2, 1);
  p.bias = zeros(2);
  EligibilityState e(1, p);
  DecayDraw d;
  d.a_d_t = 0.5;
  d.a_s_t = 0.5;
  step_eligibility_decay(e, LayerState(1, 2), d, Couplings{-0.5, 1.0}, true, true);
  for (double v : e.decay1.d.flat()) EXPECT_EQ(v, 0.0);
  for (double v : e.decay2.s.flat()) EXPECT_EQ(v, 0.0);
}

// Tiny floors are never reached, so the floor gradient is exactly zero.
TEST(DecayTrace, UnclampedFloorHasZeroGradient) {
  std::mt19937_64 rng(44);
  Network net = oracle::random_network(rng, NeuronTag::kTclifAdaptive, {3, 4, 2}, true,
                                       false, 0.9);
  net.layers[0].a_d = net.layers[0].a_s = kMinDecayFloor;
  const SequenceBatch batch = oracle::random_batch(rng, 20, 2, 3, 2, 1.5);
  NetworkGrads g = oracle::eprop_grads(net, batch, 7);
  EXPECT_EQ(g.layers[0].a_d, 0.0);
  EXPECT_EQ(g.layers[0].a_s, 0.0);
  EXPECT_NE(g.layers[0].w_in(0, 0), 0.0);
}

// Modified neuron, no spikes, readout on v_s: the decay-constant traces give
// the exact gradient.
TEST(DecayTrace, ModifiedAlphaMatchesFiniteDifferences) {
  std::mt19937_64 rng(45);
  for (int trial = 0; trial < 10; ++trial) {
    Network net = oracle::random_network(rng, NeuronTag::kTclifModified, {2, 3, 3}, true,
                                         false, 0.8);
    net.readout_source = ReadoutSource::kSomatic;
    net.layers[0].v_th = std::numeric_limits<double>::infinity();
    const SequenceBatch batch = oracle::random_batch(rng, 10, 2, 2, 3);
    NetworkGrads g = oracle::eprop_grads(net, batch, 1);
    NetworkGrads fd = oracle::central_differences(net, batch, 1, TrainerKind::kEprop);
    EXPECT_NEAR(g.layers[0].alpha1, fd.layers[0].alpha1,
                1e-5 * std::abs(fd.layers[0].alpha1) + 1e-12);
    EXPECT_NEAR(g.layers[0].alpha2, fd.layers[0].alpha2,
                1e-5 * std::abs(fd.layers[0].alpha2) + 1e-12);
    EXPECT_NE(fd.layers[0].alpha1, 0.0);
  }
}

TEST(OnlineTrainer, StoredRealsIndependentOfLength) {
  std::mt19937_64 rng(46);
  Network net = oracle::random_network(rng, NeuronTag::kTclifAdaptive, {2, 6, 3}, true,
                                       true, 0.9);
  std::vector<std::size_t> counts, peaks;
  for (std::size_t t_len : {10u, 100u, 784u}) {
    const SequenceBatch batch = oracle::random_batch(rng, t_len, 2, 2, 3);
    NetworkGrads g(net);
    DecayStream stream(3);
    const std::size_t base = MemoryMeter::current_bytes();
    MemoryMeter::reset_peak();
    EpropTrainer trainer(net, batch.batch);
    trainer.run(net, batch, stream, g);
    counts.push_back(trainer.stored_reals());
    peaks.push_back(MemoryMeter::peak_bytes() - base);
  }
  EXPECT_EQ(counts[0], counts[1]);
  EXPECT_EQ(counts[1], counts[2]);
  EXPECT_EQ(peaks[0], peaks[2]);
}

// Splitting a sequence into two calls with carried state changes nothing.
TEST(OnlineTrainer, ChunkedSequenceIsAdditive) {
  std::mt19937_64 rng(47);
  Network net = oracle::random_network(rng, NeuronTag::kTclifAdaptive, {3, 5, 3}, true,
                                       true, 0.9);
  const SequenceBatch batch = oracle::random_batch(rng, 30, 2, 3, 3, 1.5);
  NetworkGrads whole(net), split(net);
  EpropTrainer a(net, 2), b(net, 2);
  DecayStream sa(9), sb(9);
  const BatchOutcome oa = a.run(net, batch, sa, whole);
  b.start(net, batch);
  b.advance(net, batch, 0, 13, sb, split);
  b.advance(net, batch, 13, 30, sb, split);
  const BatchOutcome ob = b.outcome(batch);
  EXPECT_EQ(oa.loss, ob.loss);
  auto ra = param_refs(net, whole, TrainerKind::kEprop);
  auto rb = param_refs(net, split, TrainerKind::kEprop);
  for (std::size_t k = 0; k < ra.size(); ++k)
    for (std::size_t i = 0; i < ra[k].grad.size(); ++i) ASSERT_EQ(ra[k].grad[i], rb[k].grad[i]);
}

TEST(Contraction, ParsesNames) {
  EXPECT_EQ(trace_contraction_from_string("somatic"), TraceContraction::kSomatic);
  EXPECT_EQ(trace_contraction_from_string("combined"), TraceContraction::kCombined);
  EXPECT_THROW(trace_contraction_from_string("both"), ParameterError);
}

}  // namespace

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

TEST(Unroll, SingleStepCacheAndLoss) {
  std::mt19937_64 rng(51);
  Network net = oracle::random_network(rng, NeuronTag::kTclifAdaptive, {2, 3, 2}, true,
                                       false, 0.9);
  const SequenceBatch batch = oracle::random_batch(rng, 1, 1, 2, 2);
  DecayStream a(5), b(5);
  const ForwardResult fwd = unroll_forward(net, batch, a);
  EXPECT_EQ(fwd.cache.length(), 1u);
  NetworkGrads g(net);
  EpropTrainer trainer(net, 1);
  const BatchOutcome online = trainer.run(net, batch, b, g);
  EXPECT_EQ(fwd.outcome.loss, online.loss);
}

TEST(Unroll, LossMatchesOnlineAndReference) {
  std::mt19937_64 rng(52);
  for (NeuronTag tag : oracle::kTags) {
    Network net = oracle::random_network(rng, tag, {3, 6, 5, 4}, true, true, 0.9);
    const SequenceBatch batch = oracle::random_batch(rng, 25, 3, 3, 4, 1.5);
    DecayStream a(6), b(6);
    const ForwardResult fwd = unroll_forward(net, batch, a);
    NetworkGrads g(net);
    EpropTrainer trainer(net, batch.batch);
    EXPECT_EQ(fwd.outcome.loss, trainer.run(net, batch, b, g).loss);
    const auto ref = oracle::reference_forward(net, batch, oracle::record_draws(net, 25, 6));
    EXPECT_NEAR(fwd.outcome.loss, ref.loss, 1e-12 * ref.loss);
  }
}

// The cache holds exactly T per-step footprints.
TEST(Unroll, CacheGrowsLinearly) {
  std::mt19937_64 rng(53);
  Network net = oracle::random_network(rng, NeuronTag::kTclifAdaptive, {1, 8, 10}, true,
                                       true, 0.9);
  std::size_t per_step = 0;
  std::vector<std::size_t> meter;
  for (std::size_t t_len : {10u, 100u, 784u}) {
    const SequenceBatch batch = oracle::random_batch(rng, t_len, 2, 1, 10);
    DecayStream s(1);
    const std::size_t base = MemoryMeter::current_bytes();
    const ForwardResult fwd = unroll_forward(net, batch, s);
    const std::size_t held = MemoryMeter::current_bytes() - base;
    if (per_step == 0) per_step = fwd.cache.steps[0].stored_reals();
    EXPECT_EQ(fwd.cache.stored_reals(), t_len * per_step);
    EXPECT_GE(held, t_len * per_step * sizeof(double));
    meter.push_back(held);
  }
  // Fixed overhead (readout and final state) is the same at every length.
  EXPECT_EQ(meter[2] - meter[1], (784 - 100) * per_step * sizeof(double));
}

TEST(Backward, SymmetricLogitsGiveZeroReadoutGradient) {
  NetworkSpec spec;
  spec.widths = {2, 3, 2};
  Network net = make_network(spec, 1);
  for (double& v : net.w_out.flat()) v = 0.0;
  SequenceBatch batch;
  batch.t_len = 4;
  batch.batch = 2;
  batch.input_dim = 2;
  batch.x.assign(16, 0.5);
  batch.labels = {0, 1};
  NetworkGrads g = oracle::bptt_grads(net, batch, 0);
  for (double v : g.w_out.flat()) EXPECT_NEAR(v, 0.0, 1e-17);
}

// No spikes, readout on v_s: every trainable parameter against central
// differences of the reference forward.
TEST(Backward, MatchesFiniteDifferencesInLinearRegime) {
  std::mt19937_64 rng(54);
  for (int trial = 0; trial < 16; ++trial) {
    const NeuronTag tag = oracle::kTags[trial % 4];
    Network net = oracle::random_network(rng, tag, {2, 4, 3, 3}, true, trial % 2 == 1, 0.8);
    net.readout_source = ReadoutSource::kSomatic;
    for (auto& p : net.layers) p.v_th = std::numeric_limits<double>::infinity();
    if (tag == NeuronTag::kTclifVanilla || tag == NeuronTag::kTclifAdaptive)
      for (auto& p : net.layers) {
        p.fixed_couplings.reset();
        p.c1 = 0.3;
        p.c2 = -0.2;
      }
    const SequenceBatch batch = oracle::random_batch(rng, 12, 2, 2, 3);
    NetworkGrads g = oracle::bptt_grads(net, batch, 3);
    NetworkGrads fd = oracle::central_differences(net, batch, 3, TrainerKind::kBptt);
    EXPECT_LE(oracle::block_rel_err(net, g, fd, TrainerKind::kBptt), 1e-5) << trial;
  }
}

TEST(Backward, LossScaleIsLinear) {
  std::mt19937_64 rng(55);
  Network net = oracle::random_network(rng, NeuronTag::kTclifVanilla, {3, 5, 3}, true, true,
                                       0.9);
  const SequenceBatch batch = oracle::random_batch(rng, 15, 2, 3, 3, 1.5);
  DecayStream s(2);
  const ForwardResult fwd = unroll_forward(net, batch, s);
  NetworkGrads one(net), two(net);
  backward(fwd.cache, net, one, 1.0);
  backward(fwd.cache, net, two, 2.0);
  auto ra = param_refs(net, one, TrainerKind::kBptt);
  auto rb = param_refs(net, two, TrainerKind::kBptt);
  for (std::size_t k = 0; k < ra.size(); ++k)
    for (std::size_t i = 0; i < ra[k].grad.size(); ++i)
      ASSERT_EQ(2.0 * ra[k].grad[i], rb[k].grad[i]);
}

TEST(Backward, Deterministic) {
  std::mt19937_64 rng(56);
  Network net = oracle::random_network(rng, NeuronTag::kTclifAdaptive, {3, 5, 3}, true, true,
                                       0.9);
  const SequenceBatch batch = oracle::random_batch(rng, 15, 2, 3, 3, 1.5);
  NetworkGrads a = oracle::bptt_grads(net, batch, 8);
  NetworkGrads b = oracle::bptt_grads(net, batch, 8);
  EXPECT_EQ(oracle::flat_grads(net, a, TrainerKind::kBptt),
            oracle::flat_grads(net, b, TrainerKind::kBptt));
}

TEST(MemoryReport, BpttLinearEpropFlat) {
  NetworkSpec spec;
  spec.widths = {1, 16, 10};
  spec.recurrent = true;
  Network net = make_network(spec, 1);
  const std::vector<std::size_t> lengths{50, 100, 200, 400};
  const auto rows = memory_report(net, lengths, 4, 0);
  ASSERT_EQ(rows.size(), 8u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(rows[k].algo, "eprop");
    EXPECT_EQ(rows[k].stored_reals, rows[0].stored_reals);
  }
  // Fixed overhead cancels in differences: each doubling of T doubles the
  // increment.
  for (std::size_t k = 6; k < 8; ++k) {
    const double ratio = static_cast<double>(rows[k].stored_reals - rows[k - 1].stored_reals) /
                         static_cast<double>(rows[k - 1].stored_reals - rows[k - 2].stored_reals);
    EXPECT_NEAR(ratio, 2.0, 0.02);
  }
  EXPECT_GT(rows[7].stored_reals, 4 * rows[3].stored_reals);
  const std::string csv = memory_report_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "T,algo,stored_reals,peak_bytes");
}

}  // namespace

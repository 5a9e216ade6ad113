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

// Training loops for both trainers, evaluation, metrics and checkpoints.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include "tclif/bptt.hpp"
#include "tclif/config.hpp"
#include "tclif/data.hpp"
#include "tclif/network.hpp"
#include "tclif/online.hpp"
#include "tclif/optim.hpp"

namespace tclif {

// ---------------------------------------------------------------------------
// Datasets

struct Datasets {
  std::unique_ptr<SequenceSource> train;
  std::unique_ptr<SequenceSource> test;
};

// Dataset root: explicit config value, then TCLIF_DATA_DIR, then `fallback`.
inline std::string resolve_data_dir(const TrainConfig& cfg, const std::string& fallback) {
  if (!cfg.data_dir.empty()) return cfg.data_dir;
  if (const char* env = std::getenv("TCLIF_DATA_DIR"); env && *env) return env;
  return fallback;
}

inline Datasets load_datasets(const TrainConfig& cfg, const std::string& dir) {
  if (!std::filesystem::is_directory(dir))
    throw DataError("data directory '" + dir + "' does not exist");
  Datasets ds;
  if (cfg.dataset == DatasetKind::kShd) {
    for (const char* f : {"shd_train.spkev", "shd_test.spkev"})
      if (!std::filesystem::exists(dir + "/" + f))
        throw DataError("SHD file '" + dir + "/" + f + "' not found");
    ds.train = std::make_unique<EventSequences>(load_spike_events(dir + "/shd_train.spkev"),
                                                cfg.shd_bins, cfg.shd_binary,
                                                cfg.train_limit);
    ds.test = std::make_unique<EventSequences>(load_spike_events(dir + "/shd_test.spkev"),
                                               cfg.shd_bins, cfg.shd_binary,
                                               cfg.test_limit);
  } else {
    std::optional<PermutationSpec> perm;
    if (cfg.dataset == DatasetKind::kPsmnist) perm = PermutationSpec::from_seed(cfg.perm_seed);
    ds.train = std::make_unique<ImageSequences>(load_mnist_dir(dir, true), cfg.frame_size,
                                                perm, cfg.train_limit);
    ds.test = std::make_unique<ImageSequences>(load_mnist_dir(dir, false), cfg.frame_size,
                                               perm, cfg.test_limit);
  }
  if (ds.train->input_dim() != cfg.arch.front())
    throw ParameterError("arch input width " + std::to_string(cfg.arch.front()) +
                         " does not match dataset frame width " +
                         std::to_string(ds.train->input_dim()));
  if (ds.train->num_classes() != cfg.arch.back())
    throw ParameterError("arch output width does not match the number of classes");
  return ds;
}

// ---------------------------------------------------------------------------
// Metrics

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double wallclock_s = 0.0;
  std::size_t peak_stored_reals = 0;
  std::size_t clipped_batches = 0;
};

inline std::string metrics_csv(std::span<const EpochMetrics> rows) {
  std::ostringstream out;
  out << "epoch,train_loss,train_acc,test_acc,wallclock_s,peak_stored_reals\n";
  out.precision(10);
  for (const auto& m : rows)
    out << m.epoch << ',' << m.train_loss << ',' << m.train_acc << ',' << m.test_acc << ','
        << m.wallclock_s << ',' << m.peak_stored_reals << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Seeds

// SplitMix64 finalizer; derives independent stream seeds from (seed, a, b).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t x = seed ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xC2B2AE3D27D4EB4FULL);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

inline constexpr std::uint64_t kEvalStream = 0xE7A1;
inline constexpr std::uint64_t kTrainStream = 0x7A19;
inline constexpr std::uint64_t kShuffleStream = 0x5FF1;

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  double loss = 0.0;
  std::size_t correct = 0;
  std::size_t count = 0;
  double accuracy() const {
    return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0;
  }
};

// Forward pass only. Prediction is the argmax of the time-summed softmax.
inline BatchOutcome forward_batch(const Network& net, const SequenceBatch& batch,
                                  DecayStream& stream) {
  std::vector<LayerState> states;
  for (const auto& p : net.layers) states.emplace_back(batch.batch, p.post());
  ReadoutState readout(batch.batch, net.num_classes(), net.kappa);
  Matrix dl_dy(batch.batch, net.num_classes());
  Matrix prob_sum(batch.batch, net.num_classes());
  const double scale = 1.0 / static_cast<double>(batch.t_len * batch.batch);
  double loss_sum = 0.0;
  for (std::size_t t = 0; t < batch.t_len; ++t) {
    const auto draws = draws_for_step(net, t, stream);
    MatrixView input = batch.frame(t);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      states[l] = layer_step(net.layers[l], states[l], input, draws[l]);
      input = states[l].z;
    }
    loss_sum += readout_loss_step(net, readout, readout_input(net, states.back()),
                                  batch.labels, scale, dl_dy, prob_sum);
  }
  BatchOutcome out;
  out.loss = loss_sum * scale;
  out.correct = count_correct(prob_sum, batch.labels);
  out.count = batch.batch;
  return out;
}

// Batches are taken in index order and every batch gets its own decay stream,
// so the result depends only on the parameters, the data and the seed.
inline EvalResult evaluate(const Network& net, const SequenceSource& data,
                           std::size_t batch_size, std::uint64_t seed) {
  EvalResult r;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0, k = 0; start < data.size(); start += batch_size, ++k) {
    idx.clear();
    for (std::size_t n = start; n < std::min(start + batch_size, data.size()); ++n)
      idx.push_back(n);
    const SequenceBatch batch = make_batch(data, idx);
    DecayStream stream(mix_seed(seed, kEvalStream, k));
    const BatchOutcome o = forward_batch(net, batch, stream);
    r.loss += o.loss * static_cast<double>(o.count);
    r.correct += o.correct;
    r.count += o.count;
  }
  if (r.count) r.loss /= static_cast<double>(r.count);
  return r;
}

// ---------------------------------------------------------------------------
// Training

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, Network net) : cfg_(cfg), net_(std::move(net)) {
    sched_.kind = cfg.schedule;
    sched_.lr0 = cfg.lr0;
    sched_.total_epochs = cfg.epochs;
    sched_.step_every = cfg.step_every;
    sched_.step_factor = cfg.step_factor;
  }

  explicit Trainer(const TrainConfig& cfg)
      : Trainer(cfg, make_network(network_spec(cfg), mix_seed(cfg.seed, 0x1417))) {}

  Network& net() { return net_; }
  const Network& net() const { return net_; }
  const TrainConfig& config() const { return cfg_; }
  std::size_t epochs_done() const { return epoch_; }

  // Runs one epoch with the configured trainer and evaluates on `test`.
  EpochMetrics train_epoch(const SequenceSource& train, const SequenceSource* test) {
    return cfg_.trainer == TrainerKind::kEprop ? train_epoch_online(train, test)
                                               : train_epoch_bptt(train, test);
  }

  EpochMetrics train_epoch_online(const SequenceSource& train, const SequenceSource* test) {
    return run_epoch(train, test, TrainerKind::kEprop);
  }

  EpochMetrics train_epoch_bptt(const SequenceSource& train, const SequenceSource* test) {
    return run_epoch(train, test, TrainerKind::kBptt);
  }

  // Gradient of the mean loss of one batch under the given trainer, without
  // any update. Returns the batch outcome.
  BatchOutcome gradient(const SequenceBatch& batch, std::uint64_t stream_seed,
                        TrainerKind trainer, NetworkGrads& grads) const {
    DecayStream stream(stream_seed);
    if (trainer == TrainerKind::kEprop) {
      EpropTrainer online(net_, batch.batch, EpropOptions{cfg_.contraction});
      return online.run(net_, batch, stream, grads);
    }
    ForwardResult fwd = unroll_forward(net_, batch, stream);
    backward(fwd.cache, net_, grads);
    return fwd.outcome;
  }

  // Rejects non-finite gradients, clips (when enabled), applies one optimizer
  // step at learning rate `lr` and restores parameter invariants. Returns true
  // when clipping fired.
  bool apply_update(NetworkGrads& grads, TrainerKind trainer, double lr) {
    const auto refs = param_refs(net_, grads, trainer);
    for (const auto& r : refs)
      if (r.trainable)
        for (double g : r.grad)
          if (!std::isfinite(g))
            throw DivergenceError("non-finite gradient in '" + r.name + "' at epoch " +
                                  std::to_string(epoch_));
    bool clipped = false;
    if (cfg_.clip_norm > 0.0) clipped = clip_global_norm(refs, cfg_.clip_norm) > cfg_.clip_norm;
    if (cfg_.optimizer == OptimizerKind::kSgd) {
      sgd_step(refs, lr);
    } else {
      adam_step(adam_, refs, lr);
    }
    project(net_);
    return clipped;
  }

 private:
  EpochMetrics run_epoch(const SequenceSource& train, const SequenceSource* test,
                         TrainerKind trainer) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(sched_, epoch_);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(mix_seed(cfg_.seed, kShuffleStream, epoch_));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochMetrics m;
    m.epoch = epoch_;
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0, batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size, ++batch_index) {
      const std::size_t stop = std::min(start + cfg_.batch_size, order.size());
      const std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
      const SequenceBatch batch = make_batch(train, idx);
      DecayStream stream(mix_seed(cfg_.seed, kTrainStream, epoch_ * 1000003 + batch_index));

      const std::size_t base = MemoryMeter::current_bytes();
      MemoryMeter::reset_peak();
      BatchOutcome o;
      {
        NetworkGrads grads(net_);
        if (trainer == TrainerKind::kEprop) {
          EpropTrainer online(net_, batch.batch, EpropOptions{cfg_.contraction});
          EpropTrainer::StepCallback per_step;
          if (cfg_.update_per_step) {
            per_step = [&](std::size_t, NetworkGrads& g) {
              if (apply_update(g, trainer, lr)) ++m.clipped_batches;
              g.zero();
            };
          }
          o = online.run(net_, batch, stream, grads, per_step);
        } else {
          ForwardResult fwd = unroll_forward(net_, batch, stream);
          backward(fwd.cache, net_, grads);
          o = fwd.outcome;
        }
        if (!std::isfinite(o.loss))
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch_) +
                                ", batch " + std::to_string(batch_index));
        if (!cfg_.update_per_step || trainer == TrainerKind::kBptt)
          if (apply_update(grads, trainer, lr)) ++m.clipped_batches;
      }
      m.peak_stored_reals = std::max(
          m.peak_stored_reals, (MemoryMeter::peak_bytes() - base) / sizeof(double));
      loss_sum += o.loss * static_cast<double>(o.count);
      correct += o.correct;
      seen += o.count;
    }
    m.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    m.train_acc = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    if (test) m.test_acc = evaluate(net_, *test, cfg_.batch_size, cfg_.seed).accuracy();
    if (cfg_.record_wallclock)
      m.wallclock_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ++epoch_;
    return m;
  }

  TrainConfig cfg_;
  Network net_;
  ScheduleSpec sched_;
  AdamState adam_;
  std::size_t epoch_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints: "TCLF", u32 version, u32 length + JSON config, f64 parameter
// blocks in declaration order (little endian), u32 CRC32 of everything before.

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> encode_checkpoint(const TrainConfig& cfg, Network& net) {
  io::Writer w;
  for (char ch : {'T', 'C', 'L', 'F'}) w.u8(static_cast<std::uint8_t>(ch));
  w.le(kCheckpointVersion, 4);
  const std::string text = to_json(cfg).dump();
  w.le(text.size(), 4);
  w.bytes(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  NetworkGrads scratch(net);
  for (const auto& r : param_refs(net, scratch, cfg.trainer))
    for (double v : r.value) w.f64(v);
  const std::uint32_t crc = io::crc32(w.data());
  w.le(crc, 4);
  return std::move(w.data());
}

struct Checkpoint {
  TrainConfig config;
  Network net;
};

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw LengthError("checkpoint is truncated");
  const auto body = bytes.first(bytes.size() - 4);
  io::Reader tail(bytes.last(4), "checkpoint");
  if (tail.le(4) != io::crc32(body)) throw CorruptionError("checkpoint CRC mismatch");
  io::Reader r(body, "checkpoint");
  const auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), std::string_view("TCLF").begin()))
    throw FormatError("not a checkpoint (bad magic)");
  if (r.le(4) != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
  const auto len = static_cast<std::size_t>(r.le(4));
  const auto text = r.take(len);
  Checkpoint ck;
  try {
    ck.config = from_json(nlohmann::json::parse(text.begin(), text.end()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  ck.net = make_network(network_spec(ck.config), 0);
  NetworkGrads scratch(ck.net);
  for (const auto& ref : param_refs(ck.net, scratch, ck.config.trainer))
    for (double& v : ref.value) v = r.f64();
  if (r.remaining() != 0) throw FormatError("checkpoint has trailing bytes");
  return ck;
}

inline void save_checkpoint(const std::string& path, const TrainConfig& cfg, Network& net) {
  io::write_file(path, encode_checkpoint(cfg, net));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace tclif

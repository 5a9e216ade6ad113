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

// tclif: train, eval, gradcheck and memprofile.
//
// Exit codes: 0 ok, 1 internal error, 2 bad input or missing data,
// 3 non-finite loss, 4 verification failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tclif.hpp"

#ifndef TCLIF_DEFAULT_DATA_DIR
#define TCLIF_DEFAULT_DATA_DIR "data"
#endif

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitVerify = 4;

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  bool update_per_step = false;
  bool no_reset = false;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration");
  cmd->add_option("--override", o.overrides, "KEY=VALUE applied over the config (repeatable)")
      ->take_all();
  cmd->add_option("--out", o.out_dir, "output directory (created if absent)");
  cmd->add_option("--seed", o.seed, "seed, replaces the config value");
  cmd->add_flag("--update-per-step", o.update_per_step,
                "apply the optimizer after every time step (e-prop)");
  cmd->add_flag("--no-reset", o.no_reset, "disable the spike reset (test mode)");
}

tclif::TrainConfig resolve_config(const Options& o) {
  tclif::TrainConfig cfg = o.config_path.empty() ? tclif::TrainConfig{}
                                                 : tclif::load_config(o.config_path);
  cfg = tclif::apply_overrides(cfg, o.overrides);
  if (o.seed) cfg.seed = *o.seed;
  if (o.update_per_step) cfg.update_per_step = true;
  if (o.no_reset) cfg.reset = false;
  tclif::validate(cfg);
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  tclif::io::write_file(path, std::span<const std::uint8_t>(
                                  reinterpret_cast<const std::uint8_t*>(text.data()),
                                  text.size()));
}

int run_train(const Options& o) {
  const tclif::TrainConfig cfg = resolve_config(o);
  const std::string dir = tclif::resolve_data_dir(cfg, TCLIF_DEFAULT_DATA_DIR);
  const tclif::Datasets data = tclif::load_datasets(cfg, dir);
  std::filesystem::create_directories(o.out_dir);
  write_text(o.out_dir + "/config.json", tclif::to_json(cfg).dump(2) + "\n");

  tclif::Trainer trainer(cfg);
  std::vector<tclif::EpochMetrics> rows;
  std::printf("train %zu samples, test %zu samples, T=%zu, trainer=%s, neuron=%s\n",
              data.train->size(), data.test->size(), data.train->t_len(),
              std::string(tclif::to_string(cfg.trainer)).c_str(),
              std::string(tclif::to_string(cfg.neuron)).c_str());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    rows.push_back(trainer.train_epoch(*data.train, data.test.get()));
    const auto& m = rows.back();
    std::printf("epoch %zu  loss %.4f  train_acc %.4f  test_acc %.4f  %.1fs  clipped %zu\n",
                m.epoch, m.train_loss, m.train_acc, m.test_acc, m.wallclock_s,
                m.clipped_batches);
    std::fflush(stdout);
    write_text(o.out_dir + "/metrics.csv", tclif::metrics_csv(rows));
  }
  write_text(o.out_dir + "/metrics.csv", tclif::metrics_csv(rows));
  tclif::save_checkpoint(o.out_dir + "/checkpoint.tclf", cfg, trainer.net());
  return kExitOk;
}

int run_eval(const Options& o) {
  if (o.checkpoint.empty()) throw tclif::ParameterError("eval needs --checkpoint");
  tclif::Checkpoint ck = tclif::load_checkpoint(o.checkpoint);
  tclif::TrainConfig cfg = tclif::apply_overrides(ck.config, o.overrides);
  if (o.seed) cfg.seed = *o.seed;
  const std::string dir = tclif::resolve_data_dir(cfg, TCLIF_DEFAULT_DATA_DIR);
  const tclif::Datasets data = tclif::load_datasets(cfg, dir);
  const tclif::EvalResult r = tclif::evaluate(ck.net, *data.test, cfg.batch_size, cfg.seed);
  std::printf("test_acc %.6f  test_loss %.6f  samples %zu\n", r.accuracy(), r.loss, r.count);
  return kExitOk;
}

int run_gradcheck(const Options& o) {
  const std::uint64_t seed = o.seed.value_or(0);
  const tclif::SuiteResult suites[] = {
      tclif::check_recursion(seed),
      tclif::check_feedforward(seed + 1),
      tclif::check_finite_differences(seed + 2),
      tclif::check_reductions(seed + 3),
  };
  bool ok = true;
  for (const auto& s : suites) {
    std::printf("%s %-12s max_rel_error %.3e  tolerance %.0e  instances %zu\n",
                s.passed() ? "PASS" : "FAIL", s.name.c_str(), s.max_rel_error, s.tolerance,
                s.instances);
    ok = ok && s.passed();
  }
  std::printf("info reset+recurrence e-prop/bptt max_rel_gap %.3e\n",
              tclif::eprop_bptt_gap(seed + 3));
  if (!ok) {
    std::fprintf(stderr, "gradcheck failed:");
    for (const auto& s : suites)
      if (!s.passed()) std::fprintf(stderr, " %s", s.name.c_str());
    std::fprintf(stderr, "\n");
    return kExitVerify;
  }
  return kExitOk;
}

int run_memprofile(const Options& o) {
  tclif::TrainConfig cfg = resolve_config(o);
  // Pixel streams: one input per step.
  cfg.arch.front() = 1;
  const tclif::Network net =
      tclif::make_network(tclif::network_spec(cfg), tclif::mix_seed(cfg.seed, 0x1417));
  const std::size_t lengths[] = {49, 98, 196, 392, 784};
  const auto rows = tclif::memory_report(net, lengths, cfg.batch_size, cfg.seed,
                                         tclif::EpropOptions{cfg.contraction});
  const std::string csv = tclif::memory_report_csv(rows);
  std::filesystem::create_directories(o.out_dir);
  write_text(o.out_dir + "/memory.csv", csv);
  std::fputs(csv.c_str(), stdout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-compartment spiking networks trained with e-prop or BPTT"};
  app.require_subcommand(1);
  Options o;
  auto* train = app.add_subcommand("train", "train a network; writes metrics.csv and checkpoint.tclf");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  auto* grad = app.add_subcommand("gradcheck", "run the gradient self-checks");
  auto* mem = app.add_subcommand("memprofile", "memory of both trainers against sequence length");
  for (auto* cmd : {train, eval, grad, mem}) add_common(cmd, o);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint written by train")->required();
  app.footer("Environment: TCLIF_DATA_DIR sets the dataset root.\n"
             "Exit codes: 0 ok, 1 internal or out of memory, 2 input or data,\n"
             "3 divergence, 4 verification failure.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*train) return run_train(o);
    if (*eval) return run_eval(o);
    if (*grad) return run_gradcheck(o);
    if (*mem) return run_memprofile(o);
  } catch (const tclif::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const tclif::ResourceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInternal;
  } catch (const tclif::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitInternal;
  }
  return kExitInternal;
}

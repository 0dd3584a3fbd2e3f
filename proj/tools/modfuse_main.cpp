// tools/modfuse_main.cpp

// Copyright 2026  The modfuse authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "modfuse/error.hpp"
#include "modfuse/gradcheck.hpp"
#include "modfuse/manifest.hpp"
#include "modfuse/pipeline.hpp"
#include "modfuse/synth.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;

struct CliArgs {
  // gen-synth
  modfuse::SynthConfig synth;
  // shared
  std::string config_path;
  std::vector<std::string> overrides;  // key=value, mirrors run config keys
  std::vector<std::string> checkpoints;
  std::string split = "test";
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
  // extract
  std::string manifest_in, manifest_out, mel_dir;
  modfuse::MelConfig extract_mel_cfg;
  // params
  std::string params_variant = "NT";
  int params_blocks = 0;
  int params_hidden = 512;
  int params_heads = 8;
  int params_mlp_hidden = 2048;
  int params_vocab = 1000;
  int params_classes = 4;
  // predict
  std::string predictions_out;
};

modfuse::RunConfig load_config(const CliArgs& args) {
  modfuse::RunConfig cfg =
      modfuse::load_run_config(args.config_path, args.overrides);
  if (args.has_seed_override) cfg.train.seed = args.seed_override;
  return cfg;
}

int cmd_gen_synth(const CliArgs& args) {
  const auto records = modfuse::gen_synth(args.synth);
  // A ready-to-run config next to the data keeps the walkthrough short.
  modfuse::RunConfig cfg;
  cfg.model.variant = modfuse::Variant::kNT;
  cfg.model.blocks = 2;
  cfg.model.hidden = 32;
  cfg.model.heads = 8;
  cfg.model.mlp_hidden = 64;
  cfg.classes = modfuse::synth_classes();
  cfg.model.num_classes = static_cast<int>(cfg.classes.size());
  cfg.manifest_path = (fs::path(args.synth.out_dir) / "manifest.jsonl").string();
  cfg.out_dir = (fs::path(args.synth.out_dir) / "run").string();
  cfg.train.seed = args.synth.seed;
  cfg.train.lr = 1e-3;
  cfg.train.max_epochs = 200;
  modfuse::save_run_config((fs::path(args.synth.out_dir) / "run.cfg").string(),
                           cfg);
  int by_split[3] = {0, 0, 0};
  for (const auto& r : records)
    ++by_split[r.split == "train" ? 0 : (r.split == "valid" ? 1 : 2)];
  std::printf("generated %d train / %d valid / %d test samples under %s\n",
              by_split[0], by_split[1], by_split[2],
              args.synth.out_dir.c_str());
  return kExitOk;
}

int cmd_extract(const CliArgs& args) {
  modfuse::MelConfig mel = args.extract_mel_cfg;
  if (!args.config_path.empty()) mel = load_config(args).mel;
  std::vector<modfuse::ManifestRecord> records =
      modfuse::load_manifest(args.manifest_in);
  const modfuse::ExtractStats stats =
      modfuse::extract_features(records, mel, args.mel_dir);
  modfuse::save_manifest(args.manifest_out.empty() ? args.manifest_in
                                                   : args.manifest_out,
                         records);
  std::printf("extracted %d, cached %d, failed %zu\n", stats.extracted,
              stats.skipped, stats.failures.size());
  for (const auto& [id, reason] : stats.failures)
    std::fprintf(stderr, "warning: %s: %s\n", id.c_str(), reason.c_str());
  return kExitOk;  // failures are reported, not fatal
}

int cmd_train(const CliArgs& args) {
  const modfuse::RunConfig cfg = load_config(args);
  const modfuse::RunTrainOutput out = modfuse::run_train(cfg);
  std::printf("best validation accuracy %.4f after %d epochs\n",
              out.best_val_acc, out.epochs_run);
  std::printf("checkpoint: %s\nhistory:    %s\nvocab:      %s\n",
              out.checkpoint_path.c_str(), out.history_path.c_str(),
              out.vocab_path.c_str());
  return kExitOk;
}

int cmd_eval(const CliArgs& args) {
  const modfuse::RunConfig cfg = load_config(args);
  const modfuse::RunEvalOutput out =
      modfuse::run_eval(cfg, args.checkpoints, args.split);
  std::cout << modfuse::render_report(out.report, cfg.classes);
  std::printf("report: %s\n", out.report_json_path.c_str());
  return kExitOk;
}

int cmd_predict(const CliArgs& args) {
  const modfuse::RunConfig cfg = load_config(args);
  const auto predictions =
      modfuse::run_predict(cfg, args.checkpoints, args.split);
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!args.predictions_out.empty()) {
    file.open(args.predictions_out, std::ios::binary);
    if (!file)
      throw modfuse::DataError("predict: cannot write " +
                               args.predictions_out);
    os = &file;
  }
  for (const auto& p : predictions) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["label"] = p.predicted_label;
    j["probs"] = p.probs;
    (*os) << j.dump() << "\n";
  }
  return kExitOk;
}

int cmd_params(const CliArgs& args) {
  modfuse::ModelConfig cfg;
  cfg.variant = modfuse::parse_variant(args.params_variant);
  cfg.blocks = args.params_blocks;
  cfg.hidden = args.params_hidden;
  cfg.heads = args.params_heads;
  cfg.mlp_hidden = args.params_mlp_hidden;
  cfg.num_classes = args.params_classes;
  modfuse::Rng rng(1);
  const modfuse::Model model =
      modfuse::Model::init(cfg, args.params_vocab, rng);
  std::size_t trainable = 0;
  for (const auto& nt : model.named_params()) {
    std::printf("%-28s %-14s %10zu\n", nt.name.c_str(),
                modfuse::shape_str(nt.tensor.shape()).c_str(),
                nt.tensor.size());
    trainable += nt.tensor.size();
  }
  std::printf("total trainable parameters: %zu\n", trainable);
  return kExitOk;
}

int cmd_gradcheck() {
  const auto results = modfuse::gradcheck_all();
  bool all_passed = true;
  for (const auto& r : results) {
    std::printf("%-22s max rel err %.3e  %s\n", r.name.c_str(),
                r.max_rel_error, r.passed ? "ok" : "FAILED");
    all_passed = all_passed && r.passed;
  }
  if (!all_passed) {
    std::fprintf(stderr, "gradcheck: tolerance %.1e exceeded\n",
                 modfuse::kGradTolerance);
    return kExitVerification;
  }
  std::printf("gradcheck: all %zu checks within %.1e\n", results.size(),
              modfuse::kGradTolerance);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multimodal (text + audio) sequence classification toolkit"};
  app.require_subcommand(1);
  CliArgs args;

  CLI::App* gen = app.add_subcommand(
      "gen-synth", "generate the synthetic two-modality benchmark");
  gen->add_option("--out", args.synth.out_dir, "output directory")->required();
  gen->add_option("--train", args.synth.n_train, "train sample count");
  gen->add_option("--valid", args.synth.n_valid, "validation sample count");
  gen->add_option("--test", args.synth.n_test, "test sample count");
  gen->add_option("--seed", args.synth.seed, "generator seed");

  CLI::App* extract = app.add_subcommand(
      "extract", "extract mel features for manifest wav entries");
  extract->add_option("--manifest", args.manifest_in, "input manifest")
      ->required();
  extract->add_option("--out-manifest", args.manifest_out,
                      "output manifest (defaults to in-place)");
  extract->add_option("--mel-dir", args.mel_dir, "directory for mel CSVs")
      ->required();
  extract->add_option("--config", args.config_path,
                      "run config supplying mel parameters");
  modfuse::MelConfig& mc = args.extract_mel_cfg;
  extract->add_option("--sample-rate", mc.sample_rate, "expected sample rate");
  extract->add_option("--n-fft", mc.n_fft, "FFT size (power of two)");
  extract->add_option("--hop", mc.hop, "hop length in samples");
  extract->add_option("--win", mc.win, "window length in samples");
  extract->add_option("--preemphasis", mc.preemphasis,
                      "preemphasis coefficient");
  extract->add_option("--reduction", mc.reduction, "keep one frame in N");
  extract->add_option("--db-floor", mc.db_floor, "dB floor");
  extract->add_option("--db-range", mc.db_range, "dB range");

  CLI::App* train = app.add_subcommand("train", "train one model");
  train->add_option("--config", args.config_path, "run config file")
      ->required();
  train->add_option("--set", args.overrides,
                    "override a config field, key=value (repeatable)");
  train
      ->add_option("--seed", args.seed_override,
                   "override the run seed (ensemble members)")
      ->each([&args](const std::string&) { args.has_seed_override = true; });

  CLI::App* eval = app.add_subcommand("eval", "evaluate checkpoint ensemble");
  eval->add_option("--config", args.config_path, "run config file")
      ->required();
  eval->add_option("--set", args.overrides,
                   "override a config field, key=value (repeatable)");
  eval->add_option("--checkpoints", args.checkpoints,
                   "checkpoint files (up to the configured ensemble size)")
      ->required()
      ->expected(-1);
  eval->add_option("--split", args.split, "split to score (default test)");

  CLI::App* predict =
      app.add_subcommand("predict", "emit per-sample predictions");
  predict->add_option("--config", args.config_path, "run config file")
      ->required();
  predict->add_option("--set", args.overrides,
                      "override a config field, key=value (repeatable)");
  predict->add_option("--checkpoints", args.checkpoints, "checkpoint files")
      ->required()
      ->expected(-1);
  predict->add_option("--split", args.split, "split to predict");
  predict->add_option("--out", args.predictions_out,
                      "output file (default stdout)");

  CLI::App* params =
      app.add_subcommand("params", "print the trainable parameter ledger");
  params->add_option("--variant", args.params_variant, "P|NT|MAT|MNT");
  params->add_option("--blocks", args.params_blocks,
                     "transformer blocks (0 = variant default)");
  params->add_option("--hidden", args.params_hidden, "hidden size C");
  params->add_option("--heads", args.params_heads, "attention heads");
  params->add_option("--mlp-hidden", args.params_mlp_hidden, "MLP width");
  params->add_option("--vocab-size", args.params_vocab, "vocabulary size");
  params->add_option("--classes", args.params_classes, "number of classes");

  app.add_subcommand("gradcheck",
                     "verify every gradient against finite differences");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_synth(args);
    if (extract->parsed()) return cmd_extract(args);
    if (train->parsed()) return cmd_train(args);
    if (eval->parsed()) return cmd_eval(args);
    if (predict->parsed()) return cmd_predict(args);
    if (params->parsed()) return cmd_params(args);
    return cmd_gradcheck();
  } catch (const modfuse::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const modfuse::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitData;
  }
}

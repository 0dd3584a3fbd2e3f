// tests/test_pipeline.cpp

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sys/wait.h>

#include "modfuse/pipeline.hpp"
#include "modfuse/synth.hpp"
#include "probe.hpp"
#include "support.hpp"

using namespace modfuse;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, const std::string& out_file = "") {
  std::string cmd = std::string(MODFUSE_CLI_PATH) + " " + args;
  if (!out_file.empty()) cmd += " > " + out_file + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunConfig synth_run_config(const std::string& synth_dir,
                           const std::string& out_dir) {
  RunConfig cfg;
  cfg.model.variant = Variant::kNT;
  cfg.model.blocks = 1;
  cfg.model.hidden = 16;
  cfg.model.heads = 2;
  cfg.model.mlp_hidden = 32;
  cfg.classes = synth_classes();
  cfg.model.num_classes = 4;
  cfg.manifest_path = (fs::path(synth_dir) / "manifest.jsonl").string();
  cfg.out_dir = out_dir;
  cfg.train.seed = 11;
  cfg.train.lr = 2e-3;
  cfg.train.batch_size = 8;
  cfg.train.max_epochs = 60;
  return cfg;
}

}  // namespace

TEST_CASE("manifest parse/serialize round-trips") {
  testsupport::TempDir dir("manifest");
  std::vector<ManifestRecord> records;
  for (int i = 0; i < 5; ++i) {
    ManifestRecord r;
    r.id = "id-" + std::to_string(i);
    r.label = i % 2 ? "pos" : "neg";
    r.text = "some text with \"quotes\" and commas, too";
    r.split = i < 3 ? "train" : "valid";
    if (i == 0) r.wav_path = "audio/a.wav";
    if (i == 1) r.mel_path = "mel/b.csv";
    records.push_back(std::move(r));
  }
  const std::string path = dir.file("m.jsonl");
  save_manifest(path, records);
  const auto back = load_manifest(path);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].id == records[i].id);
    CHECK(back[i].label == records[i].label);
    CHECK(back[i].text == records[i].text);
    CHECK(back[i].wav_path == records[i].wav_path);
    CHECK(back[i].mel_path == records[i].mel_path);
    CHECK(back[i].split == records[i].split);
  }

  // Serialize-parse-serialize is a fixed point.
  const std::string again = dir.file("m2.jsonl");
  save_manifest(again, back);
  CHECK(testsupport::read_file(path) == testsupport::read_file(again));
}

TEST_CASE("manifests reject duplicate ids and bad splits") {
  testsupport::TempDir dir("manifest_bad");
  const std::string path = dir.file("m.jsonl");
  {
    std::ofstream f(path);
    f << R"({"id":"a","label":"x","text":"t","split":"train"})" << "\n";
    f << R"({"id":"a","label":"x","text":"t","split":"valid"})" << "\n";
  }
  CHECK_THROWS_AS(load_manifest(path), DataError);
  {
    std::ofstream f(path);
    f << R"({"id":"a","label":"x","text":"t","split":"nope"})" << "\n";
  }
  CHECK_THROWS_AS(load_manifest(path), DataError);
}

TEST_CASE("run configs round-trip through the key=value format") {
  testsupport::TempDir dir("runcfg");
  RunConfig cfg = synth_run_config(dir.str(), dir.file("out"));
  const std::string path = dir.file("run.cfg");
  save_run_config(path, cfg);
  RunConfig back = load_run_config(path);
  CHECK(back.model.variant == cfg.model.variant);
  CHECK(back.model.hidden == cfg.model.hidden);
  CHECK(back.classes == cfg.classes);
  CHECK(back.train.lr == cfg.train.lr);
  CHECK(back.train.seed == cfg.train.seed);
  CHECK(back.mel.hop == cfg.mel.hop);
}

TEST_CASE("unknown config keys and invalid values are config errors") {
  testsupport::TempDir dir("runcfg_bad");
  const std::string path = dir.file("run.cfg");
  {
    std::ofstream f(path);
    f << "variant = NT\nclasses = a,b\nmanifest = m\nout_dir = o\n";
    f << "made_up_key = 3\n";
  }
  CHECK_THROWS_AS(load_run_config(path), ConfigError);
  {
    std::ofstream f(path);
    f << "variant = NT\nclasses = a,b\nmanifest = m\nout_dir = o\n";
    f << "hidden = twelve\n";
  }
  CHECK_THROWS_AS(load_run_config(path), ConfigError);
}

TEST_CASE("the out_dir environment override re-roots outputs") {
  testsupport::TempDir dir("envroot");
  RunConfig cfg = synth_run_config(dir.str(), "rel/out");
  const std::string path = dir.file("run.cfg");
  save_run_config(path, cfg);
  setenv("MODFUSE_OUT_ROOT", dir.str().c_str(), 1);
  RunConfig back = load_run_config(path);
  unsetenv("MODFUSE_OUT_ROOT");
  CHECK(back.out_dir == (fs::path(dir.str()) / "rel/out").string());
}

TEST_CASE("gen_synth is deterministic and class-balanced") {
  testsupport::TempDir dir_a("synth_a");
  testsupport::TempDir dir_b("synth_b");
  SynthConfig cfg;
  cfg.n_train = 40;
  cfg.n_valid = 20;
  cfg.n_test = 0;
  cfg.seed = 7;
  cfg.out_dir = dir_a.str();
  const auto a = gen_synth(cfg);
  cfg.out_dir = dir_b.str();
  const auto b = gen_synth(cfg);

  REQUIRE(a.size() == b.size());
  std::map<std::string, int> histogram;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].text == b[i].text);
    CHECK(a[i].label == b[i].label);
    CHECK(testsupport::read_file(a[i].mel_path) ==
          testsupport::read_file(b[i].mel_path));
    if (a[i].split == "train") ++histogram[a[i].label];
  }
  for (const auto& [label, count] : histogram) CHECK(count == 10);
  CHECK_THROWS_AS(gen_synth(SynthConfig{2, 2, 2, 1, dir_a.str()}),
                  ConfigError);
}

TEST_CASE("no single modality solves the synthetic task") {
  testsupport::TempDir dir("synth_probe");
  SynthConfig cfg;
  cfg.n_train = 200;
  cfg.n_valid = 100;
  cfg.n_test = 0;
  cfg.seed = 7;
  cfg.out_dir = dir.str();
  const auto records = gen_synth(cfg);
  const auto probes = testsupport::run_probes(records, synth_classes());
  CHECK(probes.text_acc <= 0.65);
  CHECK(probes.audio_acc <= 0.65);
}

TEST_CASE("extraction caches by content and config fingerprint") {
  testsupport::TempDir dir("extract");
  MelConfig mel;
  std::vector<double> tone;
  for (int i = 0; i < 6000; ++i)
    tone.push_back(0.3 * std::sin(2.0 * 3.14159265358979 * 440.0 * i / 22050));
  const std::string wav_a = dir.file("a.wav");
  const std::string wav_b = dir.file("b.wav");
  testsupport::write_wav_pcm16(wav_a, tone, 22050);
  testsupport::write_wav_pcm16(wav_b, tone, 22050);

  std::vector<ManifestRecord> records(2);
  records[0] = {"a", "x", "text a", wav_a, "", "train"};
  records[1] = {"b", "x", "text b", wav_b, "", "train"};

  const std::string mel_dir = dir.file("mel");
  ExtractStats first = extract_features(records, mel, mel_dir);
  CHECK(first.extracted == 2);
  CHECK(first.skipped == 0);
  CHECK(first.failures.empty());
  CHECK(fs::exists(records[0].mel_path));

  ExtractStats second = extract_features(records, mel, mel_dir);
  CHECK(second.extracted == 0);
  CHECK(second.skipped == 2);

  // A config change invalidates every cache entry.
  MelConfig faster = mel;
  faster.hop = 512;
  ExtractStats third = extract_features(records, faster, mel_dir);
  CHECK(third.extracted == 2);
  CHECK(third.skipped == 0);
}

TEST_CASE("corrupt audio lands in the failure report, run continues") {
  testsupport::TempDir dir("extract_bad");
  MelConfig mel;
  std::vector<double> tone(6000, 0.1);
  const std::string good_wav = dir.file("good.wav");
  testsupport::write_wav_pcm16(good_wav, tone, 22050);
  const std::string bad_wav = dir.file("bad.wav");
  {
    std::ofstream f(bad_wav, std::ios::binary);
    f << "definitely not RIFF";
  }
  std::vector<ManifestRecord> records(3);
  records[0] = {"good", "x", "t", good_wav, "", "train"};
  records[1] = {"bad", "x", "t", bad_wav, "", "train"};
  records[2] = {"empty", "x", "t", "", "", "train"};

  ExtractStats stats = extract_features(records, mel, dir.file("mel"));
  CHECK(stats.extracted == 1);
  REQUIRE(stats.failures.size() == 2);
  CHECK(stats.failures[0].first == "bad");
  CHECK(stats.failures[1].first == "empty");
  CHECK(!records[0].mel_path.empty());
  CHECK(records[1].mel_path.empty());
}

TEST_CASE("a memorizing run scores a perfect train report") {
  testsupport::TempDir dir("memorize");
  SynthConfig synth;
  synth.n_train = 8;
  synth.n_valid = 0;
  synth.n_test = 0;
  synth.seed = 3;
  synth.out_dir = dir.str();
  std::vector<ManifestRecord> records = gen_synth(synth);

  // Validation mirrors the train content (fresh ids), so the best-model
  // snapshot tracks memorization of the train split itself.
  const std::size_t n = records.size();
  for (std::size_t i = 0; i < n; ++i) {
    ManifestRecord copy = records[i];
    copy.id += "-v";
    copy.split = "valid";
    records.push_back(std::move(copy));
  }
  save_manifest((fs::path(dir.str()) / "manifest.jsonl").string(), records);

  RunConfig cfg = synth_run_config(dir.str(), dir.file("run"));
  cfg.train.max_epochs = 300;
  cfg.train.lr = 5e-3;
  cfg.validate();
  RunTrainOutput train_out = run_train(cfg);
  CHECK(fs::exists(train_out.checkpoint_path));
  CHECK(fs::exists(train_out.history_path));
  CHECK(fs::exists(train_out.vocab_path));

  RunEvalOutput eval_out =
      run_eval(cfg, {train_out.checkpoint_path}, "train");
  CHECK(eval_out.report.accuracy == 1.0);
  CHECK(fs::exists(eval_out.report_json_path));
  CHECK(fs::exists(eval_out.confusion_csv_path));

  // Class-list mismatch between checkpoint and run config is an error.
  RunConfig other = cfg;
  other.classes = {"w", "x", "y", "z"};
  CHECK_THROWS_AS(run_eval(other, {train_out.checkpoint_path}, "train"),
                  DataError);

  // The ensemble bound is enforced.
  RunConfig capped = cfg;
  capped.ensemble_size = 1;
  CHECK_THROWS_AS(
      run_eval(capped,
               {train_out.checkpoint_path, train_out.checkpoint_path},
               "train"),
      ConfigError);

  const auto predictions = run_predict(cfg, {train_out.checkpoint_path},
                                       "train");
  CHECK(predictions.size() == 8);
  for (const auto& p : predictions) {
    CHECK(p.probs.size() == 4);
    double sum = 0.0;
    for (double v : p.probs) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("cli: params reports identical counts for NT and MAT") {
  testsupport::TempDir dir("cli_params");
  const std::string nt_out = dir.file("nt.txt");
  const std::string mat_out = dir.file("mat.txt");
  const std::string shared =
      "--blocks 2 --hidden 64 --heads 8 --mlp-hidden 128 --vocab-size 50 "
      "--classes 4";
  REQUIRE(run_cli("params --variant NT " + shared, nt_out) == 0);
  REQUIRE(run_cli("params --variant MAT " + shared, mat_out) == 0);

  auto total_of = [](const std::string& path) {
    const std::string text = testsupport::read_file(path);
    const std::string needle = "total trainable parameters: ";
    const auto pos = text.find(needle);
    REQUIRE(pos != std::string::npos);
    return std::stoll(text.substr(pos + needle.size()));
  };
  CHECK(total_of(nt_out) == total_of(mat_out));
}

TEST_CASE("cli: gradcheck verifies every gradient and exits clean") {
  testsupport::TempDir dir("cli_gc");
  REQUIRE(run_cli("gradcheck", dir.file("gc.txt")) == 0);
  const std::string out = testsupport::read_file(dir.file("gc.txt"));
  CHECK(out.find("FAILED") == std::string::npos);
  CHECK(out.find("model/MNT") != std::string::npos);
}

TEST_CASE("cli: usage and config problems exit with code 1") {
  testsupport::TempDir dir("cli_err");
  CHECK(run_cli("definitely-not-a-subcommand", dir.file("o1")) == 1);
  CHECK(run_cli("train --config /nonexistent/run.cfg", dir.file("o2")) == 1);
}

TEST_CASE("cli: missing data exits with code 2") {
  testsupport::TempDir dir("cli_data");
  RunConfig cfg = synth_run_config(dir.str(), dir.file("run"));
  cfg.manifest_path = dir.file("missing.jsonl");
  const std::string path = dir.file("run.cfg");
  save_run_config(path, cfg);
  CHECK(run_cli("train --config " + path, dir.file("out.txt")) == 2);
}

TEST_CASE("cli: gen-synth, train, eval and predict chain together") {
  testsupport::TempDir dir("cli_chain");
  REQUIRE(run_cli("gen-synth --out " + dir.str() +
                      " --train 16 --valid 8 --test 8 --seed 5",
                  dir.file("gen.txt")) == 0);
  CHECK(fs::exists(dir.file("manifest.jsonl")));
  CHECK(fs::exists(dir.file("run.cfg")));

  // The generated config is ready to run as written.
  CHECK(run_cli("train --config " + dir.file("run.cfg") +
                    " --set max_epochs=1",
                dir.file("train0.txt")) == 0);

  // A faster config than the generated default: plumbing, not learning.
  RunConfig cfg = synth_run_config(dir.str(), dir.file("run"));
  cfg.train.max_epochs = 3;
  const std::string cfg_path = dir.file("quick.cfg");
  save_run_config(cfg_path, cfg);

  // Any config field can be overridden from the command line.
  CHECK(run_cli("train --config " + cfg_path + " --set not_a_key=1",
                dir.file("bad_set.txt")) == 1);

  REQUIRE(run_cli("train --config " + cfg_path + " --set max_epochs=2",
                  dir.file("train.txt")) == 0);
  const std::string ckpt = dir.file("run/model.ckpt");
  REQUIRE(fs::exists(ckpt));
  CHECK(run_cli("eval --config " + cfg_path + " --checkpoints " + ckpt +
                    " --split valid",
                dir.file("eval.txt")) == 0);
  CHECK(run_cli("predict --config " + cfg_path + " --checkpoints " + ckpt +
                    " --split test --out " + dir.file("pred.jsonl"),
                dir.file("predict.txt")) == 0);
  CHECK(fs::exists(dir.file("run/report_valid.json")));
  CHECK(fs::exists(dir.file("pred.jsonl")));

  // Seed override trains a distinguishable second member.
  CHECK(run_cli("train --config " + cfg_path + " --seed 99",
                dir.file("train2.txt")) == 0);
}

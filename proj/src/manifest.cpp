// modfuse/manifest.cpp

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

#include "modfuse/manifest.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "modfuse/error.hpp"

namespace modfuse {

namespace {

namespace fs = std::filesystem;

bool valid_split(const std::string& s) {
  return s == "train" || s == "valid" || s == "test";
}

}  // namespace

std::vector<ManifestRecord> load_manifest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("manifest: cannot read " + path);
  std::vector<ManifestRecord> out;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw DataError("manifest: " + path + " line " +
                      std::to_string(line_no) + ": " + e.what());
    }
    ManifestRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.label = j.at("label").get<std::string>();
      r.text = j.at("text").get<std::string>();
      r.split = j.at("split").get<std::string>();
      if (j.contains("wav_path")) r.wav_path = j["wav_path"].get<std::string>();
      if (j.contains("mel_path")) r.mel_path = j["mel_path"].get<std::string>();
    } catch (const std::exception& e) {
      throw DataError("manifest: " + path + " line " +
                      std::to_string(line_no) + ": " + e.what());
    }
    if (!valid_split(r.split))
      throw DataError("manifest: " + path + " line " +
                      std::to_string(line_no) + ": bad split '" + r.split +
                      "'");
    if (!seen_ids.insert(r.id).second)
      throw DataError("manifest: duplicate id '" + r.id + "' in " + path);
    out.push_back(std::move(r));
  }
  return out;
}

void save_manifest(const std::string& path,
                   const std::vector<ManifestRecord>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("manifest: cannot write " + path);
  for (const ManifestRecord& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["label"] = r.label;
    j["text"] = r.text;
    if (!r.wav_path.empty()) j["wav_path"] = r.wav_path;
    if (!r.mel_path.empty()) j["mel_path"] = r.mel_path;
    j["split"] = r.split;
    f << j.dump() << "\n";
  }
}

// ---- run config ---------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string cell;
  while (std::getline(is, cell, ',')) {
    cell = trim(cell);
    if (!cell.empty()) out.push_back(cell);
  }
  return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: key '" + key + "' expects true/false, got '" + v +
                    "'");
}

int parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const int x = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" +
                      v + "'");
  }
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v +
                      "'");
  }
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<std::uint64_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" +
                      v + "'");
  }
}

}  // namespace

void RunConfig::validate() const {
  ModelConfig check = model;
  check.finalize();
  mel.validate();
  if (classes.size() < 2)
    throw ConfigError("config: need at least 2 classes");
  std::unordered_set<std::string> uniq(classes.begin(), classes.end());
  if (uniq.size() != classes.size())
    throw ConfigError("config: duplicate class names");
  if (static_cast<int>(classes.size()) != model.num_classes)
    throw ConfigError("config: num_classes " +
                      std::to_string(model.num_classes) +
                      " does not match the class list (" +
                      std::to_string(classes.size()) + " entries)");
  if (manifest_path.empty()) throw ConfigError("config: manifest is required");
  if (out_dir.empty()) throw ConfigError("config: out_dir is required");
  if (ensemble_size < 1 || ensemble_size > 10)
    throw ConfigError("config: ensemble_size must lie in [1,10]");
  if (train.max_epochs < 0)
    throw ConfigError("config: max_epochs must be >= 0");
  if (train.lr <= 0.0) throw ConfigError("config: lr must be positive");
  if (train.batch_size < 1)
    throw ConfigError("config: batch_size must be >= 1");
  if (train.schedule.max_decays < 0 || train.schedule.patience < 1)
    throw ConfigError("config: bad schedule constants");
  if (train.schedule.decay_factor <= 0.0 || train.schedule.decay_factor >= 1.0)
    throw ConfigError("config: decay_factor must lie in (0,1)");
}

void apply_run_config_entry(RunConfig& cfg, const std::string& key,
                            const std::string& value) {
  if (key == "variant") cfg.model.variant = parse_variant(value);
  else if (key == "blocks") cfg.model.blocks = parse_int(value, key);
  else if (key == "hidden") cfg.model.hidden = parse_int(value, key);
  else if (key == "heads") cfg.model.heads = parse_int(value, key);
  else if (key == "mlp_hidden") cfg.model.mlp_hidden = parse_int(value, key);
  else if (key == "dropout_block") cfg.model.dropout_block = parse_double(value, key);
  else if (key == "dropout_proj") cfg.model.dropout_proj = parse_double(value, key);
  else if (key == "film_per_channel") cfg.model.film_per_channel = parse_bool(value, key);
  else if (key == "mat_modulate_raw") cfg.model.mat_modulate_raw = parse_bool(value, key);
  else if (key == "attention_scale_full_dim") cfg.model.attention_scale_full_dim = parse_bool(value, key);
  else if (key == "positional_encoding") cfg.model.positional_encoding = parse_bool(value, key);
  else if (key == "temporal_layer_norm") cfg.model.temporal_layer_norm = parse_bool(value, key);
  else if (key == "train_embeddings") cfg.model.train_embeddings = parse_bool(value, key);
  else if (key == "classes") cfg.classes = split_csv(value);
  else if (key == "manifest") cfg.manifest_path = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "glove_path") cfg.glove_path = value;
  else if (key == "seed") cfg.train.seed = parse_u64(value, key);
  else if (key == "lr") cfg.train.lr = parse_double(value, key);
  else if (key == "batch_size") cfg.train.batch_size = parse_int(value, key);
  else if (key == "max_epochs") cfg.train.max_epochs = parse_int(value, key);
  else if (key == "decay_factor") cfg.train.schedule.decay_factor = parse_double(value, key);
  else if (key == "max_decays") cfg.train.schedule.max_decays = parse_int(value, key);
  else if (key == "early_stop_patience") cfg.train.schedule.patience = parse_int(value, key);
  else if (key == "grad_clip_norm") cfg.train.grad_clip_norm = parse_double(value, key);
  else if (key == "ensemble_size") cfg.ensemble_size = parse_int(value, key);
  else if (key == "sample_rate") cfg.mel.sample_rate = parse_int(value, key);
  else if (key == "n_fft") cfg.mel.n_fft = parse_int(value, key);
  else if (key == "hop") cfg.mel.hop = parse_int(value, key);
  else if (key == "win") cfg.mel.win = parse_int(value, key);
  else if (key == "preemphasis") cfg.mel.preemphasis = parse_double(value, key);
  else if (key == "n_mels") cfg.mel.n_mels = parse_int(value, key);
  else if (key == "reduction") cfg.mel.reduction = parse_int(value, key);
  else if (key == "db_floor") cfg.mel.db_floor = parse_double(value, key);
  else if (key == "db_range") cfg.mel.db_range = parse_double(value, key);
  else
    throw ConfigError("config: unknown key '" + key + "'");
}

void finalize_run_config(RunConfig& cfg) {
  cfg.model.num_classes = static_cast<int>(cfg.classes.size());

  // Output root override: the one environment knob.
  if (const char* root = std::getenv("MODFUSE_OUT_ROOT");
      root && *root && !cfg.out_dir.empty())
    cfg.out_dir = (fs::path(root) / cfg.out_dir).string();

  cfg.validate();
}

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("config: cannot read " + path);
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: " + path + " line " +
                        std::to_string(line_no) + ": expected key = value");
    try {
      apply_run_config_entry(cfg, trim(line.substr(0, eq)),
                             trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config: " + path + " line " +
                        std::to_string(line_no) + ": " + e.what());
    }
  }
  for (const std::string& entry : overrides) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: override '" + entry +
                        "': expected key=value");
    apply_run_config_entry(cfg, trim(entry.substr(0, eq)),
                           trim(entry.substr(eq + 1)));
  }
  finalize_run_config(cfg);
  return cfg;
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("config: cannot write " + path);
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  f << "# model\n";
  f << "variant = " << variant_name(cfg.model.variant) << "\n";
  f << "blocks = " << cfg.model.blocks << "\n";
  f << "hidden = " << cfg.model.hidden << "\n";
  f << "heads = " << cfg.model.heads << "\n";
  f << "mlp_hidden = " << cfg.model.mlp_hidden << "\n";
  f << "dropout_block = " << num(cfg.model.dropout_block) << "\n";
  f << "dropout_proj = " << num(cfg.model.dropout_proj) << "\n";
  f << "film_per_channel = " << (cfg.model.film_per_channel ? "true" : "false") << "\n";
  f << "train_embeddings = " << (cfg.model.train_embeddings ? "true" : "false") << "\n";
  f << "# data\n";
  std::string cls;
  for (const std::string& c : cfg.classes) {
    if (!cls.empty()) cls += ",";
    cls += c;
  }
  f << "classes = " << cls << "\n";
  f << "manifest = " << cfg.manifest_path << "\n";
  f << "out_dir = " << cfg.out_dir << "\n";
  if (!cfg.glove_path.empty()) f << "glove_path = " << cfg.glove_path << "\n";
  f << "# training\n";
  f << "seed = " << cfg.train.seed << "\n";
  f << "lr = " << num(cfg.train.lr) << "\n";
  f << "batch_size = " << cfg.train.batch_size << "\n";
  f << "max_epochs = " << cfg.train.max_epochs << "\n";
  f << "decay_factor = " << num(cfg.train.schedule.decay_factor) << "\n";
  f << "max_decays = " << cfg.train.schedule.max_decays << "\n";
  f << "early_stop_patience = " << cfg.train.schedule.patience << "\n";
  f << "grad_clip_norm = " << num(cfg.train.grad_clip_norm) << "\n";
  f << "ensemble_size = " << cfg.ensemble_size << "\n";
  f << "# mel\n";
  f << "sample_rate = " << cfg.mel.sample_rate << "\n";
  f << "n_fft = " << cfg.mel.n_fft << "\n";
  f << "hop = " << cfg.mel.hop << "\n";
  f << "win = " << cfg.mel.win << "\n";
  f << "preemphasis = " << num(cfg.mel.preemphasis) << "\n";
  f << "n_mels = " << cfg.mel.n_mels << "\n";
  f << "reduction = " << cfg.mel.reduction << "\n";
  f << "db_floor = " << num(cfg.mel.db_floor) << "\n";
  f << "db_range = " << num(cfg.mel.db_range) << "\n";
}

// ---- dataset ------------------------------------------------------------

std::vector<std::string> train_sentences(
    const std::vector<ManifestRecord>& records) {
  std::vector<std::string> out;
  for (const ManifestRecord& r : records)
    if (r.split == "train") out.push_back(r.text);
  return out;
}

Dataset load_dataset(const std::vector<ManifestRecord>& records,
                     const std::vector<std::string>& classes,
                     const Vocabulary& vocab) {
  std::unordered_map<std::string, int> class_of;
  for (std::size_t i = 0; i < classes.size(); ++i)
    class_of.emplace(classes[i], static_cast<int>(i));

  Dataset ds;
  ds.num_classes = static_cast<int>(classes.size());
  for (const ManifestRecord& r : records) {
    auto it = class_of.find(r.label);
    if (it == class_of.end())
      throw DataError("dataset: record '" + r.id + "' has label '" + r.label +
                      "' outside the configured class list");
    if (r.mel_path.empty())
      throw DataError("dataset: record '" + r.id +
                      "' has no mel features; run extraction first");
    Sample s;
    s.id = r.id;
    s.tokens = vocab.encode(tokenize(r.text));
    s.mel = read_mel_csv(r.mel_path);
    s.label = it->second;
    if (r.split == "train") ds.train.push_back(std::move(s));
    else if (r.split == "valid") ds.valid.push_back(std::move(s));
    else ds.test.push_back(std::move(s));
  }
  return ds;
}

// ---- extraction -----------------------------------------------------------

namespace {

std::uint64_t fnv1a64(const std::string& bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string file_fingerprint(const std::string& wav_path,
                             const MelConfig& cfg) {
  std::ifstream f(wav_path, std::ios::binary);
  if (!f) throw DataError("extract: cannot read " + wav_path);
  const std::string bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());
  std::uint64_t h = fnv1a64(cfg.fingerprint(), 14695981039346656037ULL);
  h = fnv1a64(bytes, h);
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string read_text_if_exists(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return "";
  std::string s((std::istreambuf_iterator<char>(f)),
                std::istreambuf_iterator<char>());
  return s;
}

}  // namespace

namespace {

enum class ExtractOutcome { kUntouched, kExtracted, kSkipped, kFailed };

struct ExtractResult {
  ExtractOutcome outcome = ExtractOutcome::kUntouched;
  std::string mel_path;
  std::string reason;
};

ExtractResult extract_one(const ManifestRecord& r, const MelConfig& cfg,
                          const std::string& mel_dir) {
  ExtractResult result;
  if (r.wav_path.empty()) {
    if (r.mel_path.empty()) {
      result.outcome = ExtractOutcome::kFailed;
      result.reason = "no wav_path and no mel_path";
    }
    return result;
  }
  try {
    const std::string mel_path = (fs::path(mel_dir) / (r.id + ".csv")).string();
    const std::string hash_path = mel_path + ".hash";
    const std::string fingerprint = file_fingerprint(r.wav_path, cfg);
    if (fs::exists(mel_path) && read_text_if_exists(hash_path) == fingerprint) {
      result.outcome = ExtractOutcome::kSkipped;
      result.mel_path = mel_path;
      return result;
    }
    const Waveform w = read_wav(r.wav_path);
    const Tensor mel = extract_mel(w, cfg);
    write_mel_csv(mel_path, mel);
    std::ofstream hf(hash_path, std::ios::binary);
    if (!hf) throw DataError("extract: cannot write " + hash_path);
    hf << fingerprint;
    result.outcome = ExtractOutcome::kExtracted;
    result.mel_path = mel_path;
  } catch (const Error& e) {
    result.outcome = ExtractOutcome::kFailed;
    result.reason = e.what();
  }
  return result;
}

}  // namespace

ExtractStats extract_features(std::vector<ManifestRecord>& records,
                              const MelConfig& cfg,
                              const std::string& mel_dir) {
  cfg.validate();
  fs::create_directories(mel_dir);

  // Files are independent, so extraction fans out across a small worker
  // pool; results aggregate in record order to keep the stats and manifest
  // deterministic.
  std::vector<ExtractResult> results(records.size());
  const unsigned hw = std::thread::hardware_concurrency();
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(hw ? hw : 1,
                                                     records.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < records.size();
         i = next.fetch_add(1))
      results[i] = extract_one(records[i], cfg, mel_dir);
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  ExtractStats stats;
  for (std::size_t i = 0; i < records.size(); ++i) {
    switch (results[i].outcome) {
      case ExtractOutcome::kUntouched:
        break;
      case ExtractOutcome::kExtracted:
        records[i].mel_path = results[i].mel_path;
        ++stats.extracted;
        break;
      case ExtractOutcome::kSkipped:
        records[i].mel_path = results[i].mel_path;
        ++stats.skipped;
        break;
      case ExtractOutcome::kFailed:
        stats.failures.emplace_back(records[i].id, results[i].reason);
        break;
    }
  }
  return stats;
}

}  // namespace modfuse
